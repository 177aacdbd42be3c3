#pragma once

#include <cstdint>
#include <vector>

#include "sscl/audio.hpp"

namespace sscl {

inline constexpr std::size_t kMelBands = 128;
inline constexpr std::size_t kPatchFrames = 150;   // 150 frames x 10 ms = 1.5 s
inline constexpr double kFrameStrideSec = 0.010;
inline constexpr double kWindowLenSec = 0.025;
inline constexpr double kLogFloor = 1e-10;

// Triangular Mel filterbank with centers uniformly spaced on the Mel scale.
struct MelFilterbank {
    std::vector<double> weights;  // n_mels x (n_fft/2 + 1), row-major
    std::size_t n_mels = 0;
    std::size_t n_fft = 0;
    std::uint32_t sample_rate = 0;
    double fmin = 0.0;
    double fmax = 0.0;

    std::size_t bins() const { return n_fft / 2 + 1; }
    double weight(std::size_t mel, std::size_t bin) const { return weights[mel * bins() + bin]; }

    // Center frequency (Hz) of a filter row.
    double center_hz(std::size_t mel) const;
};

// Log-Mel energies, natural log of filterbank power with a 1e-10 floor.
struct MelSpectrogram {
    std::vector<double> values;  // n_mels x frames, row-major
    std::size_t n_mels = 0;
    std::size_t frames = 0;
    double frame_stride = kFrameStrideSec;
    double window_len = kWindowLenSec;
    double segment_duration = 0.0;

    double at(std::size_t mel, std::size_t frame) const { return values[mel * frames + frame]; }
};

struct MelPatch {
    std::vector<double> values;  // n_mels x kPatchFrames, row-major
    std::size_t start_frame = 0;
    bool padded = false;  // parent was shorter than one patch

    double at(std::size_t mel, std::size_t frame) const { return values[mel * kPatchFrames + frame]; }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

MelFilterbank build_filterbank(std::uint32_t sample_rate, std::size_t n_fft, std::size_t n_mels,
                               double fmin, double fmax);

// 25 ms Hamming window, 10 ms stride, power spectrum zero-padded to n_fft.
MelSpectrogram mel_spectrogram(const AudioClip& segment, const MelFilterbank& fb);

// Uniform random patch starts in [0, F - 150], with replacement.  A segment
// shorter than one patch is right-padded by repeating its final frame and
// yields exactly one (flagged) patch.
std::vector<MelPatch> sample_patches(const MelSpectrogram& spec, std::size_t n_patches,
                                     std::uint64_t rng_seed);

} // namespace sscl
