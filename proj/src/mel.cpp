#include "sscl/mel.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include "sscl/errors.hpp"
#include "sscl/rng.hpp"

namespace sscl {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 FFT, in place.  n must be a power of two.
void fft(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * kPi / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

} // namespace

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

double MelFilterbank::center_hz(std::size_t mel) const {
    const double lo = hz_to_mel(fmin);
    const double hi = hz_to_mel(fmax);
    const double step = (hi - lo) / static_cast<double>(n_mels + 1);
    return mel_to_hz(lo + step * static_cast<double>(mel + 1));
}

MelFilterbank build_filterbank(std::uint32_t sample_rate, std::size_t n_fft, std::size_t n_mels,
                               double fmin, double fmax) {
    const double nyquist = sample_rate / 2.0;
    if (fmin < 0.0) throw ParameterError("fmin must be >= 0");
    if (fmax <= fmin) throw ParameterError("fmax must be > fmin");
    if (fmax > nyquist + 1e-9) throw ParameterError("fmax must be <= sample_rate/2");
    if (n_mels < 1) throw ParameterError("n_mels must be >= 1");
    if (!is_power_of_two(n_fft)) throw ParameterError("n_fft must be a power of two");

    MelFilterbank fb;
    fb.n_mels = n_mels;
    fb.n_fft = n_fft;
    fb.sample_rate = sample_rate;
    fb.fmin = fmin;
    fb.fmax = fmax;

    const std::size_t bins = n_fft / 2 + 1;
    fb.weights.assign(n_mels * bins, 0.0);

    // n_mels + 2 edge points uniform in Mel units.
    const double mel_lo = hz_to_mel(fmin);
    const double mel_hi = hz_to_mel(fmax);
    std::vector<double> edges(n_mels + 2);
    for (std::size_t i = 0; i < edges.size(); ++i) {
        edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / static_cast<double>(n_mels + 1));
    }

    for (std::size_t m = 0; m < n_mels; ++m) {
        const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
        bool any_positive = false;
        for (std::size_t k = 0; k < bins; ++k) {
            const double f = static_cast<double>(k) * sample_rate / static_cast<double>(n_fft);
            double w = 0.0;
            if (f > left && f < center) {
                w = (f - left) / (center - left);
            } else if (f >= center && f < right) {
                w = (right - f) / (right - center);
            }
            if (w > 0.0) any_positive = true;
            fb.weights[m * bins + k] = w;
        }
        if (!any_positive) {
            // Narrow filter fell between FFT bins; give it the nearest bin so
            // every row stays non-trivial.
            const auto k = static_cast<std::size_t>(std::llround(center * n_fft / sample_rate));
            fb.weights[m * bins + std::min(k, bins - 1)] = 1.0;
        }
    }
    return fb;
}

MelSpectrogram mel_spectrogram(const AudioClip& segment, const MelFilterbank& fb) {
    if (segment.sample_rate != fb.sample_rate) {
        throw ParameterError("segment sample rate " + std::to_string(segment.sample_rate) +
                             " does not match filterbank rate " + std::to_string(fb.sample_rate));
    }
    const std::size_t n = segment.samples.size();
    const std::uint32_t sr = segment.sample_rate;
    const std::size_t win = static_cast<std::size_t>(sr) * 25 / 1000;
    if (n < win) {
        throw DegenerateInputError("segment of " + std::to_string(n) +
                                   " samples is shorter than one " + std::to_string(win) + "-sample window");
    }
    if (win > fb.n_fft) throw ParameterError("n_fft smaller than analysis window");

    // Frame starts in exact integer arithmetic: frame i begins at
    // floor(i * sr / 100) samples (10 ms stride).
    std::vector<std::size_t> starts;
    for (std::size_t i = 0;; ++i) {
        const std::size_t start = i * static_cast<std::size_t>(sr) / 100;
        if (start + win > n) break;
        starts.push_back(start);
    }
    const std::size_t frames = starts.size();

    std::vector<double> hamming(win);
    for (std::size_t i = 0; i < win; ++i) {
        hamming[i] = 0.54 - 0.46 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(win - 1));
    }

    const std::size_t bins = fb.bins();
    MelSpectrogram spec;
    spec.n_mels = fb.n_mels;
    spec.frames = frames;
    spec.segment_duration = static_cast<double>(n) / sr;
    spec.values.assign(fb.n_mels * frames, 0.0);

    std::vector<std::complex<double>> buf(fb.n_fft);
    std::vector<double> power(bins);
    for (std::size_t f = 0; f < frames; ++f) {
        std::fill(buf.begin(), buf.end(), std::complex<double>(0.0, 0.0));
        for (std::size_t i = 0; i < win; ++i) {
            buf[i] = segment.samples[starts[f] + i] * hamming[i];
        }
        fft(buf);
        for (std::size_t k = 0; k < bins; ++k) power[k] = std::norm(buf[k]);
        for (std::size_t m = 0; m < fb.n_mels; ++m) {
            double acc = 0.0;
            const double* row = fb.weights.data() + m * bins;
            for (std::size_t k = 0; k < bins; ++k) acc += row[k] * power[k];
            spec.values[m * frames + f] = std::log(acc + kLogFloor);
        }
    }
    return spec;
}

std::vector<MelPatch> sample_patches(const MelSpectrogram& spec, std::size_t n_patches,
                                     std::uint64_t rng_seed) {
    const std::size_t n_mels = spec.n_mels;
    std::vector<MelPatch> patches;

    if (spec.frames < kPatchFrames) {
        // Right-pad by repeating the final frame; exactly one flagged patch.
        MelPatch p;
        p.start_frame = 0;
        p.padded = true;
        p.values.resize(n_mels * kPatchFrames);
        for (std::size_t m = 0; m < n_mels; ++m) {
            for (std::size_t f = 0; f < kPatchFrames; ++f) {
                const std::size_t src = std::min(f, spec.frames - 1);
                p.values[m * kPatchFrames + f] = spec.at(m, src);
            }
        }
        patches.push_back(std::move(p));
        return patches;
    }

    Rng rng(rng_seed);
    const std::size_t max_start = spec.frames - kPatchFrames;
    for (std::size_t i = 0; i < n_patches; ++i) {
        MelPatch p;
        p.start_frame = static_cast<std::size_t>(rng.below(max_start + 1));
        p.values.resize(n_mels * kPatchFrames);
        for (std::size_t m = 0; m < n_mels; ++m) {
            for (std::size_t f = 0; f < kPatchFrames; ++f) {
                p.values[m * kPatchFrames + f] = spec.at(m, p.start_frame + f);
            }
        }
        patches.push_back(std::move(p));
    }
    return patches;
}

} // namespace sscl
