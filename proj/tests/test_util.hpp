#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "sscl/audio.hpp"
#include "sscl/autodiff.hpp"
#include "sscl/rng.hpp"

namespace sscl::testutil {

// Scratch directory under the system temp root, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("sscl-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter_++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::string str(const std::string& rel = "") const { return (rel.empty() ? path_ : path_ / rel).string(); }

private:
    static inline int counter_ = 0;
    std::filesystem::path path_;
};

inline AudioClip make_tone(double freq_hz, double duration_s, std::uint32_t sr, double amplitude = 0.5,
                           double noise = 0.0, std::uint64_t seed = 1) {
    AudioClip clip;
    clip.sample_rate = sr;
    clip.source_id = "tone-" + std::to_string(static_cast<int>(freq_hz));
    const auto n = static_cast<std::size_t>(std::llround(duration_s * sr));
    clip.samples.resize(n);
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        double v = amplitude * std::sin(2.0 * 3.14159265358979323846 * freq_hz * i / sr);
        if (noise > 0.0) v += noise * amplitude * rng.normal();
        clip.samples[i] = v;
    }
    return clip;
}

// Synthetic tone dataset on disk: one directory per class, sine frequency
// per class plus noise.
inline DatasetManifest write_tone_dataset(const std::filesystem::path& root,
                                          const std::vector<double>& class_freqs,
                                          const std::vector<std::size_t>& clips_per_class,
                                          double duration_s, std::uint64_t seed, double noise = 0.1) {
    for (std::size_t c = 0; c < class_freqs.size(); ++c) {
        const auto dir = root / ("class" + std::to_string(c));
        std::filesystem::create_directories(dir);
        for (std::size_t i = 0; i < clips_per_class[c]; ++i) {
            AudioClip clip = make_tone(class_freqs[c], duration_s, kDefaultSampleRate, 0.5, noise,
                                       derive_seed(seed, "clip", c * 10000 + i));
            write_wav((dir / ("clip" + std::to_string(i) + ".wav")).string(), clip);
        }
    }
    return load_manifest(root.string(), ManifestFormat::flat_dirs);
}

// Dominant DFT bin of a clip (naive DFT over the given bin range).
inline std::size_t dft_peak_bin(const std::vector<double>& samples, std::size_t max_bin) {
    const std::size_t n = samples.size();
    std::size_t best = 0;
    double best_mag = -1.0;
    for (std::size_t k = 1; k < max_bin; ++k) {
        double re = 0.0, im = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double a = -2.0 * 3.14159265358979323846 * k * i / n;
            re += samples[i] * std::cos(a);
            im += samples[i] * std::sin(a);
        }
        const double mag = re * re + im * im;
        if (mag > best_mag) {
            best_mag = mag;
            best = k;
        }
    }
    return best;
}

inline double dft_bin_freq(std::size_t bin, std::size_t n, std::uint32_t sr) {
    return static_cast<double>(bin) * sr / static_cast<double>(n);
}

// Central finite differences of a scalar-valued function of the given
// parameters against the gradients left by its backward pass.  Returns the
// worst relative error over all checked elements.
inline double gradient_check(std::vector<ad::Parameter*> params,
                             const std::function<double()>& forward_loss,
                             const std::function<void()>& backward_into_params, double h = 1e-4,
                             std::size_t max_per_param = 0) {
    backward_into_params();
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto* p : params) analytic.push_back(p->grad.data);

    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        ad::Parameter* p = params[pi];
        const std::size_t n = p->value.data.size();
        const std::size_t stride = (max_per_param > 0 && n > max_per_param) ? n / max_per_param : 1;
        for (std::size_t i = 0; i < n; i += stride) {
            const double saved = p->value.data[i];
            p->value.data[i] = saved + h;
            const double up = forward_loss();
            p->value.data[i] = saved - h;
            const double down = forward_loss();
            p->value.data[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double exact = analytic[pi][i];
            const double denom = std::max({std::abs(numeric), std::abs(exact), 1e-6});
            worst = std::max(worst, std::abs(numeric - exact) / denom);
        }
    }
    return worst;
}

} // namespace sscl::testutil
