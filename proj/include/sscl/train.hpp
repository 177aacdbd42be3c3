#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sscl/audio.hpp"
#include "sscl/autodiff.hpp"
#include "sscl/encoder.hpp"
#include "sscl/matrixio.hpp"

namespace sscl {

struct TrainConfig {
    std::size_t batch_clips = 64;  // M; the batch holds 2M views
    double temperature = 0.1;
    std::size_t steps = 400;
    double lr = 0.001;
    bool balanced = false;
    std::uint64_t seed = 0;
    std::size_t patches_per_segment = 4;
    std::size_t checkpoint_every = 0;  // 0 = no periodic checkpoints
    std::string checkpoint_dir;

    void validate() const;
};

// Clip indices per training step.
struct BatchPlan {
    std::vector<std::vector<std::size_t>> batches;
    std::size_t per_class_quota = 0;  // balanced mode only
};

double cosine_sim(const std::vector<double>& u, const std::vector<double>& v);

// NT-Xent over views ordered so views[2i], views[2i+1] are siblings.
ad::Tape::Var ntxent_loss(ad::Tape& tape, const std::vector<ad::Tape::Var>& views, double temperature);

// Balanced mode: every batch takes exactly floor(M / num_classes) clips per
// class (minority classes recycled with replacement); the M mod num_classes
// leftover slots go to distinct classes in rotating order.  Unbalanced mode:
// uniform without replacement per epoch, reshuffled between epochs.
BatchPlan plan_batches(const DatasetManifest& manifest, const TrainConfig& config);

// Decodes, caches and resamples clips to the canonical rate.
class ClipStore {
public:
    explicit ClipStore(const DatasetManifest& manifest, std::uint32_t sample_rate = kDefaultSampleRate);

    const AudioClip& clip(std::size_t index) const;
    const DatasetManifest& manifest() const { return *manifest_; }
    std::size_t size() const { return manifest_->entries.size(); }

private:
    const DatasetManifest* manifest_;
    std::uint32_t sample_rate_;
    mutable std::vector<AudioClip> cache_;
    mutable std::vector<bool> loaded_;
};

struct PretrainResult {
    EncoderModel model;
    std::vector<double> loss_history;
};

using StepCallback = std::function<void(std::size_t step, double loss, const EncoderModel&)>;

// Full loop: plan batch, split + normalize (waveform) or mel + patches
// (spectrogram), forward both views of each clip, NT-Xent, backward, Adam.
// Deterministic from config.seed.
PretrainResult pretrain(const ClipStore& store, const EncoderConfig& encoder_config,
                        const TrainConfig& config, const StepCallback& callback = {});

void write_loss_csv(const std::string& path, const std::vector<double>& losses);

// One h row per clip: the representations of the clip's two segments,
// averaged.  Patch selection is seeded per clip for reproducibility.
FeatureMatrix extract_features(const ClipStore& store, EncoderModel& model, std::uint64_t seed,
                               std::size_t patches_per_segment = 4);

} // namespace sscl
