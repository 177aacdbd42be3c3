#include "sscl/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <unordered_map>

#include "sscl/errors.hpp"
#include "sscl/rng.hpp"

namespace sscl {

void TrainConfig::validate() const {
    if (temperature <= 0.0) throw ConfigError("temperature must be positive");
    if (batch_clips < 2) throw ConfigError("batch size must be at least 2 clips");
    if (lr <= 0.0) throw ConfigError("learning rate must be positive");
    if (patches_per_segment < 1) throw ConfigError("patches_per_segment must be at least 1");
}

double cosine_sim(const std::vector<double>& u, const std::vector<double>& v) {
    if (u.size() != v.size()) throw ShapeError("cosine_sim length mismatch");
    double uu = 0.0, vv = 0.0, uv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        uu += u[i] * u[i];
        vv += v[i] * v[i];
        uv += u[i] * v[i];
    }
    if (uu <= 0.0 || vv <= 0.0) throw DegenerateInputError("cosine_sim of a zero vector");
    return uv / (std::sqrt(uu) * std::sqrt(vv));
}

ad::Tape::Var ntxent_loss(ad::Tape& tape, const std::vector<ad::Tape::Var>& views, double temperature) {
    if (views.size() < 4 || views.size() % 2 != 0) {
        throw ShapeError("NT-Xent needs 2M views with M >= 2; got " + std::to_string(views.size()));
    }
    ad::Tape::Var stacked = tape.stack_rows(views);
    ad::Tape::Var normalized;
    try {
        normalized = tape.row_normalize(stacked);
    } catch (const DegenerateInputError& e) {
        // Row index -> clip index for a friendlier message.
        throw DegenerateInputError(std::string(e.what()) + " (zero projection; check clip at pair index)");
    }
    const ad::Tape::Var sim = tape.gram(normalized);
    return tape.ntxent_from_sim(sim, temperature);
}

BatchPlan plan_batches(const DatasetManifest& manifest, const TrainConfig& config) {
    config.validate();
    const std::size_t n = manifest.entries.size();
    if (n == 0) throw EmptyDatasetError("manifest has no entries");
    const std::size_t m = config.batch_clips;
    Rng rng(derive_seed(config.seed, "sampler"));

    BatchPlan plan;
    plan.batches.reserve(config.steps);

    if (!config.balanced) {
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        rng.shuffle(order);
        std::size_t cursor = 0;
        for (std::size_t step = 0; step < config.steps; ++step) {
            std::vector<std::size_t> batch;
            batch.reserve(m);
            for (std::size_t i = 0; i < m; ++i) {
                if (cursor >= order.size()) {
                    rng.shuffle(order);
                    cursor = 0;
                }
                batch.push_back(order[cursor++]);
            }
            plan.batches.push_back(std::move(batch));
        }
        return plan;
    }

    const std::size_t num_classes = manifest.class_names.size();
    if (m < num_classes) {
        throw ConfigError("balanced sampling needs batch size >= number of classes (" +
                          std::to_string(m) + " < " + std::to_string(num_classes) + ")");
    }

    std::vector<std::vector<std::size_t>> by_class(num_classes);
    for (std::size_t i = 0; i < n; ++i) {
        by_class[static_cast<std::size_t>(manifest.class_index(manifest.entries[i].label))].push_back(i);
    }
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (by_class[c].empty()) {
            throw ConfigError("class '" + manifest.class_names[c] + "' has no clips");
        }
    }

    // Per-class shuffled cyclic queues; refilling a queue mid-epoch is what
    // lets minority classes repeat.
    std::vector<std::vector<std::size_t>> queues = by_class;
    std::vector<std::size_t> cursors(num_classes, 0);
    for (auto& q : queues) rng.shuffle(q);

    const std::size_t quota = m / num_classes;
    const std::size_t leftover = m % num_classes;
    plan.per_class_quota = quota;

    std::size_t rotation = 0;
    auto draw = [&](std::size_t c) {
        if (cursors[c] >= queues[c].size()) {
            rng.shuffle(queues[c]);
            cursors[c] = 0;
        }
        return queues[c][cursors[c]++];
    };

    for (std::size_t step = 0; step < config.steps; ++step) {
        std::vector<std::size_t> batch;
        batch.reserve(m);
        for (std::size_t c = 0; c < num_classes; ++c) {
            std::size_t count = quota;
            // Leftover slots rotate over distinct classes.
            const std::size_t offset = (c + num_classes - rotation % num_classes) % num_classes;
            if (offset < leftover) ++count;
            for (std::size_t i = 0; i < count; ++i) batch.push_back(draw(c));
        }
        rotation = (rotation + leftover) % std::max<std::size_t>(num_classes, 1);
        plan.batches.push_back(std::move(batch));
    }
    return plan;
}

ClipStore::ClipStore(const DatasetManifest& manifest, std::uint32_t sample_rate)
    : manifest_(&manifest), sample_rate_(sample_rate) {
    cache_.resize(manifest.entries.size());
    loaded_.assign(manifest.entries.size(), false);
}

const AudioClip& ClipStore::clip(std::size_t index) const {
    if (index >= cache_.size()) throw ContractError("clip index out of range");
    if (!loaded_[index]) {
        const auto& entry = manifest_->entries[index];
        AudioClip c = resample(load_wav(entry.path), sample_rate_);
        c.label = entry.label;
        c.source_id = entry.path;  // unique across class directories
        cache_[index] = std::move(c);
        loaded_[index] = true;
    }
    return cache_[index];
}

namespace {

struct MelCache {
    const MelFilterbank* fb = nullptr;
    std::unordered_map<std::size_t, std::pair<MelSpectrogram, MelSpectrogram>> halves;

    const std::pair<MelSpectrogram, MelSpectrogram>& get(const ClipStore& store, std::size_t index) {
        auto it = halves.find(index);
        if (it == halves.end()) {
            const SegmentPair pair = split_pair(store.clip(index));
            it = halves.emplace(index, std::make_pair(mel_spectrogram(pair.first, *fb),
                                                      mel_spectrogram(pair.second, *fb)))
                     .first;
        }
        return it->second;
    }
};

} // namespace

PretrainResult pretrain(const ClipStore& store, const EncoderConfig& encoder_config,
                        const TrainConfig& config, const StepCallback& callback) {
    encoder_config.validate();
    config.validate();
    if (store.size() == 0) throw EmptyDatasetError("no clips to train on");

    PretrainResult result;
    result.model = init_encoder(encoder_config, derive_seed(config.seed, "init"));
    if (config.steps == 0) return result;

    const BatchPlan plan = plan_batches(store.manifest(), config);
    const bool patch_mode = encoder_config.input_kind == InputKind::patches;

    MelFilterbank fb;
    MelCache mel_cache;
    if (patch_mode) {
        fb = build_filterbank(kDefaultSampleRate, 1024, encoder_config.mel_bands, 0.0,
                              kDefaultSampleRate / 2.0);
        mel_cache.fb = &fb;
    }

    ad::AdamState adam;
    ad::AdamConfig adam_config;
    adam_config.lr = config.lr;
    const std::uint64_t dropout_root = derive_seed(config.seed, "dropout");
    const std::uint64_t patch_root = derive_seed(config.seed, "patches");

    for (std::size_t step = 0; step < config.steps; ++step) {
        const auto& batch = plan.batches[step];

        ad::Tape tape;
        std::vector<ad::Tape::Var> views;
        try {
            if (patch_mode) {
                for (const std::size_t clip_index : batch) {
                    const auto& [first, second] = mel_cache.get(store, clip_index);
                    for (std::size_t half = 0; half < 2; ++half) {
                        const auto patches =
                            sample_patches(half == 0 ? first : second, config.patches_per_segment,
                                           derive_seed(patch_root, "", (step << 21) ^ (clip_index << 1) ^ half));
                        ForwardOptions opts{true, derive_seed(dropout_root, "", (step << 21) ^ views.size())};
                        views.push_back(forward_patches(tape, result.model, patches, opts).z);
                    }
                }
            } else {
                // Assemble normalized halves first so the batch can be cropped
                // to a common length; constant (silent) segments drop the clip.
                std::vector<std::vector<double>> segments;
                for (const std::size_t clip_index : batch) {
                    const SegmentPair pair = split_pair(store.clip(clip_index));
                    const NormalizedSegment a = normalize(pair.first);
                    const NormalizedSegment b = normalize(pair.second);
                    if (a.constant || b.constant) continue;
                    segments.push_back(a.clip.samples);
                    segments.push_back(b.clip.samples);
                }
                if (segments.size() < 4) {
                    throw DegenerateInputError("fewer than 2 usable clips in batch");
                }
                std::size_t min_len = segments[0].size();
                for (const auto& s : segments) min_len = std::min(min_len, s.size());
                for (auto& s : segments) {
                    s.resize(min_len);
                    ForwardOptions opts{true, derive_seed(dropout_root, "", (step << 21) ^ views.size())};
                    views.push_back(forward_waveform(tape, result.model, s, opts).z);
                }
            }

            const ad::Tape::Var loss = ntxent_loss(tape, views, config.temperature);
            result.model.zero_grads();
            tape.backward(loss);
            adam.step(result.model.parameters(), adam_config);
            result.loss_history.push_back(tape.value(loss).data[0]);
        } catch (const Error& e) {
            throw Error(e.category(), "step " + std::to_string(step) + ": " + e.what());
        }

        if (config.checkpoint_every > 0 && !config.checkpoint_dir.empty() &&
            (step + 1) % config.checkpoint_every == 0) {
            const auto path = std::filesystem::path(config.checkpoint_dir) /
                              ("checkpoint-" + std::to_string(step + 1) + ".ckpt");
            save_checkpoint(path.string(), result.model, &adam);
        }
        if (callback) callback(step, result.loss_history.back(), result.model);
    }
    return result;
}

void write_loss_csv(const std::string& path, const std::vector<double>& losses) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "# sscl-loss-v1\n";
    out << "step,loss\n";
    char buf[64];
    for (std::size_t i = 0; i < losses.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i, losses[i]);
        out << buf;
    }
}

FeatureMatrix extract_features(const ClipStore& store, EncoderModel& model, std::uint64_t seed,
                               std::size_t patches_per_segment) {
    const bool patch_mode = model.config.input_kind == InputKind::patches;
    MelFilterbank fb;
    if (patch_mode) {
        fb = build_filterbank(kDefaultSampleRate, 1024, model.config.mel_bands, 0.0,
                              kDefaultSampleRate / 2.0);
    }
    const std::uint64_t patch_root = derive_seed(seed, "extract-patches");

    FeatureMatrix features;
    features.branch = patch_mode ? FeatureBranch::spectrogram : FeatureBranch::waveform;
    features.rows = store.size();

    for (std::size_t i = 0; i < store.size(); ++i) {
        const AudioClip& clip = store.clip(i);
        const SegmentPair pair = split_pair(clip);

        std::vector<double> h;
        for (std::size_t half = 0; half < 2; ++half) {
            const AudioClip& segment = half == 0 ? pair.first : pair.second;
            std::vector<double> h_half;
            if (patch_mode) {
                const MelSpectrogram spec = mel_spectrogram(segment, fb);
                const auto patches =
                    sample_patches(spec, patches_per_segment, derive_seed(patch_root, "", (i << 1) ^ half));
                h_half = represent_patches(model, patches);
            } else {
                h_half = represent_waveform(model, normalize(segment).clip.samples);
            }
            if (h.empty()) {
                h = std::move(h_half);
            } else {
                for (std::size_t j = 0; j < h.size(); ++j) h[j] = 0.5 * (h[j] + h_half[j]);
            }
        }

        if (features.cols == 0) {
            features.cols = h.size();
            features.values.assign(features.rows * features.cols, 0.0);
        }
        std::copy(h.begin(), h.end(), features.values.begin() + i * features.cols);
        features.sample_ids.push_back(clip.source_id);
    }
    return features;
}

} // namespace sscl
