#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "sscl/audio.hpp"
#include "sscl/cca.hpp"
#include "sscl/encoder.hpp"
#include "sscl/probe.hpp"
#include "sscl/train.hpp"

namespace sscl::cli {

// Top-level run configuration, loaded from a JSON file; command-line flags
// override individual fields.
struct RunConfig {
    std::string dataset_root;
    ManifestFormat dataset_format = ManifestFormat::flat_dirs;
    EncoderConfig encoder = EncoderConfig::default_config();
    TrainConfig train;
    double fusion_ridge = -1.0;  // < 0 = automatic
    std::size_t fusion_d = 0;    // 0 = automatic
    ProbeTrainConfig probe;
    std::string output_dir = ".";
    std::uint64_t seed = 0;

    static RunConfig from_file(const std::string& path);
    static RunConfig from_json_text(const std::string& text);
    std::string to_json() const;

    // Throws ConfigError listing every violated field.
    void validate(bool need_dataset) const;
};

struct PretrainOutputs {
    std::string checkpoint_path;
    std::string loss_csv_path;
    std::string manifest_path;
    double final_loss = 0.0;
};

PretrainOutputs cmd_pretrain(const RunConfig& config, InputKind input_kind);

void cmd_extract(const std::string& checkpoint_path, const std::string& dataset_root,
                 ManifestFormat format, InputKind input_kind, const std::string& output_path,
                 std::uint64_t seed, std::size_t patches_per_segment = 4);

void cmd_fuse(const std::string& waveform_features, const std::string& spectrogram_features,
              const std::string& output_path, const std::string& report_path, double ridge,
              std::size_t d);

void cmd_probe(const std::string& features_path, const std::string& labels_path,
               std::size_t num_classes, const ProbeTrainConfig& config, const std::string& output_path);

void cmd_eval(const std::string& features_path, const std::string& labels_path,
              const std::string& probe_path, const std::string& report_path,
              const std::string& confusion_csv_path);

} // namespace sscl::cli
