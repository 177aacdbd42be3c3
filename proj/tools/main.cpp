#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sscl/cli.hpp"
#include "sscl/errors.hpp"

using namespace sscl;

int main(int argc, char** argv) {
    CLI::App app{"Self-supervised contrastive sound representation toolkit"};
    app.require_subcommand(1);

    // Shared flags, bound per subcommand.
    std::string config_path;
    std::string output;
    std::string input_kind_name = "waveform";
    std::uint64_t seed = 0;
    bool seed_set = false;

    auto add_seed = [&](CLI::App* cmd) {
        cmd->add_option("--seed", seed, "Top-level seed")->each([&](const std::string&) { seed_set = true; });
    };

    // pretrain
    auto* pretrain_cmd = app.add_subcommand("pretrain", "Contrastive pretraining of an encoder");
    std::size_t steps_override = 0;
    bool steps_set = false;
    pretrain_cmd->add_option("--config", config_path, "Run config JSON")->required();
    pretrain_cmd->add_option("--input", input_kind_name, "waveform|spectrogram")
        ->check(CLI::IsMember({"waveform", "spectrogram"}));
    pretrain_cmd->add_option("--output", output, "Output directory (overrides config)");
    pretrain_cmd->add_option("--steps", steps_override, "Training steps (overrides config)")
        ->each([&](const std::string&) { steps_set = true; });
    add_seed(pretrain_cmd);

    // extract
    auto* extract_cmd = app.add_subcommand("extract", "Extract per-clip representations");
    std::string checkpoint, dataset_root, dataset_format = "flat-dirs";
    std::size_t patches_per_segment = 4;
    extract_cmd->add_option("--checkpoint", checkpoint, "Encoder checkpoint")->required();
    extract_cmd->add_option("--dataset", dataset_root, "Dataset root")->required();
    extract_cmd->add_option("--format", dataset_format, "urbansound8k-csv|esc50-csv|flat-dirs");
    extract_cmd->add_option("--input", input_kind_name, "waveform|spectrogram")
        ->check(CLI::IsMember({"waveform", "spectrogram"}));
    extract_cmd->add_option("--output", output, "Output feature matrix path")->required();
    extract_cmd->add_option("--patches", patches_per_segment, "Patches per segment (spectrogram input)");
    add_seed(extract_cmd);

    // fuse
    auto* fuse_cmd = app.add_subcommand("fuse", "CCA-fuse waveform and spectrogram features");
    std::string wave_path, spec_path, report_path;
    double ridge = -1.0;
    std::size_t fusion_d = 0;
    fuse_cmd->add_option("--waveform", wave_path, "Waveform-branch feature matrix")->required();
    fuse_cmd->add_option("--spectrogram", spec_path, "Spectrogram-branch feature matrix")->required();
    fuse_cmd->add_option("--output", output, "Fused feature matrix path")->required();
    fuse_cmd->add_option("--report", report_path, "Correlation report JSON path");
    fuse_cmd->add_option("--ridge", ridge, "Ridge regularization (negative = automatic)");
    fuse_cmd->add_option("--dim", fusion_d, "Retained canonical pairs (0 = automatic)");

    // probe
    auto* probe_cmd = app.add_subcommand("probe", "Train a linear probe on frozen features");
    std::string features_path, labels_path;
    std::size_t num_classes = 0;
    ProbeTrainConfig probe_config;
    probe_cmd->add_option("--features", features_path, "Feature matrix")->required();
    probe_cmd->add_option("--labels", labels_path, "Label file (one integer per row)");
    probe_cmd->add_option("--classes", num_classes, "Class count (0 = infer)");
    probe_cmd->add_option("--epochs", probe_config.epochs, "Training epochs");
    probe_cmd->add_option("--lr", probe_config.lr, "Learning rate");
    probe_cmd->add_option("--output", output, "Probe model path")->required();
    add_seed(probe_cmd);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a probe; accuracy + confusion matrix");
    std::string probe_path, confusion_path;
    eval_cmd->add_option("--features", features_path, "Feature matrix")->required();
    eval_cmd->add_option("--labels", labels_path, "Label file");
    eval_cmd->add_option("--probe", probe_path, "Probe model path")->required();
    eval_cmd->add_option("--output", output, "Report JSON path")->required();
    eval_cmd->add_option("--confusion", confusion_path, "Confusion matrix CSV path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (pretrain_cmd->parsed()) {
            cli::RunConfig config = cli::RunConfig::from_file(config_path);
            if (!output.empty()) config.output_dir = output;
            if (seed_set) {
                config.seed = seed;
                config.train.seed = seed;
            }
            if (steps_set) config.train.steps = steps_override;
            const auto outputs = cli::cmd_pretrain(config, input_kind_from_string(input_kind_name));
            std::printf("checkpoint: %s\nloss-csv: %s\nmanifest: %s\n", outputs.checkpoint_path.c_str(),
                        outputs.loss_csv_path.c_str(), outputs.manifest_path.c_str());
        } else if (extract_cmd->parsed()) {
            cli::cmd_extract(checkpoint, dataset_root, manifest_format_from_string(dataset_format),
                             input_kind_from_string(input_kind_name), output, seed, patches_per_segment);
            std::printf("features: %s\n", output.c_str());
        } else if (fuse_cmd->parsed()) {
            cli::cmd_fuse(wave_path, spec_path, output, report_path, ridge, fusion_d);
            std::printf("fused: %s\n", output.c_str());
        } else if (probe_cmd->parsed()) {
            if (labels_path.empty()) labels_path = features_path + ".labels";
            if (seed_set) probe_config.seed = seed;
            cli::cmd_probe(features_path, labels_path, num_classes, probe_config, output);
            std::printf("probe: %s\n", output.c_str());
        } else if (eval_cmd->parsed()) {
            if (labels_path.empty()) labels_path = features_path + ".labels";
            cli::cmd_eval(features_path, labels_path, probe_path, output, confusion_path);
            std::printf("report: %s\n", output.c_str());
        }
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal-error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
