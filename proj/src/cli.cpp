#include "sscl/cli.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sscl/errors.hpp"
#include "sscl/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace sscl::cli {

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_json_text(buf.str());
}

RunConfig RunConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config JSON: ") + e.what());
    }

    RunConfig c;
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        c.dataset_root = d.value("root", "");
        if (d.contains("format")) c.dataset_format = manifest_format_from_string(d.at("format"));
    }
    if (j.contains("encoder")) c.encoder = EncoderConfig::from_json(j.at("encoder").dump());
    if (j.contains("train")) {
        const auto& t = j.at("train");
        c.train.batch_clips = t.value("batch_clips", c.train.batch_clips);
        c.train.temperature = t.value("temperature", c.train.temperature);
        c.train.steps = t.value("steps", c.train.steps);
        c.train.lr = t.value("lr", c.train.lr);
        c.train.balanced = t.value("balanced", c.train.balanced);
        c.train.patches_per_segment = t.value("patches_per_segment", c.train.patches_per_segment);
        c.train.checkpoint_every = t.value("checkpoint_every", c.train.checkpoint_every);
    }
    if (j.contains("fusion")) {
        c.fusion_ridge = j.at("fusion").value("ridge", c.fusion_ridge);
        c.fusion_d = j.at("fusion").value("d", c.fusion_d);
    }
    if (j.contains("probe")) {
        c.probe.epochs = j.at("probe").value("epochs", c.probe.epochs);
        c.probe.lr = j.at("probe").value("lr", c.probe.lr);
    }
    c.output_dir = j.value("output_dir", c.output_dir);
    c.seed = j.value("seed", c.seed);
    c.train.seed = c.seed;
    c.probe.seed = derive_seed(c.seed, "probe");
    return c;
}

std::string RunConfig::to_json() const {
    const json j = {
        {"dataset", {{"root", dataset_root}, {"format", to_string(dataset_format)}}},
        {"encoder", json::parse(encoder.to_json())},
        {"train",
         {{"batch_clips", train.batch_clips},
          {"temperature", train.temperature},
          {"steps", train.steps},
          {"lr", train.lr},
          {"balanced", train.balanced},
          {"patches_per_segment", train.patches_per_segment},
          {"checkpoint_every", train.checkpoint_every}}},
        {"fusion", {{"ridge", fusion_ridge}, {"d", fusion_d}}},
        {"probe", {{"epochs", probe.epochs}, {"lr", probe.lr}}},
        {"output_dir", output_dir},
        {"seed", seed},
    };
    return j.dump(2);
}

void RunConfig::validate(bool need_dataset) const {
    std::vector<std::string> problems;
    if (need_dataset) {
        if (dataset_root.empty()) {
            problems.push_back("dataset.root is empty");
        } else if (!fs::exists(dataset_root)) {
            problems.push_back("dataset.root does not exist: " + dataset_root);
        }
    }
    try {
        encoder.validate();
    } catch (const Error& e) {
        problems.push_back(std::string("encoder: ") + e.what());
    }
    try {
        train.validate();
    } catch (const Error& e) {
        problems.push_back(std::string("train: ") + e.what());
    }
    if (probe.epochs == 0) problems.push_back("probe.epochs must be positive");
    if (probe.lr <= 0.0) problems.push_back("probe.lr must be positive");
    if (output_dir.empty()) problems.push_back("output_dir is empty");
    if (!problems.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& p : problems) msg += "\n  - " + p;
        throw ConfigError(msg);
    }
}

namespace {

std::uint64_t config_hash(const std::string& canonical) {
    std::uint64_t h = 14695981039346656037ull;
    for (const char c : canonical) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 1099511628211ull;
    }
    return h;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << text;
}

void write_run_manifest(const std::string& path, const RunConfig& config, InputKind input_kind,
                        std::size_t steps_completed, bool partial,
                        const std::vector<std::string>& outputs, const std::string& error) {
    const std::string canonical = config.to_json();
    json j = {
        {"format", "sscl-run-manifest-v1"},
        {"config", json::parse(canonical)},
        {"config_hash", config_hash(canonical)},
        {"seed", config.seed},
        {"input", to_string(input_kind)},
        {"steps_completed", steps_completed},
        {"partial", partial},
        {"outputs", outputs},
        {"file_formats",
         {{"checkpoint", "SSLCKP01"}, {"matrix", "SSLMAT01"}, {"loss_csv", "sscl-loss-v1"}}},
    };
    if (!error.empty()) j["error"] = error;
    write_text(path, j.dump(2) + "\n");
}

} // namespace

PretrainOutputs cmd_pretrain(const RunConfig& config_in, InputKind input_kind) {
    RunConfig config = config_in;
    config.encoder.input_kind = input_kind;
    config.validate(true);
    fs::create_directories(config.output_dir);

    const DatasetManifest manifest = load_manifest(config.dataset_root, config.dataset_format);
    const ClipStore store(manifest);

    PretrainOutputs outputs;
    outputs.checkpoint_path = (fs::path(config.output_dir) / "checkpoint.ckpt").string();
    outputs.loss_csv_path = (fs::path(config.output_dir) / "loss.csv").string();
    outputs.manifest_path = (fs::path(config.output_dir) / "run_manifest.json").string();

    TrainConfig train = config.train;
    if (train.checkpoint_every > 0 && train.checkpoint_dir.empty()) {
        train.checkpoint_dir = config.output_dir;
    }

    try {
        const PretrainResult result = pretrain(store, config.encoder, train);
        save_checkpoint(outputs.checkpoint_path, result.model);
        write_loss_csv(outputs.loss_csv_path, result.loss_history);
        outputs.final_loss = result.loss_history.empty() ? 0.0 : result.loss_history.back();
        write_run_manifest(outputs.manifest_path, config, input_kind, result.loss_history.size(),
                           false, {outputs.checkpoint_path, outputs.loss_csv_path}, "");
    } catch (const Error& e) {
        write_run_manifest(outputs.manifest_path, config, input_kind, 0, true, {}, e.what());
        throw;
    }
    return outputs;
}

void cmd_extract(const std::string& checkpoint_path, const std::string& dataset_root,
                 ManifestFormat format, InputKind input_kind, const std::string& output_path,
                 std::uint64_t seed, std::size_t patches_per_segment) {
    LoadedCheckpoint loaded = load_checkpoint(checkpoint_path);
    if (loaded.model.config.input_kind != input_kind) {
        throw ConfigError("checkpoint input kind '" + to_string(loaded.model.config.input_kind) +
                          "' does not match requested '" + to_string(input_kind) + "'");
    }
    const DatasetManifest manifest = load_manifest(dataset_root, format);
    const ClipStore store(manifest);
    const FeatureMatrix features = extract_features(store, loaded.model, seed, patches_per_segment);
    write_feature_matrix(output_path, features);

    std::vector<int> labels;
    labels.reserve(manifest.entries.size());
    for (const auto& entry : manifest.entries) labels.push_back(manifest.class_index(entry.label));
    write_label_file(output_path + ".labels", labels);

    std::ostringstream classes;
    for (const auto& name : manifest.class_names) classes << name << "\n";
    write_text(output_path + ".classes", classes.str());
}

void cmd_fuse(const std::string& waveform_features, const std::string& spectrogram_features,
              const std::string& output_path, const std::string& report_path, double ridge,
              std::size_t d) {
    const FeatureMatrix r = read_feature_matrix(waveform_features);
    const FeatureMatrix z = read_feature_matrix(spectrogram_features);
    const CcaFusionModel model = fit_cca(r, z, ridge, d);
    const FeatureMatrix fused = fuse(model, r, z);
    write_feature_matrix(output_path, fused);
    if (fs::exists(waveform_features + ".labels")) {
        fs::copy_file(waveform_features + ".labels", output_path + ".labels",
                      fs::copy_options::overwrite_existing);
    }
    if (!report_path.empty()) write_text(report_path, fusion_report_json(model) + "\n");
}

void cmd_probe(const std::string& features_path, const std::string& labels_path,
               std::size_t num_classes, const ProbeTrainConfig& config, const std::string& output_path) {
    const FeatureMatrix features = read_feature_matrix(features_path);
    const std::vector<int> labels = read_label_file(labels_path);
    if (num_classes == 0) {
        int max_label = -1;
        for (const int l : labels) max_label = std::max(max_label, l);
        num_classes = static_cast<std::size_t>(max_label + 1);
    }
    const ProbeModel probe = train_probe(features, labels, num_classes, config);
    save_probe(output_path, probe);
}

void cmd_eval(const std::string& features_path, const std::string& labels_path,
              const std::string& probe_path, const std::string& report_path,
              const std::string& confusion_csv_path) {
    const FeatureMatrix features = read_feature_matrix(features_path);
    const std::vector<int> labels = read_label_file(labels_path);
    const ProbeModel probe = load_probe(probe_path);
    const EvalReport report = evaluate(probe, features, labels);

    std::vector<std::string> class_names;
    const std::string classes_path = features_path + ".classes";
    if (fs::exists(classes_path)) {
        std::ifstream in(classes_path);
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty()) class_names.push_back(line);
        }
    }
    write_text(report_path, report.to_json(class_names) + "\n");
    if (!confusion_csv_path.empty()) write_text(confusion_csv_path, report.confusion_csv());
}

} // namespace sscl::cli
