#include "sscl/encoder.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "sscl/errors.hpp"
#include "sscl/rng.hpp"

namespace sscl {

using json = nlohmann::json;

InputKind input_kind_from_string(const std::string& name) {
    if (name == "waveform") return InputKind::waveform;
    if (name == "spectrogram" || name == "patches") return InputKind::patches;
    throw ConfigError("unknown input kind '" + name + "'");
}

std::string to_string(InputKind kind) {
    // "spectrogram" is the user-facing name (--input spectrogram); "patches"
    // is accepted as an alias on input.
    return kind == InputKind::waveform ? "waveform" : "spectrogram";
}

EncoderConfig EncoderConfig::default_config(InputKind kind) {
    EncoderConfig c;
    c.layers = {{64, 1, 4}, {64, 9, 4}, {32, 15, 4}, {16, 4, 0}};
    c.input_kind = kind;
    return c;
}

EncoderConfig EncoderConfig::depth_config(std::size_t depth, InputKind kind) {
    EncoderConfig c;
    switch (depth) {
        case 4:
            return default_config(kind);
        case 6:
            c.layers = {{64, 1, 4}, {64, 9, 4}, {32, 15, 2}, {16, 6, 2}, {64, 6, 2}, {32, 6, 0}};
            break;
        case 8:
            c.layers = {{64, 1, 4}, {64, 9, 2}, {32, 15, 2}, {16, 6, 2},
                        {64, 6, 2}, {32, 6, 2}, {16, 6, 1}, {62, 6, 0}};
            break;
        case 10:
            c.layers = {{64, 1, 2}, {64, 9, 2}, {32, 15, 2}, {16, 6, 2}, {64, 6, 2},
                        {32, 6, 1}, {16, 6, 1}, {62, 6, 1}, {32, 6, 1}, {16, 6, 0}};
            break;
        default:
            throw ConfigError("supported depths are 4, 6, 8, 10; got " + std::to_string(depth));
    }
    c.input_kind = kind;
    return c;
}

void EncoderConfig::validate() const {
    if (layers.size() < 2) throw ConfigError("encoder needs at least 2 layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].channels == 0) throw ConfigError("layer " + std::to_string(i) + " has zero channels");
        if (layers[i].kernel == 0) throw ConfigError("layer " + std::to_string(i) + " has zero kernel size");
        if (layers[i].subsample == 0 && i + 1 != layers.size()) {
            throw ConfigError("only the final layer may use adaptive subsampling (layer " + std::to_string(i) + ")");
        }
    }
    if (layers.back().subsample != 0) {
        throw ConfigError("final layer must use adaptive subsampling");
    }
    if (projection.hidden == 0 || projection.output == 0) throw ConfigError("projection widths must be positive");
    if (dropout_p < 0.0 || dropout_p >= 1.0) throw ConfigError("dropout probability must be in [0, 1)");
    if (input_kind == InputKind::patches && (patch_embed_dim == 0 || patch_frames == 0 || mel_bands == 0)) {
        throw ConfigError("patch front end dimensions must be positive");
    }
}

std::string EncoderConfig::to_json() const {
    json layers_json = json::array();
    for (const auto& l : layers) {
        layers_json.push_back({{"channels", l.channels},
                               {"kernel", l.kernel},
                               {"subsample", l.subsample == 0 ? json("adaptive") : json(l.subsample)}});
    }
    const json j = {
        {"layers", layers_json},
        {"projection", {{"hidden", projection.hidden}, {"output", projection.output}}},
        {"input_kind", to_string(input_kind)},
        {"patch_embed_dim", patch_embed_dim},
        {"patch_frames", patch_frames},
        {"mel_bands", mel_bands},
        {"dropout_p", dropout_p},
    };
    return j.dump();
}

EncoderConfig EncoderConfig::from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad encoder config JSON: ") + e.what());
    }
    EncoderConfig c;
    c.layers.clear();
    for (const auto& l : j.at("layers")) {
        LayerSpec spec;
        spec.channels = l.at("channels").get<std::size_t>();
        spec.kernel = l.at("kernel").get<std::size_t>();
        const auto& sub = l.at("subsample");
        spec.subsample = sub.is_string() ? 0 : sub.get<std::size_t>();
        c.layers.push_back(spec);
    }
    c.projection.hidden = j.at("projection").at("hidden").get<std::size_t>();
    c.projection.output = j.at("projection").at("output").get<std::size_t>();
    c.input_kind = input_kind_from_string(j.value("input_kind", "waveform"));
    c.patch_embed_dim = j.value("patch_embed_dim", std::size_t{768});
    c.patch_frames = j.value("patch_frames", kPatchFrames);
    c.mel_bands = j.value("mel_bands", kMelBands);
    c.dropout_p = j.value("dropout_p", 0.5);
    c.validate();
    return c;
}

std::vector<ad::Parameter*> EncoderModel::parameters() {
    std::vector<ad::Parameter*> out;
    for (auto& p : conv_kernels) out.push_back(&p);
    for (auto& p : conv_biases) out.push_back(&p);
    out.push_back(&mlp_w1);
    out.push_back(&mlp_b1);
    out.push_back(&mlp_w2);
    out.push_back(&mlp_b2);
    if (config.input_kind == InputKind::patches) {
        out.push_back(&patch_embed);
        out.push_back(&patch_mix);
    }
    return out;
}

void EncoderModel::zero_grads() {
    for (auto* p : parameters()) p->zero_grad();
}

namespace {

Tensor glorot_uniform(const std::vector<std::size_t>& shape, std::size_t fan_in, std::size_t fan_out,
                      std::uint64_t seed) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t = Tensor::zeros(shape);
    Rng rng(seed);
    for (double& v : t.data) v = rng.uniform(-a, a);
    return t;
}

} // namespace

EncoderModel init_encoder(const EncoderConfig& config, std::uint64_t seed) {
    config.validate();
    EncoderModel model;
    model.config = config;

    std::size_t cin = 1;
    for (std::size_t i = 0; i < config.layers.size(); ++i) {
        const auto& l = config.layers[i];
        const std::string base = "conv" + std::to_string(i);
        model.conv_kernels.emplace_back(
            base + ".w", glorot_uniform({l.channels, cin, l.kernel}, cin * l.kernel, l.channels * l.kernel,
                                        derive_seed(seed, base + ".w")));
        model.conv_biases.emplace_back(base + ".b", Tensor::zeros({l.channels}));
        cin = l.channels;
    }

    const std::size_t h_dim = config.representation_dim();
    model.mlp_w1 = ad::Parameter("mlp.w1", glorot_uniform({config.projection.hidden, h_dim}, h_dim,
                                                          config.projection.hidden, derive_seed(seed, "mlp.w1")));
    model.mlp_b1 = ad::Parameter("mlp.b1", Tensor::zeros({config.projection.hidden}));
    model.mlp_w2 = ad::Parameter("mlp.w2",
                                 glorot_uniform({config.projection.output, config.projection.hidden},
                                                config.projection.hidden, config.projection.output,
                                                derive_seed(seed, "mlp.w2")));
    model.mlp_b2 = ad::Parameter("mlp.b2", Tensor::zeros({config.projection.output}));

    if (config.input_kind == InputKind::patches) {
        model.patch_embed = ad::Parameter(
            "patch.embed", glorot_uniform({config.mel_bands, config.patch_embed_dim}, config.mel_bands,
                                          config.patch_embed_dim, derive_seed(seed, "patch.embed")));
        model.patch_mix = ad::Parameter(
            "patch.mix", glorot_uniform({1, config.patch_frames}, config.patch_frames, 1,
                                        derive_seed(seed, "patch.mix")));
    }
    return model;
}

namespace {

// Conv stack + projection head shared by both input kinds.
ForwardVars run_encoder(ad::Tape& tape, EncoderModel& model, ad::Tape::Var input,
                        const ForwardOptions& options) {
    const auto& config = model.config;
    ad::Tape::Var x = input;
    for (std::size_t i = 0; i < config.layers.size(); ++i) {
        const auto& l = config.layers[i];
        ad::Tape::Var conv;
        try {
            conv = tape.conv1d(x, tape.param(model.conv_kernels[i]), tape.param(model.conv_biases[i]));
        } catch (const ShapeError& e) {
            throw ShapeError("layer " + std::to_string(i) + ": " + e.what());
        }
        const ad::Tape::Var act = tape.relu(conv);
        const std::size_t map_len = tape.value(act).shape[1];
        const std::size_t factor = l.subsample == 0 ? map_len : l.subsample;
        try {
            x = tape.subsample(act, factor);
        } catch (const ShapeError& e) {
            throw ShapeError("layer " + std::to_string(i) + ": " + e.what());
        }
    }

    const Tensor& conv_out = tape.value(x);
    const std::size_t flat = conv_out.data.size();
    const ad::Tape::Var h = tape.reshape(x, {flat});

    const ad::Tape::Var hidden = tape.relu(tape.dense(h, tape.param(model.mlp_w1), tape.param(model.mlp_b1)));
    const ad::Tape::Var dropped =
        tape.dropout(hidden, config.dropout_p, options.training, options.dropout_seed);
    const ad::Tape::Var z = tape.dense(dropped, tape.param(model.mlp_w2), tape.param(model.mlp_b2));
    return {h, z};
}

} // namespace

ForwardVars forward_waveform(ad::Tape& tape, EncoderModel& model, const std::vector<double>& segment,
                             const ForwardOptions& options) {
    if (model.config.input_kind != InputKind::waveform) {
        throw ConfigError("model input kind is not waveform");
    }
    const std::size_t n = segment.size();
    const ad::Tape::Var input = tape.constant(Tensor{{1, n}, segment});
    return run_encoder(tape, model, input, options);
}

ad::Tape::Var embed_patches(ad::Tape& tape, EncoderModel& model, const std::vector<MelPatch>& patches) {
    const auto& config = model.config;
    if (config.input_kind != InputKind::patches) throw ConfigError("model input kind is not patches");
    if (patches.empty()) throw ShapeError("need at least one patch");

    const std::size_t bands = config.mel_bands;
    const std::size_t frames = config.patch_frames;
    for (const auto& p : patches) {
        if (p.values.size() != bands * frames) {
            throw ShapeError("patch shape must be " + std::to_string(bands) + " x " + std::to_string(frames));
        }
    }

    // Sum of P_n^T, shape [frames x bands]; the patch sum is order-free so it
    // can be folded into one constant.
    Tensor sum_t = Tensor::zeros({frames, bands});
    for (const auto& p : patches) {
        for (std::size_t m = 0; m < bands; ++m) {
            for (std::size_t f = 0; f < frames; ++f) {
                sum_t.data[f * bands + m] += p.values[m * frames + f];
            }
        }
    }
    const ad::Tape::Var sum_var = tape.constant(std::move(sum_t));
    const ad::Tape::Var proj = tape.matmul(sum_var, tape.param(model.patch_embed));   // [frames x embed]
    const ad::Tape::Var mixed = tape.matmul(tape.param(model.patch_mix), proj);       // [1 x embed]
    return tape.relu(mixed);
}

ForwardVars forward_patches(ad::Tape& tape, EncoderModel& model, const std::vector<MelPatch>& patches,
                            const ForwardOptions& options) {
    const ad::Tape::Var embedded = embed_patches(tape, model, patches);
    return run_encoder(tape, model, embedded, options);
}

std::vector<double> represent_waveform(EncoderModel& model, const std::vector<double>& segment) {
    ad::Tape tape;
    const auto vars = forward_waveform(tape, model, segment);
    return tape.value(vars.h).data;
}

std::vector<double> represent_patches(EncoderModel& model, const std::vector<MelPatch>& patches) {
    ad::Tape tape;
    const auto vars = forward_patches(tape, model, patches);
    return tape.value(vars.h).data;
}

namespace {

void write_tensor_data(std::ofstream& out, const Tensor& t) {
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
}

Tensor read_tensor_data(std::ifstream& in, const std::vector<std::size_t>& shape) {
    Tensor t = Tensor::zeros(shape);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!in) throw FormatError("truncated checkpoint tensor data");
    return t;
}

} // namespace

void save_checkpoint(const std::string& path, const EncoderModel& model, const ad::AdamState* optimizer) {
    auto& mutable_model = const_cast<EncoderModel&>(model);
    const auto params = mutable_model.parameters();

    json tensors = json::array();
    std::vector<const Tensor*> data_order;
    for (const auto* p : params) {
        tensors.push_back({{"name", p->name}, {"shape", p->value.shape}});
        data_order.push_back(&p->value);
    }
    if (optimizer != nullptr) {
        for (const auto* p : params) {
            const auto it = optimizer->moments().find(p->name);
            if (it == optimizer->moments().end()) continue;
            tensors.push_back({{"name", "adam.m." + p->name}, {"shape", it->second.m.shape}});
            data_order.push_back(&it->second.m);
            tensors.push_back({{"name", "adam.v." + p->name}, {"shape", it->second.v.shape}});
            data_order.push_back(&it->second.v);
        }
    }

    json header = {
        {"format", "SSLCKP01"},
        {"config", json::parse(model.config.to_json())},
        {"tensors", tensors},
    };
    if (optimizer != nullptr) {
        header["optimizer"] = {{"type", "adam"}, {"steps", optimizer->steps_taken()}};
    }
    const std::string header_text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out.write(kCheckpointMagic, 8);
    const auto len = static_cast<std::uint64_t>(header_text.size());
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const Tensor* t : data_order) write_tensor_data(out, *t);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
        throw FormatError("bad checkpoint magic in " + path);
    }
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 8);
    std::string header_text(len, '\0');
    in.read(header_text.data(), static_cast<std::streamsize>(len));
    if (!in) throw FormatError("truncated checkpoint header in " + path);

    json header;
    try {
        header = json::parse(header_text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad checkpoint header JSON: ") + e.what());
    }

    LoadedCheckpoint loaded;
    loaded.model = init_encoder(EncoderConfig::from_json(header.at("config").dump()), 0);

    std::unordered_map<std::string, Tensor> named;
    for (const auto& entry : header.at("tensors")) {
        const auto name = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
        named.emplace(name, read_tensor_data(in, shape));
    }

    for (auto* p : loaded.model.parameters()) {
        const auto it = named.find(p->name);
        if (it == named.end()) throw FormatError("checkpoint missing tensor '" + p->name + "'");
        if (it->second.shape != p->value.shape) {
            throw FormatError("checkpoint tensor '" + p->name + "' has wrong shape");
        }
        p->value = it->second;
        p->grad = Tensor::zeros(p->value.shape);
    }

    if (header.contains("optimizer")) {
        loaded.has_optimizer = true;
        loaded.optimizer.set_steps_taken(header.at("optimizer").at("steps").get<long>());
        for (auto* p : loaded.model.parameters()) {
            const auto mi = named.find("adam.m." + p->name);
            const auto vi = named.find("adam.v." + p->name);
            if (mi != named.end() && vi != named.end()) {
                loaded.optimizer.moments()[p->name] = {mi->second, vi->second};
            }
        }
    }
    return loaded;
}

} // namespace sscl
