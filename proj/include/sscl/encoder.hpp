#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sscl/autodiff.hpp"
#include "sscl/mel.hpp"

namespace sscl {

enum class InputKind { waveform, patches };

InputKind input_kind_from_string(const std::string& name);
std::string to_string(InputKind kind);

struct LayerSpec {
    std::size_t channels = 0;
    std::size_t kernel = 0;
    std::size_t subsample = 0;  // 0 = adaptive: factor equals the layer's input map length
};

struct ProjectionSpec {
    std::size_t hidden = 256;
    std::size_t output = 128;
};

struct EncoderConfig {
    std::vector<LayerSpec> layers;
    ProjectionSpec projection;
    InputKind input_kind = InputKind::waveform;
    std::size_t patch_embed_dim = 768;
    std::size_t patch_frames = kPatchFrames;
    std::size_t mel_bands = kMelBands;
    double dropout_p = 0.5;

    // 4 conv layers, kernels 1/9/15/4, channels 64/64/32/16, subsampling
    // 4/4/4/adaptive, 2-layer MLP to 128-D.
    static EncoderConfig default_config(InputKind kind = InputKind::waveform);

    // Depth-sweep variants (4, 6, 8 or 10 conv layers).
    static EncoderConfig depth_config(std::size_t depth, InputKind kind = InputKind::waveform);

    void validate() const;

    // Representation dimension (channel count of the last conv layer).
    std::size_t representation_dim() const { return layers.back().channels; }

    std::string to_json() const;
    static EncoderConfig from_json(const std::string& json_text);
};

struct EncoderModel {
    EncoderConfig config;
    std::vector<ad::Parameter> conv_kernels;  // per layer, [Cout x Cin x k]
    std::vector<ad::Parameter> conv_biases;   // per layer, [Cout]
    ad::Parameter mlp_w1, mlp_b1, mlp_w2, mlp_b2;
    ad::Parameter patch_embed;  // [mel_bands x patch_embed_dim], patches only
    ad::Parameter patch_mix;    // [1 x patch_frames], patches only

    std::vector<ad::Parameter*> parameters();
    void zero_grads();
};

// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)); biases zero.
EncoderModel init_encoder(const EncoderConfig& config, std::uint64_t seed);

struct ForwardVars {
    ad::Tape::Var h;  // pre-projection representation
    ad::Tape::Var z;  // projection output, where the loss is applied
};

struct ForwardOptions {
    bool training = false;
    std::uint64_t dropout_seed = 0;
};

// Conv -> ReLU -> average-subsample per layer (the last layer's factor is its
// entire input map length), flatten to h, then hidden ReLU + dropout + output
// projection to z.
ForwardVars forward_waveform(ad::Tape& tape, EncoderModel& model, const std::vector<double>& segment,
                             const ForwardOptions& options = {});

// Sum of P_n^T E mixed by the 1 x 150 row and passed through ReLU; the
// resulting 768-vector feeds the conv stack as a 1-channel sequence.
ad::Tape::Var embed_patches(ad::Tape& tape, EncoderModel& model, const std::vector<MelPatch>& patches);

ForwardVars forward_patches(ad::Tape& tape, EncoderModel& model, const std::vector<MelPatch>& patches,
                            const ForwardOptions& options = {});

// Convenience non-tape evaluation of h for a frozen model.
std::vector<double> represent_waveform(EncoderModel& model, const std::vector<double>& segment);
std::vector<double> represent_patches(EncoderModel& model, const std::vector<MelPatch>& patches);

// Checkpoint container: 8-byte magic "SSLCKP01", u64 JSON header length, JSON
// header (config, optimizer state, tensor directory), then named tensors as
// raw little-endian float64 in directory order.
inline constexpr char kCheckpointMagic[9] = "SSLCKP01";

void save_checkpoint(const std::string& path, const EncoderModel& model,
                     const ad::AdamState* optimizer = nullptr);

struct LoadedCheckpoint {
    EncoderModel model;
    ad::AdamState optimizer;
    bool has_optimizer = false;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

} // namespace sscl
