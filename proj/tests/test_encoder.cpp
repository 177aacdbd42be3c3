#include <doctest.h>

#include <cmath>
#include <fstream>

#include "sscl/encoder.hpp"
#include "sscl/errors.hpp"
#include "test_util.hpp"

using namespace sscl;
using namespace sscl::testutil;

namespace {

std::vector<double> ramp(std::size_t n, double scale = 1.0) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = scale * std::sin(0.37 * static_cast<double>(i));
    return v;
}

MelPatch const_patch(double value) {
    MelPatch p;
    p.values.assign(kMelBands * kPatchFrames, value);
    return p;
}

} // namespace

TEST_CASE("default configuration introspection") {
    const EncoderConfig cfg = EncoderConfig::default_config();
    REQUIRE(cfg.layers.size() == 4);
    CHECK(cfg.layers[0].kernel == 1);
    CHECK(cfg.layers[1].kernel == 9);
    CHECK(cfg.layers[2].kernel == 15);
    CHECK(cfg.layers[3].kernel == 4);
    CHECK(cfg.layers[0].channels == 64);
    CHECK(cfg.layers[1].channels == 64);
    CHECK(cfg.layers[2].channels == 32);
    CHECK(cfg.layers[3].channels == 16);
    CHECK(cfg.layers[0].subsample == 4);
    CHECK(cfg.layers[1].subsample == 4);
    CHECK(cfg.layers[2].subsample == 4);
    CHECK(cfg.layers[3].subsample == 0);  // adaptive
    CHECK(cfg.projection.hidden == 256);
    CHECK(cfg.projection.output == 128);
    CHECK(cfg.dropout_p == 0.5);
    CHECK(cfg.representation_dim() == 16);
    cfg.validate();
}

TEST_CASE("config validation catches bad layer stacks") {
    EncoderConfig cfg = EncoderConfig::default_config();
    cfg.layers[1].subsample = 0;  // adaptive before the last layer
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    cfg = EncoderConfig::default_config();
    cfg.layers.back().subsample = 4;  // last layer must be adaptive
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    cfg = EncoderConfig::default_config();
    cfg.layers[0].kernel = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    cfg = EncoderConfig::default_config();
    cfg.layers.clear();
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("config JSON round trip") {
    const EncoderConfig cfg = EncoderConfig::depth_config(6, InputKind::patches);
    const EncoderConfig back = EncoderConfig::from_json(cfg.to_json());
    REQUIRE(back.layers.size() == cfg.layers.size());
    for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
        CHECK(back.layers[i].channels == cfg.layers[i].channels);
        CHECK(back.layers[i].kernel == cfg.layers[i].kernel);
        CHECK(back.layers[i].subsample == cfg.layers[i].subsample);
    }
    CHECK(back.input_kind == InputKind::patches);
    CHECK(back.projection.hidden == cfg.projection.hidden);
    CHECK(back.dropout_p == cfg.dropout_p);
}

TEST_CASE("initialization is seed-deterministic with zero biases") {
    const EncoderConfig cfg = EncoderConfig::default_config();
    EncoderModel a = init_encoder(cfg, 7);
    EncoderModel b = init_encoder(cfg, 7);
    EncoderModel c = init_encoder(cfg, 8);
    for (std::size_t l = 0; l < 4; ++l) {
        CHECK(a.conv_kernels[l].value.data == b.conv_kernels[l].value.data);
        for (const double v : a.conv_biases[l].value.data) CHECK(v == 0.0);
    }
    CHECK(a.mlp_w1.value.data == b.mlp_w1.value.data);
    CHECK(a.mlp_w1.value.data != c.mlp_w1.value.data);

    // Glorot bound on the first conv layer: fan_in = 1*1, fan_out = 64*1.
    const double bound = std::sqrt(6.0 / (1.0 + 64.0));
    for (const double v : a.conv_kernels[0].value.data) CHECK(std::abs(v) <= bound);
}

TEST_CASE("adaptive final layer keeps the representation dimension fixed") {
    EncoderModel model = init_encoder(EncoderConfig::default_config(), 3);
    const auto h1 = represent_waveform(model, ramp(2205));
    const auto h2 = represent_waveform(model, ramp(8000));
    const auto h3 = represent_waveform(model, ramp(11025));
    CHECK(h1.size() == 16);
    CHECK(h2.size() == 16);
    CHECK(h3.size() == 16);
    CHECK(h1 != h2);  // different content, same shape
}

TEST_CASE("zero input maps to zero representation and projection") {
    EncoderModel model = init_encoder(EncoderConfig::default_config(), 5);
    ad::Tape tape;
    const ForwardVars vars = forward_waveform(tape, model, std::vector<double>(2205, 0.0));
    for (const double v : tape.value(vars.h).data) CHECK(v == 0.0);
    for (const double v : tape.value(vars.z).data) CHECK(v == 0.0);
}

TEST_CASE("too-short input reports the failing layer") {
    EncoderModel model = init_encoder(EncoderConfig::default_config(), 5);
    ad::Tape tape;
    CHECK_THROWS_AS(forward_waveform(tape, model, std::vector<double>(20, 1.0)), ShapeError);
}

TEST_CASE("patch embedding matches a direct triple-loop oracle") {
    EncoderConfig cfg = EncoderConfig::default_config(InputKind::patches);
    cfg.patch_embed_dim = 12;  // small for an exact oracle
    EncoderModel model = init_encoder(cfg, 9);

    Rng rng(17);
    std::vector<MelPatch> patches(3);
    for (auto& p : patches) {
        p.values.resize(kMelBands * kPatchFrames);
        for (double& v : p.values) v = rng.uniform(-1.0, 1.0);
    }

    ad::Tape tape;
    const auto out = tape.value(embed_patches(tape, model, patches));
    REQUIRE(out.data.size() == 12);

    for (std::size_t j = 0; j < 12; ++j) {
        double acc = 0.0;
        for (std::size_t t = 0; t < kPatchFrames; ++t) {
            double inner = 0.0;
            for (std::size_t m = 0; m < kMelBands; ++m) {
                double psum = 0.0;
                for (const auto& p : patches) psum += p.at(m, t);
                inner += psum * model.patch_embed.value.at2(m, j);
            }
            acc += model.patch_mix.value.data[t] * inner;
        }
        acc = std::max(acc, 0.0);
        CHECK(out.data[j] == doctest::Approx(acc).epsilon(1e-9));
    }
}

TEST_CASE("patch embedding with all-ones weights sums every cell") {
    EncoderConfig cfg = EncoderConfig::default_config(InputKind::patches);
    cfg.patch_embed_dim = 4;
    EncoderModel model = init_encoder(cfg, 1);
    std::fill(model.patch_embed.value.data.begin(), model.patch_embed.value.data.end(), 1.0);
    std::fill(model.patch_mix.value.data.begin(), model.patch_mix.value.data.end(), 1.0);
    ad::Tape tape;
    const auto out = tape.value(embed_patches(tape, model, {const_patch(1.0)}));
    for (const double v : out.data) CHECK(v == doctest::Approx(128.0 * 150.0).epsilon(1e-12));
}

TEST_CASE("patch embedding is invariant to patch order") {
    EncoderModel model = init_encoder(EncoderConfig::default_config(InputKind::patches), 23);
    Rng rng(29);
    std::vector<MelPatch> patches(4);
    for (auto& p : patches) {
        p.values.resize(kMelBands * kPatchFrames);
        for (double& v : p.values) v = rng.uniform(-1.0, 1.0);
    }
    const auto h1 = represent_patches(model, patches);
    std::swap(patches[0], patches[3]);
    std::swap(patches[1], patches[2]);
    const auto h2 = represent_patches(model, patches);
    REQUIRE(h1.size() == h2.size());
    for (std::size_t i = 0; i < h1.size(); ++i) CHECK(h1[i] == doctest::Approx(h2[i]).epsilon(1e-12));
}

TEST_CASE("patch default stack ends with an adaptive factor of 5") {
    // 768 -> conv1 k1 /4 -> 192 -> conv k9 -> 184 /4 -> 46 -> conv k15 -> 32
    // /4 -> 8 -> conv k4 -> 5 -> adaptive pool over all 5.
    EncoderModel model = init_encoder(EncoderConfig::default_config(InputKind::patches), 2);
    const auto h = represent_patches(model, {const_patch(0.3)});
    CHECK(h.size() == 16);
}

TEST_CASE("depth variants run forward and backward on a 0.1 s segment") {
    for (const std::size_t depth : {std::size_t{4}, std::size_t{6}, std::size_t{8}, std::size_t{10}}) {
        CAPTURE(depth);
        const EncoderConfig cfg = EncoderConfig::depth_config(depth);
        cfg.validate();
        CHECK(cfg.layers.size() == depth);
        EncoderModel model = init_encoder(cfg, 13);
        ad::Tape tape;
        const ForwardVars vars = forward_waveform(tape, model, ramp(2205, 0.5));
        CHECK(tape.value(vars.h).data.size() == cfg.representation_dim());
        CHECK(tape.value(vars.z).data.size() == 128);
        tape.backward(tape.dot(vars.z, vars.z));
        bool any_nonzero = false;
        for (const double g : model.conv_kernels[0].grad.data) any_nonzero |= (g != 0.0);
        CHECK(any_nonzero);
    }
    CHECK_THROWS_AS(EncoderConfig::depth_config(7), ConfigError);
}

TEST_CASE("end-to-end gradients of a small encoder match finite differences") {
    EncoderConfig cfg;
    cfg.layers = {{3, 3, 2}, {2, 2, 0}};
    cfg.projection = {5, 4};
    cfg.dropout_p = 0.0;
    EncoderModel model = init_encoder(cfg, 77);
    const std::vector<double> segment = ramp(24, 0.8);

    auto forward = [&]() {
        ad::Tape t;
        const ForwardVars v = forward_waveform(t, model, segment);
        return t.value(t.dot(v.z, v.z)).data[0];
    };
    auto backward = [&]() {
        model.zero_grads();
        ad::Tape t;
        const ForwardVars v = forward_waveform(t, model, segment);
        t.backward(t.dot(v.z, v.z));
    };
    CHECK(gradient_check(model.parameters(), forward, backward, 1e-5) < 1e-4);
}

TEST_CASE("dropout makes training-mode forward seed-dependent but reproducible") {
    EncoderModel model = init_encoder(EncoderConfig::default_config(), 4);
    const std::vector<double> segment = ramp(2205, 0.4);
    ForwardOptions opt;
    opt.training = true;
    opt.dropout_seed = 100;
    ad::Tape t1, t2, t3;
    const auto z1 = t1.value(forward_waveform(t1, model, segment, opt).z);
    const auto z2 = t2.value(forward_waveform(t2, model, segment, opt).z);
    opt.dropout_seed = 101;
    const auto z3 = t3.value(forward_waveform(t3, model, segment, opt).z);
    CHECK(z1.data == z2.data);
    CHECK(z1.data != z3.data);
}

TEST_CASE("checkpoint round trip preserves weights, config and optimizer") {
    TempDir dir("ckpt");
    EncoderConfig cfg = EncoderConfig::default_config(InputKind::patches);
    cfg.layers = {{6, 1, 8}, {5, 5, 4}, {4, 3, 0}};
    cfg.projection = {10, 7};
    EncoderModel model = init_encoder(cfg, 55);

    // Give the optimizer some state to carry.
    ad::AdamState opt;
    opt.set_steps_taken(12);
    for (auto* p : model.parameters()) {
        ad::AdamState::Moments mo;
        mo.m = Tensor::zeros(p->value.shape);
        mo.v = Tensor::zeros(p->value.shape);
        mo.m.data[0] = 0.25;
        mo.v.data[0] = 0.5;
        opt.moments()[p->name] = mo;
    }

    const std::string path = dir.str("model.ckpt");
    save_checkpoint(path, model, &opt);
    LoadedCheckpoint loaded = load_checkpoint(path);

    CHECK(loaded.model.config.layers.size() == 3);
    CHECK(loaded.model.config.input_kind == InputKind::patches);
    CHECK(loaded.model.config.projection.hidden == 10);
    auto orig_params = model.parameters();
    auto new_params = loaded.model.parameters();
    REQUIRE(orig_params.size() == new_params.size());
    for (std::size_t i = 0; i < orig_params.size(); ++i) {
        CHECK(new_params[i]->name == orig_params[i]->name);
        CHECK(new_params[i]->value.data == orig_params[i]->value.data);
    }
    CHECK(loaded.has_optimizer);
    CHECK(loaded.optimizer.steps_taken() == 12);
    CHECK(loaded.optimizer.moments().at(orig_params[0]->name).m.data[0] == 0.25);

    // Same representation after reload.
    std::vector<MelPatch> patches = {const_patch(0.2)};
    CHECK(represent_patches(model, patches) == represent_patches(loaded.model, patches));
}

TEST_CASE("checkpoint loader rejects corrupt files") {
    TempDir dir("ckpt");
    std::ofstream(dir.str("bad.ckpt"), std::ios::binary) << "WRONGMAGICxxxxxxxx";
    CHECK_THROWS_AS(load_checkpoint(dir.str("bad.ckpt")), FormatError);
    CHECK_THROWS_AS(load_checkpoint(dir.str("missing.ckpt")), IoError);
}
