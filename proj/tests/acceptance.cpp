// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failures.  Everything runs on synthetic data in a scratch directory.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <nlohmann/json.hpp>

#include "sscl/audio.hpp"
#include "sscl/cca.hpp"
#include "sscl/cli.hpp"
#include "sscl/encoder.hpp"
#include "sscl/errors.hpp"
#include "sscl/mel.hpp"
#include "sscl/probe.hpp"
#include "sscl/train.hpp"
#include "test_util.hpp"

using namespace sscl;
using namespace sscl::testutil;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int criterion, const std::string& name, bool ok, const std::string& detail) {
    std::printf("%s  criterion %2d  %s  (%s)\n", ok ? "PASS" : "FAIL", criterion, name.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

double mean_of(const std::vector<double>& v, std::size_t begin, std::size_t end) {
    double acc = 0.0;
    for (std::size_t i = begin; i < end; ++i) acc += v[i];
    return acc / static_cast<double>(end - begin);
}

// ---------------------------------------------------------------------------
// Criterion 1: finite-difference gradient checks.

void criterion_gradients() {
    const auto t0 = Clock::now();
    double worst_op = 0.0;

    // Per-op checks on random inputs.
    {
        Rng rng(501);
        auto rand_tensor = [&](std::vector<std::size_t> shape) {
            Tensor t = Tensor::zeros(shape);
            for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
            return t;
        };

        // conv1d + subsample + relu + dense chain.
        ad::Parameter k("k", rand_tensor({3, 2, 5}));
        ad::Parameter b("b", rand_tensor({3}));
        ad::Parameter w("w", rand_tensor({4, 3}));
        ad::Parameter wb("wb", rand_tensor({4}));
        const Tensor input = rand_tensor({2, 20});
        auto fwd1 = [&]() {
            ad::Tape t;
            auto c = t.relu(t.conv1d(t.constant(input), t.param(k), t.param(b)));
            auto pooled = t.reshape(t.subsample(c, 16), {3});
            auto out = t.dense(pooled, t.param(w), t.param(wb));
            return t.value(t.dot(out, out)).data[0];
        };
        auto bwd1 = [&]() {
            for (auto* p : {&k, &b, &w, &wb}) p->zero_grad();
            ad::Tape t;
            auto c = t.relu(t.conv1d(t.constant(input), t.param(k), t.param(b)));
            auto pooled = t.reshape(t.subsample(c, 16), {3});
            auto out = t.dense(pooled, t.param(w), t.param(wb));
            t.backward(t.dot(out, out));
        };
        worst_op = std::max(worst_op, gradient_check({&k, &b, &w, &wb}, fwd1, bwd1, 1e-5));

        // matmul + row_normalize + gram + ntxent + softmax paths.
        ad::Parameter m("m", rand_tensor({6, 4}));
        for (double& v : m.value.data) v += 1.5;
        ad::Parameter pw("pw", rand_tensor({3, 4}));
        ad::Parameter pb("pb", rand_tensor({3}));
        const std::vector<int> labels = {0, 1, 2, 1, 0, 2};
        auto fwd2 = [&]() {
            ad::Tape t;
            const auto mm = t.param(m);
            const auto nt = t.ntxent_from_sim(t.gram(t.row_normalize(mm)), 0.4);
            const auto xent = t.softmax_xent(t.affine_rows(mm, t.param(pw), t.param(pb)), labels);
            return t.value(t.add(nt, xent)).data[0];
        };
        auto bwd2 = [&]() {
            for (auto* p : {&m, &pw, &pb}) p->zero_grad();
            ad::Tape t;
            const auto mm = t.param(m);
            const auto nt = t.ntxent_from_sim(t.gram(t.row_normalize(mm)), 0.4);
            const auto xent = t.softmax_xent(t.affine_rows(mm, t.param(pw), t.param(pb)), labels);
            t.backward(t.add(nt, xent));
        };
        worst_op = std::max(worst_op, gradient_check({&m, &pw, &pb}, fwd2, bwd2, 1e-5));
    }

    // End to end: small encoder, two clip pairs, NT-Xent on the projections.
    double worst_e2e = 0.0;
    {
        EncoderConfig cfg;
        cfg.layers = {{3, 3, 2}, {2, 2, 0}};
        cfg.projection = {5, 4};
        cfg.dropout_p = 0.0;
        EncoderModel model = init_encoder(cfg, 88);
        std::vector<std::vector<double>> segments(4, std::vector<double>(20));
        Rng rng(502);
        for (auto& s : segments)
            for (double& v : s) v = rng.uniform(-1.0, 1.0);

        auto fwd = [&]() {
            ad::Tape t;
            std::vector<ad::Tape::Var> zs;
            for (const auto& s : segments) zs.push_back(forward_waveform(t, model, s).z);
            return t.value(ntxent_loss(t, zs, 0.5)).data[0];
        };
        auto bwd = [&]() {
            model.zero_grads();
            ad::Tape t;
            std::vector<ad::Tape::Var> zs;
            for (const auto& s : segments) zs.push_back(forward_waveform(t, model, s).z);
            t.backward(ntxent_loss(t, zs, 0.5));
        };
        worst_e2e = gradient_check(model.parameters(), fwd, bwd, 1e-5);
    }

    const double secs = seconds_since(t0);
    std::ostringstream detail;
    detail << "op worst rel err " << worst_op << " <= 1e-4, end-to-end " << worst_e2e
           << " <= 1e-3, " << secs << " s < 60 s";
    report(1, "gradient correctness (finite differences)",
           worst_op <= 1e-4 && worst_e2e <= 1e-3 && secs < 60.0, detail.str());
}

// ---------------------------------------------------------------------------
// Criterion 2: NT-Xent vs a naive double-loop reference.

double ntxent_reference(const std::vector<std::vector<double>>& views, double tau) {
    const std::size_t n = views.size();
    std::vector<std::vector<double>> unit(n);
    for (std::size_t i = 0; i < n; ++i) {
        double norm = 0.0;
        for (const double v : views[i]) norm += v * v;
        norm = std::sqrt(norm);
        unit[i] = views[i];
        for (double& v : unit[i]) v /= norm;
    }
    double total = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
        const std::size_t sib = (a % 2 == 0) ? a + 1 : a - 1;
        double denom = 0.0, num = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            if (k == a) continue;
            double s = 0.0;
            for (std::size_t j = 0; j < unit[a].size(); ++j) s += unit[a][j] * unit[k][j];
            const double e = std::exp(s / tau);
            denom += e;
            if (k == sib) num = e;
        }
        total += -std::log(num / denom);
    }
    return total / static_cast<double>(n);
}

double ntxent_value(const std::vector<std::vector<double>>& views, double tau) {
    ad::Tape tape;
    std::vector<ad::Tape::Var> vars;
    for (const auto& v : views) vars.push_back(tape.constant(v));
    return tape.value(ntxent_loss(tape, vars, tau)).data[0];
}

void criterion_loss_oracle() {
    Rng rng(601);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t m = 2 + rng.below(7);  // M <= 8
        const std::size_t d = 2 + rng.below(10);
        const double tau = 0.05 + 0.95 * rng.uniform();
        std::vector<std::vector<double>> views(2 * m, std::vector<double>(d));
        for (auto& v : views) {
            double norm = 0.0;
            do {
                norm = 0.0;
                for (double& x : v) {
                    x = rng.uniform(-1.0, 1.0);
                    norm += x * x;
                }
            } while (norm < 1e-6);
        }
        worst = std::max(worst, std::abs(ntxent_value(views, tau) - ntxent_reference(views, tau)));
    }

    // Hand case: two orthogonal pairs at tau=1 -> -log(e / (e + 2)).
    const double hand = ntxent_value({{1, 0}, {1, 0}, {0, 1}, {0, 1}}, 1.0);
    const double expect = -std::log(std::exp(1.0) / (std::exp(1.0) + 2.0));
    const bool hand_ok = std::abs(hand - expect) <= 1e-12 && std::abs(hand - 0.55145) <= 1e-4;

    std::ostringstream detail;
    detail << "worst |diff| " << worst << " <= 1e-9 over 50 batches; hand case " << hand
           << " ~ 0.55145";
    report(2, "NT-Xent matches naive reference", worst <= 1e-9 && hand_ok, detail.str());
}

// ---------------------------------------------------------------------------
// Criterion 3: CCA spectrum vs whitened cross-covariance SVD.

std::vector<double> cca_reference_spectrum(const FeatureMatrix& r, const FeatureMatrix& z,
                                           double ridge) {
    const Covariances cov = covariances(r, z, ridge);
    using Mat = Eigen::MatrixXd;
    auto wrap = [](const std::vector<double>& v, std::size_t rows, std::size_t cols) {
        Mat m(rows, cols);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j)
                m(static_cast<long>(i), static_cast<long>(j)) = v[i * cols + j];
        return m;
    };
    const Mat srr = wrap(cov.s_rr, r.cols, r.cols);
    const Mat szz = wrap(cov.s_zz, z.cols, z.cols);
    const Mat srz = wrap(cov.s_rz, r.cols, z.cols);
    const Mat lr = srr.llt().matrixL();
    const Mat lz = szz.llt().matrixL();
    const Mat whitened = lr.inverse() * srz * lz.inverse().transpose();
    Eigen::JacobiSVD<Mat> svd(whitened);
    return {svd.singularValues().data(), svd.singularValues().data() + svd.singularValues().size()};
}

void criterion_cca_oracle() {
    Rng rng(701);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 200;
        const std::size_t dr = 2 + rng.below(7);  // dims <= 8
        const std::size_t dz = 2 + rng.below(7);
        FeatureMatrix r, z;
        r.rows = z.rows = n;
        r.cols = dr;
        z.cols = dz;
        r.values.resize(n * dr);
        for (double& v : r.values) v = rng.uniform(-1.0, 1.0);
        std::vector<double> map(dr * dz);
        for (double& v : map) v = rng.uniform(-1.0, 1.0);
        z.values.assign(n * dz, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < dz; ++j) {
                double acc = 0.6 * rng.normal();
                for (std::size_t kk = 0; kk < dr; ++kk) acc += r.at(i, kk) * map[kk * dz + j];
                z.at(i, j) = acc;
            }
        }
        for (std::size_t i = 0; i < n; ++i) r.sample_ids.push_back("s" + std::to_string(i));
        z.sample_ids = r.sample_ids;

        const double ridge = 1e-6;
        const CcaFusionModel model = fit_cca(r, z, ridge, std::min(dr, dz));
        const auto expect = cca_reference_spectrum(r, z, ridge);
        for (std::size_t i = 0; i < model.correlations.size(); ++i) {
            worst = std::max(worst, std::abs(model.correlations[i] - expect[i]));
        }
    }

    // Self correlation: Z = R -> all lambda = 1.
    Rng rng2(702);
    FeatureMatrix r;
    r.rows = 200;
    r.cols = 5;
    r.values.resize(1000);
    for (double& v : r.values) v = rng2.uniform(-1.0, 1.0);
    for (std::size_t i = 0; i < r.rows; ++i) r.sample_ids.push_back("s" + std::to_string(i));
    FeatureMatrix z = r;
    const CcaFusionModel self = fit_cca(r, z, 1e-10, 5);
    double self_worst = 0.0;
    for (const double c : self.correlations) self_worst = std::max(self_worst, std::abs(c - 1.0));

    std::ostringstream detail;
    detail << "worst spectrum diff " << worst << " <= 1e-4 over 20 datasets; self-corr off by "
           << self_worst << " <= 1e-4";
    report(3, "CCA spectrum matches whitened-SVD reference", worst <= 1e-4 && self_worst <= 1e-4,
           detail.str());
}

// ---------------------------------------------------------------------------
// Criterion 4: shape law.

void criterion_shapes() {
    const MelFilterbank fb = build_filterbank(22050, 1024, kMelBands, 0.0, 11025.0);
    const AudioClip clip = make_tone(440.0, 5.0, 22050);
    const SegmentPair pair = split_pair(clip);
    const MelSpectrogram spec = mel_spectrogram(pair.first, fb);
    const auto patches = sample_patches(spec, 3, 1);

    const bool ok = pair.first.samples.size() == 55125 && spec.n_mels == 128 && spec.frames == 248 &&
                    !patches.empty() && patches[0].values.size() == 128 * 150;
    std::ostringstream detail;
    detail << "half-clip mel " << spec.n_mels << "x" << spec.frames
           << " (want 128x248), patch cells " << patches[0].values.size() << " (want 128x150)";
    report(4, "spectrogram and patch shape law", ok, detail.str());
}

// ---------------------------------------------------------------------------
// Criterion 5: architecture conformance.

void criterion_architecture() {
    bool ok = true;
    std::ostringstream detail;

    const EncoderConfig cfg = EncoderConfig::default_config();
    ok &= cfg.layers.size() == 4;
    ok &= cfg.layers[0].kernel == 1 && cfg.layers[1].kernel == 9 && cfg.layers[2].kernel == 15 &&
          cfg.layers[3].kernel == 4;
    ok &= cfg.layers[0].channels == 64 && cfg.layers[1].channels == 64 &&
          cfg.layers[2].channels == 32 && cfg.layers[3].channels == 16;
    ok &= cfg.layers[0].subsample == 4 && cfg.layers[1].subsample == 4 &&
          cfg.layers[2].subsample == 4 && cfg.layers[3].subsample == 0;
    ok &= cfg.projection.hidden == 256 && cfg.projection.output == 128;
    ok &= cfg.dropout_p == 0.5;
    detail << "default config " << (ok ? "matches" : "differs") << "; depths";

    for (const std::size_t depth : {std::size_t{4}, std::size_t{6}, std::size_t{8}, std::size_t{10}}) {
        try {
            const EncoderConfig dc = EncoderConfig::depth_config(depth);
            dc.validate();
            EncoderModel model = init_encoder(dc, 19);
            std::vector<double> seg(2205);
            for (std::size_t i = 0; i < seg.size(); ++i) seg[i] = std::sin(0.05 * static_cast<double>(i));
            ad::Tape tape;
            const ForwardVars vars = forward_waveform(tape, model, seg);
            tape.backward(tape.dot(vars.z, vars.z));
            detail << " " << depth << ":ok";
        } catch (const std::exception& e) {
            ok = false;
            detail << " " << depth << ":FAIL(" << e.what() << ")";
        }
    }
    report(5, "architecture conformance (default + depth sweep)", ok, detail.str());
}

// ---------------------------------------------------------------------------
// Criterion 6: balanced sampler counting test.

void criterion_balanced_sampler() {
    // Class sizes mimicking the UrbanSound8K imbalance (374..1000).
    const std::vector<std::size_t> counts = {1000, 429, 1000, 1000, 1000, 1000, 374, 1000, 929, 1000};
    DatasetManifest manifest;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        manifest.class_names.push_back("class" + std::to_string(c));
        for (std::size_t i = 0; i < counts[c]; ++i) {
            ManifestEntry e;
            e.path = "c" + std::to_string(c) + "-" + std::to_string(i) + ".wav";
            e.label = manifest.class_names.back();
            manifest.entries.push_back(e);
        }
    }

    TrainConfig cfg;
    cfg.balanced = true;
    cfg.batch_clips = 64;
    cfg.steps = 200;
    cfg.seed = 17;
    const BatchPlan plan = plan_batches(manifest, cfg);

    std::size_t violations = 0;
    for (const auto& batch : plan.batches) {
        if (batch.size() != 64) ++violations;
        std::map<std::string, std::size_t> per_class;
        for (const std::size_t idx : batch) per_class[manifest.entries[idx].label]++;
        std::size_t at_quota_plus = 0;
        for (const auto& name : manifest.class_names) {
            const std::size_t n = per_class[name];
            if (n != 6 && n != 7) ++violations;
            if (n == 7) ++at_quota_plus;
        }
        // 64 = 10 * 6 + 4 leftover slots on distinct classes.
        if (at_quota_plus != 4) ++violations;
    }

    std::ostringstream detail;
    detail << "quota " << plan.per_class_quota << " (want floor(64/10)=6), violations " << violations
           << "/200 batches";
    report(6, "balanced sampler quota", plan.per_class_quota == 6 && violations == 0, detail.str());
}

// ---------------------------------------------------------------------------
// Criteria 7-9: desk-scale experiments on synthetic tones.

EncoderConfig desk_waveform_config() {
    EncoderConfig cfg = EncoderConfig::default_config();
    cfg.layers = {{8, 1, 8}, {8, 9, 4}, {8, 15, 4}, {8, 4, 0}};
    cfg.projection = {32, 16};
    // With only 32 hidden units, dropout at 0.5 would occasionally zero an
    // entire projection (a fatal degenerate view); keep desk runs clear of it.
    cfg.dropout_p = 0.2;
    return cfg;
}

EncoderConfig desk_patch_config() {
    EncoderConfig cfg = EncoderConfig::default_config(InputKind::patches);
    cfg.layers = {{8, 1, 2}, {8, 9, 2}, {8, 15, 2}, {8, 4, 0}};
    cfg.projection = {32, 16};
    cfg.dropout_p = 0.2;
    cfg.patch_embed_dim = 192;
    return cfg;
}

FeatureMatrix row_subset(const FeatureMatrix& m, const std::vector<std::size_t>& rows) {
    FeatureMatrix out;
    out.rows = rows.size();
    out.cols = m.cols;
    out.branch = m.branch;
    for (const std::size_t r : rows) {
        out.values.insert(out.values.end(), m.values.begin() + static_cast<long>(r * m.cols),
                          m.values.begin() + static_cast<long>((r + 1) * m.cols));
        out.sample_ids.push_back(m.sample_ids[r]);
    }
    return out;
}

struct SplitLabels {
    std::vector<std::size_t> train_rows, test_rows;
    std::vector<int> train_labels, test_labels;
};

// Every 4th clip per class goes to the test split.
SplitLabels stratified_split(const DatasetManifest& manifest) {
    SplitLabels out;
    std::map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        const auto& e = manifest.entries[i];
        const int label = manifest.class_index(e.label);
        if (seen[e.label]++ % 4 == 3) {
            out.test_rows.push_back(i);
            out.test_labels.push_back(label);
        } else {
            out.train_rows.push_back(i);
            out.train_labels.push_back(label);
        }
    }
    return out;
}

double probe_accuracy(const FeatureMatrix& features, const SplitLabels& split,
                      std::vector<double>* per_class = nullptr) {
    const FeatureMatrix train = row_subset(features, split.train_rows);
    const FeatureMatrix test = row_subset(features, split.test_rows);
    const int classes = 1 + *std::max_element(split.train_labels.begin(), split.train_labels.end());
    ProbeTrainConfig cfg;
    cfg.epochs = 1000;  // enough for the softmax probe to fit rare classes too
    cfg.lr = 0.05;
    const ProbeModel probe = train_probe(train, split.train_labels, static_cast<std::size_t>(classes), cfg);
    const EvalReport report = evaluate(probe, test, split.test_labels);
    if (per_class) *per_class = report.per_class_accuracy;
    return report.accuracy;
}

struct DeskRun {
    std::vector<double> loss_wf, loss_mel;
    double acc_wf = 0.0, acc_mel = 0.0, acc_fused = 0.0;
};

DeskRun run_desk_experiment(const ClipStore& store, const SplitLabels& split, std::uint64_t seed) {
    DeskRun out;
    TrainConfig tc;
    tc.batch_clips = 16;
    tc.steps = 200;
    tc.seed = seed;
    tc.patches_per_segment = 2;

    PretrainResult wf = pretrain(store, desk_waveform_config(), tc);
    out.loss_wf = wf.loss_history;
    PretrainResult mel = pretrain(store, desk_patch_config(), tc);
    out.loss_mel = mel.loss_history;

    FeatureMatrix fr = extract_features(store, wf.model, seed, 2);
    FeatureMatrix fz = extract_features(store, mel.model, seed, 2);
    out.acc_wf = probe_accuracy(fr, split);
    out.acc_mel = probe_accuracy(fz, split);

    // Fit fusion on the training rows only, then transform everything.
    const CcaFusionModel cca =
        fit_cca(row_subset(fr, split.train_rows), row_subset(fz, split.train_rows));
    const FeatureMatrix fused = fuse(cca, fr, fz);
    out.acc_fused = probe_accuracy(fused, split);
    return out;
}

void criteria_desk_scale() {
    TempDir dir("desk");
    const DatasetManifest manifest = write_tone_dataset(
        dir.path(), {440.0, 880.0, 1320.0, 1760.0}, {100, 100, 100, 100}, 1.0, 97, 0.1);
    const ClipStore store(manifest);
    const SplitLabels split = stratified_split(manifest);

    // Criterion 7 uses the first seed and is timed on its own.
    const auto t0 = Clock::now();
    const DeskRun first = run_desk_experiment(store, split, 1);
    const double secs7 = seconds_since(t0);

    const double wf_head = mean_of(first.loss_wf, 0, 20);
    const double wf_tail = mean_of(first.loss_wf, 180, 200);
    const double mel_head = mean_of(first.loss_mel, 0, 20);
    const double mel_tail = mean_of(first.loss_mel, 180, 200);
    const bool loss_ok = wf_tail < wf_head && mel_tail < mel_head;
    const bool acc_ok = first.acc_wf >= 0.90 && first.acc_mel >= 0.90;
    {
        std::ostringstream detail;
        detail << "loss wf " << wf_head << "->" << wf_tail << ", mel " << mel_head << "->" << mel_tail
               << "; probe wf " << first.acc_wf << ", mel " << first.acc_mel << " >= 0.90; " << secs7
               << " s < 600 s";
        report(7, "desk-scale learning signal", loss_ok && acc_ok && secs7 < 600.0, detail.str());
    }

    // Criterion 8: fusion keeps up with the best branch across 3 seeds.
    std::vector<DeskRun> runs = {first};
    runs.push_back(run_desk_experiment(store, split, 2));
    runs.push_back(run_desk_experiment(store, split, 3));
    bool fusion_ok = true;
    std::ostringstream fusion_detail;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const double best = std::max(runs[i].acc_wf, runs[i].acc_mel);
        fusion_ok &= runs[i].acc_fused >= best - 0.02;
        fusion_detail << (i ? "; " : "") << "seed " << i + 1 << ": fused " << runs[i].acc_fused
                      << " vs max(" << runs[i].acc_wf << ", " << runs[i].acc_mel << ")";
    }
    report(8, "fusion within 2pp of best branch (3 seeds)", fusion_ok, fusion_detail.str());

    // Criterion 9: balanced pretraining does not hurt the minority class.
    TempDir imb_dir("desk-imb");
    const DatasetManifest imb_manifest = write_tone_dataset(
        imb_dir.path(), {440.0, 880.0, 1320.0, 1760.0}, {75, 75, 75, 15}, 1.0, 98, 0.1);
    const ClipStore imb_store(imb_manifest);
    const SplitLabels imb_split = stratified_split(imb_manifest);

    bool balance_ok = true;
    std::ostringstream balance_detail;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        TrainConfig tc;
        tc.batch_clips = 16;
        tc.steps = 120;
        tc.seed = seed;
        tc.balanced = false;
        PretrainResult plain = pretrain(imb_store, desk_waveform_config(), tc);
        tc.balanced = true;
        PretrainResult balanced = pretrain(imb_store, desk_waveform_config(), tc);

        FeatureMatrix f_plain = extract_features(imb_store, plain.model, seed);
        FeatureMatrix f_bal = extract_features(imb_store, balanced.model, seed);
        std::vector<double> pc_plain, pc_bal;
        probe_accuracy(f_plain, imb_split, &pc_plain);
        probe_accuracy(f_bal, imb_split, &pc_bal);
        const double minority_plain = pc_plain.back();  // class 3 is the rare one
        const double minority_bal = pc_bal.back();
        balance_ok &= minority_bal >= minority_plain;
        balance_detail << (seed > 1 ? "; " : "") << "seed " << seed << ": minority " << minority_bal
                       << " (balanced) vs " << minority_plain << " (plain)";
    }
    report(9, "balanced pretraining preserves minority accuracy (3 seeds)", balance_ok,
           balance_detail.str());
}

// ---------------------------------------------------------------------------
// Criterion 10: byte-level determinism of the CLI pipeline.

void criterion_determinism() {
    TempDir dir("determinism");
    const auto data_root = dir.path() / "data";
    write_tone_dataset(data_root, {350.0, 1050.0}, {3, 3}, 0.5, 12);

    nlohmann::json cfg_json = {
        {"dataset", {{"root", data_root.string()}, {"format", "flat_dirs"}}},
        {"encoder",
         {{"layers",
           {{{"channels", 4}, {"kernel", 1}, {"subsample", 8}},
            {{"channels", 4}, {"kernel", 5}, {"subsample", 4}},
            {{"channels", 4}, {"kernel", 3}, {"subsample", 0}}}},
          {"projection", {{"hidden", 16}, {"output", 6}}},
          {"dropout_p", 0.1}}},
        {"train", {{"batch_clips", 4}, {"steps", 5}, {"temperature", 0.2}}},
        {"seed", 41},
    };

    for (const char* run : {"a", "b"}) {
        cfg_json["output_dir"] = dir.str(run);
        const cli::RunConfig config = cli::RunConfig::from_json_text(cfg_json.dump());
        const auto out = cli::cmd_pretrain(config, InputKind::waveform);
        cli::cmd_extract(out.checkpoint_path, data_root.string(), ManifestFormat::flat_dirs,
                         InputKind::waveform, dir.str(std::string(run) + ".mat"), 9);
    }
    const bool loss_same = slurp(dir.str("a/loss.csv")) == slurp(dir.str("b/loss.csv"));
    const bool mat_same = slurp(dir.str("a.mat")) == slurp(dir.str("b.mat"));
    std::ostringstream detail;
    detail << "loss.csv byte-identical: " << (loss_same ? "yes" : "no")
           << ", feature matrix byte-identical: " << (mat_same ? "yes" : "no");
    report(10, "seeded runs reproduce artifacts byte-identically", loss_same && mat_same, detail.str());
}

} // namespace

int main() {
    try {
        criterion_gradients();
        criterion_loss_oracle();
        criterion_cca_oracle();
        criterion_shapes();
        criterion_architecture();
        criterion_balanced_sampler();
        criteria_desk_scale();
        criterion_determinism();
    } catch (const std::exception& e) {
        std::printf("FAIL  suite aborted: %s\n", e.what());
        return 99;
    }
    std::printf("%d criterion(s) failed\n", failures);
    return failures;
}
