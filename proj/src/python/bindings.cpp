#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <string>
#include <vector>

#include "sscl/audio.hpp"
#include "sscl/cca.hpp"
#include "sscl/encoder.hpp"
#include "sscl/errors.hpp"
#include "sscl/mel.hpp"
#include "sscl/probe.hpp"
#include "sscl/train.hpp"

namespace py = pybind11;
using namespace sscl;

namespace {

std::vector<double> to_vector(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 1) throw ShapeError("expected a 1-D array");
    return {a.data(), a.data() + a.shape(0)};
}

py::array_t<double> to_array(const std::vector<double>& v) {
    py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

py::array_t<double> to_array2d(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
    py::array_t<double> out({static_cast<py::ssize_t>(rows), static_cast<py::ssize_t>(cols)});
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

FeatureMatrix matrix_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
                                FeatureBranch branch) {
    if (a.ndim() != 2) throw ShapeError("expected a 2-D array");
    FeatureMatrix m;
    m.rows = static_cast<std::size_t>(a.shape(0));
    m.cols = static_cast<std::size_t>(a.shape(1));
    m.values.assign(a.data(), a.data() + m.rows * m.cols);
    m.branch = branch;
    for (std::size_t i = 0; i < m.rows; ++i) m.sample_ids.push_back(std::to_string(i));
    return m;
}

// Owns the model plus the filterbank needed for the spectrogram branch.
struct PyEncoder {
    EncoderModel model;

    explicit PyEncoder(EncoderModel m) : model(std::move(m)) {}

    std::string config_json() const { return model.config.to_json(); }

    py::array_t<double> represent_waveform(
        const py::array_t<double, py::array::c_style | py::array::forcecast>& samples) {
        const std::vector<double> segment = to_vector(samples);
        return to_array(sscl::represent_waveform(model, normalize_segment(segment)));
    }

    // Mel + patch sampling + encoding in one call; `samples` is one segment at
    // 22050 Hz.
    py::array_t<double> represent_spectrogram(
        const py::array_t<double, py::array::c_style | py::array::forcecast>& samples,
        std::size_t n_patches, std::uint64_t seed) {
        AudioClip clip;
        clip.sample_rate = kDefaultSampleRate;
        clip.samples = to_vector(samples);
        const MelFilterbank fb = build_filterbank(kDefaultSampleRate, 1024, model.config.mel_bands,
                                                  0.0, kDefaultSampleRate / 2.0);
        const MelSpectrogram spec = mel_spectrogram(clip, fb);
        const auto patches = sample_patches(spec, n_patches, seed);
        return to_array(sscl::represent_patches(model, patches));
    }

    void save(const std::string& path) const { save_checkpoint(path, model); }

private:
    static std::vector<double> normalize_segment(const std::vector<double>& segment) {
        AudioClip clip;
        clip.sample_rate = kDefaultSampleRate;
        clip.samples = segment;
        return normalize(clip).clip.samples;
    }
};

struct PyFusion {
    CcaFusionModel model;

    py::array_t<double> correlations() const { return to_array(model.correlations); }

    py::array_t<double> transform(
        const py::array_t<double, py::array::c_style | py::array::forcecast>& r,
        const py::array_t<double, py::array::c_style | py::array::forcecast>& z) const {
        const FeatureMatrix fused = fuse(model, matrix_from_array(r, FeatureBranch::waveform),
                                         matrix_from_array(z, FeatureBranch::spectrogram));
        return to_array2d(fused.values, fused.rows, fused.cols);
    }
};

struct PyProbe {
    ProbeModel model;

    py::array_t<int> predict(
        const py::array_t<double, py::array::c_style | py::array::forcecast>& x) const {
        const auto preds = sscl::predict(model, matrix_from_array(x, FeatureBranch::unknown));
        py::array_t<int> out(static_cast<py::ssize_t>(preds.size()));
        std::copy(preds.begin(), preds.end(), out.mutable_data());
        return out;
    }

    py::dict evaluate(const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
                      const std::vector<int>& labels) const {
        const EvalReport report = sscl::evaluate(model, matrix_from_array(x, FeatureBranch::unknown), labels);
        py::dict out;
        out["accuracy"] = report.accuracy;
        out["per_class_accuracy"] = report.per_class_accuracy;
        out["total"] = report.total;
        out["confusion"] = report.confusion;
        return out;
    }
};

} // namespace

PYBIND11_MODULE(_sscl, m) {
    m.doc() = "Self-supervised environmental sound representations: C++ core bindings";

    py::register_exception<Error>(m, "SsclError");

    m.def(
        "load_wav",
        [](const std::string& path) {
            const AudioClip clip = load_wav(path);
            return py::make_tuple(to_array(clip.samples), clip.sample_rate);
        },
        py::arg("path"), "Decode a WAV file to (samples, sample_rate).");

    m.def(
        "write_wav",
        [](const std::string& path, const py::array_t<double, py::array::c_style | py::array::forcecast>& samples,
           std::uint32_t sample_rate) {
            AudioClip clip;
            clip.sample_rate = sample_rate;
            clip.samples = to_vector(samples);
            write_wav(path, clip);
        },
        py::arg("path"), py::arg("samples"), py::arg("sample_rate"));

    m.def(
        "resample",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& samples,
           std::uint32_t sample_rate, std::uint32_t target_rate) {
            AudioClip clip;
            clip.sample_rate = sample_rate;
            clip.samples = to_vector(samples);
            return to_array(resample(clip, target_rate).samples);
        },
        py::arg("samples"), py::arg("sample_rate"), py::arg("target_rate"));

    m.def(
        "normalize",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& samples) {
            AudioClip clip;
            clip.sample_rate = kDefaultSampleRate;
            clip.samples = to_vector(samples);
            return to_array(normalize(clip).clip.samples);
        },
        py::arg("samples"), "Zero-mean, unit-variance normalization (constant input maps to zeros).");

    m.def(
        "mel_spectrogram",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& samples,
           std::uint32_t sample_rate) {
            AudioClip clip;
            clip.sample_rate = sample_rate;
            clip.samples = to_vector(samples);
            const MelFilterbank fb =
                build_filterbank(sample_rate, 1024, kMelBands, 0.0, sample_rate / 2.0);
            const MelSpectrogram spec = mel_spectrogram(clip, fb);
            return to_array2d(spec.values, spec.n_mels, spec.frames);
        },
        py::arg("samples"), py::arg("sample_rate") = kDefaultSampleRate,
        "Log-Mel spectrogram (128 bands, 25 ms Hamming window, 10 ms stride).");

    m.def(
        "ntxent",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& views, double tau) {
            if (views.ndim() != 2) throw ShapeError("views must be a 2-D array of row vectors");
            ad::Tape tape;
            std::vector<ad::Tape::Var> vars;
            const auto rows = static_cast<std::size_t>(views.shape(0));
            const auto cols = static_cast<std::size_t>(views.shape(1));
            for (std::size_t i = 0; i < rows; ++i) {
                vars.push_back(tape.constant(
                    std::vector<double>(views.data() + i * cols, views.data() + (i + 1) * cols)));
            }
            return tape.value(ntxent_loss(tape, vars, tau)).data[0];
        },
        py::arg("views"), py::arg("tau") = 0.1,
        "NT-Xent loss of 2M stacked views (rows 2i, 2i+1 are sibling segments).");

    py::class_<PyEncoder>(m, "Encoder")
        .def(py::init([](const std::string& config_json, std::uint64_t seed) {
                 return PyEncoder(init_encoder(EncoderConfig::from_json(config_json), seed));
             }),
             py::arg("config_json"), py::arg("seed") = 0)
        .def_static("default_config",
                    [](const std::string& kind) {
                        return EncoderConfig::default_config(input_kind_from_string(kind)).to_json();
                    },
                    py::arg("kind") = "waveform")
        .def_static("load",
                    [](const std::string& path) { return PyEncoder(load_checkpoint(path).model); },
                    py::arg("path"))
        .def("save", &PyEncoder::save, py::arg("path"))
        .def_property_readonly("config_json", &PyEncoder::config_json)
        .def("represent_waveform", &PyEncoder::represent_waveform, py::arg("samples"))
        .def("represent_spectrogram", &PyEncoder::represent_spectrogram, py::arg("samples"),
             py::arg("n_patches") = 4, py::arg("seed") = 0);

    m.def(
        "pretrain",
        [](const std::string& dataset_root, const std::string& manifest_format,
           const std::string& encoder_config_json, std::size_t batch_clips, double temperature,
           std::size_t steps, double lr, bool balanced, std::uint64_t seed,
           std::size_t patches_per_segment) {
            const DatasetManifest manifest =
                load_manifest(dataset_root, manifest_format_from_string(manifest_format));
            const ClipStore store(manifest);
            EncoderConfig cfg = EncoderConfig::from_json(encoder_config_json);
            TrainConfig tc;
            tc.batch_clips = batch_clips;
            tc.temperature = temperature;
            tc.steps = steps;
            tc.lr = lr;
            tc.balanced = balanced;
            tc.seed = seed;
            tc.patches_per_segment = patches_per_segment;
            PretrainResult result = pretrain(store, cfg, tc);
            return py::make_tuple(PyEncoder(std::move(result.model)), to_array(result.loss_history));
        },
        py::arg("dataset_root"), py::arg("manifest_format") = "flat_dirs",
        py::arg("encoder_config_json") = EncoderConfig::default_config().to_json(),
        py::arg("batch_clips") = 64, py::arg("temperature") = 0.1, py::arg("steps") = 400,
        py::arg("lr") = 0.001, py::arg("balanced") = false, py::arg("seed") = 0,
        py::arg("patches_per_segment") = 4,
        "Contrastive pretraining over a dataset directory; returns (encoder, loss_history).");

    m.def(
        "extract_features",
        [](const std::string& dataset_root, const std::string& manifest_format, PyEncoder& encoder,
           std::uint64_t seed, std::size_t patches_per_segment) {
            const DatasetManifest manifest =
                load_manifest(dataset_root, manifest_format_from_string(manifest_format));
            const ClipStore store(manifest);
            const FeatureMatrix features =
                extract_features(store, encoder.model, seed, patches_per_segment);
            std::vector<int> labels;
            for (const auto& entry : manifest.entries) labels.push_back(manifest.class_index(entry.label));
            return py::make_tuple(to_array2d(features.values, features.rows, features.cols), labels,
                                  manifest.class_names);
        },
        py::arg("dataset_root"), py::arg("manifest_format"), py::arg("encoder"), py::arg("seed") = 0,
        py::arg("patches_per_segment") = 4,
        "Per-clip representations h; returns (features, labels, class_names).");

    py::class_<PyFusion>(m, "Fusion")
        .def_property_readonly("correlations", &PyFusion::correlations)
        .def_property_readonly("d", [](const PyFusion& f) { return f.model.d; })
        .def_property_readonly("ridge", [](const PyFusion& f) { return f.model.ridge; })
        .def("transform", &PyFusion::transform, py::arg("r"), py::arg("z"));

    m.def(
        "fit_cca",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& r,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& z, double ridge,
           std::size_t d) {
            PyFusion out;
            out.model = fit_cca(matrix_from_array(r, FeatureBranch::waveform),
                                matrix_from_array(z, FeatureBranch::spectrogram), ridge, d);
            return out;
        },
        py::arg("r"), py::arg("z"), py::arg("ridge") = -1.0, py::arg("d") = 0,
        "Canonical correlation analysis between two aligned feature matrices.");

    py::class_<PyProbe>(m, "Probe")
        .def("predict", &PyProbe::predict, py::arg("features"))
        .def("evaluate", &PyProbe::evaluate, py::arg("features"), py::arg("labels"));

    m.def(
        "train_probe",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& features,
           const std::vector<int>& labels, std::size_t num_classes, std::size_t epochs, double lr) {
            if (num_classes == 0) {
                int max_label = -1;
                for (const int l : labels) max_label = std::max(max_label, l);
                num_classes = static_cast<std::size_t>(max_label + 1);
            }
            ProbeTrainConfig cfg;
            cfg.epochs = epochs;
            cfg.lr = lr;
            PyProbe out;
            out.model = train_probe(matrix_from_array(features, FeatureBranch::unknown), labels,
                                    num_classes, cfg);
            return out;
        },
        py::arg("features"), py::arg("labels"), py::arg("num_classes") = 0, py::arg("epochs") = 100,
        py::arg("lr") = 0.01, "Linear probe (affine + softmax) on frozen features.");
}
