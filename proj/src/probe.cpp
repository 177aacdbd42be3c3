#include "sscl/probe.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sscl/autodiff.hpp"
#include "sscl/errors.hpp"

namespace sscl {

ProbeModel train_probe(const FeatureMatrix& features, const std::vector<int>& labels,
                       std::size_t num_classes, const ProbeTrainConfig& config) {
    if (features.rows == 0 || features.cols == 0) throw DegenerateInputError("empty feature matrix");
    if (labels.size() != features.rows) throw ShapeError("label count does not match feature rows");
    for (const double v : features.values) {
        if (!std::isfinite(v)) throw DegenerateInputError("non-finite feature value");
    }
    std::set<int> seen;
    for (const int l : labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= num_classes) {
            throw ParameterError("label " + std::to_string(l) + " out of range [0, " +
                                 std::to_string(num_classes) + ")");
        }
        seen.insert(l);
    }

    ProbeModel probe;
    probe.weight = Tensor::zeros({num_classes, features.cols});
    probe.bias = Tensor::zeros({num_classes});
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (!seen.count(static_cast<int>(c))) {
            probe.warnings.push_back("class " + std::to_string(c) + " absent from training labels");
        }
    }

    ad::Parameter weight("probe.w", probe.weight);
    ad::Parameter bias("probe.b", probe.bias);
    const Tensor x{{features.rows, features.cols}, features.values};

    ad::AdamState adam;
    ad::AdamConfig adam_config;
    adam_config.lr = config.lr;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        ad::Tape tape;
        const auto logits = tape.affine_rows(tape.constant(x), tape.param(weight), tape.param(bias));
        const auto loss = tape.softmax_xent(logits, labels);
        weight.zero_grad();
        bias.zero_grad();
        tape.backward(loss);
        adam.step({&weight, &bias}, adam_config);
    }
    probe.weight = weight.value;
    probe.bias = bias.value;
    return probe;
}

std::vector<int> predict(const ProbeModel& probe, const FeatureMatrix& features) {
    if (features.cols != probe.feature_dim()) {
        throw ShapeError("feature dimension " + std::to_string(features.cols) +
                         " does not match probe (" + std::to_string(probe.feature_dim()) + ")");
    }
    const std::size_t c = probe.num_classes();
    std::vector<int> out(features.rows);
    for (std::size_t i = 0; i < features.rows; ++i) {
        int best = 0;
        double best_v = -1e300;
        for (std::size_t j = 0; j < c; ++j) {
            double acc = probe.bias.data[j];
            for (std::size_t l = 0; l < features.cols; ++l) {
                acc += probe.weight.data[j * features.cols + l] * features.at(i, l);
            }
            // Ties break toward the lowest class index.
            if (acc > best_v) {
                best_v = acc;
                best = static_cast<int>(j);
            }
        }
        out[i] = best;
    }
    return out;
}

EvalReport evaluate(const ProbeModel& probe, const FeatureMatrix& features,
                    const std::vector<int>& labels) {
    if (labels.size() != features.rows) throw ShapeError("label count does not match feature rows");
    const std::size_t c = probe.num_classes();
    const auto predictions = predict(probe, features);

    EvalReport report;
    report.total = features.rows;
    report.warnings = probe.warnings;
    report.confusion.assign(c, std::vector<std::size_t>(c, 0));
    for (std::size_t i = 0; i < features.rows; ++i) {
        report.confusion[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(predictions[i])]++;
    }
    std::size_t correct = 0;
    report.per_class_accuracy.assign(c, 0.0);
    for (std::size_t j = 0; j < c; ++j) {
        std::size_t row_total = 0;
        for (std::size_t k = 0; k < c; ++k) row_total += report.confusion[j][k];
        correct += report.confusion[j][j];
        report.per_class_accuracy[j] =
            row_total == 0 ? 0.0 : static_cast<double>(report.confusion[j][j]) / static_cast<double>(row_total);
    }
    report.accuracy = report.total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(report.total);
    return report;
}

std::string EvalReport::to_json(const std::vector<std::string>& class_names) const {
    nlohmann::json per_class = nlohmann::json::object();
    for (std::size_t i = 0; i < per_class_accuracy.size(); ++i) {
        const std::string key = i < class_names.size() ? class_names[i] : std::to_string(i);
        per_class[key] = per_class_accuracy[i];
    }
    const nlohmann::json j = {
        {"format", "sscl-eval-report-v1"},
        {"accuracy", accuracy},
        {"total", total},
        {"per_class_accuracy", per_class},
        {"confusion", confusion},
        {"warnings", warnings},
    };
    return j.dump(2);
}

std::string EvalReport::confusion_csv() const {
    std::ostringstream out;
    out << "# sscl-confusion-v1\n";
    for (const auto& row : confusion) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out << ",";
            out << row[i];
        }
        out << "\n";
    }
    return out.str();
}

void save_probe(const std::string& path, const ProbeModel& probe) {
    const nlohmann::json j = {
        {"format", "sscl-probe-v1"},
        {"num_classes", probe.num_classes()},
        {"feature_dim", probe.feature_dim()},
        {"weight", probe.weight.data},
        {"bias", probe.bias.data},
        {"warnings", probe.warnings},
    };
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump(2) << "\n";
}

ProbeModel load_probe(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad probe file: ") + e.what());
    }
    if (j.value("format", "") != "sscl-probe-v1") throw FormatError("bad probe magic in " + path);
    ProbeModel probe;
    const auto c = j.at("num_classes").get<std::size_t>();
    const auto d = j.at("feature_dim").get<std::size_t>();
    probe.weight = Tensor{{c, d}, j.at("weight").get<std::vector<double>>()};
    probe.bias = Tensor{{c}, j.at("bias").get<std::vector<double>>()};
    probe.warnings = j.value("warnings", std::vector<std::string>{});
    return probe;
}

} // namespace sscl
