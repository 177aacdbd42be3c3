#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sscl/matrixio.hpp"
#include "sscl/tensor.hpp"

namespace sscl {

// Linear probe: one affine layer + softmax over frozen features.
struct ProbeModel {
    Tensor weight;  // num_classes x feature_dim
    Tensor bias;    // num_classes
    std::vector<std::string> warnings;

    std::size_t num_classes() const { return weight.shape[0]; }
    std::size_t feature_dim() const { return weight.shape[1]; }
};

struct ProbeTrainConfig {
    std::size_t epochs = 100;
    double lr = 0.01;
    std::uint64_t seed = 0;
};

struct EvalReport {
    double accuracy = 0.0;
    std::vector<double> per_class_accuracy;
    std::vector<std::vector<std::size_t>> confusion;  // rows = true, cols = predicted
    std::size_t total = 0;
    std::vector<std::string> warnings;

    std::string to_json(const std::vector<std::string>& class_names = {}) const;
    std::string confusion_csv() const;
};

// Full-batch Adam on softmax cross-entropy; the feature extractor stays
// frozen.  A class absent from the labels is recorded as a warning.
ProbeModel train_probe(const FeatureMatrix& features, const std::vector<int>& labels,
                       std::size_t num_classes, const ProbeTrainConfig& config = {});

std::vector<int> predict(const ProbeModel& probe, const FeatureMatrix& features);

EvalReport evaluate(const ProbeModel& probe, const FeatureMatrix& features,
                    const std::vector<int>& labels);

void save_probe(const std::string& path, const ProbeModel& probe);
ProbeModel load_probe(const std::string& path);

} // namespace sscl
