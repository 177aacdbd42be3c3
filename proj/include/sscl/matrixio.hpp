#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sscl {

enum class FeatureBranch { waveform, spectrogram, fused, unknown };

// Row-per-sample feature matrix with provenance ids.
struct FeatureMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;  // row-major
    std::vector<std::string> sample_ids;
    FeatureBranch branch = FeatureBranch::unknown;

    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
};

// Binary matrix container: 8-byte magic "SSLMAT01", u32 rows, u32 cols
// (little-endian), then row-major float32 little-endian data.
inline constexpr char kMatrixMagic[9] = "SSLMAT01";

void write_matrix(const std::string& path, std::size_t rows, std::size_t cols,
                  const std::vector<double>& values);
void read_matrix(const std::string& path, std::size_t& rows, std::size_t& cols,
                 std::vector<double>& values);

void write_feature_matrix(const std::string& path, const FeatureMatrix& m);

// Reads `path` plus sibling id file `path + ".ids"` when present.
FeatureMatrix read_feature_matrix(const std::string& path);

void write_id_file(const std::string& path, const std::vector<std::string>& ids);
std::vector<std::string> read_id_file(const std::string& path);

void write_label_file(const std::string& path, const std::vector<int>& labels);
std::vector<int> read_label_file(const std::string& path);

} // namespace sscl
