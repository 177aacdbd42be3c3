#include "sscl/matrixio.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "sscl/errors.hpp"

namespace sscl {

void write_matrix(const std::string& path, std::size_t rows, std::size_t cols,
                  const std::vector<double>& values) {
    if (values.size() != rows * cols) throw ShapeError("matrix data length does not match rows*cols");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out.write(kMatrixMagic, 8);
    const auto r = static_cast<std::uint32_t>(rows);
    const auto c = static_cast<std::uint32_t>(cols);
    out.write(reinterpret_cast<const char*>(&r), 4);
    out.write(reinterpret_cast<const char*>(&c), 4);
    for (const double v : values) {
        const auto f = static_cast<float>(v);
        out.write(reinterpret_cast<const char*>(&f), 4);
    }
}

void read_matrix(const std::string& path, std::size_t& rows, std::size_t& cols,
                 std::vector<double>& values) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMatrixMagic, 8) != 0) {
        throw FormatError("bad matrix magic in " + path);
    }
    std::uint32_t r = 0, c = 0;
    in.read(reinterpret_cast<char*>(&r), 4);
    in.read(reinterpret_cast<char*>(&c), 4);
    if (!in) throw FormatError("truncated matrix header in " + path);
    rows = r;
    cols = c;
    values.resize(static_cast<std::size_t>(r) * c);
    for (auto& v : values) {
        float f;
        in.read(reinterpret_cast<char*>(&f), 4);
        if (!in) throw FormatError("truncated matrix data in " + path);
        v = f;
    }
}

void write_feature_matrix(const std::string& path, const FeatureMatrix& m) {
    write_matrix(path, m.rows, m.cols, m.values);
    if (!m.sample_ids.empty()) write_id_file(path + ".ids", m.sample_ids);
}

FeatureMatrix read_feature_matrix(const std::string& path) {
    FeatureMatrix m;
    read_matrix(path, m.rows, m.cols, m.values);
    if (std::filesystem::exists(path + ".ids")) {
        m.sample_ids = read_id_file(path + ".ids");
        if (m.sample_ids.size() != m.rows) {
            throw AlignmentError("id file row count does not match matrix in " + path);
        }
    }
    return m;
}

void write_id_file(const std::string& path, const std::vector<std::string>& ids) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    for (const auto& id : ids) out << id << "\n";
}

std::vector<std::string> read_id_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) ids.push_back(line);
    }
    return ids;
}

void write_label_file(const std::string& path, const std::vector<int>& labels) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    for (const int l : labels) out << l << "\n";
}

std::vector<int> read_label_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<int> labels;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) labels.push_back(std::stoi(line));
    }
    return labels;
}

} // namespace sscl
