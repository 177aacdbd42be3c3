#pragma once

#include <cstddef>
#include <numeric>
#include <vector>

#include "sscl/errors.hpp"

namespace sscl {

// Dense row-major tensor of doubles.  All numerics in the project are
// 64-bit; models are small enough that the cost is negligible and gradient
// checks stay reliable.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != element_count(shape)) {
            throw ShapeError("tensor data length does not match shape");
        }
    }

    static std::size_t element_count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (const auto d : shape) n *= d;
        return n;
    }

    static Tensor zeros(std::vector<std::size_t> shape) {
        const std::size_t n = element_count(shape);
        return Tensor{std::move(shape), std::vector<double>(n, 0.0)};
    }

    static Tensor scalar(double v) { return Tensor{{}, {v}}; }

    static Tensor vector1d(std::vector<double> v) {
        const std::size_t n = v.size();
        return Tensor{{n}, std::move(v)};
    }

    std::size_t size() const { return data.size(); }
    bool is_scalar() const { return shape.empty() || (shape.size() == 1 && shape[0] == 1); }

    std::size_t dim(std::size_t i) const { return shape.at(i); }

    double& at2(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
    double at2(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

    double& at3(std::size_t a, std::size_t b, std::size_t c) {
        return data[(a * shape[1] + b) * shape[2] + c];
    }
    double at3(std::size_t a, std::size_t b, std::size_t c) const {
        return data[(a * shape[1] + b) * shape[2] + c];
    }
};

inline bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

} // namespace sscl
