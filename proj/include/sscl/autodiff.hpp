#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "sscl/tensor.hpp"

namespace sscl::ad {

// Trainable tensor.  Gradients accumulate into `grad` during backward and are
// consumed by the optimizer.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    bool grad_ready = false;

    Parameter() = default;
    Parameter(std::string n, Tensor v)
        : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.shape)) {}

    void zero_grad() {
        std::fill(grad.data.begin(), grad.data.end(), 0.0);
        grad_ready = false;
    }
};

// Reverse-mode tape.  A tape and its nodes are confined to one thread for the
// duration of a forward/backward pass.
class Tape {
public:
    using Var = int;

    Var constant(Tensor value);
    Var constant(const std::vector<double>& v) { return constant(Tensor::vector1d(v)); }

    // Leaf tied to an external parameter; backward accumulates into p.grad.
    Var param(Parameter& p);

    // Valid (no padding) 1D cross-correlation summed over input channels.
    //   input [Cin x L], kernels [Cout x Cin x k], bias [Cout]
    //   -> [Cout x (L - k + 1)]
    Var conv1d(Var input, Var kernels, Var bias);

    // Non-overlapping average pooling, window = stride = factor; remainder
    // frames are dropped.
    Var subsample(Var input, std::size_t factor);

    // weight [m x n] * input [n] + bias [m].
    Var dense(Var input, Var weight, Var bias);

    Var relu(Var x);

    // Inverted dropout: training mode zeroes elements with probability p and
    // scales survivors by 1/(1-p); eval mode is the identity.
    Var dropout(Var x, double p, bool training, std::uint64_t seed);

    // Same data, new shape (element count must match); gradients pass through.
    Var reshape(Var x, std::vector<std::size_t> shape);

    Var add(Var a, Var b);
    Var mul(Var a, Var b);  // elementwise
    Var scale(Var a, double c);
    Var sum(Var x);          // scalar
    Var dot(Var a, Var b);   // scalar

    // General matrix product [m x k] * [k x n] -> [m x n].
    Var matmul(Var a, Var b);

    // Stack N equal-length vectors into an [N x D] matrix.
    Var stack_rows(const std::vector<Var>& rows);

    // Normalize each row of [N x D] to unit Euclidean norm.
    Var row_normalize(Var m);

    // M * M^T for [N x D] -> [N x N]; entry (a, b) is the dot of rows a, b.
    Var gram(Var m);

    // NT-Xent from a cosine-similarity matrix of 2M views ordered so rows
    // 2i, 2i+1 are siblings: per view a,
    //   l(a) = -log( exp(S[a,p(a)]/tau) / sum_{k != a} exp(S[a,k]/tau) )
    // and the result is the mean of l over all views (log-sum-exp shifted).
    Var ntxent_from_sim(Var sim, double tau);

    // x [n x d] * weight^T [d x C] + bias -> logits [n x C].
    Var affine_rows(Var x, Var weight, Var bias);

    // Mean softmax cross-entropy of logits [n x C] against integer labels.
    Var softmax_xent(Var logits, std::vector<int> labels);

    const Tensor& value(Var v) const { return nodes_[v].value; }
    const Tensor& grad(Var v) const { return nodes_[v].grad; }

    // Populates gradients of every requires-grad node reachable from `loss`
    // and accumulates parameter gradients.  `loss` must be scalar.
    void backward(Var loss);

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        Parameter* parameter = nullptr;
        std::function<void(Tape&)> backprop;  // empty for leaves
    };

    Var emit(Tensor value, bool requires_grad, std::function<void(Tape&)> backprop);
    Tensor& grad_ref(Var v) { return nodes_[v].grad; }
    bool needs_grad(Var v) const { return nodes_[v].requires_grad; }

    std::vector<Node> nodes_;
};

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard Adam with bias correction.  Moment buffers are keyed by parameter
// name and survive across steps.
class AdamState {
public:
    void step(std::vector<Parameter*> params, const AdamConfig& config);

    long steps_taken() const { return t_; }

    // Serialization hooks for checkpoints.
    struct Moments {
        Tensor m;
        Tensor v;
    };
    const std::unordered_map<std::string, Moments>& moments() const { return moments_; }
    std::unordered_map<std::string, Moments>& moments() { return moments_; }
    void set_steps_taken(long t) { t_ = t; }

private:
    std::unordered_map<std::string, Moments> moments_;
    long t_ = 0;
};

} // namespace sscl::ad
