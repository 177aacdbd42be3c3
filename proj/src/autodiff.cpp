#include "sscl/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "sscl/errors.hpp"
#include "sscl/rng.hpp"

namespace sscl::ad {

Tape::Var Tape::emit(Tensor value, bool requires_grad, std::function<void(Tape&)> backprop) {
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    if (requires_grad) node.grad = Tensor::zeros(node.value.shape);
    node.backprop = std::move(backprop);
    nodes_.push_back(std::move(node));
    return static_cast<Var>(nodes_.size() - 1);
}

Tape::Var Tape::constant(Tensor value) { return emit(std::move(value), false, {}); }

Tape::Var Tape::param(Parameter& p) {
    const Var v = emit(p.value, true, {});
    nodes_[v].parameter = &p;
    return v;
}

Tape::Var Tape::conv1d(Var input, Var kernels, Var bias) {
    const Tensor& in = value(input);
    const Tensor& w = value(kernels);
    const Tensor& b = value(bias);
    if (in.shape.size() != 2 || w.shape.size() != 3 || b.shape.size() != 1) {
        throw ShapeError("conv1d expects input [Cin x L], kernels [Cout x Cin x k], bias [Cout]");
    }
    const std::size_t cin = in.shape[0], len = in.shape[1];
    const std::size_t cout = w.shape[0], k = w.shape[2];
    if (w.shape[1] != cin) throw ShapeError("conv1d kernel input channels mismatch");
    if (b.shape[0] != cout) throw ShapeError("conv1d bias length mismatch");
    if (len < k) {
        throw ShapeError("conv1d input length " + std::to_string(len) + " shorter than kernel " + std::to_string(k));
    }
    const std::size_t out_len = len - k + 1;

    Tensor out = Tensor::zeros({cout, out_len});
    for (std::size_t co = 0; co < cout; ++co) {
        double* orow = out.data.data() + co * out_len;
        for (std::size_t t = 0; t < out_len; ++t) orow[t] = b.data[co];
        for (std::size_t ci = 0; ci < cin; ++ci) {
            const double* irow = in.data.data() + ci * len;
            const double* wrow = w.data.data() + (co * cin + ci) * k;
            for (std::size_t j = 0; j < k; ++j) {
                const double wv = wrow[j];
                const double* ip = irow + j;
                for (std::size_t t = 0; t < out_len; ++t) orow[t] += wv * ip[t];
            }
        }
    }

    const bool rg = needs_grad(input) || needs_grad(kernels) || needs_grad(bias);
    const Var out_var = emit(std::move(out), rg, {});
    if (rg) {
        nodes_[out_var].backprop = [=](Tape& t) {
            const Tensor& go = t.grad(out_var);
            const Tensor& in_v = t.value(input);
            const Tensor& w_v = t.value(kernels);
            if (t.needs_grad(bias)) {
                Tensor& gb = t.grad_ref(bias);
                for (std::size_t co = 0; co < cout; ++co) {
                    double acc = 0.0;
                    const double* grow = go.data.data() + co * out_len;
                    for (std::size_t ti = 0; ti < out_len; ++ti) acc += grow[ti];
                    gb.data[co] += acc;
                }
            }
            if (t.needs_grad(kernels)) {
                Tensor& gw = t.grad_ref(kernels);
                for (std::size_t co = 0; co < cout; ++co) {
                    const double* grow = go.data.data() + co * out_len;
                    for (std::size_t ci = 0; ci < cin; ++ci) {
                        const double* irow = in_v.data.data() + ci * len;
                        double* gwrow = gw.data.data() + (co * cin + ci) * k;
                        for (std::size_t j = 0; j < k; ++j) {
                            double acc = 0.0;
                            const double* ip = irow + j;
                            for (std::size_t ti = 0; ti < out_len; ++ti) acc += ip[ti] * grow[ti];
                            gwrow[j] += acc;
                        }
                    }
                }
            }
            if (t.needs_grad(input)) {
                Tensor& gi = t.grad_ref(input);
                for (std::size_t co = 0; co < cout; ++co) {
                    const double* grow = go.data.data() + co * out_len;
                    for (std::size_t ci = 0; ci < cin; ++ci) {
                        double* girow = gi.data.data() + ci * len;
                        const double* wrow = w_v.data.data() + (co * cin + ci) * k;
                        for (std::size_t j = 0; j < k; ++j) {
                            const double wv = wrow[j];
                            double* gp = girow + j;
                            for (std::size_t ti = 0; ti < out_len; ++ti) gp[ti] += wv * grow[ti];
                        }
                    }
                }
            }
        };
    }
    return out_var;
}

Tape::Var Tape::subsample(Var input, std::size_t factor) {
    const Tensor& in = value(input);
    if (in.shape.size() != 2) throw ShapeError("subsample expects [C x L]");
    if (factor < 1) throw ShapeError("subsample factor must be >= 1");
    const std::size_t c = in.shape[0], len = in.shape[1];
    if (len < factor) {
        throw ShapeError("subsample input length " + std::to_string(len) +
                         " shorter than factor " + std::to_string(factor));
    }
    const std::size_t out_len = len / factor;
    const double inv = 1.0 / static_cast<double>(factor);
    Tensor out = Tensor::zeros({c, out_len});
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t t = 0; t < out_len; ++t) {
            double acc = 0.0;
            for (std::size_t j = 0; j < factor; ++j) acc += in.data[ch * len + t * factor + j];
            out.data[ch * out_len + t] = acc * inv;
        }
    }
    const bool rg = needs_grad(input);
    const Var out_var = emit(std::move(out), rg, {});
    if (rg) {
        nodes_[out_var].backprop = [=](Tape& t) {
            const Tensor& go = t.grad(out_var);
            Tensor& gi = t.grad_ref(input);
            for (std::size_t ch = 0; ch < c; ++ch) {
                for (std::size_t ti = 0; ti < out_len; ++ti) {
                    const double gv = go.data[ch * out_len + ti] * inv;
                    for (std::size_t j = 0; j < factor; ++j) gi.data[ch * len + ti * factor + j] += gv;
                }
            }
        };
    }
    return out_var;
}

Tape::Var Tape::dense(Var input, Var weight, Var bias) {
    const Tensor& x = value(input);
    const Tensor& w = value(weight);
    const Tensor& b = value(bias);
    if (x.shape.size() != 1 || w.shape.size() != 2 || b.shape.size() != 1) {
        throw ShapeError("dense expects input [n], weight [m x n], bias [m]");
    }
    const std::size_t n = x.shape[0], m = w.shape[0];
    if (w.shape[1] != n) {
        throw ShapeError("dense weight columns " + std::to_string(w.shape[1]) +
                         " do not match input length " + std::to_string(n));
    }
    if (b.shape[0] != m) throw ShapeError("dense bias length mismatch");

    Tensor out = Tensor::zeros({m});
    for (std::size_t i = 0; i < m; ++i) {
        double acc = b.data[i];
        const double* wrow = w.data.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) acc += wrow[j] * x.data[j];
        out.data[i] = acc;
    }
    const bool rg = needs_grad(input) || needs_grad(weight) || needs_grad(bias);
    const Var out_var = emit(std::move(out), rg, {});
    if (rg) {
        nodes_[out_var].backprop = [=](Tape& t) {
            const Tensor& go = t.grad(out_var);
            const Tensor& x_v = t.value(input);
            const Tensor& w_v = t.value(weight);
            if (t.needs_grad(bias)) {
                Tensor& gb = t.grad_ref(bias);
                for (std::size_t i = 0; i < m; ++i) gb.data[i] += go.data[i];
            }
            if (t.needs_grad(weight)) {
                Tensor& gw = t.grad_ref(weight);
                for (std::size_t i = 0; i < m; ++i) {
                    double* gwrow = gw.data.data() + i * n;
                    const double gv = go.data[i];
                    for (std::size_t j = 0; j < n; ++j) gwrow[j] += gv * x_v.data[j];
                }
            }
            if (t.needs_grad(input)) {
                Tensor& gi = t.grad_ref(input);
                for (std::size_t i = 0; i < m; ++i) {
                    const double* wrow = w_v.data.data() + i * n;
                    const double gv = go.data[i];
                    for (std::size_t j = 0; j < n; ++j) gi.data[j] += gv * wrow[j];
                }
            }
        };
    }
    return out_var;
}

Tape::Var Tape::relu(Var x) {
    const Tensor& in = value(x);
    Tensor out = in;
    for (double& v : out.data) v = std::max(0.0, v);
    const bool rg = needs_grad(x);
    const Var out_var = emit(std::move(out), rg, {});
    if (rg) {
        nodes_[out_var].backprop = [=](Tape& t) {
            const Tensor& go = t.grad(out_var);
            const Tensor& in_v = t.value(x);
            Tensor& gi = t.grad_ref(x);
            for (std::size_t i = 0; i < gi.data.size(); ++i) {
                if (in_v.data[i] > 0.0) gi.data[i] += go.data[i];
            }
        };
    }
    return out_var;
}

Tape::Var Tape::dropout(Var x, double p, bool training, std::uint64_t seed) {
    if (p < 0.0 || p >= 1.0) throw ParameterError("dropout probability must be in [0, 1)");
    const Tensor& in = value(x);
    if (!training || p == 0.0) {
        // Identity in eval mode; still a node so graphs have a uniform shape.
        Tensor out = in;
        const bool rg = needs_grad(x);
        const Var out_var = emit(std::move(out), rg, {});
        if (rg) {
            nodes_[out_var].backprop = [=](Tape& t) {
                const Tensor& go = t.grad(out_var);
                Tensor& gi = t.grad_ref(x);
                for (std::size_t i = 0; i < gi.data.size(); ++i) gi.data[i] += go.data[i];
            };
        }
        return out_var;
    }
    Rng rng(seed);
    auto mask = std::make_shared<std::vector<double>>(in.data.size());
    const double keep_scale = 1.0 / (1.0 - p);
    for (auto& m : *mask) m = (rng.uniform() < p) ? 0.0 : keep_scale;
    Tensor out = in;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= (*mask)[i];
    const bool rg = needs_grad(x);
    const Var out_var = emit(std::move(out), rg, {});
    if (rg) {
        nodes_[out_var].backprop = [=](Tape& t) {
            const Tensor& go = t.grad(out_var);
            Tensor& gi = t.grad_ref(x);
            for (std::size_t i = 0; i < gi.data.size(); ++i) gi.data[i] += go.data[i] * (*mask)[i];
        };
    }
    return out_var;
}

Tape::Var Tape::reshape(Var x, std::vector<std::size_t> shape) {
    const Tensor& in = value(x);
    if (Tensor::element_count(shape) != in.data.size()) {
        throw ShapeError("reshape element count mismatch");
    }
    Tensor out{std::move(shape), in.data};
    const bool rg = needs_grad(x);
    const Var out_var = emit(std::move(out), rg, {});
    if (rg) {
        nodes_[out_var].backprop = [=](Tape& t) {
            const Tensor& go = t.grad(out_var);
            Tensor& gi = t.grad_ref(x);
            for (std::size_t i = 0; i < gi.data.size(); ++i) gi.data[i] += go.data[i];
        };
    }
    return out_var;
}

Tape::Var Tape::add(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!same_shape(ta, tb)) throw ShapeError("add shape mismatch");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += tb.data[i];
    const bool rg = needs_grad(a) || needs_grad(b);
    const Var out_var = emit(std::move(out), rg, {});
    if (rg) {
        nodes_[out_var].backprop = [=](Tape& t) {
            const Tensor& go = t.grad(out_var);
            for (const Var v : {a, b}) {
                if (!t.needs_grad(v)) continue;
                Tensor& g = t.grad_ref(v);
                for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += go.data[i];
            }
        };
    }
    return out_var;
}

Tape::Var Tape::mul(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!same_shape(ta, tb)) throw ShapeError("mul shape mismatch");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= tb.data[i];
    const bool rg = needs_grad(a) || needs_grad(b);
    const Var out_var = emit(std::move(out), rg, {});
    if (rg) {
        nodes_[out_var].backprop = [=](Tape& t) {
            const Tensor& go = t.grad(out_var);
            if (t.needs_grad(a)) {
                Tensor& g = t.grad_ref(a);
                const Tensor& other = t.value(b);
                for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += go.data[i] * other.data[i];
            }
            if (t.needs_grad(b)) {
                Tensor& g = t.grad_ref(b);
                const Tensor& other = t.value(a);
                for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += go.data[i] * other.data[i];
            }
        };
    }
    return out_var;
}

Tape::Var Tape::scale(Var a, double c) {
    Tensor out = value(a);
    for (double& v : out.data) v *= c;
    const bool rg = needs_grad(a);
    const Var out_var = emit(std::move(out), rg, {});
    if (rg) {
        nodes_[out_var].backprop = [=](Tape& t) {
            const Tensor& go = t.grad(out_var);
            Tensor& g = t.grad_ref(a);
            for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += c * go.data[i];
        };
    }
    return out_var;
}

Tape::Var Tape::sum(Var x) {
    const Tensor& in = value(x);
    double acc = 0.0;
    for (const double v : in.data) acc += v;
    const bool rg = needs_grad(x);
    const Var out_var = emit(Tensor::scalar(acc), rg, {});
    if (rg) {
        nodes_[out_var].backprop = [=](Tape& t) {
            const double go = t.grad(out_var).data[0];
            Tensor& g = t.grad_ref(x);
            for (double& v : g.data) v += go;
        };
    }
    return out_var;
}

Tape::Var Tape::dot(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.data.size() != tb.data.size()) throw ShapeError("dot length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < ta.data.size(); ++i) acc += ta.data[i] * tb.data[i];
    const bool rg = needs_grad(a) || needs_grad(b);
    const Var out_var = emit(Tensor::scalar(acc), rg, {});
    if (rg) {
        nodes_[out_var].backprop = [=](Tape& t) {
            const double go = t.grad(out_var).data[0];
            if (t.needs_grad(a)) {
                Tensor& g = t.grad_ref(a);
                const Tensor& other = t.value(b);
                for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += go * other.data[i];
            }
            if (t.needs_grad(b)) {
                Tensor& g = t.grad_ref(b);
                const Tensor& other = t.value(a);
                for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += go * other.data[i];
            }
        };
    }
    return out_var;
}

Tape::Var Tape::matmul(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.shape.size() != 2 || tb.shape.size() != 2 || ta.shape[1] != tb.shape[0]) {
        throw ShapeError("matmul expects [m x k] * [k x n]");
    }
    const std::size_t m = ta.shape[0], k = ta.shape[1], n = tb.shape[1];
    Tensor out = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t l = 0; l < k; ++l) {
            const double av = ta.data[i * k + l];
            const double* brow = tb.data.data() + l * n;
            double* orow = out.data.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    const bool rg = needs_grad(a) || needs_grad(b);
    const Var out_var = emit(std::move(out), rg, {});
    if (rg) {
        nodes_[out_var].backprop = [=](Tape& t) {
            const Tensor& go = t.grad(out_var);
            if (t.needs_grad(a)) {
                Tensor& ga = t.grad_ref(a);
                const Tensor& b_v = t.value(b);
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t l = 0; l < k; ++l) {
                        double acc = 0.0;
                        const double* grow = go.data.data() + i * n;
                        const double* brow = b_v.data.data() + l * n;
                        for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                        ga.data[i * k + l] += acc;
                    }
                }
            }
            if (t.needs_grad(b)) {
                Tensor& gb = t.grad_ref(b);
                const Tensor& a_v = t.value(a);
                for (std::size_t l = 0; l < k; ++l) {
                    for (std::size_t i = 0; i < m; ++i) {
                        const double av = a_v.data[i * k + l];
                        const double* grow = go.data.data() + i * n;
                        double* gbrow = gb.data.data() + l * n;
                        for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
                    }
                }
            }
        };
    }
    return out_var;
}

Tape::Var Tape::stack_rows(const std::vector<Var>& rows) {
    if (rows.empty()) throw ShapeError("stack_rows needs at least one row");
    const std::size_t d = value(rows[0]).data.size();
    bool rg = false;
    for (const Var r : rows) {
        if (value(r).data.size() != d) throw ShapeError("stack_rows length mismatch");
        rg = rg || needs_grad(r);
    }
    const std::size_t n = rows.size();
    Tensor out = Tensor::zeros({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        const Tensor& r = value(rows[i]);
        std::copy(r.data.begin(), r.data.end(), out.data.begin() + i * d);
    }
    const Var out_var = emit(std::move(out), rg, {});
    if (rg) {
        auto row_vars = rows;
        nodes_[out_var].backprop = [out_var, row_vars, d](Tape& t) {
            const Tensor& go = t.grad(out_var);
            for (std::size_t i = 0; i < row_vars.size(); ++i) {
                if (!t.needs_grad(row_vars[i])) continue;
                Tensor& g = t.grad_ref(row_vars[i]);
                for (std::size_t j = 0; j < d; ++j) g.data[j] += go.data[i * d + j];
            }
        };
    }
    return out_var;
}

Tape::Var Tape::row_normalize(Var m) {
    const Tensor& in = value(m);
    if (in.shape.size() != 2) throw ShapeError("row_normalize expects [N x D]");
    const std::size_t n = in.shape[0], d = in.shape[1];
    auto norms = std::make_shared<std::vector<double>>(n);
    Tensor out = in;
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += in.data[i * d + j] * in.data[i * d + j];
        const double norm = std::sqrt(s);
        if (norm < 1e-150) {
            throw DegenerateInputError("zero vector at row " + std::to_string(i));
        }
        (*norms)[i] = norm;
        for (std::size_t j = 0; j < d; ++j) out.data[i * d + j] /= norm;
    }
    const bool rg = needs_grad(m);
    const Var out_var = emit(std::move(out), rg, {});
    if (rg) {
        nodes_[out_var].backprop = [=](Tape& t) {
            const Tensor& go = t.grad(out_var);
            const Tensor& y = t.value(out_var);
            Tensor& gi = t.grad_ref(m);
            for (std::size_t i = 0; i < n; ++i) {
                double gy = 0.0;
                for (std::size_t j = 0; j < d; ++j) gy += go.data[i * d + j] * y.data[i * d + j];
                const double inv = 1.0 / (*norms)[i];
                for (std::size_t j = 0; j < d; ++j) {
                    gi.data[i * d + j] += (go.data[i * d + j] - gy * y.data[i * d + j]) * inv;
                }
            }
        };
    }
    return out_var;
}

Tape::Var Tape::gram(Var m) {
    const Tensor& in = value(m);
    if (in.shape.size() != 2) throw ShapeError("gram expects [N x D]");
    const std::size_t n = in.shape[0], d = in.shape[1];
    Tensor out = Tensor::zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t l = 0; l < d; ++l) acc += in.data[i * d + l] * in.data[j * d + l];
            out.data[i * n + j] = acc;
            out.data[j * n + i] = acc;
        }
    }
    const bool rg = needs_grad(m);
    const Var out_var = emit(std::move(out), rg, {});
    if (rg) {
        nodes_[out_var].backprop = [=](Tape& t) {
            // d(M M^T)/dM contracts as (G + G^T) M.
            const Tensor& go = t.grad(out_var);
            const Tensor& m_v = t.value(m);
            Tensor& gi = t.grad_ref(m);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    const double g = go.data[i * n + j] + go.data[j * n + i];
                    if (g == 0.0) continue;
                    const double* mrow = m_v.data.data() + j * d;
                    double* girow = gi.data.data() + i * d;
                    for (std::size_t l = 0; l < d; ++l) girow[l] += g * mrow[l];
                }
            }
        };
    }
    return out_var;
}

Tape::Var Tape::ntxent_from_sim(Var sim, double tau) {
    if (tau <= 0.0) throw ParameterError("temperature must be positive");
    const Tensor& s = value(sim);
    if (s.shape.size() != 2 || s.shape[0] != s.shape[1]) throw ShapeError("similarity matrix must be square");
    const std::size_t n = s.shape[0];
    if (n < 4 || n % 2 != 0) {
        throw ShapeError("NT-Xent needs an even number of views, at least 4; got " + std::to_string(n));
    }

    // Softmax weights w[a][k] over k != a, cached for backward.
    auto weights = std::make_shared<std::vector<double>>(n * n, 0.0);
    double loss = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
        const std::size_t sibling = a ^ 1;
        double max_v = -1e300;
        for (std::size_t k = 0; k < n; ++k) {
            if (k == a) continue;
            max_v = std::max(max_v, s.data[a * n + k] / tau);
        }
        double denom = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            if (k == a) continue;
            const double e = std::exp(s.data[a * n + k] / tau - max_v);
            (*weights)[a * n + k] = e;
            denom += e;
        }
        for (std::size_t k = 0; k < n; ++k) (*weights)[a * n + k] /= denom;
        const double lse = max_v + std::log(denom);
        loss += lse - s.data[a * n + sibling] / tau;
    }
    loss /= static_cast<double>(n);

    const bool rg = needs_grad(sim);
    const Var out_var = emit(Tensor::scalar(loss), rg, {});
    if (rg) {
        nodes_[out_var].backprop = [=](Tape& t) {
            const double go = t.grad(out_var).data[0];
            Tensor& gs = t.grad_ref(sim);
            const double c = go / (static_cast<double>(n) * tau);
            for (std::size_t a = 0; a < n; ++a) {
                const std::size_t sibling = a ^ 1;
                for (std::size_t k = 0; k < n; ++k) {
                    if (k == a) continue;
                    double g = (*weights)[a * n + k];
                    if (k == sibling) g -= 1.0;
                    gs.data[a * n + k] += c * g;
                }
            }
        };
    }
    return out_var;
}

Tape::Var Tape::affine_rows(Var x, Var weight, Var bias) {
    const Tensor& xv = value(x);
    const Tensor& w = value(weight);
    const Tensor& b = value(bias);
    if (xv.shape.size() != 2 || w.shape.size() != 2 || b.shape.size() != 1) {
        throw ShapeError("affine_rows expects x [n x d], weight [C x d], bias [C]");
    }
    const std::size_t n = xv.shape[0], d = xv.shape[1], c = w.shape[0];
    if (w.shape[1] != d || b.shape[0] != c) throw ShapeError("affine_rows dimension mismatch");

    Tensor out = Tensor::zeros({n, c});
    for (std::size_t i = 0; i < n; ++i) {
        const double* xrow = xv.data.data() + i * d;
        double* orow = out.data.data() + i * c;
        for (std::size_t j = 0; j < c; ++j) {
            double acc = b.data[j];
            const double* wrow = w.data.data() + j * d;
            for (std::size_t l = 0; l < d; ++l) acc += wrow[l] * xrow[l];
            orow[j] = acc;
        }
    }
    const bool rg = needs_grad(x) || needs_grad(weight) || needs_grad(bias);
    const Var out_var = emit(std::move(out), rg, {});
    if (rg) {
        nodes_[out_var].backprop = [=](Tape& t) {
            const Tensor& go = t.grad(out_var);
            const Tensor& x_v = t.value(x);
            const Tensor& w_v = t.value(weight);
            if (t.needs_grad(bias)) {
                Tensor& gb = t.grad_ref(bias);
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < c; ++j) gb.data[j] += go.data[i * c + j];
                }
            }
            if (t.needs_grad(weight)) {
                Tensor& gw = t.grad_ref(weight);
                for (std::size_t i = 0; i < n; ++i) {
                    const double* xrow = x_v.data.data() + i * d;
                    const double* grow = go.data.data() + i * c;
                    for (std::size_t j = 0; j < c; ++j) {
                        double* gwrow = gw.data.data() + j * d;
                        const double gv = grow[j];
                        for (std::size_t l = 0; l < d; ++l) gwrow[l] += gv * xrow[l];
                    }
                }
            }
            if (t.needs_grad(x)) {
                Tensor& gx = t.grad_ref(x);
                for (std::size_t i = 0; i < n; ++i) {
                    double* gxrow = gx.data.data() + i * d;
                    const double* grow = go.data.data() + i * c;
                    for (std::size_t j = 0; j < c; ++j) {
                        const double* wrow = w_v.data.data() + j * d;
                        const double gv = grow[j];
                        for (std::size_t l = 0; l < d; ++l) gxrow[l] += gv * wrow[l];
                    }
                }
            }
        };
    }
    return out_var;
}

Tape::Var Tape::softmax_xent(Var logits, std::vector<int> labels) {
    const Tensor& lg = value(logits);
    if (lg.shape.size() != 2) throw ShapeError("softmax_xent expects logits [n x C]");
    const std::size_t n = lg.shape[0], c = lg.shape[1];
    if (labels.size() != n) throw ShapeError("label count does not match logit rows");
    for (const int l : labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= c) throw ParameterError("label out of range");
    }

    auto probs = std::make_shared<std::vector<double>>(n * c);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = lg.data.data() + i * c;
        double max_v = row[0];
        for (std::size_t j = 1; j < c; ++j) max_v = std::max(max_v, row[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            const double e = std::exp(row[j] - max_v);
            (*probs)[i * c + j] = e;
            denom += e;
        }
        for (std::size_t j = 0; j < c; ++j) (*probs)[i * c + j] /= denom;
        loss += max_v + std::log(denom) - row[static_cast<std::size_t>(labels[i])];
    }
    loss /= static_cast<double>(n);

    const bool rg = needs_grad(logits);
    const Var out_var = emit(Tensor::scalar(loss), rg, {});
    if (rg) {
        auto labels_copy = std::make_shared<std::vector<int>>(std::move(labels));
        nodes_[out_var].backprop = [=](Tape& t) {
            const double go = t.grad(out_var).data[0];
            Tensor& g = t.grad_ref(logits);
            const double inv_n = 1.0 / static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < c; ++j) {
                    double p = (*probs)[i * c + j];
                    if (j == static_cast<std::size_t>((*labels_copy)[i])) p -= 1.0;
                    g.data[i * c + j] += go * p * inv_n;
                }
            }
        };
    }
    return out_var;
}

void Tape::backward(Var loss) {
    if (loss < 0 || static_cast<std::size_t>(loss) >= nodes_.size()) {
        throw ContractError("backward target is not a tape node");
    }
    if (!nodes_[loss].value.is_scalar()) {
        throw ContractError("backward requires a scalar loss");
    }
    if (!nodes_[loss].requires_grad) {
        throw ContractError("loss does not depend on any trainable parameter");
    }
    nodes_[loss].grad.data[0] = 1.0;
    for (Var v = loss; v >= 0; --v) {
        if (nodes_[v].requires_grad && nodes_[v].backprop) nodes_[v].backprop(*this);
    }
    for (auto& node : nodes_) {
        if (node.parameter != nullptr) {
            auto& pg = node.parameter->grad;
            for (std::size_t i = 0; i < pg.data.size(); ++i) pg.data[i] += node.grad.data[i];
            node.parameter->grad_ready = true;
        }
    }
}

void AdamState::step(std::vector<Parameter*> params, const AdamConfig& config) {
    for (const Parameter* p : params) {
        if (!p->grad_ready) {
            throw ContractError("parameter '" + p->name + "' has no gradient; run backward first");
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(t_));
    for (Parameter* p : params) {
        auto& mom = moments_[p->name];
        if (mom.m.data.empty()) {
            mom.m = Tensor::zeros(p->value.shape);
            mom.v = Tensor::zeros(p->value.shape);
        }
        for (std::size_t i = 0; i < p->value.data.size(); ++i) {
            const double g = p->grad.data[i];
            mom.m.data[i] = config.beta1 * mom.m.data[i] + (1.0 - config.beta1) * g;
            mom.v.data[i] = config.beta2 * mom.v.data[i] + (1.0 - config.beta2) * g * g;
            const double m_hat = mom.m.data[i] / bc1;
            const double v_hat = mom.v.data[i] / bc2;
            p->value.data[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
        }
    }
}

} // namespace sscl::ad
