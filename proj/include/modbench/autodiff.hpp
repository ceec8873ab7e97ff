// Copyright (c) 2026, The modbench Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation over a dynamic tape.
//
// A Tape records every primitive applied during one forward pass. Leaves are
// either constants, differentiable inputs, or bound Parameters. Calling
// backward() replays the recorded entries in reverse and, at the end, adds
// each bound leaf's gradient into its Parameter.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "modbench/tensor.hpp"

namespace modbench {

/// Trainable tensor with its gradient and Adam state.
struct Parameter {
    Tensor value;
    Tensor grad;
    Tensor m;  // first moment
    Tensor v;  // second moment
    std::size_t step = 0;

    Parameter() = default;
    explicit Parameter(Tensor init)
        : value(std::move(init)),
          grad(value.shape()),
          m(value.shape()),
          v(value.shape()) {}

    std::size_t size() const { return value.size(); }
};

inline void zero_gradients(std::span<Parameter* const> params) {
    for (Parameter* p : params) p->grad.fill(0.0);
}

class Tape;

/// Handle to a node on a tape.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
};

namespace detail {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

// C += A(n×k) · B(k×m)
inline void gemm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                    std::size_t m) {
    MutMap(c, n, m).noalias() += ConstMap(a, n, k) * ConstMap(b, k, m);
}

// C(n×k) += G(n×m) · B(k×m)ᵀ
inline void gemm_nt(const double* g, const double* b, double* c, std::size_t n, std::size_t k,
                    std::size_t m) {
    MutMap(c, n, k).noalias() += ConstMap(g, n, m) * ConstMap(b, k, m).transpose();
}

// C(k×m) += A(n×k)ᵀ · G(n×m)
inline void gemm_tn(const double* a, const double* g, double* c, std::size_t n, std::size_t k,
                    std::size_t m) {
    MutMap(c, k, m).noalias() += ConstMap(a, n, k).transpose() * ConstMap(g, n, m);
}

}  // namespace detail

class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::size_t)>;

    struct Node {
        Tensor value;
        Tensor grad;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        Parameter* param = nullptr;
        const char* op = "leaf";
        bool needs_grad = false;
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value) { return push_leaf(std::move(value), nullptr, false); }

    /// Differentiable leaf not bound to a Parameter.
    Var input(Tensor value) { return push_leaf(std::move(value), nullptr, true); }

    Var param(Parameter& p) { return push_leaf(p.value, &p, true); }

    Var record(Tensor value, std::vector<std::size_t> inputs, const char* op, BackwardFn fn) {
        Node n;
        n.value = std::move(value);
        n.needs_grad = std::any_of(inputs.begin(), inputs.end(),
                                   [this](std::size_t i) { return nodes_[i].needs_grad; });
        n.inputs = std::move(inputs);
        n.backward = std::move(fn);
        n.op = op;
        nodes_.push_back(std::move(n));
        ++entries_;
        return Var{this, nodes_.size() - 1};
    }

    Node& node(std::size_t id) { return nodes_[id]; }
    const Node& node(std::size_t id) const { return nodes_[id]; }

    std::size_t size() const { return nodes_.size(); }
    /// Number of recorded primitive applications (leaves excluded).
    std::size_t entries() const { return entries_; }

    /// Gradient buffer of a node, allocated on first use.
    Tensor& grad_of(std::size_t id) {
        Node& n = nodes_[id];
        if (n.grad.size() != n.value.size()) n.grad = Tensor(n.value.shape());
        return n.grad;
    }

    const Tensor& gradient(Var v) { return grad_of(v.id); }

    /// Back-propagates from a scalar loss. Returns the number of backward
    /// rules applied; bound Parameters receive their gradients additively.
    std::size_t backward(Var loss) {
        if (loss.tape != this) throw Error("backward: loss belongs to another tape");
        if (nodes_[loss.id].value.size() != 1) {
            throw Error("backward: loss must be scalar, got shape " +
                        shape_str(nodes_[loss.id].value.shape()));
        }
        for (Node& n : nodes_) {
            if (n.needs_grad) {
                if (n.grad.size() != n.value.size()) n.grad = Tensor(n.value.shape());
                else n.grad.fill(0.0);
            }
        }
        grad_of(loss.id)[0] = 1.0;
        std::size_t applied = 0;
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.backward) continue;
            ++applied;
            if (n.needs_grad) n.backward(*this, i);
        }
        // Entries recorded after the loss do not influence it but still count.
        for (std::size_t i = loss.id + 1; i < nodes_.size(); ++i) {
            if (nodes_[i].backward) ++applied;
        }
        for (Node& n : nodes_) {
            if (n.param != nullptr) {
                double* dst = n.param->grad.data();
                const double* src = n.grad.data();
                for (std::size_t k = 0; k < n.grad.size(); ++k) dst[k] += src[k];
            }
        }
        return applied;
    }

    bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

private:
    Var push_leaf(Tensor value, Parameter* p, bool needs_grad) {
        Node n;
        n.value = std::move(value);
        n.param = p;
        n.needs_grad = needs_grad;
        nodes_.push_back(std::move(n));
        return Var{this, nodes_.size() - 1};
    }

    std::deque<Node> nodes_;
    std::size_t entries_ = 0;
};

inline const Tensor& Var::value() const { return tape->node(id).value; }

namespace ops {

namespace detail {

inline Tape& same_tape(std::initializer_list<Var> vars) {
    Tape* t = vars.begin()->tape;
    for (const Var& v : vars) {
        if (v.tape != t || t == nullptr) throw Error("op: operands live on different tapes");
    }
    return *t;
}

[[noreturn]] inline void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw Error(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                shape_str(b.shape()));
}

template <class Fwd, class Deriv>
Var unary(Var a, const char* op, Fwd fwd, Deriv deriv) {
    Tape& t = *a.tape;
    const Tensor& x = a.value();
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
    const std::size_t ai = a.id;
    return t.record(std::move(out), {ai}, op, [ai, deriv](Tape& tp, std::size_t self) {
        if (!tp.needs_grad(ai)) return;
        const Tensor& xv = tp.node(ai).value;
        const Tensor& yv = tp.node(self).value;
        const Tensor& g = tp.node(self).grad;
        Tensor& ga = tp.grad_of(ai);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(xv[i], yv[i]);
    });
}

}  // namespace detail

/// Matrix product of rank-2 operands, or batched product of rank-3 operands
/// sharing the leading axis.
inline Var matmul(Var a, Var b) {
    Tape& t = detail::same_tape({a, b});
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    std::size_t batch = 1, n = 0, k = 0, m = 0;
    if (x.rank() == 2 && y.rank() == 2 && x.dim(1) == y.dim(0)) {
        n = x.dim(0); k = x.dim(1); m = y.dim(1);
    } else if (x.rank() == 3 && y.rank() == 3 && x.dim(0) == y.dim(0) && x.dim(2) == y.dim(1)) {
        batch = x.dim(0); n = x.dim(1); k = x.dim(2); m = y.dim(2);
    } else {
        detail::shape_error("matmul", x, y);
    }
    Tensor out(batch == 1 && x.rank() == 2 ? Shape{n, m} : Shape{batch, n, m});
    for (std::size_t bi = 0; bi < batch; ++bi) {
        modbench::detail::gemm_nn(x.data() + bi * n * k, y.data() + bi * k * m,
                                  out.data() + bi * n * m, n, k, m);
    }
    const std::size_t ai = a.id, bid = b.id;
    return t.record(std::move(out), {ai, bid}, "matmul",
                    [ai, bid, batch, n, k, m](Tape& tp, std::size_t self) {
                        const Tensor& g = tp.node(self).grad;
                        if (tp.needs_grad(ai)) {
                            Tensor& ga = tp.grad_of(ai);
                            const Tensor& yv = tp.node(bid).value;
                            for (std::size_t bi = 0; bi < batch; ++bi) {
                                modbench::detail::gemm_nt(g.data() + bi * n * m,
                                                          yv.data() + bi * k * m,
                                                          ga.data() + bi * n * k, n, k, m);
                            }
                        }
                        if (tp.needs_grad(bid)) {
                            Tensor& gb = tp.grad_of(bid);
                            const Tensor& xv = tp.node(ai).value;
                            for (std::size_t bi = 0; bi < batch; ++bi) {
                                modbench::detail::gemm_tn(xv.data() + bi * n * k,
                                                          g.data() + bi * n * m,
                                                          gb.data() + bi * k * m, n, k, m);
                            }
                        }
                    });
}

/// Elementwise sum of equal shapes, or bias-add of a vector over the last axis.
inline Var add(Var a, Var b) {
    Tape& t = detail::same_tape({a, b});
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    const bool bias = !x.same_shape(y) && y.rank() == 1 && y.size() == x.cols();
    if (!x.same_shape(y) && !bias) detail::shape_error("add", x, y);
    Tensor out = x;
    if (bias) {
        const std::size_t c = x.cols();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i % c];
    } else {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
    }
    const std::size_t ai = a.id, bid = b.id;
    return t.record(std::move(out), {ai, bid}, "add", [ai, bid, bias](Tape& tp, std::size_t self) {
        const Tensor& g = tp.node(self).grad;
        if (tp.needs_grad(ai)) {
            Tensor& ga = tp.grad_of(ai);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (tp.needs_grad(bid)) {
            Tensor& gb = tp.grad_of(bid);
            if (bias) {
                const std::size_t c = gb.size();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i % c] += g[i];
            } else {
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
        }
    });
}

inline Var sub(Var a, Var b) {
    Tape& t = detail::same_tape({a, b});
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    if (!x.same_shape(y)) detail::shape_error("subtract", x, y);
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y[i];
    const std::size_t ai = a.id, bid = b.id;
    return t.record(std::move(out), {ai, bid}, "subtract", [ai, bid](Tape& tp, std::size_t self) {
        const Tensor& g = tp.node(self).grad;
        if (tp.needs_grad(ai)) {
            Tensor& ga = tp.grad_of(ai);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (tp.needs_grad(bid)) {
            Tensor& gb = tp.grad_of(bid);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
}

inline Var mul(Var a, Var b) {
    Tape& t = detail::same_tape({a, b});
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    if (!x.same_shape(y)) detail::shape_error("elementwise-multiply", x, y);
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
    const std::size_t ai = a.id, bid = b.id;
    return t.record(std::move(out), {ai, bid}, "elementwise-multiply",
                    [ai, bid](Tape& tp, std::size_t self) {
                        const Tensor& g = tp.node(self).grad;
                        if (tp.needs_grad(ai)) {
                            Tensor& ga = tp.grad_of(ai);
                            const Tensor& yv = tp.node(bid).value;
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * yv[i];
                        }
                        if (tp.needs_grad(bid)) {
                            Tensor& gb = tp.grad_of(bid);
                            const Tensor& xv = tp.node(ai).value;
                            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * xv[i];
                        }
                    });
}

inline Var scale(Var a, double s) {
    return detail::unary(
        a, "scalar-scale", [s](double x) { return s * x; }, [s](double, double) { return s; });
}

inline Var relu(Var a) {
    return detail::unary(
        a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Var tanh(Var a) {
    return detail::unary(
        a, "tanh", [](double x) { return std::tanh(x); },
        [](double, double y) { return 1.0 - y * y; });
}

inline Var sigmoid(Var a) {
    return detail::unary(
        a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
        [](double, double y) { return y * (1.0 - y); });
}

inline Var exp(Var a) {
    return detail::unary(
        a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Var log(Var a) {
    const Tensor& x = a.value();
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0)) {
            throw Error("log: non-positive operand " + std::to_string(x[i]) + " at index " +
                        std::to_string(i) + " of shape " + shape_str(x.shape()));
        }
    }
    return detail::unary(
        a, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

inline Var abs(Var a) {
    return detail::unary(
        a, "abs", [](double x) { return std::fabs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

/// Softmax along the last axis, max-subtracted.
inline Var softmax(Var a) {
    Tape& t = *a.tape;
    const Tensor& x = a.value();
    Tensor out(x.shape());
    const std::size_t c = x.cols();
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const double* xr = x.data() + r * c;
        double* yr = out.data() + r * c;
        const double mx = *std::max_element(xr, xr + c);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            z += yr[j];
        }
        for (std::size_t j = 0; j < c; ++j) yr[j] /= z;
    }
    const std::size_t ai = a.id;
    return t.record(std::move(out), {ai}, "softmax", [ai, c](Tape& tp, std::size_t self) {
        if (!tp.needs_grad(ai)) return;
        const Tensor& y = tp.node(self).value;
        const Tensor& g = tp.node(self).grad;
        Tensor& ga = tp.grad_of(ai);
        for (std::size_t r = 0; r < y.rows(); ++r) {
            const double* yr = y.data() + r * c;
            const double* gr = g.data() + r * c;
            double dot = 0.0;
            for (std::size_t j = 0; j < c; ++j) dot += yr[j] * gr[j];
            for (std::size_t j = 0; j < c; ++j) ga[r * c + j] += yr[j] * (gr[j] - dot);
        }
    });
}

/// Sum of all elements, shape [1].
inline Var sum(Var a) {
    Tape& t = *a.tape;
    const Tensor& x = a.value();
    double s = 0.0;
    for (double v : x.values()) s += v;
    const std::size_t ai = a.id;
    return t.record(Tensor::scalar(s), {ai}, "sum", [ai](Tape& tp, std::size_t self) {
        if (!tp.needs_grad(ai)) return;
        const double g = tp.node(self).grad[0];
        Tensor& ga = tp.grad_of(ai);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
}

inline Var mean(Var a) {
    Tape& t = *a.tape;
    const Tensor& x = a.value();
    double s = 0.0;
    for (double v : x.values()) s += v;
    const double n = static_cast<double>(x.size());
    const std::size_t ai = a.id;
    return t.record(Tensor::scalar(s / n), {ai}, "mean", [ai, n](Tape& tp, std::size_t self) {
        if (!tp.needs_grad(ai)) return;
        const double g = tp.node(self).grad[0] / n;
        Tensor& ga = tp.grad_of(ai);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
}

/// Concatenation along the last axis; leading axes must agree.
inline Var concat(const std::vector<Var>& parts) {
    if (parts.empty()) throw Error("concat-last-axis: no operands");
    Tape& t = *parts.front().tape;
    const Tensor& first = parts.front().value();
    Shape lead(first.shape().begin(), first.shape().end() - 1);
    std::vector<std::size_t> widths;
    std::vector<std::size_t> ids;
    std::size_t total = 0;
    for (const Var& p : parts) {
        if (p.tape != &t) throw Error("concat-last-axis: operands live on different tapes");
        const Tensor& v = p.value();
        Shape l(v.shape().begin(), v.shape().end() - 1);
        if (l != lead) detail::shape_error("concat-last-axis", first, v);
        widths.push_back(v.cols());
        ids.push_back(p.id);
        total += v.cols();
    }
    Shape os = lead;
    os.push_back(total);
    Tensor out(os);
    const std::size_t rows = first.rows();
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Tensor& v = parts[k].value();
        const std::size_t w = widths[k];
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(v.data() + r * w, w, out.data() + r * total + off);
        }
        off += w;
    }
    return t.record(std::move(out), ids, "concat-last-axis",
                    [ids, widths, total, rows](Tape& tp, std::size_t self) {
                        const Tensor& g = tp.node(self).grad;
                        std::size_t o = 0;
                        for (std::size_t k = 0; k < ids.size(); ++k) {
                            const std::size_t w = widths[k];
                            if (tp.needs_grad(ids[k])) {
                                Tensor& gk = tp.grad_of(ids[k]);
                                for (std::size_t r = 0; r < rows; ++r) {
                                    for (std::size_t j = 0; j < w; ++j) {
                                        gk[r * w + j] += g[r * total + o + j];
                                    }
                                }
                            }
                            o += w;
                        }
                    });
}

/// Columns [begin, end) of the last axis.
inline Var slice(Var a, std::size_t begin, std::size_t end) {
    Tape& t = *a.tape;
    const Tensor& x = a.value();
    const std::size_t c = x.cols();
    if (begin >= end || end > c) {
        throw Error("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                    ") outside last axis of " + shape_str(x.shape()));
    }
    const std::size_t w = end - begin;
    Shape os = x.shape();
    os.back() = w;
    Tensor out(os);
    const std::size_t rows = x.rows();
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(x.data() + r * c + begin, w, out.data() + r * w);
    }
    const std::size_t ai = a.id;
    return t.record(std::move(out), {ai}, "slice", [ai, begin, w, c, rows](Tape& tp, std::size_t self) {
        if (!tp.needs_grad(ai)) return;
        const Tensor& g = tp.node(self).grad;
        Tensor& ga = tp.grad_of(ai);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < w; ++j) ga[r * c + begin + j] += g[r * w + j];
        }
    });
}

/// Selects rows of a rank-2 tensor; indices may repeat.
inline Var gather_rows(Var a, std::vector<std::size_t> indices) {
    Tape& t = *a.tape;
    const Tensor& x = a.value();
    if (x.rank() != 2) throw Error("gather-rows: operand must be rank 2, got " + shape_str(x.shape()));
    if (indices.empty()) throw Error("gather-rows: no indices");
    const std::size_t c = x.cols();
    Tensor out({indices.size(), c});
    for (std::size_t r = 0; r < indices.size(); ++r) {
        if (indices[r] >= x.dim(0)) {
            throw Error("gather-rows: index " + std::to_string(indices[r]) + " out of range for " +
                        shape_str(x.shape()));
        }
        std::copy_n(x.data() + indices[r] * c, c, out.data() + r * c);
    }
    const std::size_t ai = a.id;
    return t.record(std::move(out), {ai}, "gather-rows",
                    [ai, c, idx = std::move(indices)](Tape& tp, std::size_t self) {
                        if (!tp.needs_grad(ai)) return;
                        const Tensor& g = tp.node(self).grad;
                        Tensor& ga = tp.grad_of(ai);
                        for (std::size_t r = 0; r < idx.size(); ++r) {
                            for (std::size_t j = 0; j < c; ++j) ga[idx[r] * c + j] += g[r * c + j];
                        }
                    });
}

/// Swaps the last two axes of a rank-2 or rank-3 tensor.
inline Var transpose(Var a) {
    Tape& t = *a.tape;
    const Tensor& x = a.value();
    if (x.rank() != 2 && x.rank() != 3) {
        throw Error("transpose-2d: operand must be rank 2 or 3, got " + shape_str(x.shape()));
    }
    const std::size_t batch = x.rank() == 3 ? x.dim(0) : 1;
    const std::size_t n = x.dim(x.rank() - 2), m = x.dim(x.rank() - 1);
    Shape os = x.shape();
    std::swap(os[os.size() - 1], os[os.size() - 2]);
    Tensor out(os);
    for (std::size_t b = 0; b < batch; ++b) {
        const double* src = x.data() + b * n * m;
        double* dst = out.data() + b * n * m;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) dst[j * n + i] = src[i * m + j];
        }
    }
    const std::size_t ai = a.id;
    return t.record(std::move(out), {ai}, "transpose-2d", [ai, batch, n, m](Tape& tp, std::size_t self) {
        if (!tp.needs_grad(ai)) return;
        const Tensor& g = tp.node(self).grad;
        Tensor& ga = tp.grad_of(ai);
        for (std::size_t b = 0; b < batch; ++b) {
            const double* src = g.data() + b * n * m;
            double* dst = ga.data() + b * n * m;
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < m; ++j) dst[i * m + j] += src[j * n + i];
            }
        }
    });
}

/// Reinterprets the element order under a new shape.
inline Var reshape(Var a, Shape shape) {
    Tape& t = *a.tape;
    Tensor out = a.value().reshaped(std::move(shape));
    const std::size_t ai = a.id;
    return t.record(std::move(out), {ai}, "reshape", [ai](Tape& tp, std::size_t self) {
        if (!tp.needs_grad(ai)) return;
        const Tensor& g = tp.node(self).grad;
        Tensor& ga = tp.grad_of(ai);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

}  // namespace ops
}  // namespace modbench
