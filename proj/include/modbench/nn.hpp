// Copyright (c) 2026, The modbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "modbench/autodiff.hpp"
#include "modbench/random.hpp"

namespace modbench {

struct NamedParameter {
    std::string name;
    Parameter* param;
};

/// y = x·W + b with W stored in × out.
struct Linear {
    Parameter weight;
    Parameter bias;

    Linear() = default;
    Linear(std::size_t in, std::size_t out) : weight(Tensor({in, out})), bias(Tensor({out})) {}

    std::size_t in() const { return weight.value.dim(0); }
    std::size_t out() const { return weight.value.dim(1); }

    /// Fan-in scaled uniform weights, zero bias.
    void init(Rng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in()));
        for (double& w : weight.value.values()) w = uniform(rng, -bound, bound);
        bias.value.fill(0.0);
    }
};

/// Two-layer perceptron: Linear → relu → Linear.
struct Perceptron {
    Linear first;
    Linear second;

    Perceptron() = default;
    Perceptron(std::size_t in, std::size_t hidden, std::size_t out) : first(in, hidden), second(hidden, out) {}

    void init(Rng& rng) {
        first.init(rng);
        second.init(rng);
    }
};

template <class L, class F>
void visit_linear(L& l, const std::string& prefix, F& f) {
    f(prefix + ".w", l.weight);
    f(prefix + ".b", l.bias);
}

template <class P, class F>
void visit_perceptron(P& p, const std::string& prefix, F& f) {
    visit_linear(p.first, prefix + ".0", f);
    visit_linear(p.second, prefix + ".1", f);
}

/// Puts parameters on a tape, once per forward pass. Parameters registered as
/// trainable become gradient-tracking leaves; anything else is a constant.
class Binder {
public:
    Binder(Tape& tape, const std::vector<NamedParameter>& trainable) : tape_(tape) {
        for (const auto& np : trainable) mutable_[np.param] = np.param;
    }

    Binder(Tape& tape, const std::vector<Parameter*>& trainable) : tape_(tape) {
        for (Parameter* p : trainable) mutable_[p] = p;
    }

    explicit Binder(Tape& tape) : tape_(tape) {}

    Tape& tape() { return tape_; }

    Var operator()(const Parameter& p) {
        if (auto it = bound_.find(&p); it != bound_.end()) return it->second;
        auto m = mutable_.find(&p);
        Var v = m != mutable_.end() ? tape_.param(*m->second) : tape_.constant(p.value);
        bound_.emplace(&p, v);
        return v;
    }

    Var linear(const Linear& l, Var x) {
        return ops::add(ops::matmul(x, (*this)(l.weight)), (*this)(l.bias));
    }

    Var perceptron(const Perceptron& p, Var x) {
        return linear(p.second, ops::relu(linear(p.first, x)));
    }

private:
    Tape& tape_;
    std::unordered_map<const Parameter*, Parameter*> mutable_;
    std::unordered_map<const Parameter*, Var> bound_;
};

}  // namespace modbench
