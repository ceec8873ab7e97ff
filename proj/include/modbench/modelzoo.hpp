// Copyright (c) 2026, The modbench Authors
// SPDX-License-Identifier: Apache-2.0
//
// The model hierarchy over MLP, MHA and RNN cells:
//
//   Monolithic   one network f(x, c)
//   Modular      R cells, each emitting an output and a confidence score;
//                p = softmax(scores)
//   ModularOp    R cells, p = softmax(g(c)) with g reading only the context
//   GtModular    R cells, p = one-hot(c)
//   RandomGate   R cells, p drawn uniformly from the simplex per decision point
//
// Every level shares the same encoders (a per-input encoder and a context
// encoder over one-hot c) and a shared decoder. Cell outputs are mixed as
// Σ p_m y_m before decoding. For MHA and RNN, gating happens per token/step;
// RNN cells propose a next state from the shared previous state and the
// mixed proposal is carried forward.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "modbench/autodiff.hpp"
#include "modbench/levels.hpp"
#include "modbench/nn.hpp"
#include "modbench/random.hpp"
#include "modbench/rulegen.hpp"

namespace modbench {

inline constexpr std::size_t kEmbedWidth = 16;
inline constexpr std::size_t kCellOutputWidth = 16;
inline constexpr std::size_t kHeadDim = 8;
inline constexpr std::size_t kMinWidth = 4;
inline constexpr std::size_t kMinDecoderWidth = 8;
inline constexpr double kAttentionMask = -1e9;

struct ModelConfig {
    Level level = Level::Modular;
    Family family = Family::Mlp;
    int R = 2;
    std::size_t input_width = 2;
    std::size_t hidden_width = 32;
    std::size_t decoder_width = kMinDecoderWidth;
    std::size_t gate_width = 0;  // 0 selects max(R, 8)
    std::size_t readout_slots = 1;
    std::size_t heads_per_module = 2;

    bool modular() const { return level != Level::Monolithic; }
    std::size_t embed_width() const { return kEmbedWidth; }
    std::size_t context_width() const { return std::max<std::size_t>(kEmbedWidth, R); }
    std::size_t cell_output_width() const { return family == Family::Rnn ? kRnnDim : kCellOutputWidth; }
    std::size_t gate_hidden() const {
        return gate_width != 0 ? gate_width : std::max<std::size_t>(static_cast<std::size_t>(R), 8);
    }
    std::size_t trunk_depth() const { return family == Family::Mlp ? 2 : 1; }
    std::size_t cell_count() const { return modular() ? static_cast<std::size_t>(R) : 1; }
    std::size_t heads_per_cell() const {
        if (family != Family::Mha) return 0;
        return modular() ? heads_per_module : heads_per_module * static_cast<std::size_t>(R);
    }
    std::size_t slots() const { return level == Level::Monolithic ? readout_slots : 1; }
    bool cell_scores() const {
        return level == Level::Modular || (level == Level::Monolithic && readout_slots > 1);
    }
    std::size_t token_width() const { return embed_width() + context_width(); }
    /// Width of a cell's trunk input.
    std::size_t cell_input_width() const {
        switch (family) {
            case Family::Mlp: return 2 * embed_width() + context_width();
            case Family::Mha: return heads_per_cell() * kHeadDim + embed_width() + context_width();
            case Family::Rnn: return embed_width() + context_width() + kRnnDim;
        }
        return 0;
    }
    /// Column where the encoded context starts inside a cell's trunk input.
    std::size_t context_offset() const {
        switch (family) {
            case Family::Mlp: return 2 * embed_width();
            case Family::Mha: return heads_per_cell() * kHeadDim + embed_width();
            case Family::Rnn: return embed_width();
        }
        return 0;
    }
};

inline std::size_t input_width_for(const TaskSpec& task) {
    switch (task.family) {
        case Family::Mlp: return 2;
        case Family::Mha: return task.mha().token_width();
        case Family::Rnn: return kRnnDim;
    }
    return 0;
}

struct AttentionHead {
    Linear query, key, value;
};

/// One module (or the whole monolithic network): optional attention heads,
/// a relu trunk, and one or more readout slots.
struct Cell {
    std::vector<AttentionHead> heads;
    std::vector<Linear> layers;
    std::vector<Linear> outs;
    std::vector<Linear> scores;
};

struct ForwardOutput {
    Var predictions;                // decision points × 1
    Tensor activations;             // decision points × R, rows on the simplex
    std::vector<int> rule_ids;      // true rule per decision point
    bool specialization_defined = true;  // false for Monolithic placeholders
};

class Model {
public:
    ModelConfig config;
    Perceptron input_encoder;
    Perceptron context_encoder;
    std::vector<Cell> cells;
    Perceptron gate;  // ModularOp only
    Perceptron decoder;

    /// Allocates every parameter with zeros.
    static Model allocate(const ModelConfig& cfg) {
        validate(cfg);
        Model m;
        m.config = cfg;
        const std::size_t E = cfg.embed_width();
        const std::size_t Ec = cfg.context_width();
        const std::size_t in = cfg.family == Family::Mlp ? 1 : cfg.input_width;
        m.input_encoder = Perceptron(in, E, E);
        m.context_encoder = Perceptron(static_cast<std::size_t>(cfg.R), Ec, Ec);
        for (std::size_t c = 0; c < cfg.cell_count(); ++c) {
            Cell cell;
            for (std::size_t h = 0; h < cfg.heads_per_cell(); ++h) {
                cell.heads.push_back({Linear(cfg.token_width(), kHeadDim),
                                      Linear(cfg.token_width(), kHeadDim),
                                      Linear(cfg.token_width(), kHeadDim)});
            }
            std::size_t width = cfg.cell_input_width();
            for (std::size_t l = 0; l < cfg.trunk_depth(); ++l) {
                cell.layers.emplace_back(width, cfg.hidden_width);
                width = cfg.hidden_width;
            }
            for (std::size_t k = 0; k < cfg.slots(); ++k) {
                cell.outs.emplace_back(width, cfg.cell_output_width());
                if (cfg.cell_scores()) cell.scores.emplace_back(width, 1);
            }
            m.cells.push_back(std::move(cell));
        }
        if (cfg.level == Level::ModularOp) {
            m.gate = Perceptron(Ec, cfg.gate_hidden(), static_cast<std::size_t>(cfg.R));
        }
        m.decoder = Perceptron(cfg.cell_output_width(), cfg.decoder_width, 1);
        return m;
    }

    static Model build(const ModelConfig& cfg, std::uint64_t seed) {
        Model m = allocate(cfg);
        Rng rng(seed);
        m.input_encoder.init(rng);
        m.context_encoder.init(rng);
        for (Cell& c : m.cells) {
            for (AttentionHead& h : c.heads) {
                h.query.init(rng);
                h.key.init(rng);
                h.value.init(rng);
            }
            for (Linear& l : c.layers) l.init(rng);
            for (Linear& l : c.outs) l.init(rng);
            for (Linear& l : c.scores) l.init(rng);
        }
        if (cfg.level == Level::ModularOp) m.gate.init(rng);
        m.decoder.init(rng);
        m.gate_seed_ = derive_seed({seed, 0x67617465ULL});
        return m;
    }

    template <class F>
    void visit(F&& f) { visit_impl(*this, f); }
    template <class F>
    void visit(F&& f) const { visit_impl(*this, f); }

    std::vector<NamedParameter> parameters() {
        std::vector<NamedParameter> out;
        visit([&](const std::string& name, Parameter& p) { out.push_back({name, &p}); });
        return out;
    }

    std::vector<Parameter*> parameter_ptrs() {
        std::vector<Parameter*> out;
        visit([&](const std::string&, Parameter& p) { out.push_back(&p); });
        return out;
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        visit([&](const std::string&, const Parameter& p) { n += p.size(); });
        return n;
    }

    /// Forward pass whose parameters accumulate gradients on backward.
    ForwardOutput forward(Tape& tape, const Batch& batch) {
        Binder bind(tape, parameter_ptrs());
        return run(bind, batch);
    }

    /// Forward pass with all parameters as constants.
    ForwardOutput infer(Tape& tape, const Batch& batch) const {
        Binder bind(tape);
        return run(bind, batch);
    }

    std::uint64_t gate_seed() const { return gate_seed_; }
    void set_gate_seed(std::uint64_t s) { gate_seed_ = s; gate_draws_ = 0; }

private:
    static void validate(const ModelConfig& cfg) {
        if (cfg.R < 1) throw Error("model: R must be >= 1");
        if (cfg.hidden_width < 1 || cfg.decoder_width < 1) throw Error("model: widths must be positive");
        if (cfg.readout_slots < 1) throw Error("model: readout_slots must be >= 1");
        if (cfg.modular() && cfg.readout_slots != 1) {
            throw Error("model: readout slots are a monolithic-only option");
        }
        if (cfg.family == Family::Mha && cfg.heads_per_module < 1) {
            throw Error("model: MHA cells need at least one head");
        }
    }

    template <class Self, class F>
    static void visit_impl(Self& m, F& f) {
        visit_perceptron(m.input_encoder, "enc.x", f);
        visit_perceptron(m.context_encoder, "enc.c", f);
        for (std::size_t c = 0; c < m.cells.size(); ++c) {
            auto& cell = m.cells[c];
            const std::string p = "cell" + std::to_string(c);
            for (std::size_t h = 0; h < cell.heads.size(); ++h) {
                const std::string hp = p + ".head" + std::to_string(h);
                visit_linear(cell.heads[h].query, hp + ".q", f);
                visit_linear(cell.heads[h].key, hp + ".k", f);
                visit_linear(cell.heads[h].value, hp + ".v", f);
            }
            for (std::size_t l = 0; l < cell.layers.size(); ++l) {
                visit_linear(cell.layers[l], p + ".layer" + std::to_string(l), f);
            }
            for (std::size_t k = 0; k < cell.outs.size(); ++k) {
                visit_linear(cell.outs[k], p + ".out" + std::to_string(k), f);
            }
            for (std::size_t k = 0; k < cell.scores.size(); ++k) {
                visit_linear(cell.scores[k], p + ".score" + std::to_string(k), f);
            }
        }
        if (m.config.level == Level::ModularOp) visit_perceptron(m.gate, "gate", f);
        visit_perceptron(m.decoder, "dec", f);
    }

    struct CellResult {
        Var output;  // rows × cell_output_width
        Var score;   // rows × 1 (Modular only)
    };

    Var attention(Binder& bind, const AttentionHead& h, Var tokens, Var mask, std::size_t batch,
                  std::size_t seq) const {
        Var q = ops::reshape(bind.linear(h.query, tokens), {batch, seq, kHeadDim});
        Var k = ops::reshape(bind.linear(h.key, tokens), {batch, seq, kHeadDim});
        Var v = ops::reshape(bind.linear(h.value, tokens), {batch, seq, kHeadDim});
        Var s = ops::scale(ops::matmul(q, ops::transpose(k)), 1.0 / std::sqrt(double(kHeadDim)));
        Var a = ops::softmax(ops::add(s, mask));
        return ops::reshape(ops::matmul(a, v), {batch * seq, kHeadDim});
    }

    /// Runs a cell on its trunk input and mixes its readout slots.
    CellResult run_cell(Binder& bind, const Cell& cell, Var u) const {
        Var h = u;
        for (const Linear& l : cell.layers) h = ops::relu(bind.linear(l, h));
        std::vector<Var> outs;
        for (const Linear& l : cell.outs) {
            Var o = bind.linear(l, h);
            if (config.family == Family::Rnn) o = ops::tanh(o);
            outs.push_back(o);
        }
        if (config.level == Level::Monolithic) {
            if (outs.size() == 1) return {outs[0], {}};
            std::vector<Var> sc;
            for (const Linear& l : cell.scores) sc.push_back(bind.linear(l, h));
            return {mix(bind.tape(), outs, ops::softmax(ops::concat(sc))), {}};
        }
        CellResult r{outs[0], {}};
        if (!cell.scores.empty()) r.score = bind.linear(cell.scores[0], h);
        return r;
    }

    /// Σ_m p[:, m] · outs[m] using only primitive ops.
    static Var mix(Tape& t, const std::vector<Var>& outs, Var p) {
        const std::size_t k = outs.size();
        const std::size_t d = outs[0].value().cols();
        Tensor expand({k, k * d});
        Tensor fold({k * d, d});
        for (std::size_t m = 0; m < k; ++m) {
            for (std::size_t j = 0; j < d; ++j) {
                expand.at(m, m * d + j) = 1.0;
                fold.at(m * d + j, j) = 1.0;
            }
        }
        Var stacked = ops::concat(outs);
        Var weights = ops::matmul(p, t.constant(std::move(expand)));
        return ops::matmul(ops::mul(stacked, weights), t.constant(std::move(fold)));
    }

    Tensor random_gate_rows(std::size_t rows) const {
        const std::size_t R = static_cast<std::size_t>(config.R);
        Rng rng(derive_seed({gate_seed_, gate_draws_++}));
        Tensor p({rows, R});
        for (std::size_t i = 0; i < rows; ++i) {
            const auto d = dirichlet(rng, R, 1.0);
            std::copy(d.begin(), d.end(), p.data() + i * R);
        }
        return p;
    }

    /// Activation probabilities for one set of decision points.
    Var gate_probs(Binder& bind, const std::vector<CellResult>& cells, Var context, Var onehot) const {
        Tape& t = bind.tape();
        switch (config.level) {
            case Level::Modular: {
                std::vector<Var> sc;
                for (const CellResult& c : cells) sc.push_back(c.score);
                return ops::softmax(ops::concat(sc));
            }
            case Level::ModularOp: return ops::softmax(bind.perceptron(gate, context));
            case Level::GtModular: return onehot;
            case Level::RandomGate: return t.constant(random_gate_rows(onehot.value().rows()));
            case Level::Monolithic: break;
        }
        throw Error("gate_probs: monolithic models have no gate");
    }

    /// Mixed output and activation rows for one set of decision points.
    std::pair<Var, Tensor> mixed_output(Binder& bind, const std::vector<Var>& trunk_inputs,
                                        Var context, Var onehot) const {
        std::vector<CellResult> results;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            results.push_back(run_cell(bind, cells[c], trunk_inputs[c]));
        }
        const std::size_t rows = onehot.value().rows();
        if (config.level == Level::Monolithic) {
            return {results[0].output,
                    Tensor({rows, static_cast<std::size_t>(config.R)}, 1.0 / config.R)};
        }
        Var p = gate_probs(bind, results, context, onehot);
        std::vector<Var> outs;
        for (const CellResult& r : results) outs.push_back(r.output);
        return {mix(bind.tape(), outs, p), p.value()};
    }

    ForwardOutput run(Binder& bind, const Batch& batch) const {
        if (batch.family != config.family) {
            throw Error("forward: batch family " + to_string(batch.family) + " does not match model family " +
                        to_string(config.family));
        }
        if (batch.R != config.R) throw Error("forward: batch rule count does not match model R");
        if (batch.inputs.cols() != config.input_width) {
            throw Error("forward: batch input width " + std::to_string(batch.inputs.cols()) +
                        " does not match model input width " + std::to_string(config.input_width));
        }
        Tape& t = bind.tape();
        const std::size_t rows = batch.decision_points();
        const std::size_t R = static_cast<std::size_t>(config.R);
        Tensor onehot_t({rows, R});
        for (std::size_t i = 0; i < rows; ++i) onehot_t.at(i, batch.rule_ids[i]) = 1.0;
        Var onehot = t.constant(std::move(onehot_t));
        Var x = t.constant(batch.inputs);
        Var ec = bind.perceptron(context_encoder, onehot);

        ForwardOutput out;
        out.rule_ids = batch.rule_ids;
        out.specialization_defined = config.modular();

        switch (config.family) {
            case Family::Mlp: {
                Var e1 = bind.perceptron(input_encoder, ops::slice(x, 0, 1));
                Var e2 = bind.perceptron(input_encoder, ops::slice(x, 1, 2));
                Var z = ops::concat({e1, e2, ec});
                auto [mixed, p] = mixed_output(bind, std::vector<Var>(cells.size(), z), ec, onehot);
                out.predictions = bind.perceptron(decoder, mixed);
                out.activations = std::move(p);
                break;
            }
            case Family::Mha: {
                const std::size_t n = batch.seq_len;
                const std::size_t b = batch.batch_size;
                Var ex = bind.perceptron(input_encoder, x);
                Var tokens = ops::concat({ex, ec});
                Tensor mask_t({b, n, n});
                for (std::size_t s = 0; s < b; ++s) {
                    for (std::size_t i = 0; i < n; ++i) mask_t[(s * n + i) * n + i] = kAttentionMask;
                }
                Var mask = t.constant(std::move(mask_t));
                std::vector<Var> inputs;
                for (const Cell& cell : cells) {
                    std::vector<Var> parts;
                    for (const AttentionHead& h : cell.heads) parts.push_back(attention(bind, h, tokens, mask, b, n));
                    parts.push_back(ex);
                    parts.push_back(ec);
                    inputs.push_back(ops::concat(parts));
                }
                auto [mixed, p] = mixed_output(bind, inputs, ec, onehot);
                out.predictions = bind.perceptron(decoder, mixed);
                out.activations = std::move(p);
                break;
            }
            case Family::Rnn: {
                const std::size_t n = batch.seq_len;
                const std::size_t b = batch.batch_size;
                Var ex = bind.perceptron(input_encoder, x);
                Var state = t.constant(Tensor({b, kRnnDim}));
                std::vector<Var> step_preds;
                Tensor acts({rows, R});
                for (std::size_t step = 0; step < n; ++step) {
                    std::vector<std::size_t> idx(b);
                    for (std::size_t s = 0; s < b; ++s) idx[s] = s * n + step;
                    Var ex_n = ops::gather_rows(ex, idx);
                    Var ec_n = ops::gather_rows(ec, idx);
                    Var oh_n = ops::gather_rows(onehot, idx);
                    Var u = ops::concat({ex_n, ec_n, state});
                    auto [next, p] = mixed_output(bind, std::vector<Var>(cells.size(), u), ec_n, oh_n);
                    state = next;
                    step_preds.push_back(bind.perceptron(decoder, state));
                    for (std::size_t s = 0; s < b; ++s) {
                        std::copy_n(p.data() + s * R, R, acts.data() + idx[s] * R);
                    }
                }
                out.predictions = ops::reshape(ops::concat(step_preds), {rows, 1});
                out.activations = std::move(acts);
                break;
            }
        }
        return out;
    }

    std::uint64_t gate_seed_ = 0;
    mutable std::uint64_t gate_draws_ = 0;
};

inline std::size_t param_count(const Model& m) { return m.param_count(); }

inline std::size_t param_count(const ModelConfig& cfg) { return Model::allocate(cfg).param_count(); }

struct ResolvedWidths {
    std::size_t hidden = 0;
    std::size_t decoder = 0;
};

/// Largest trunk width whose model fits in `capacity`, then the largest
/// decoder width that still fits; the decoder absorbs the remainder so that
/// levels land within a few dozen parameters of the budget.
inline ResolvedWidths resolve_width(ModelConfig cfg, std::size_t capacity) {
    auto count = [&](std::size_t h, std::size_t d) {
        cfg.hidden_width = h;
        cfg.decoder_width = d;
        return param_count(cfg);
    };
    if (count(kMinWidth, kMinDecoderWidth) > capacity) {
        throw Error("resolve_width: capacity " + std::to_string(capacity) + " too small for " +
                    to_string(cfg.level) + " " + to_string(cfg.family) + " at R=" + std::to_string(cfg.R) +
                    " (needs at least " + std::to_string(count(kMinWidth, kMinDecoderWidth)) + ")");
    }
    auto largest = [&](std::size_t lo, auto&& fits) {
        std::size_t hi = lo;
        while (fits(hi * 2)) hi *= 2;
        std::size_t a = hi, b = hi * 2;  // fits(a), !fits(b)
        while (b - a > 1) {
            const std::size_t mid = a + (b - a) / 2;
            (fits(mid) ? a : b) = mid;
        }
        return a;
    };
    ResolvedWidths r;
    r.hidden = largest(kMinWidth, [&](std::size_t h) { return count(h, kMinDecoderWidth) <= capacity; });
    r.decoder = largest(kMinDecoderWidth, [&](std::size_t d) { return count(r.hidden, d) <= capacity; });
    return r;
}

/// Configuration for a task at a parameter budget.
inline ModelConfig make_config(Level level, const TaskSpec& task, std::size_t capacity) {
    ModelConfig cfg;
    cfg.level = level;
    cfg.family = task.family;
    cfg.R = task.R;
    cfg.input_width = input_width_for(task);
    const ResolvedWidths w = resolve_width(cfg, capacity);
    cfg.hidden_width = w.hidden;
    cfg.decoder_width = w.decoder;
    return cfg;
}

namespace detail {

// Solves L·M = I for L (k × e) given M (e × k), e ≥ k, via normal equations.
inline std::vector<double> left_inverse(const std::vector<double>& M, std::size_t e, std::size_t k) {
    std::vector<double> aug(k * 2 * k, 0.0);  // [G | I]
    std::vector<double> G(k * k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < e; ++r) s += M[r * k + i] * M[r * k + j];
            G[i * k + j] = s;
        }
    }
    // Invert G by Gauss-Jordan with partial pivoting.
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) aug[i * 2 * k + j] = G[i * k + j];
        aug[i * 2 * k + k + i] = 1.0;
    }
    for (std::size_t col = 0; col < k; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < k; ++r) {
            if (std::fabs(aug[r * 2 * k + col]) > std::fabs(aug[piv * 2 * k + col])) piv = r;
        }
        if (std::fabs(aug[piv * 2 * k + col]) < 1e-12) {
            throw Error("reduce_level: context encodings are linearly dependent; no exact gate exists");
        }
        if (piv != col) {
            for (std::size_t j = 0; j < 2 * k; ++j) std::swap(aug[piv * 2 * k + j], aug[col * 2 * k + j]);
        }
        const double d = aug[col * 2 * k + col];
        for (std::size_t j = 0; j < 2 * k; ++j) aug[col * 2 * k + j] /= d;
        for (std::size_t r = 0; r < k; ++r) {
            if (r == col) continue;
            const double f = aug[r * 2 * k + col];
            if (f == 0.0) continue;
            for (std::size_t j = 0; j < 2 * k; ++j) aug[r * 2 * k + j] -= f * aug[col * 2 * k + j];
        }
    }
    std::vector<double> L(k * e, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t r = 0; r < e; ++r) {
            double s = 0.0;
            for (std::size_t j = 0; j < k; ++j) s += aug[i * 2 * k + k + j] * M[r * k + j];
            L[i * e + r] = s;
        }
    }
    return L;
}

inline void copy_linear(const Linear& src, Linear& dst) {
    dst.weight.value = src.weight.value;
    dst.bias.value = src.bias.value;
}

}  // namespace detail

/// Logit gap used when a soft gate must imitate a hard one-hot gate.
inline constexpr double kWitnessLogitGap = 50.0;

/// Builds the next-weaker level computing the same function:
///   GtModular → ModularOp: g maps each context encoding to gap·one-hot.
///   ModularOp → Modular:   every cell's trunk is widened with a copy of g's
///                          hidden layer, whose output feeds the score head.
///   Modular   → Monolithic: all cells side by side in one block-diagonal
///                          trunk with R readout slots.
inline Model reduce_level(const Model& src) {
    const ModelConfig& sc = src.config;
    const std::size_t R = static_cast<std::size_t>(sc.R);
    ModelConfig dc = sc;
    switch (sc.level) {
        case Level::GtModular: {
            dc.level = Level::ModularOp;
            if (dc.gate_hidden() < R) throw Error("reduce_level: gate hidden width must be >= R");
            const std::size_t Ec = sc.context_width();
            if (Ec < R) throw Error("reduce_level: context width must be >= R");
            Model dst = Model::allocate(dc);
            dst.input_encoder = src.input_encoder;
            dst.context_encoder = src.context_encoder;
            dst.cells = src.cells;
            dst.decoder = src.decoder;
            // Context encodings of every rule, as columns.
            Tape tape;
            Binder bind(tape);
            Var ec = bind.perceptron(src.context_encoder, tape.constant(Tensor::identity(R)));
            std::vector<double> M(Ec * R);
            for (std::size_t r = 0; r < R; ++r) {
                for (std::size_t j = 0; j < Ec; ++j) M[j * R + r] = ec.value().at(r, j);
            }
            const auto L = detail::left_inverse(M, Ec, R);
            for (std::size_t r = 0; r < R; ++r) {
                for (std::size_t j = 0; j < R; ++j) {
                    double s = 0.0;
                    for (std::size_t e = 0; e < Ec; ++e) s += L[r * Ec + e] * M[e * R + j];
                    if (std::fabs(s - (r == j ? 1.0 : 0.0)) > 1e-8) {
                        throw Error("reduce_level: context encodings too ill-conditioned for an exact gate");
                    }
                }
            }
            Tensor& w1 = dst.gate.first.weight.value;  // Ec × G
            for (std::size_t r = 0; r < R; ++r) {
                for (std::size_t e = 0; e < Ec; ++e) w1.at(e, r) = L[r * Ec + e];
            }
            Tensor& w2 = dst.gate.second.weight.value;  // G × R
            for (std::size_t r = 0; r < R; ++r) w2.at(r, r) = kWitnessLogitGap;
            dst.set_gate_seed(src.gate_seed());
            return dst;
        }
        case Level::ModularOp: {
            dc.level = Level::Modular;
            const std::size_t H = sc.hidden_width;
            const std::size_t G = sc.gate_hidden();
            dc.hidden_width = H + G;
            Model dst = Model::allocate(dc);
            dst.input_encoder = src.input_encoder;
            dst.context_encoder = src.context_encoder;
            dst.decoder = src.decoder;
            const std::size_t off = sc.context_offset();
            const std::size_t Ec = sc.context_width();
            for (std::size_t m = 0; m < R; ++m) {
                const Cell& s = src.cells[m];
                Cell& d = dst.cells[m];
                d.heads = s.heads;
                for (std::size_t l = 0; l < s.layers.size(); ++l) {
                    const Tensor& sw = s.layers[l].weight.value;
                    const Tensor& sb = s.layers[l].bias.value;
                    Tensor& dw = d.layers[l].weight.value;
                    Tensor& db = d.layers[l].bias.value;
                    for (std::size_t i = 0; i < sw.dim(0); ++i) {
                        for (std::size_t j = 0; j < H; ++j) dw.at(i, j) = sw.at(i, j);
                    }
                    for (std::size_t j = 0; j < H; ++j) db[j] = sb[j];
                    if (l == 0) {
                        for (std::size_t e = 0; e < Ec; ++e) {
                            for (std::size_t g = 0; g < G; ++g) {
                                dw.at(off + e, H + g) = src.gate.first.weight.value.at(e, g);
                            }
                        }
                        for (std::size_t g = 0; g < G; ++g) db[H + g] = src.gate.first.bias.value[g];
                    } else {
                        for (std::size_t g = 0; g < G; ++g) dw.at(H + g, H + g) = 1.0;
                    }
                }
                const Tensor& ow = s.outs[0].weight.value;
                for (std::size_t i = 0; i < H; ++i) {
                    for (std::size_t j = 0; j < ow.dim(1); ++j) d.outs[0].weight.value.at(i, j) = ow.at(i, j);
                }
                d.outs[0].bias.value = s.outs[0].bias.value;
                for (std::size_t g = 0; g < G; ++g) {
                    d.scores[0].weight.value.at(H + g, 0) = src.gate.second.weight.value.at(g, m);
                }
                d.scores[0].bias.value[0] = src.gate.second.bias.value[m];
            }
            dst.set_gate_seed(src.gate_seed());
            return dst;
        }
        case Level::Modular: {
            dc.level = Level::Monolithic;
            dc.readout_slots = R;
            const std::size_t H = sc.hidden_width;
            dc.hidden_width = R * H;
            Model dst = Model::allocate(dc);
            dst.input_encoder = src.input_encoder;
            dst.context_encoder = src.context_encoder;
            dst.decoder = src.decoder;
            Cell& d = dst.cells[0];
            const std::size_t hpm = sc.heads_per_cell();
            const std::size_t attn_in = hpm * kHeadDim;           // per-module attention columns
            const std::size_t rest = sc.cell_input_width() - attn_in;
            const std::size_t attn_all = dc.heads_per_cell() * kHeadDim;
            for (std::size_t m = 0; m < R; ++m) {
                const Cell& s = src.cells[m];
                for (std::size_t h = 0; h < hpm; ++h) d.heads[m * hpm + h] = s.heads[h];
                for (std::size_t l = 0; l < s.layers.size(); ++l) {
                    const Tensor& sw = s.layers[l].weight.value;
                    Tensor& dw = d.layers[l].weight.value;
                    for (std::size_t j = 0; j < H; ++j) {
                        d.layers[l].bias.value[m * H + j] = s.layers[l].bias.value[j];
                        if (l == 0) {
                            for (std::size_t i = 0; i < attn_in; ++i) {
                                dw.at(m * attn_in + i, m * H + j) = sw.at(i, j);
                            }
                            for (std::size_t i = 0; i < rest; ++i) {
                                dw.at(attn_all + i, m * H + j) = sw.at(attn_in + i, j);
                            }
                        } else {
                            for (std::size_t i = 0; i < H; ++i) dw.at(m * H + i, m * H + j) = sw.at(i, j);
                        }
                    }
                }
                const Tensor& ow = s.outs[0].weight.value;
                for (std::size_t i = 0; i < H; ++i) {
                    for (std::size_t j = 0; j < ow.dim(1); ++j) d.outs[m].weight.value.at(m * H + i, j) = ow.at(i, j);
                    d.scores[m].weight.value.at(m * H + i, 0) = s.scores[0].weight.value.at(i, 0);
                }
                d.outs[m].bias.value = s.outs[0].bias.value;
                d.scores[m].bias.value = s.scores[0].bias.value;
            }
            return dst;
        }
        case Level::Monolithic:
            throw Error("reduce_level: Monolithic is the weakest level");
        case Level::RandomGate:
            throw Error("reduce_level: RandomGate has no containment witness");
    }
    throw Error("reduce_level: unknown level");
}

// ---------------------------------------------------------------------------
// Checkpoints: manifest.json + params.bin (little-endian float64).

inline nlohmann::json config_to_json(const ModelConfig& c) {
    return {{"level", to_string(c.level)},        {"family", to_string(c.family)},
            {"R", c.R},                           {"input_width", c.input_width},
            {"hidden_width", c.hidden_width},     {"decoder_width", c.decoder_width},
            {"gate_width", c.gate_width},         {"readout_slots", c.readout_slots},
            {"heads_per_module", c.heads_per_module}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.level = parse_level(j.at("level").get<std::string>());
    c.family = parse_family(j.at("family").get<std::string>());
    c.R = j.at("R").get<int>();
    c.input_width = j.at("input_width").get<std::size_t>();
    c.hidden_width = j.at("hidden_width").get<std::size_t>();
    c.decoder_width = j.at("decoder_width").get<std::size_t>();
    c.gate_width = j.at("gate_width").get<std::size_t>();
    c.readout_slots = j.at("readout_slots").get<std::size_t>();
    c.heads_per_module = j.at("heads_per_module").get<std::size_t>();
    return c;
}

namespace detail {

inline std::uint64_t to_le(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        std::uint64_t r = 0;
        for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xff) << (8 * (7 - i));
        return r;
    }
    return v;
}

}  // namespace detail

inline void save_checkpoint(Model& model, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["config"] = config_to_json(model.config);
    manifest["blob"] = "params.bin";
    manifest["dtype"] = "float64-le";
    nlohmann::json tensors = nlohmann::json::array();
    std::ofstream blob(dir / "params.bin", std::ios::binary);
    if (!blob) throw Error("save_checkpoint: cannot write " + (dir / "params.bin").string());
    std::size_t offset = 0;
    for (const auto& np : model.parameters()) {
        const Tensor& v = np.param->value;
        tensors.push_back({{"name", np.name}, {"shape", v.shape()}, {"offset", offset}});
        for (double x : v.values()) {
            const std::uint64_t bits = detail::to_le(std::bit_cast<std::uint64_t>(x));
            blob.write(reinterpret_cast<const char*>(&bits), sizeof bits);
        }
        offset += v.size();
    }
    manifest["tensors"] = tensors;
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

inline Model load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw Error("load_checkpoint: missing " + (dir / "manifest.json").string());
    const nlohmann::json manifest = nlohmann::json::parse(mf);
    Model model = Model::allocate(config_from_json(manifest.at("config")));
    std::ifstream blob(dir / manifest.at("blob").get<std::string>(), std::ios::binary);
    if (!blob) throw Error("load_checkpoint: missing parameter blob");
    std::vector<double> all;
    std::uint64_t bits = 0;
    while (blob.read(reinterpret_cast<char*>(&bits), sizeof bits)) {
        all.push_back(std::bit_cast<double>(detail::to_le(bits)));
    }
    auto params = model.parameters();
    const auto& tensors = manifest.at("tensors");
    if (tensors.size() != params.size()) throw Error("load_checkpoint: tensor count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& t = tensors[i];
        if (t.at("name").get<std::string>() != params[i].name ||
            t.at("shape").get<Shape>() != params[i].param->value.shape()) {
            throw Error("load_checkpoint: tensor " + t.at("name").get<std::string>() + " does not match model");
        }
        const std::size_t off = t.at("offset").get<std::size_t>();
        Tensor& v = params[i].param->value;
        if (off + v.size() > all.size()) throw Error("load_checkpoint: parameter blob truncated");
        std::copy_n(all.begin() + static_cast<std::ptrdiff_t>(off), v.size(), v.values().begin());
    }
    return model;
}

}  // namespace modbench
