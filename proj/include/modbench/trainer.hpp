// Copyright (c) 2026, The modbench Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training loop: Adam on a fresh batch every iteration, family-appropriate
// loss, optional global-norm clipping for RNN runs, and periodic evaluation
// under each configured shift.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "modbench/autodiff.hpp"
#include "modbench/metrics.hpp"
#include "modbench/modelzoo.hpp"
#include "modbench/rulegen.hpp"

namespace modbench {

/// Mean binary cross-entropy of sigmoid(logits) for classification, mean
/// absolute error for regression.
inline Var loss(Mode mode, Var predictions, const std::vector<double>& labels) {
    Tape& t = *predictions.tape;
    const Tensor& pred = predictions.value();
    if (pred.size() != labels.size()) {
        throw Error("loss: " + std::to_string(pred.size()) + " predictions vs " +
                    std::to_string(labels.size()) + " labels");
    }
    for (double v : pred.values()) {
        if (!std::isfinite(v)) throw Error("loss: non-finite prediction, run aborted");
    }
    Var y = t.constant(Tensor(pred.shape(), labels));
    if (mode == Mode::Regression) return ops::mean(ops::abs(ops::sub(predictions, y)));
    // softplus(z) − y·z with softplus(z) = relu(z) + log(1 + exp(−|z|))
    Var ones = t.constant(Tensor(pred.shape(), 1.0));
    Var softplus = ops::add(ops::relu(predictions),
                            ops::log(ops::add(ones, ops::exp(ops::scale(ops::abs(predictions), -1.0)))));
    return ops::mean(ops::sub(softplus, ops::mul(y, predictions)));
}

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

inline void adam_step(std::span<Parameter* const> params, const AdamConfig& cfg) {
    for (Parameter* p : params) {
        ++p->step;
        const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p->step));
        const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p->step));
        double* w = p->value.data();
        double* m = p->m.data();
        double* v = p->v.data();
        const double* g = p->grad.data();
        for (std::size_t i = 0; i < p->size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            w[i] -= cfg.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.epsilon);
        }
    }
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the factor applied.
inline double clip_gradient_norm(std::span<Parameter* const> params, double max_norm) {
    if (!(max_norm > 0.0)) throw Error("clip_gradient_norm: max_norm must be positive");
    double sq = 0.0;
    for (const Parameter* p : params) {
        for (double g : p->grad.values()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) return 1.0;
    const double s = max_norm / norm;
    for (Parameter* p : params) {
        for (double& g : p->grad.values()) g *= s;
    }
    return s;
}

struct TrainConfig {
    std::size_t iterations = 20000;
    std::size_t batch_size = 256;
    double learning_rate = 1e-4;
    std::optional<double> clip_norm;
    Mode mode = Mode::Regression;
    std::size_t eval_every = 1000;
    std::size_t eval_samples = 10000;
    std::vector<Shift> shifts{Shift::in_distribution()};

    /// Desk-scale defaults for a family (clipping only for RNN).
    static TrainConfig for_family(Family family, Mode mode) {
        TrainConfig c;
        c.mode = mode;
        c.iterations = family == Family::Mlp ? 20000 : 50000;
        if (family == Family::Rnn) c.clip_norm = 1.0;
        c.shifts = default_shifts(family);
        return c;
    }
};

struct Checkpoint {
    std::size_t iter = 0;
    double train_loss = 0.0;
    std::map<std::string, double> evals;
};

struct TrainLog {
    std::vector<Checkpoint> checkpoints;
    std::vector<double> losses;  // one per completed iteration
    std::string status = "ok";
    std::string diagnostic;

    bool ok() const { return status == "ok"; }

    void write_jsonl(std::ostream& os) const {
        for (const Checkpoint& c : checkpoints) {
            nlohmann::json j = {{"iter", c.iter}, {"train_loss", c.train_loss}, {"evals", c.evals}};
            os << j.dump() << '\n';
        }
    }
};

/// Medians of the first and last 10% of per-iteration losses.
inline std::pair<double, double> loss_window_medians(std::vector<double> losses) {
    if (losses.empty()) throw Error("loss_window_medians: no losses");
    const std::size_t w = std::max<std::size_t>(1, losses.size() / 10);
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };
    return {median({losses.begin(), losses.begin() + static_cast<std::ptrdiff_t>(w)}),
            median({losses.end() - static_cast<std::ptrdiff_t>(w), losses.end()})};
}

struct EvalResult {
    double performance = 0.0;  // error rate or mean absolute error
    ActivationStats stats;
    std::size_t records = 0;
};

/// Evaluates on `n_samples` fresh samples (sequences for MHA/RNN) without
/// touching parameters, accumulating activation statistics on the way.
inline EvalResult evaluate(const Model& model, const TaskSpec& task, Mode mode, const Shift& shift,
                           std::size_t n_samples, std::uint64_t eval_seed,
                           std::span<const double> rule_probs = {}, std::size_t chunk = 1000) {
    if (n_samples < 1) throw Error("evaluate: n_samples must be >= 1");
    EvalResult res;
    res.stats = ActivationStats(task.R);
    double err = 0.0;
    std::size_t points = 0;
    for (std::size_t done = 0, k = 0; done < n_samples; ++k) {
        const std::size_t n = std::min(chunk, n_samples - done);
        const Batch b = sample_batch(task, n, mode, shift, derive_seed({eval_seed, k}), rule_probs);
        Tape tape;
        const ForwardOutput out = model.infer(tape, b);
        const Tensor& pred = out.predictions.value();
        for (std::size_t i = 0; i < pred.size(); ++i) {
            if (mode == Mode::Classification) {
                // sigmoid(z) > 0.5 ⇔ z > 0
                const double cls = pred[i] > 0.0 ? 1.0 : 0.0;
                err += cls != b.labels[i] ? 1.0 : 0.0;
            } else {
                err += std::fabs(pred[i] - b.labels[i]);
            }
        }
        res.stats.add_rows(out.activations, out.rule_ids);
        points += pred.size();
        done += n;
    }
    res.performance = err / static_cast<double>(points);
    res.records = points;
    return res;
}

/// Adaptation of a gated model: re-evaluates under Dirichlet rule laws.
inline double adaptation(const Model& model, const TaskSpec& task, Mode mode, std::size_t n_draws,
                         double dirichlet_alpha, std::size_t eval_samples, std::uint64_t seed) {
    if (!model.config.modular()) throw Error("adaptation: monolithic models have no module activations");
    return adaptation(task.R, n_draws, dirichlet_alpha, seed,
                      [&](const std::vector<double>& p, std::uint64_t s) {
                          return empirical_marginal(evaluate(model, task, mode, Shift::in_distribution(),
                                                   eval_samples, s, p)
                                              .stats);
                      });
}

inline std::uint64_t train_stream_seed(std::uint64_t run_seed) { return derive_seed({run_seed, 0x747261696eULL}); }
inline std::uint64_t eval_stream_seed(std::uint64_t run_seed, const Shift& shift) {
    return derive_seed({run_seed, 0x6576616cULL, hash_string(shift.name())});
}

/// Trains in place. Fully determined by (task, model init, config, run_seed).
inline TrainLog train(Model& model, const TaskSpec& task, const TrainConfig& cfg, std::uint64_t run_seed) {
    if (model.config.family != task.family) throw Error("train: model and task families differ");
    if (cfg.batch_size < 1) throw Error("train: batch_size must be >= 1");
    if (!(cfg.learning_rate >= 0.0)) throw Error("train: learning_rate must be non-negative");
    if (cfg.clip_norm && task.family != Family::Rnn) {
        throw Error("train: gradient clipping is reserved for RNN runs");
    }
    if (cfg.eval_every < 1) throw Error("train: eval_every must be >= 1");
    for (const Shift& s : cfg.shifts) validate_shift(task.family, s);

    TrainLog log;
    auto params = model.parameter_ptrs();
    const AdamConfig adam{cfg.learning_rate};
    const std::uint64_t stream = train_stream_seed(run_seed);
    double window = 0.0;
    std::size_t window_n = 0;

    auto checkpoint = [&](std::size_t iter) {
        Checkpoint c;
        c.iter = iter;
        c.train_loss = window_n ? window / static_cast<double>(window_n) : 0.0;
        for (const Shift& s : cfg.shifts) {
            c.evals[s.name()] =
                evaluate(model, task, cfg.mode, s, cfg.eval_samples, eval_stream_seed(run_seed, s)).performance;
        }
        log.checkpoints.push_back(std::move(c));
        window = 0.0;
        window_n = 0;
    };

    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        const Batch batch = sample_batch(task, cfg.batch_size, cfg.mode, Shift::in_distribution(),
                                         data_seed(stream, it));
        zero_gradients(params);
        Tape tape;
        double value = 0.0;
        try {
            const ForwardOutput out = model.forward(tape, batch);
            Var l = loss(cfg.mode, out.predictions, batch.labels);
            value = l.value()[0];
            if (!std::isfinite(value)) throw Error("loss is not finite");
            tape.backward(l);
        } catch (const Error& e) {
            log.status = "diverged";
            log.diagnostic = "iteration " + std::to_string(it) + ": " + e.what();
            return log;
        }
        if (cfg.clip_norm) clip_gradient_norm(params, *cfg.clip_norm);
        adam_step(params, adam);
        log.losses.push_back(value);
        window += value;
        ++window_n;
        if ((it + 1) % cfg.eval_every == 0 || it + 1 == cfg.iterations) checkpoint(it + 1);
    }
    return log;
}

}  // namespace modbench
