// Copyright (c) 2026, The modbench Authors
// SPDX-License-Identifier: Apache-2.0
//
// Oracle checks: finite-difference gradients on random graphs, brute-force
// metric equivalence, analytic metric cases, live GT-Modular and RandomGate
// statistics, containment witnesses and generator moments. Nothing here
// touches the filesystem.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "modbench/autodiff.hpp"
#include "modbench/metrics.hpp"
#include "modbench/modelzoo.hpp"
#include "modbench/random.hpp"
#include "modbench/rulegen.hpp"
#include "modbench/trainer.hpp"

namespace modbench {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

namespace detail {

inline std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

template <class F>
CheckResult timed(const std::string& name, F&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    CheckResult r;
    r.name = name;
    try {
        body(r);
    } catch (const std::exception& e) {
        r.passed = false;
        r.detail = std::string("threw: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Random composite graphs.

/// A random differentiable program over rank-2/3 tensors. The structure is a
/// pure function of the seed, so build() can be replayed for finite
/// differences; parameters are created on the first build and reused.
class RandomGraph {
public:
    static constexpr int kMaxDepth = 5;
    static constexpr std::size_t kMaxWidth = 16;

    explicit RandomGraph(std::uint64_t seed) : seed_(seed) {}

    std::deque<Parameter>& parameters() { return params_; }

    Var build(Tape& t) {
        Rng rng(seed_);
        next_param_ = 0;
        next_const_ = 0;
        std::vector<Node> vals;
        auto dim = [&](std::size_t lo = 1) { return lo + static_cast<std::size_t>(uniform_int(rng, static_cast<int>(kMaxWidth / 2 - lo + 1))); };
        const int n_leaves = 1 + uniform_int(rng, 2);
        for (int i = 0; i < n_leaves; ++i) vals.push_back({param(t, {dim(), dim()}), 0});
        const int steps = 2 + uniform_int(rng, 7);
        for (int s = 0; s < steps; ++s) {
            std::vector<std::size_t> open;
            for (std::size_t i = 0; i < vals.size(); ++i) {
                if (vals[i].depth < kMaxDepth) open.push_back(i);
            }
            if (open.empty()) break;
            const Node a = vals[open[static_cast<std::size_t>(uniform_int(rng, static_cast<int>(open.size())))]];
            vals.push_back(apply(t, rng, a, vals));
        }
        Var loss;
        bool first = true;
        for (const Node& n : vals) {
            Var term = ops::sum(ops::mul(n.var, constant(t, n.var.shape())));
            loss = first ? term : ops::add(loss, term);
            first = false;
        }
        return loss;
    }

private:
    struct Node {
        Var var;
        int depth;
    };

    Var param(Tape& t, Shape shape) {
        if (next_param_ == params_.size()) {
            Rng r(derive_seed({seed_, 0x70ULL, next_param_}));
            Tensor v(shape);
            for (double& x : v.values()) x = uniform(r, -1.0, 1.0);
            params_.emplace_back(std::move(v));
        }
        return t.param(params_[next_param_++]);
    }

    Var constant(Tape& t, const Shape& shape) {
        Rng r(derive_seed({seed_, 0x63ULL, next_const_++}));
        Tensor v(shape);
        for (double& x : v.values()) x = uniform(r, -1.0, 1.0);
        return t.constant(std::move(v));
    }

    Node apply(Tape& t, Rng& rng, Node a, const std::vector<Node>& vals) {
        if (a.var.value().rank() == 1) return {ops::reshape(a.var, {1, a.var.value().size()}), a.depth + 1};
        const Tensor& x = a.var.value();
        const int d = a.depth + 1;
        auto pick_width = [&] { return 1 + static_cast<std::size_t>(uniform_int(rng, static_cast<int>(kMaxWidth))); };
        auto partner = [&](auto pred) -> std::optional<Var> {
            std::vector<Var> c;
            for (const Node& n : vals) {
                if (n.depth < kMaxDepth && pred(n.var.value())) c.push_back(n.var);
            }
            if (c.empty()) return std::nullopt;
            return c[static_cast<std::size_t>(uniform_int(rng, static_cast<int>(c.size())))];
        };
        if (x.rank() == 3) {
            switch (uniform_int(rng, 3)) {
                case 0: return {ops::matmul(a.var, param(t, {x.dim(0), x.dim(2), pick_width()})), d};
                case 1: return {ops::transpose(a.var), d};
                default: return {ops::reshape(a.var, {x.dim(0) * x.dim(1), x.dim(2)}), d};
            }
        }
        const std::size_t rows = x.dim(0), cols = x.dim(1);
        switch (uniform_int(rng, 17)) {
            case 0: return {ops::tanh(a.var), d};
            case 1: return {ops::sigmoid(a.var), d};
            case 2: return {ops::relu(a.var), d};
            case 3: return {ops::abs(a.var), d};
            case 4: return {ops::exp(ops::scale(a.var, 0.5)), d};
            case 5: return {ops::log(ops::sigmoid(a.var)), d};
            case 6: return {ops::softmax(a.var), d};
            case 7: return {ops::scale(a.var, uniform(rng, -2.0, 2.0)), d};
            case 8: {
                auto b = partner([&](const Tensor& v) { return v.shape() == x.shape(); });
                Var other = b && uniform_int(rng, 2) ? *b : param(t, x.shape());
                switch (uniform_int(rng, 3)) {
                    case 0: return {ops::add(a.var, other), d};
                    case 1: return {ops::sub(a.var, other), d};
                    default: return {ops::mul(a.var, other), d};
                }
            }
            case 9: return {ops::add(a.var, param(t, {cols})), d};
            case 10: {
                auto b = partner([&](const Tensor& v) { return v.rank() == 2 && v.dim(0) == cols; });
                Var other = b && uniform_int(rng, 2) ? *b : param(t, {cols, pick_width()});
                return {ops::matmul(a.var, other), d};
            }
            case 11: {
                auto b = partner([&](const Tensor& v) {
                    return v.rank() == 2 && v.dim(0) == rows && v.dim(1) + cols <= kMaxWidth;
                });
                if (b) return {ops::concat({a.var, *b}), d};
                if (cols < kMaxWidth) {
                    return {ops::concat({a.var, param(t, {rows, 1 + static_cast<std::size_t>(uniform_int(rng, static_cast<int>(kMaxWidth - cols)))})}), d};
                }
                return {ops::tanh(a.var), d};
            }
            case 12: {
                const std::size_t begin = static_cast<std::size_t>(uniform_int(rng, static_cast<int>(cols)));
                const std::size_t end = begin + 1 + static_cast<std::size_t>(uniform_int(rng, static_cast<int>(cols - begin)));
                return {ops::slice(a.var, begin, end), d};
            }
            case 13: return {ops::transpose(a.var), d};
            case 14: {
                std::vector<std::size_t> idx(1 + static_cast<std::size_t>(uniform_int(rng, 8)));
                for (auto& i : idx) i = static_cast<std::size_t>(uniform_int(rng, static_cast<int>(rows)));
                return {ops::gather_rows(a.var, idx), d};
            }
            case 15: {
                if (rows % 2 == 0) return {ops::reshape(a.var, {2, rows / 2, cols}), d};
                return {ops::reshape(a.var, {cols, rows}), d};
            }
            default: return {uniform_int(rng, 2) ? ops::mean(a.var) : ops::sum(a.var), d};
        }
    }

    std::uint64_t seed_;
    std::deque<Parameter> params_;
    std::size_t next_param_ = 0;
    std::uint64_t next_const_ = 0;
};

struct GradientCheckStats {
    std::size_t graphs = 0;
    std::size_t rejected = 0;  // graphs with a relu/abs input too close to its kink
    std::size_t entries = 0;
    double max_rel_error = 0.0;
};

/// Relative error |a − n| / max(|a|, |n|, 1e-2) between backprop and central
/// differences, over every parameter entry of `n_graphs` random graphs.
inline GradientCheckStats gradient_check(std::size_t n_graphs, std::uint64_t seed, double h = 1e-5) {
    GradientCheckStats st;
    for (std::uint64_t g = 0; st.graphs < n_graphs; ++g) {
        RandomGraph graph(derive_seed({seed, g}));
        Tape tape;
        Var loss = graph.build(tape);
        bool near_kink = false;
        for (std::size_t i = 0; i < tape.size(); ++i) {
            const auto& n = tape.node(i);
            if (std::string_view(n.op) != "relu" && std::string_view(n.op) != "abs") continue;
            for (double v : tape.node(n.inputs[0]).value.values()) near_kink |= std::fabs(v) < 1e-3;
        }
        if (near_kink) {
            ++st.rejected;
            continue;
        }
        auto& params = graph.parameters();
        for (Parameter& p : params) p.grad = Tensor(p.value.shape());
        tape.backward(loss);
        auto eval = [&] {
            Tape t;
            return graph.build(t).value()[0];
        };
        for (Parameter& p : params) {
            for (std::size_t i = 0; i < p.size(); ++i) {
                const double orig = p.value[i];
                p.value[i] = orig + h;
                const double up = eval();
                p.value[i] = orig - h;
                const double down = eval();
                p.value[i] = orig;
                const double numeric = (up - down) / (2.0 * h);
                const double analytic = p.grad[i];
                const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-2});
                st.max_rel_error = std::max(st.max_rel_error, std::fabs(analytic - numeric) / denom);
                ++st.entries;
            }
        }
        ++st.graphs;
    }
    return st;
}

// ---------------------------------------------------------------------------
// Metric oracles.

/// Row-stochastic R×R matrix with Dirichlet(1) rows.
inline Tensor random_row_stochastic(Rng& rng, std::size_t R) {
    Tensor a({R, R});
    for (std::size_t r = 0; r < R; ++r) {
        const auto row = dirichlet(rng, R, 1.0);
        std::copy(row.begin(), row.end(), a.data() + r * R);
    }
    return a;
}

/// min over all R! permutations of d(A, P).
inline double alignment_brute_force(const Tensor& A) {
    std::vector<int> perm(A.dim(0));
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        best = std::min(best, permutation_distance(A, perm));
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

/// 1 − (H(m) + H(r) − H(m, r)) / log R.
inline double imi_entropy_identity(const Tensor& joint) {
    const std::size_t R = joint.dim(0);
    auto H = [](const std::vector<double>& p) {
        double h = 0.0;
        for (double v : p) {
            if (v > 0.0) h -= v * std::log(v);
        }
        return h;
    };
    std::vector<double> pr(R, 0.0), pm(R, 0.0);
    for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t m = 0; m < R; ++m) {
            pr[r] += joint.at(r, m);
            pm[m] += joint.at(r, m);
        }
    }
    return 1.0 - (H(pm) + H(pr) - H(joint.values())) / std::log(static_cast<double>(R));
}

inline CheckResult check_gradients(std::size_t n_graphs, double tol, std::uint64_t seed = 1) {
    return detail::timed("autodiff gradients vs central differences", [&](CheckResult& r) {
        const auto st = gradient_check(n_graphs, seed);
        r.passed = st.max_rel_error < tol;
        r.detail = std::to_string(st.graphs) + " graphs (" + std::to_string(st.rejected) + " near a kink redrawn), " + std::to_string(st.entries) +
                   " entries, max rel err " + detail::num(st.max_rel_error) + " (tol " + detail::num(tol) + ")";
    });
}

inline CheckResult check_alignment_brute_force(std::size_t per_R, const AssignmentSolver& solver = hungarian,
                                               std::uint64_t seed = 2) {
    return detail::timed("alignment via assignment == exhaustive permutations", [&](CheckResult& r) {
        Rng rng(seed);
        std::size_t mismatches = 0, total = 0;
        for (std::size_t R = 2; R <= 6; ++R) {
            for (std::size_t k = 0; k < per_R; ++k) {
                const Tensor A = random_row_stochastic(rng, R);
                mismatches += alignment(A, solver) != alignment_brute_force(A);
                ++total;
            }
        }
        r.passed = mismatches == 0;
        r.detail = std::to_string(mismatches) + "/" + std::to_string(total) + " mismatches, R in 2..6";
    });
}

inline CheckResult check_imi_identity(std::size_t per_R, double tol, std::uint64_t seed = 3) {
    return detail::timed("S_IMI == entropy identity", [&](CheckResult& r) {
        Rng rng(seed);
        double worst = 0.0;
        for (std::size_t R = 2; R <= 6; ++R) {
            for (std::size_t k = 0; k < per_R; ++k) {
                Tensor j = random_row_stochastic(rng, R);
                for (double& v : j.values()) v /= static_cast<double>(R);
                worst = std::max(worst, std::fabs(inverse_mutual_information(j) - imi_entropy_identity(j)));
            }
        }
        r.passed = worst < tol;
        r.detail = "max |diff| " + detail::num(worst) + " (tol " + detail::num(tol) + ")";
    });
}

inline CheckResult check_analytic_metrics(double tol) {
    return detail::timed("analytic metric cases", [&](CheckResult& r) {
        std::vector<std::string> bad;
        for (int R = 2; R <= 6; ++R) {
            const std::size_t n = static_cast<std::size_t>(R);
            std::vector<int> perm(n);
            std::iota(perm.begin(), perm.end(), 0);
            std::rotate(perm.begin(), perm.begin() + 1, perm.end());
            ActivationStats ps(R), us(R);
            for (int rule = 0; rule < R; ++rule) {
                std::vector<double> hot(n, 0.0), flat(n, 1.0 / R);
                hot[static_cast<std::size_t>(perm[static_cast<std::size_t>(rule)])] = 1.0;
                ps.add(rule, hot);
                us.add(rule, flat);
            }
            const MetricReport pm = metric_report(ps);
            if (std::fabs(pm.alignment) > tol || std::fabs(pm.inverse_mutual_information) > tol ||
                std::fabs(pm.collapse_avg) > tol || std::fabs(pm.collapse_worst) > tol) {
                bad.push_back("permutation R=" + std::to_string(R));
            }
            const MetricReport um = metric_report(us);
            if (std::fabs(um.alignment - (R - 1.0) / R) > tol || std::fabs(um.inverse_mutual_information - 1.0) > tol) {
                bad.push_back("uniform R=" + std::to_string(R));
            }
            std::vector<double> p(n, 1.0 / (R - 1));
            p[n - 1] = 0.0;
            if (collapse_worst(p, R) != 1.0) bad.push_back("zero-entry R=" + std::to_string(R));
        }
        r.passed = bad.empty();
        r.detail = bad.empty() ? "permutation, uniform and zero-entry cases for R in 2..6" : "failed: " + bad.front();
    });
}

// ---------------------------------------------------------------------------
// Live model checks.

struct LiveMetrics {
    MetricReport report;
    std::size_t records = 0;
};

/// Metrics of an (untrained) model of `level` evaluated on `samples` MLP
/// samples at R, with optional adaptation over `draws` Dirichlet laws.
inline LiveMetrics live_metrics(Level level, int R, std::size_t samples, std::size_t draws, std::uint64_t seed,
                                std::size_t capacity = 4000) {
    const TaskSpec task = sample_task(Family::Mlp, R, derive_seed({seed, 1}));
    Model m = Model::build(make_config(level, task, capacity), derive_seed({seed, 2}));
    LiveMetrics out;
    const EvalResult ev = evaluate(m, task, Mode::Regression, Shift::in_distribution(), samples, derive_seed({seed, 3}));
    out.report = metric_report(ev.stats);
    out.records = ev.records;
    if (draws > 0) {
        out.report.adaptation = adaptation(m, task, Mode::Regression, draws, 1.0, samples, derive_seed({seed, 4}));
    }
    return out;
}

inline CheckResult check_gt_modular_live(int R, std::size_t samples, std::size_t draws, double tol,
                                         std::uint64_t seed = 4) {
    return detail::timed("GT-Modular metrics from live evaluation", [&](CheckResult& r) {
        const auto lm = live_metrics(Level::GtModular, R, samples, draws, seed);
        const auto& m = lm.report;
        r.passed = m.collapse_avg < tol && m.collapse_worst < tol && m.alignment < tol &&
                   m.inverse_mutual_information < tol && m.adaptation && *m.adaptation < tol;
        r.detail = "R=" + std::to_string(R) + " C_A " + detail::num(m.collapse_avg) + " C_W " +
                   detail::num(m.collapse_worst) + " s_d " + detail::num(m.alignment) + " S_IMI " +
                   detail::num(m.inverse_mutual_information) + " S_A " +
                   (m.adaptation ? detail::num(*m.adaptation) : std::string("-")) + " (tol " + detail::num(tol) + ")";
    });
}

inline CheckResult check_random_gate_live(int R, std::size_t activations, std::uint64_t seed = 5) {
    return detail::timed("RandomGate baseline metrics from live evaluation", [&](CheckResult& r) {
        const auto lm = live_metrics(Level::RandomGate, R, activations, 0, seed);
        const auto& m = lm.report;
        const double target = (R - 1.0) / R;
        r.passed = lm.records >= activations && m.collapse_avg < 0.05 && m.collapse_worst < 0.1 &&
                   m.inverse_mutual_information > 0.95 && std::fabs(m.alignment - target) < 0.05;
        r.detail = "R=" + std::to_string(R) + ", " + std::to_string(lm.records) + " activations: C_A " +
                   detail::num(m.collapse_avg) + " C_W " + detail::num(m.collapse_worst) + " S_IMI " +
                   detail::num(m.inverse_mutual_information) + " s_d " + detail::num(m.alignment) +
                   " (target " + detail::num(target) + ")";
    });
}

/// max |ŷ_src − ŷ_dst| over `samples` fresh samples.
inline double witness_gap(const Model& src, const Model& dst, const TaskSpec& task, std::size_t samples,
                          std::uint64_t seed) {
    const Batch b = sample_batch(task, samples, Mode::Regression, Shift::in_distribution(), seed);
    Tape t1, t2;
    const Tensor& y1 = src.infer(t1, b).predictions.value();
    const Tensor& y2 = dst.infer(t2, b).predictions.value();
    double gap = 0.0;
    for (std::size_t i = 0; i < y1.size(); ++i) gap = std::max(gap, std::fabs(y1[i] - y2[i]));
    return gap;
}

inline CheckResult check_containment(std::vector<int> rule_counts, std::size_t samples, double tol,
                                     std::uint64_t seed = 6) {
    return detail::timed("containment witnesses reproduce outputs", [&](CheckResult& r) {
        double worst = 0.0;
        std::string where;
        std::size_t pairs = 0;
        for (Family f : {Family::Mlp, Family::Mha, Family::Rnn}) {
            for (int R : rule_counts) {
                const TaskSpec task = sample_task(f, R, derive_seed({seed, static_cast<std::uint64_t>(f), static_cast<std::uint64_t>(R)}));
                for (Level l : {Level::GtModular, Level::ModularOp, Level::Modular}) {
                    ModelConfig cfg = make_config(l, task, 20000);
                    const Model src = Model::build(cfg, derive_seed({seed, static_cast<std::uint64_t>(l), task.seed}));
                    const Model dst = reduce_level(src);
                    const double gap = witness_gap(src, dst, task, samples, derive_seed({seed, 9, task.seed}));
                    ++pairs;
                    if (gap >= worst) {
                        worst = gap;
                        where = to_string(f) + " R=" + std::to_string(R) + " " + to_string(l) + "->" +
                                to_string(dst.config.level);
                    }
                }
            }
        }
        r.passed = worst < tol;
        r.detail = std::to_string(pairs) + " pairs, max |dy| " + detail::num(worst) + " at " + where + " (tol " +
                   detail::num(tol) + ")";
    });
}

// ---------------------------------------------------------------------------
// Generator moments.

struct DataLawStats {
    double variance_ratio_error = 0.0;  // worst |var(shift)/var(id) / 2 − 1| over families
    double rule_frequency_error = 0.0;  // worst |freq − 1/R|
    double norm_error_id = 0.0;         // worst |‖q‖ − 1| for search-v2 queries
    double norm_error_shift = 0.0;      // worst |‖q‖ − 2| under the variance shift
};

inline DataLawStats data_law_stats(std::size_t samples, int R, std::uint64_t seed) {
    DataLawStats st;
    auto variance = [](const std::vector<double>& v) {
        double m = 0.0, s = 0.0;
        for (double x : v) m += x;
        m /= static_cast<double>(v.size());
        for (double x : v) s += (x - m) * (x - m);
        return s / static_cast<double>(v.size());
    };
    for (Family f : {Family::Mlp, Family::Mha, Family::Rnn}) {
        const TaskSpec task = sample_task(f, R, derive_seed({seed, static_cast<std::uint64_t>(f)}));
        // One batch of `samples` decision points per law.
        const std::size_t per = f == Family::Mlp ? samples : (samples + kTrainSeqLen - 1) / kTrainSeqLen;
        const Batch id = sample_batch(task, per, Mode::Regression, Shift::in_distribution(), derive_seed({seed, 10}));
        const Batch sh = sample_batch(task, per, Mode::Regression, Shift::variance_doubled(), derive_seed({seed, 11}));
        const double ratio = variance(sh.inputs.values()) / variance(id.inputs.values());
        st.variance_ratio_error = std::max(st.variance_ratio_error, std::fabs(ratio / 2.0 - 1.0));
        std::vector<double> counts(static_cast<std::size_t>(R), 0.0);
        for (int c : id.rule_ids) counts[static_cast<std::size_t>(c)] += 1.0;
        for (double c : counts) {
            st.rule_frequency_error = std::max(st.rule_frequency_error, std::fabs(c / static_cast<double>(id.rule_ids.size()) - 1.0 / R));
        }
    }
    TaskOptions v2;
    v2.mha_search_version = 2;
    const TaskSpec task = sample_task(Family::Mha, R, derive_seed({seed, 20}), v2);
    const auto& t = task.mha();
    const std::size_t qd = static_cast<std::size_t>(t.query_dim);
    const std::size_t per = (samples + kTrainSeqLen - 1) / kTrainSeqLen;
    for (const auto& [shift, radius, err] :
         {std::tuple{Shift::in_distribution(), 1.0, &st.norm_error_id},
          std::tuple{Shift::variance_doubled(), 2.0, &st.norm_error_shift}}) {
        const Batch b = sample_batch(task, per, Mode::Regression, shift, derive_seed({seed, 21}));
        const std::size_t width = t.token_width();
        for (std::size_t row = 0; row < b.inputs.dim(0); ++row) {
            for (int r = 0; r < t.R; ++r) {
                for (std::size_t q = 0; q < 2; ++q) {
                    const double* qv = b.inputs.data() + row * width + static_cast<std::size_t>(r) * (2 * qd + 2) + q * qd;
                    double n = 0.0;
                    for (std::size_t k = 0; k < qd; ++k) n += qv[k] * qv[k];
                    *err = std::max(*err, std::fabs(std::sqrt(n) - radius));
                }
            }
        }
    }
    return st;
}

inline CheckResult check_data_laws(std::size_t samples, int R, double variance_tol, double frequency_tol,
                                   double norm_tol, std::uint64_t seed = 7) {
    return detail::timed("generator moment laws", [&](CheckResult& r) {
        const auto st = data_law_stats(samples, R, seed);
        r.passed = st.variance_ratio_error < variance_tol && st.rule_frequency_error < frequency_tol &&
                   st.norm_error_id < norm_tol && st.norm_error_shift < norm_tol;
        r.detail = "variance ratio err " + detail::num(st.variance_ratio_error) + ", rule freq err " +
                   detail::num(st.rule_frequency_error) + ", sphere norm err " +
                   detail::num(std::max(st.norm_error_id, st.norm_error_shift));
    });
}

struct VerifyOptions {
    AssignmentSolver solver = hungarian;
};

/// The full oracle suite, one result per check.
inline std::vector<CheckResult> verify(const VerifyOptions& opts = {}) {
    std::vector<CheckResult> out;
    out.push_back(check_gradients(200, 1e-4));
    out.push_back(check_alignment_brute_force(100, opts.solver));
    out.push_back(check_imi_identity(100, 1e-12));
    out.push_back(check_analytic_metrics(1e-12));
    out.push_back(check_gt_modular_live(4, 10000, 100, 0.02));
    out.push_back(check_random_gate_live(4, 100000));
    out.push_back(check_containment({2, 4}, 1000, 1e-6));
    out.push_back(check_data_laws(100000, 4, 0.02, 0.01, 1e-12));
    return out;
}

inline bool all_passed(const std::vector<CheckResult>& rs) {
    return std::all_of(rs.begin(), rs.end(), [](const CheckResult& r) { return r.passed; });
}

}  // namespace modbench
