// Copyright (c) 2026, The modbench Authors
// SPDX-License-Identifier: Apache-2.0
//
// Collapse and specialization metrics over (rule, module) activation
// statistics, the assignment solver behind Alignment, and ranking votes.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "modbench/levels.hpp"
#include "modbench/random.hpp"
#include "modbench/tensor.hpp"

namespace modbench {

/// Accumulated soft activations: joint(r, m) = Σ p(module m | sample) over
/// samples of rule r.
class ActivationStats {
public:
    ActivationStats() = default;
    explicit ActivationStats(int R) : R_(R), joint_(static_cast<std::size_t>(R) * R, 0.0), rule_counts_(R, 0.0) {
        if (R < 1) throw Error("ActivationStats: R must be >= 1");
    }

    int R() const { return R_; }

    void add(int rule, std::span<const double> p) {
        if (rule < 0 || rule >= R_) throw Error("ActivationStats: rule id out of range");
        if (p.size() != static_cast<std::size_t>(R_)) throw Error("ActivationStats: activation length != R");
        for (int m = 0; m < R_; ++m) joint_[rule * R_ + m] += p[m];
        rule_counts_[rule] += 1.0;
    }

    /// Adds a one-hot record at the most active module (ties: lowest index).
    void add_argmax(int rule, std::span<const double> p) {
        std::vector<double> hard(p.size(), 0.0);
        hard[std::max_element(p.begin(), p.end()) - p.begin()] = 1.0;
        add(rule, hard);
    }

    /// Adds every row of an activations tensor (rows × R).
    void add_rows(const Tensor& activations, std::span<const int> rule_ids, bool argmax = false) {
        if (activations.rows() != rule_ids.size()) throw Error("ActivationStats: one rule id per row required");
        const std::size_t R = static_cast<std::size_t>(R_);
        for (std::size_t i = 0; i < rule_ids.size(); ++i) {
            std::span<const double> row(activations.data() + i * R, R);
            argmax ? add_argmax(rule_ids[i], row) : add(rule_ids[i], row);
        }
    }

    void merge(const ActivationStats& o) {
        if (o.R_ != R_) throw Error("ActivationStats: cannot merge different R");
        for (std::size_t i = 0; i < joint_.size(); ++i) joint_[i] += o.joint_[i];
        for (std::size_t i = 0; i < rule_counts_.size(); ++i) rule_counts_[i] += o.rule_counts_[i];
    }

    double total() const {
        double s = 0.0;
        for (double c : rule_counts_) s += c;
        return s;
    }

    const std::vector<double>& joint_counts() const { return joint_; }
    const std::vector<double>& rule_counts() const { return rule_counts_; }

    /// p(m, r) = A[r, m] / R, indexed [rule, module]: the joint under
    /// equiprobable rules, so sampled rule frequencies do not leak in.
    Tensor joint_distribution() const {
        if (total() <= 0.0) throw Error("ActivationStats: no records");
        Tensor j = activation_matrix();
        for (double& v : j.values()) v /= R_;
        return j;
    }

    /// p(m, r) weighted by the observed rule frequencies.
    Tensor empirical_joint() const {
        const double n = total();
        if (n <= 0.0) throw Error("ActivationStats: no records");
        Tensor j({static_cast<std::size_t>(R_), static_cast<std::size_t>(R_)});
        for (std::size_t i = 0; i < joint_.size(); ++i) j[i] = joint_[i] / n;
        return j;
    }

    /// A[r, m] = p(module m | rule r). Rules never seen get a uniform row.
    Tensor activation_matrix() const {
        const std::size_t R = static_cast<std::size_t>(R_);
        Tensor a({R, R});
        for (std::size_t r = 0; r < R; ++r) {
            for (std::size_t m = 0; m < R; ++m) {
                a.at(r, m) = rule_counts_[r] > 0.0 ? joint_[r * R + m] / rule_counts_[r] : 1.0 / R_;
            }
        }
        return a;
    }

private:
    int R_ = 0;
    std::vector<double> joint_;
    std::vector<double> rule_counts_;
};

namespace detail {

inline std::vector<double> column_sums(const Tensor& j, int rules) {
    const std::size_t R = static_cast<std::size_t>(rules);
    std::vector<double> p(R, 0.0);
    for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t m = 0; m < R; ++m) p[m] += j.at(r, m);
    }
    return p;
}

}  // namespace detail

/// p(m) under equiprobable rules.
inline std::vector<double> marginal(const ActivationStats& stats) {
    return detail::column_sums(stats.joint_distribution(), stats.R());
}

/// p(m) under the rule frequencies actually sampled.
inline std::vector<double> empirical_marginal(const ActivationStats& stats) {
    return detail::column_sums(stats.empirical_joint(), stats.R());
}

inline double collapse_avg(std::span<const double> p, int R) {
    if (R < 2) throw Error("collapse_avg: R must be >= 2");
    if (p.size() != static_cast<std::size_t>(R)) throw Error("collapse_avg: marginal length != R");
    double s = 0.0;
    for (double pm : p) s += std::max(0.0, 1.0 / R - pm);
    return static_cast<double>(R) / (R - 1) * s;
}

inline double collapse_worst(std::span<const double> p, int R) {
    if (R < 1) throw Error("collapse_worst: R must be >= 1");
    if (p.size() != static_cast<std::size_t>(R)) throw Error("collapse_worst: marginal length != R");
    return 1.0 - R * *std::min_element(p.begin(), p.end());
}

/// Minimum-cost perfect matching of a square cost matrix; result[row] = column.
/// O(n³) shortest augmenting paths with row/column potentials.
inline std::vector<int> hungarian(const Tensor& cost) {
    if (cost.rank() != 2 || cost.dim(0) != cost.dim(1)) {
        throw Error("hungarian: cost matrix must be square, got " + shape_str(cost.shape()));
    }
    const std::size_t n = cost.dim(0);
    const double inf = std::numeric_limits<double>::infinity();
    // 1-based internals; column 0 is a virtual source.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        match[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = match[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost.at(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> assignment(n, -1);
    for (std::size_t j = 1; j <= n; ++j) assignment[match[j] - 1] = static_cast<int>(j - 1);
    return assignment;
}

using AssignmentSolver = std::function<std::vector<int>(const Tensor&)>;

/// Normalized L1 distance Σ|A − P| / (2R) to the permutation matrix P with
/// P[r, perm[r]] = 1.
inline double permutation_distance(const Tensor& A, std::span<const int> perm) {
    const std::size_t R = A.dim(0);
    double s = 0.0;
    for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t m = 0; m < R; ++m) {
            const double target = static_cast<int>(m) == perm[r] ? 1.0 : 0.0;
            s += std::fabs(A.at(r, m) - target);
        }
    }
    return s / (2.0 * static_cast<double>(R));
}

/// Distance from a row-stochastic activation matrix to its closest
/// permutation matrix.
inline double alignment(const Tensor& A, const AssignmentSolver& solver = hungarian) {
    if (A.rank() != 2 || A.dim(0) != A.dim(1)) {
        throw Error("alignment: activation matrix must be square, got " + shape_str(A.shape()));
    }
    // Minimizing Σ|A − P| over permutations equals maximizing Σ_r A[r, π(r)].
    Tensor cost(A.shape());
    for (std::size_t i = 0; i < A.size(); ++i) cost[i] = 1.0 - A[i];
    const std::vector<int> perm = solver(cost);
    return permutation_distance(A, perm);
}

/// 1 − I(m; r) / log R over a joint p(rule, module), natural log, 0·log 0 = 0.
inline double inverse_mutual_information(const Tensor& joint) {
    if (joint.rank() != 2 || joint.dim(0) != joint.dim(1)) {
        throw Error("inverse_mutual_information: joint must be square");
    }
    const std::size_t R = joint.dim(0);
    if (R < 2) throw Error("inverse_mutual_information: R must be >= 2");
    std::vector<double> pr(R, 0.0), pm(R, 0.0);
    for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t m = 0; m < R; ++m) {
            pr[r] += joint.at(r, m);
            pm[m] += joint.at(r, m);
        }
    }
    double mi = 0.0;
    for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t m = 0; m < R; ++m) {
            const double j = joint.at(r, m);
            if (j > 0.0) mi += j * std::log(j / (pr[r] * pm[m]));
        }
    }
    return std::clamp(1.0 - mi / std::log(static_cast<double>(R)), 0.0, 1.0);
}

/// Module usage under a given rule distribution; the seed fixes the samples.
using ModuleMarginalFn = std::function<std::vector<double>(const std::vector<double>& rule_probs, std::uint64_t seed)>;

/// Average over Dirichlet(alpha·1) rule distributions p of Σ_i |p_(i) − q_(i)|,
/// both sorted ascending, where q is the module marginal observed under p.
inline double adaptation(int R, std::size_t n_draws, double dirichlet_alpha, std::uint64_t seed,
                         const ModuleMarginalFn& module_marginal) {
    if (n_draws < 1) throw Error("adaptation: n_draws must be >= 1");
    if (R < 1) throw Error("adaptation: R must be >= 1");
    Rng rng(derive_seed({seed, 0x61646170ULL}));
    double total = 0.0;
    for (std::size_t d = 0; d < n_draws; ++d) {
        std::vector<double> p = dirichlet(rng, static_cast<std::size_t>(R), dirichlet_alpha);
        std::vector<double> q = module_marginal(p, derive_seed({seed, d}));
        if (q.size() != p.size()) throw Error("adaptation: module marginal length != R");
        std::sort(p.begin(), p.end());
        std::sort(q.begin(), q.end());
        double s = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) s += std::fabs(p[i] - q[i]);
        total += s;
    }
    return total / static_cast<double>(n_draws);
}

struct MetricReport {
    double collapse_avg = 0.0;
    double collapse_worst = 0.0;
    double alignment = 0.0;
    double inverse_mutual_information = 0.0;
    std::optional<double> adaptation;

    nlohmann::json to_json() const {
        nlohmann::json j = {{"collapse_avg", collapse_avg},
                            {"collapse_worst", collapse_worst},
                            {"alignment", alignment},
                            {"inverse_mutual_information", inverse_mutual_information}};
        if (adaptation) j["adaptation"] = *adaptation;
        return j;
    }

    static MetricReport from_json(const nlohmann::json& j) {
        MetricReport m;
        m.collapse_avg = j.at("collapse_avg").get<double>();
        m.collapse_worst = j.at("collapse_worst").get<double>();
        m.alignment = j.at("alignment").get<double>();
        m.inverse_mutual_information = j.at("inverse_mutual_information").get<double>();
        if (j.contains("adaptation")) m.adaptation = j.at("adaptation").get<double>();
        return m;
    }
};

/// Everything but Adaptation, from equiprobable-rule statistics.
inline MetricReport metric_report(const ActivationStats& stats) {
    MetricReport m;
    const auto p = marginal(stats);
    m.collapse_avg = collapse_avg(p, stats.R());
    m.collapse_worst = collapse_worst(p, stats.R());
    m.alignment = alignment(stats.activation_matrix());
    m.inverse_mutual_information = inverse_mutual_information(stats.joint_distribution());
    return m;
}

/// Activation matrix as CSV: rows = rules, columns = modules.
inline std::string activation_csv(const Tensor& A) {
    std::string out = "rule";
    for (std::size_t m = 0; m < A.dim(1); ++m) out += ",m" + std::to_string(m);
    out += '\n';
    char buf[64];
    for (std::size_t r = 0; r < A.dim(0); ++r) {
        out += std::to_string(r);
        for (std::size_t m = 0; m < A.dim(1); ++m) {
            std::snprintf(buf, sizeof buf, ",%.17g", A.at(r, m));
            out += buf;
        }
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Ranking votes.

struct PerformanceSample {
    std::string group;  // (family, mode, R, capacity, task) key
    Level level;
    double performance;  // lower is better
};

struct VoteTable {
    std::map<Level, int> wins;
    int groups = 0;  // complete groups that voted
    int ties = 0;    // votes decided by the fixed level order
    std::vector<std::string> skipped;

    int total_votes() const {
        int n = 0;
        for (const auto& [l, w] : wins) n += w;
        return n;
    }
};

/// One vote per complete group to the level with the lowest seed-averaged
/// performance. Ties go to the earlier level in GtModular, ModularOp, Modular,
/// Monolithic order. Groups missing a level or with unequal seed counts are
/// skipped.
inline VoteTable ranking_votes(std::span<const PerformanceSample> samples, std::span<const Level> compared) {
    std::map<std::string, std::map<Level, std::vector<double>>> groups;
    for (const auto& s : samples) {
        if (std::find(compared.begin(), compared.end(), s.level) == compared.end()) continue;
        groups[s.group][s.level].push_back(s.performance);
    }
    std::vector<Level> order;
    for (Level l : kAllLevels) {
        if (std::find(compared.begin(), compared.end(), l) != compared.end()) order.push_back(l);
    }
    VoteTable table;
    for (Level l : order) table.wins[l] = 0;
    for (const auto& [key, by_level] : groups) {
        bool complete = by_level.size() == order.size();
        std::size_t seeds = complete ? by_level.begin()->second.size() : 0;
        for (const auto& [l, perf] : by_level) complete = complete && perf.size() == seeds;
        if (!complete) {
            table.skipped.push_back(key);
            continue;
        }
        std::vector<double> avg;
        for (Level l : order) {
            const auto& perf = by_level.at(l);
            double s = 0.0;
            for (double v : perf) s += v;
            avg.push_back(s / static_cast<double>(perf.size()));
        }
        const auto best = std::min_element(avg.begin(), avg.end());
        if (std::count(avg.begin(), avg.end(), *best) > 1) ++table.ties;
        ++table.wins[order[static_cast<std::size_t>(best - avg.begin())]];
        ++table.groups;
    }
    return table;
}

}  // namespace modbench
