// Copyright (c) 2026, The modbench Authors
// SPDX-License-Identifier: Apache-2.0
//
// Rule-based synthetic data: task sampling and labeled batches for the MLP,
// MHA and RNN families, with the out-of-distribution shifts used for
// evaluation.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "modbench/random.hpp"
#include "modbench/tensor.hpp"

namespace modbench {

enum class Family { Mlp, Mha, Rnn };
enum class Mode { Classification, Regression };

inline std::string to_string(Family f) {
    switch (f) {
        case Family::Mlp: return "MLP";
        case Family::Mha: return "MHA";
        case Family::Rnn: return "RNN";
    }
    return "?";
}

inline std::string to_string(Mode m) {
    return m == Mode::Classification ? "classification" : "regression";
}

inline Family parse_family(const std::string& s) {
    if (s == "MLP" || s == "mlp") return Family::Mlp;
    if (s == "MHA" || s == "mha") return Family::Mha;
    if (s == "RNN" || s == "rnn") return Family::Rnn;
    throw Error("unsupported family '" + s + "' (expected MLP, MHA or RNN)");
}

inline Mode parse_mode(const std::string& s) {
    if (s == "classification") return Mode::Classification;
    if (s == "regression") return Mode::Regression;
    throw Error("unknown mode '" + s + "' (expected classification or regression)");
}

constexpr std::size_t kTrainSeqLen = 10;
constexpr std::size_t kRnnDim = 32;
inline constexpr int kShiftSeqLens[] = {3, 5, 10, 20, 30};

struct Shift {
    enum class Kind { InDistribution, VarianceDoubled, SeqLen, VarianceDoubledSeqLen };
    Kind kind = Kind::InDistribution;
    std::size_t seq_len = 0;

    static Shift in_distribution() { return {}; }
    static Shift variance_doubled() { return {Kind::VarianceDoubled, 0}; }
    static Shift length(std::size_t l) { return {Kind::SeqLen, l}; }
    static Shift variance_doubled_length(std::size_t l) { return {Kind::VarianceDoubledSeqLen, l}; }

    bool doubles_variance() const {
        return kind == Kind::VarianceDoubled || kind == Kind::VarianceDoubledSeqLen;
    }
    bool changes_length() const {
        return kind == Kind::SeqLen || kind == Kind::VarianceDoubledSeqLen;
    }

    std::string name() const {
        switch (kind) {
            case Kind::InDistribution: return "id";
            case Kind::VarianceDoubled: return "var2";
            case Kind::SeqLen: return "len" + std::to_string(seq_len);
            case Kind::VarianceDoubledSeqLen: return "var2_len" + std::to_string(seq_len);
        }
        return "?";
    }

    static Shift parse(const std::string& s) {
        if (s == "id") return in_distribution();
        if (s == "var2") return variance_doubled();
        auto parse_len = [&](const std::string& digits) -> std::size_t {
            if (digits.empty() || !std::all_of(digits.begin(), digits.end(), ::isdigit)) {
                throw Error("unknown shift '" + s + "'");
            }
            return static_cast<std::size_t>(std::stoul(digits));
        };
        if (s.rfind("var2_len", 0) == 0) return variance_doubled_length(parse_len(s.substr(8)));
        if (s.rfind("len", 0) == 0) return length(parse_len(s.substr(3)));
        throw Error("unknown shift '" + s + "'");
    }

    friend bool operator==(const Shift&, const Shift&) = default;
};

/// Rejects shifts that make no sense for a family.
inline void validate_shift(Family family, const Shift& shift) {
    if (!shift.changes_length()) return;
    if (family == Family::Mlp) {
        throw Error("shift " + shift.name() + " changes sequence length, invalid for MLP");
    }
    const auto& lens = kShiftSeqLens;
    if (std::find(std::begin(lens), std::end(lens), static_cast<int>(shift.seq_len)) ==
        std::end(lens)) {
        throw Error("shift " + shift.name() + ": sequence length must be one of 3,5,10,20,30");
    }
}

/// The evaluation shifts used for a family.
inline std::vector<Shift> default_shifts(Family family) {
    std::vector<Shift> out{Shift::in_distribution(), Shift::variance_doubled()};
    if (family != Family::Mlp) {
        for (int l : kShiftSeqLens) out.push_back(Shift::length(l));
        for (int l : kShiftSeqLens) out.push_back(Shift::variance_doubled_length(l));
    }
    return out;
}

struct MlpTask {
    int R = 0;
    std::vector<double> alpha, beta;
};

struct MhaTask {
    int R = 0;
    std::vector<double> alpha, beta;
    int search_version = 1;
    int query_dim = 1;
    /// Search-v2 picks the most aligned token instead of the literal minimum.
    bool v2_argmax = false;

    std::size_t token_width() const { return static_cast<std::size_t>(R) * (2 * query_dim + 2); }
};

struct RnnTask {
    int R = 0;
    std::vector<Tensor> A, B;  // R matrices, kRnnDim × kRnnDim
    std::vector<double> w;     // kRnnDim
};

struct TaskOptions {
    int mha_search_version = 1;
    bool mha_v2_argmax = false;
};

struct TaskSpec {
    Family family = Family::Mlp;
    int R = 0;
    std::uint64_t seed = 0;
    std::variant<MlpTask, MhaTask, RnnTask> params;

    const MlpTask& mlp() const { return std::get<MlpTask>(params); }
    const MhaTask& mha() const { return std::get<MhaTask>(params); }
    const RnnTask& rnn() const { return std::get<RnnTask>(params); }
};

inline std::uint64_t task_seed(std::uint64_t master, Family family, int R, int task_index) {
    return derive_seed({master, 0x7461736bULL, static_cast<std::uint64_t>(family),
                        static_cast<std::uint64_t>(R), static_cast<std::uint64_t>(task_index)});
}

inline std::uint64_t data_seed(std::uint64_t stream_seed, std::uint64_t iteration) {
    return derive_seed({stream_seed, 0x64617461ULL, iteration});
}

inline TaskSpec sample_task(Family family, int R, std::uint64_t seed, TaskOptions opts = {}) {
    if (R < 1) throw Error("sample_task: R must be >= 1, got " + std::to_string(R));
    Rng rng(seed);
    TaskSpec t;
    t.family = family;
    t.R = R;
    t.seed = seed;
    switch (family) {
        case Family::Mlp: {
            MlpTask m;
            m.R = R;
            for (int c = 0; c < R; ++c) {
                m.alpha.push_back(normal(rng));
                m.beta.push_back(normal(rng));
            }
            t.params = std::move(m);
            break;
        }
        case Family::Mha: {
            if (opts.mha_search_version != 1 && opts.mha_search_version != 2) {
                throw Error("sample_task: MHA search version must be 1 or 2");
            }
            MhaTask m;
            m.R = R;
            m.search_version = opts.mha_search_version;
            m.query_dim = opts.mha_search_version == 1 ? 1 : 2;
            m.v2_argmax = opts.mha_v2_argmax;
            for (int c = 0; c < R; ++c) {
                m.alpha.push_back(normal(rng));
                m.beta.push_back(normal(rng));
            }
            t.params = std::move(m);
            break;
        }
        case Family::Rnn: {
            RnnTask m;
            m.R = R;
            // Entries have variance 1/sqrt(32).
            const double sd = std::pow(static_cast<double>(kRnnDim), -0.25);
            for (int c = 0; c < R; ++c) {
                Tensor a({kRnnDim, kRnnDim}), b({kRnnDim, kRnnDim});
                for (double& v : a.values()) v = normal(rng, sd);
                for (double& v : b.values()) v = normal(rng, sd);
                m.A.push_back(std::move(a));
                m.B.push_back(std::move(b));
            }
            for (std::size_t i = 0; i < kRnnDim; ++i) m.w.push_back(normal(rng));
            t.params = std::move(m);
            break;
        }
        default:
            throw Error("sample_task: unsupported family");
    }
    return t;
}

inline double mlp_label(const MlpTask& task, double x1, double x2, int c) {
    return task.alpha[c] * x1 + task.beta[c] * x2;
}

/// Labels for one sequence. `tokens` is N × token_width with, per rule r, the
/// block [q (query_dim), q' (query_dim), v, v'].
inline std::vector<double> mha_label(const MhaTask& task, const Tensor& tokens,
                                     std::span<const int> rule_ids) {
    const std::size_t n_tok = tokens.rows();
    if (n_tok < 2) throw Error("mha_label: sequence needs at least 2 tokens, got " + std::to_string(n_tok));
    if (rule_ids.size() != n_tok) throw Error("mha_label: one rule id per token required");
    const std::size_t qd = static_cast<std::size_t>(task.query_dim);
    const std::size_t block = 2 * qd + 2;
    auto field = [&](std::size_t tok, int rule, std::size_t off) {
        return tokens.data() + tok * tokens.cols() + static_cast<std::size_t>(rule) * block + off;
    };
    auto dist = [&](const double* a, const double* b) {
        if (task.search_version == 1) return std::fabs(a[0] - b[0]);
        double d = 0.0;
        for (std::size_t k = 0; k < qd; ++k) d += a[k] * b[k];
        return task.v2_argmax ? -d : d;
    };
    auto search = [&](std::size_t n, int c, std::size_t off) {
        std::size_t best = n == 0 ? 1 : 0;
        double best_d = dist(field(n, c, off), field(best, c, off));
        for (std::size_t i = best + 1; i < n_tok; ++i) {
            if (i == n) continue;
            const double d = dist(field(n, c, off), field(i, c, off));
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        return best;
    };
    std::vector<double> y(n_tok);
    for (std::size_t n = 0; n < n_tok; ++n) {
        const int c = rule_ids[n];
        const std::size_t s = search(n, c, 0);
        const std::size_t s2 = search(n, c, qd);
        y[n] = task.alpha[c] * *field(s, c, 2 * qd) + task.beta[c] * *field(s2, c, 2 * qd + 1);
    }
    return y;
}

/// Per-step outputs of the switching linear system started from a zero state.
inline std::vector<double> rnn_label(const RnnTask& task, const Tensor& x,
                                     std::span<const int> rule_ids) {
    const std::size_t d = kRnnDim;
    if (x.cols() != d) throw Error("rnn_label: inputs must have " + std::to_string(d) + " columns");
    if (rule_ids.size() != x.rows()) throw Error("rnn_label: one rule id per step required");
    std::vector<double> s(d, 0.0), next(d);
    std::vector<double> y(x.rows());
    for (std::size_t n = 0; n < x.rows(); ++n) {
        const Tensor& a = task.A[rule_ids[n]];
        const Tensor& b = task.B[rule_ids[n]];
        const double* xn = x.data() + n * d;
        for (std::size_t i = 0; i < d; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) acc += a.at(i, j) * s[j];
            for (std::size_t j = 0; j < d; ++j) acc += b.at(i, j) * xn[j];
            next[i] = acc;
        }
        s.swap(next);
        double out = 0.0;
        for (std::size_t i = 0; i < d; ++i) out += task.w[i] * s[i];
        y[n] = out;
    }
    return y;
}

/// Labeled samples. Every decision point (a sample for MLP, a token or time
/// step for MHA/RNN) occupies one row of `inputs`; rows of one sequence are
/// contiguous.
struct Batch {
    Family family = Family::Mlp;
    Mode mode = Mode::Regression;
    int R = 0;
    std::size_t batch_size = 0;
    std::size_t seq_len = 1;
    Tensor inputs;
    std::vector<int> rule_ids;
    std::vector<double> targets;  // regression value y
    std::vector<double> labels;   // y, or 1{y > 0} for classification

    std::size_t decision_points() const { return batch_size * seq_len; }
};

/// Draws a fresh batch. `rule_probs`, when given, replaces the uniform rule law.
inline Batch sample_batch(const TaskSpec& task, std::size_t batch_size, Mode mode, const Shift& shift,
                          std::uint64_t seed, std::span<const double> rule_probs = {}) {
    validate_shift(task.family, shift);
    if (batch_size == 0) throw Error("sample_batch: batch_size must be positive");
    if (!rule_probs.empty() && rule_probs.size() != static_cast<std::size_t>(task.R)) {
        throw Error("sample_batch: rule distribution must have R entries");
    }
    Rng rng(seed);
    const std::vector<double> weights(rule_probs.begin(), rule_probs.end());
    auto draw_rule = [&]() {
        return weights.empty() ? uniform_int(rng, task.R) : categorical(rng, weights);
    };
    const double sd = shift.doubles_variance() ? std::sqrt(2.0) : 1.0;

    Batch b;
    b.family = task.family;
    b.mode = mode;
    b.R = task.R;
    b.batch_size = batch_size;
    b.seq_len = task.family == Family::Mlp
                    ? 1
                    : (shift.changes_length() ? shift.seq_len : kTrainSeqLen);
    const std::size_t rows = b.decision_points();
    b.rule_ids.resize(rows);
    b.targets.resize(rows);

    switch (task.family) {
        case Family::Mlp: {
            const MlpTask& t = task.mlp();
            b.inputs = Tensor({rows, 2});
            for (std::size_t i = 0; i < rows; ++i) {
                const int c = draw_rule();
                const double x1 = normal(rng, sd);
                const double x2 = normal(rng, sd);
                b.inputs.at(i, 0) = x1;
                b.inputs.at(i, 1) = x2;
                b.rule_ids[i] = c;
                b.targets[i] = mlp_label(t, x1, x2, c);
            }
            break;
        }
        case Family::Mha: {
            const MhaTask& t = task.mha();
            const std::size_t width = t.token_width();
            const std::size_t qd = static_cast<std::size_t>(t.query_dim);
            const double radius = shift.doubles_variance() ? 2.0 : 1.0;
            b.inputs = Tensor({rows, width});
            for (std::size_t s = 0; s < batch_size; ++s) {
                for (std::size_t n = 0; n < b.seq_len; ++n) {
                    const std::size_t row = s * b.seq_len + n;
                    b.rule_ids[row] = draw_rule();
                    double* x = b.inputs.data() + row * width;
                    for (int r = 0; r < t.R; ++r) {
                        double* blk = x + static_cast<std::size_t>(r) * (2 * qd + 2);
                        for (int q = 0; q < 2; ++q) {
                            double* qv = blk + q * qd;
                            if (t.search_version == 1) {
                                qv[0] = normal(rng, sd);
                            } else {
                                double norm = 0.0;
                                do {
                                    norm = 0.0;
                                    for (std::size_t k = 0; k < qd; ++k) {
                                        qv[k] = normal(rng);
                                        norm += qv[k] * qv[k];
                                    }
                                } while (norm == 0.0);
                                norm = std::sqrt(norm);
                                for (std::size_t k = 0; k < qd; ++k) qv[k] = radius * qv[k] / norm;
                            }
                        }
                        blk[2 * qd] = normal(rng, sd);
                        blk[2 * qd + 1] = normal(rng, sd);
                    }
                }
                Tensor seq({b.seq_len, width},
                           std::vector<double>(b.inputs.data() + s * b.seq_len * width,
                                               b.inputs.data() + (s + 1) * b.seq_len * width));
                const auto y = mha_label(
                    t, seq, std::span<const int>(b.rule_ids.data() + s * b.seq_len, b.seq_len));
                std::copy(y.begin(), y.end(), b.targets.begin() + s * b.seq_len);
            }
            break;
        }
        case Family::Rnn: {
            const RnnTask& t = task.rnn();
            b.inputs = Tensor({rows, kRnnDim});
            for (std::size_t s = 0; s < batch_size; ++s) {
                for (std::size_t n = 0; n < b.seq_len; ++n) {
                    const std::size_t row = s * b.seq_len + n;
                    b.rule_ids[row] = draw_rule();
                    for (std::size_t k = 0; k < kRnnDim; ++k) b.inputs.at(row, k) = normal(rng, sd);
                }
                Tensor seq({b.seq_len, kRnnDim},
                           std::vector<double>(b.inputs.data() + s * b.seq_len * kRnnDim,
                                               b.inputs.data() + (s + 1) * b.seq_len * kRnnDim));
                const auto y = rnn_label(
                    t, seq, std::span<const int>(b.rule_ids.data() + s * b.seq_len, b.seq_len));
                std::copy(y.begin(), y.end(), b.targets.begin() + s * b.seq_len);
            }
            break;
        }
    }

    b.labels = b.targets;
    if (mode == Mode::Classification) {
        for (double& l : b.labels) l = l > 0.0 ? 1.0 : 0.0;
    }
    return b;
}

/// Writes one JSON object per sample: {family, mode, inputs, rule_ids, label}.
inline void dump_batch_jsonl(const Batch& b, std::ostream& os) {
    const std::size_t w = b.inputs.cols();
    for (std::size_t s = 0; s < b.batch_size; ++s) {
        nlohmann::json j;
        j["family"] = to_string(b.family);
        j["mode"] = to_string(b.mode);
        nlohmann::json inputs = nlohmann::json::array();
        nlohmann::json rules = nlohmann::json::array();
        nlohmann::json labels = nlohmann::json::array();
        for (std::size_t n = 0; n < b.seq_len; ++n) {
            const std::size_t row = s * b.seq_len + n;
            std::vector<double> x(b.inputs.data() + row * w, b.inputs.data() + (row + 1) * w);
            inputs.push_back(x);
            rules.push_back(b.rule_ids[row]);
            labels.push_back(b.labels[row]);
        }
        if (b.family == Family::Mlp) {
            j["inputs"] = inputs[0];
            j["label"] = labels[0];
        } else {
            j["inputs"] = inputs;
            j["label"] = labels;
        }
        j["rule_ids"] = rules;
        os << j.dump() << '\n';
    }
}

}  // namespace modbench
