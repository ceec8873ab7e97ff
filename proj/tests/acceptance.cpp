// Copyright (c) 2026, The modbench Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.
//
//   acceptance [WORK_DIR]
//
// WORK_DIR holds the sweep results of criteria 7, 8 and 10 (default: a
// directory under the system temp dir, cleared first).

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "modbench/modbench.hpp"

namespace fs = std::filesystem;
using namespace modbench;

namespace {

// Tolerances and budgets.
constexpr double kGradRelTol = 1e-4;
constexpr std::size_t kGradGraphs = 200;
constexpr std::size_t kMatricesPerR = 100;
constexpr double kImiTol = 1e-12;
constexpr double kAnalyticTol = 1e-12;
constexpr int kGtR = 4;
constexpr std::size_t kGtSamples = 10000;
constexpr std::size_t kGtDraws = 100;
constexpr double kGtTol = 0.02;
constexpr int kRandomGateR = 4;
constexpr std::size_t kRandomGateActivations = 100000;
constexpr std::size_t kWitnessSamples = 1000;
constexpr double kWitnessTol = 1e-6;
constexpr std::size_t kLawSamples = 100000;
constexpr double kVarianceTol = 0.02;
constexpr double kFrequencyTol = 0.01;
constexpr double kNormTol = 1e-12;
constexpr double kTieTolerance = 0.05;
constexpr std::size_t kTrendCapacity = 10000;
constexpr std::size_t kTrendIterations = 20000;
constexpr int kTrendTasks = 3;
constexpr int kTrendSeeds = 3;

constexpr double kOneMinute = 60.0;
constexpr double kTenMinutes = 600.0;
constexpr double kFourHours = 4 * 3600.0;

struct Outcome {
    bool passed = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

Outcome from_checks(const std::vector<CheckResult>& rs, double budget_s) {
    Outcome o{true, ""};
    double total = 0.0;
    for (const auto& r : rs) {
        o.passed = o.passed && r.passed;
        o.detail += (o.detail.empty() ? "" : "; ") + r.detail;
        total += r.seconds;
    }
    if (budget_s > 0.0) {
        o.passed = o.passed && total < budget_s;
        o.detail += "; " + num(total) + " s (budget " + num(budget_s) + " s)";
    }
    return o;
}

RunSettings trend_settings() {
    RunSettings s;
    s.iterations = kTrendIterations;
    s.batch_size = 256;
    s.learning_rate = 1e-4;
    s.eval_samples = 10000;
    s.shifts = std::vector<std::string>{"id"};
    s.adaptation_draws = 0;
    return s;
}

std::vector<RunRecord> sweep(const fs::path& dir, SweepConfig cfg) {
    cfg.output_dir = dir.string();
    cfg.jobs = 1;
    fs::remove_all(dir);
    SweepOptions opts;
    opts.on_record = [](const RunRecord& r, std::size_t done, std::size_t total) {
        std::fprintf(stderr, "  [%zu/%zu] %s %s %.1fs\n", done, total, r.coords.key().c_str(), r.status.c_str(),
                     r.wall_clock_s);
    };
    run_sweep(cfg, opts);
    return load_records(results_path(dir));
}

double mean_of(const std::vector<RunRecord>& rs, Level l, int R, const std::function<double(const RunRecord&)>& f) {
    double s = 0.0;
    int n = 0;
    for (const auto& r : rs) {
        if (r.coords.level == l && r.coords.R == R && r.ok()) {
            s += f(r);
            ++n;
        }
    }
    return n ? s / n : std::nan("");
}

// Every record converged and its late-training median loss is below the early one.
bool losses_fall(const std::vector<RunRecord>& rs, std::size_t expected, std::string& why) {
    std::size_t ok = 0;
    for (const auto& r : rs) {
        if (!r.ok()) {
            why = r.coords.key() + " " + r.status;
            return false;
        }
        if (!(r.loss_median_tail < r.loss_median_head)) {
            why = r.coords.key() + " median loss did not fall";
            return false;
        }
        ++ok;
    }
    if (ok != expected) {
        why = std::to_string(ok) + " of " + std::to_string(expected) + " records";
        return false;
    }
    return true;
}

Outcome trend_performance(const fs::path& dir, std::vector<RunRecord>& out) {
    SweepConfig cfg;
    cfg.families = {Family::Mlp};
    cfg.modes = {Mode::Regression};
    cfg.levels = {Level::GtModular, Level::Modular, Level::Monolithic};
    cfg.rule_counts = {8};
    cfg.capacities = {kTrendCapacity};
    cfg.tasks_per_setting = kTrendTasks;
    cfg.seeds_per_task = kTrendSeeds;
    cfg.settings = trend_settings();
    const auto t0 = std::chrono::steady_clock::now();
    out = sweep(dir, cfg);
    const double secs = seconds_since(t0);
    auto id = [](const RunRecord& r) { return r.performance.at("id"); };
    const double gt = mean_of(out, Level::GtModular, 8, id);
    const double mod = mean_of(out, Level::Modular, 8, id);
    const double mono = mean_of(out, Level::Monolithic, 8, id);
    std::string why;
    const bool converged = losses_fall(out, cfg.coordinates().size(), why);
    Outcome o;
    o.passed = converged && gt < mono && gt <= mod && mod <= mono * (1.0 + kTieTolerance) && secs < kFourHours;
    o.detail = "MLP regression R=8 C=" + std::to_string(kTrendCapacity) + ", mean id loss GtModular " + num(gt) +
               ", Modular " + num(mod) + ", Monolithic " + num(mono) + " (tie tol " + num(kTieTolerance) + "); " +
               (converged ? "all runs converged with falling median loss" : why) + "; " + num(secs) + " s";
    return o;
}

Outcome trend_collapse(const fs::path& dir, std::vector<RunRecord>& out) {
    SweepConfig cfg;
    cfg.families = {Family::Mlp};
    cfg.modes = {Mode::Classification};
    cfg.levels = {Level::GtModular, Level::Modular};
    cfg.rule_counts = {2, 8};
    cfg.capacities = {kTrendCapacity};
    cfg.tasks_per_setting = kTrendTasks;
    cfg.seeds_per_task = kTrendSeeds;
    cfg.settings = trend_settings();
    const auto t0 = std::chrono::steady_clock::now();
    out = sweep(dir, cfg);
    const double secs = seconds_since(t0);
    auto ca = [](const RunRecord& r) { return r.metrics ? r.metrics->collapse_avg : std::nan(""); };
    const double mod2 = mean_of(out, Level::Modular, 2, ca);
    const double mod8 = mean_of(out, Level::Modular, 8, ca);
    const double gt2 = mean_of(out, Level::GtModular, 2, ca);
    const double gt8 = mean_of(out, Level::GtModular, 8, ca);
    std::string why;
    const bool converged = losses_fall(out, cfg.coordinates().size(), why);
    Outcome o;
    o.passed = converged && mod8 >= mod2 && mod2 > gt2 && mod8 > gt8;
    o.detail = "MLP classification, mean C_A Modular R=2 " + num(mod2) + ", R=8 " + num(mod8) + "; GtModular R=2 " +
               num(gt2) + ", R=8 " + num(gt8) + "; " +
               (converged ? "all runs converged with falling median loss" : why) + "; " + num(secs) + " s";
    return o;
}

bool same_outcome(const RunRecord& a, const RunRecord& b) {
    if (a.status != b.status || a.performance != b.performance) return false;
    if (a.metrics.has_value() != b.metrics.has_value()) return false;
    return !a.metrics || a.metrics->to_json() == b.metrics->to_json();
}

Outcome determinism(const fs::path& dir, const std::vector<RunRecord>& perf, const std::vector<RunRecord>& collapse) {
    // A short sweep over the sequence families, read back from disk.
    SweepConfig cfg;
    cfg.families = {Family::Mha, Family::Rnn};
    cfg.modes = {Mode::Regression, Mode::Classification};
    cfg.levels = {Level::GtModular, Level::ModularOp, Level::Modular, Level::Monolithic, Level::RandomGate};
    cfg.rule_counts = {2};
    cfg.capacities = {20000};
    cfg.tasks_per_setting = 1;
    cfg.seeds_per_task = 1;
    cfg.settings.iterations = 30;
    cfg.settings.batch_size = 16;
    cfg.settings.eval_samples = 100;
    cfg.settings.adaptation_draws = 3;
    cfg.settings.adaptation_samples = 100;
    std::vector<std::pair<RunRecord, RunSettings>> todo;
    for (const auto& r : sweep(dir, cfg)) todo.push_back({r, cfg.settings});
    // Plus one full-length record from each trend sweep.
    for (const auto* rs : {&perf, &collapse}) {
        for (const auto& r : *rs) {
            if (r.coords.level == Level::Modular) {
                todo.push_back({r, trend_settings()});
                break;
            }
        }
    }
    std::size_t matched = 0;
    std::string first_bad;
    for (const auto& [rec, settings] : todo) {
        const RunRecord again = execute_run(rec.coords, settings);
        if (same_outcome(rec, again)) {
            ++matched;
        } else if (first_bad.empty()) {
            first_bad = rec.coords.key();
        }
    }
    Outcome o;
    o.passed = matched == todo.size() && todo.size() == cfg.coordinates().size() + 2;
    o.detail = std::to_string(matched) + "/" + std::to_string(todo.size()) +
               " records re-executed from their coordinates reproduce performance and metrics bit-exactly" +
               (first_bad.empty() ? "" : "; first mismatch " + first_bad);
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "modbench_acceptance";
    fs::create_directories(work);

    int failures = 0;
    auto report = [&](int id, const char* name, const Outcome& o, double secs) {
        std::printf("%s  [%2d] %-44s %s  [%.1fs]\n", o.passed ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
        std::fflush(stdout);
        failures += o.passed ? 0 : 1;
    };
    auto run = [&](int id, const char* name, const std::function<Outcome()>& body) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = body();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        report(id, name, o, seconds_since(t0));
    };

    run(1, "autodiff gradients vs finite differences",
        [] { return from_checks({check_gradients(kGradGraphs, kGradRelTol)}, kOneMinute); });
    run(2, "metric oracle equivalence", [] {
        return from_checks({check_alignment_brute_force(kMatricesPerR), check_imi_identity(kMatricesPerR, kImiTol)},
                           kOneMinute);
    });
    run(3, "analytic metric cases", [] { return from_checks({check_analytic_metrics(kAnalyticTol)}, 0.0); });
    run(4, "GT-Modular metrics from live evaluation", [] {
        return from_checks({check_gt_modular_live(kGtR, kGtSamples, kGtDraws, kGtTol)}, kTenMinutes);
    });
    run(5, "random-gate baseline from live evaluation",
        [] { return from_checks({check_random_gate_live(kRandomGateR, kRandomGateActivations)}, 0.0); });
    run(6, "containment witnesses",
        [] { return from_checks({check_containment({2, 4}, kWitnessSamples, kWitnessTol)}, 0.0); });

    std::vector<RunRecord> perf, collapse;
    run(7, "modular vs monolithic trend", [&] { return trend_performance(work / "trend_performance", perf); });
    run(8, "collapse grows with R", [&] { return trend_collapse(work / "trend_collapse", collapse); });

    run(9, "data-law checks", [] {
        return from_checks({check_data_laws(kLawSamples, 4, kVarianceTol, kFrequencyTol, kNormTol)}, kOneMinute);
    });
    run(10, "determinism", [&] { return determinism(work / "determinism", perf, collapse); });

    std::printf("%d of 10 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
