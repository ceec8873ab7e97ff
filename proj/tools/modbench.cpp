// Copyright (c) 2026, The modbench Authors
// SPDX-License-Identifier: Apache-2.0
//
// modbench command line: run, sweep, report, plot, verify, dump-batch.
// Exit status: 0 success, 1 verification failure, 2 configuration error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "modbench/modbench.hpp"

namespace fs = std::filesystem;
using namespace modbench;

namespace {

constexpr int kOk = 0;
constexpr int kVerifyFailed = 1;
constexpr int kConfigError = 2;

void warn(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

std::vector<RunRecord> records_in(const fs::path& dir) {
    const fs::path file = fs::is_directory(dir) ? results_path(dir) : dir;
    if (!fs::exists(file)) throw ConfigError("no results file at " + file.string());
    auto recs = load_records(file, warn);
    if (recs.empty()) throw ConfigError(file.string() + " holds no records");
    return recs;
}

int cmd_run(const std::string& config, const std::string& out) {
    const nlohmann::json j = read_json_file(config);
    std::set<std::string> allowed = RunSettings::keys();
    allowed.insert("coordinates");
    detail::reject_unknown_keys(j, allowed, "run");
    if (!j.contains("coordinates")) throw ConfigError("run: missing 'coordinates'");
    const Coordinates c = Coordinates::from_json(j.at("coordinates"));
    const RunSettings settings = RunSettings::from_json(j, "run");
    fs::path ckpt;
    if (!out.empty()) {
        fs::create_directories(out);
        ckpt = fs::path(out) / "checkpoints";
    }
    std::cerr << "run " << c.key() << '\n';
    const RunRecord rec = execute_run(c, settings, ckpt);
    const std::string line = rec.to_json().dump();
    std::cout << line << '\n';
    if (!out.empty()) {
        std::ofstream(fs::path(out) / "record.json") << rec.to_json().dump(2) << '\n';
    }
    // Divergence is a recorded outcome, not a tool failure.
    return kOk;
}

int cmd_sweep(const std::string& config, const std::string& out, int jobs, bool resume) {
    SweepConfig cfg = SweepConfig::from_json(read_json_file(config));
    if (!out.empty()) cfg.output_dir = out;
    SweepOptions opts;
    opts.resume = resume;
    if (jobs > 0) opts.jobs = jobs;
    opts.warn = warn;
    opts.on_record = [](const RunRecord& r, std::size_t done, std::size_t total) {
        std::fprintf(stderr, "[%zu/%zu] %s %s id=%s %.1fs\n", done, total, r.coords.key().c_str(), r.status.c_str(),
                     r.performance.count("id") ? std::to_string(r.performance.at("id")).c_str() : "-",
                     r.wall_clock_s);
    };
    const SweepResult res = run_sweep(cfg, opts);
    std::fprintf(stderr, "%zu runs completed, %zu already present in %s\n", res.records.size(),
                 res.skipped_existing, results_path(cfg.output_dir).c_str());
    return kOk;
}

int cmd_report(const std::string& out) {
    if (out.empty()) throw ConfigError("report: --out DIR (the sweep directory) is required");
    const auto recs = records_in(out);
    const ReportBundle b = aggregate_report(recs);
    const fs::path dir = fs::path(out) / "report";
    write_report(b, dir);
    std::cout << b.files.at("summary.txt");
    std::cerr << "report written to " << dir.string() << '\n';
    return kOk;
}

int cmd_plot(const std::string& out, const std::string& figure) {
    if (out.empty()) throw ConfigError("plot: --out DIR (the sweep directory) is required");
    if (figure.empty()) {
        std::string known;
        for (const auto& id : figure_ids()) known += " " + id;
        throw ConfigError("plot: --figure is required (known:" + known + ")");
    }
    const auto recs = records_in(out);
    std::cout << plot_data(recs, figure);
    return kOk;
}

int cmd_verify() {
    const auto results = verify();
    for (const auto& r : results) {
        std::printf("%s  %-55s %s  [%.1fs]\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str(),
                    r.seconds);
    }
    std::fflush(stdout);
    return all_passed(results) ? kOk : kVerifyFailed;
}

int cmd_dump_batch(const std::string& config) {
    const nlohmann::json j = read_json_file(config);
    detail::reject_unknown_keys(j, {"family", "mode", "R", "shift", "batch_size", "seed", "task", "master_seed", "search_version"},
                                "dump-batch");
    try {
        const Family f = parse_family(j.at("family").get<std::string>());
        const int R = j.at("R").get<int>();
        TaskOptions opts;
        opts.mha_search_version = j.value("search_version", 1);
        const TaskSpec task = sample_task(f, R, task_seed(j.value("master_seed", std::uint64_t{1}), f, R, j.value("task", 0)), opts);
        const Batch b = sample_batch(task, j.value("batch_size", std::size_t{4}), parse_mode(j.value("mode", std::string("regression"))),
                                     Shift::parse(j.value("shift", std::string("id"))), j.value("seed", std::uint64_t{0}));
        dump_batch_jsonl(b, std::cout);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("dump-batch: ") + e.what());
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(std::string("dump-batch: ") + e.what());
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"modbench: modular vs monolithic benchmark"};
    app.require_subcommand(1);
    std::string config, out, figure;
    int jobs = 0;
    bool resume = false;

    auto* run = app.add_subcommand("run", "Train and evaluate one run from a JSON config");
    run->add_option("--config", config, "Run settings plus a 'coordinates' object")->required()->check(CLI::ExistingFile);
    run->add_option("--out", out, "Directory for record.json and checkpoints");

    auto* sweep = app.add_subcommand("sweep", "Run a configured sweep, appending to results.jsonl");
    sweep->add_option("--config", config, "Sweep config (JSON)")->required()->check(CLI::ExistingFile);
    sweep->add_option("--out", out, "Output directory (overrides output_dir)");
    sweep->add_option("--jobs", jobs, "Parallel runs (overrides jobs)")->check(CLI::PositiveNumber);
    sweep->add_flag("--resume", resume, "Skip coordinates already in results.jsonl");

    auto* report = app.add_subcommand("report", "Aggregate results into CSV tables and a summary");
    report->add_option("--out", out, "Sweep directory")->required();

    auto* plot = app.add_subcommand("plot", "Print the CSV series behind one figure");
    plot->add_option("--out", out, "Sweep directory")->required();
    plot->add_option("--figure", figure, "Figure id");

    app.add_subcommand("verify", "Run the oracle suite");

    auto* dump = app.add_subcommand("dump-batch", "Print a sampled batch as JSON lines");
    dump->add_option("--config", config, "Batch request (JSON)")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfigError;
    }

    try {
        if (*run) return cmd_run(config, out);
        if (*sweep) return cmd_sweep(config, out, jobs, resume);
        if (*report) return cmd_report(out);
        if (*plot) return cmd_plot(out, figure);
        if (app.got_subcommand("verify")) return cmd_verify();
        if (*dump) return cmd_dump_batch(config);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfigError;
    }
    return kOk;
}
