// Copyright (c) 2026, The modbench Authors
// SPDX-License-Identifier: Apache-2.0
//
// Sweep orchestration: strict JSON configs, per-coordinate seeding, an
// append-only JSONL results file written by a single writer, resumable runs,
// and aggregation into CSV tables.

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "modbench/levels.hpp"
#include "modbench/metrics.hpp"
#include "modbench/modelzoo.hpp"
#include "modbench/random.hpp"
#include "modbench/rulegen.hpp"
#include "modbench/trainer.hpp"

namespace modbench {

/// Invalid configuration or misuse of an output directory (exit status 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                                const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
    for (const auto& [k, v] : j.items()) {
        if (!allowed.count(k)) {
            std::string list;
            for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
            throw ConfigError(where + ": unknown key '" + k + "' (allowed: " + list + ")");
        }
    }
}

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

template <class T, class Parse>
std::vector<T> parse_list(const nlohmann::json& j, const char* key, Parse parse, std::vector<T> fallback,
                          const std::string& where) {
    if (!j.contains(key)) return fallback;
    const auto& arr = j.at(key);
    if (!arr.is_array() || arr.empty()) throw ConfigError(where + "." + key + ": must be a nonempty list");
    std::vector<T> out;
    for (const auto& v : arr) {
        try {
            out.push_back(parse(v));
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError(where + "." + key + ": " + e.what());
        }
    }
    return out;
}

}  // namespace detail

/// Training and evaluation settings shared by every run of a sweep. Unset
/// fields fall back to the family defaults of TrainConfig::for_family.
struct RunSettings {
    std::uint64_t master_seed = 1;
    std::optional<std::size_t> iterations;
    std::size_t batch_size = 256;
    double learning_rate = 1e-4;
    std::optional<double> clip_norm;  // RNN only; defaults to 1.0 there
    std::optional<std::size_t> eval_every;
    std::size_t eval_samples = 10000;
    std::optional<std::vector<std::string>> shifts;  // names; invalid ones are skipped per family
    std::size_t adaptation_draws = 100;             // 0 disables
    std::size_t adaptation_samples = 10000;
    double dirichlet_alpha = 1.0;
    bool save_checkpoints = false;

    TrainConfig train_config(Family family, Mode mode) const {
        TrainConfig c = TrainConfig::for_family(family, mode);
        if (iterations) c.iterations = *iterations;
        c.batch_size = batch_size;
        c.learning_rate = learning_rate;
        if (family == Family::Rnn && clip_norm) c.clip_norm = *clip_norm;
        c.eval_every = eval_every ? *eval_every : std::max<std::size_t>(1, c.iterations / 10);
        c.eval_samples = eval_samples;
        c.shifts = shifts_for(family);
        return c;
    }

    std::vector<Shift> shifts_for(Family family) const {
        if (!shifts) return default_shifts(family);
        std::vector<Shift> out;
        for (const auto& name : *shifts) {
            const Shift s = Shift::parse(name);
            try {
                validate_shift(family, s);
            } catch (const Error&) {
                continue;
            }
            out.push_back(s);
        }
        if (std::find(out.begin(), out.end(), Shift::in_distribution()) == out.end()) {
            out.insert(out.begin(), Shift::in_distribution());
        }
        return out;
    }

    static const std::set<std::string>& keys() {
        static const std::set<std::string> k{"master_seed",  "iterations",       "batch_size",
                                             "learning_rate", "clip_norm",        "eval_every",
                                             "eval_samples",  "shifts",           "adaptation_draws",
                                             "adaptation_samples", "dirichlet_alpha", "save_checkpoints"};
        return k;
    }

    static RunSettings from_json(const nlohmann::json& j, const std::string& where) {
        using detail::get_or;
        RunSettings s;
        s.master_seed = get_or<std::uint64_t>(j, "master_seed", s.master_seed, where);
        if (j.contains("iterations")) s.iterations = get_or<std::size_t>(j, "iterations", 0, where);
        s.batch_size = get_or<std::size_t>(j, "batch_size", s.batch_size, where);
        s.learning_rate = get_or<double>(j, "learning_rate", s.learning_rate, where);
        if (j.contains("clip_norm")) s.clip_norm = get_or<double>(j, "clip_norm", 0.0, where);
        if (j.contains("eval_every")) s.eval_every = get_or<std::size_t>(j, "eval_every", 0, where);
        s.eval_samples = get_or<std::size_t>(j, "eval_samples", s.eval_samples, where);
        if (j.contains("shifts")) {
            s.shifts = detail::parse_list<std::string>(
                j, "shifts", [](const nlohmann::json& v) { return Shift::parse(v.get<std::string>()).name(); },
                {}, where);
        }
        s.adaptation_draws = get_or<std::size_t>(j, "adaptation_draws", s.adaptation_draws, where);
        s.adaptation_samples = get_or<std::size_t>(j, "adaptation_samples", s.adaptation_samples, where);
        s.dirichlet_alpha = get_or<double>(j, "dirichlet_alpha", s.dirichlet_alpha, where);
        s.save_checkpoints = get_or<bool>(j, "save_checkpoints", s.save_checkpoints, where);
        s.validate(where);
        return s;
    }

    void to_json(nlohmann::json& j) const {
        j["master_seed"] = master_seed;
        if (iterations) j["iterations"] = *iterations;
        j["batch_size"] = batch_size;
        j["learning_rate"] = learning_rate;
        if (clip_norm) j["clip_norm"] = *clip_norm;
        if (eval_every) j["eval_every"] = *eval_every;
        j["eval_samples"] = eval_samples;
        if (shifts) j["shifts"] = *shifts;
        j["adaptation_draws"] = adaptation_draws;
        j["adaptation_samples"] = adaptation_samples;
        j["dirichlet_alpha"] = dirichlet_alpha;
        j["save_checkpoints"] = save_checkpoints;
    }

    void validate(const std::string& where) const {
        if (iterations && *iterations < 1) throw ConfigError(where + ".iterations: must be >= 1");
        if (batch_size < 1) throw ConfigError(where + ".batch_size: must be >= 1");
        if (!(learning_rate > 0.0)) throw ConfigError(where + ".learning_rate: must be > 0");
        if (clip_norm && !(*clip_norm > 0.0)) throw ConfigError(where + ".clip_norm: must be > 0");
        if (eval_every && *eval_every < 1) throw ConfigError(where + ".eval_every: must be >= 1");
        if (eval_samples < 1) throw ConfigError(where + ".eval_samples: must be >= 1");
        if (adaptation_draws > 0 && adaptation_samples < 1) {
            throw ConfigError(where + ".adaptation_samples: must be >= 1");
        }
        if (!(dirichlet_alpha > 0.0)) throw ConfigError(where + ".dirichlet_alpha: must be > 0");
    }
};

/// Coordinates of one run; unique within a sweep.
struct Coordinates {
    Family family = Family::Mlp;
    Mode mode = Mode::Regression;
    Level level = Level::Modular;
    int R = 2;
    std::size_t capacity = 10000;
    int task = 0;
    int seed = 0;

    std::string key() const {
        return to_string(family) + "/" + to_string(mode) + "/" + to_string(level) + "/R" + std::to_string(R) +
               "/C" + std::to_string(capacity) + "/t" + std::to_string(task) + "/s" + std::to_string(seed);
    }

    /// Vote group: everything except level and seed.
    std::string group() const {
        return to_string(family) + "/" + to_string(mode) + "/R" + std::to_string(R) + "/C" +
               std::to_string(capacity) + "/t" + std::to_string(task);
    }

    nlohmann::json to_json() const {
        return {{"family", to_string(family)}, {"mode", to_string(mode)}, {"level", to_string(level)},
                {"R", R}, {"capacity", capacity}, {"task", task}, {"seed", seed}};
    }

    static Coordinates from_json(const nlohmann::json& j) {
        detail::reject_unknown_keys(j, {"family", "mode", "level", "R", "capacity", "task", "seed"},
                                    "coordinates");
        Coordinates c;
        try {
            c.family = parse_family(j.at("family").get<std::string>());
            c.mode = parse_mode(j.at("mode").get<std::string>());
            c.level = parse_level(j.at("level").get<std::string>());
            c.R = j.at("R").get<int>();
            c.capacity = j.at("capacity").get<std::size_t>();
            c.task = j.value("task", 0);
            c.seed = j.value("seed", 0);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError(std::string("coordinates: ") + e.what());
        }
        if (c.R < 2) throw ConfigError("coordinates.R: must be >= 2");
        if (c.task < 0 || c.seed < 0) throw ConfigError("coordinates: task and seed must be >= 0");
        return c;
    }

    friend bool operator==(const Coordinates&, const Coordinates&) = default;
};

struct RunSeeds {
    std::uint64_t task = 0;
    std::uint64_t init = 0;
    std::uint64_t run = 0;
};

/// Seeds are hashes of the coordinates, so adding runs never perturbs others.
/// The task seed ignores mode, level, capacity and seed; the data stream is
/// shared by all levels at the same coordinates.
inline RunSeeds run_seeds(std::uint64_t master, const Coordinates& c) {
    RunSeeds s;
    s.task = task_seed(master, c.family, c.R, c.task);
    s.run = derive_seed({master, hash_string("run"), hash_string(to_string(c.family)),
                         hash_string(to_string(c.mode)), static_cast<std::uint64_t>(c.R), c.capacity,
                         static_cast<std::uint64_t>(c.task), static_cast<std::uint64_t>(c.seed)});
    s.init = derive_seed({s.run, hash_string(to_string(c.level))});
    return s;
}

struct RunRecord {
    Coordinates coords;
    RunSeeds seeds;
    std::size_t params = 0;
    std::size_t hidden_width = 0;
    std::size_t decoder_width = 0;
    std::map<std::string, double> performance;  // final, per shift
    std::optional<MetricReport> metrics;        // absent for Monolithic
    double wall_clock_s = 0.0;
    std::string status = "ok";  // ok | diverged | skipped
    std::string diagnostic;
    std::vector<Checkpoint> curve;
    // Medians of the first and last 10% of training losses.
    double loss_median_head = 0.0;
    double loss_median_tail = 0.0;

    bool ok() const { return status == "ok"; }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["key"] = coords.key();
        j["coordinates"] = coords.to_json();
        j["seeds"] = {{"task", seeds.task}, {"init", seeds.init}, {"run", seeds.run}};
        j["params"] = params;
        j["hidden_width"] = hidden_width;
        j["decoder_width"] = decoder_width;
        j["performance"] = performance;
        j["metrics"] = metrics ? metrics->to_json() : nlohmann::json(nullptr);
        j["wall_clock_s"] = wall_clock_s;
        j["status"] = status;
        j["diagnostic"] = diagnostic;
        nlohmann::json curve_j = nlohmann::json::array();
        for (const auto& c : curve) curve_j.push_back({{"iter", c.iter}, {"train_loss", c.train_loss}, {"evals", c.evals}});
        j["curve"] = curve_j;
        j["loss_median_head"] = loss_median_head;
        j["loss_median_tail"] = loss_median_tail;
        return j;
    }

    static RunRecord from_json(const nlohmann::json& j) {
        RunRecord r;
        r.coords = Coordinates::from_json(j.at("coordinates"));
        const auto& s = j.at("seeds");
        r.seeds = {s.at("task").get<std::uint64_t>(), s.at("init").get<std::uint64_t>(),
                   s.at("run").get<std::uint64_t>()};
        r.params = j.at("params").get<std::size_t>();
        r.hidden_width = j.value("hidden_width", std::size_t{0});
        r.decoder_width = j.value("decoder_width", std::size_t{0});
        r.performance = j.at("performance").get<std::map<std::string, double>>();
        if (!j.at("metrics").is_null()) r.metrics = MetricReport::from_json(j.at("metrics"));
        r.wall_clock_s = j.at("wall_clock_s").get<double>();
        r.status = j.at("status").get<std::string>();
        r.diagnostic = j.value("diagnostic", std::string());
        r.loss_median_head = j.value("loss_median_head", 0.0);
        r.loss_median_tail = j.value("loss_median_tail", 0.0);
        for (const auto& c : j.at("curve")) {
            r.curve.push_back({c.at("iter").get<std::size_t>(), c.at("train_loss").get<double>(),
                               c.at("evals").get<std::map<std::string, double>>()});
        }
        return r;
    }
};

struct SweepConfig {
    std::vector<Family> families{Family::Mlp};
    std::vector<Mode> modes{Mode::Regression};
    std::vector<Level> levels{Level::GtModular, Level::ModularOp, Level::Modular, Level::Monolithic};
    // Desk-scale defaults; the full grid (R up to 32, 5 tasks × 5 seeds) is opt-in.
    std::vector<int> rule_counts{2, 8};
    std::vector<std::size_t> capacities{10000};
    int tasks_per_setting = 3;
    int seeds_per_task = 3;
    RunSettings settings;
    std::string output_dir = "results";
    int jobs = 1;

    /// Every run in deterministic order.
    std::vector<Coordinates> coordinates() const {
        std::vector<Coordinates> out;
        for (Family f : families)
            for (Mode m : modes)
                for (int R : rule_counts)
                    for (std::size_t cap : capacities)
                        for (int t = 0; t < tasks_per_setting; ++t)
                            for (int s = 0; s < seeds_per_task; ++s)
                                for (Level l : levels) out.push_back({f, m, l, R, cap, t, s});
        return out;
    }

    static SweepConfig from_json(const nlohmann::json& j) {
        std::set<std::string> allowed{"families", "modes", "levels", "rule_counts", "capacities",
                                      "tasks_per_setting", "seeds_per_task", "output_dir", "jobs"};
        allowed.insert(RunSettings::keys().begin(), RunSettings::keys().end());
        detail::reject_unknown_keys(j, allowed, "sweep");
        SweepConfig c;
        const std::string w = "sweep";
        c.families = detail::parse_list<Family>(
            j, "families", [](const nlohmann::json& v) { return parse_family(v.get<std::string>()); },
            c.families, w);
        c.modes = detail::parse_list<Mode>(
            j, "modes", [](const nlohmann::json& v) { return parse_mode(v.get<std::string>()); }, c.modes, w);
        c.levels = detail::parse_list<Level>(
            j, "levels", [](const nlohmann::json& v) { return parse_level(v.get<std::string>()); }, c.levels, w);
        c.rule_counts = detail::parse_list<int>(
            j, "rule_counts", [](const nlohmann::json& v) { return v.get<int>(); }, c.rule_counts, w);
        c.capacities = detail::parse_list<std::size_t>(
            j, "capacities", [](const nlohmann::json& v) { return v.get<std::size_t>(); }, c.capacities, w);
        c.tasks_per_setting = detail::get_or<int>(j, "tasks_per_setting", c.tasks_per_setting, w);
        c.seeds_per_task = detail::get_or<int>(j, "seeds_per_task", c.seeds_per_task, w);
        c.output_dir = detail::get_or<std::string>(j, "output_dir", c.output_dir, w);
        c.jobs = detail::get_or<int>(j, "jobs", c.jobs, w);
        c.settings = RunSettings::from_json(j, w);
        c.validate();
        return c;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        for (Family f : families) j["families"].push_back(to_string(f));
        for (Mode m : modes) j["modes"].push_back(to_string(m));
        for (Level l : levels) j["levels"].push_back(to_string(l));
        j["rule_counts"] = rule_counts;
        j["capacities"] = capacities;
        j["tasks_per_setting"] = tasks_per_setting;
        j["seeds_per_task"] = seeds_per_task;
        j["output_dir"] = output_dir;
        j["jobs"] = jobs;
        settings.to_json(j);
        return j;
    }

    void validate() const {
        for (int R : rule_counts) {
            if (R < 2) throw ConfigError("sweep.rule_counts: every R must be >= 2");
        }
        for (std::size_t c : capacities) {
            if (c < 1) throw ConfigError("sweep.capacities: must be positive");
        }
        if (tasks_per_setting < 1) throw ConfigError("sweep.tasks_per_setting: must be >= 1");
        if (seeds_per_task < 1) throw ConfigError("sweep.seeds_per_task: must be >= 1");
        if (jobs < 1) throw ConfigError("sweep.jobs: must be >= 1");
        auto unique = [](auto v, const char* name) {
            std::sort(v.begin(), v.end());
            if (std::adjacent_find(v.begin(), v.end()) != v.end()) {
                throw ConfigError(std::string("sweep.") + name + ": duplicate entries");
            }
        };
        unique(families, "families");
        unique(modes, "modes");
        unique(levels, "levels");
        unique(rule_counts, "rule_counts");
        unique(capacities, "capacities");
        settings.validate("sweep");
    }
};

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

/// Trains and evaluates one run. Never throws for run-level failures; they
/// come back as "diverged" or "skipped" records.
inline RunRecord execute_run(const Coordinates& c, const RunSettings& settings,
                             const std::filesystem::path& checkpoint_root = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    RunRecord rec;
    rec.coords = c;
    rec.seeds = run_seeds(settings.master_seed, c);
    auto finish = [&]() -> RunRecord {
        rec.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return rec;
    };

    const TaskSpec task = sample_task(c.family, c.R, rec.seeds.task);
    ModelConfig mc;
    try {
        mc = make_config(c.level, task, c.capacity);
    } catch (const Error& e) {
        rec.status = "skipped";
        rec.diagnostic = e.what();
        return finish();
    }
    Model model = Model::build(mc, rec.seeds.init);
    rec.params = model.param_count();
    rec.hidden_width = mc.hidden_width;
    rec.decoder_width = mc.decoder_width;

    const TrainConfig tc = settings.train_config(c.family, c.mode);
    const TrainLog log = train(model, task, tc, rec.seeds.run);
    rec.curve = log.checkpoints;
    if (!log.ok()) {
        rec.status = log.status;
        rec.diagnostic = log.diagnostic;
        return finish();
    }
    rec.performance = log.checkpoints.back().evals;
    std::tie(rec.loss_median_head, rec.loss_median_tail) = loss_window_medians(log.losses);

    if (mc.modular()) {
        const EvalResult ev = evaluate(model, task, c.mode, Shift::in_distribution(), tc.eval_samples,
                                       derive_seed({rec.seeds.run, hash_string("metrics")}));
        rec.metrics = metric_report(ev.stats);
        if (settings.adaptation_draws > 0) {
            rec.metrics->adaptation =
                adaptation(model, task, c.mode, settings.adaptation_draws, settings.dirichlet_alpha,
                           settings.adaptation_samples, derive_seed({rec.seeds.run, hash_string("adapt")}));
        }
    }
    if (settings.save_checkpoints && !checkpoint_root.empty()) {
        std::string dir = c.key();
        std::replace(dir.begin(), dir.end(), '/', '_');
        save_checkpoint(model, checkpoint_root / dir);
    }
    return finish();
}

/// Parses a results file; unparsable lines (e.g. a torn final write) are
/// reported through `warn` and skipped.
inline std::vector<RunRecord> load_records(const std::filesystem::path& path,
                                           const std::function<void(const std::string&)>& warn = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open results file " + path.string());
    std::vector<RunRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(RunRecord::from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            if (warn) warn(path.string() + ":" + std::to_string(lineno) + ": skipped unreadable record (" + e.what() + ")");
        }
    }
    return out;
}

struct SweepOptions {
    bool resume = false;
    std::optional<int> jobs;  // overrides the config
    std::function<void(const RunRecord&, std::size_t done, std::size_t total)> on_record;
    std::function<void(const std::string&)> warn;
    // Replaces execute_run; used by tests to count training calls.
    std::function<RunRecord(const Coordinates&, const RunSettings&, const std::filesystem::path&)> runner;
};

struct SweepResult {
    std::vector<RunRecord> records;  // completed in this invocation
    std::size_t skipped_existing = 0;
};

inline std::filesystem::path results_path(const std::filesystem::path& out_dir) { return out_dir / "results.jsonl"; }

/// Runs every coordinate not already present in `<output_dir>/results.jsonl`.
/// Workers run independently; one writer appends and flushes each record.
inline SweepResult run_sweep(const SweepConfig& cfg, const SweepOptions& opts = {}) {
    cfg.validate();
    namespace fs = std::filesystem;
    const fs::path out_dir(cfg.output_dir);
    const fs::path results = results_path(out_dir);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + out_dir.string() + ": " + ec.message());

    std::set<std::string> done;
    bool needs_newline = false;
    if (fs::exists(results) && fs::file_size(results) > 0) {
        if (!opts.resume) {
            throw ConfigError(results.string() + " already exists; pass --resume to continue it");
        }
        for (const RunRecord& r : load_records(results, opts.warn)) done.insert(r.coords.key());
        std::ifstream tail(results, std::ios::binary);
        tail.seekg(-1, std::ios::end);
        needs_newline = tail.get() != '\n';
    }
    {
        std::ofstream cfg_out(out_dir / "config.json");
        cfg_out << cfg.to_json().dump(2) << '\n';
    }

    std::vector<Coordinates> pending;
    SweepResult res;
    for (const Coordinates& c : cfg.coordinates()) {
        if (done.count(c.key())) {
            ++res.skipped_existing;
        } else {
            pending.push_back(c);
        }
    }

    std::ofstream out(results, std::ios::app);
    if (!out) throw ConfigError("cannot write " + results.string());
    if (needs_newline) out << '\n';
    std::mutex writer;
    std::atomic<std::size_t> next{0};
    const fs::path ckpt_root = out_dir / "checkpoints";
    const auto runner = opts.runner ? opts.runner : execute_run;

    auto worker = [&] {
        for (std::size_t i = next++; i < pending.size(); i = next++) {
            RunRecord rec;
            try {
                rec = runner(pending[i], cfg.settings, ckpt_root);
            } catch (const std::exception& e) {
                rec.coords = pending[i];
                rec.seeds = run_seeds(cfg.settings.master_seed, pending[i]);
                rec.status = "diverged";
                rec.diagnostic = e.what();
            }
            std::lock_guard lock(writer);
            out << rec.to_json().dump() << '\n';
            out.flush();
            res.records.push_back(rec);
            if (opts.on_record) opts.on_record(rec, res.records.size(), pending.size());
        }
    };
    const int jobs = std::max(1, std::min<int>(opts.jobs.value_or(cfg.jobs), static_cast<int>(pending.size())));
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int k = 0; k < jobs; ++k) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return res;
}

// ---------------------------------------------------------------------------
// Aggregation.

struct Summary {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation, 0 for a single value
    std::size_t n = 0;
};

inline Summary summarize(std::span<const double> v) {
    Summary s;
    s.n = v.size();
    if (v.empty()) return s;
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean = sum / static_cast<double>(v.size());
    if (v.size() > 1) {
        double sq = 0.0;
        for (double x : v) sq += (x - s.mean) * (x - s.mean);
        s.std = std::sqrt(sq / static_cast<double>(v.size() - 1));
    }
    return s;
}

namespace detail {

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string cell(const Summary& s, double Summary::*field) {
    return s.n ? fmt(s.*field) : std::string();
}

inline int level_rank(Level l) {
    return static_cast<int>(std::find(std::begin(kAllLevels), std::end(kAllLevels), l) - std::begin(kAllLevels));
}

inline bool shift_less(const std::string& a, const std::string& b) {
    auto rank = [](const std::string& s) {
        const Shift sh = Shift::parse(s);
        return std::make_tuple(static_cast<int>(sh.kind), sh.seq_len);
    };
    return rank(a) < rank(b);
}

inline const char* kMetricNames[] = {"collapse_avg", "collapse_worst", "alignment", "inverse_mutual_information",
                                     "adaptation"};

inline std::optional<double> metric_value(const MetricReport& m, const std::string& name) {
    if (name == "collapse_avg") return m.collapse_avg;
    if (name == "collapse_worst") return m.collapse_worst;
    if (name == "alignment") return m.alignment;
    if (name == "inverse_mutual_information") return m.inverse_mutual_information;
    if (name == "adaptation") return m.adaptation;
    return std::nullopt;
}

struct Panel {
    Family family;
    Mode mode;
    friend auto operator<=>(const Panel&, const Panel&) = default;
};

inline std::map<Panel, std::vector<const RunRecord*>> panels(std::span<const RunRecord> records) {
    std::map<Panel, std::vector<const RunRecord*>> out;
    for (const auto& r : records) out[{r.coords.family, r.coords.mode}].push_back(&r);
    return out;
}

template <class T>
std::vector<T> sorted_unique(std::vector<T> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

inline std::vector<Level> levels_of(const std::vector<const RunRecord*>& rs) {
    std::vector<Level> v;
    for (auto* r : rs) v.push_back(r->coords.level);
    v = sorted_unique(v);
    std::sort(v.begin(), v.end(), [](Level a, Level b) { return level_rank(a) < level_rank(b); });
    return v;
}

inline std::vector<int> rs_of(const std::vector<const RunRecord*>& rs) {
    std::vector<int> v;
    for (auto* r : rs) v.push_back(r->coords.R);
    return sorted_unique(v);
}

inline std::vector<std::string> shifts_of(const std::vector<const RunRecord*>& rs) {
    std::vector<std::string> v;
    for (auto* r : rs)
        for (const auto& [s, _] : r->performance) v.push_back(s);
    v = sorted_unique(v);
    std::sort(v.begin(), v.end(), shift_less);
    return v;
}

inline std::string perf_vs_r(std::span<const RunRecord> records) {
    std::string csv = "family,mode,R,level,shift,mean,std,n\n";
    for (const auto& [panel, rs] : panels(records)) {
        const auto shifts = shifts_of(rs);
        for (int R : rs_of(rs))
            for (Level l : levels_of(rs))
                for (const auto& sh : shifts) {
                    std::vector<double> v;
                    for (auto* r : rs) {
                        if (!r->ok() || r->coords.R != R || r->coords.level != l) continue;
                        if (auto it = r->performance.find(sh); it != r->performance.end()) v.push_back(it->second);
                    }
                    const Summary s = summarize(v);
                    csv += to_string(panel.family) + "," + to_string(panel.mode) + "," + std::to_string(R) + "," +
                           to_string(l) + "," + sh + "," + cell(s, &Summary::mean) + "," + cell(s, &Summary::std) +
                           "," + std::to_string(s.n) + "\n";
                }
    }
    return csv;
}

inline std::string metrics_vs_r(std::span<const RunRecord> records, bool by_r) {
    std::string csv = by_r ? "family,mode,R,level,metric,mean,std,n\n" : "family,mode,level,metric,mean,std,n\n";
    for (const auto& [panel, rs] : panels(records)) {
        std::vector<int> r_axis = by_r ? rs_of(rs) : std::vector<int>{0};
        for (int R : r_axis)
            for (Level l : levels_of(rs)) {
                if (l == Level::Monolithic) continue;
                for (const char* name : kMetricNames) {
                    std::vector<double> v;
                    for (auto* r : rs) {
                        if (!r->ok() || !r->metrics || r->coords.level != l) continue;
                        if (by_r && r->coords.R != R) continue;
                        if (auto m = metric_value(*r->metrics, name)) v.push_back(*m);
                    }
                    const Summary s = summarize(v);
                    csv += to_string(panel.family) + "," + to_string(panel.mode) + "," +
                           (by_r ? std::to_string(R) + "," : std::string()) + to_string(l) + "," + name + "," +
                           cell(s, &Summary::mean) + "," + cell(s, &Summary::std) + "," + std::to_string(s.n) + "\n";
                }
            }
    }
    return csv;
}

inline std::string train_curves(std::span<const RunRecord> records) {
    std::string csv = "family,mode,R,level,iter,train_loss_mean,id_eval_mean,n\n";
    for (const auto& [panel, rs] : panels(records)) {
        for (int R : rs_of(rs))
            for (Level l : levels_of(rs)) {
                std::map<std::size_t, std::pair<std::vector<double>, std::vector<double>>> by_iter;
                for (auto* r : rs) {
                    if (!r->ok() || r->coords.R != R || r->coords.level != l) continue;
                    for (const auto& c : r->curve) {
                        by_iter[c.iter].first.push_back(c.train_loss);
                        if (auto it = c.evals.find("id"); it != c.evals.end()) by_iter[c.iter].second.push_back(it->second);
                    }
                }
                for (const auto& [iter, v] : by_iter) {
                    const Summary tl = summarize(v.first);
                    const Summary ev = summarize(v.second);
                    csv += to_string(panel.family) + "," + to_string(panel.mode) + "," + std::to_string(R) + "," +
                           to_string(l) + "," + std::to_string(iter) + "," + cell(tl, &Summary::mean) + "," +
                           cell(ev, &Summary::mean) + "," + std::to_string(tl.n) + "\n";
                }
            }
    }
    return csv;
}

}  // namespace detail

/// In-distribution final performance of ok records, grouped for voting.
inline std::vector<PerformanceSample> performance_samples(std::span<const RunRecord> records) {
    std::vector<PerformanceSample> out;
    for (const auto& r : records) {
        if (!r.ok()) continue;
        auto it = r.performance.find("id");
        if (it == r.performance.end()) continue;
        out.push_back({r.coords.group(), r.coords.level, it->second});
    }
    return out;
}

inline constexpr Level kFullComparison[] = {Level::GtModular, Level::ModularOp, Level::Modular, Level::Monolithic};
inline constexpr Level kModularVsMonolithic[] = {Level::Modular, Level::Monolithic};

inline std::string votes_csv(std::span<const RunRecord> records, std::span<const Level> compared) {
    std::string csv = "family,mode,level,votes,groups,ties,skipped\n";
    auto emit = [&](const std::string& fam, const std::string& mode, std::span<const RunRecord* const> rs) {
        std::vector<RunRecord> subset;
        for (auto* r : rs) subset.push_back(*r);
        const VoteTable t = ranking_votes(performance_samples(subset), compared);
        for (const auto& [l, w] : t.wins) {
            csv += fam + "," + mode + "," + to_string(l) + "," + std::to_string(w) + "," + std::to_string(t.groups) +
                   "," + std::to_string(t.ties) + "," + std::to_string(t.skipped.size()) + "\n";
        }
    };
    std::vector<const RunRecord*> all;
    for (const auto& r : records) all.push_back(&r);
    for (const auto& [panel, rs] : detail::panels(records)) emit(to_string(panel.family), to_string(panel.mode), rs);
    emit("all", "all", all);
    return csv;
}

inline const std::vector<std::string>& figure_ids() {
    static const std::vector<std::string> ids{"perf_vs_R", "metrics_vs_R", "metric_bars", "train_curves",
                                              "votes_full", "votes_modular_vs_monolithic"};
    return ids;
}

/// CSV series for one figure; the report writes the same strings to disk.
inline std::string plot_data(std::span<const RunRecord> records, const std::string& figure_id) {
    if (figure_id == "perf_vs_R") return detail::perf_vs_r(records);
    if (figure_id == "metrics_vs_R") return detail::metrics_vs_r(records, true);
    if (figure_id == "metric_bars") return detail::metrics_vs_r(records, false);
    if (figure_id == "train_curves") return detail::train_curves(records);
    if (figure_id == "votes_full") return votes_csv(records, kFullComparison);
    if (figure_id == "votes_modular_vs_monolithic") return votes_csv(records, kModularVsMonolithic);
    std::string known;
    for (const auto& id : figure_ids()) known += (known.empty() ? "" : ", ") + id;
    throw ConfigError("unknown figure id '" + figure_id + "' (known: " + known + ")");
}

struct ReportBundle {
    std::map<std::string, std::string> files;  // file name -> contents
};

inline std::string summary_text(std::span<const RunRecord> records) {
    std::map<std::string, int> status;
    for (const auto& r : records) ++status[r.status];
    std::ostringstream os;
    os << "records: " << records.size();
    for (const auto& [s, n] : status) os << "  " << s << ": " << n;
    os << "\n\n";
    for (auto [title, levels] : {std::pair{"votes (all levels)", std::span<const Level>(kFullComparison)},
                                 std::pair{"votes (Modular vs Monolithic)", std::span<const Level>(kModularVsMonolithic)}}) {
        const VoteTable t = ranking_votes(performance_samples(records), levels);
        os << title << ": " << t.groups << " groups, " << t.ties << " ties, " << t.skipped.size() << " skipped\n";
        for (const auto& [l, w] : t.wins) os << "  " << to_string(l) << " " << w << "\n";
    }
    os << "\nin-distribution performance (mean ± std over tasks × seeds)\n";
    for (const auto& [panel, rs] : detail::panels(records)) {
        os << to_string(panel.family) << " " << to_string(panel.mode) << "\n";
        for (int R : detail::rs_of(rs)) {
            os << "  R=" << R;
            for (Level l : detail::levels_of(rs)) {
                std::vector<double> v;
                for (auto* r : rs) {
                    if (r->ok() && r->coords.R == R && r->coords.level == l && r->performance.count("id")) {
                        v.push_back(r->performance.at("id"));
                    }
                }
                const Summary s = summarize(v);
                char buf[128];
                if (s.n) {
                    std::snprintf(buf, sizeof buf, "  %s %.4f±%.4f", to_string(l).c_str(), s.mean, s.std);
                } else {
                    std::snprintf(buf, sizeof buf, "  %s -", to_string(l).c_str());
                }
                os << buf;
            }
            os << "\n";
        }
    }
    return os.str();
}

inline ReportBundle aggregate_report(std::span<const RunRecord> records) {
    if (records.empty()) throw ConfigError("report: no records");
    ReportBundle b;
    for (const auto& id : figure_ids()) b.files[id + ".csv"] = plot_data(records, id);
    b.files["summary.txt"] = summary_text(records);
    return b;
}

inline void write_report(const ReportBundle& b, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& [name, contents] : b.files) {
        std::ofstream out(dir / name);
        if (!out) throw ConfigError("cannot write " + (dir / name).string());
        out << contents;
    }
}

}  // namespace modbench
