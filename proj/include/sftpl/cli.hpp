#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sftpl/analysis.hpp"
#include "sftpl/config.hpp"
#include "sftpl/experiment.hpp"
#include "sftpl/io.hpp"

namespace sftpl::cli {

enum ExitCode : int { ok = 0, runtime_failure = 1, config_error = 2 };

inline const std::vector<std::string>& aggregate_header() {
    static const std::vector<std::string> h{"env",    "T",          "n",           "eta",           "seed",
                                            "regret", "avg_regret", "oracle_calls", "mean_stability", "wall_ms"};
    return h;
}

// Runs f(i) for i in [0, n) on up to `jobs` threads.
template <class F>
void parallel_for(std::size_t n, std::size_t jobs, F&& f) {
    jobs = std::max<std::size_t>(1, std::min(jobs, n));
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) f(i);
    };
    std::vector<std::jthread> pool;
    for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
    worker();
}

struct Options {
    std::string config_path;
    std::string out;
    std::size_t jobs = 0;
    std::uint64_t seed = 0;
};

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw config::ConfigError("", "cannot read config file '" + path + "'");
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

inline std::filesystem::path output_dir(const Options& o, const config::ExperimentConfig& c) {
    if (const char* env = std::getenv("SMOOTHED_FTPL_OUT"); env && *env) return env;
    if (!o.out.empty()) return o.out;
    return c.output.dir;
}

inline bool wants(const config::ExperimentConfig& c, const std::string& fmt) {
    return std::find(c.output.formats.begin(), c.output.formats.end(), fmt) != c.output.formats.end();
}

struct Variant {
    std::string label;  // empty outside sweeps
    config::ExperimentConfig cfg;
};

struct Cell {
    std::size_t variant = 0;
    std::size_t T = 0;
    std::uint64_t seed = 0;
};

inline std::vector<std::string> csv_row(const experiment::CellResult& r) {
    using io::format_double;
    const bool good = r.record.valid && r.regret.has_value();
    return {r.record.env.empty() ? "invalid" : r.record.env,
            std::to_string(r.T),
            std::to_string(r.hyper.n),
            format_double(r.hyper.eta),
            std::to_string(r.config_seed),
            good ? format_double(r.regret->regret) : "",
            good ? format_double(r.regret->avg_regret) : "",
            std::to_string(r.record.oracle_call_count),
            good ? format_double(r.mean_stability) : "",
            format_double(r.wall_ms)};
}

// Summary row: env "fit:<env>", T = horizons used, n = horizons dropped for
// nonpositive regret, regret = slope, avg_regret = slope standard error.
// Fitted on seed-mean regrets.
inline std::optional<std::vector<std::string>> fit_row(const std::vector<const experiment::CellResult*>& cells) {
    std::map<std::size_t, std::pair<double, std::size_t>> by_T;
    std::string env;
    for (const auto* c : cells) {
        if (!c->regret) continue;
        env = c->record.env;
        auto& [sum, cnt] = by_T[c->T];
        sum += c->regret->regret;
        ++cnt;
    }
    if (by_T.size() < 4) return std::nullopt;
    std::vector<std::pair<double, double>> series;
    for (const auto& [T, sc] : by_T) series.emplace_back(static_cast<double>(T), sc.first / static_cast<double>(sc.second));
    try {
        const ExponentFit f = fit_regret_exponent(series);
        return std::vector<std::string>{"fit:" + env, std::to_string(f.used), std::to_string(f.dropped), "", "",
                                        io::format_double(f.fit.slope), io::format_double(f.fit.slope_se), "", "", ""};
    } catch (const std::invalid_argument&) {
        return std::nullopt;
    }
}

inline int execute_runs(const std::vector<Variant>& variants, const Options& o) {
    std::vector<experiment::Prepared> prepared;
    for (const auto& v : variants) prepared.push_back(experiment::prepare(v.cfg));
    std::vector<Cell> cells;
    for (std::size_t vi = 0; vi < variants.size(); ++vi)
        for (std::size_t T : variants[vi].cfg.run.T)
            for (std::uint64_t s : variants[vi].cfg.run.seeds) cells.push_back({vi, T, s});

    const auto& first = variants.front().cfg;
    const std::filesystem::path out = output_dir(o, first);
    std::vector<experiment::CellResult> results(cells.size());
    const std::size_t jobs = o.jobs ? o.jobs : std::max(1u, std::thread::hardware_concurrency());
    std::atomic<bool> config_failed{false};
    std::string config_message;
    std::mutex mu;
    parallel_for(cells.size(), jobs, [&](std::size_t i) {
        const Cell& c = cells[i];
        const auto& v = variants[c.variant];
        try {
            results[i] = experiment::run_cell(v.cfg, prepared[c.variant], c.T, c.seed, o.seed);
        } catch (const config::ConfigError& e) {
            std::lock_guard lk(mu);
            config_failed = true;
            config_message = e.what();
            return;
        }
        if (wants(v.cfg, "json")) {
            std::string dir = (v.label.empty() ? std::string() : v.label + "_") + "T" + std::to_string(c.T) + "_seed" +
                              std::to_string(c.seed);
            nlohmann::json j = io::to_json(results[i].record, results[i].regret, results[i].mean_stability);
            j["config_seed"] = c.seed;
            if (!v.label.empty()) j["sweep"] = v.label;
            io::atomic_write(out / "runs" / dir / "record.json", j.dump(1) + "\n");
        }
        std::lock_guard lk(mu);
        std::cerr << (results[i].record.valid ? "done " : "FAILED ") << "T=" << c.T << " seed=" << c.seed
                  << (v.label.empty() ? "" : " " + v.label) << "\n";
    });
    if (config_failed) {
        std::cerr << "config error: " << config_message << "\n";
        return config_error;
    }

    bool all_valid = true;
    io::CsvWriter csv(aggregate_header());
    for (std::size_t vi = 0; vi < variants.size(); ++vi) {
        std::vector<const experiment::CellResult*> mine;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (cells[i].variant != vi) continue;
            csv.row(csv_row(results[i]));
            mine.push_back(&results[i]);
            if (!results[i].record.valid) {
                all_valid = false;
                std::cerr << "run T=" << cells[i].T << " seed=" << cells[i].seed << " failed: " << results[i].error << "\n";
            }
        }
        if (auto row = fit_row(mine)) csv.row(*row);
    }
    if (wants(first, "csv")) io::atomic_write(out / "aggregate.csv", csv.str());
    return all_valid ? ok : runtime_failure;
}

inline int cmd_run(const Options& o) {
    const auto cfg = config::parse_text(read_file(o.config_path));
    return execute_runs({Variant{"", cfg}}, o);
}

inline int cmd_sweep(const Options& o, const std::string& param, const std::vector<std::string>& values) {
    if (values.empty()) throw config::ConfigError("", "sweep needs at least one value");
    const auto base = config::parse_text(read_file(o.config_path));
    const nlohmann::json canon = config::to_json(base);
    std::vector<Variant> variants;
    for (const std::string& raw : values) {
        nlohmann::json v;
        try {
            v = nlohmann::json::parse(raw);
        } catch (const nlohmann::json::parse_error&) {
            v = raw;
        }
        auto cfg = config::parse(config::with_override(canon, param, v));
        variants.push_back({param + "=" + raw, std::move(cfg)});
    }
    return execute_runs(variants, o);
}

inline int cmd_verify(const Options& o, const std::string& which) {
    const auto cfg = config::parse_text(read_file(o.config_path));
    const auto prepared = experiment::prepare(cfg);
    std::vector<experiment::CheckRow> rows;
    if (which == "bracket") rows = experiment::verify_bracket_battery(cfg, prepared, o.seed);
    else if (which == "concentration") rows = experiment::verify_concentration(cfg, prepared, o.seed);
    else if (which == "isometry") rows = experiment::verify_isometry(cfg, prepared, o.seed);
    else rows = experiment::verify_modeflip(cfg, prepared, o.seed);

    io::CsvWriter csv({"check", "adversary", "detail", "estimate", "bound", "ci_lo", "ci_hi", "pass"});
    bool all = !rows.empty();
    for (const auto& r : rows) {
        csv.row({r.check, r.adversary, r.detail, io::format_double(r.estimate), io::format_double(r.bound),
                 io::format_double(r.ci_lo), io::format_double(r.ci_hi), r.pass ? "pass" : "fail"});
        all = all && r.pass;
    }
    io::atomic_write(output_dir(o, cfg) / ("verify_" + which + ".csv"), csv.str());
    std::size_t passed = 0;
    for (const auto& r : rows) passed += r.pass;
    std::cerr << which << ": " << passed << "/" << rows.size() << " checks pass\n";
    return all ? ok : runtime_failure;
}

inline int main(int argc, char** argv) {
    CLI::App app{"Lazy follow-the-perturbed-leader experiments"};
    app.require_subcommand(1);
    Options o;
    auto common = [&o](CLI::App* sub) {
        sub->add_option("--config", o.config_path, "Experiment config (JSON)")->required();
        sub->add_option("--out", o.out, "Output directory (SMOOTHED_FTPL_OUT overrides)");
        sub->add_option("--jobs", o.jobs, "Worker threads (default: logical cores)");
        sub->add_option("--seed", o.seed, "Master seed");
    };
    auto* run = app.add_subcommand("run", "Execute every (T, seed) cell of a config");
    common(run);
    auto* verify = app.add_subcommand("verify", "Run a validator battery");
    std::string which;
    verify->add_option("which", which, "bracket | concentration | isometry | modeflip")
        ->required()
        ->check(CLI::IsMember({"bracket", "concentration", "isometry", "modeflip"}));
    common(verify);
    auto* sweep = app.add_subcommand("sweep", "Cross a config with values of one parameter");
    std::string param;
    std::string values;
    sweep->add_option("--param", param, "Dotted config path, e.g. learner.eta")->required();
    sweep->add_option("--values", values, "Comma-separated values")->required();
    common(sweep);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : config_error;
    }
    try {
        if (*run) return cmd_run(o);
        if (*verify) return cmd_verify(o, which);
        std::vector<std::string> list;
        std::stringstream ss(values);
        for (std::string item; std::getline(ss, item, ',');)
            if (!item.empty()) list.push_back(item);
        return cmd_sweep(o, param, list);
    } catch (const config::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return config_error;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return runtime_failure;
    }
}

}  // namespace sftpl::cli
