#pragma once

#include <array>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "sftpl/analysis.hpp"
#include "sftpl/run_record.hpp"

namespace sftpl::io {

// 17 significant digits, '.' decimal point, independent of the global locale.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::general, 17);
    if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
    return std::string(buf.data(), end);
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) : columns_(header.size()) { row(header); }

    void row(const std::vector<std::string>& fields) {
        if (fields.size() != columns_) throw std::invalid_argument("CsvWriter: wrong number of fields");
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << ',';
            out_ << csv_field(fields[i]);
        }
        out_ << '\n';
    }
    [[nodiscard]] std::string str() const { return out_.str(); }

private:
    std::size_t columns_;
    std::ostringstream out_;
};

// Writes to a sibling temporary and renames it over the target.
inline void atomic_write(const std::filesystem::path& target, const std::string& content) {
    namespace fs = std::filesystem;
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("atomic_write: cannot open " + tmp.string());
        f << content;
        f.flush();
        if (!f) throw std::runtime_error("atomic_write: write failed for " + tmp.string());
    }
    fs::rename(tmp, target);
}

inline std::string hex64(std::uint64_t v) {
    std::array<char, 17> buf{};
    std::snprintf(buf.data(), buf.size(), "%016llx", static_cast<unsigned long long>(v));
    return buf.data();
}

inline nlohmann::json to_json(const RunRecord& r, const std::optional<RegretReport>& regret, double mean_stab) {
    using nlohmann::json;
    json j;
    j["env"] = r.env;
    j["adversary"] = r.adversary;
    j["solver"] = r.solver;
    j["T"] = r.T;
    j["seed"] = r.seed;
    j["hyper"] = {{"eta", r.hyper.eta}, {"n", r.hyper.n}, {"rule", r.hyper.rule_id},
                  {"constant", r.hyper.constants.constant}, {"eta_capped", r.hyper.eta_capped},
                  {"n_capped", r.hyper.n_capped}};
    j["oracle_calls"] = r.oracle_call_count;
    j["diagnostic_calls"] = r.diagnostic_calls;
    j["valid"] = r.valid;
    j["failure"] = r.failure;
    j["warnings"] = r.warnings;
    j["cumulative_loss"] = r.cumulative_loss;
    j["mean_stability"] = mean_stab;
    if (regret) {
        j["regret"] = regret->regret;
        j["avg_regret"] = regret->avg_regret;
        j["hindsight"] = {{"theta", regret->best_theta.coords},
                          {"loss", regret->best_loss},
                          {"gamma_kind", std::string(to_string(regret->hindsight_gamma_kind))},
                          {"gamma", regret->hindsight_gamma}};
    }
    json epochs = json::array();
    for (const EpochRecord& e : r.epochs) {
        json ej = {{"epoch", e.epoch},
                   {"theta", e.theta.coords},
                   {"objective", e.objective},
                   {"gamma_kind", std::string(to_string(e.gamma_kind))},
                   {"gamma", e.gamma},
                   {"perturbation",
                    {{"kind", e.perturbation.kind}, {"eta", e.perturbation.eta}, {"seed", e.perturbation.seed},
                     {"xi_l1", e.perturbation.xi_l1}, {"anchors", e.perturbation.anchors}}}};
        if (e.shared_successor) ej["shared_successor"] = e.shared_successor->coords;
        epochs.push_back(std::move(ej));
    }
    j["epochs"] = std::move(epochs);
    json steps = json::array();
    for (const StepRecord& s : r.steps) steps.push_back(json::array({s.t, hex64(s.z_digest), s.epoch, s.loss}));
    j["steps"] = std::move(steps);
    return j;
}

}  // namespace sftpl::io
