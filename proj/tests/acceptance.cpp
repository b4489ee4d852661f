// Acceptance checks. Prints one PASS/FAIL line per criterion; exits nonzero
// if any fails. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "sftpl/analysis.hpp"
#include "sftpl/cli.hpp"
#include "sftpl/config.hpp"
#include "sftpl/experiment.hpp"
#include "sftpl/ftpl.hpp"
#include "sftpl/io.hpp"
#include "sftpl/planning.hpp"
#include "sftpl/pwa_env.hpp"
#include "sftpl/threshold.hpp"

#ifndef SFTPL_CONFIG_DIR
#error "SFTPL_CONFIG_DIR must point at the configs directory"
#endif

using namespace sftpl;
namespace ex = sftpl::experiment;

namespace {

constexpr std::uint64_t master_seed = 20240607;

struct Outcome {
    bool pass = false;
    std::string detail;
};

config::ExperimentConfig load(const std::string& name) {
    return config::parse_text(cli::read_file(std::string(SFTPL_CONFIG_DIR) + "/" + name));
}

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::size_t workers() { return std::max(1u, std::thread::hardware_concurrency()); }

// Runs every (T, seed) cell of a config and returns seed-mean regret per T.
struct SeriesResult {
    std::map<std::size_t, double> mean_regret;
    std::map<std::size_t, double> mean_avg_regret;
    std::size_t invalid = 0;
    std::string first_error;
};

SeriesResult run_series(const config::ExperimentConfig& cfg) {
    const auto prepared = ex::prepare(cfg);
    std::vector<std::pair<std::size_t, std::uint64_t>> cells;
    for (std::size_t T : cfg.run.T)
        for (std::uint64_t s : cfg.run.seeds) cells.emplace_back(T, s);
    std::vector<ex::CellResult> out(cells.size());
    cli::parallel_for(cells.size(), workers(), [&](std::size_t i) {
        out[i] = ex::run_cell(cfg, prepared, cells[i].first, cells[i].second, master_seed);
    });
    SeriesResult r;
    std::map<std::size_t, std::size_t> count;
    for (const auto& c : out) {
        if (!c.regret) {
            ++r.invalid;
            if (r.first_error.empty()) r.first_error = c.error;
            continue;
        }
        r.mean_regret[c.T] += c.regret->regret;
        r.mean_avg_regret[c.T] += c.regret->avg_regret;
        ++count[c.T];
    }
    for (auto& [T, v] : r.mean_regret) v /= static_cast<double>(count[T]);
    for (auto& [T, v] : r.mean_avg_regret) v /= static_cast<double>(count[T]);
    return r;
}

Outcome oracle_calls() {
    ThresholdEnv env(0.0, 1.0);
    UniformBoxAdversary adv(ContextBox{1, 0.0, 1.0}, threshold_labels(0.3, 0.1));
    ThresholdExactSolver solver;
    std::size_t runs = 0, bad = 0;
    for (std::size_t T = 1; T <= 50; ++T)
        for (std::size_t n = 1; n <= 10; ++n) {
            const RunRecord rec = run_lazy_ftpl(env, adv, solver, explicit_hyper(10.0, n), T, 1000 * T + n);
            const std::size_t expected = (T + n - 1) / n;
            ++runs;
            if (!rec.valid || rec.oracle_call_count != expected || rec.epochs.size() != expected) ++bad;
        }
    return {bad == 0, std::to_string(runs) + " runs, " + std::to_string(bad) + " mismatches"};
}

// Brute-force tally written against the raw boundary values: the sign of an
// odd increasing link equals the sign of its argument.
std::size_t brute_force_mode(const std::vector<double>& theta_d, const std::vector<double>& z, std::size_t K) {
    const std::size_t d = z.size();
    std::vector<std::vector<double>> f(K, std::vector<double>(K, 0.0));
    std::size_t block = 0;
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t k2 = k + 1; k2 < K; ++k2, ++block) {
            double v = theta_d[block * (d + 1) + d];
            for (std::size_t i = 0; i < d; ++i) v += theta_d[block * (d + 1) + i] * z[i];
            f[k][k2] = v;
            f[k2][k] = -v;
        }
    std::size_t best = 0, best_wins = 0;
    for (std::size_t k = 0; k < K; ++k) {
        std::size_t wins = 0;
        for (std::size_t k2 = 0; k2 < K; ++k2)
            if (k2 != k && f[k][k2] >= 0.0) ++wins;
        if (k == 0 || wins > best_wins) { best = k; best_wins = wins; }
    }
    return best;
}

Outcome tournament() {
    CounterRng rng(master_seed);
    const Link links[] = {Link::identity(), Link::linear(2.5), Link::tanh_augmented(0.5)};
    std::size_t mismatches = 0, with_ties = 0;
    constexpr std::size_t instances = 100000;
    for (std::size_t t = 0; t < instances; ++t) {
        const std::size_t K = 1 + rng.below(6);
        const std::size_t d = 1 + rng.below(3);
        PwaConfig cfg = regression_config(d, K, 2.0);
        cfg.link = links[rng.below(3)];
        const PiecewiseLossSpec spec(cfg);
        std::vector<double> theta_d(pair_count(K) * (d + 1)), z(d);
        for (double& v : theta_d) v = static_cast<double>(static_cast<int>(rng.below(5)) - 2);
        for (double& v : z) v = static_cast<double>(static_cast<int>(rng.below(5)) - 2);
        bool tie = false;
        for (std::size_t b = 0; b < pair_count(K); ++b) {
            double v = theta_d[b * (d + 1) + d];
            for (std::size_t i = 0; i < d; ++i) v += theta_d[b * (d + 1) + i] * z[i];
            tie = tie || v == 0.0;
        }
        with_ties += tie;
        if (spec.mode_tournament(theta_d, z) != brute_force_mode(theta_d, z, K)) ++mismatches;
    }
    return {mismatches == 0 && with_ties > 0, std::to_string(instances) + " instances (" + std::to_string(with_ties) +
                                                  " with exact ties), " + std::to_string(mismatches) + " mismatches"};
}

Outcome summarize_rows(const std::vector<ex::CheckRow>& rows, std::size_t expected, const std::string& what) {
    std::size_t passed = 0;
    double worst = 0.0;
    for (const auto& r : rows) {
        passed += r.pass;
        if (r.bound > 0.0) worst = std::max(worst, r.estimate / r.bound);
    }
    return {rows.size() == expected && passed == rows.size(),
            std::to_string(passed) + "/" + std::to_string(rows.size()) + " " + what + " pass; max estimate/bound " + num(worst)};
}

Outcome isometry() {
    const auto cfg = load("isometry_pwa.json");
    return summarize_rows(ex::verify_isometry(cfg, ex::prepare(cfg), master_seed), 50, "pairs");
}

Outcome modeflip() {
    const auto cfg = load("modeflip_pwa.json");
    return summarize_rows(ex::verify_modeflip(cfg, ex::prepare(cfg), master_seed), 20, "pairs");
}

Outcome concentration() {
    const auto cfg = load("concentration_threshold.json");
    const auto rows = ex::verify_concentration(cfg, ex::prepare(cfg), master_seed);
    Outcome o = summarize_rows(rows, 3, "adversaries");
    std::string rates;
    for (const auto& r : rows) rates += " " + r.adversary + "=" + num(r.estimate);
    o.detail += "; violation rates" + rates;
    return o;
}

Outcome bracket() {
    const auto cfg = load("bracket_pwa.json");
    const auto p = ex::prepare(cfg);
    const auto rows = ex::verify_bracket_battery(cfg, p, master_seed);
    // The recipe must be the plain affine one with the battery's joint class.
    const SmoothnessClass joint = ex::battery_class(p.env, ex::battery(cfg, p.env));
    const BracketRecipe r = recipe_for(*p.env.loss, joint);
    bool recipe_ok = r.id == "affine";
    for (double eps : cfg.verify.epsilons) {
        const double expected = r.a * joint.sigma_dir() * eps / (3.0 * r.K * r.K * r.A * r.B);
        recipe_ok = recipe_ok && std::abs(r.eps_tilde(eps) - expected) <= 1e-15 * expected;
    }
    Outcome o = summarize_rows(rows, cfg.verify.epsilons.size(), "epsilons");
    o.pass = o.pass && recipe_ok && p.env.pwa->modes() == 2 && p.env.pwa->context_dim() == 2;
    for (const auto& row : rows) o.detail += "; worst cell " + num(row.estimate) + " vs " + num(row.bound);
    return o;
}

Outcome regret_threshold() {
    const auto cfg = load("regret_threshold.json");
    const SeriesResult s = run_series(cfg);
    if (s.invalid) return {false, std::to_string(s.invalid) + " invalid runs: " + s.first_error};
    std::vector<std::pair<double, double>> series;
    bool decreasing = true;
    double prev = std::numeric_limits<double>::infinity();
    std::string avgs;
    for (const auto& [T, R] : s.mean_regret) {
        series.emplace_back(static_cast<double>(T), R);
        const double a = s.mean_avg_regret.at(T);
        decreasing = decreasing && a < prev;
        prev = a;
        avgs += " " + num(a);
    }
    const ExponentFit f = fit_regret_exponent(series);
    const bool slope_ok = f.fit.slope >= 0.45 && f.fit.slope <= 0.85 && f.dropped == 0;
    return {slope_ok && decreasing, "slope " + num(f.fit.slope) + " (se " + num(f.fit.slope_se) + "), avg regret" + avgs +
                                        (decreasing ? " strictly decreasing" : " NOT strictly decreasing")};
}

Outcome stability() {
    auto base = load("stability_threshold.json");
    const std::size_t T = base.run.T.front();
    const HyperParams tuned = tune_affine(static_cast<double>(T), 1, 1, 1, 1, 1, 1, 1);
    if (std::abs(base.learner.eta - tuned.eta) > 1e-9 * tuned.eta || base.learner.n != tuned.n)
        return {false, "config eta/n differ from the tuned values"};
    auto quad = base;
    quad.learner.eta = 4.0 * base.learner.eta;
    const auto p1 = ex::prepare(base);
    const auto p4 = ex::prepare(quad);
    constexpr std::size_t seeds = 30;
    std::vector<double> s1(seeds), s4(seeds);
    cli::parallel_for(seeds, workers(), [&](std::size_t i) {
        s1[i] = ex::run_cell(base, p1, T, i + 1, master_seed).mean_stability;
        s4[i] = ex::run_cell(quad, p4, T, i + 1, master_seed).mean_stability;
    });
    std::size_t wins = 0, ties = 0;
    double m1 = 0.0, m4 = 0.0;
    for (std::size_t i = 0; i < seeds; ++i) {
        if (s4[i] < s1[i]) ++wins;
        if (s4[i] == s1[i]) ++ties;
        m1 += s1[i] / seeds;
        m4 += s4[i] / seeds;
    }
    const double pv = stats::sign_test_p_value(wins, seeds - ties);
    return {pv < 0.05, "4eta smaller on " + std::to_string(wins) + "/" + std::to_string(seeds - ties) + " untied seeds, p=" +
                           num(pv) + ", mean " + num(m1) + " -> " + num(m4)};
}

Outcome planning_coupling() {
    const auto cfg = load("planning.json");
    const auto p = ex::prepare(cfg);
    const HybridSystemSpec& sys = p.env.system();
    const Distribution dist = freeze(p.adversary);
    // Draw until 10^4 pairs share their realized mode sequence.
    CouplingReport cr;
    for (std::uint64_t round = 0; cr.equal_mode_pairs < 10000; ++round) {
        const CouplingReport part = equal_mode_coupling(sys, dist, 10000, CounterRng(master_seed).substream(Purpose::probes, round));
        cr.pairs += part.pairs;
        cr.equal_mode_pairs += part.equal_mode_pairs;
        cr.violations += part.violations;
        cr.worst_ratio = std::max(cr.worst_ratio, part.worst_ratio);
    }
    const auto rows = ex::verify_modeflip(cfg, p, master_seed);
    std::vector<ex::CheckRow> flips;
    for (const auto& r : rows)
        if (r.check == "modeflip") flips.push_back(r);
    Outcome o = summarize_rows(flips, cfg.verify.pairs, "disagreement pairs");
    o.pass = o.pass && cr.violations == 0;
    o.detail = std::to_string(cr.equal_mode_pairs) + " equal-mode pairs, " + std::to_string(cr.violations) +
               " violations (max ratio " + num(cr.worst_ratio) + "); " + o.detail;
    return o;
}

Outcome regret_planning() {
    auto cfg = load("planning.json");
    cfg.run.seeds.clear();
    for (std::uint64_t s = 1; s <= 10; ++s) cfg.run.seeds.push_back(s);
    const SeriesResult s = run_series(cfg);
    if (s.invalid) return {false, std::to_string(s.invalid) + " invalid runs: " + s.first_error};
    std::vector<std::pair<double, double>> series;
    std::string avgs;
    for (const auto& [T, R] : s.mean_regret) {
        series.emplace_back(static_cast<double>(T), R);
        avgs += " " + num(s.mean_avg_regret.at(T));
    }
    const ExponentFit f = fit_regret_exponent(series);
    const double first = s.mean_avg_regret.begin()->second, last = s.mean_avg_regret.rbegin()->second;
    const bool ok = f.fit.slope >= 0.45 && f.fit.slope <= 0.9 && f.dropped == 0 && last < first;
    return {ok, "slope " + num(f.fit.slope) + " (se " + num(f.fit.slope_se) + "), avg regret" + avgs};
}

// Pointwise domination on random instances of every shipped environment.
Outcome domination() {
    CounterRng rng(master_seed ^ 0xD0D0);
    std::size_t checked = 0, violations = 0;
    double worst = -std::numeric_limits<double>::infinity();
    auto check = [&](const LossSpec& loss, const ParamPoint& a, const ParamPoint& b, const ContextSample& z) {
        const double gap = loss.eval(a, z) - loss.eval(b, z);
        const double r = loss.metric()->rho(a, b, z);
        worst = std::max(worst, gap - r);
        if (gap > r) ++violations;
        ++checked;
    };
    auto random_point = [&](const LossSpec& loss) {
        const ParamSpace& s = loss.space();
        Vector v(s.dim());
        for (std::size_t j = 0; j < s.dim(); ++j) v[j] = rng.uniform(s.lower()[j], s.upper()[j]);
        return loss.project_feasible(ParamPoint(v));
    };
    const Link links[] = {Link::identity(), Link::linear(0.5), Link::tanh_augmented(1.0)};
    for (std::size_t i = 0; i < 70000; ++i) {
        const std::size_t K = 1 + rng.below(4), d = 1 + rng.below(3), outputs = 1 + rng.below(2);
        const bool argmax = rng.bernoulli(0.3);
        PwaConfig cfg = regression_config(d, K, 1.0, argmax ? Formulation::argmax : Formulation::tournament, outputs);
        cfg.link = links[rng.below(3)];
        cfg.margin = 0.1;
        const PiecewiseLossSpec spec(cfg);
        ContextSample z;
        for (std::size_t j = 0; j < d; ++j) z.z.push_back(rng.uniform(-1.0, 1.0));
        for (std::size_t j = 0; j < outputs; ++j) z.payload.push_back(rng.uniform(-3.0, 3.0));
        check(spec, random_point(spec), random_point(spec), z);
    }
    const ThresholdEnv th(0.0, 1.0);
    for (std::size_t i = 0; i < 15000; ++i) {
        const ContextSample z{{rng.uniform()}, {rng.bernoulli(0.5) ? 1.0 : -1.0}};
        check(th, random_point(th), random_point(th), z);
    }
    const auto pcfg = load("planning.json");
    const auto pp = ex::prepare(pcfg);
    for (std::size_t i = 0; i < 15000; ++i) {
        CounterRng r = rng.substream(Purpose::adversary, i);
        const ContextSample z = sample_context(*pp.adversary, HistoryView{}, r);
        check(*pp.env.loss, random_point(*pp.env.loss), random_point(*pp.env.loss), z);
    }
    return {violations == 0, std::to_string(checked) + " instances, " + std::to_string(violations) +
                                 " violations, max(gap - rho) " + num(worst)};
}

struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {1, "oracle-call accounting", oracle_calls},
        {2, "tournament vs brute-force tally", tournament},
        {3, "expected-Lipschitz smoothing", isometry},
        {4, "mode-flip bound", modeflip},
        {5, "uniform concentration", concentration},
        {6, "bracket recipe", bracket},
        {7, "threshold regret exponent", regret_threshold},
        {8, "stability shrinks with eta", stability},
        {9, "planning coupling", planning_coupling},
        {10, "planning regret exponent", regret_planning},
        {11, "pointwise domination", domination},
    };
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
    bool all_pass = true;
    for (const auto& c : all) {
        if (!wanted.empty() && !wanted.contains(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        all_pass = all_pass && o.pass;
        std::printf("criterion %2d %-34s %s  %s  [%.1fs]\n", c.id, c.name, o.pass ? "PASS" : "FAIL", o.detail.c_str(), sec);
        std::fflush(stdout);
    }
    return all_pass ? 0 : 1;
}
