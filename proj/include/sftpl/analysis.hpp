#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sftpl/core.hpp"
#include "sftpl/oracle.hpp"
#include "sftpl/planning.hpp"
#include "sftpl/pwa_env.hpp"
#include "sftpl/rng.hpp"
#include "sftpl/run_record.hpp"
#include "sftpl/smoothing.hpp"
#include "sftpl/stats.hpp"
#include "sftpl/threshold.hpp"

namespace sftpl {

struct RegretReport {
    double regret = 0.0;
    double avg_regret = 0.0;
    double learner_loss = 0.0;
    double best_loss = 0.0;
    ParamPoint best_theta;
    GammaKind hindsight_gamma_kind = GammaKind::exact;
    double hindsight_gamma = 0.0;
};

// Cumulative learner loss minus the hindsight optimum on the realized stream.
inline RegretReport compute_regret(const RunRecord& run, const LossSpec& loss, ErmSolver& solver) {
    if (!run.valid) throw std::invalid_argument("compute_regret: run is flagged invalid: " + run.failure);
    if (run.contexts.size() != run.T || run.steps.size() != run.T)
        throw std::invalid_argument("compute_regret: run does not cover its horizon");
    RegretReport r;
    for (const StepRecord& s : run.steps) r.learner_loss += s.loss;
    const OracleResult best = best_in_hindsight(run.contexts, loss, solver);
    r.best_loss = best.objective_value;
    r.best_theta = best.theta_star;
    r.hindsight_gamma_kind = best.gamma_kind;
    r.hindsight_gamma = best.gamma;
    r.regret = r.learner_loss - r.best_loss;
    r.avg_regret = run.T ? r.regret / static_cast<double>(run.T) : 0.0;
    return r;
}

enum class StabilityMode {
    shared,  // |theta_tau - successor under the same perturbation|_1
    played,  // |theta_tau - theta_{tau+1}|_1 across fresh perturbations
};

inline std::vector<double> stability_trace(const RunRecord& run, StabilityMode mode = StabilityMode::shared) {
    std::vector<double> out;
    if (run.epochs.size() < 2) return out;
    for (std::size_t i = 0; i + 1 < run.epochs.size(); ++i) {
        const EpochRecord& e = run.epochs[i];
        if (mode == StabilityMode::shared) {
            if (!e.shared_successor) throw std::invalid_argument("stability_trace: run has no shared successors recorded");
            out.push_back(l1_distance(e.theta, *e.shared_successor));
        } else {
            out.push_back(l1_distance(e.theta, run.epochs[i + 1].theta));
        }
    }
    return out;
}

inline double mean_stability(const RunRecord& run, StabilityMode mode = StabilityMode::shared) {
    const auto tr = stability_trace(run, mode);
    if (tr.empty()) return 0.0;
    double s = 0.0;
    for (double v : tr) s += v;
    return s / static_cast<double>(tr.size());
}

// ---------------------------------------------------------------------------
// Generalized brackets

struct BracketRecipe {
    std::string id;  // affine | polynomial | margin | planning
    double a = 1.0, A = 1.0, B = 1.0;
    double K = 1.0;
    double sigma = 1.0;   // sigma_dir, or sigma_poly for the polynomial recipe
    double degree = 1.0;
    double margin = 1.0;
    double alpha = 0.0;   // planning: isometry constant

    [[nodiscard]] double eps_tilde(double epsilon) const {
        if (!(epsilon > 0.0)) throw std::invalid_argument("bracket recipe: epsilon must be positive");
        if (id == "affine") return a * sigma * epsilon / (3.0 * K * K * A * B);
        if (id == "margin") return a * margin * sigma * epsilon / (6.0 * K * K * A * B);
        if (id == "polynomial") return std::pow(sigma * epsilon / (3.0 * K * K * B), degree);
        if (id == "planning") return epsilon / alpha;
        throw std::invalid_argument("bracket recipe '" + id + "' unknown; supported: affine, margin, polynomial, planning");
    }
};

inline BracketRecipe recipe_for(const LossSpec& loss, const SmoothnessClass& cls) {
    BracketRecipe r;
    if (dynamic_cast<const ThresholdEnv*>(&loss)) {
        r.id = "affine";
        r.sigma = cls.sigma_dir();
        return r;
    }
    if (const auto* p = dynamic_cast<const PiecewiseLossSpec*>(&loss)) {
        const auto& c = p->config();
        r.a = c.link.slope_lower();
        r.A = c.link.slope_upper();
        r.B = cls.sup_bound;
        r.K = static_cast<double>(c.modes);
        if (c.formulation == Formulation::argmax) {
            r.id = "margin";
            r.margin = c.margin;
            r.sigma = cls.sigma_dir();
        } else if (c.boundary == BoundaryKind::affine) {
            r.id = "affine";
            r.sigma = cls.sigma_dir();
        } else {
            const auto* ps = std::get_if<PolynomiallySmooth>(&cls.kind);
            if (!ps || ps->degree != c.degree)
                throw std::invalid_argument("recipe_for: polynomial boundaries need a matching polynomial smoothness class");
            r.id = "polynomial";
            r.sigma = ps->sigma_poly;
            r.degree = static_cast<double>(c.degree);
        }
        return r;
    }
    if (const auto* pl = dynamic_cast<const PlanningEnv*>(&loss)) {
        r.id = "planning";
        r.alpha = pl->isometry(cls).value().alpha;
        return r;
    }
    throw std::invalid_argument("recipe_for: no bracket recipe for environment '" + std::string(loss.name()) +
                                "'; supported: threshold, pwa_tournament, pwa_margin, polynomial, planning");
}

// Cover by l1 balls of radius eps_tilde: each axis-aligned cell has half-side
// h = eps_tilde / dim, so every point of a cell lies within l1 distance
// eps_tilde of its center. Cell i on axis j spans [lo + 2 i h, lo + 2 (i+1) h]
// clipped to the box. In one dimension h = eps_tilde.
struct GeneralizedBracket {
    ParamSpace space;
    double epsilon = 0.0;
    double eps_tilde = 0.0;
    std::string metric_id;
    std::string recipe;
    std::string class_desc;
    std::vector<std::uint64_t> cells_per_dim;

    [[nodiscard]] double half_side() const noexcept {
        return space.dim() == 0 ? 0.0 : eps_tilde / static_cast<double>(space.dim());
    }
    [[nodiscard]] double count() const {
        double c = 1.0;
        for (auto k : cells_per_dim) c *= static_cast<double>(k);
        return c;
    }
    [[nodiscard]] double log_count() const {
        double c = 0.0;
        for (auto k : cells_per_dim) c += std::log(static_cast<double>(k));
        return c;
    }

    [[nodiscard]] std::vector<std::uint64_t> cell_of(std::span<const double> theta) const {
        std::vector<std::uint64_t> idx(space.dim());
        const double h = half_side();
        for (std::size_t j = 0; j < space.dim(); ++j) {
            const double off = (theta[j] - space.lower()[j]) / (2.0 * h);
            const double f = std::floor(std::max(0.0, off));
            idx[j] = std::min<std::uint64_t>(cells_per_dim[j] - 1, static_cast<std::uint64_t>(std::min(f, 1e18)));
        }
        return idx;
    }
    [[nodiscard]] std::pair<Vector, Vector> cell_bounds(std::span<const std::uint64_t> idx) const {
        Vector lo(space.dim()), hi(space.dim());
        const double h = half_side();
        for (std::size_t j = 0; j < space.dim(); ++j) {
            lo[j] = space.lower()[j] + 2.0 * h * static_cast<double>(idx[j]);
            hi[j] = std::min(space.upper()[j], lo[j] + 2.0 * h);
            lo[j] = std::min(lo[j], space.upper()[j]);
        }
        return {lo, hi};
    }
    [[nodiscard]] ParamPoint center(std::span<const std::uint64_t> idx) const {
        auto [lo, hi] = cell_bounds(idx);
        Vector c(space.dim());
        for (std::size_t j = 0; j < space.dim(); ++j) c[j] = 0.5 * (lo[j] + hi[j]);
        return ParamPoint(std::move(c));
    }
};

// ceil(range / (2 h)) with a relative guard against round-off just above an
// integer; at least one cell per axis.
inline std::uint64_t mesh_cells(double range, double half_side) {
    const double x = range / (2.0 * half_side);
    if (!std::isfinite(x) || x > 1e18) throw std::invalid_argument("mesh_cells: mesh too fine");
    const double c = std::ceil(x - 1e-9 * std::max(1.0, x));
    return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(c));
}

inline GeneralizedBracket build_generalized_bracket(const ParamSpace& space, const PseudoMetricSpec& metric,
                                                    const BracketRecipe& recipe, double epsilon,
                                                    std::string class_desc = {}) {
    GeneralizedBracket b{space, epsilon, 0.0, std::string(metric.metric_id()), recipe.id, std::move(class_desc), {}};
    if (space.dim() == 0) {
        if (!(epsilon >= 0.0)) throw std::invalid_argument("build_generalized_bracket: epsilon must be nonnegative");
        return b;
    }
    b.eps_tilde = recipe.eps_tilde(epsilon);
    for (std::size_t j = 0; j < space.dim(); ++j) b.cells_per_dim.push_back(mesh_cells(space.range(j), b.half_side()));
    return b;
}

// A single cell covering the whole box, for trivial checks.
inline GeneralizedBracket single_cell_bracket(const ParamSpace& space, const PseudoMetricSpec& metric, double epsilon) {
    GeneralizedBracket b{space, epsilon, 0.0, std::string(metric.metric_id()), "single", {}, {}};
    double half = 0.0;
    for (std::size_t j = 0; j < space.dim(); ++j) half = std::max(half, space.range(j) / 2.0);
    b.eps_tilde = std::max(half * static_cast<double>(space.dim()), 1e-300);
    b.cells_per_dim.assign(space.dim(), 1);
    return b;
}

struct NamedDistribution {
    std::string name;
    Distribution sample;
};

struct CellEstimate {
    ParamPoint center;
    std::string adversary;
    double mean = 0.0;
    double standard_error = 0.0;
};

struct BracketReport {
    bool pass = true;
    std::size_t cells_checked = 0;
    CellEstimate worst;
    double bound = 0.0;  // epsilon
    std::string scope = "verified against battery";
    std::vector<CellEstimate> cells;
};

// Probe set: all corners when there are at most 64, otherwise 32 corners from
// a fixed stream, plus 32 uniform interior points.
inline std::vector<Vector> cell_probes(const Vector& lo, const Vector& hi, CounterRng rng) {
    const std::size_t dim = lo.size();
    std::vector<Vector> probes;
    const bool all = dim < 7;
    const std::size_t corners = all ? (std::size_t{1} << dim) : 32;
    CounterRng cr = rng.substream(1);
    for (std::size_t c = 0; c < corners; ++c) {
        Vector p(dim);
        for (std::size_t j = 0; j < dim; ++j) {
            const bool up = all ? ((c >> j) & 1u) : (cr() & 1u);
            p[j] = up ? hi[j] : lo[j];
        }
        probes.push_back(std::move(p));
    }
    CounterRng ir = rng.substream(2);
    for (std::size_t c = 0; c < 32; ++c) {
        Vector p(dim);
        for (std::size_t j = 0; j < dim; ++j) p[j] = ir.uniform(lo[j], hi[j]);
        probes.push_back(std::move(p));
    }
    return probes;
}

// Estimates E_z[max over probes of rho(probe, center, z)] for sampled cells and
// every distribution in the battery. Cells are located by projecting uniform
// box points onto the feasible set, so they meet the parameter set.
inline BracketReport verify_bracket(const GeneralizedBracket& bracket, const LossSpec& loss,
                                    const PseudoMetricSpec& metric, std::span<const NamedDistribution> battery,
                                    std::size_t n_cells, std::size_t n_mc, CounterRng rng) {
    BracketReport rep;
    rep.bound = bracket.epsilon;
    const ParamSpace& s = bracket.space;
    const std::size_t cells = s.dim() == 0 ? 1 : n_cells;
    double worst_score = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cells; ++c) {
        CounterRng cell_rng = rng.substream(Purpose::cells, c);
        ParamPoint center;
        std::vector<Vector> probes;
        if (s.dim() == 0) {
            probes.push_back({});
        } else {
            Vector u(s.dim());
            for (std::size_t j = 0; j < s.dim(); ++j) u[j] = cell_rng.uniform(s.lower()[j], s.upper()[j]);
            ParamPoint fp = loss.project_feasible(ParamPoint(u));
            Vector clamped = fp.coords;
            for (std::size_t j = 0; j < s.dim(); ++j) clamped[j] = std::clamp(clamped[j], s.lower()[j], s.upper()[j]);
            const auto idx = bracket.cell_of(clamped);
            center = bracket.center(idx);
            auto [lo, hi] = bracket.cell_bounds(idx);
            probes = cell_probes(lo, hi, cell_rng.substream(Purpose::probes));
        }
        std::vector<ParamPoint> pp;
        for (auto& p : probes) pp.emplace_back(std::move(p));
        for (std::size_t a = 0; a < battery.size(); ++a) {
            CounterRng zr = cell_rng.substream(Purpose::monte_carlo, a);
            stats::Accumulator acc;
            for (std::size_t i = 0; i < n_mc; ++i) {
                const ContextSample z = battery[a].sample(zr);
                double m = 0.0;
                for (const auto& p : pp) m = std::max(m, metric.rho(p, center, z));
                acc.add(m);
            }
            const auto sm = acc.summary();
            CellEstimate est{center, battery[a].name, sm.mean, sm.standard_error};
            const double score = est.mean - 3.0 * est.standard_error;
            if (score > worst_score) { worst_score = score; rep.worst = est; }
            if (est.mean > bracket.epsilon + 3.0 * est.standard_error) rep.pass = false;
            rep.cells.push_back(std::move(est));
        }
        ++rep.cells_checked;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Concentration

struct ConcentrationTrial {
    std::size_t n = 200;
    std::shared_ptr<const AdversaryStrategy> adversary;
    const PseudoMetricSpec* metric = nullptr;
    double D_rho = 2.0;
    double epsilon = 0.1;
    double delta = 0.05;
    double bracket_size = 1.0;  // constructive mesh size standing in for the minimal one
    std::size_t trials = 500;
    std::vector<std::pair<ParamPoint, ParamPoint>> pairs;
    // Upper bound on sup over the class of E[rho(theta, theta')].
    std::function<double(const ParamPoint&, const ParamPoint&)> sup_expectation;
    ParamPoint played;  // parameter reported to history-dependent adversaries

    void validate() const {
        if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("ConcentrationTrial: delta must lie in (0,1)");
        if (!adversary || !metric) throw std::invalid_argument("ConcentrationTrial: adversary and metric required");
        if (!sup_expectation) throw std::invalid_argument("ConcentrationTrial: sup_expectation required");
        if (!(bracket_size >= 1.0)) throw std::invalid_argument("ConcentrationTrial: bracket size must be at least 1");
        if (trials == 0) throw std::invalid_argument("ConcentrationTrial: need at least one trial");
    }

    [[nodiscard]] double rhs(const ParamPoint& a, const ParamPoint& b) const {
        const double nn = static_cast<double>(n);
        return 4.0 * nn * sup_expectation(a, b) + 8.0 * epsilon * nn +
               6.0 * D_rho * D_rho * std::log(2.0 * bracket_size / delta);
    }
};

struct ConcentrationReport {
    FrequencyEstimate violations;
    bool pass = true;
    double max_ratio = 0.0;  // largest LHS / RHS seen
    double delta = 0.0;
};

inline ConcentrationReport check_concentration(const ConcentrationTrial& trial, CounterRng rng) {
    trial.validate();
    std::vector<double> rhs;
    for (const auto& [a, b] : trial.pairs) rhs.push_back(trial.rhs(a, b));
    ConcentrationReport rep;
    rep.delta = trial.delta;
    std::size_t bad = 0;
    std::vector<ContextSample> ctx;
    std::vector<ParamPoint> th;
    std::vector<double> lhs(trial.pairs.size());
    for (std::size_t k = 0; k < trial.trials; ++k) {
        CounterRng tr = rng.substream(Purpose::monte_carlo, k);
        ctx.clear();
        th.clear();
        std::fill(lhs.begin(), lhs.end(), 0.0);
        for (std::size_t i = 0; i < trial.n; ++i) {
            CounterRng r = tr.substream(i);
            ContextSample z = sample_context(*trial.adversary, HistoryView{ctx, th}, r);
            for (std::size_t p = 0; p < trial.pairs.size(); ++p)
                lhs[p] += trial.metric->rho(trial.pairs[p].first, trial.pairs[p].second, z);
            ctx.push_back(std::move(z));
            th.push_back(trial.played);
        }
        bool violated = false;
        for (std::size_t p = 0; p < trial.pairs.size(); ++p) {
            rep.max_ratio = std::max(rep.max_ratio, std::abs(lhs[p]) / rhs[p]);
            if (std::abs(lhs[p]) > rhs[p]) violated = true;
        }
        if (violated) ++bad;
    }
    rep.violations = make_frequency(bad, trial.trials);
    rep.pass = rep.violations.rate <= trial.delta + 3.0 * rep.violations.standard_error;
    return rep;
}

// All pairs drawn from an evenly spaced grid of `points` values per axis
// (axis-aligned sweeps through the box center for dim > 1).
inline std::vector<std::pair<ParamPoint, ParamPoint>> grid_pairs(const ParamSpace& s, std::size_t points) {
    std::vector<ParamPoint> pts;
    if (points < 2) throw std::invalid_argument("grid_pairs: need at least two points");
    Vector mid(s.dim());
    for (std::size_t j = 0; j < s.dim(); ++j) mid[j] = 0.5 * (s.lower()[j] + s.upper()[j]);
    for (std::size_t j = 0; j < s.dim(); ++j)
        for (std::size_t i = 0; i < points; ++i) {
            Vector v = mid;
            v[j] = s.lower()[j] + s.range(j) * static_cast<double>(i) / static_cast<double>(points - 1);
            pts.emplace_back(std::move(v));
        }
    std::vector<std::pair<ParamPoint, ParamPoint>> out;
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t k = i + 1; k < pts.size(); ++k)
            if (!(pts[i] == pts[k])) out.emplace_back(pts[i], pts[k]);
    return out;
}

// ---------------------------------------------------------------------------
// Scaling fits

struct ExponentFit {
    stats::LinearFit fit;
    std::size_t used = 0;
    std::size_t dropped = 0;  // nonpositive regrets
};

inline ExponentFit fit_regret_exponent(std::span<const std::pair<double, double>> series) {
    std::vector<double> x, y;
    ExponentFit out;
    for (const auto& [T, R] : series) {
        if (!(T > 0.0) || !(R > 0.0) || !std::isfinite(R)) { ++out.dropped; continue; }
        x.push_back(std::log(T));
        y.push_back(std::log(R));
    }
    if (x.size() < 2) throw std::invalid_argument("fit_regret_exponent: fewer than two usable points");
    out.fit = stats::least_squares(x, y);
    out.used = x.size();
    return out;
}

struct ComplexityPoint {
    std::size_t oracle_calls = 0;
    std::vector<double> avg_regrets;  // across seeds
};

// Smallest recorded call count whose seed-mean average regret is at most the
// target; average regret never exceeds 1, so targets >= 1 need one call.
inline std::optional<std::size_t> oracle_complexity(std::span<const ComplexityPoint> series, double epsilon_target) {
    if (epsilon_target >= 1.0) return 1;
    std::optional<std::size_t> best;
    for (const auto& p : series) {
        if (p.avg_regrets.empty()) continue;
        double m = 0.0;
        for (double v : p.avg_regrets) m += v;
        m /= static_cast<double>(p.avg_regrets.size());
        if (m <= epsilon_target && (!best || p.oracle_calls < *best)) best = p.oracle_calls;
    }
    return best;
}

}  // namespace sftpl
