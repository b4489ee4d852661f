#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "sftpl/core.hpp"
#include "sftpl/perturbation.hpp"
#include "sftpl/pwa_env.hpp"
#include "sftpl/rng.hpp"
#include "sftpl/threshold.hpp"

namespace sftpl {

struct ErmProblem {
    std::span<const ContextSample> dataset;
    const LossSpec* loss = nullptr;
    const PerturbationDraw* perturbation = nullptr;

    [[nodiscard]] const ParamSpace& space() const { return loss->space(); }
};

enum class GammaKind { exact, grid_resolution, uncertified };

inline std::string_view to_string(GammaKind k) noexcept {
    switch (k) {
        case GammaKind::exact: return "exact";
        case GammaKind::grid_resolution: return "grid_resolution";
        case GammaKind::uncertified: return "uncertified";
    }
    return "uncertified";
}

struct OracleResult {
    ParamPoint theta_star;
    double objective_value = 0.0;
    GammaKind gamma_kind = GammaKind::uncertified;
    double gamma = 0.0;  // 0 for exact; l1 cell diameter for grids
    std::string solver_id;
    std::size_t evaluations = 0;
    std::optional<double> baseline_gap;  // heuristic objective minus grid objective
};

inline double cumulative_loss(std::span<const ContextSample> data, const LossSpec& loss, const ParamPoint& theta) {
    double s = 0.0;
    for (const ContextSample& z : data) s += loss.eval(theta, z);
    return s;
}

// Sum of losses plus the perturbation value.
inline double perturbed_objective(const ErmProblem& p, const ParamPoint& theta) {
    double s = cumulative_loss(p.dataset, *p.loss, theta);
    if (p.perturbation) s += eval_perturbation(*p.perturbation, *p.loss, theta);
    return s;
}

namespace detail {
inline void validate_problem(const ErmProblem& p) {
    if (!p.loss) throw std::invalid_argument("ErmProblem: loss required");
    const std::size_t d = p.loss->context_dim();
    for (const ContextSample& z : p.dataset)
        if (z.z.size() != d) throw std::invalid_argument("ErmProblem: dataset sample has the wrong dimension");
    if (p.perturbation && p.perturbation->is_exponential()) {
        const auto& le = std::get<LinearExponential>(p.perturbation->variant);
        if (le.xi.size() != p.space().dim()) throw std::invalid_argument("ErmProblem: perturbation dimension mismatch");
    }
}

// Applies the feasible-set projection and recomputes the objective there.
inline void finalize(const ErmProblem& p, OracleResult& r) {
    ParamPoint projected = p.loss->project_feasible(r.theta_star);
    if (!(projected == r.theta_star)) {
        r.theta_star = std::move(projected);
        r.objective_value = perturbed_objective(p, r.theta_star);
        ++r.evaluations;
    }
}
}  // namespace detail

class ErmSolver {
public:
    virtual ~ErmSolver() = default;
    virtual OracleResult solve(const ErmProblem& problem) = 0;
    [[nodiscard]] virtual std::string_view id() const = 0;
    [[nodiscard]] virtual std::unique_ptr<ErmSolver> clone() const = 0;
};

// Exact minimizer for one-dimensional thresholds. The objective is piecewise
// constant plus a linear term on the pieces [lo,b1], (b1,b2], ..., (bm,hi].
class ThresholdExactSolver final : public ErmSolver {
public:
    [[nodiscard]] std::string_view id() const override { return "erm_exact_threshold"; }
    [[nodiscard]] std::unique_ptr<ErmSolver> clone() const override { return std::make_unique<ThresholdExactSolver>(); }

    OracleResult solve(const ErmProblem& p) override {
        const auto* env = dynamic_cast<const ThresholdEnv*>(p.loss);
        if (!env) throw std::invalid_argument("erm_exact_threshold: loss is not a threshold loss");
        detail::validate_problem(p);
        double slope = 0.0;
        if (p.perturbation) {
            const auto* le = std::get_if<LinearExponential>(&p.perturbation->variant);
            if (!le) throw std::invalid_argument("erm_exact_threshold: only linear-exponential perturbations are supported");
            slope = -le->eta * le->xi[0];
        }
        const double lo = env->space().lower()[0];
        const double hi = env->space().upper()[0];

        struct Pt { double x; double y; };
        std::vector<Pt> pts;
        pts.reserve(p.dataset.size());
        double count = 0.0;
        for (const ContextSample& z : p.dataset) {
            if (z.payload.empty()) throw std::invalid_argument("erm_exact_threshold: unlabeled sample");
            const double x = z.z[0], y = z.payload[0];
            count += y != threshold_sign(x - lo) ? 1.0 : 0.0;
            if (x >= lo && x < hi) pts.push_back({x, y});
        }
        std::sort(pts.begin(), pts.end(), [](const Pt& a, const Pt& b) { return a.x < b.x; });

        OracleResult best;
        best.solver_id = std::string(id());
        best.gamma_kind = GammaKind::exact;
        best.objective_value = std::numeric_limits<double>::infinity();
        std::size_t pieces = 0;

        auto consider = [&](double left, bool left_closed, double right, double c) {
            double theta;
            if (slope < 0.0) {
                theta = right;
            } else if (slope > 0.0) {
                theta = left_closed ? left : std::min(right, std::nextafter(left, right));
            } else if (pts.empty()) {
                theta = lo;
            } else {
                theta = 0.5 * (left + right);
            }
            theta = canonical(theta);
            const double obj = c + (slope == 0.0 ? 0.0 : slope * theta);
            ++pieces;
            if (obj < best.objective_value) {
                best.objective_value = obj;
                best.theta_star = ParamPoint{theta};
            }
        };

        std::size_t i = 0;
        double left = lo;
        bool closed = true;
        while (i < pts.size()) {
            const double b = pts[i].x;
            consider(left, closed, b, count);
            // Crossing b flips every point at b from +1 to -1.
            while (i < pts.size() && pts[i].x == b) {
                count += (pts[i].y != -1.0 ? 1.0 : 0.0) - (pts[i].y != 1.0 ? 1.0 : 0.0);
                ++i;
            }
            left = b;
            closed = false;
        }
        consider(left, closed, hi, count);
        best.evaluations = pieces;
        // Report the objective through the shared evaluator for consistency.
        best.objective_value = perturbed_objective(p, best.theta_star);
        return best;
    }
};

struct GridLayout {
    std::size_t mesh = 2;
    std::size_t dim = 0;
    std::size_t count = 1;

    static constexpr double limit = 1e7;

    GridLayout(const ParamSpace& s, std::size_t mesh_per_dim) : mesh(mesh_per_dim), dim(s.dim()) {
        if (mesh == 0) throw std::invalid_argument("erm_grid: mesh must be positive");
        double total = 1.0;
        for (std::size_t i = 0; i < dim; ++i) total *= static_cast<double>(mesh);
        if (total > limit)
            throw std::invalid_argument("erm_grid: mesh^dim exceeds 1e7 points; use erm_alternating instead");
        count = static_cast<std::size_t>(total);
    }

    // Index order: first coordinate most significant, so index order is lexicographic.
    [[nodiscard]] ParamPoint point(const ParamSpace& s, std::size_t index) const {
        Vector c(dim);
        for (std::size_t i = dim; i-- > 0;) {
            const std::size_t k = index % mesh;
            index /= mesh;
            c[i] = mesh == 1 ? s.lower()[i]
                             : s.lower()[i] + s.range(i) * static_cast<double>(k) / static_cast<double>(mesh - 1);
            if (mesh > 1 && k == mesh - 1) c[i] = s.upper()[i];
        }
        return ParamPoint(std::move(c));
    }

    [[nodiscard]] double cell_l1_diameter(const ParamSpace& s) const {
        if (mesh <= 1) return s.l1_diameter();
        return s.l1_diameter() / static_cast<double>(mesh - 1);
    }
};

// Exhaustive grid search. With `incremental` set, per-point loss sums are
// cached across calls whose datasets extend the previous one.
class GridSolver final : public ErmSolver {
public:
    explicit GridSolver(std::size_t mesh_per_dim, bool incremental = false)
        : mesh_(mesh_per_dim), incremental_(incremental) {}

    [[nodiscard]] std::string_view id() const override { return "erm_grid"; }
    [[nodiscard]] std::unique_ptr<ErmSolver> clone() const override {
        return std::make_unique<GridSolver>(mesh_, incremental_);
    }
    [[nodiscard]] std::size_t mesh() const noexcept { return mesh_; }

    OracleResult solve(const ErmProblem& p) override {
        detail::validate_problem(p);
        const ParamSpace& s = p.space();
        GridLayout grid(s, mesh_);
        OracleResult r;
        r.solver_id = std::string(id());
        r.gamma_kind = GammaKind::grid_resolution;
        r.gamma = grid.cell_l1_diameter(s);
        if (incremental_) refresh_cache(p, grid, r);

        double best = std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t g = 0; g < grid.count; ++g) {
            const ParamPoint theta = grid.point(s, g);
            double obj = incremental_ ? sums_[g] : cumulative_loss(p.dataset, *p.loss, theta);
            if (!incremental_) r.evaluations += p.dataset.size();
            if (p.perturbation) obj += eval_perturbation(*p.perturbation, *p.loss, theta);
            if (obj < best) { best = obj; best_idx = g; }
        }
        r.theta_star = grid.point(s, best_idx);
        r.objective_value = best;
        detail::finalize(p, r);
        return r;
    }

private:
    void refresh_cache(const ErmProblem& p, const GridLayout& grid, OracleResult& r) {
        const bool reusable = cache_loss_ == p.loss && sums_.size() == grid.count && consumed_ <= p.dataset.size() &&
                              (consumed_ == 0 || (p.dataset[0] == first_ && p.dataset[consumed_ - 1] == last_));
        if (!reusable) {
            sums_.assign(grid.count, 0.0);
            consumed_ = 0;
            cache_loss_ = p.loss;
        }
        const ParamSpace& s = p.space();
        if (consumed_ < p.dataset.size()) {
            for (std::size_t g = 0; g < grid.count; ++g) {
                const ParamPoint theta = grid.point(s, g);
                double add = 0.0;
                for (std::size_t i = consumed_; i < p.dataset.size(); ++i) add += p.loss->eval(theta, p.dataset[i]);
                sums_[g] += add;
            }
            r.evaluations += grid.count * (p.dataset.size() - consumed_);
            consumed_ = p.dataset.size();
            first_ = p.dataset.front();
            last_ = p.dataset.back();
        }
    }

    std::size_t mesh_;
    bool incremental_;
    std::vector<double> sums_;
    std::size_t consumed_ = 0;
    const LossSpec* cache_loss_ = nullptr;
    ContextSample first_, last_;
};

inline OracleResult erm_exact_threshold(const ErmProblem& p) { return ThresholdExactSolver{}.solve(p); }
inline OracleResult erm_grid(const ErmProblem& p, std::size_t mesh_per_dim) { return GridSolver(mesh_per_dim).solve(p); }

// Alternating heuristic for piecewise losses: mode assignment, closed-form
// least squares for regression modes, then coordinate pattern search on a
// shrinking step. Moves are accepted only on strict decrease.
class AlternatingSolver final : public ErmSolver {
public:
    struct Options {
        std::size_t restarts = 4;
        std::size_t max_iters = 50;
        std::uint64_t seed = 0;
        std::size_t grid_check_mesh = 0;  // 0 disables the grid baseline
    };

    explicit AlternatingSolver(Options o) : opt_(o) {
        if (opt_.restarts == 0) throw std::invalid_argument("erm_alternating: need at least one restart");
    }
    AlternatingSolver() : AlternatingSolver(Options{}) {}

    [[nodiscard]] std::string_view id() const override { return "erm_alternating"; }
    [[nodiscard]] std::unique_ptr<ErmSolver> clone() const override { return std::make_unique<AlternatingSolver>(opt_); }

    // Objective after every completed iteration of the last solve, per restart.
    [[nodiscard]] const std::vector<std::vector<double>>& trace() const noexcept { return trace_; }

    OracleResult solve(const ErmProblem& p) override {
        const auto* spec = dynamic_cast<const PiecewiseLossSpec*>(p.loss);
        if (!spec) throw std::invalid_argument("erm_alternating: loss is not a piecewise loss");
        detail::validate_problem(p);
        const ParamSpace& s = p.space();
        CounterRng base = CounterRng(opt_.seed).substream(Purpose::restarts);
        trace_.assign(opt_.restarts, {});

        OracleResult best;
        best.solver_id = std::string(id());
        best.gamma_kind = GammaKind::uncertified;
        best.objective_value = std::numeric_limits<double>::infinity();
        std::size_t evals = 0;

        for (std::size_t r = 0; r < opt_.restarts; ++r) {
            CounterRng rng = base.substream(r);
            Vector init(s.dim());
            for (std::size_t i = 0; i < s.dim(); ++i)
                init[i] = r == 0 ? 0.5 * (s.lower()[i] + s.upper()[i]) : rng.uniform(s.lower()[i], s.upper()[i]);
            if (r == 0) {
                // Give the boundaries a nonzero starting direction.
                for (std::size_t i = s.dim_continuous(); i < s.dim(); ++i)
                    init[i] = std::clamp(rng.uniform(-1.0, 1.0), s.lower()[i], s.upper()[i]);
            }
            ParamPoint theta = clamp_to_space(init, s);
            double f = perturbed_objective(p, theta);
            ++evals;
            auto& tr = trace_[r];
            tr.push_back(f);

            Vector step(s.dim());
            for (std::size_t i = 0; i < s.dim(); ++i) step[i] = 0.25 * s.range(i);

            for (std::size_t it = 0; it < opt_.max_iters; ++it) {
                const double before = f;
                least_squares_step(*spec, p, theta, f, evals);
                bool improved = pattern_sweep(p, theta, f, step, evals);
                if (!improved) {
                    bool any = false;
                    for (std::size_t i = 0; i < s.dim(); ++i) {
                        step[i] *= 0.5;
                        any = any || step[i] > 1e-9 * std::max(1.0, s.range(i));
                    }
                    if (!any && f == before) {
                        tr.push_back(f);
                        break;
                    }
                }
                if (f > before) throw std::logic_error("erm_alternating: objective increased");
                tr.push_back(f);
            }
            if (f < best.objective_value || (f == best.objective_value && lex_less(theta, best.theta_star))) {
                best.objective_value = f;
                best.theta_star = theta;
            }
        }
        best.evaluations = evals;
        detail::finalize(p, best);
        if (opt_.grid_check_mesh > 0) {
            double total = 1.0;
            for (std::size_t i = 0; i < s.dim(); ++i) total *= static_cast<double>(opt_.grid_check_mesh);
            if (total <= GridLayout::limit) {
                const OracleResult g = GridSolver(opt_.grid_check_mesh).solve(p);
                best.baseline_gap = best.objective_value - g.objective_value;
                best.evaluations += g.evaluations;
            }
        }
        return best;
    }

private:
    void least_squares_step(const PiecewiseLossSpec& spec, const ErmProblem& p, ParamPoint& theta, double& f,
                            std::size_t& evals) const {
        const ParamSpace& s = p.space();
        const LinearExponential* le =
            p.perturbation ? std::get_if<LinearExponential>(&p.perturbation->variant) : nullptr;
        std::vector<std::vector<std::size_t>> members(spec.modes());
        for (std::size_t i = 0; i < p.dataset.size(); ++i) members[spec.mode(theta, p.dataset[i])].push_back(i);
        for (std::size_t k = 0; k < spec.modes(); ++k) {
            const auto* g = dynamic_cast<const ClippedSquaredError*>(&spec.mode_loss(k));
            if (!g || members[k].empty()) continue;
            const std::size_t w = g->row_width();
            Eigen::MatrixXd X(static_cast<Eigen::Index>(members[k].size()), static_cast<Eigen::Index>(w));
            Eigen::MatrixXd Y(static_cast<Eigen::Index>(members[k].size()), static_cast<Eigen::Index>(g->output_dim()));
            for (std::size_t r = 0; r < members[k].size(); ++r) {
                const ContextSample& z = p.dataset[members[k][r]];
                for (std::size_t c = 0; c < g->input_dim(); ++c) X(r, c) = z.z[c];
                if (g->bias()) X(r, g->input_dim()) = 1.0;
                for (std::size_t j = 0; j < g->output_dim(); ++j) Y(r, j) = z.payload[j];
            }
            Eigen::MatrixXd gram = X.transpose() * X;
            gram.diagonal().array() += 1e-12 * std::max(1.0, gram.trace());
            Eigen::MatrixXd rhs = X.transpose() * Y;
            const std::size_t off = spec.mode_offset(k);
            if (le && le->eta != 0.0) {
                for (std::size_t j = 0; j < g->output_dim(); ++j)
                    for (std::size_t c = 0; c < w; ++c)
                        rhs(c, j) += le->eta * le->xi[off + j * w + c] / (2.0 * g->scale());
            }
            const Eigen::MatrixXd W = gram.ldlt().solve(rhs);
            Vector cand = theta.coords;
            for (std::size_t j = 0; j < g->output_dim(); ++j)
                for (std::size_t c = 0; c < w; ++c) cand[off + j * w + c] = W(c, j);
            ParamPoint next = clamp_to_space(cand, s);
            const double fn = perturbed_objective(p, next);
            ++evals;
            if (fn < f) { theta = std::move(next); f = fn; }
        }
    }

    static bool pattern_sweep(const ErmProblem& p, ParamPoint& theta, double& f, const Vector& step,
                              std::size_t& evals) {
        const ParamSpace& s = p.space();
        bool improved = false;
        for (std::size_t i = 0; i < s.dim(); ++i) {
            for (double dir : {1.0, -1.0}) {
                Vector cand = theta.coords;
                cand[i] = std::clamp(cand[i] + dir * step[i], s.lower()[i], s.upper()[i]);
                if (cand[i] == theta.coords[i]) continue;
                ParamPoint next(std::move(cand));
                const double fn = perturbed_objective(p, next);
                ++evals;
                if (fn < f) {
                    theta = std::move(next);
                    f = fn;
                    improved = true;
                    break;
                }
            }
        }
        return improved;
    }

    Options opt_;
    std::vector<std::vector<double>> trace_;
};

inline OracleResult erm_alternating(const ErmProblem& p, std::size_t restarts, std::size_t max_iters, std::uint64_t seed) {
    return AlternatingSolver({restarts, max_iters, seed, 0}).solve(p);
}

inline OracleResult best_in_hindsight(std::span<const ContextSample> dataset, const LossSpec& loss, ErmSolver& solver) {
    return solver.solve(ErmProblem{dataset, &loss, nullptr});
}

}  // namespace sftpl
