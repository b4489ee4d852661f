#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sftpl/core.hpp"
#include "sftpl/polynomial.hpp"
#include "sftpl/pwa_env.hpp"
#include "sftpl/rng.hpp"
#include "sftpl/smoothing.hpp"

namespace sftpl {

// x_{h+1} = A v + b with v = (x, u); A is m x (m+d), row-major.
struct AffineDynamics {
    Vector A;
    Vector b;

    [[nodiscard]] Vector apply(std::span<const double> v, std::size_t m) const {
        const std::size_t w = v.size();
        if (A.size() != m * w || b.size() != m) throw std::invalid_argument("AffineDynamics: shape mismatch");
        Vector out(b);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) out[i] += A[i * w + j] * v[j];
        return out;
    }
};

using DynamicsFn = std::function<Vector(std::span<const double> v)>;

inline DynamicsFn affine_dynamics(AffineDynamics g, std::size_t m) {
    return [g = std::move(g), m](std::span<const double> v) { return g.apply(v, m); };
}

class PlanningLoss {
public:
    enum class Kind { zero, scaled_l1, l1_tracking, quadratic_tracking };

    static PlanningLoss zero() { return PlanningLoss(Kind::zero); }
    // (1 / (2 D H)) sum_h |v_h|_1, clipped to 1.
    static PlanningLoss scaled_l1(double D, std::size_t H) {
        PlanningLoss l(Kind::scaled_l1);
        l.scale_ = 1.0 / (2.0 * D * static_cast<double>(H));
        return l;
    }
    // min(1, sum_h wx |x_h - r_h|_1 + wu |u_h - c_h|_1) with weights in [0,1];
    // an empty r_h or c_h leaves that component untracked.
    static PlanningLoss l1_tracking(std::vector<Vector> x_ref, std::vector<Vector> u_ref, double wx, double wu) {
        if (!(wx >= 0.0 && wx <= 1.0 && wu >= 0.0 && wu <= 1.0))
            throw std::invalid_argument("PlanningLoss: tracking weights must lie in [0,1]");
        if (x_ref.size() != u_ref.size()) throw std::invalid_argument("PlanningLoss: reference lengths differ");
        PlanningLoss l(Kind::l1_tracking);
        l.ref_ = std::move(x_ref);
        l.uref_ = std::move(u_ref);
        l.wx_ = wx;
        l.wu_ = wu;
        return l;
    }
    // min(1, scale * sum_h |x_h - r_h|_2^2).
    static PlanningLoss quadratic_tracking(std::vector<Vector> reference, double scale) {
        if (!(scale > 0.0)) throw std::invalid_argument("PlanningLoss: scale must be positive");
        PlanningLoss l(Kind::quadratic_tracking);
        l.ref_ = std::move(reference);
        l.scale_ = scale;
        return l;
    }

    [[nodiscard]] Kind kind() const noexcept { return kind_; }

    // v_h = (x_h, u_h) for h = 1..H.
    [[nodiscard]] double eval(const std::vector<Vector>& x, const std::vector<Vector>& u) const {
        const std::size_t H = u.size();
        double s = 0.0;
        switch (kind_) {
            case Kind::zero: return 0.0;
            case Kind::scaled_l1:
                for (std::size_t h = 0; h < H; ++h) {
                    for (double v : x[h]) s += std::abs(v);
                    for (double v : u[h]) s += std::abs(v);
                }
                return std::min(1.0, scale_ * s);
            case Kind::l1_tracking:
                check_ref(H, x);
                for (std::size_t h = 0; h < H; ++h) {
                    if (!ref_[h].empty())
                        for (std::size_t i = 0; i < x[h].size(); ++i) s += wx_ * std::abs(x[h][i] - ref_[h][i]);
                    if (!uref_[h].empty()) {
                        if (uref_[h].size() != u[h].size()) throw std::invalid_argument("PlanningLoss: input reference dimension mismatch");
                        for (std::size_t i = 0; i < u[h].size(); ++i) s += wu_ * std::abs(u[h][i] - uref_[h][i]);
                    }
                }
                return std::min(1.0, s);
            case Kind::quadratic_tracking:
                check_ref(H, x);
                for (std::size_t h = 0; h < H; ++h)
                    if (!ref_[h].empty())
                        for (std::size_t i = 0; i < x[h].size(); ++i) s += (x[h][i] - ref_[h][i]) * (x[h][i] - ref_[h][i]);
                return std::min(1.0, scale_ * s);
        }
        return 0.0;
    }

private:
    explicit PlanningLoss(Kind k) : kind_(k) {}
    void check_ref(std::size_t H, const std::vector<Vector>& x) const {
        if (ref_.size() != H) throw std::invalid_argument("PlanningLoss: reference length must equal H");
        for (std::size_t h = 0; h < H; ++h)
            if (!ref_[h].empty() && ref_[h].size() != x[h].size()) throw std::invalid_argument("PlanningLoss: reference dimension mismatch");
    }

    Kind kind_;
    std::vector<Vector> ref_;
    std::vector<Vector> uref_;
    double wx_ = 1.0, wu_ = 0.0, scale_ = 1.0;
};

struct HybridSystemSpec {
    std::size_t H = 1;
    std::size_t K = 1;
    std::size_t m = 1;  // state dimension
    std::size_t d = 1;  // input dimension
    std::vector<std::vector<DynamicsFn>> dynamics;  // [h][k]
    BoundaryKind boundary = BoundaryKind::affine;
    unsigned degree = 1;
    std::vector<std::vector<Vector>> boundaries;  // [h][k]: w in R^{m+d+1} or polynomial coefficients over v
    double margin = 1.0;        // declared gamma
    double D = 1.0;             // declared sup of |x_h|_1 and |u_h|_1
    double L = 1.0;             // declared Lipschitz constant of the fixed-mode state map
    double state_bound = std::numeric_limits<double>::infinity();  // per-coordinate clip
    double plan_lo = -1.0;
    double plan_hi = 1.0;
    PlanningLoss loss = PlanningLoss::zero();

    [[nodiscard]] std::size_t v_dim() const noexcept { return m + d; }

    void validate() const {
        if (H == 0 || K == 0 || m == 0 || d == 0) throw std::invalid_argument("HybridSystemSpec: dimensions must be positive");
        if (dynamics.size() != H || boundaries.size() != H)
            throw std::invalid_argument("HybridSystemSpec: need dynamics and boundaries for every step");
        const std::size_t bsize = boundary == BoundaryKind::affine ? v_dim() + 1 : monomial_count(v_dim(), degree);
        for (std::size_t h = 0; h < H; ++h) {
            if (dynamics[h].size() != K || boundaries[h].size() != K)
                throw std::invalid_argument("HybridSystemSpec: need one map and one boundary per mode");
            for (const auto& g : dynamics[h])
                if (!g) throw std::invalid_argument("HybridSystemSpec: null dynamics");
            for (const auto& w : boundaries[h]) {
                if (w.size() != bsize) throw std::invalid_argument("HybridSystemSpec: boundary size mismatch");
                if (boundary == BoundaryKind::affine) {
                    double n = 0.0;
                    for (double v : w) n += v * v;
                    if (std::abs(std::sqrt(n) - 1.0) > 1e-9) throw std::invalid_argument("HybridSystemSpec: boundary rows must be unit vectors");
                } else {
                    Polynomial p(v_dim(), degree, w);
                    if (std::abs(p.top_norm() - 1.0) > 1e-9)
                        throw std::invalid_argument("HybridSystemSpec: polynomial boundaries need unit top-degree norm");
                }
            }
        }
        if (!(margin > 0.0) || !(D > 0.0) || !(L >= 0.0)) throw std::invalid_argument("HybridSystemSpec: margin, D, L invalid");
        if (!(plan_lo <= plan_hi)) throw std::invalid_argument("HybridSystemSpec: empty plan box");
        if (realized_margin() < margin - 1e-12)
            throw std::invalid_argument("HybridSystemSpec: realized margin below the declared margin");
    }

    // Minimum pairwise Euclidean gap of the non-constant boundary coefficients.
    [[nodiscard]] double realized_margin() const {
        double best = std::numeric_limits<double>::infinity();
        const std::size_t len = boundary == BoundaryKind::affine ? v_dim() : monomial_count(v_dim(), degree) - 1;
        const std::size_t off = boundary == BoundaryKind::affine ? 0 : 1;
        for (std::size_t h = 0; h < H; ++h)
            for (std::size_t k = 0; k < K; ++k)
                for (std::size_t k2 = k + 1; k2 < K; ++k2) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < len; ++i) {
                        const double diff = boundaries[h][k][off + i] - boundaries[h][k2][off + i];
                        s += diff * diff;
                    }
                    best = std::min(best, std::sqrt(s));
                }
        return best;
    }

    [[nodiscard]] ParamSpace plan_space() const {
        return ParamSpace::box(H * d, plan_lo, plan_hi);
    }

    [[nodiscard]] std::size_t mode_at(std::size_t h, std::span<const double> v) const {
        std::size_t best = 0;
        double best_v = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < K; ++k) {
            const Vector& w = boundaries[h][k];
            double phi;
            if (boundary == BoundaryKind::affine) {
                phi = w[v_dim()];
                for (std::size_t i = 0; i < v_dim(); ++i) phi += w[i] * v[i];
            } else {
                phi = Polynomial(v_dim(), degree, w).eval(v);
            }
            phi = canonical(phi);
            if (phi > best_v) { best_v = phi; best = k; }
        }
        return best;
    }
};

struct Noises {
    std::vector<Vector> xi;   // H inputs noises, d each
    std::vector<Vector> eta;  // H process noises, m each
};

struct TrajectoryRecord {
    std::vector<Vector> x;  // H+1 states
    std::vector<Vector> u;  // H realized inputs
    std::vector<std::size_t> modes;
    Noises noises;
    double loss = 0.0;
    bool clipped = false;
    bool finite = true;

    [[nodiscard]] Vector v(std::size_t h) const {
        Vector out = x[h];
        out.insert(out.end(), u[h].begin(), u[h].end());
        return out;
    }
};

inline double planning_loss(const HybridSystemSpec& spec, const TrajectoryRecord& traj) {
    if (!traj.finite) return 1.0;
    std::vector<Vector> xs(traj.x.begin(), traj.x.begin() + static_cast<std::ptrdiff_t>(spec.H));
    return std::clamp(spec.loss.eval(xs, traj.u), 0.0, 1.0);
}

namespace detail {
inline TrajectoryRecord propagate(const HybridSystemSpec& spec, std::span<const double> plan, std::span<const double> x1,
                                  const Noises& noises, const std::vector<std::size_t>* forced) {
    if (plan.size() != spec.H * spec.d) throw std::invalid_argument("rollout: plan dimension mismatch");
    if (x1.size() != spec.m) throw std::invalid_argument("rollout: initial state dimension mismatch");
    if (noises.xi.size() != spec.H || noises.eta.size() != spec.H) throw std::invalid_argument("rollout: noise lists must have length H");
    if (forced && forced->size() != spec.H) throw std::invalid_argument("rollout: mode sequence must have length H");
    TrajectoryRecord tr;
    tr.noises = noises;
    tr.x.reserve(spec.H + 1);
    tr.x.emplace_back(x1.begin(), x1.end());
    Vector v(spec.v_dim());
    for (std::size_t h = 0; h < spec.H; ++h) {
        if (noises.xi[h].size() != spec.d || noises.eta[h].size() != spec.m)
            throw std::invalid_argument("rollout: noise dimension mismatch");
        Vector u(spec.d);
        for (std::size_t i = 0; i < spec.d; ++i) u[i] = plan[h * spec.d + i] + noises.xi[h][i];
        std::copy(tr.x[h].begin(), tr.x[h].end(), v.begin());
        std::copy(u.begin(), u.end(), v.begin() + static_cast<std::ptrdiff_t>(spec.m));
        std::size_t k;
        if (forced) {
            k = (*forced)[h];
            if (k >= spec.K) throw std::invalid_argument("rollout_fixed_modes: invalid mode");
        } else {
            k = spec.mode_at(h, v);
        }
        Vector next = spec.dynamics[h][k](v);
        if (next.size() != spec.m) throw std::logic_error("rollout: dynamics returned the wrong dimension");
        for (std::size_t i = 0; i < spec.m; ++i) {
            next[i] += noises.eta[h][i];
            if (!std::isfinite(next[i])) tr.finite = false;
            if (std::abs(next[i]) > spec.state_bound) {
                next[i] = std::clamp(next[i], -spec.state_bound, spec.state_bound);
                tr.clipped = true;
            }
        }
        tr.modes.push_back(k);
        tr.u.push_back(std::move(u));
        tr.x.push_back(std::move(next));
        if (!tr.finite) break;
    }
    if (tr.finite) tr.loss = planning_loss(spec, tr);
    else tr.loss = 1.0;
    return tr;
}
}  // namespace detail

inline TrajectoryRecord rollout(const HybridSystemSpec& spec, std::span<const double> plan, std::span<const double> x1,
                                const Noises& noises) {
    return detail::propagate(spec, plan, x1, noises, nullptr);
}

inline TrajectoryRecord rollout_fixed_modes(const HybridSystemSpec& spec, std::span<const double> plan,
                                            std::span<const double> x1, const Noises& noises,
                                            const std::vector<std::size_t>& modes) {
    return detail::propagate(spec, plan, x1, noises, &modes);
}

inline Noises zero_noises(const HybridSystemSpec& spec) {
    return Noises{std::vector<Vector>(spec.H, Vector(spec.d, 0.0)), std::vector<Vector>(spec.H, Vector(spec.m, 0.0))};
}

// G(plan; modes) = (x_1, ..., x_H).
inline Vector state_map(const TrajectoryRecord& tr, std::size_t H) {
    Vector g;
    for (std::size_t h = 0; h < H; ++h) g.insert(g.end(), tr.x[h].begin(), tr.x[h].end());
    return g;
}

// Context layout: z = (x1, xi_1..xi_H, eta_1..eta_H); payload[0] = scenario index.
struct PlanningContext {
    Vector x1;
    Noises noises;
    std::size_t scenario = 0;
};

inline ContextSample encode_planning_context(const PlanningContext& c) {
    ContextSample s;
    s.z = c.x1;
    for (const auto& v : c.noises.xi) s.z.insert(s.z.end(), v.begin(), v.end());
    for (const auto& v : c.noises.eta) s.z.insert(s.z.end(), v.begin(), v.end());
    s.payload = {static_cast<double>(c.scenario)};
    return s;
}

inline PlanningContext decode_planning_context(const HybridSystemSpec& spec, const ContextSample& s) {
    const std::size_t need = spec.m + spec.H * (spec.d + spec.m);
    if (s.z.size() != need) throw std::invalid_argument("decode_planning_context: context dimension mismatch");
    PlanningContext c;
    std::size_t o = 0;
    c.x1.assign(s.z.begin(), s.z.begin() + static_cast<std::ptrdiff_t>(spec.m));
    o = spec.m;
    for (std::size_t h = 0; h < spec.H; ++h, o += spec.d) c.noises.xi.emplace_back(s.z.begin() + static_cast<std::ptrdiff_t>(o), s.z.begin() + static_cast<std::ptrdiff_t>(o + spec.d));
    for (std::size_t h = 0; h < spec.H; ++h, o += spec.m) c.noises.eta.emplace_back(s.z.begin() + static_cast<std::ptrdiff_t>(o), s.z.begin() + static_cast<std::ptrdiff_t>(o + spec.m));
    c.scenario = s.payload.empty() ? 0 : static_cast<std::size_t>(s.payload[0]);
    return c;
}

// Plans as parameters; each context selects a system from the scenario list.
class PlanningEnv final : public LossSpec, public PseudoMetricSpec {
public:
    explicit PlanningEnv(std::vector<HybridSystemSpec> scenarios) : scenarios_(std::move(scenarios)) {
        if (scenarios_.empty()) throw std::invalid_argument("PlanningEnv: need at least one scenario");
        for (const auto& s : scenarios_) s.validate();
        const auto& f = scenarios_.front();
        for (const auto& s : scenarios_)
            if (s.H != f.H || s.d != f.d || s.m != f.m || s.plan_lo != f.plan_lo || s.plan_hi != f.plan_hi)
                throw std::invalid_argument("PlanningEnv: scenarios must share H, dimensions and plan box");
        space_ = f.plan_space();
    }

    [[nodiscard]] const ParamSpace& space() const override { return space_; }
    [[nodiscard]] std::string_view name() const override { return "planning"; }
    [[nodiscard]] std::size_t context_dim() const override { const auto& f = scenarios_.front(); return f.m + f.H * (f.d + f.m); }
    [[nodiscard]] const PseudoMetricSpec* metric() const override { return this; }
    [[nodiscard]] const HybridSystemSpec& scenario(std::size_t i) const {
        if (i >= scenarios_.size()) throw std::out_of_range("PlanningEnv: unknown scenario");
        return scenarios_[i];
    }
    [[nodiscard]] std::size_t scenario_count() const noexcept { return scenarios_.size(); }

    [[nodiscard]] TrajectoryRecord trajectory(const ParamPoint& plan, const ContextSample& z) const {
        const PlanningContext c = decode_planning_context(scenarios_.front(), z);
        return rollout(scenario(c.scenario), plan.span(), c.x1, c.noises);
    }

    [[nodiscard]] double eval(const ParamPoint& plan, const ContextSample& z) const override {
        const PlanningContext c = decode_planning_context(scenarios_.front(), z);
        return rollout(scenario(c.scenario), plan.span(), c.x1, c.noises).loss;
    }

    // |plan - plan'|_1 + sum_h |x_h - x'_h|_1 under shared noise.
    [[nodiscard]] double rho(const ParamPoint& a, const ParamPoint& b, const ContextSample& z) const override {
        const TrajectoryRecord ta = trajectory(a, z), tb = trajectory(b, z);
        const std::size_t H = scenarios_.front().H;
        return l1_distance(a, b) + l1_distance(state_map(ta, H), state_map(tb, H));
    }
    [[nodiscard]] double diameter_bound() const override {
        const auto& f = scenarios_.front();
        double D = 0.0;
        for (const auto& s : scenarios_) D = std::max(D, s.D);
        return space_.l1_diameter() + 2.0 * D * static_cast<double>(f.H);
    }
    [[nodiscard]] std::string_view metric_id() const override { return "planning_trajectory"; }

    [[nodiscard]] std::optional<IsometryConstants> isometry(const SmoothnessClass& cls) const override {
        if (!cls.is_directional()) return std::nullopt;
        double alpha = 0.0;
        for (const auto& s : scenarios_)
            alpha = std::max(alpha, planning_alpha(s, cls.sigma_dir()));
        return IsometryConstants{alpha, 1.0};
    }

    static double planning_alpha(const HybridSystemSpec& s, double sigma_dir) {
        const double H = static_cast<double>(s.H), K = static_cast<double>(s.K);
        return 6.0 * s.D * H * H * K * K * s.L / (s.margin * sigma_dir);
    }

private:
    std::vector<HybridSystemSpec> scenarios_;
    ParamSpace space_;
};

// Fresh initial state and noises every episode; the scenario cycles through
// the list with the given period (0 keeps scenario 0).
class PlanningAdversary final : public AdversaryStrategy {
public:
    PlanningAdversary(const HybridSystemSpec& reference, double x1_lo, double x1_hi, NoiseSpec input_noise,
                      NoiseSpec process_noise, std::size_t scenarios = 1, std::size_t period = 0)
        : H_(reference.H), m_(reference.m), d_(reference.d), x1_lo_(x1_lo), x1_hi_(x1_hi), in_(input_noise),
          proc_(process_noise), scenarios_(scenarios), period_(period) {
        in_.validate();
        proc_.validate();
        if (!(x1_hi > x1_lo)) throw std::invalid_argument("PlanningAdversary: empty initial-state box");
        if (scenarios_ == 0) throw std::invalid_argument("PlanningAdversary: need at least one scenario");
        const double sigma = std::min({joint_sigma_dir(), uniform_cube_sigma_dir(x1_hi - x1_lo, m_)});
        const double bound = std::max({std::abs(x1_lo), std::abs(x1_hi), in_.width / 2.0, proc_.width / 2.0});
        cls_ = SmoothnessClass{DirectionallySmooth{sigma}, m_ + H_ * (d_ + m_), bound};
        cls_.validate();
    }

    // sigma_dir of the per-step pair (xi_h, eta_h).
    [[nodiscard]] double joint_sigma_dir() const {
        if (in_.kind == NoiseKind::uniform && proc_.kind == NoiseKind::uniform && in_.width == proc_.width)
            return uniform_cube_sigma_dir(in_.width, d_ + m_);
        // Conservative: a projection's density is bounded by the sharpest coordinate.
        const double a = in_.kind == NoiseKind::uniform ? 1.0 / in_.width : truncated_gaussian_peak(in_.stddev, in_.width / 2.0);
        const double b = proc_.kind == NoiseKind::uniform ? 1.0 / proc_.width : truncated_gaussian_peak(proc_.stddev, proc_.width / 2.0);
        return 1.0 / (std::max(a, b) * std::sqrt(static_cast<double>(d_ + m_)));
    }

    [[nodiscard]] const SmoothnessClass& smoothness_class() const override { return cls_; }
    [[nodiscard]] std::string_view name() const override { return "planning_noise"; }

    [[nodiscard]] ContextSample draw(HistoryView h, CounterRng& rng) const override {
        PlanningContext c;
        c.x1.resize(m_);
        for (double& v : c.x1) v = rng.uniform(x1_lo_, x1_hi_);
        for (std::size_t s = 0; s < H_; ++s) {
            Vector xi(d_), eta(m_);
            for (double& v : xi) v = in_.draw_coordinate(rng);
            for (double& v : eta) v = proc_.draw_coordinate(rng);
            c.noises.xi.push_back(std::move(xi));
            c.noises.eta.push_back(std::move(eta));
        }
        c.scenario = period_ == 0 ? 0 : (h.contexts.size() / period_) % scenarios_;
        return encode_planning_context(c);
    }

private:
    std::size_t H_, m_, d_;
    double x1_lo_, x1_hi_;
    NoiseSpec in_, proc_;
    std::size_t scenarios_, period_;
    SmoothnessClass cls_;
};

// Max of |G(p) - G(p')|_1 / |p - p'|_1 over random plans, mode sequences,
// initial states and noises. Throws when it exceeds the declared L.
inline double fixed_mode_lipschitz_probe(const HybridSystemSpec& spec, std::size_t n_pairs, CounterRng rng,
                                         double noise_scale = 0.1) {
    double worst = 0.0;
    const ParamSpace ps = spec.plan_space();
    for (std::size_t i = 0; i < n_pairs; ++i) {
        Vector p(ps.dim()), q(ps.dim());
        for (std::size_t j = 0; j < ps.dim(); ++j) {
            p[j] = rng.uniform(ps.lower()[j], ps.upper()[j]);
            q[j] = rng.uniform(ps.lower()[j], ps.upper()[j]);
        }
        Noises nz = zero_noises(spec);
        for (auto& v : nz.xi) for (double& e : v) e = noise_scale * rng.uniform(-1.0, 1.0);
        for (auto& v : nz.eta) for (double& e : v) e = noise_scale * rng.uniform(-1.0, 1.0);
        Vector x1(spec.m);
        for (double& e : x1) e = noise_scale * rng.uniform(-1.0, 1.0);
        std::vector<std::size_t> modes(spec.H);
        for (auto& k : modes) k = static_cast<std::size_t>(rng.below(spec.K));
        const double dp = l1_distance(p, q);
        if (dp == 0.0) continue;
        const auto a = rollout_fixed_modes(spec, p, x1, nz, modes);
        const auto b = rollout_fixed_modes(spec, q, x1, nz, modes);
        worst = std::max(worst, l1_distance(state_map(a, spec.H), state_map(b, spec.H)) / dp);
    }
    if (worst > spec.L * (1.0 + 1e-6))
        throw std::invalid_argument("fixed_mode_lipschitz_probe: realized Lipschitz ratio exceeds the declared L");
    return worst;
}

// Probability that both plans realize the same full mode sequence under
// shared noise.
inline FrequencyEstimate mode_agreement_probability(const HybridSystemSpec& spec, std::span<const double> plan,
                                                    std::span<const double> plan2, const Distribution& contexts,
                                                    std::size_t n_mc, CounterRng rng) {
    std::size_t agree = 0;
    for (std::size_t i = 0; i < n_mc; ++i) {
        const PlanningContext c = decode_planning_context(spec, contexts(rng));
        if (rollout(spec, plan, c.x1, c.noises).modes == rollout(spec, plan2, c.x1, c.noises).modes) ++agree;
    }
    return make_frequency(agree, n_mc);
}

struct CouplingReport {
    std::size_t pairs = 0;
    std::size_t equal_mode_pairs = 0;
    std::size_t violations = 0;
    double worst_ratio = 0.0;  // |G - G'|_1 / (L |p - p'|_1) over equal-mode pairs
};

// Random plan pairs under shared noise drawn from `contexts`; whenever the
// realized mode sequences agree the state maps must be L-close. A relative
// slack of 1e-12 absorbs floating-point rounding in the rollout.
inline CouplingReport equal_mode_coupling(const HybridSystemSpec& spec, const Distribution& contexts,
                                          std::size_t n_pairs, CounterRng rng) {
    CouplingReport rep;
    const ParamSpace ps = spec.plan_space();
    for (std::size_t i = 0; i < n_pairs; ++i) {
        Vector p(ps.dim()), q(ps.dim());
        for (std::size_t j = 0; j < ps.dim(); ++j) {
            p[j] = rng.uniform(ps.lower()[j], ps.upper()[j]);
            q[j] = rng.uniform(ps.lower()[j], ps.upper()[j]);
        }
        const PlanningContext c = decode_planning_context(spec, contexts(rng));
        const auto a = rollout(spec, p, c.x1, c.noises);
        const auto b = rollout(spec, q, c.x1, c.noises);
        ++rep.pairs;
        if (a.modes != b.modes) continue;
        ++rep.equal_mode_pairs;
        const double lhs = l1_distance(state_map(a, spec.H), state_map(b, spec.H));
        const double rhs = spec.L * l1_distance(p, q);
        if (rhs > 0.0) rep.worst_ratio = std::max(rep.worst_ratio, lhs / rhs);
        if (lhs > rhs * (1.0 + 1e-12) + 1e-15) ++rep.violations;
    }
    return rep;
}

// The 1-D two-mode system: g1(x,u) = x + u, g2(x,u) = x - u, boundary rows
// (0,1,0) and (0,-1,0), so mode 1 is selected iff u >= 0.
inline HybridSystemSpec derived_1d_system(std::size_t H = 2, double plan_lo = -1.0, double plan_hi = 1.0,
                                          double D = 1.0, PlanningLoss loss = PlanningLoss::zero()) {
    HybridSystemSpec s;
    s.H = H;
    s.K = 2;
    s.m = 1;
    s.d = 1;
    for (std::size_t h = 0; h < H; ++h) {
        s.dynamics.push_back({affine_dynamics({{1.0, 1.0}, {0.0}}, 1), affine_dynamics({{1.0, -1.0}, {0.0}}, 1)});
        s.boundaries.push_back({Vector{0.0, 1.0, 0.0}, Vector{0.0, -1.0, 0.0}});
    }
    s.margin = 2.0;
    s.D = D;
    s.L = std::max(1.0, static_cast<double>(H) - 1.0);  // du_1 reaches x_2..x_H
    s.plan_lo = plan_lo;
    s.plan_hi = plan_hi;
    s.loss = std::move(loss);
    return s;
}

}  // namespace sftpl
