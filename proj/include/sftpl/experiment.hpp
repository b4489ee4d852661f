#pragma once

#include <chrono>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sftpl/analysis.hpp"
#include "sftpl/config.hpp"
#include "sftpl/ftpl.hpp"
#include "sftpl/io.hpp"
#include "sftpl/oracle.hpp"
#include "sftpl/planning.hpp"
#include "sftpl/pwa_env.hpp"
#include "sftpl/smoothing.hpp"
#include "sftpl/threshold.hpp"

namespace sftpl::experiment {

using config::ConfigError;
using config::ExperimentConfig;

struct Environment {
    std::shared_ptr<const LossSpec> loss;
    std::shared_ptr<const PiecewiseLossSpec> pwa;
    std::shared_ptr<const PlanningEnv> planning;
    std::shared_ptr<const ThresholdEnv> threshold;

    [[nodiscard]] const PseudoMetricSpec& metric() const { return *loss->metric(); }
    [[nodiscard]] const HybridSystemSpec& system() const { return planning->scenario(0); }
};

inline Link make_link(const config::LinkConfig& l) {
    if (l.kind == "linear") return Link::linear(l.param);
    if (l.kind == "tanh_augmented") return Link::tanh_augmented(l.param);
    return Link::identity();
}

inline NoiseSpec make_noise(const config::NoiseConfig& n) {
    NoiseSpec s{n.kind == "uniform" ? NoiseKind::uniform : NoiseKind::truncated_gaussian, n.width, n.stddev};
    s.validate();
    return s;
}

// Sup of |x_h|_1 and |u_h|_1 for the derived system: |x_{h+1}| <= |x_h| + |u_h| + |eta_h|.
inline double derived_state_bound(const config::EnvironmentConfig& e, const config::AdversaryConfig& a) {
    const double u = std::max(std::abs(e.plan_lo), std::abs(e.plan_hi)) + a.input_noise.width / 2.0;
    double x = std::max(std::abs(a.x1_lo), std::abs(a.x1_hi));
    double D = std::max(u, x);
    for (std::size_t h = 1; h < e.horizon; ++h) {
        x += u + a.process_noise.width / 2.0;
        D = std::max(D, x);
    }
    return D;
}

inline HybridSystemSpec make_system(const ExperimentConfig& c) {
    const auto& e = c.environment;
    const auto& l = e.loss;
    auto refs = [&](const std::vector<std::vector<double>>& r, const char* key) {
        if (r.empty()) return std::vector<Vector>(e.horizon);
        if (r.size() != e.horizon)
            throw ConfigError(std::string("/environment/loss/") + key, "needs one entry per planning step");
        for (std::size_t h = 0; h < r.size(); ++h)
            if (!r[h].empty() && r[h].size() != 1)
                throw ConfigError(std::string("/environment/loss/") + key + "/" + std::to_string(h),
                                  "the derived system is one-dimensional");
        return std::vector<Vector>(r.begin(), r.end());
    };
    const double D = e.D > 0.0 ? e.D : derived_state_bound(e, c.adversary);
    PlanningLoss loss = PlanningLoss::zero();
    if (l.kind == "scaled_l1") loss = PlanningLoss::scaled_l1(D, e.horizon);
    else if (l.kind == "l1_tracking") loss = PlanningLoss::l1_tracking(refs(l.x_ref, "x_ref"), refs(l.u_ref, "u_ref"), l.wx, l.wu);
    else if (l.kind == "quadratic_tracking") loss = PlanningLoss::quadratic_tracking(refs(l.x_ref, "x_ref"), l.scale);
    HybridSystemSpec s = derived_1d_system(e.horizon, e.plan_lo, e.plan_hi, D, std::move(loss));
    if (e.state_bound > 0.0) s.state_bound = e.state_bound;
    return s;
}

inline Environment build_environment(const ExperimentConfig& c) {
    const auto& e = c.environment;
    Environment env;
    if (e.kind == "threshold") {
        env.threshold = std::make_shared<ThresholdEnv>(e.lo, e.hi);
        env.loss = env.threshold;
        return env;
    }
    if (e.kind == "planning") {
        env.planning = std::make_shared<PlanningEnv>(std::vector<HybridSystemSpec>{make_system(c)});
        env.loss = env.planning;
        return env;
    }
    const Formulation f = e.kind == "pwa_margin" ? Formulation::argmax : Formulation::tournament;
    const double B = std::max(std::abs(c.adversary.box_lo), std::abs(c.adversary.box_hi));
    PwaConfig cfg = regression_config(e.context_dim, e.modes, B, f, e.outputs, e.bias);
    cfg.link = make_link(e.link);
    cfg.boundary = e.kind == "polynomial" ? BoundaryKind::polynomial : BoundaryKind::affine;
    cfg.degree = e.degree;
    cfg.margin = e.margin;
    cfg.continuous_lo = e.continuous_lo;
    cfg.continuous_hi = e.continuous_hi;
    cfg.discrete_lo = e.discrete_lo;
    cfg.discrete_hi = e.discrete_hi;
    env.pwa = std::make_shared<PiecewiseLossSpec>(std::move(cfg));
    env.loss = env.pwa;
    return env;
}

inline LabelFn make_labels(const ExperimentConfig& c, const Environment& env) {
    const auto& l = c.adversary.labels;
    if (env.planning) return {};
    if (l.kind == "threshold") {
        if (!env.threshold) throw ConfigError("/adversary/labels/kind", "threshold labels need the threshold environment");
        return threshold_labels(l.theta_star, l.flip);
    }
    if (l.kind == "planted") {
        if (!env.pwa) throw ConfigError("/adversary/labels/kind", "planted labels need a piecewise environment");
        const ParamSpace& s = env.pwa->space();
        CounterRng r(l.seed);
        Vector v(s.dim());
        for (std::size_t i = 0; i < s.dim(); ++i) v[i] = r.uniform(s.lower()[i], s.upper()[i]);
        return planted_pwa_labels(env.pwa, env.pwa->project_feasible(ParamPoint(v)), l.noise_std);
    }
    if (env.threshold) throw ConfigError("/adversary/labels/kind", "the threshold environment needs labels");
    return {};
}

// Feature the tracking adversary centres on: the threshold itself, or the
// point of the first boundary closest to the origin.
inline MeanShiftAdversary::ThetaToFeature tracking_feature(const Environment& env) {
    if (env.threshold) return [](const ParamPoint& t) { return Vector{t[0]}; };
    auto spec = env.pwa;
    return [spec](const ParamPoint& t) {
        const std::size_t d = spec->context_dim();
        Vector f(d, 0.0);
        if (spec->config().boundary != BoundaryKind::affine) return f;
        auto w = spec->boundary_block(t.discrete(spec->space()), 0);
        double n2 = 0.0;
        for (std::size_t i = 0; i < d; ++i) n2 += w[i] * w[i];
        if (n2 > 0.0)
            for (std::size_t i = 0; i < d; ++i) f[i] = -w[d] * w[i] / n2;
        return f;
    };
}

inline std::shared_ptr<const AdversaryStrategy> build_adversary(const ExperimentConfig& c, const Environment& env,
                                                                const std::string& kind) {
    const auto& a = c.adversary;
    if (env.planning) {
        if (kind != "planning_noise") throw ConfigError("/adversary/kind", "the planning environment uses planning_noise");
        return std::make_shared<PlanningAdversary>(env.system(), a.x1_lo, a.x1_hi, make_noise(a.input_noise),
                                                   make_noise(a.process_noise));
    }
    if (kind == "planning_noise") throw ConfigError("/adversary/kind", "planning_noise needs the planning environment");
    const ContextBox box{env.loss->context_dim(), a.box_lo, a.box_hi};
    LabelFn labels = make_labels(c, env);
    if (kind == "uniform") return std::make_shared<UniformBoxAdversary>(box, std::move(labels));
    try {
        const NoiseSpec noise = make_noise(a.noise);
        if (kind == "mean_shift") {
            const auto policy = a.policy == "sweep" ? MeanShiftAdversary::Policy::sweep : MeanShiftAdversary::Policy::track_learner;
            return std::make_shared<MeanShiftAdversary>(box, noise, policy, a.period, tracking_feature(env), std::move(labels));
        }
        return std::make_shared<GreedyAdversary>(env.loss, box, noise, a.candidates, a.probes, std::move(labels), a.labels.seed);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("/adversary", e.what());
    }
}

// Polynomial boundaries need a polynomial smoothness class; it is estimated
// from adversary samples at an empty history.
inline SmoothnessClass class_for(const Environment& env, const AdversaryStrategy& adv) {
    const SmoothnessClass& cls = adv.smoothness_class();
    if (!env.pwa || env.pwa->config().boundary != BoundaryKind::polynomial) return cls;
    const unsigned r = env.pwa->config().degree;
    const std::size_t d = env.pwa->context_dim();
    CounterRng rng(0xB0B);
    std::vector<ContextSample> samples;
    for (std::size_t i = 0; i < 20000; ++i) {
        CounterRng s = rng.substream(Purpose::monte_carlo, i);
        samples.push_back(sample_context(adv, {}, s));
    }
    std::vector<Polynomial> tests;
    const std::size_t m = monomial_count(d, r);
    for (std::size_t k = 0; k < 16; ++k) {
        CounterRng s = rng.substream(Purpose::probes, k);
        Vector coeffs(m);
        for (double& v : coeffs) v = s.normal();
        tests.push_back(Polynomial(d, r, coeffs).normalized());
    }
    const Vector grid{0.01, 0.02, 0.05, 0.1};
    const auto est = estimate_polynomial_smoothness(samples, r, tests, grid);
    if (!(est.sigma_poly > 0.0)) throw std::runtime_error("polynomial smoothness estimate degenerate");
    return SmoothnessClass{PolynomiallySmooth{r, std::min(1.0, est.sigma_poly)}, cls.context_dim, cls.sup_bound};
}

inline std::unique_ptr<ErmSolver> build_solver(const config::SolverConfig& s, const Environment& env,
                                               const std::string& path) {
    if (s.kind == "exact") {
        if (!env.threshold) throw ConfigError(path + "/kind", "the exact solver supports the threshold environment only");
        return std::make_unique<ThresholdExactSolver>();
    }
    if (s.kind == "grid") {
        const double pts = std::pow(static_cast<double>(s.mesh), static_cast<double>(env.loss->space().dim()));
        if (pts > GridLayout::limit) throw ConfigError(path + "/mesh", "grid exceeds 1e7 points for this parameter dimension");
        return std::make_unique<GridSolver>(s.mesh, s.incremental);
    }
    if (!env.pwa) throw ConfigError(path + "/kind", "the alternating solver supports piecewise environments only");
    return std::make_unique<AlternatingSolver>(AlternatingSolver::Options{s.restarts, s.iters, s.seed, 0});
}

inline std::string resolved_tuning(const ExperimentConfig& c) {
    const std::string& t = c.learner.tuning;
    if (t != "auto") return t;
    const std::string& k = c.environment.kind;
    if (k == "polynomial") return "polynomial";
    if (k == "pwa_margin") return "margin";
    if (k == "planning") return "planning";
    return "affine";
}

inline HyperParams hyper_for(const ExperimentConfig& c, const Environment& env, const SmoothnessClass& cls,
                             std::size_t T_) {
    const std::string rule = resolved_tuning(c);
    if (rule == "explicit") {
        HyperParams h = explicit_hyper(c.learner.eta, c.learner.n);
        return h;
    }
    const double T = static_cast<double>(T_);
    const ParamSpace& s = env.loss->space();
    double K = 1, d = 1, A = 1, a = 1, gamma = 1;
    if (env.pwa) {
        K = static_cast<double>(env.pwa->modes());
        d = static_cast<double>(env.pwa->context_dim());
        A = env.pwa->config().link.slope_upper();
        a = env.pwa->config().link.slope_lower();
        gamma = env.pwa->config().margin;
    }
    const double D = s.l1_diameter() > 0.0 ? s.l1_diameter() : 1.0;
    const double B = cls.sup_bound > 0.0 ? cls.sup_bound : 1.0;
    HyperParams h;
    try {
        if (rule == "affine") {
            h = tune_affine(T, K, d, D, B, A, a, cls.sigma_dir());
        } else if (rule == "margin") {
            h = tune_margin(T, K, A, a, d, D, B, gamma, cls.sigma_dir());
        } else if (rule == "polynomial") {
            const auto* p = std::get_if<PolynomiallySmooth>(&cls.kind);
            if (!p) throw ConfigError("/learner/tuning", "polynomial tuning needs a polynomial environment");
            h = tune_polynomial(T, K, static_cast<double>(p->degree), d, D, B, p->sigma_poly);
        } else {
            if (!env.planning) throw ConfigError("/learner/tuning", "planning tuning needs the planning environment");
            const auto& sys = env.system();
            h = tune_planning(T, static_cast<double>(sys.d), static_cast<double>(sys.H), static_cast<double>(sys.K), sys.D,
                              sys.L, sys.margin, cls.sigma_dir());
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError("/learner/tuning", e.what());
    }
    if (c.learner.constant != 1.0) {
        HyperParams scaled = detail::capped(T, h.eta * c.learner.constant, std::sqrt(h.eta * c.learner.constant), h.rule_id);
        h = scaled;
    }
    h.constants.constant = c.learner.constant;
    return h;
}

struct Prepared {
    Environment env;
    std::shared_ptr<const AdversaryStrategy> adversary;
    SmoothnessClass cls;
};

inline Prepared prepare(const ExperimentConfig& c) {
    Prepared p;
    try {
        p.env = build_environment(c);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("/environment", e.what());
    }
    p.adversary = build_adversary(c, p.env, c.adversary.kind);
    p.cls = class_for(p.env, *p.adversary);
    // Validate solver choices up front so bad configs fail before any run.
    (void)build_solver(c.learner.solver, p.env, "/learner/solver");
    if (c.run.hindsight) (void)build_solver(*c.run.hindsight, p.env, "/run/hindsight");
    if (c.learner.algorithm == "lazy_ftpl_gp" && c.learner.solver.kind == "exact")
        throw ConfigError("/learner/solver/kind", "the Gaussian-process perturbation needs the grid or alternating solver");
    return p;
}

struct CellResult {
    std::size_t T = 0;
    std::uint64_t config_seed = 0;
    RunRecord record;
    HyperParams hyper;
    std::optional<RegretReport> regret;
    double mean_stability = 0.0;
    double wall_ms = 0.0;
    std::string error;
};

inline CellResult run_cell(const ExperimentConfig& c, const Prepared& p, std::size_t T, std::uint64_t seed,
                           std::uint64_t master) {
    const auto t0 = std::chrono::steady_clock::now();
    CellResult out;
    out.T = T;
    out.config_seed = seed;
    try {
        out.hyper = hyper_for(c, p.env, p.cls, T);
        auto solver = build_solver(c.learner.solver, p.env, "/learner/solver");
        RunOptions opt;
        opt.shared_successor = c.learner.shared_successor;
        opt.gp_anchors = c.learner.gp_anchors;
        if (c.learner.algorithm == "lazy_ftpl_gp") {
            opt.kind = PerturbationKind::gaussian_process;
            auto adv = p.adversary;
            opt.gp_base = [adv](CounterRng& r) { return sample_context(*adv, {}, r); };
        }
        out.record = run_lazy_ftpl(*p.env.loss, *p.adversary, *solver, out.hyper, T, derive_run_key(master, seed), opt);
        if (out.record.valid) {
            auto hs = build_solver(c.run.hindsight ? *c.run.hindsight : c.learner.solver, p.env, "/run/hindsight");
            out.regret = compute_regret(out.record, *p.env.loss, *hs);
            out.mean_stability = mean_stability(out.record, c.learner.shared_successor ? StabilityMode::shared : StabilityMode::played);
        } else {
            out.error = out.record.failure;
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        out.error = e.what();
        out.record.valid = false;
        out.record.failure = e.what();
    }
    out.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

// ---------------------------------------------------------------------------
// Validators behind `verify`

struct CheckRow {
    std::string check;
    std::string adversary;
    std::string detail;
    double estimate = 0.0;
    double bound = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    bool pass = false;
};

inline std::vector<std::shared_ptr<const AdversaryStrategy>> battery(const ExperimentConfig& c, const Environment& env) {
    std::vector<std::shared_ptr<const AdversaryStrategy>> out;
    for (const auto& k : c.verify.battery) out.push_back(build_adversary(c, env, k));
    return out;
}

// Pairs at l1-scale drawn log-uniformly between the configured fractions of
// the box; both points are mapped onto the feasible set.
inline std::pair<ParamPoint, ParamPoint> local_pair(const LossSpec& loss, double lo_frac, double hi_frac, CounterRng& r) {
    const ParamSpace& s = loss.space();
    Vector a(s.dim()), b(s.dim());
    for (std::size_t j = 0; j < s.dim(); ++j) a[j] = r.uniform(s.lower()[j], s.upper()[j]);
    ParamPoint pa = loss.project_feasible(ParamPoint(a));
    const double scale = std::exp(r.uniform(std::log(lo_frac), std::log(hi_frac)));
    for (std::size_t j = 0; j < s.dim(); ++j)
        b[j] = std::clamp(pa[j] + scale * s.range(j) * r.uniform(-1.0, 1.0), s.lower()[j], s.upper()[j]);
    for (std::size_t j = 0; j < s.dim(); ++j) a[j] = std::clamp(pa[j], s.lower()[j], s.upper()[j]);
    return {ParamPoint(a), loss.project_feasible(ParamPoint(b))};
}

inline std::vector<CheckRow> verify_isometry(const ExperimentConfig& c, const Prepared& p, std::uint64_t master) {
    std::vector<CheckRow> rows;
    const auto& v = c.verify;
    const auto advs = battery(c, p.env);
    for (std::size_t ai = 0; ai < advs.size(); ++ai) {
        const SmoothnessClass cls = class_for(p.env, *advs[ai]);
        auto iso = p.env.metric().isometry(cls);
        if (!iso && !v.alpha) {
            rows.push_back({"isometry", std::string(advs[ai]->name()), "no constants for this class", 0, 0, 0, 0, false});
            continue;
        }
        const double alpha = v.alpha ? *v.alpha : iso->alpha;
        const double beta = iso ? iso->beta : 1.0;
        const Distribution dist = freeze(advs[ai]);
        CounterRng root = CounterRng(master).substream(Purpose::probes, ai);
        for (std::size_t k = 0; k < v.pairs; ++k) {
            CounterRng pr = root.substream(k);
            auto [a, b] = local_pair(*p.env.loss, v.pair_scale_lo, v.pair_scale_hi, pr);
            CounterRng zr = pr.substream(Purpose::monte_carlo);
            stats::Accumulator acc;
            for (std::size_t i = 0; i < v.n_mc; ++i) acc.add(p.env.metric().rho(a, b, dist(zr)));
            const auto sm = acc.summary();
            const double bound = alpha * std::pow(l1_distance(a, b), beta);
            rows.push_back({"isometry", std::string(advs[ai]->name()), "pair " + std::to_string(k), sm.mean, bound,
                            sm.mean - stats::z95 * sm.standard_error, sm.mean + stats::z95 * sm.standard_error,
                            sm.mean <= bound + 3.0 * sm.standard_error});
        }
    }
    return rows;
}

inline std::vector<CheckRow> verify_modeflip(const ExperimentConfig& c, const Prepared& p, std::uint64_t master) {
    std::vector<CheckRow> rows;
    const auto& v = c.verify;
    const auto advs = battery(c, p.env);
    if (p.env.planning) {
        const HybridSystemSpec& sys = p.env.system();
        for (std::size_t ai = 0; ai < advs.size(); ++ai) {
            const Distribution dist = freeze(advs[ai]);
            CounterRng root = CounterRng(master).substream(Purpose::probes, ai);
            const CouplingReport cr = equal_mode_coupling(sys, dist, std::max<std::size_t>(v.n_mc, 1), root.substream(0));
            rows.push_back({"coupling", std::string(advs[ai]->name()),
                            std::to_string(cr.equal_mode_pairs) + " equal-mode pairs",
                            cr.worst_ratio, 1.0, 0, 0, cr.violations == 0});
            const double alpha = v.alpha ? *v.alpha : PlanningEnv::planning_alpha(sys, advs[ai]->smoothness_class().sigma_dir());
            for (std::size_t k = 0; k < v.pairs; ++k) {
                CounterRng pr = root.substream(k + 1);
                auto [a, b] = local_pair(*p.env.loss, v.pair_scale_lo, v.pair_scale_hi, pr);
                const FrequencyEstimate agree = mode_agreement_probability(sys, a.span(), b.span(), dist, v.n_mc, pr.substream(Purpose::monte_carlo));
                const double est = 1.0 - agree.rate;
                const double bound = alpha * l1_distance(a, b);
                rows.push_back({"modeflip", std::string(advs[ai]->name()), "pair " + std::to_string(k), est, bound,
                                1.0 - agree.ci.upper, 1.0 - agree.ci.lower, est <= bound + 3.0 * agree.standard_error});
            }
        }
        return rows;
    }
    if (!p.env.pwa) throw ConfigError("/environment/kind", "modeflip verification needs a piecewise or planning environment");
    const auto& spec = *p.env.pwa;
    const double A = spec.config().link.slope_upper(), a_ = spec.config().link.slope_lower();
    for (std::size_t ai = 0; ai < advs.size(); ++ai) {
        const SmoothnessClass& cls = advs[ai]->smoothness_class();
        if (!cls.is_directional()) {
            rows.push_back({"modeflip", std::string(advs[ai]->name()), "class is not directional", 0, 0, 0, 0, false});
            continue;
        }
        const double coef = v.alpha ? *v.alpha : A * cls.sup_bound / (a_ * cls.sigma_dir());
        const Distribution dist = freeze(advs[ai]);
        CounterRng root = CounterRng(master).substream(Purpose::probes, ai);
        for (std::size_t k = 0; k < v.pairs; ++k) {
            CounterRng pr = root.substream(k);
            auto [a, b] = local_pair(spec, v.pair_scale_lo, v.pair_scale_hi, pr);
            const auto da = a.discrete(spec.space()), db = b.discrete(spec.space());
            const FrequencyEstimate f = mode_flip_rate(spec, da, db, dist, v.n_mc, pr.substream(Purpose::monte_carlo));
            const double bound = coef * l1_distance(da, db);
            rows.push_back({"modeflip", std::string(advs[ai]->name()), "pair " + std::to_string(k), f.rate, bound,
                            f.ci.lower, f.ci.upper, f.rate <= bound + 3.0 * f.standard_error});
        }
    }
    return rows;
}

// The battery's joint class: smallest sigma, largest bound.
inline SmoothnessClass battery_class(const Environment& env, const std::vector<std::shared_ptr<const AdversaryStrategy>>& advs) {
    SmoothnessClass joint = class_for(env, *advs.front());
    for (const auto& a : advs) {
        const SmoothnessClass c = class_for(env, *a);
        joint.sup_bound = std::max(joint.sup_bound, c.sup_bound);
        if (auto* d = std::get_if<DirectionallySmooth>(&joint.kind)) {
            if (c.is_directional()) d->sigma_dir = std::min(d->sigma_dir, c.sigma_dir());
        } else if (auto* pp = std::get_if<PolynomiallySmooth>(&joint.kind)) {
            if (const auto* q = std::get_if<PolynomiallySmooth>(&c.kind)) pp->sigma_poly = std::min(pp->sigma_poly, q->sigma_poly);
        }
    }
    return joint;
}

inline std::vector<CheckRow> verify_bracket_battery(const ExperimentConfig& c, const Prepared& p, std::uint64_t master) {
    std::vector<CheckRow> rows;
    const auto& v = c.verify;
    const auto advs = battery(c, p.env);
    std::vector<NamedDistribution> named;
    for (const auto& a : advs) named.push_back({std::string(a->name()), freeze(a)});
    const SmoothnessClass joint = battery_class(p.env, advs);
    for (std::size_t i = 0; i < v.epsilons.size(); ++i) {
        const double eps = v.epsilons[i];
        GeneralizedBracket b = v.single_cell ? single_cell_bracket(p.env.loss->space(), p.env.metric(), eps)
                                             : build_generalized_bracket(p.env.loss->space(), p.env.metric(),
                                                                         recipe_for(*p.env.loss, joint), eps);
        const BracketReport rep = verify_bracket(b, *p.env.loss, p.env.metric(), named, v.cells, v.n_mc,
                                                 CounterRng(master).substream(Purpose::cells, i));
        rows.push_back({"bracket", rep.worst.adversary,
                        b.recipe + " eps_tilde=" + io::format_double(b.eps_tilde) + " log_count=" + io::format_double(b.log_count()) +
                            "; " + rep.scope,
                        rep.worst.mean, eps, rep.worst.mean - stats::z95 * rep.worst.standard_error,
                        rep.worst.mean + stats::z95 * rep.worst.standard_error, rep.pass});
    }
    return rows;
}

inline std::vector<CheckRow> verify_concentration(const ExperimentConfig& c, const Prepared& p, std::uint64_t master) {
    std::vector<CheckRow> rows;
    const auto& v = c.verify;
    const auto advs = battery(c, p.env);
    const ParamSpace& s = p.env.loss->space();
    auto pairs = grid_pairs(s, v.grid_points);
    if (pairs.size() > 256) {
        std::vector<std::pair<ParamPoint, ParamPoint>> keep;
        const std::size_t stride = (pairs.size() + 255) / 256;
        for (std::size_t i = 0; i < pairs.size(); i += stride) keep.push_back(pairs[i]);
        pairs = std::move(keep);
    }
    Vector mid(s.dim());
    for (std::size_t j = 0; j < s.dim(); ++j) mid[j] = 0.5 * (s.lower()[j] + s.upper()[j]);
    for (std::size_t ai = 0; ai < advs.size(); ++ai) {
        const SmoothnessClass cls = class_for(p.env, *advs[ai]);
        auto iso = p.env.metric().isometry(cls);
        if (!iso && !v.alpha) {
            rows.push_back({"concentration", std::string(advs[ai]->name()), "no constants for this class", 0, 0, 0, 0, false});
            continue;
        }
        const double alpha = v.alpha ? *v.alpha : iso->alpha;
        const double beta = iso ? iso->beta : 1.0;
        const GeneralizedBracket b = build_generalized_bracket(s, p.env.metric(), recipe_for(*p.env.loss, cls), v.epsilon);
        ConcentrationTrial t;
        t.n = v.n;
        t.adversary = advs[ai];
        t.metric = &p.env.metric();
        t.D_rho = p.env.metric().diameter_bound();
        t.epsilon = v.epsilon;
        t.delta = v.delta;
        t.bracket_size = std::max(1.0, b.count());
        t.trials = v.trials;
        t.pairs = pairs;
        t.sup_expectation = [alpha, beta](const ParamPoint& x, const ParamPoint& y) {
            return std::min(alpha * std::pow(l1_distance(x, y), beta), std::numeric_limits<double>::max());
        };
        t.played = p.env.loss->project_feasible(ParamPoint(mid));
        const ConcentrationReport rep = check_concentration(t, CounterRng(master).substream(Purpose::monte_carlo, ai));
        rows.push_back({"concentration", std::string(advs[ai]->name()),
                        "n=" + std::to_string(v.n) + " max_lhs_over_rhs=" + io::format_double(rep.max_ratio),
                        rep.violations.rate, v.delta, rep.violations.ci.lower, rep.violations.ci.upper, rep.pass});
    }
    return rows;
}

}  // namespace sftpl::experiment
