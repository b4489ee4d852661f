#include <gtest/gtest.h>

#include <cmath>

#include "sftpl/planning.hpp"
#include "sftpl/pwa_env.hpp"
#include "sftpl/smoothing.hpp"

using namespace sftpl;

TEST(Tournament, WorkedExamples) {
    // Pairs in order (1,2), (1,3), (2,3); modes are 0-based here.
    const Vector cyclic{0.5, -0.2, 0.7};
    EXPECT_EQ(tournament_winner(cyclic, 3), 0u);
    const Vector second{-1.0, -1.0, 1.0};
    EXPECT_EQ(tournament_winner(second, 3), 1u);
    const Vector one;
    EXPECT_EQ(tournament_winner(one, 1), 0u);
    EXPECT_THROW((void)tournament_winner(cyclic, 2), std::invalid_argument);
}

TEST(Tournament, ExactTieCreditsBoth) {
    const Vector ties{0.0};
    EXPECT_EQ(tournament_winner(ties, 2), 0u);
    const Vector all_zero{0.0, 0.0, 0.0};
    EXPECT_EQ(tournament_winner(all_zero, 3), 0u);
}

TEST(PairIndex, UpperTriangularOrder) {
    std::size_t p = 0;
    for (std::size_t k = 0; k < 5; ++k)
        for (std::size_t k2 = k + 1; k2 < 5; ++k2) EXPECT_EQ(pair_index(5, k, k2), p++);
    EXPECT_EQ(pair_count(5), p);
}

TEST(Link, OddMonotoneSlopes) {
    for (const Link& l : {Link::identity(), Link::linear(2.0), Link::tanh_augmented(0.5)}) {
        EXPECT_EQ(l(0.0), 0.0);
        EXPECT_NEAR(l(0.7), -l(-0.7), 1e-15);
        EXPECT_GT(l(0.2), l(0.1));
        EXPECT_LE(l.slope_lower(), l.slope_upper());
    }
}

TEST(Pwa, PlantedInstanceHasZeroLoss) {
    PwaConfig cfg = regression_config(1, 2, 1.0);
    const PiecewiseLossSpec spec(cfg);
    // Mode 0: y = 0.5 z, mode 1: y = -0.5 z, boundary z >= 0 -> mode 0.
    Vector theta{0.5, 0.0, -0.5, 0.0, 1.0, 0.0};
    const ParamPoint p(theta);
    for (double z : {-0.9, -0.1, 0.0, 0.3, 1.0}) {
        const ContextSample s{{z}, {z >= 0 ? 0.5 * z : -0.5 * z}};
        EXPECT_EQ(spec.eval(p, s), 0.0) << z;
    }
}

TEST(Pwa, LossBoundedAndRhoDominates) {
    PwaConfig cfg = regression_config(2, 3, 1.0, Formulation::tournament, 2);
    const PiecewiseLossSpec spec(cfg);
    CounterRng r(2);
    for (int i = 0; i < 5000; ++i) {
        auto pt = [&] {
            Vector v(spec.space().dim());
            for (std::size_t j = 0; j < v.size(); ++j) v[j] = r.uniform(spec.space().lower()[j], spec.space().upper()[j]);
            return spec.project_feasible(ParamPoint(v));
        };
        const ParamPoint a = pt(), b = pt();
        const ContextSample z{{r.uniform(-1, 1), r.uniform(-1, 1)}, {r.uniform(-2, 2), r.uniform(-2, 2)}};
        const double la = spec.eval(a, z), lb = spec.eval(b, z);
        ASSERT_GE(la, 0.0);
        ASSERT_LE(la, 1.0);
        ASSERT_LE(la - lb, spec.rho(a, b, z) + 1e-12);
        ASSERT_LE(spec.rho(a, b, z), spec.diameter_bound() + 1e-12);
    }
}

TEST(Pwa, ProjectionNormalizesFeaturePart) {
    PwaConfig cfg = regression_config(2, 2, 1.0);
    const PiecewiseLossSpec spec(cfg);
    Vector v(spec.space().dim(), 0.0);
    const std::size_t off = spec.space().dim_continuous();
    v[off] = 0.3;
    v[off + 1] = 0.4;
    v[off + 2] = 0.9;
    const ParamPoint p = spec.project_feasible(ParamPoint(v));
    EXPECT_NEAR(p[off], 0.6, 1e-15);
    EXPECT_NEAR(p[off + 1], 0.8, 1e-15);
    EXPECT_DOUBLE_EQ(p[off + 2], 1.0);  // bias 1.8 clamped into the box
    // Mode decisions are scale invariant for the tournament.
    const ContextSample z{{0.2, -0.7}, {0.0}};
    EXPECT_EQ(spec.mode(ParamPoint(v), z), spec.mode(p, z));
}

TEST(Pwa, ArgmaxFormulation) {
    PwaConfig cfg = regression_config(1, 2, 1.0, Formulation::argmax);
    cfg.margin = 0.5;
    const PiecewiseLossSpec spec(cfg);
    const Vector theta_d{1.0, 0.0, -1.0, 0.0};
    const Vector pos{0.4}, neg{-0.4};
    EXPECT_EQ(spec.mode_argmax(theta_d, pos), 0u);
    EXPECT_EQ(spec.mode_argmax(theta_d, neg), 1u);
    EXPECT_THROW((void)spec.mode_tournament(theta_d, pos), std::invalid_argument);
}

TEST(Pwa, RejectsNonLipschitzModeLoss) {
    PwaConfig cfg = regression_config(1, 1, 1.0);
    cfg.mode_losses[0] = std::make_shared<ClippedSquaredError>(1, 1, true, 1.0, 10.0);
    EXPECT_THROW(PiecewiseLossSpec{cfg}, std::invalid_argument);
}

TEST(Pwa, FlipRateMatchesIntervalLengthIn1D) {
    // Boundaries z >= t and z >= t' on uniform [0,1]: flip rate |t - t'|.
    PwaConfig cfg = regression_config(1, 2, 1.0);
    const PiecewiseLossSpec spec(cfg);
    auto adv = std::make_shared<UniformBoxAdversary>(ContextBox{1, 0.0, 1.0});
    const Distribution dist = freeze(adv);
    const Vector a{1.0, -0.3}, b{1.0, -0.45};
    const auto f = mode_flip_rate(spec, a, b, dist, 100000, CounterRng(4));
    EXPECT_NEAR(f.rate, 0.15, 3.0 * f.standard_error + 1e-3);
}

namespace {

HybridSystemSpec quad_system(std::size_t H = 2) {
    auto s = derived_1d_system(H, -1.0, 1.0, 2.0, PlanningLoss::quadratic_tracking({{0.0}, {0.0}}, 0.1));
    s.validate();
    return s;
}

}  // namespace

TEST(Planning, HandSimulatedRollout) {
    const auto s = quad_system();
    const Vector plan{1.0, -1.0}, x1{0.0};
    const auto tr = rollout(s, plan, x1, zero_noises(s));
    EXPECT_EQ(tr.modes, (std::vector<std::size_t>{0, 1}));
    ASSERT_EQ(tr.x.size(), 3u);
    EXPECT_EQ(tr.x[0][0], 0.0);
    EXPECT_EQ(tr.x[1][0], 1.0);
    EXPECT_EQ(tr.x[2][0], 2.0);
}

TEST(Planning, ForcedModes) {
    const auto s = quad_system();
    const Vector plan{1.0, -1.0}, x1{0.0};
    const auto tr = rollout_fixed_modes(s, plan, x1, zero_noises(s), {1, 1});
    EXPECT_EQ(tr.x[1][0], -1.0);
    EXPECT_EQ(tr.x[2][0], 0.0);
    EXPECT_THROW((void)rollout_fixed_modes(s, plan, x1, zero_noises(s), {0}), std::invalid_argument);
}

TEST(Planning, QuadraticTrackingByHand) {
    const auto s = quad_system();
    const Vector plan{1.0, -1.0}, x1{0.0};
    const auto tr = rollout(s, plan, x1, zero_noises(s));
    // x_1 = 0, x_2 = 1 against reference 0: 0.1 * (0 + 1).
    EXPECT_NEAR(tr.loss, 0.1, 1e-15);
}

TEST(Planning, LinearSystemLipschitzProbe) {
    HybridSystemSpec s;
    s.H = 2;
    s.K = 1;
    s.m = 1;
    s.d = 1;
    for (int h = 0; h < 2; ++h) {
        s.dynamics.push_back({affine_dynamics({{1.0, 1.0}, {0.0}}, 1)});
        s.boundaries.push_back({Vector{0.0, 1.0, 0.0}});
    }
    s.margin = 1.0;
    s.L = 3.0;
    const double ratio = fixed_mode_lipschitz_probe(s, 2000, CounterRng(1));
    EXPECT_LE(ratio, 3.0);
    s.L = 0.5;
    EXPECT_THROW((void)fixed_mode_lipschitz_probe(s, 2000, CounterRng(1)), std::invalid_argument);
}

TEST(Planning, ContextRoundTrip) {
    const auto s = quad_system();
    PlanningContext c{{0.1}, Noises{{{0.2}, {0.3}}, {{-0.1}, {0.05}}}, 0};
    const auto back = decode_planning_context(s, encode_planning_context(c));
    EXPECT_EQ(back.x1, c.x1);
    EXPECT_EQ(back.noises.xi, c.noises.xi);
    EXPECT_EQ(back.noises.eta, c.noises.eta);
}

TEST(Planning, ValidationRejectsBadSystems) {
    auto s = quad_system();
    s.boundaries[0][0] = Vector{0.0, 2.0, 0.0};
    EXPECT_THROW(s.validate(), std::invalid_argument);
    auto t = quad_system();
    t.margin = 5.0;
    EXPECT_THROW(t.validate(), std::invalid_argument);
}

TEST(Planning, EqualModeCouplingHolds) {
    const auto s = derived_1d_system(3, -0.5, 0.5, 1.0);
    const Distribution dist = [&](CounterRng& r) {
        PlanningContext c{{r.uniform(-0.1, 0.1)}, zero_noises(s), 0};
        for (auto& v : c.noises.xi) v[0] = r.uniform(-0.2, 0.2);
        for (auto& v : c.noises.eta) v[0] = r.uniform(-0.2, 0.2);
        return encode_planning_context(c);
    };
    const auto rep = equal_mode_coupling(s, dist, 20000, CounterRng(3));
    EXPECT_GT(rep.equal_mode_pairs, 1000u);
    EXPECT_EQ(rep.violations, 0u);
    EXPECT_LE(rep.worst_ratio, 1.0 + 1e-9);
}

TEST(Planning, AgreementIsOneForIdenticalPlans) {
    const auto s = quad_system();
    const Distribution dist = [&](CounterRng& r) {
        PlanningContext c{{0.0}, zero_noises(s), 0};
        for (auto& v : c.noises.xi) v[0] = r.uniform(-0.2, 0.2);
        return encode_planning_context(c);
    };
    const Vector p{0.05, -0.1};
    EXPECT_EQ(mode_agreement_probability(s, p, p, dist, 1000, CounterRng(1)).rate, 1.0);
}
