#include <gtest/gtest.h>

#include <cmath>

#include "sftpl/analysis.hpp"
#include "sftpl/ftpl.hpp"
#include "sftpl/oracle.hpp"
#include "sftpl/pwa_env.hpp"
#include "sftpl/threshold.hpp"

using namespace sftpl;

namespace {

std::vector<ContextSample> labeled(std::initializer_list<std::pair<double, double>> xs) {
    std::vector<ContextSample> out;
    for (auto [x, y] : xs) out.push_back({{x}, {y}});
    return out;
}

// Quadratic loss (theta - 0.5)^2 on [0,1], ignores the context.
class Bowl final : public LossSpec {
public:
    [[nodiscard]] const ParamSpace& space() const override { return space_; }
    [[nodiscard]] double eval(const ParamPoint& t, const ContextSample&) const override { return (t[0] - 0.5) * (t[0] - 0.5); }
    [[nodiscard]] std::string_view name() const override { return "bowl"; }
    [[nodiscard]] std::size_t context_dim() const override { return 1; }

private:
    ParamSpace space_ = ParamSpace::box(1, 0.0, 1.0);
};

class Constant final : public LossSpec {
public:
    [[nodiscard]] const ParamSpace& space() const override { return space_; }
    [[nodiscard]] double eval(const ParamPoint&, const ContextSample&) const override { return 0.25; }
    [[nodiscard]] std::string_view name() const override { return "constant"; }
    [[nodiscard]] std::size_t context_dim() const override { return 1; }

private:
    ParamSpace space_ = ParamSpace::box(2, -1.0, 1.0);
};

}  // namespace

TEST(ThresholdEnv, LossAndRho) {
    const ThresholdEnv env;
    const ContextSample z{{0.4}, {1.0}};
    EXPECT_EQ(env.eval(ParamPoint{0.3}, z), 0.0);
    EXPECT_EQ(env.eval(ParamPoint{0.5}, z), 1.0);
    EXPECT_EQ(env.rho(ParamPoint{0.3}, ParamPoint{0.5}, z), 1.0);
    EXPECT_EQ(env.rho(ParamPoint{0.1}, ParamPoint{0.2}, z), 0.0);
    EXPECT_THROW((void)env.eval(ParamPoint{0.3}, ContextSample{{0.4}, {}}), std::invalid_argument);
}

TEST(ExactThreshold, ThreePointExample) {
    const ThresholdEnv env;
    const auto data = labeled({{0.2, 1}, {0.4, -1}, {0.6, 1}});
    const auto r = erm_exact_threshold(ErmProblem{data, &env, nullptr});
    EXPECT_EQ(r.objective_value, 1.0);
    EXPECT_DOUBLE_EQ(r.theta_star[0], 0.1);
    EXPECT_EQ(r.gamma_kind, GammaKind::exact);
}

TEST(ExactThreshold, EmptyDataset) {
    const ThresholdEnv env;
    const std::vector<ContextSample> none;
    const auto r = erm_exact_threshold(ErmProblem{none, &env, nullptr});
    EXPECT_EQ(r.objective_value, 0.0);
    EXPECT_EQ(r.theta_star[0], 0.0);
    PerturbationDraw d;
    d.variant = LinearExponential{1.0, Vector{0.7}};
    const auto q = erm_exact_threshold(ErmProblem{none, &env, &d});
    EXPECT_EQ(q.theta_star[0], 1.0);
}

TEST(ExactThreshold, RejectsOtherLosses) {
    const Bowl bowl;
    const std::vector<ContextSample> none;
    EXPECT_THROW((void)erm_exact_threshold(ErmProblem{none, &bowl, nullptr}), std::invalid_argument);
}

TEST(ExactThreshold, MatchesFineGridOnRandomInstances) {
    const ThresholdEnv env;
    CounterRng r(17);
    for (int inst = 0; inst < 100; ++inst) {
        std::vector<ContextSample> data;
        const std::size_t n = 1 + r.below(12);
        for (std::size_t i = 0; i < n; ++i) data.push_back({{r.uniform()}, {r.bernoulli(0.5) ? 1.0 : -1.0}});
        PerturbationDraw d;
        d.variant = LinearExponential{r.uniform(0.0, 3.0), Vector{r.exponential()}};
        const ErmProblem p{data, &env, &d};
        const double exact = erm_exact_threshold(p).objective_value;
        double best = INFINITY;
        for (int g = 0; g <= 100000; ++g) best = std::min(best, perturbed_objective(p, ParamPoint{g / 100000.0}));
        ASSERT_LE(exact, best + 1e-12) << "instance " << inst;
        const auto& le = std::get<LinearExponential>(d.variant);
        ASSERT_GE(exact, best - le.eta * le.xi[0] * 1e-5 - 1e-12) << "instance " << inst;
    }
}

TEST(GridSolver, ConstantLossPicksFirstPoint) {
    const Constant c;
    const auto data = labeled({{0.0, 0}, {0.0, 0}});
    const auto r = erm_grid(ErmProblem{data, &c, nullptr}, 5);
    EXPECT_EQ(r.theta_star, (ParamPoint{-1.0, -1.0}));
    EXPECT_DOUBLE_EQ(r.objective_value, 0.5);
}

TEST(GridSolver, SymmetricQuadraticHitsOptimum) {
    const Bowl b;
    const auto data = labeled({{0.0, 0}});
    EXPECT_DOUBLE_EQ(erm_grid(ErmProblem{data, &b, nullptr}, 101).theta_star[0], 0.5);
}

TEST(GridSolver, AgreesWithExactOnThreshold) {
    const ThresholdEnv env;
    const auto data = labeled({{0.2, 1}, {0.4, -1}, {0.6, 1}});
    EXPECT_EQ(erm_grid(ErmProblem{data, &env, nullptr}, 10000).objective_value, 1.0);
}

TEST(GridSolver, GuardRejectsHugeGrids) {
    const PiecewiseLossSpec spec(regression_config(3, 3, 1.0));
    const std::vector<ContextSample> none;
    EXPECT_THROW((void)erm_grid(ErmProblem{none, &spec, nullptr}, 50), std::invalid_argument);
}

TEST(BestInHindsight, ThresholdExample) {
    const ThresholdEnv env;
    ThresholdExactSolver s;
    EXPECT_EQ(best_in_hindsight(labeled({{0.2, 1}, {0.4, -1}, {0.6, 1}}), env, s).objective_value, 1.0);
    EXPECT_EQ(best_in_hindsight({}, env, s).objective_value, 0.0);
    EXPECT_EQ(best_in_hindsight(labeled({{0.2, -1}, {0.8, 1}}), env, s).objective_value, 0.0);
}

TEST(Alternating, SingleModeMatchesLeastSquares) {
    PwaConfig cfg = regression_config(1, 1, 1.0);
    cfg.continuous_lo = -5.0;
    cfg.continuous_hi = 5.0;
    const PiecewiseLossSpec spec(cfg);
    // y = 0.3 x - 0.1 plus small residuals; clipping is inactive.
    std::vector<ContextSample> data;
    const double xs[] = {-1.0, -0.5, 0.0, 0.5, 1.0};
    const double noise[] = {0.01, -0.02, 0.0, 0.02, -0.01};
    for (int i = 0; i < 5; ++i) data.push_back({{xs[i]}, {0.3 * xs[i] - 0.1 + noise[i]}});
    double mx = 0, my = 0, sxx = 0, sxy = 0;
    for (const auto& z : data) { mx += z.z[0] / 5; my += z.payload[0] / 5; }
    for (const auto& z : data) { sxx += (z.z[0] - mx) * (z.z[0] - mx); sxy += (z.z[0] - mx) * (z.payload[0] - my); }
    const double slope = sxy / sxx, icpt = my - slope * mx;
    const auto r = erm_alternating(ErmProblem{data, &spec, nullptr}, 2, 50, 1);
    const auto w = spec.mode_block(r.theta_star, 0);
    EXPECT_NEAR(w[0], slope, 1e-8);
    EXPECT_NEAR(w[1], icpt, 1e-8);
}

TEST(Alternating, EmptyDatasetIsZero) {
    const PiecewiseLossSpec spec(regression_config(2, 2, 1.0));
    EXPECT_EQ(erm_alternating(ErmProblem{{}, &spec, nullptr}, 1, 10, 0).objective_value, 0.0);
}

TEST(Alternating, NoWorseThanGridPlusModulus) {
    PwaConfig cfg = regression_config(2, 2, 1.0, Formulation::tournament, 1, false);
    const PiecewiseLossSpec spec(cfg);
    // Planted: mode 0 when z0 + z1 >= 0 with y = 0.5 z0, else y = -0.5 z1.
    CounterRng r(3);
    std::vector<ContextSample> data;
    for (int i = 0; i < 20; ++i) {
        const double a = r.uniform(-1, 1), b = r.uniform(-1, 1);
        data.push_back({{a, b}, {a + b >= 0 ? 0.5 * a : -0.5 * b}});
    }
    const ErmProblem p{data, &spec, nullptr};
    const auto alt = erm_alternating(p, 6, 60, 2);
    GridSolver grid(5);
    const auto g = grid.solve(p);
    // Each loss is 1-Lipschitz in l1, so a grid point is within half a cell of any optimum.
    EXPECT_LE(alt.objective_value, g.objective_value + g.gamma * static_cast<double>(data.size()));
    EXPECT_EQ(alt.gamma_kind, GammaKind::uncertified);
}

TEST(Alternating, RestartsGuard) {
    EXPECT_THROW(AlternatingSolver(AlternatingSolver::Options{0, 10, 0, 0}), std::invalid_argument);
}

TEST(Schedule, EpochArithmetic) {
    const EpochSchedule s(10, 3);
    EXPECT_EQ(s.num_epochs(), 4u);
    EXPECT_EQ(s.first_step(4), 10u);
    EXPECT_EQ(s.last_step(4), 10u);
    EXPECT_EQ(epoch_of(7, s), 3u);
}

TEST(LazyFtpl, OracleCallsForT10N5) {
    ThresholdEnv env;
    UniformBoxAdversary adv(ContextBox{1, 0.0, 1.0}, threshold_labels(0.3, 0.0));
    ThresholdExactSolver s;
    const auto rec = run_lazy_ftpl(env, adv, s, explicit_hyper(5.0, 5), 10, 1);
    EXPECT_EQ(rec.oracle_call_count, 2u);
    EXPECT_EQ(rec.steps.size(), 10u);
}

TEST(LazyFtpl, OracleCallsMatchCeilingEverywhere) {
    ThresholdEnv env;
    UniformBoxAdversary adv(ContextBox{1, 0.0, 1.0}, threshold_labels(0.3, 0.1));
    ThresholdExactSolver s;
    for (std::size_t T = 1; T <= 50; ++T)
        for (std::size_t n = 1; n <= 10; ++n)
            ASSERT_EQ(run_lazy_ftpl(env, adv, s, explicit_hyper(3.0, n), T, T * 31 + n).oracle_call_count, (T + n - 1) / n);
}

TEST(LazyFtpl, ZeroEtaIsFollowTheLeader) {
    ThresholdEnv env;
    UniformBoxAdversary adv(ContextBox{1, 0.0, 1.0}, threshold_labels(0.3, 0.0));
    ThresholdExactSolver s;
    const auto rec = run_lazy_ftpl(env, adv, s, explicit_hyper(0.0, 1), 2, 4);
    ASSERT_EQ(rec.epochs.size(), 2u);
    const auto leader = erm_exact_threshold(ErmProblem{std::span(rec.contexts).first(1), &env, nullptr});
    EXPECT_EQ(rec.epochs[1].theta, leader.theta_star);
}

TEST(LazyFtpl, DeterministicPerSeed) {
    ThresholdEnv env;
    UniformBoxAdversary adv(ContextBox{1, 0.0, 1.0}, threshold_labels(0.3, 0.2));
    ThresholdExactSolver s;
    const auto a = run_lazy_ftpl(env, adv, s, explicit_hyper(20.0, 4), 200, 9);
    const auto b = run_lazy_ftpl(env, adv, s, explicit_hyper(20.0, 4), 200, 9);
    EXPECT_EQ(a.cumulative_loss, b.cumulative_loss);
    EXPECT_EQ(a.contexts, b.contexts);
}

TEST(LazyFtpl, BeatsMidpointPolicyOnSameStream) {
    ThresholdEnv env;
    UniformBoxAdversary adv(ContextBox{1, 0.0, 1.0}, threshold_labels(0.3, 0.1));
    ThresholdExactSolver s;
    const auto h = tune_affine(2000, 1, 1, 1, 1, 1, 1, 1);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto rec = run_lazy_ftpl(env, adv, s, h, 2000, seed);
        const auto rep = compute_regret(rec, env, s);
        const double mid = cumulative_loss(rec.contexts, env, ParamPoint{0.5}) - rep.best_loss;
        EXPECT_LE(rep.regret, mid) << "seed " << seed;
    }
}

TEST(Tuning, AffineFrozenValues) {
    const auto h = tune_affine(10000, 2, 2, 1, 1, 1, 1, 0.5);
    EXPECT_NEAR(h.eta, std::pow(160000.0, 2.0 / 3.0), 1e-9);
    EXPECT_NEAR(h.eta, 2947.2252, 1e-4);
    EXPECT_EQ(h.n, 54u);
    const auto t2000 = tune_affine(2000, 1, 1, 1, 1, 1, 1, 1);
    EXPECT_NEAR(t2000.eta, 158.7401, 1e-4);
    EXPECT_EQ(t2000.n, 13u);
    const auto t500 = tune_affine(500, 1, 1, 1, 1, 1, 1, 1);
    EXPECT_NEAR(t500.eta, 62.996, 1e-3);
    EXPECT_EQ(t500.n, 8u);
}

TEST(Tuning, AffineScalingAndClamp) {
    const auto a = tune_affine(1000, 2, 2, 1, 1, 1, 1, 0.5), b = tune_affine(8000, 2, 2, 1, 1, 1, 1, 0.5);
    EXPECT_NEAR(b.eta / a.eta, 4.0, 1e-12);
    const auto tiny = tune_affine(10, 1, 1, 1, 1, 1, 1, 1e12);
    EXPECT_LT(tiny.eta, 1e-6);
    EXPECT_EQ(tiny.n, 1u);
    EXPECT_THROW((void)tune_affine(10, 0, 1, 1, 1, 1, 1, 1), std::invalid_argument);
}

TEST(Tuning, PolynomialFormula) {
    const auto h = tune_polynomial(10000, 2, 2, 2, 1, 1, 1);
    EXPECT_NEAR(h.eta, std::pow(640000.0, 6.0 / 7.0), 1e-6);
    EXPECT_NEAR(h.eta, 94781.96, 0.01);
    EXPECT_FALSE(h.eta_capped);
    EXPECT_EQ(h.n, 308u);
    EXPECT_EQ(tune_polynomial(1, 1, 2, 1, 1, 1, 1).n, 1u);
    // r = 1 gives the affine exponents.
    const auto r1 = tune_polynomial(1000, 1, 1, 1, 1, 1, 1);
    EXPECT_NEAR(r1.eta, 100.0, 1e-9);
    EXPECT_EQ(r1.n, 10u);
}

TEST(Tuning, PlanningAndMargin) {
    const auto p = tune_planning(1000, 1, 1, 1, 1, 1, 1, 1);
    EXPECT_NEAR(p.eta, 100.0, 1e-9);
    EXPECT_EQ(p.n, 10u);
    EXPECT_NEAR(tune_planning(1000, 1, 1, 1, 1, 1, 2, 1).eta / p.eta, std::pow(2.0, -2.0 / 3.0), 1e-12);
    const auto m = tune_margin(1000, 1, 1, 1, 1, 1, 1, 1, 1);
    EXPECT_NEAR(m.eta, 100.0, 1e-9);
    EXPECT_EQ(m.n, 10u);
    // gamma = 1 and K in place of K^2 reproduces the affine rule.
    EXPECT_NEAR(tune_margin(1000, 4, 1, 1, 1, 1, 1, 1, 1).eta, tune_affine(1000, 2, 1, 1, 1, 1, 1, 1).eta, 1e-9);
    const auto huge = tune_margin(1000, 1, 1, 1, 1, 1, 1, 1e-12, 1);
    EXPECT_TRUE(huge.eta_capped);
    EXPECT_DOUBLE_EQ(huge.eta, 10000.0);
}
