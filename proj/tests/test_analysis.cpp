#include <gtest/gtest.h>

#include <cmath>

#include "sftpl/analysis.hpp"
#include "sftpl/ftpl.hpp"
#include "sftpl/pwa_env.hpp"

using namespace sftpl;

TEST(Recipe, AffineEpsTilde) {
    BracketRecipe r;
    r.id = "affine";
    r.K = 2;
    r.sigma = 0.5;
    EXPECT_NEAR(r.eps_tilde(0.12), 0.005, 1e-15);
    EXPECT_THROW((void)r.eps_tilde(0.0), std::invalid_argument);
}

TEST(Recipe, PolynomialEpsTilde) {
    BracketRecipe r;
    r.id = "polynomial";
    r.degree = 2;
    EXPECT_NEAR(r.eps_tilde(0.3), 0.01, 1e-15);
}

TEST(Recipe, UnknownRecipeRejected) {
    BracketRecipe r;
    r.id = "nonsense";
    EXPECT_THROW((void)r.eps_tilde(0.1), std::invalid_argument);
}

TEST(Bracket, OneDimensionalCountIsRangeOverTwoEpsTilde) {
    const ThresholdEnv env;
    BracketRecipe r;
    r.id = "affine";
    for (double eps : {0.05, 0.1, 0.3, 0.7, 2.0}) {
        const auto b = build_generalized_bracket(env.space(), env, r, eps);
        const double et = r.eps_tilde(eps);
        EXPECT_EQ(b.count(), std::max(1.0, std::ceil(1.0 / (2.0 * et) - 1e-12))) << eps;
        EXPECT_DOUBLE_EQ(b.half_side(), et);
    }
}

TEST(Bracket, CellsAreInscribedInL1Balls) {
    const PiecewiseLossSpec spec(regression_config(1, 2, 1.0));
    BracketRecipe r;
    r.id = "affine";
    const auto b = build_generalized_bracket(spec.space(), spec, r, 0.5);
    const double et = b.eps_tilde;
    std::uint64_t expected = 1;
    for (std::size_t j = 0; j < spec.space().dim(); ++j) {
        const auto k = b.cells_per_dim[j];
        EXPECT_EQ(k, static_cast<std::uint64_t>(std::ceil(spec.space().range(j) * spec.space().dim() / (2.0 * et) - 1e-9)));
        expected *= k;
    }
    EXPECT_EQ(b.count(), static_cast<double>(expected));
    CounterRng rng(5);
    for (int i = 0; i < 2000; ++i) {
        Vector u(spec.space().dim());
        for (std::size_t j = 0; j < u.size(); ++j) u[j] = rng.uniform(spec.space().lower()[j], spec.space().upper()[j]);
        const auto idx = b.cell_of(u);
        auto [lo, hi] = b.cell_bounds(idx);
        for (std::size_t j = 0; j < u.size(); ++j) {
            ASSERT_GE(u[j], lo[j] - 1e-12);
            ASSERT_LE(u[j], hi[j] + 1e-12);
        }
        ASSERT_LE(l1_distance(u, b.center(idx).coords), et + 1e-12);
    }
}

TEST(Bracket, SingleCellCoversBox) {
    const ThresholdEnv env(0.0, 1.0);
    const auto b = single_cell_bracket(env.space(), env, 1.0);
    EXPECT_EQ(b.count(), 1.0);
    EXPECT_DOUBLE_EQ(b.half_side(), 0.5);
}

TEST(Bracket, ThresholdUnderUniformPasses) {
    const ThresholdEnv env;
    auto adv = std::make_shared<UniformBoxAdversary>(ContextBox{1, 0.0, 1.0}, threshold_labels(0.5, 0.0));
    BracketRecipe r;
    r.id = "affine";
    r.sigma = adv->smoothness_class().sigma_dir();
    const double eps = 0.2;
    const auto b = build_generalized_bracket(env.space(), env, r, eps);
    const std::vector<NamedDistribution> battery{{"uniform", freeze(adv)}};
    const auto rep = verify_bracket(b, env, env, battery, 32, 4000, CounterRng(1));
    EXPECT_TRUE(rep.pass);
    // Analytic: E sup rho = cell width 2 eps_tilde <= 2 eps_tilde / sigma + eps_tilde.
    EXPECT_LE(rep.worst.mean, 2.0 * b.eps_tilde + 3.0 * rep.worst.standard_error);
}

TEST(Bracket, FailsWhenCellsAreTooCoarse) {
    const ThresholdEnv env;
    auto adv = std::make_shared<UniformBoxAdversary>(ContextBox{1, 0.0, 1.0});
    const auto b = single_cell_bracket(env.space(), env, 0.05);
    const std::vector<NamedDistribution> battery{{"uniform", freeze(adv)}};
    EXPECT_FALSE(verify_bracket(b, env, env, battery, 4, 2000, CounterRng(2)).pass);
}

TEST(Concentration, ThresholdUniform) {
    const ThresholdEnv env;
    ConcentrationTrial t;
    t.adversary = std::make_shared<UniformBoxAdversary>(ContextBox{1, 0.0, 1.0});
    t.metric = &env;
    t.bracket_size = 10;
    t.pairs = grid_pairs(env.space(), 11);
    t.sup_expectation = [](const ParamPoint& a, const ParamPoint& b) { return std::abs(a[0] - b[0]); };
    t.played = ParamPoint{0.5};
    const auto rep = check_concentration(t, CounterRng(3));
    EXPECT_TRUE(rep.pass);
    EXPECT_LE(rep.violations.rate, 0.05 + 3.0 * rep.violations.standard_error);
}

TEST(Concentration, ZeroSamplesIsVacuous) {
    const ThresholdEnv env;
    ConcentrationTrial t;
    t.n = 0;
    t.trials = 5;
    t.adversary = std::make_shared<UniformBoxAdversary>(ContextBox{1, 0.0, 1.0});
    t.metric = &env;
    t.pairs = grid_pairs(env.space(), 3);
    t.sup_expectation = [](const ParamPoint&, const ParamPoint&) { return 0.0; };
    EXPECT_TRUE(check_concentration(t, CounterRng(1)).pass);
    t.delta = 1.5;
    EXPECT_THROW((void)check_concentration(t, CounterRng(1)), std::invalid_argument);
}

TEST(GridPairs, CountsAndDistinctness) {
    const auto p = grid_pairs(ParamSpace::box(1, 0.0, 1.0), 11);
    EXPECT_EQ(p.size(), 55u);
    for (const auto& [a, b] : p) EXPECT_FALSE(a == b);
    EXPECT_THROW((void)grid_pairs(ParamSpace::box(1, 0.0, 1.0), 1), std::invalid_argument);
}

TEST(Regret, ThreeStepBruteForce) {
    // Fixed contexts; brute-force learner losses minus the hindsight optimum.
    class Fixed final : public AdversaryStrategy {
    public:
        Fixed() : cls_{DirectionallySmooth{1.0}, 1, 1.0} {}
        [[nodiscard]] const SmoothnessClass& smoothness_class() const override { return cls_; }
        [[nodiscard]] std::string_view name() const override { return "fixed"; }
        [[nodiscard]] ContextSample draw(HistoryView h, CounterRng&) const override {
            static const double xs[] = {0.2, 0.4, 0.6}, ys[] = {1, -1, 1};
            const std::size_t t = h.contexts.size();
            return {{xs[t]}, {ys[t]}};
        }

    private:
        SmoothnessClass cls_;
    };
    const ThresholdEnv env;
    const Fixed adv;
    ThresholdExactSolver s;
    const auto rec = run_lazy_ftpl(env, adv, s, explicit_hyper(0.0, 1), 3, 1);
    double learner = 0.0;
    for (std::size_t t = 0; t < 3; ++t) {
        const std::size_t e = rec.steps[t].epoch;
        learner += env.eval(rec.epochs[e - 1].theta, rec.contexts[t]);
    }
    double best = INFINITY;
    for (int g = 0; g <= 10000; ++g) best = std::min(best, cumulative_loss(rec.contexts, env, ParamPoint{g / 10000.0}));
    const auto rep = compute_regret(rec, env, s);
    EXPECT_DOUBLE_EQ(rep.learner_loss, learner);
    EXPECT_DOUBLE_EQ(rep.regret, learner - best);
    EXPECT_DOUBLE_EQ(rep.avg_regret, (learner - best) / 3.0);
}

TEST(Regret, InvalidRunsRejected) {
    RunRecord r;
    r.valid = false;
    ThresholdEnv env;
    ThresholdExactSolver s;
    EXPECT_THROW((void)compute_regret(r, env, s), std::invalid_argument);
}

TEST(Stability, SharedSuccessorsRecorded) {
    ThresholdEnv env;
    UniformBoxAdversary adv(ContextBox{1, 0.0, 1.0}, threshold_labels(0.3, 0.2));
    ThresholdExactSolver s;
    const auto rec = run_lazy_ftpl(env, adv, s, explicit_hyper(50.0, 5), 200, 3);
    const auto tr = stability_trace(rec);
    EXPECT_EQ(tr.size(), rec.epochs.size() - 1);
    for (double v : tr) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
    RunOptions off;
    off.shared_successor = false;
    const auto bare = run_lazy_ftpl(env, adv, s, explicit_hyper(50.0, 5), 200, 3, off);
    EXPECT_THROW((void)stability_trace(bare), std::invalid_argument);
    EXPECT_NO_THROW((void)stability_trace(bare, StabilityMode::played));
}

TEST(Fit, ExponentOfPowerLaw) {
    std::vector<std::pair<double, double>> s;
    for (double T : {100.0, 200.0, 400.0, 800.0}) s.emplace_back(T, 3.0 * std::pow(T, 0.6));
    s.emplace_back(1600.0, 0.0);
    const auto f = fit_regret_exponent(s);
    EXPECT_NEAR(f.fit.slope, 0.6, 1e-12);
    EXPECT_EQ(f.used, 4u);
    EXPECT_EQ(f.dropped, 1u);
}

TEST(OracleComplexity, SmallestQualifyingCount) {
    const std::vector<ComplexityPoint> s{{10, {0.3, 0.2}}, {40, {0.1, 0.1}}, {160, {0.05, 0.04}}};
    EXPECT_EQ(oracle_complexity(s, 0.1), 40u);
    EXPECT_EQ(oracle_complexity(s, 1.0), 1u);
    EXPECT_FALSE(oracle_complexity(s, 0.01).has_value());
}
