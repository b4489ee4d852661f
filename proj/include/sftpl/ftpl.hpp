#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <exception>
#include <stdexcept>
#include <string>
#include <vector>

#include "sftpl/core.hpp"
#include "sftpl/oracle.hpp"
#include "sftpl/perturbation.hpp"
#include "sftpl/rng.hpp"
#include "sftpl/run_record.hpp"
#include "sftpl/smoothing.hpp"

namespace sftpl {

struct EpochSchedule {
    std::size_t T = 0;
    std::size_t n = 1;

    EpochSchedule(std::size_t horizon, std::size_t epoch_length) : T(horizon), n(epoch_length) {
        if (n < 1) throw std::invalid_argument("EpochSchedule: epoch length must be at least 1");
    }
    [[nodiscard]] std::size_t num_epochs() const noexcept { return (T + n - 1) / n; }
    [[nodiscard]] std::size_t first_step(std::size_t tau) const noexcept { return (tau - 1) * n + 1; }
    [[nodiscard]] std::size_t last_step(std::size_t tau) const noexcept { return std::min(tau * n, T); }
};

inline std::size_t epoch_of(std::size_t t, const EpochSchedule& s) {
    if (t < 1 || t > s.T) throw std::out_of_range("epoch_of: step outside 1..T");
    return (t + s.n - 1) / s.n;
}

namespace detail {
inline void require_positive(std::initializer_list<double> xs, const char* who) {
    for (double x : xs)
        if (!(x > 0.0) || std::isnan(x)) throw std::invalid_argument(std::string(who) + ": inputs must be positive");
}

// eta <= 10 T and 1 <= n <= T.
inline HyperParams capped(double T, double eta, double n_raw, std::string rule) {
    HyperParams h;
    h.rule_id = std::move(rule);
    const double eta_cap = 10.0 * T;
    if (!(eta <= eta_cap)) { eta = eta_cap; h.eta_capped = true; }
    h.eta = eta;
    double n = std::max(1.0, std::round(n_raw));
    if (n > T) { n = std::max(1.0, T); h.n_capped = true; }
    h.n = static_cast<std::size_t>(n);
    return h;
}
}  // namespace detail

inline HyperParams tune_affine(double T, double K, double d, double D, double B, double A, double a, double sigma_dir) {
    detail::require_positive({T, K, d, D, B, A, a, sigma_dir}, "tune_affine");
    const double eta = std::pow(T * K * K * d * D * B * A / (a * sigma_dir), 2.0 / 3.0);
    return detail::capped(T, eta, std::sqrt(eta), "affine");
}

inline HyperParams tune_polynomial(double T, double K, double r, double d, double D, double B, double sigma_poly) {
    detail::require_positive({T, K, r, d, D, B, sigma_poly}, "tune_polynomial");
    if (r < 1.0) throw std::invalid_argument("tune_polynomial: degree must be at least 1");
    const double X = T * K * K * r * r * std::pow(d, r) * D * B / sigma_poly;
    const double eta = std::pow(X, (4.0 * r - 2.0) / (4.0 * r - 1.0));
    const double n = std::pow(X, (2.0 * r - 1.0) / (4.0 * r - 1.0));
    return detail::capped(T, eta, n, "polynomial");
}

inline HyperParams tune_planning(double T, double d, double H, double K, double D, double L, double gamma, double sigma_dir) {
    detail::require_positive({T, d, H, K, D, L, gamma, sigma_dir}, "tune_planning");
    const double eta = std::cbrt(d) * std::pow(H, 5.0 / 3.0) * std::pow(K, 4.0 / 3.0) *
                       std::pow(T * L * D / (gamma * sigma_dir), 2.0 / 3.0);
    return detail::capped(T, eta, std::sqrt(eta), "planning");
}

inline HyperParams tune_margin(double T, double K, double A, double a, double d, double D, double B, double gamma,
                               double sigma_dir) {
    detail::require_positive({T, K, A, a, d, D, B, gamma, sigma_dir}, "tune_margin");
    const double eta = std::pow(T * K * A * d * D * B / (gamma * a * sigma_dir), 2.0 / 3.0);
    return detail::capped(T, eta, std::sqrt(eta), "margin");
}

inline HyperParams explicit_hyper(double eta, std::size_t n) {
    HyperParams h;
    h.eta = eta;
    h.n = n;
    h.rule_id = "explicit";
    h.validate();
    return h;
}

enum class PerturbationKind { exponential, gaussian_process };

struct RunOptions {
    PerturbationKind kind = PerturbationKind::exponential;
    BaseSampler gp_base;           // required for the Gaussian-process variant
    std::size_t gp_anchors = 16;
    bool shared_successor = true;  // record the diagnostic leader of each epoch
};

inline PerturbationSummary summarize(const PerturbationDraw& d) {
    PerturbationSummary s;
    s.seed = d.seed;
    s.eta = d.eta();
    if (const auto* le = std::get_if<LinearExponential>(&d.variant)) {
        s.kind = "exponential";
        for (double x : le->xi) s.xi_l1 += x;
    } else {
        s.kind = "gaussian_process";
        s.anchors = std::get<GaussianProcess>(d.variant).anchors.size();
    }
    return s;
}

// Lazy FTPL: one oracle call per epoch on the losses of strictly earlier
// epochs plus a fresh perturbation; the result is played for the whole epoch.
inline RunRecord run_lazy_ftpl(const LossSpec& loss, const AdversaryStrategy& adversary, ErmSolver& solver,
                               const HyperParams& hyper, std::size_t T, std::uint64_t seed,
                               const RunOptions& options = {}) {
    hyper.validate();
    if (options.kind == PerturbationKind::gaussian_process && (!options.gp_base || options.gp_anchors == 0))
        throw std::invalid_argument("run_lazy_ftpl: Gaussian-process runs need a base sampler and anchors");
    const EpochSchedule schedule(T, hyper.n);
    const ParamSpace& space = loss.space();

    RunRecord rec;
    rec.env = std::string(loss.name());
    rec.adversary = std::string(adversary.name());
    rec.solver = std::string(solver.id());
    rec.T = T;
    rec.hyper = hyper;
    rec.seed = seed;
    rec.steps.reserve(T);
    rec.contexts.reserve(T);
    if (options.kind == PerturbationKind::exponential && hyper.eta < static_cast<double>(hyper.n * hyper.n))
        rec.warnings.push_back("eta below n^2");

    const CounterRng root(seed);
    std::vector<ParamPoint> played;
    played.reserve(T);
    std::vector<PerturbationDraw> draws;
    bool uncertified_logged = false;

    auto draw_for = [&](std::size_t tau) {
        CounterRng r = root.substream(Purpose::perturbation, tau);
        if (options.kind == PerturbationKind::exponential) return draw_exponential(std::max<std::size_t>(space.dim(), 1), hyper.eta, r);
        return draw_gaussian_process(options.gp_base, options.gp_anchors, hyper.eta, r);
    };

    try {
        for (std::size_t tau = 1; tau <= schedule.num_epochs(); ++tau) {
            const std::size_t seen = (tau - 1) * schedule.n;
            std::span<const ContextSample> past(rec.contexts.data(), seen);
            PerturbationDraw draw = space.dim() > 0 || options.kind == PerturbationKind::gaussian_process
                                        ? draw_for(tau)
                                        : PerturbationDraw{LinearExponential{hyper.eta, {}}, 0};
            if (options.shared_successor && tau >= 2) {
                const OracleResult succ = solver.solve(ErmProblem{past, &loss, &draws.back()});
                rec.epochs.back().shared_successor = succ.theta_star;
                ++rec.diagnostic_calls;
            }
            const OracleResult res = solver.solve(ErmProblem{past, &loss, space.dim() > 0 ? &draw : nullptr});
            ++rec.oracle_call_count;
            if (res.gamma_kind == GammaKind::uncertified && !uncertified_logged) {
                rec.warnings.push_back("oracle suboptimality uncertified");
                uncertified_logged = true;
            }
            EpochRecord ep;
            ep.epoch = tau;
            ep.theta = res.theta_star;
            ep.perturbation = summarize(draw);
            ep.objective = res.objective_value;
            ep.gamma_kind = res.gamma_kind;
            ep.gamma = res.gamma;
            rec.epochs.push_back(ep);
            draws.push_back(std::move(draw));

            for (std::size_t t = schedule.first_step(tau); t <= schedule.last_step(tau); ++t) {
                CounterRng r = root.substream(Purpose::adversary, t);
                ContextSample z = sample_context(adversary, HistoryView{rec.contexts, played}, r);
                const double l = loss.eval(rec.epochs.back().theta, z);
                if (!(l >= 0.0 && l <= 1.0)) throw std::logic_error("run_lazy_ftpl: loss outside [0,1]");
                rec.steps.push_back(StepRecord{t, context_digest(z), tau, l});
                rec.cumulative_loss += l;
                rec.contexts.push_back(std::move(z));
                played.push_back(rec.epochs.back().theta);
            }
        }
    } catch (const std::exception& e) {
        rec.valid = false;
        rec.failure = e.what();
    }
    return rec;
}

}  // namespace sftpl
