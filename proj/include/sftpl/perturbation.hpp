#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <variant>
#include <vector>

#include "sftpl/core.hpp"
#include "sftpl/rng.hpp"

namespace sftpl {

struct LinearExponential {
    double eta = 0.0;
    Vector xi;
};

struct GaussianProcess {
    double eta = 0.0;
    std::vector<ContextSample> anchors;
    Vector gammas;
};

struct PerturbationDraw {
    std::variant<LinearExponential, GaussianProcess> variant;
    std::uint64_t seed = 0;  // key of the stream the draw came from

    [[nodiscard]] bool is_exponential() const noexcept {
        return std::holds_alternative<LinearExponential>(variant);
    }
    [[nodiscard]] double eta() const noexcept {
        return std::visit([](const auto& v) { return v.eta; }, variant);
    }
};

inline PerturbationDraw draw_exponential(std::size_t dim, double eta, CounterRng& rng) {
    if (dim < 1) throw std::invalid_argument("draw_exponential: dimension must be positive");
    if (!(eta >= 0.0)) throw std::invalid_argument("draw_exponential: eta must be nonnegative");
    PerturbationDraw d;
    d.seed = rng.key();
    LinearExponential le{eta, Vector(dim)};
    for (double& x : le.xi) x = rng.exponential();
    d.variant = std::move(le);
    return d;
}

using BaseSampler = std::function<ContextSample(CounterRng&)>;

inline PerturbationDraw draw_gaussian_process(const BaseSampler& base, std::size_t m, double eta,
                                              CounterRng& rng) {
    if (m < 1) throw std::invalid_argument("draw_gaussian_process: m must be positive");
    if (!(eta >= 0.0)) throw std::invalid_argument("draw_gaussian_process: eta must be nonnegative");
    if (!base) throw std::invalid_argument("draw_gaussian_process: base sampler required");
    PerturbationDraw d;
    d.seed = rng.key();
    GaussianProcess gp{eta, {}, Vector(m)};
    CounterRng anchor_rng = rng.substream(1);
    CounterRng gamma_rng = rng.substream(2);
    gp.anchors.reserve(m);
    for (std::size_t i = 0; i < m; ++i) gp.anchors.push_back(base(anchor_rng));
    for (double& g : gp.gammas) g = gamma_rng.normal();
    d.variant = std::move(gp);
    return d;
}

// -eta <xi, theta>.
inline double eval_perturbation(const PerturbationDraw& draw, std::span<const double> theta) {
    const auto* le = std::get_if<LinearExponential>(&draw.variant);
    if (!le) throw std::invalid_argument("eval_perturbation: draw is not linear-exponential");
    if (le->xi.size() != theta.size()) throw std::invalid_argument("eval_perturbation: dimension mismatch");
    if (le->eta == 0.0) return 0.0;
    return -le->eta * dot(le->xi, theta);
}
inline double eval_perturbation(const PerturbationDraw& draw, const ParamPoint& theta) {
    return eval_perturbation(draw, theta.span());
}

using FunctionEvaluator = std::function<double(const ContextSample&)>;

// eta * sum_i gamma_i f(x_i).
inline double eval_perturbation(const PerturbationDraw& draw, const FunctionEvaluator& f) {
    const auto* gp = std::get_if<GaussianProcess>(&draw.variant);
    if (!gp) throw std::invalid_argument("eval_perturbation: draw is not a Gaussian process");
    if (gp->eta == 0.0) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < gp->anchors.size(); ++i) s += gp->gammas[i] * f(gp->anchors[i]);
    return gp->eta * s;
}

// Evaluates either variant against a parameter of a loss class.
inline double eval_perturbation(const PerturbationDraw& draw, const LossSpec& loss, const ParamPoint& theta) {
    if (draw.is_exponential()) return eval_perturbation(draw, theta.span());
    return eval_perturbation(draw, FunctionEvaluator([&](const ContextSample& x) { return loss.hypothesis(theta, x); }));
}

struct SupPerturbation {
    double certified = 0.0;  // bound on the expectation over xi
    double realized = 0.0;   // eta * sup over the box of <xi, theta>
};

inline SupPerturbation sup_perturbation_bound(const ParamSpace& space, const PerturbationDraw& draw) {
    const auto* le = std::get_if<LinearExponential>(&draw.variant);
    if (!le) throw std::invalid_argument("sup_perturbation_bound: only the linear-exponential variant is supported");
    if (le->xi.size() != space.dim()) throw std::invalid_argument("sup_perturbation_bound: dimension mismatch");
    SupPerturbation out;
    out.certified = space.linf_bound() * static_cast<double>(space.dim()) * le->eta;
    double s = 0.0;
    for (std::size_t i = 0; i < space.dim(); ++i)
        s += le->xi[i] * std::max(space.lower()[i], space.upper()[i]);
    out.realized = le->eta == 0.0 ? 0.0 : le->eta * s;
    return out;
}

}  // namespace sftpl
