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
#include "sftpl/rng.hpp"
#include "sftpl/smoothing.hpp"
#include "sftpl/stats.hpp"

namespace sftpl {

// Odd, strictly increasing link with a <= psi' <= A.
class Link {
public:
    enum class Kind { identity, linear, tanh_augmented };

    static Link identity() { return Link(Kind::identity, 1.0); }
    static Link linear(double c) {
        if (!(c > 0.0)) throw std::invalid_argument("Link::linear: slope must be positive");
        return Link(Kind::linear, c);
    }
    // psi(v) = v + beta tanh(v): slopes in [1, 1 + beta].
    static Link tanh_augmented(double beta) {
        if (!(beta >= 0.0)) throw std::invalid_argument("Link::tanh_augmented: beta must be nonnegative");
        return Link(Kind::tanh_augmented, beta);
    }

    [[nodiscard]] double operator()(double v) const noexcept {
        switch (kind_) {
            case Kind::identity: return v;
            case Kind::linear: return param_ * v;
            case Kind::tanh_augmented: return v + param_ * std::tanh(v);
        }
        return v;
    }
    [[nodiscard]] double slope_lower() const noexcept { return kind_ == Kind::linear ? param_ : 1.0; }
    [[nodiscard]] double slope_upper() const noexcept {
        switch (kind_) {
            case Kind::identity: return 1.0;
            case Kind::linear: return param_;
            case Kind::tanh_augmented: return 1.0 + param_;
        }
        return 1.0;
    }
    [[nodiscard]] Kind kind() const noexcept { return kind_; }
    [[nodiscard]] double param() const noexcept { return param_; }

private:
    Link(Kind k, double p) : kind_(k), param_(p) {}
    Kind kind_;
    double param_;
};

class ModeLoss {
public:
    virtual ~ModeLoss() = default;
    [[nodiscard]] virtual std::size_t param_dim() const = 0;
    [[nodiscard]] virtual double eval(std::span<const double> theta_k, const ContextSample& z) const = 0;
    [[nodiscard]] virtual double lipschitz() const = 0;  // w.r.t. l1 on theta_k
    [[nodiscard]] virtual std::string_view name() const = 0;
};

// min(1, scale * ||y - W (x,1)||^2) with W stored row-major. The default
// scale 1/(4 max(B,1)^2) makes the loss 1-Lipschitz in l1 when |x|_inf <= B.
class ClippedSquaredError final : public ModeLoss {
public:
    ClippedSquaredError(std::size_t input_dim, std::size_t output_dim, bool bias, double context_bound,
                        std::optional<double> scale = std::nullopt)
        : in_(input_dim), out_(output_dim), bias_(bias) {
        if (in_ == 0 || out_ == 0) throw std::invalid_argument("ClippedSquaredError: empty dimensions");
        const double b = std::max(context_bound, 1.0);
        scale_ = scale.value_or(1.0 / (4.0 * b * b));
        if (!(scale_ > 0.0)) throw std::invalid_argument("ClippedSquaredError: scale must be positive");
        lipschitz_ = 2.0 * std::sqrt(scale_) * b;
    }

    [[nodiscard]] std::size_t input_dim() const noexcept { return in_; }
    [[nodiscard]] std::size_t output_dim() const noexcept { return out_; }
    [[nodiscard]] bool bias() const noexcept { return bias_; }
    [[nodiscard]] double scale() const noexcept { return scale_; }
    [[nodiscard]] std::size_t row_width() const noexcept { return in_ + (bias_ ? 1 : 0); }
    [[nodiscard]] std::size_t param_dim() const override { return out_ * row_width(); }
    [[nodiscard]] double lipschitz() const override { return lipschitz_; }
    [[nodiscard]] std::string_view name() const override { return "clipped_squared_error"; }

    [[nodiscard]] Vector predict(std::span<const double> theta_k, std::span<const double> x) const {
        if (theta_k.size() != param_dim() || x.size() != in_)
            throw std::invalid_argument("ClippedSquaredError::predict: dimension mismatch");
        Vector y(out_, 0.0);
        const std::size_t w = row_width();
        for (std::size_t j = 0; j < out_; ++j) {
            double s = bias_ ? theta_k[j * w + in_] : 0.0;
            for (std::size_t i = 0; i < in_; ++i) s += theta_k[j * w + i] * x[i];
            y[j] = s;
        }
        return y;
    }

    [[nodiscard]] double squared_residual(std::span<const double> theta_k, const ContextSample& z) const {
        if (z.payload.size() != out_) throw std::invalid_argument("ClippedSquaredError: label dimension mismatch");
        const Vector y = predict(theta_k, z.z);
        double r = 0.0;
        for (std::size_t j = 0; j < out_; ++j) r += (z.payload[j] - y[j]) * (z.payload[j] - y[j]);
        return r;
    }

    [[nodiscard]] double eval(std::span<const double> theta_k, const ContextSample& z) const override {
        return std::min(1.0, scale_ * squared_residual(theta_k, z));
    }

private:
    std::size_t in_, out_;
    bool bias_;
    double scale_ = 1.0;
    double lipschitz_ = 1.0;
};

// I[y != label]; no continuous parameters.
class ConstantLabelLoss final : public ModeLoss {
public:
    explicit ConstantLabelLoss(double label) : label_(label) {}
    [[nodiscard]] std::size_t param_dim() const override { return 0; }
    [[nodiscard]] double lipschitz() const override { return 0.0; }
    [[nodiscard]] std::string_view name() const override { return "constant_label"; }
    [[nodiscard]] double eval(std::span<const double>, const ContextSample& z) const override {
        if (z.payload.empty()) throw std::invalid_argument("ConstantLabelLoss: context carries no label");
        return z.payload[0] != label_ ? 1.0 : 0.0;
    }
    [[nodiscard]] double label() const noexcept { return label_; }

private:
    double label_;
};

class CallbackModeLoss final : public ModeLoss {
public:
    using Fn = std::function<double(std::span<const double>, const ContextSample&)>;
    CallbackModeLoss(std::size_t dim, Fn fn, double lipschitz, std::string name = "callback")
        : dim_(dim), fn_(std::move(fn)), lipschitz_(lipschitz), name_(std::move(name)) {
        if (!fn_) throw std::invalid_argument("CallbackModeLoss: callback required");
        if (!(lipschitz_ >= 0.0 && lipschitz_ <= 1.0))
            throw std::invalid_argument("CallbackModeLoss: declared Lipschitz constant must lie in [0,1]");
    }
    [[nodiscard]] std::size_t param_dim() const override { return dim_; }
    [[nodiscard]] double lipschitz() const override { return lipschitz_; }
    [[nodiscard]] std::string_view name() const override { return name_; }
    [[nodiscard]] double eval(std::span<const double> t, const ContextSample& z) const override {
        return std::clamp(fn_(t, z), 0.0, 1.0);
    }

private:
    std::size_t dim_;
    Fn fn_;
    double lipschitz_;
    std::string name_;
};

enum class Formulation { tournament, argmax };
enum class BoundaryKind { affine, polynomial };

struct PwaConfig {
    std::size_t context_dim = 1;
    std::size_t modes = 2;
    Formulation formulation = Formulation::tournament;
    BoundaryKind boundary = BoundaryKind::affine;
    unsigned degree = 1;  // polynomial boundaries only
    Link link = Link::identity();
    std::vector<std::shared_ptr<const ModeLoss>> mode_losses;
    double continuous_lo = -1.0;
    double continuous_hi = 1.0;
    double discrete_lo = -1.0;
    double discrete_hi = 1.0;
    bool normalize_discrete = true;
    double margin = 0.0;  // declared margin for the argmax formulation
};

inline std::size_t pair_count(std::size_t K) noexcept { return K * (K - 1) / 2; }

// Index of the unordered pair k < k2 in row-major upper-triangular order.
inline std::size_t pair_index(std::size_t K, std::size_t k, std::size_t k2) noexcept {
    return k * K - k * (k + 1) / 2 + (k2 - k - 1);
}

// Tournament over antisymmetric scores phi(k,k2) for k < k2 (pair order).
// k wins against k2 iff phi(k,k2) >= 0; exact ties credit both. Modes are 0-based.
inline std::size_t tournament_winner(std::span<const double> phi_pairs, std::size_t K) {
    if (phi_pairs.size() != pair_count(K)) throw std::invalid_argument("tournament_winner: wrong pair count");
    if (K == 1) return 0;
    std::vector<std::size_t> wins(K, 0);
    std::size_t p = 0;
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t k2 = k + 1; k2 < K; ++k2, ++p) {
            const double v = phi_pairs[p];
            if (v >= 0.0) ++wins[k];
            if (v <= 0.0) ++wins[k2];
        }
    std::size_t best = 0;
    for (std::size_t k = 1; k < K; ++k)
        if (wins[k] > wins[best]) best = k;
    return best;
}

class PiecewiseLossSpec final : public LossSpec, public PseudoMetricSpec {
public:
    explicit PiecewiseLossSpec(PwaConfig cfg) : cfg_(std::move(cfg)) {
        if (cfg_.context_dim == 0) throw std::invalid_argument("PiecewiseLossSpec: context_dim must be positive");
        if (cfg_.modes == 0) throw std::invalid_argument("PiecewiseLossSpec: need at least one mode");
        if (cfg_.mode_losses.size() != cfg_.modes)
            throw std::invalid_argument("PiecewiseLossSpec: one mode loss per mode required");
        for (const auto& g : cfg_.mode_losses) {
            if (!g) throw std::invalid_argument("PiecewiseLossSpec: null mode loss");
            if (g->lipschitz() > 1.0 + 1e-12)
                throw std::invalid_argument("PiecewiseLossSpec: mode losses must be 1-Lipschitz");
        }
        if (cfg_.boundary == BoundaryKind::polynomial) {
            if (cfg_.degree == 0) throw std::invalid_argument("PiecewiseLossSpec: polynomial degree must be positive");
            if (cfg_.formulation != Formulation::tournament)
                throw std::invalid_argument("PiecewiseLossSpec: polynomial boundaries use the tournament formulation");
            poly_ = Polynomial(cfg_.context_dim, cfg_.degree, Vector(monomial_count(cfg_.context_dim, cfg_.degree), 0.0));
        }
        if (cfg_.formulation == Formulation::argmax && cfg_.margin < 0.0)
            throw std::invalid_argument("PiecewiseLossSpec: margin must be nonnegative");
        if (!(cfg_.continuous_lo <= cfg_.continuous_hi) || !(cfg_.discrete_lo <= cfg_.discrete_hi))
            throw std::invalid_argument("PiecewiseLossSpec: empty parameter box");

        std::size_t off = 0;
        for (const auto& g : cfg_.mode_losses) {
            mode_offsets_.push_back(off);
            off += g->param_dim();
        }
        const std::size_t dc = off;
        block_ = cfg_.boundary == BoundaryKind::affine ? cfg_.context_dim + 1 : poly_.monomials().size();
        blocks_ = cfg_.formulation == Formulation::tournament ? pair_count(cfg_.modes) : cfg_.modes;
        const std::size_t dd = blocks_ * block_;
        Vector lo(dc + dd), hi(dc + dd);
        for (std::size_t i = 0; i < dc; ++i) { lo[i] = cfg_.continuous_lo; hi[i] = cfg_.continuous_hi; }
        for (std::size_t i = dc; i < dc + dd; ++i) { lo[i] = cfg_.discrete_lo; hi[i] = cfg_.discrete_hi; }
        space_ = ParamSpace(std::move(lo), std::move(hi), dc);
        for (std::size_t k = 0; k < cfg_.modes; ++k) {
            double diam = 0.0;
            for (std::size_t i = 0; i < cfg_.mode_losses[k]->param_dim(); ++i) diam += space_.range(mode_offsets_[k] + i);
            per_mode_diameter_ = std::max(per_mode_diameter_, diam);
        }
    }

    [[nodiscard]] const PwaConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] const ParamSpace& space() const override { return space_; }
    [[nodiscard]] std::string_view name() const override {
        return cfg_.formulation == Formulation::argmax ? "pwa_margin"
               : cfg_.boundary == BoundaryKind::polynomial ? "polynomial" : "pwa_tournament";
    }
    [[nodiscard]] std::size_t context_dim() const override { return cfg_.context_dim; }
    [[nodiscard]] const PseudoMetricSpec* metric() const override { return this; }
    [[nodiscard]] std::size_t modes() const noexcept { return cfg_.modes; }
    [[nodiscard]] std::size_t block_size() const noexcept { return block_; }
    [[nodiscard]] std::size_t block_count() const noexcept { return blocks_; }
    [[nodiscard]] std::size_t mode_offset(std::size_t k) const { return mode_offsets_.at(k); }
    [[nodiscard]] const ModeLoss& mode_loss(std::size_t k) const { return *cfg_.mode_losses.at(k); }
    [[nodiscard]] double per_mode_diameter() const noexcept { return per_mode_diameter_; }

    [[nodiscard]] std::span<const double> mode_block(const ParamPoint& theta, std::size_t k) const {
        return theta.block(mode_offsets_.at(k), cfg_.mode_losses[k]->param_dim());
    }
    [[nodiscard]] std::span<const double> boundary_block(std::span<const double> theta_d, std::size_t b) const {
        return theta_d.subspan(b * block_, block_);
    }

    // Raw boundary function f_w(z); <w,(z,1)> for affine boundaries.
    [[nodiscard]] double boundary_value(std::span<const double> w, std::span<const double> z) const {
        if (cfg_.boundary == BoundaryKind::affine) {
            double s = w[cfg_.context_dim];
            for (std::size_t i = 0; i < cfg_.context_dim; ++i) s += w[i] * z[i];
            return s;
        }
        return poly_.eval_with(w, z);
    }

    [[nodiscard]] std::size_t mode_tournament(std::span<const double> theta_d, std::span<const double> z) const {
        if (cfg_.formulation != Formulation::tournament)
            throw std::invalid_argument("mode_tournament: spec uses the argmax formulation");
        check_discrete(theta_d, z);
        Vector phi(blocks_);
        for (std::size_t p = 0; p < blocks_; ++p) phi[p] = cfg_.link(boundary_value(boundary_block(theta_d, p), z));
        return tournament_winner(phi, cfg_.modes);
    }

    [[nodiscard]] std::size_t mode_argmax(std::span<const double> theta_d, std::span<const double> z) const {
        if (cfg_.formulation != Formulation::argmax)
            throw std::invalid_argument("mode_argmax: spec uses the tournament formulation");
        check_discrete(theta_d, z);
        std::size_t best = 0;
        double best_v = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < cfg_.modes; ++k) {
            const double v = canonical(cfg_.link(boundary_value(boundary_block(theta_d, k), z)));
            if (v > best_v) { best_v = v; best = k; }
        }
        return best;
    }

    [[nodiscard]] std::size_t mode(std::span<const double> theta_d, std::span<const double> z) const {
        return cfg_.formulation == Formulation::tournament ? mode_tournament(theta_d, z) : mode_argmax(theta_d, z);
    }
    [[nodiscard]] std::size_t mode(const ParamPoint& theta, const ContextSample& z) const {
        check_point(theta);
        return mode(theta.discrete(space_), z.z);
    }

    [[nodiscard]] double eval(const ParamPoint& theta, const ContextSample& z) const override {
        const std::size_t k = mode(theta, z);
        return std::clamp(cfg_.mode_losses[k]->eval(mode_block(theta, k), z), 0.0, 1.0);
    }

    [[nodiscard]] double rho(const ParamPoint& a, const ParamPoint& b, const ContextSample& z) const override {
        const double jump = mode(a, z) != mode(b, z) ? 2.0 : 0.0;
        double gap = 0.0;
        for (std::size_t k = 0; k < cfg_.modes; ++k)
            gap = std::max(gap, l1_distance(mode_block(a, k), mode_block(b, k)));
        return jump + gap;
    }
    [[nodiscard]] double diameter_bound() const override { return 2.0 + per_mode_diameter_; }
    [[nodiscard]] std::string_view metric_id() const override { return "pwa_mode_jump"; }

    [[nodiscard]] std::optional<IsometryConstants> isometry(const SmoothnessClass& cls) const override {
        const double A = cfg_.link.slope_upper();
        const double a = cfg_.link.slope_lower();
        const double B = cls.sup_bound;
        if (cfg_.formulation == Formulation::tournament && cfg_.boundary == BoundaryKind::affine && cls.is_directional())
            return IsometryConstants{2.0 * A * std::max(B, 1.0) / (a * cls.sigma_dir()), 1.0};
        if (cfg_.formulation == Formulation::tournament && cfg_.boundary == BoundaryKind::polynomial) {
            if (const auto* p = std::get_if<PolynomiallySmooth>(&cls.kind); p && p->degree == cfg_.degree)
                return IsometryConstants{2.0 * B * space_.l1_diameter() / p->sigma_poly, 1.0 / static_cast<double>(cfg_.degree)};
            return std::nullopt;
        }
        if (cfg_.formulation == Formulation::argmax && cls.is_directional() && cfg_.margin > 0.0)
            return IsometryConstants{4.0 * A * B / (a * cfg_.margin * cls.sigma_dir()), 1.0};
        return std::nullopt;
    }

    // Rescales each boundary block so its top-degree part has unit norm: the
    // feature weights of an affine row (bias excluded), the degree-r
    // coefficients of a polynomial; an affine bias that leaves the box is then
    // clamped back into it.
    [[nodiscard]] ParamPoint project_feasible(const ParamPoint& theta) const override {
        if (!cfg_.normalize_discrete) return theta;
        check_point(theta);
        Vector c = theta.coords;
        const std::size_t dc = space_.dim_continuous();
        for (std::size_t b = 0; b < blocks_; ++b) {
            std::span<double> w(c.data() + dc + b * block_, block_);
            double n = 0.0;
            if (cfg_.boundary == BoundaryKind::affine) {
                for (std::size_t i = 0; i < cfg_.context_dim; ++i) n += w[i] * w[i];
                n = std::sqrt(n);
            } else {
                n = poly_.top_norm_of(w);
            }
            if (n > 0.0)
                for (double& v : w) v = std::clamp(v / n, cfg_.discrete_lo, cfg_.discrete_hi);
        }
        return ParamPoint(std::move(c));
    }

    // Realized margin: min pairwise Euclidean gap of the feature parts of the
    // per-mode blocks. +inf for a single mode.
    [[nodiscard]] double margin_check(std::span<const double> theta_d) const {
        if (cfg_.formulation != Formulation::argmax) throw std::invalid_argument("margin_check: argmax formulation required");
        if (theta_d.size() != blocks_ * block_) throw std::invalid_argument("margin_check: dimension mismatch");
        double m = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < cfg_.modes; ++k)
            for (std::size_t k2 = k + 1; k2 < cfg_.modes; ++k2) {
                double s = 0.0;
                for (std::size_t i = 0; i < cfg_.context_dim; ++i) {
                    const double d = theta_d[k * block_ + i] - theta_d[k2 * block_ + i];
                    s += d * d;
                }
                m = std::min(m, std::sqrt(s));
            }
        return m;
    }

private:
    void check_point(const ParamPoint& theta) const {
        if (theta.size() != space_.dim()) throw std::invalid_argument("PiecewiseLossSpec: parameter dimension mismatch");
    }
    void check_discrete(std::span<const double> theta_d, std::span<const double> z) const {
        if (theta_d.size() != blocks_ * block_) throw std::invalid_argument("PiecewiseLossSpec: boundary dimension mismatch");
        if (z.size() != cfg_.context_dim) throw std::invalid_argument("PiecewiseLossSpec: context dimension mismatch");
    }

    PwaConfig cfg_;
    Polynomial poly_;
    ParamSpace space_;
    std::vector<std::size_t> mode_offsets_;
    std::size_t block_ = 0;
    std::size_t blocks_ = 0;
    double per_mode_diameter_ = 0.0;
};

inline IsometryConstants pseudo_isometry_constants(const PseudoMetricSpec& spec, const SmoothnessClass& cls) {
    auto c = spec.isometry(cls);
    if (!c) throw std::invalid_argument("pseudo_isometry_constants: smoothness class does not match the boundary kind");
    return *c;
}

struct FrequencyEstimate {
    double rate = 0.0;
    double standard_error = 0.0;
    stats::Interval ci;
    std::size_t hits = 0;
    std::size_t samples = 0;
};

inline FrequencyEstimate make_frequency(std::size_t hits, std::size_t n) {
    FrequencyEstimate e;
    e.hits = hits;
    e.samples = n;
    e.rate = n ? static_cast<double>(hits) / static_cast<double>(n) : 0.0;
    e.standard_error = stats::proportion_se(e.rate, n);
    e.ci = stats::wilson_interval(hits, n);
    return e;
}

inline FrequencyEstimate mode_flip_rate(const PiecewiseLossSpec& spec, std::span<const double> theta_d,
                                        std::span<const double> theta_d2, const Distribution& sampler,
                                        std::size_t n_mc, CounterRng rng) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n_mc; ++i) {
        const ContextSample z = sampler(rng);
        if (spec.mode(theta_d, z.z) != spec.mode(theta_d2, z.z)) ++hits;
    }
    return make_frequency(hits, n_mc);
}

// Labels from a planted parameter: y = W_k (x,1) of the planted mode, plus
// optional Gaussian noise. Every mode must be a clipped squared error.
inline LabelFn planted_pwa_labels(std::shared_ptr<const PiecewiseLossSpec> spec, ParamPoint planted,
                                  double noise_std = 0.0) {
    if (!spec) throw std::invalid_argument("planted_pwa_labels: spec required");
    for (std::size_t k = 0; k < spec->modes(); ++k)
        if (!dynamic_cast<const ClippedSquaredError*>(&spec->mode_loss(k)))
            throw std::invalid_argument("planted_pwa_labels: all modes must be regression modes");
    return [spec, planted = std::move(planted), noise_std](std::span<const double> z, CounterRng& rng) {
        const std::size_t k = spec->mode(planted.discrete(spec->space()), z);
        const auto& g = static_cast<const ClippedSquaredError&>(spec->mode_loss(k));
        Vector y = g.predict(spec->mode_block(planted, k), z);
        if (noise_std > 0.0)
            for (double& v : y) v += noise_std * rng.normal();
        return y;
    };
}

// Regression environment with K clipped-squared-error modes on d features.
inline PwaConfig regression_config(std::size_t d, std::size_t K, double context_bound,
                                   Formulation f = Formulation::tournament, std::size_t outputs = 1,
                                   bool bias = true) {
    PwaConfig cfg;
    cfg.context_dim = d;
    cfg.modes = K;
    cfg.formulation = f;
    for (std::size_t k = 0; k < K; ++k)
        cfg.mode_losses.push_back(std::make_shared<ClippedSquaredError>(d, outputs, bias, context_bound));
    return cfg;
}

}  // namespace sftpl
