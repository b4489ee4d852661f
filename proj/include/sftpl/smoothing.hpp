#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sftpl/core.hpp"
#include "sftpl/polynomial.hpp"
#include "sftpl/rng.hpp"

namespace sftpl {

struct Smooth {
    double sigma = 1.0;
    std::string base = "uniform";
};
struct DirectionallySmooth {
    double sigma_dir = 1.0;
};
struct PolynomiallySmooth {
    unsigned degree = 1;
    double sigma_poly = 1.0;
};

struct SmoothnessClass {
    std::variant<Smooth, DirectionallySmooth, PolynomiallySmooth> kind;
    std::size_t context_dim = 1;
    double sup_bound = 1.0;

    void validate() const {
        if (context_dim == 0) throw std::invalid_argument("SmoothnessClass: context_dim must be positive");
        if (!(sup_bound > 0.0) || !std::isfinite(sup_bound))
            throw std::invalid_argument("SmoothnessClass: sup bound must be positive and finite");
        if (const auto* s = std::get_if<Smooth>(&kind)) {
            if (!(s->sigma > 0.0 && s->sigma <= 1.0))
                throw std::invalid_argument("SmoothnessClass: sigma must lie in (0,1]");
        } else if (const auto* d = std::get_if<DirectionallySmooth>(&kind)) {
            if (!(d->sigma_dir > 0.0) || !std::isfinite(d->sigma_dir))
                throw std::invalid_argument("SmoothnessClass: sigma_dir must be positive");
        } else if (const auto* p = std::get_if<PolynomiallySmooth>(&kind)) {
            if (p->degree == 0 || !(p->sigma_poly > 0.0))
                throw std::invalid_argument("SmoothnessClass: invalid polynomial smoothness");
        }
    }

    [[nodiscard]] bool is_directional() const noexcept {
        return std::holds_alternative<DirectionallySmooth>(kind);
    }
    [[nodiscard]] double sigma_dir() const {
        if (const auto* d = std::get_if<DirectionallySmooth>(&kind)) return d->sigma_dir;
        throw std::invalid_argument("SmoothnessClass: not a directionally smooth class");
    }
    [[nodiscard]] const PolynomiallySmooth& polynomial() const {
        if (const auto* p = std::get_if<PolynomiallySmooth>(&kind)) return *p;
        throw std::invalid_argument("SmoothnessClass: not a polynomially smooth class");
    }
    [[nodiscard]] std::string_view kind_name() const noexcept {
        if (std::holds_alternative<Smooth>(kind)) return "smooth";
        if (std::holds_alternative<DirectionallySmooth>(kind)) return "directional";
        return "polynomial";
    }
};

// Analytic sup-density facts for the shipped noise laws.
inline double uniform_cube_sigma_dir(double width, std::size_t dim) {
    if (!(width > 0.0)) throw std::invalid_argument("uniform_cube_sigma_dir: width must be positive");
    return dim <= 1 ? width : width / std::numbers::sqrt2;
}

inline double truncated_gaussian_peak(double stddev, double radius) {
    if (!(stddev > 0.0) || !(radius > 0.0))
        throw std::invalid_argument("truncated_gaussian_peak: nonpositive parameter");
    const double mass = std::erf(radius / (stddev * std::numbers::sqrt2));
    return 1.0 / (stddev * std::sqrt(2.0 * std::numbers::pi) * mass);
}

// Each projection has density at most sqrt(d) times the coordinate peak.
inline double truncated_gaussian_sigma_dir(double stddev, double radius, std::size_t dim) {
    return 1.0 / (truncated_gaussian_peak(stddev, radius) * std::sqrt(static_cast<double>(std::max<std::size_t>(dim, 1))));
}

struct HistoryView {
    std::span<const ContextSample> contexts;
    std::span<const ParamPoint> thetas;  // learner parameter played at each past step
};

using LabelFn = std::function<Vector(std::span<const double> z, CounterRng& rng)>;

// y = s(x - theta_star) with s(0) = +1, flipped with probability flip_prob.
inline LabelFn threshold_labels(double theta_star, double flip_prob) {
    if (!(flip_prob >= 0.0 && flip_prob <= 1.0))
        throw std::invalid_argument("threshold_labels: flip probability outside [0,1]");
    return [=](std::span<const double> z, CounterRng& rng) {
        double y = z[0] - theta_star >= 0.0 ? 1.0 : -1.0;
        if (rng.bernoulli(flip_prob)) y = -y;
        return Vector{y};
    };
}

enum class NoiseKind { uniform, truncated_gaussian };

struct NoiseSpec {
    NoiseKind kind = NoiseKind::uniform;
    double width = 0.2;    // support is the cube [-width/2, width/2]^d
    double stddev = 0.1;   // truncated Gaussian only

    [[nodiscard]] double sigma_dir(std::size_t dim) const {
        if (kind == NoiseKind::uniform) return uniform_cube_sigma_dir(width, dim);
        return truncated_gaussian_sigma_dir(stddev, width / 2.0, dim);
    }

    void validate() const {
        if (!(width > 0.0) || !std::isfinite(width)) throw std::invalid_argument("NoiseSpec: width must be positive");
        if (kind == NoiseKind::truncated_gaussian) {
            if (!(stddev > 0.0)) throw std::invalid_argument("NoiseSpec: stddev must be positive");
            if (width / 2.0 < 0.05 * stddev)
                throw std::invalid_argument("NoiseSpec: truncation radius too small for rejection sampling");
        }
    }

    double draw_coordinate(CounterRng& rng) const {
        const double r = width / 2.0;
        if (kind == NoiseKind::uniform) return rng.uniform(-r, r);
        for (;;) {
            const double v = stddev * rng.normal();
            if (std::abs(v) <= r) return v;
        }
    }
};

class AdversaryStrategy {
public:
    virtual ~AdversaryStrategy() = default;
    [[nodiscard]] virtual const SmoothnessClass& smoothness_class() const = 0;
    [[nodiscard]] virtual ContextSample draw(HistoryView history, CounterRng& rng) const = 0;
    [[nodiscard]] virtual std::string_view name() const = 0;
};

inline ContextSample sample_context(const AdversaryStrategy& strategy, HistoryView history,
                                    CounterRng& rng) {
    ContextSample s = strategy.draw(history, rng);
    const SmoothnessClass& cls = strategy.smoothness_class();
    if (s.z.size() != cls.context_dim)
        throw std::logic_error("sample_context: strategy emitted a context of the wrong dimension");
    for (double v : s.z)
        if (!std::isfinite(v) || std::abs(v) > cls.sup_bound)
            throw std::logic_error("sample_context: strategy emitted a sample outside its declared bound");
    return s;
}

// Box [lo, lo+width]^d shared by the built-in strategies.
struct ContextBox {
    std::size_t dim = 1;
    double lo = 0.0;
    double hi = 1.0;

    void validate() const {
        if (dim == 0) throw std::invalid_argument("ContextBox: dimension must be positive");
        if (!(hi > lo)) throw std::invalid_argument("ContextBox: empty box");
    }
    [[nodiscard]] double bound() const noexcept { return std::max(std::abs(lo), std::abs(hi)); }
};

namespace detail {
inline ContextSample with_labels(Vector z, const LabelFn& labels, CounterRng& rng) {
    ContextSample s;
    if (labels) {
        CounterRng lr = rng.substream(Purpose::labels);
        s.payload = labels(z, lr);
    }
    s.z = std::move(z);
    return s;
}
}  // namespace detail

// (a) iid uniform on the box.
class UniformBoxAdversary final : public AdversaryStrategy {
public:
    UniformBoxAdversary(ContextBox box, LabelFn labels = {}) : box_(box), labels_(std::move(labels)) {
        box_.validate();
        cls_ = SmoothnessClass{DirectionallySmooth{uniform_cube_sigma_dir(box_.hi - box_.lo, box_.dim)},
                               box_.dim, box_.bound()};
        cls_.validate();
    }
    [[nodiscard]] const SmoothnessClass& smoothness_class() const override { return cls_; }
    [[nodiscard]] std::string_view name() const override { return "uniform"; }
    [[nodiscard]] ContextSample draw(HistoryView, CounterRng& rng) const override {
        Vector z(box_.dim);
        for (double& v : z) v = rng.uniform(box_.lo, box_.hi);
        return detail::with_labels(std::move(z), labels_, rng);
    }
    [[nodiscard]] const ContextBox& box() const noexcept { return box_; }

private:
    ContextBox box_;
    LabelFn labels_;
    SmoothnessClass cls_;
};

// (b) adaptive mean plus noise; the mean stays in the shrunken box so no
// clipping is ever needed.
class MeanShiftAdversary final : public AdversaryStrategy {
public:
    enum class Policy { sweep, track_learner };
    using ThetaToFeature = std::function<Vector(const ParamPoint&)>;

    MeanShiftAdversary(ContextBox box, NoiseSpec noise, Policy policy, double period = 50.0,
                       ThetaToFeature track = {}, LabelFn labels = {})
        : box_(box), noise_(noise), policy_(policy), period_(period), track_(std::move(track)),
          labels_(std::move(labels)) {
        box_.validate();
        noise_.validate();
        if (box_.hi - box_.lo < noise_.width)
            throw std::invalid_argument("MeanShiftAdversary: noise wider than the box");
        if (policy_ == Policy::sweep && !(period_ > 0.0))
            throw std::invalid_argument("MeanShiftAdversary: sweep period must be positive");
        if (policy_ == Policy::track_learner && !track_)
            throw std::invalid_argument("MeanShiftAdversary: tracking policy needs a feature map");
        cls_ = SmoothnessClass{DirectionallySmooth{noise_.sigma_dir(box_.dim)}, box_.dim, box_.bound()};
        cls_.validate();
    }

    [[nodiscard]] const SmoothnessClass& smoothness_class() const override { return cls_; }
    [[nodiscard]] std::string_view name() const override { return "mean_shift"; }

    [[nodiscard]] Vector mean_for(HistoryView h) const {
        const double a = box_.lo + noise_.width / 2.0;
        const double b = box_.hi - noise_.width / 2.0;
        Vector m(box_.dim, 0.5 * (a + b));
        if (policy_ == Policy::sweep) {
            const double t = static_cast<double>(h.contexts.size());
            for (std::size_t i = 0; i < box_.dim; ++i) {
                const double phase = std::fmod(t / period_ + static_cast<double>(i) / static_cast<double>(box_.dim), 1.0);
                const double tri = phase < 0.5 ? 2.0 * phase : 2.0 - 2.0 * phase;
                m[i] = a + (b - a) * tri;
            }
        } else if (!h.thetas.empty()) {
            Vector f = track_(h.thetas.back());
            if (f.size() != box_.dim) throw std::logic_error("MeanShiftAdversary: feature map dimension");
            for (std::size_t i = 0; i < box_.dim; ++i) m[i] = std::clamp(f[i], a, b);
        }
        return m;
    }

    [[nodiscard]] ContextSample draw_around(const Vector& mean, CounterRng& rng) const {
        Vector z(box_.dim);
        for (std::size_t i = 0; i < box_.dim; ++i) z[i] = mean[i] + noise_.draw_coordinate(rng);
        return detail::with_labels(std::move(z), labels_, rng);
    }

    [[nodiscard]] ContextSample draw(HistoryView h, CounterRng& rng) const override {
        return draw_around(mean_for(h), rng);
    }

private:
    ContextBox box_;
    NoiseSpec noise_;
    Policy policy_;
    double period_;
    ThetaToFeature track_;
    LabelFn labels_;
    SmoothnessClass cls_;
};

// (c) greedy: the mean maximizing the learner's last-played expected loss
// over a candidate grid, estimated with fixed probe offsets, then smoothed.
class GreedyAdversary final : public AdversaryStrategy {
public:
    GreedyAdversary(std::shared_ptr<const LossSpec> loss, ContextBox box, NoiseSpec noise,
                    std::size_t candidates_per_dim = 9, std::size_t probes = 16,
                    LabelFn labels = {}, std::uint64_t probe_seed = 0x5EED)
        : loss_(std::move(loss)), box_(box), noise_(noise), labels_(std::move(labels)) {
        if (!loss_) throw std::invalid_argument("GreedyAdversary: loss required");
        box_.validate();
        noise_.validate();
        if (box_.hi - box_.lo < noise_.width)
            throw std::invalid_argument("GreedyAdversary: noise wider than the box");
        if (candidates_per_dim < 1 || probes < 1)
            throw std::invalid_argument("GreedyAdversary: need at least one candidate and probe");
        double total = 1.0;
        for (std::size_t i = 0; i < box_.dim; ++i) total *= static_cast<double>(candidates_per_dim);
        if (total > 4096.0) throw std::invalid_argument("GreedyAdversary: candidate grid too large");
        const double a = box_.lo + noise_.width / 2.0;
        const double b = box_.hi - noise_.width / 2.0;
        const std::size_t count = static_cast<std::size_t>(total);
        for (std::size_t c = 0; c < count; ++c) {
            Vector m(box_.dim);
            std::size_t rem = c;
            for (std::size_t i = 0; i < box_.dim; ++i) {
                const std::size_t k = rem % candidates_per_dim;
                rem /= candidates_per_dim;
                m[i] = candidates_per_dim == 1 ? 0.5 * (a + b)
                                               : a + (b - a) * static_cast<double>(k) / static_cast<double>(candidates_per_dim - 1);
            }
            candidates_.push_back(std::move(m));
        }
        CounterRng pr(probe_seed);
        for (std::size_t p = 0; p < probes; ++p) {
            Vector off(box_.dim);
            for (double& v : off) v = noise_.draw_coordinate(pr);
            offsets_.push_back(std::move(off));
            probe_rngs_.push_back(pr.substream(Purpose::labels, p));
        }
        cls_ = SmoothnessClass{DirectionallySmooth{noise_.sigma_dir(box_.dim)}, box_.dim, box_.bound()};
        cls_.validate();
    }

    [[nodiscard]] const SmoothnessClass& smoothness_class() const override { return cls_; }
    [[nodiscard]] std::string_view name() const override { return "greedy"; }

    [[nodiscard]] Vector mean_for(HistoryView h) const {
        if (h.thetas.empty()) return candidates_[candidates_.size() / 2];
        const ParamPoint& theta = h.thetas.back();
        double best = -1.0;
        std::size_t best_idx = 0;
        for (std::size_t c = 0; c < candidates_.size(); ++c) {
            double total = 0.0;
            for (std::size_t p = 0; p < offsets_.size(); ++p) {
                Vector z(box_.dim);
                for (std::size_t i = 0; i < box_.dim; ++i) z[i] = candidates_[c][i] + offsets_[p][i];
                CounterRng lr = probe_rngs_[p];
                ContextSample s;
                if (labels_) s.payload = labels_(z, lr);
                s.z = std::move(z);
                total += loss_->eval(theta, s);
            }
            if (total > best) { best = total; best_idx = c; }
        }
        return candidates_[best_idx];
    }

    [[nodiscard]] ContextSample draw(HistoryView h, CounterRng& rng) const override {
        const Vector m = mean_for(h);
        Vector z(box_.dim);
        for (std::size_t i = 0; i < box_.dim; ++i) z[i] = m[i] + noise_.draw_coordinate(rng);
        return detail::with_labels(std::move(z), labels_, rng);
    }

private:
    std::shared_ptr<const LossSpec> loss_;
    ContextBox box_;
    NoiseSpec noise_;
    LabelFn labels_;
    SmoothnessClass cls_;
    std::vector<Vector> candidates_;
    std::vector<Vector> offsets_;
    std::vector<CounterRng> probe_rngs_;
};

// A point mass has unbounded density, so it is never a member of a smooth
// class; constructing one with such a declaration is rejected.
class PointMassAdversary final : public AdversaryStrategy {
public:
    PointMassAdversary(Vector point, SmoothnessClass declared) : point_(std::move(point)), cls_(std::move(declared)) {
        throw std::invalid_argument("PointMassAdversary: a point mass is not in any smooth class");
    }
    [[nodiscard]] const SmoothnessClass& smoothness_class() const override { return cls_; }
    [[nodiscard]] std::string_view name() const override { return "point_mass"; }
    [[nodiscard]] ContextSample draw(HistoryView, CounterRng&) const override { return {point_, {}}; }

private:
    Vector point_;
    SmoothnessClass cls_;
};

// Frozen conditional law of a strategy at a fixed history.
using Distribution = std::function<ContextSample(CounterRng&)>;

inline Distribution freeze(std::shared_ptr<const AdversaryStrategy> strategy,
                           std::vector<ContextSample> contexts = {},
                           std::vector<ParamPoint> thetas = {}) {
    auto ctx = std::make_shared<const std::vector<ContextSample>>(std::move(contexts));
    auto th = std::make_shared<const std::vector<ParamPoint>>(std::move(thetas));
    return [strategy = std::move(strategy), ctx, th](CounterRng& rng) {
        return sample_context(*strategy, HistoryView{*ctx, *th}, rng);
    };
}

struct DirectionalEstimate {
    double sigma = 0.0;
    double bin_width = 0.0;
    std::size_t bins = 0;
    bool degenerate = false;
    Vector worst_direction;
};

inline std::size_t default_bins(std::size_t n) {
    return static_cast<std::size_t>(std::ceil(std::cbrt(static_cast<double>(n)) - 1e-12));
}

// Directions: coordinate axes, then pairwise (e_i +- e_j)/sqrt2, then random.
inline std::vector<Vector> probe_directions(std::size_t dim, std::size_t count, CounterRng rng) {
    std::vector<Vector> dirs;
    for (std::size_t i = 0; i < dim && dirs.size() < count; ++i) {
        Vector u(dim, 0.0);
        u[i] = 1.0;
        dirs.push_back(std::move(u));
    }
    for (std::size_t i = 0; i < dim && dirs.size() < count; ++i)
        for (std::size_t j = i + 1; j < dim && dirs.size() < count; ++j)
            for (double s : {1.0, -1.0}) {
                if (dirs.size() >= count) break;
                Vector u(dim, 0.0);
                u[i] = 1.0 / std::numbers::sqrt2;
                u[j] = s / std::numbers::sqrt2;
                dirs.push_back(std::move(u));
            }
    while (dirs.size() < count) {
        Vector u(dim);
        double n2 = 0.0;
        for (double& v : u) { v = rng.normal(); n2 += v * v; }
        if (n2 == 0.0) continue;
        for (double& v : u) v /= std::sqrt(n2);
        dirs.push_back(std::move(u));
    }
    return dirs;
}

inline double histogram_peak_density(std::span<const double> values, std::size_t bins, double* width_out) {
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    const double lo = *mn, hi = *mx;
    if (hi <= lo) {
        if (width_out) *width_out = 0.0;
        return std::numeric_limits<double>::infinity();
    }
    const double width = (hi - lo) / static_cast<double>(bins);
    std::vector<std::size_t> counts(bins, 0);
    for (double v : values) {
        auto b = static_cast<std::size_t>((v - lo) / width);
        counts[std::min(b, bins - 1)]++;
    }
    const std::size_t peak = *std::max_element(counts.begin(), counts.end());
    if (width_out) *width_out = width;
    return static_cast<double>(peak) / (static_cast<double>(values.size()) * width);
}

inline DirectionalEstimate estimate_directional_smoothness(std::span<const ContextSample> samples,
                                                           std::size_t n_directions,
                                                           std::size_t n_bins = 0,
                                                           std::uint64_t seed = 0) {
    if (samples.size() < 1000)
        throw std::invalid_argument("estimate_directional_smoothness: need at least 1000 samples");
    const std::size_t dim = samples.front().z.size();
    if (dim == 0) throw std::invalid_argument("estimate_directional_smoothness: empty contexts");
    if (n_bins == 0) n_bins = default_bins(samples.size());
    const auto dirs = probe_directions(dim, std::max<std::size_t>(n_directions, 1),
                                       CounterRng(seed).substream(Purpose::directions));
    DirectionalEstimate est;
    est.bins = n_bins;
    double worst = 0.0;
    Vector proj(samples.size());
    for (const Vector& u : dirs) {
        for (std::size_t k = 0; k < samples.size(); ++k) proj[k] = dot(u, samples[k].z);
        double width = 0.0;
        const double peak = histogram_peak_density(proj, n_bins, &width);
        if (!std::isfinite(peak)) {
            est.sigma = 0.0;
            est.degenerate = true;
            est.worst_direction = u;
            est.bin_width = 0.0;
            return est;
        }
        if (peak > worst) {
            worst = peak;
            est.bin_width = width;
            est.worst_direction = u;
        }
    }
    est.sigma = 1.0 / worst;
    return est;
}

struct PolynomialEstimate {
    double sigma_poly = 0.0;
    bool degenerate = false;
    std::size_t worst_polynomial = 0;
    double worst_epsilon = 0.0;
};

inline PolynomialEstimate estimate_polynomial_smoothness(std::span<const ContextSample> samples, unsigned degree,
                                                         std::span<const Polynomial> tests,
                                                         std::span<const double> epsilon_grid) {
    if (samples.empty()) throw std::invalid_argument("estimate_polynomial_smoothness: no samples");
    if (tests.empty() || epsilon_grid.empty())
        throw std::invalid_argument("estimate_polynomial_smoothness: need test polynomials and epsilons");
    for (const Polynomial& f : tests) {
        if (f.degree() != degree)
            throw std::invalid_argument("estimate_polynomial_smoothness: test polynomial has the wrong degree");
        if (std::abs(f.top_norm() - 1.0) > 1e-9)
            throw std::invalid_argument("estimate_polynomial_smoothness: top-degree coefficient norm must be 1");
    }
    for (double e : epsilon_grid)
        if (!(e > 0.0)) throw std::invalid_argument("estimate_polynomial_smoothness: epsilon must be positive");
    PolynomialEstimate est;
    est.sigma_poly = std::numeric_limits<double>::infinity();
    const double n = static_cast<double>(samples.size());
    Vector vals(samples.size());
    for (std::size_t fi = 0; fi < tests.size(); ++fi) {
        for (std::size_t k = 0; k < samples.size(); ++k) vals[k] = tests[fi].eval(samples[k].z);
        std::sort(vals.begin(), vals.end());
        if (vals.front() == vals.back()) {
            est.sigma_poly = 0.0;
            est.degenerate = true;
            est.worst_polynomial = fi;
            return est;
        }
        for (double eps : epsilon_grid) {
            // Largest count inside any closed window of width 2 eps.
            std::size_t best = 0, lo = 0;
            for (std::size_t hi = 0; hi < vals.size(); ++hi) {
                while (vals[hi] - vals[lo] > 2.0 * eps) ++lo;
                best = std::max(best, hi - lo + 1);
            }
            const double p = static_cast<double>(best) / n;
            const double cand = std::pow(eps, 1.0 / static_cast<double>(degree)) / p;
            if (cand < est.sigma_poly) {
                est.sigma_poly = cand;
                est.worst_polynomial = fi;
                est.worst_epsilon = eps;
            }
        }
    }
    return est;
}

}  // namespace sftpl
