#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sftpl {

using Vector = std::vector<double>;

// Folds -0.0 into +0.0 so exact comparisons are deterministic.
constexpr double canonical(double v) noexcept { return v == 0.0 ? 0.0 : v; }

class ParamSpace {
public:
    ParamSpace() = default;

    // The first dim_continuous coordinates form the continuous block.
    ParamSpace(Vector lower, Vector upper, std::size_t dim_continuous)
        : lower_(std::move(lower)), upper_(std::move(upper)), dim_continuous_(dim_continuous) {
        if (lower_.size() != upper_.size())
            throw std::invalid_argument("ParamSpace: bound vectors differ in length");
        if (dim_continuous_ > lower_.size())
            throw std::invalid_argument("ParamSpace: continuous block larger than the space");
        for (std::size_t i = 0; i < lower_.size(); ++i) {
            if (!std::isfinite(lower_[i]) || !std::isfinite(upper_[i]))
                throw std::invalid_argument("ParamSpace: non-finite bound");
            if (lower_[i] > upper_[i])
                throw std::invalid_argument("ParamSpace: lower bound exceeds upper bound");
            lower_[i] = canonical(lower_[i]);
            upper_[i] = canonical(upper_[i]);
        }
    }

    static ParamSpace box(std::size_t dim, double lo, double hi) {
        return ParamSpace(Vector(dim, lo), Vector(dim, hi), dim);
    }

    [[nodiscard]] std::size_t dim() const noexcept { return lower_.size(); }
    [[nodiscard]] std::size_t dim_continuous() const noexcept { return dim_continuous_; }
    [[nodiscard]] std::size_t dim_discrete() const noexcept { return dim() - dim_continuous_; }
    [[nodiscard]] const Vector& lower() const noexcept { return lower_; }
    [[nodiscard]] const Vector& upper() const noexcept { return upper_; }
    [[nodiscard]] double range(std::size_t i) const { return upper_.at(i) - lower_.at(i); }

    [[nodiscard]] double l1_diameter() const noexcept {
        double d = 0.0;
        for (std::size_t i = 0; i < dim(); ++i) d += upper_[i] - lower_[i];
        return d;
    }
    [[nodiscard]] double linf_bound() const noexcept {
        double b = 0.0;
        for (std::size_t i = 0; i < dim(); ++i)
            b = std::max({b, std::abs(lower_[i]), std::abs(upper_[i])});
        return b;
    }
    [[nodiscard]] bool contains(std::span<const double> p) const noexcept {
        if (p.size() != dim()) return false;
        for (std::size_t i = 0; i < dim(); ++i)
            if (!(p[i] >= lower_[i] && p[i] <= upper_[i])) return false;
        return true;
    }

    friend bool operator==(const ParamSpace&, const ParamSpace&) = default;

private:
    Vector lower_;
    Vector upper_;
    std::size_t dim_continuous_ = 0;
};

struct ParamPoint {
    Vector coords;

    ParamPoint() = default;
    explicit ParamPoint(Vector c) : coords(std::move(c)) {
        for (double& v : coords) v = canonical(v);
    }
    ParamPoint(std::initializer_list<double> c) : ParamPoint(Vector(c)) {}

    [[nodiscard]] std::size_t size() const noexcept { return coords.size(); }
    double operator[](std::size_t i) const { return coords[i]; }
    [[nodiscard]] std::span<const double> span() const noexcept { return coords; }
    [[nodiscard]] std::span<const double> block(std::size_t offset, std::size_t len) const {
        if (offset + len > coords.size()) throw std::out_of_range("ParamPoint::block");
        return std::span<const double>(coords).subspan(offset, len);
    }
    [[nodiscard]] std::span<const double> continuous(const ParamSpace& s) const {
        return block(0, s.dim_continuous());
    }
    [[nodiscard]] std::span<const double> discrete(const ParamSpace& s) const {
        return block(s.dim_continuous(), s.dim_discrete());
    }

    friend bool operator==(const ParamPoint&, const ParamPoint&) = default;
};

// Strict lexicographic order on coordinates, the shared tie-break rule.
inline bool lex_less(const ParamPoint& a, const ParamPoint& b) noexcept {
    return std::lexicographical_compare(a.coords.begin(), a.coords.end(), b.coords.begin(),
                                        b.coords.end());
}

struct ContextSample {
    Vector z;
    Vector payload;  // labels or scenario data; empty when unused

    friend bool operator==(const ContextSample&, const ContextSample&) = default;
};

inline double l1_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("l1_distance: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s;
}
inline double l1_distance(const ParamPoint& a, const ParamPoint& b) {
    return l1_distance(a.span(), b.span());
}

inline double linf_norm(std::span<const double> a) noexcept {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline ParamPoint clamp_to_space(std::span<const double> p, const ParamSpace& s) {
    if (p.size() != s.dim()) throw std::invalid_argument("clamp_to_space: dimension mismatch");
    Vector out(p.begin(), p.end());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::clamp(out[i], s.lower()[i], s.upper()[i]);
    return ParamPoint(std::move(out));
}

struct SmoothnessClass;

struct IsometryConstants {
    double alpha = 0.0;
    double beta = 1.0;
};

class PseudoMetricSpec {
public:
    virtual ~PseudoMetricSpec() = default;
    [[nodiscard]] virtual double rho(const ParamPoint& a, const ParamPoint& b,
                                     const ContextSample& z) const = 0;
    [[nodiscard]] virtual double diameter_bound() const = 0;
    // Pseudo-isometry constants valid for the given class, if known.
    [[nodiscard]] virtual std::optional<IsometryConstants> isometry(const SmoothnessClass&) const {
        return std::nullopt;
    }
    [[nodiscard]] virtual std::string_view metric_id() const = 0;
};

inline double eval_rho(const PseudoMetricSpec& spec, const ParamPoint& a, const ParamPoint& b,
                       const ContextSample& z) {
    return spec.rho(a, b, z);
}

class LossSpec {
public:
    virtual ~LossSpec() = default;
    [[nodiscard]] virtual const ParamSpace& space() const = 0;
    [[nodiscard]] virtual double eval(const ParamPoint& theta, const ContextSample& z) const = 0;
    [[nodiscard]] virtual std::string_view name() const = 0;
    [[nodiscard]] virtual const PseudoMetricSpec* metric() const { return nullptr; }
    // Hypothesis value used by function-space perturbations.
    [[nodiscard]] virtual double hypothesis(const ParamPoint& theta, const ContextSample& x) const {
        return eval(theta, x);
    }
    // Maps a box point onto the feasible set (identity for plain boxes).
    [[nodiscard]] virtual ParamPoint project_feasible(const ParamPoint& theta) const {
        return theta;
    }
    [[nodiscard]] virtual std::size_t context_dim() const = 0;
};

}  // namespace sftpl
