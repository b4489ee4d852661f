#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string_view>

#include "sftpl/core.hpp"
#include "sftpl/smoothing.hpp"

namespace sftpl {

// s(v) = +1 for v >= 0, else -1.
constexpr double threshold_sign(double v) noexcept { return v >= 0.0 ? 1.0 : -1.0; }

// One-dimensional thresholds: loss I[y != s(x - theta)], theta in [lo, hi].
// rho = 2 I[the two thresholds classify x differently].
class ThresholdEnv final : public LossSpec, public PseudoMetricSpec {
public:
    explicit ThresholdEnv(double lo = 0.0, double hi = 1.0)
        : space_(Vector{lo}, Vector{hi}, 1) {}

    [[nodiscard]] const ParamSpace& space() const override { return space_; }
    [[nodiscard]] std::string_view name() const override { return "threshold"; }
    [[nodiscard]] std::size_t context_dim() const override { return 1; }
    [[nodiscard]] const PseudoMetricSpec* metric() const override { return this; }

    [[nodiscard]] double predict(double theta, double x) const noexcept { return threshold_sign(x - theta); }

    [[nodiscard]] double eval(const ParamPoint& theta, const ContextSample& z) const override {
        check(theta, z);
        if (z.payload.empty()) throw std::invalid_argument("ThresholdEnv: context carries no label");
        return z.payload[0] != predict(theta[0], z.z[0]) ? 1.0 : 0.0;
    }

    [[nodiscard]] double hypothesis(const ParamPoint& theta, const ContextSample& x) const override {
        check(theta, x);
        return predict(theta[0], x.z[0]);
    }

    [[nodiscard]] double rho(const ParamPoint& a, const ParamPoint& b, const ContextSample& z) const override {
        check(a, z);
        check(b, z);
        return predict(a[0], z.z[0]) != predict(b[0], z.z[0]) ? 1.0 : 0.0;
    }
    [[nodiscard]] double diameter_bound() const override { return 1.0; }
    [[nodiscard]] std::string_view metric_id() const override { return "threshold_disagreement"; }

    // A 0-1 loss changes only where the predictions do, so the disagreement
    // indicator dominates. E rho = P(x between the thresholds) <= |dtheta| / sigma_dir.
    [[nodiscard]] std::optional<IsometryConstants> isometry(const SmoothnessClass& cls) const override {
        if (!cls.is_directional()) return std::nullopt;
        return IsometryConstants{1.0 / cls.sigma_dir(), 1.0};
    }

private:
    void check(const ParamPoint& theta, const ContextSample& z) const {
        if (theta.size() != 1) throw std::invalid_argument("ThresholdEnv: parameter must be scalar");
        if (z.z.size() != 1) throw std::invalid_argument("ThresholdEnv: context must be scalar");
    }

    ParamSpace space_;
};

}  // namespace sftpl
