#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>

namespace sftpl::stats {

inline constexpr double z95 = 1.959963984540054;

struct Summary {
    std::size_t count = 0;
    double mean = 0.0;
    double variance = 0.0;  // unbiased
    double standard_error = 0.0;
};

// Welford accumulation, numerically stable for long Monte Carlo runs.
class Accumulator {
public:
    void add(double x) noexcept {
        ++n_;
        const double delta = x - mean_;
        mean_ += delta / static_cast<double>(n_);
        m2_ += delta * (x - mean_);
    }
    void merge(const Accumulator& other) noexcept {
        if (other.n_ == 0) return;
        if (n_ == 0) { *this = other; return; }
        const double n = static_cast<double>(n_ + other.n_);
        const double delta = other.mean_ - mean_;
        mean_ += delta * static_cast<double>(other.n_) / n;
        m2_ += other.m2_ + delta * delta * static_cast<double>(n_) * static_cast<double>(other.n_) / n;
        n_ += other.n_;
    }
    [[nodiscard]] Summary summary() const noexcept {
        Summary s;
        s.count = n_;
        s.mean = mean_;
        s.variance = n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0;
        s.standard_error = n_ > 0 ? std::sqrt(s.variance / static_cast<double>(n_)) : 0.0;
        return s;
    }

private:
    std::size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

inline Summary summarize(std::span<const double> xs) noexcept {
    Accumulator acc;
    for (double x : xs) acc.add(x);
    return acc.summary();
}

struct Interval {
    double lower = 0.0;
    double upper = 0.0;
};

inline Interval wilson_interval(std::size_t successes, std::size_t trials, double z = z95) {
    if (trials == 0) return {0.0, 1.0};
    if (successes > trials) throw std::invalid_argument("wilson_interval: successes exceed trials");
    const double n = static_cast<double>(trials);
    const double p = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double centre = (p + z2 / (2.0 * n)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    // The endpoints are exact at 0 and n; round-off would otherwise leave ~1e-17.
    return {successes == 0 ? 0.0 : std::max(0.0, centre - half), successes == trials ? 1.0 : std::min(1.0, centre + half)};
}

// Binomial standard error of a frequency estimate.
inline double proportion_se(double p, std::size_t trials) noexcept {
    if (trials == 0) return 0.0;
    return std::sqrt(std::max(0.0, p * (1.0 - p)) / static_cast<double>(trials));
}

// P(X >= k) for X ~ Binomial(n, 1/2).
inline double sign_test_p_value(std::size_t wins, std::size_t n) {
    if (wins > n) throw std::invalid_argument("sign_test_p_value: wins exceed trials");
    double tail = 0.0;
    for (std::size_t k = wins; k <= n; ++k) {
        const double log_term = std::lgamma(static_cast<double>(n) + 1.0) -
                                std::lgamma(static_cast<double>(k) + 1.0) -
                                std::lgamma(static_cast<double>(n - k) + 1.0) -
                                static_cast<double>(n) * std::log(2.0);
        tail += std::exp(log_term);
    }
    return std::min(1.0, tail);
}

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
    std::size_t points = 0;
};

inline LinearFit least_squares(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("least_squares: length mismatch");
    const std::size_t n = x.size();
    if (n < 2) throw std::invalid_argument("least_squares: need at least two points");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) { mx += x[i]; my += y[i]; }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0) throw std::invalid_argument("least_squares: degenerate abscissae");
    LinearFit fit;
    fit.points = n;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    if (n > 2) {
        double rss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = y[i] - fit.intercept - fit.slope * x[i];
            rss += r * r;
        }
        fit.slope_se = std::sqrt(rss / static_cast<double>(n - 2) / sxx);
    }
    return fit;
}

}  // namespace sftpl::stats
