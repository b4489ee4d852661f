#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "sftpl/core.hpp"

namespace sftpl {

using Exponents = std::vector<unsigned>;

// Monomials of total degree <= r in `dim` variables, graded lexicographic:
// ascending total degree, and within one degree descending exponent vectors
// (x1^2, x1 x2, x2^2, ...).
inline std::vector<Exponents> graded_lex_monomials(std::size_t dim, unsigned degree) {
    std::vector<Exponents> out;
    Exponents e(dim, 0);
    for (unsigned total = 0; total <= degree; ++total) {
        // Enumerate compositions of `total` into dim parts, lexicographically descending.
        auto rec = [&](auto&& self, std::size_t pos, unsigned left) -> void {
            if (pos + 1 == dim) {
                e[pos] = left;
                out.push_back(e);
                return;
            }
            for (unsigned v = left + 1; v-- > 0;) {
                e[pos] = v;
                self(self, pos + 1, left - v);
            }
        };
        if (dim == 0) {
            if (total == 0) out.push_back({});
            continue;
        }
        rec(rec, 0, total);
    }
    return out;
}

inline std::size_t monomial_count(std::size_t dim, unsigned degree) {
    return graded_lex_monomials(dim, degree).size();
}

class Polynomial {
public:
    Polynomial() = default;
    Polynomial(std::size_t dim, unsigned degree, Vector coeffs)
        : dim_(dim), degree_(degree), monomials_(graded_lex_monomials(dim, degree)),
          coeffs_(std::move(coeffs)) {
        if (degree_ == 0) throw std::invalid_argument("Polynomial: degree must be positive");
        if (coeffs_.size() != monomials_.size())
            throw std::invalid_argument("Polynomial: coefficient count does not match monomials");
    }

    [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
    [[nodiscard]] unsigned degree() const noexcept { return degree_; }
    [[nodiscard]] const Vector& coeffs() const noexcept { return coeffs_; }
    [[nodiscard]] const std::vector<Exponents>& monomials() const noexcept { return monomials_; }

    [[nodiscard]] double eval(std::span<const double> z) const {
        if (z.size() != dim_) throw std::invalid_argument("Polynomial::eval: dimension mismatch");
        double s = 0.0;
        for (std::size_t m = 0; m < monomials_.size(); ++m) {
            if (coeffs_[m] == 0.0) continue;
            double term = coeffs_[m];
            for (std::size_t i = 0; i < dim_; ++i)
                for (unsigned p = 0; p < monomials_[m][i]; ++p) term *= z[i];
            s += term;
        }
        return s;
    }

    // Euclidean norm of the degree-r coefficient block.
    [[nodiscard]] double top_norm() const noexcept { return top_norm_of(coeffs_); }

    [[nodiscard]] double top_norm_of(std::span<const double> c) const noexcept {
        double s = 0.0;
        for (std::size_t m = 0; m < monomials_.size(); ++m)
            if (total_degree(m) == degree_) s += c[m] * c[m];
        return std::sqrt(s);
    }

    [[nodiscard]] unsigned total_degree(std::size_t m) const noexcept {
        unsigned t = 0;
        for (unsigned v : monomials_[m]) t += v;
        return t;
    }

    // Whole coefficient vector divided by the top-block norm; the sign of the
    // polynomial, hence every mode decision, is unchanged.
    [[nodiscard]] Polynomial normalized() const {
        const double n = top_norm();
        if (n == 0.0) throw std::invalid_argument("Polynomial::normalized: zero top-degree block");
        Vector c = coeffs_;
        for (double& v : c) v /= n;
        return Polynomial(dim_, degree_, std::move(c));
    }

    // Evaluates with an external coefficient vector (used for parameter blocks).
    [[nodiscard]] double eval_with(std::span<const double> c, std::span<const double> z) const {
        if (c.size() != monomials_.size()) throw std::invalid_argument("Polynomial: coefficient size");
        double s = 0.0;
        for (std::size_t m = 0; m < monomials_.size(); ++m) {
            if (c[m] == 0.0) continue;
            double term = c[m];
            for (std::size_t i = 0; i < dim_; ++i)
                for (unsigned p = 0; p < monomials_[m][i]; ++p) term *= z[i];
            s += term;
        }
        return s;
    }

private:
    std::size_t dim_ = 0;
    unsigned degree_ = 1;
    std::vector<Exponents> monomials_;
    Vector coeffs_;
};

}  // namespace sftpl
