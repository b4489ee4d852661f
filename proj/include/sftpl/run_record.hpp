#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <optional>
#include <string>
#include <vector>

#include "sftpl/core.hpp"
#include "sftpl/oracle.hpp"

namespace sftpl {

struct ConstantsPolicy {
    double constant = 1.0;        // multiplier standing in for hidden constants
    bool polylog_factors = false;  // polylog factors set to 1
};

struct HyperParams {
    double eta = 0.0;
    std::size_t n = 1;
    std::string rule_id = "explicit";
    ConstantsPolicy constants;
    bool eta_capped = false;
    bool n_capped = false;

    void validate() const {
        if (!(eta >= 0.0) || !std::isfinite(eta)) throw std::invalid_argument("HyperParams: eta must be finite and nonnegative");
        if (n < 1) throw std::invalid_argument("HyperParams: epoch length must be at least 1");
    }
};

// 64-bit FNV-1a over the bit patterns of the context.
inline std::uint64_t context_digest(const ContextSample& s) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    auto mix = [&h](double v) {
        std::uint64_t bits;
        static_assert(sizeof bits == sizeof v);
        std::memcpy(&bits, &v, sizeof bits);
        for (int i = 0; i < 8; ++i) {
            h ^= (bits >> (8 * i)) & 0xFFu;
            h *= 0x100000001B3ULL;
        }
    };
    for (double v : s.z) mix(v);
    mix(static_cast<double>(s.payload.size()));
    for (double v : s.payload) mix(v);
    return h;
}

struct StepRecord {
    std::size_t t = 0;
    std::uint64_t z_digest = 0;
    std::size_t epoch = 0;
    double loss = 0.0;
};

struct PerturbationSummary {
    std::string kind;  // "exponential" or "gaussian_process"
    double eta = 0.0;
    std::uint64_t seed = 0;
    double xi_l1 = 0.0;      // exponential only
    std::size_t anchors = 0;  // Gaussian process only
};

struct EpochRecord {
    std::size_t epoch = 0;
    ParamPoint theta;
    PerturbationSummary perturbation;
    double objective = 0.0;
    GammaKind gamma_kind = GammaKind::uncertified;
    double gamma = 0.0;
    // Leader after this epoch's data under this epoch's perturbation; a
    // diagnostic solve not counted as an oracle call.
    std::optional<ParamPoint> shared_successor;
};

struct RunRecord {
    std::string env;
    std::string adversary;
    std::string solver;
    std::size_t T = 0;
    HyperParams hyper;
    std::uint64_t seed = 0;
    std::vector<StepRecord> steps;
    std::vector<EpochRecord> epochs;
    std::vector<ContextSample> contexts;
    std::size_t oracle_call_count = 0;
    std::size_t diagnostic_calls = 0;
    bool valid = true;
    std::string failure;
    std::vector<std::string> warnings;
    double cumulative_loss = 0.0;

    [[nodiscard]] const ParamPoint& theta_at_step(std::size_t t) const { return epochs.at(steps.at(t - 1).epoch - 1).theta; }
};

}  // namespace sftpl
