#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace sftpl {

// splitmix64 finalizer; used both as a hash and as the generator core.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept {
    return splitmix64(a ^ splitmix64(b + 0x632BE59BD9B4E019ULL));
}

// Well-known substream purposes. Values only need to be distinct.
enum class Purpose : std::uint64_t {
    perturbation = 1,
    adversary = 2,
    labels = 3,
    solver = 4,
    monte_carlo = 5,
    probes = 6,
    cells = 7,
    directions = 8,
    restarts = 9,
};

// Counter-based generator: output i is a pure function of (key, i).
// Substreams derive new keys, so draws never depend on scheduling order.
class CounterRng {
public:
    using result_type = std::uint64_t;

    constexpr CounterRng() noexcept : key_(splitmix64(0)) {}
    constexpr explicit CounterRng(std::uint64_t seed) noexcept : key_(splitmix64(seed)) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    constexpr result_type operator()() noexcept {
        return splitmix64(key_ ^ splitmix64(counter_++ * 0xD1B54A32D192ED03ULL));
    }

    [[nodiscard]] constexpr CounterRng substream(std::uint64_t id) const noexcept {
        CounterRng child;
        child.key_ = hash_combine(key_, id);
        return child;
    }
    [[nodiscard]] constexpr CounterRng substream(Purpose p) const noexcept {
        return substream(static_cast<std::uint64_t>(p) * 0xA24BAED4963EE407ULL);
    }
    [[nodiscard]] constexpr CounterRng substream(Purpose p, std::uint64_t id) const noexcept {
        return substream(p).substream(id);
    }

    // Uniform on [0,1) with 53 random bits.
    double uniform() noexcept {
        return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
    }
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    // Inverse CDF; 1-u lies in (0,1] so the log is finite.
    double exponential() noexcept { return -std::log1p(-uniform()); }

    // Box-Muller without caching so every call consumes exactly two words.
    double normal() noexcept {
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    bool bernoulli(double p) noexcept { return uniform() < p; }

    // Unbiased integer in [0, n) by rejection.
    std::uint64_t below(std::uint64_t n) noexcept {
        if (n <= 1) return 0;
        const std::uint64_t limit = max() - max() % n;
        std::uint64_t r;
        do { r = (*this)(); } while (r >= limit);
        return r % n;
    }

    [[nodiscard]] constexpr std::uint64_t key() const noexcept { return key_; }
    [[nodiscard]] constexpr std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

// Per-run key derived from the master seed and the run seed.
constexpr std::uint64_t derive_run_key(std::uint64_t master, std::uint64_t run_seed) noexcept {
    return splitmix64(master ^ splitmix64(run_seed));
}

}  // namespace sftpl
