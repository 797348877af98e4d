#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace overshoot {

/// Stream identifiers for CounterRng. Each consumer of randomness owns one so
/// that optimizer variants sharing a seed see identical noise and minibatches.
enum class Stream : std::uint64_t {
    gradient_noise = 1,
    minibatch = 2,
    init = 3,
    dataset = 4,
    simulation = 5,
    gradcheck = 6,
};

inline constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Counter-based generator keyed by (seed, stream, substream). The n-th output
/// is a pure function of the key and n, so any draw can be replayed without
/// advancing shared state.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, Stream stream, std::uint64_t substream = 0) noexcept
        : key_(mix64(mix64(mix64(seed) ^ static_cast<std::uint64_t>(stream)) ^ mix64(substream))) {}

    std::uint64_t next_u64() noexcept { return mix64(key_ ^ mix64(counter_++)); }

    /// Uniform in [0, 1).
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Slight modulo bias is irrelevant for n << 2^64.
    std::uint64_t below(std::uint64_t n) noexcept { return next_u64() % n; }

    /// Standard normal via Box-Muller. Both variates are used.
    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(angle);
        has_spare_ = true;
        return r * std::cos(angle);
    }

    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace overshoot
