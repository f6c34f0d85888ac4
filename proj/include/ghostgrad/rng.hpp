#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace ghostgrad {

// Counter-based generator: output = mix(seed, stream, counter). Stateless per
// draw, so any draw can be reproduced from (seed, stream, counter) alone and
// disjoint streams never interact. Mixing is the splitmix64 finalizer.
class CounterRng {
  public:
    // Named streams. Each consumer of randomness gets its own stream so that
    // e.g. adding a diagnostic probe never shifts the batch sequence.
    enum Stream : std::uint64_t {
        kInit = 1,
        kGhostInit = 2,
        kBatch = 3,
        kNoise = 4,
        kProbe = 5,
        kSketch = 6,
        kData = 7,
    };

    CounterRng(std::uint64_t seed, std::uint64_t stream)
        : key_(mix64(seed ^ (0x9E3779B97F4A7C15ULL * (stream + 1)))) {}

    std::uint64_t next_u64() { return mix64(key_ + 0xBF58476D1CE4E5B9ULL * ++counter_); }

    // Uniform double in [0, 1) with 53-bit resolution.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, bound). Rejection sampling keeps it unbiased and
    // platform-independent.
    std::uint64_t next_below(std::uint64_t bound) {
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % bound;
        }
    }

    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Standard normal via Box-Muller; consumes two counters per pair, no cache,
    // so the draw sequence stays a pure function of the counter.
    double next_normal() {
        double u1 = next_double();
        const double u2 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    std::uint64_t counter() const { return counter_; }

    static std::uint64_t mix64(std::uint64_t x) {
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }

  private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace ghostgrad
