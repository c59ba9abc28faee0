#pragma once

#include <cmath>
#include <cstdint>

namespace otrecon {

// Counter-based generator built from the SplitMix64 finalizer. The k-th
// output word is a pure function of (seed, stream, k):
//
//   mix(z): z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//           z ^= z >> 27; z *= 0x94D049BB133111EB;
//           z ^= z >> 31; return z
//   key    = mix(seed + 0x9E3779B97F4A7C15) ^ mix(stream + 0xD1B54A32D192ED03)
//   word_k = mix(key + k * 0x9E3779B97F4A7C15)
//
// Identical (seed, stream) pairs therefore produce identical sequences on
// every platform; distinct streams are decorrelated by the keyed offset.
// Instances are cheap values; they are not meant to be shared across
// threads -- each worker derives its own stream id.
class SeededRng {
public:
    SeededRng(std::uint64_t seed, std::uint64_t stream)
        : key_(mix(seed + GOLDEN) ^ mix(stream + LEAP)), counter_(0) {}

    std::uint64_t next_u64() { return mix(key_ + GOLDEN * counter_++); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, bound), bound >= 1. Multiply-shift with
    // rejection, so the distribution is exact.
    std::uint64_t next_below(std::uint64_t bound) {
        for (;;) {
            std::uint64_t x = next_u64();
            __uint128_t m = static_cast<__uint128_t>(x) * bound;
            auto lo = static_cast<std::uint64_t>(m);
            if (lo >= bound || lo >= (-bound) % bound)
                return static_cast<std::uint64_t>(m >> 64);
        }
    }

    // Standard normal via Box-Muller; consumes two words per draw.
    double gaussian() {
        double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * PI * u2);
    }

private:
    static constexpr std::uint64_t GOLDEN = 0x9E3779B97F4A7C15ull;
    static constexpr std::uint64_t LEAP = 0xD1B54A32D192ED03ull;
    static constexpr double PI = 3.14159265358979323846;

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
    std::uint64_t counter_;
};

} // namespace otrecon
