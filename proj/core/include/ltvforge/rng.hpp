#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace ltvforge {

// splitmix64 finalizer; used to derive independent stream seeds from
// (seed, index...) keys so row/step-level draws are order-independent.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_key(std::uint64_t seed, std::uint64_t a) {
    return mix64(seed ^ mix64(a));
}

inline std::uint64_t mix_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return mix64(mix_key(seed, a) ^ mix64(b + 0x517cc1b727220a95ULL));
}

inline std::uint64_t mix_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return mix64(mix_key(seed, a, b) ^ mix64(c + 0x2545f4914f6cdd1dULL));
}

// Stream of doubles backed by mt19937_64. One instance per (key) scope;
// draw order is part of the reproducibility contract.
class RngStream {
  public:
    explicit RngStream(std::uint64_t key) : engine_(key) {}

    double uniform01() {
        // 53-bit mantissa uniform in [0,1)
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    double normal() {
        // Box-Muller with cached second value; deterministic per stream.
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 6.283185307179586476925286766559 * u2;
        spare_ = radius * std::sin(angle);
        have_spare_ = true;
        return radius * std::cos(angle);
    }

    bool bernoulli(double p) { return uniform01() < p; }

    std::uint64_t next_u64() { return engine_(); }

    std::mt19937_64& engine() { return engine_; }

  private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace ltvforge
