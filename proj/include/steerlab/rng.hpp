#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace steerlab {

/// FNV-1a 64-bit hash; used for sub-stream derivation and file checksums.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t seed = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::string_view s,
                             std::uint64_t seed = 0xcbf29ce484222325ull) {
    return fnv1a64(s.data(), s.size(), seed);
}

/// Deterministic random source. std::mt19937_64 output is pinned by the
/// standard; the distributions below are implemented here (library
/// distributions are implementation-defined and would break cross-platform
/// reproducibility).
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    std::size_t index(std::size_t n) {
        // Modulo bias is negligible for the small n used here.
        return static_cast<std::size_t>(gen_() % n);
    }

    /// Standard normal via Box-Muller (always consumes two uniforms).
    double gaussian() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    /// Child stream keyed by a label; independent of draw order elsewhere.
    Rng derive(std::string_view label) const {
        std::uint64_t h = fnv1a64(&seed_, sizeof(seed_));
        return Rng(fnv1a64(label, h));
    }

  private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
};

}  // namespace steerlab
