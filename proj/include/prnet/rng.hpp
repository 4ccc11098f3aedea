#pragma once

#include <cmath>
#include <cstdint>
#include <random>

// Deterministic draw helpers. std::mt19937_64 has a standard-mandated output
// sequence, but the std distributions do not, so all mappings from raw bits
// to values live here.

namespace prnet::rng {

using Engine = std::mt19937_64;

// Uniform in [0, 1), 53 random bits.
inline double uniform_unit(Engine& g) {
    return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline double uniform(Engine& g, double lo, double hi) {
    return lo + (hi - lo) * uniform_unit(g);
}

inline std::uint64_t uniform_index(Engine& g, std::uint64_t n) {
    // Modulo bias is negligible for n << 2^64 and keeps the draw portable.
    return g() % n;
}

// One Gaussian sample via Box-Muller; consumes two uniforms.
inline double normal(Engine& g, double mean, double sd) {
    double u1 = uniform_unit(g);
    double u2 = uniform_unit(g);
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    return mean + sd * z;
}

// In-place Fisher-Yates with explicit index draws.
template <typename Vec>
void shuffle(Vec& v, Engine& g) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(uniform_index(g, i));
        using std::swap;
        swap(v[i - 1], v[j]);
    }
}

}  // namespace prnet::rng
