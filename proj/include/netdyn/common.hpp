#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace netdyn {

// Errors carry the failing stage/op in the message; the CLI maps them to exit codes.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct StageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Counter-based seed derivation: one root seed, independent stream per stage index.
inline uint64_t split_seed(uint64_t root, uint64_t index) {
    return splitmix64(root ^ splitmix64(index + 1));
}

inline uint64_t split_seed(uint64_t root, const std::string& tag) {
    uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return splitmix64(root ^ h);
}

// mt19937_64 gives a portable deterministic stream; the std:: distributions do
// not, so the transforms below are hand-rolled.
using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) {
    return double(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_range(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {  // inclusive bounds
    return lo + int(rng() % uint64_t(hi - lo + 1));
}

inline double gaussian(Rng& rng, double mu = 0.0, double sigma = 1.0) {
    // Box-Muller, one value per two draws; avoids log(0).
    double u1 = uniform01(rng);
    double u2 = uniform01(rng);
    if (u1 < 1e-300) u1 = 1e-300;
    return mu + sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace netdyn
