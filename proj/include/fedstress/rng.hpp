#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace fedstress {

// Seed-mixing helpers. Every random stream in the pipeline is derived from the
// experiment seed through these, so two runs with the same seed agree bit for
// bit regardless of platform or thread count. The raw engine is mt19937_64
// (fully specified by the standard); all value conversions below are our own,
// since the std distributions are implementation-defined.

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t mix_seed(uint64_t a) { return splitmix64(a); }

template <typename... Rest>
uint64_t mix_seed(uint64_t a, uint64_t b, Rest... rest);

template <typename... Rest>
uint64_t mix_seed(uint64_t a, std::string_view tag, Rest... rest);

template <typename... Rest>
uint64_t mix_seed(uint64_t a, uint64_t b, Rest... rest) {
    return mix_seed(splitmix64(a ^ splitmix64(b)), rest...);
}

template <typename... Rest>
uint64_t mix_seed(uint64_t a, std::string_view tag, Rest... rest) {
    return mix_seed(a, fnv1a64(tag), rest...);
}

class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(splitmix64(seed)) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Plain Box-Muller; consumes two draws per sample, no cached spare.
    double normal(double mean, double stddev) {
        double u1 = uniform01();
        double u2 = uniform01();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Uniform integer in [0, n). Modulo bias is irrelevant at our n.
    uint64_t bounded(uint64_t n) { return n == 0 ? 0 : engine_() % n; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(bounded(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace fedstress
