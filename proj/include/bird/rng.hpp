#pragma once

#include <cmath>
#include <cstdint>

namespace bird {

// SplitMix64 generator. Every random decision in the project flows through
// this so that runs are reproducible across compilers and standard libraries
// (std::shuffle / std::*_distribution are implementation-defined).
struct SplitMix64 {
    uint64_t state = 0;

    SplitMix64() = default;
    explicit SplitMix64(uint64_t seed) : state(seed) {}

    uint64_t next() {
        uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in (0, 1]; never returns 0 so it is safe inside log().
    double uniform01() {
        return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Box-Muller; consumes two raw draws per normal variate.
    double normal() {
        const double u1 = uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Unbiased-enough bounded draw (multiply-shift), deterministic everywhere.
    uint64_t below(uint64_t n) {
        return static_cast<uint64_t>((static_cast<unsigned __int128>(next()) * n) >> 64);
    }

    template <typename T>
    void shuffle(T& seq) {
        for (size_t i = seq.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(seq[i - 1], seq[j]);
        }
    }
};

// Named counter-based stream: mixes the key tuple through one extra SplitMix64
// round per component. Used by the data generator so that every
// (sequence, frame, target) draws from its own independent stream.
inline SplitMix64 substream(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    SplitMix64 r(seed);
    r.state ^= r.next() + a;
    r.state ^= r.next() + b;
    r.state ^= r.next() + c;
    r.next();
    return r;
}

}  // namespace bird
