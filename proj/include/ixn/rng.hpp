// SPDX-License-Identifier: Apache-2.0

#ifndef IXN_RNG_HPP
#define IXN_RNG_HPP

#include <cmath>
#include <cstdint>

#include "ixn/tensor.hpp"

namespace ixn {

// Deterministic counter-free generator (xoshiro256** seeded via splitmix64).
// Implemented by hand so draw sequences are identical across platforms and
// standard-library versions; identical seed => identical sequence.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) {
        uint64_t x = seed;
        for (auto& si : s_) si = splitmix64(x);
        cached_valid_ = false;
    }

    // Independent stream derived from this seed and a stream id.
    static Rng stream(uint64_t seed, uint64_t id) {
        uint64_t x = seed;
        uint64_t a = splitmix64(x);
        x = a ^ (id * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL);
        return Rng(splitmix64(x));
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    int64_t below(int64_t n) { return static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n)); }

    int64_t range(int64_t lo, int64_t hi_inclusive) { return lo + below(hi_inclusive - lo + 1); }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via Box-Muller; second draw is cached.
    double normal() {
        if (cached_valid_) {
            cached_valid_ = false;
            return cached_;
        }
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        cached_valid_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double std) { return mean + std * normal(); }

    template <class T>
    Tensor<T> normal_tensor(Shape s, double mean = 0.0, double std = 1.0) {
        Tensor<T> t(std::move(s));
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(normal(mean, std));
        return t;
    }

    template <class T>
    Tensor<T> uniform_tensor(Shape s, double lo = 0.0, double hi = 1.0) {
        Tensor<T> t(std::move(s));
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(uniform(lo, hi));
        return t;
    }

    static uint64_t splitmix64(uint64_t& x) {
        uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

private:
    static uint64_t rotl(uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

    uint64_t s_[4];
    double cached_ = 0.0;
    bool cached_valid_ = false;
};

} // namespace ixn

#endif // IXN_RNG_HPP
