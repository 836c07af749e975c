#pragma once

#include <cmath>
#include <cstdint>

namespace ostr {

// SplitMix64 generator. Used everywhere randomness is needed so that dataset
// builds and training runs are reproducible bit-for-bit across platforms;
// std::uniform_*_distribution output is implementation-defined and would not be.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // Unbiased integer in [0, n) via rejection.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) return 0;
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return v % n;
    }

    // Standard normal via Box-Muller (both draws consumed for determinism).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Derive an independent stream, e.g. one per dataset entry.
    Rng fork(std::uint64_t salt) {
        Rng r(state_ ^ (salt * 0xd1b54a32d192ed03ull + 0x63417f4c2f41ecdaull));
        r.next_u64();
        return r;
    }

private:
    std::uint64_t state_;
};

}  // namespace ostr
