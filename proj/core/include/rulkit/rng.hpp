#pragma once

#include <cstdint>
#include <random>

namespace rulkit {

// splitmix64; used to whiten seeds and derive independent streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// Deterministic RNG with bit-stable output everywhere. mt19937_64 is fully
// specified by the standard; the distributions are hand-rolled because
// std::uniform_*_distribution sequences are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1): 53 random mantissa bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform on [lo, hi).
    double uniform(double lo, double hi) { return lo + uniform() * (hi - lo); }

    // Uniform integer on [0, n). Rejection-free modulo is fine here: n is
    // always tiny relative to 2^64 so the bias is < 2^-40.
    std::uint64_t below(std::uint64_t n) { return engine_() % n; }

    // Fisher-Yates; deterministic given the seed.
    template <typename Vec>
    void shuffle(Vec& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace rulkit
