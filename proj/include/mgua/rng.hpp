#pragma once

#include <cstdint>
#include <random>

namespace mgua {

// Deterministic RNG used everywhere randomness appears. All derived values
// (uniform ints/reals) are produced by our own reductions of the raw 64-bit
// stream, so a given seed yields the same sequence on every platform and
// standard library. Never use std::uniform_*_distribution on reproducible
// paths: their output is implementation-defined.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // [0, bound). Modulo reduction: the tiny bias is irrelevant here,
    // determinism is what matters.
    uint64_t uniform_u64(uint64_t bound) {
        return bound == 0 ? 0 : next_u64() % bound;
    }

    // Inclusive range.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        return lo + static_cast<int64_t>(uniform_u64(static_cast<uint64_t>(hi - lo) + 1));
    }

    // [0, 1) with 53 random bits.
    double uniform_real() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform_real(double lo, double hi) { return lo + (hi - lo) * uniform_real(); }

    // Log-uniform over [lo, hi], lo > 0.
    double log_uniform(double lo, double hi);

    bool bernoulli(double p) { return uniform_real() < p; }

private:
    std::mt19937_64 gen_;
};

// SplitMix64 finalizer; used to derive independent sub-stream seeds so one
// stage's draw count never perturbs another stage.
uint64_t mix_seed(uint64_t a, uint64_t b);

}  // namespace mgua
