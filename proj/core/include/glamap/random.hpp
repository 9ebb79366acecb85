#pragma once

#include <cstdint>

namespace glamap {

/// Deterministic pseudo-random generator (xoshiro256**). The distributions
/// are hand-rolled so that a fixed seed yields bit-identical streams on any
/// platform, which the dataset and training determinism contracts rely on.
class Rng {
public:
    explicit Rng(uint64_t seed);

    uint64_t next();

    /// Uniform double in [0, 1).
    double uniform();
    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi);
    /// Uniform integer in [lo, hi] inclusive.
    int uniform_int(int lo, int hi);
    /// Standard normal via Box-Muller (no cached second value).
    double normal();
    double normal(double mean, double stddev);
    /// True with probability p.
    bool bernoulli(double p);

    /// Derive an independent stream; `fork(k)` for distinct k never collides
    /// with the parent stream in practice.
    Rng fork(uint64_t stream) const;

private:
    uint64_t s_[4];
};

}  // namespace glamap
