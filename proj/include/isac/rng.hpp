#ifndef ISAC_RNG_HPP
#define ISAC_RNG_HPP

#include <complex>
#include <cstdint>
#include <random>

namespace isac {

/// Deterministic random stream. All distributions are generated from raw
/// mt19937_64 output with fixed algorithms (no std::*_distribution), so a
/// seed reproduces the same draws on every platform and standard library.
class Rng {
  public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    /// Uniform double in [0, 1).
    double uniform();
    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi);
    /// Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n);

    /// Standard normal via Box-Muller (pairs cached).
    double gaussian();
    /// N(mean, stddev^2).
    double gaussian(double mean, double stddev);
    /// Circularly symmetric complex Gaussian CN(0, var):
    /// real and imaginary parts are independent N(0, var/2).
    std::complex<double> cgaussian(double var);

    /// Independent child stream derived from (seed, tag); the parent state
    /// is not consumed.
    Rng derive(std::uint64_t tag) const;

    std::uint64_t seed() const { return seed_; }

  private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

/// SplitMix64 mixing step; used for seed derivation.
std::uint64_t splitmix64(std::uint64_t x);

} // namespace isac

#endif
