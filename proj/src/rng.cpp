#include "isac/rng.hpp"

#include <cmath>
#include <numbers>

namespace isac {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

std::uint64_t Rng::next_u64() { return gen_(); }

double Rng::uniform() {
    // 53 random bits -> [0, 1)
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t Rng::uniform_index(std::uint64_t n) {
    // modulo bias is < 2^-53 for the n used here (constellation sizes, grids)
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
}

double Rng::gaussian() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_;
    }
    double u1 = uniform();
    while (u1 <= 0.0)
        u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phi = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(phi);
    has_cached_ = true;
    return r * std::cos(phi);
}

double Rng::gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

std::complex<double> Rng::cgaussian(double var) {
    const double s = std::sqrt(var * 0.5);
    const double re = gaussian() * s;
    const double im = gaussian() * s;
    return {re, im};
}

Rng Rng::derive(std::uint64_t tag) const {
    return Rng(splitmix64(seed_ ^ splitmix64(tag + 0x632be59bd9b4e019ULL)));
}

} // namespace isac
