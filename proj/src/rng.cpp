#include "rswitch/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace rswitch {

namespace {

constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

// SplitMix64 finalizer: a bijective mixer with full avalanche.
uint64_t mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr double kTwoPi = 6.283185307179586476925;

}  // namespace

Rng::Rng(uint64_t master_seed, uint64_t stream)
    : master_(master_seed), stream_(stream) {
  key_ = mix64(mix64(master_seed + kGolden) ^ mix64(stream * kGolden + 1));
}

uint64_t Rng::next_u64() { return mix64(key_ + kGolden * ++ctr_); }

double Rng::uniform01() {
  // 53-bit mantissa, offset half a step: never exactly 0 or 1.
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

double Rng::normal() {
  const double u1 = uniform01(), u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

double Rng::cauchy(double scale) {
  return scale * std::tan(3.14159265358979323846 * (uniform01() - 0.5));
}

double Rng::gamma(double shape) {
  if (!(shape > 0.0)) throw std::domain_error("Rng::gamma: requires shape > 0");
  if (shape < 1.0) {
    // Boost from shape+1 (Marsaglia-Tsang trick).
    const double u = uniform01();
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform01();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double Rng::beta(double a, double b) {
  const double x = gamma(a);
  const double y = gamma(b);
  return x / (x + y);
}

long Rng::poisson(double mean) {
  if (!(mean >= 0.0)) throw std::domain_error("Rng::poisson: requires mean >= 0");
  if (mean == 0.0) return 0;
  if (mean > 30.0) {
    // Exact split: Poisson(a+b) equals Poisson(a) + Poisson(b).
    const double half = mean * 0.5;
    return poisson(half) + poisson(mean - half);
  }
  const double limit = std::exp(-mean);
  long k = 0;
  double p = 1.0;
  do {
    ++k;
    p *= uniform01();
  } while (p > limit);
  return k - 1;
}

int Rng::bernoulli(double p) { return uniform01() < p ? 1 : 0; }

}  // namespace rswitch
