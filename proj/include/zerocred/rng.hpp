#pragma once

#include <cstdint>
#include <random>

namespace zerocred {

/// Mixes one 64-bit word into a well-scrambled output (splitmix64 step).
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives a child seed from a base seed and up to three stream indices
/// (run, entity, chain).  Pure function, so parallel workers can derive
/// their streams independently of scheduling order.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = mix64(base);
  s = mix64(s ^ mix64(a));
  s = mix64(s ^ mix64(b));
  s = mix64(s ^ mix64(c));
  return s;
}

/// 64-bit generator with explicit samplers.  The samplers are implemented
/// here rather than taken from <random> distributions so that a seed pins
/// the byte-exact stream independent of the standard library in use.
/// An Rng is owned by one logical task at a time and never shared.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix64(seed)) {}

  std::uint64_t seed() const { return seed_; }

  /// Independent child stream (run, entity, chain indexing).
  Rng split(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const {
    return Rng(derive_seed(seed_, a, b, c));
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform() { return (engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1] (safe as a log argument).
  double uniform_pos() { return 1.0 - uniform(); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller.  Uncached: one draw consumes two
  /// uniforms, which keeps replay independent of call history.
  double normal() {
    const double u1 = uniform_pos();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Gamma(shape, rate), Marsaglia-Tsang squeeze for shape >= 1 plus the
  /// usual boost for shape < 1.
  double gamma(double shape, double rate) {
    if (shape < 1.0) {
      const double u = uniform_pos();
      return gamma(shape + 1.0, rate) * std::pow(u, 1.0 / shape);
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
      const double u = uniform_pos();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
    }
  }

  /// Beta(a, b) as a ratio of two Gammas.
  double beta(double a, double b) {
    const double x = gamma(a, 1.0);
    const double y = gamma(b, 1.0);
    return x / (x + y);
  }

  /// Poisson: inversion by sequential search for small means, PTRS
  /// transformed rejection (Hoermann) otherwise.
  long poisson(double lambda) {
    if (lambda <= 0.0) return 0;
    if (lambda < 30.0) {
      const double target = std::exp(-lambda);
      long n = 0;
      double prod = uniform_pos();
      while (prod > target) {
        prod *= uniform_pos();
        ++n;
      }
      return n;
    }
    return poisson_ptrs(lambda);
  }

  /// NB(r, p) in the (shape, success-probability) parameterization with
  /// mean r p / (1 - p), drawn as a Gamma-Poisson mixture.
  long negbin(double r, double p) {
    const double lambda = gamma(r, (1.0 - p) / p);
    return poisson(lambda);
  }

 private:
  static constexpr double kPi = 3.14159265358979323846;

  long poisson_ptrs(double lambda) {
    const double slam = std::sqrt(lambda);
    const double loglam = std::log(lambda);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double vr = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
      const double u = uniform() - 0.5;
      const double v = uniform_pos();
      const double us = 0.5 - std::abs(u);
      const double k = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
      if (us >= 0.07 && v <= vr) return static_cast<long>(k);
      if (k < 0.0 || (us < 0.013 && v > us)) continue;
      if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
          k * loglam - lambda - std::lgamma(k + 1.0)) {
        return static_cast<long>(k);
      }
    }
  }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace zerocred
