#include "zerocred/dists.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace zerocred {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

[[noreturn]] void domain_fail(const std::string& what) {
  throw std::domain_error(what);
}
}  // namespace

void validate(const CountDist& dist) {
  std::visit(
      [](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Poisson>) {
          if (!(d.lambda > 0.0) || !std::isfinite(d.lambda))
            domain_fail("Poisson: lambda must be positive and finite");
        } else if constexpr (std::is_same_v<T, NegBin>) {
          if (!(d.r > 0.0) || !std::isfinite(d.r))
            domain_fail("NegBin: r must be positive and finite");
          if (!(d.p > 0.0 && d.p < 1.0))
            domain_fail("NegBin: p must lie in (0, 1)");
        } else {
          if (!(d.theta >= 0.0 && d.theta <= 1.0))
            domain_fail("Bernoulli: theta must lie in [0, 1]");
        }
      },
      dist);
}

double count_logpmf(const CountDist& dist, long n) {
  validate(dist);
  if (n < 0) throw std::domain_error("count_logpmf: n must be non-negative");
  return std::visit(
      [n](const auto& d) -> double {
        using T = std::decay_t<decltype(d)>;
        const double nd = static_cast<double>(n);
        if constexpr (std::is_same_v<T, Poisson>) {
          return nd * std::log(d.lambda) - d.lambda - std::lgamma(nd + 1.0);
        } else if constexpr (std::is_same_v<T, NegBin>) {
          return std::lgamma(nd + d.r) - std::lgamma(d.r) - std::lgamma(nd + 1.0) +
                 d.r * std::log1p(-d.p) + nd * std::log(d.p);
        } else {
          if (n == 0) return d.theta < 1.0 ? std::log1p(-d.theta) : kNegInf;
          if (n == 1) return d.theta > 0.0 ? std::log(d.theta) : kNegInf;
          return kNegInf;
        }
      },
      dist);
}

double count_pmf(const CountDist& dist, long n) {
  return std::exp(count_logpmf(dist, n));
}

double count_mean(const CountDist& dist) {
  validate(dist);
  return std::visit(
      [](const auto& d) -> double {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Poisson>) return d.lambda;
        else if constexpr (std::is_same_v<T, NegBin>) return d.r * d.p / (1.0 - d.p);
        else return d.theta;
      },
      dist);
}

long count_support_max(const CountDist& dist, double tail) {
  validate(dist);
  if (std::holds_alternative<Bernoulli>(dist)) return 1;
  const double target = 1.0 - tail;
  double cum = 0.0;
  for (long n = 0; n <= kSupportCap; ++n) {
    cum += count_pmf(dist, n);
    if (cum >= target) return n;
  }
  return kSupportCap;
}

long count_sample(const CountDist& dist, Rng& rng) {
  validate(dist);
  return std::visit(
      [&rng](const auto& d) -> long {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Poisson>) return rng.poisson(d.lambda);
        else if constexpr (std::is_same_v<T, NegBin>) return rng.negbin(d.r, d.p);
        else return rng.bernoulli(d.theta) ? 1 : 0;
      },
      dist);
}

void validate(const REPriorLaw& law) {
  std::visit(
      [](const auto& l) {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, BivariateNormal>) {
          if (!(l.s1sq > 0.0) || !(l.s2sq > 0.0))
            domain_fail("BivariateNormal: variances must be positive");
          if (!(l.rho > -1.0 && l.rho < 1.0))
            domain_fail("BivariateNormal: rho must lie in (-1, 1)");
          if (!std::isfinite(l.mu1) || !std::isfinite(l.mu2))
            domain_fail("BivariateNormal: means must be finite");
        } else if constexpr (std::is_same_v<T, BetaGamma>) {
          if (!(l.a > 0.0 && l.b > 0.0 && l.alpha > 0.0 && l.beta > 0.0))
            domain_fail("BetaGamma: all shape/rate parameters must be positive");
        } else {
          if (!(l.var > 0.0)) domain_fail("ScalarNormal: variance must be positive");
          if (!std::isfinite(l.mean)) domain_fail("ScalarNormal: mean must be finite");
        }
      },
      law);
}

int prior_dim(const REPriorLaw& law) {
  return std::holds_alternative<ScalarNormal>(law) ? 1 : 2;
}

double prior_logpdf(const REPriorLaw& law, std::span<const double> theta) {
  validate(law);
  if (static_cast<int>(theta.size()) != prior_dim(law))
    throw std::invalid_argument("prior_logpdf: theta dimension does not match law");
  constexpr double kLog2Pi = 1.8378770664093454836;
  return std::visit(
      [&theta](const auto& l) -> double {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, BivariateNormal>) {
          const double s1 = std::sqrt(l.s1sq), s2 = std::sqrt(l.s2sq);
          const double z1 = (theta[0] - l.mu1) / s1;
          const double z2 = (theta[1] - l.mu2) / s2;
          const double omr = 1.0 - l.rho * l.rho;
          const double quad = (z1 * z1 - 2.0 * l.rho * z1 * z2 + z2 * z2) / omr;
          return -kLog2Pi - std::log(s1 * s2) - 0.5 * std::log(omr) - 0.5 * quad;
        } else if constexpr (std::is_same_v<T, BetaGamma>) {
          const double t1 = theta[0], t2 = theta[1];
          if (!(t1 > 0.0 && t1 < 1.0) || !(t2 > 0.0)) return kNegInf;
          const double logbeta = std::lgamma(l.a) + std::lgamma(l.b) - std::lgamma(l.a + l.b);
          const double lp1 = (l.a - 1.0) * std::log(t1) + (l.b - 1.0) * std::log1p(-t1) - logbeta;
          const double lp2 = l.alpha * std::log(l.beta) - std::lgamma(l.alpha) +
                             (l.alpha - 1.0) * std::log(t2) - l.beta * t2;
          return lp1 + lp2;
        } else {
          const double z = theta[0] - l.mean;
          return -0.5 * (kLog2Pi + std::log(l.var)) - 0.5 * z * z / l.var;
        }
      },
      law);
}

std::vector<double> sample_prior(const REPriorLaw& law, Rng& rng) {
  validate(law);
  return std::visit(
      [&rng](const auto& l) -> std::vector<double> {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, BivariateNormal>) {
          const double z1 = rng.normal(), z2 = rng.normal();
          const double s1 = std::sqrt(l.s1sq), s2 = std::sqrt(l.s2sq);
          // Lower Cholesky of [[s1^2, rho s1 s2], [rho s1 s2, s2^2]].
          const double t1 = l.mu1 + s1 * z1;
          const double t2 = l.mu2 + s2 * (l.rho * z1 + std::sqrt(1.0 - l.rho * l.rho) * z2);
          return {t1, t2};
        } else if constexpr (std::is_same_v<T, BetaGamma>) {
          return {rng.beta(l.a, l.b), rng.gamma(l.alpha, l.beta)};
        } else {
          return {l.mean + std::sqrt(l.var) * rng.normal()};
        }
      },
      law);
}

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double log_logistic(double x) { return -softplus(-x); }

double log1m_logistic(double x) { return -softplus(x); }

double link_eval(LinkFn fn, double x) {
  switch (fn) {
    case LinkFn::Exp: return std::exp(x);
    case LinkFn::Softplus: return softplus(x);
    case LinkFn::Logistic: return logistic(x);
  }
  throw std::logic_error("link_eval: unknown link");
}

double link_deriv(LinkFn fn, double x) {
  switch (fn) {
    case LinkFn::Exp: return std::exp(x);
    case LinkFn::Softplus: return logistic(x);
    case LinkFn::Logistic: {
      const double s = logistic(x);
      return s * (1.0 - s);
    }
  }
  throw std::logic_error("link_deriv: unknown link");
}

const char* link_name(LinkFn fn) {
  switch (fn) {
    case LinkFn::Exp: return "exp";
    case LinkFn::Softplus: return "softplus";
    case LinkFn::Logistic: return "logistic";
  }
  return "?";
}

LinkFn link_from_name(std::string_view name) {
  if (name == "exp") return LinkFn::Exp;
  if (name == "softplus") return LinkFn::Softplus;
  if (name == "logistic") return LinkFn::Logistic;
  throw std::invalid_argument("unknown link function: " + std::string(name));
}

}  // namespace zerocred
