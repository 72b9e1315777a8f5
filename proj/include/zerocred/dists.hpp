#pragma once

#include <span>
#include <variant>
#include <vector>

#include "zerocred/rng.hpp"

namespace zerocred {

/// Tail mass left out when a count support is truncated.
inline constexpr double kTailMass = 1e-10;
/// Hard cap on truncated support sizes so downstream sums stay bounded.
inline constexpr long kSupportCap = 10000;

// ---------------------------------------------------------------------------
// Count distributions
// ---------------------------------------------------------------------------

struct Poisson {
  double lambda;  // mean, > 0
};

/// NB(r, p) with pmf C(n+r-1, n) (1-p)^r p^n, mean r p / (1-p).
struct NegBin {
  double r;  // shape, > 0
  double p;  // success probability, in (0, 1)
};

struct Bernoulli {
  double theta;  // in [0, 1]
};

using CountDist = std::variant<Poisson, NegBin, Bernoulli>;

/// Throws std::domain_error if parameters are outside their domain.
void validate(const CountDist& dist);

double count_logpmf(const CountDist& dist, long n);
double count_pmf(const CountDist& dist, long n);
double count_mean(const CountDist& dist);

/// Smallest N with cumulative mass >= 1 - tail, capped at kSupportCap.
long count_support_max(const CountDist& dist, double tail = kTailMass);

long count_sample(const CountDist& dist, Rng& rng);

// ---------------------------------------------------------------------------
// Random-effect prior laws
// ---------------------------------------------------------------------------

struct BivariateNormal {
  double mu1 = 0.0;
  double mu2 = 0.0;
  double s1sq = 1.0;  // > 0
  double s2sq = 1.0;  // > 0
  double rho = 0.0;   // in (-1, 1)
};

/// Independent Beta(a, b) x Gamma(alpha, beta) components.
struct BetaGamma {
  double a = 1.0;
  double b = 1.0;
  double alpha = 1.0;
  double beta = 1.0;
};

struct ScalarNormal {
  double mean = 0.0;
  double var = 1.0;  // > 0
};

using REPriorLaw = std::variant<BivariateNormal, BetaGamma, ScalarNormal>;

void validate(const REPriorLaw& law);

/// 2 for BivariateNormal/BetaGamma, 1 for ScalarNormal.
int prior_dim(const REPriorLaw& law);

/// Log joint density at theta; -inf outside the support.  Throws
/// std::invalid_argument when theta's dimension does not match the law.
double prior_logpdf(const REPriorLaw& law, std::span<const double> theta);

/// One draw from the law (BivariateNormal via Cholesky of its covariance).
std::vector<double> sample_prior(const REPriorLaw& law, Rng& rng);

// ---------------------------------------------------------------------------
// Link / activation functions
// ---------------------------------------------------------------------------

enum class LinkFn { Exp, Softplus, Logistic };

/// sigma(x) = 1 / (1 + e^-x), overflow-safe.
double logistic(double x);
/// ln(1 + e^x), computed as x + log1p(e^-x) for large x.
double softplus(double x);
/// log sigma(x) without intermediate underflow.
double log_logistic(double x);
/// log(1 - sigma(x)).
double log1m_logistic(double x);

double link_eval(LinkFn fn, double x);
double link_deriv(LinkFn fn, double x);

const char* link_name(LinkFn fn);
LinkFn link_from_name(std::string_view name);

}  // namespace zerocred
