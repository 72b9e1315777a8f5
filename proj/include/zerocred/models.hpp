#pragma once

#include <variant>
#include <vector>

#include "zerocred/dists.hpp"

namespace zerocred {

/// Ordered claim counts y_{1:t}; entries are non-negative integers.
using ClaimHistory = std::vector<long>;

void validate_history(const ClaimHistory& history);

// ---------------------------------------------------------------------------
// Model specifications
//
// All five models share the two-part decomposition of a binary stage Z and a
// count stage N.  The hurdle composition is Y = Z (1 + N); the zero-inflated
// composition is Y = Z N.
// ---------------------------------------------------------------------------

/// Hurdle with Z ~ Ber(sigma(Theta1)), N ~ Pois(exp(Theta2)) and bivariate
/// normal random effects.
struct GaussHurdle {
  BivariateNormal law;
};

/// Hurdle with Z ~ Ber(Theta1), N ~ Pois(Theta2) and independent
/// Beta(a,b) x Gamma(alpha,beta) random effects (conjugate).
struct ConjHurdle {
  BetaGamma law;
};

/// Hurdle with a single scalar random effect driving both stages:
/// Z_t ~ Ber(sigma(c_t + Theta)), N_t ~ Pois(lambda(d_t + Theta)).
struct ComonoHurdle {
  ScalarNormal law;
  LinkFn link = LinkFn::Softplus;
  std::vector<double> c_seq{0.0};
  std::vector<double> d_seq{0.0};
};

/// Hurdle with Z_t ~ Ber(sigma(c_t + Theta)), N_t ~ NB(r, sigma(d_t + Theta/r)).
struct NBHurdle {
  ScalarNormal law;
  double r = 1.0;
  std::vector<double> c_seq{0.0};
  std::vector<double> d_seq{0.0};
};

/// Zero-inflated counterpart of ComonoHurdle: Y_t = Z_t N_t.
struct ZIPComono {
  ScalarNormal law;
  LinkFn link = LinkFn::Softplus;
  std::vector<double> c_seq{0.0};
  std::vector<double> d_seq{0.0};
};

/// Zero-inflated counterpart of GaussHurdle: Z ~ Ber(sigma(Theta1)),
/// N ~ Pois(exp(Theta2)), Y_t = Z_t N_t, bivariate normal random effects.
struct ZIPGauss {
  BivariateNormal law;
};

using ModelSpec =
    std::variant<GaussHurdle, ConjHurdle, ComonoHurdle, NBHurdle, ZIPComono, ZIPGauss>;

void validate(const ModelSpec& spec);

REPriorLaw model_law(const ModelSpec& spec);
bool is_zero_inflated(const ModelSpec& spec);
const char* model_name(const ModelSpec& spec);

/// Exogenous sequences extend as constant after their last entry; querying an
/// empty sequence is a usage error.
double seq_at(const std::vector<double>& seq, long t);

/// Success probability of the binary stage at time t given theta.
double binary_prob(const ModelSpec& spec, long t, std::span<const double> theta);

/// Count-stage distribution at time t given theta.
CountDist count_component(const ModelSpec& spec, long t, std::span<const double> theta);

/// P(Y_t = y | Theta = theta).
double cond_pmf(const ModelSpec& spec, long t, std::span<const double> theta, long y);
double cond_logpmf(const ModelSpec& spec, long t, std::span<const double> theta, long y);

/// E[Y_t | Theta = theta], exact: p (1 + E N) for hurdle, p E N for ZIP.
double cond_mean(const ModelSpec& spec, long t, std::span<const double> theta);

/// Smallest Y bound carrying mass >= 1 - tail of the conditional law at theta.
long cond_support_max(const ModelSpec& spec, long t, std::span<const double> theta,
                      double tail = kTailMass);

/// Log-likelihood of a full history: sum_t log P(Y_t = y_t | theta).
double history_loglik(const ModelSpec& spec, const ClaimHistory& history,
                      std::span<const double> theta);

/// Draws Theta once, then T conditionally independent (Z_t, N_t) pairs.
ClaimHistory simulate_path(const ModelSpec& spec, long periods, Rng& rng);

/// As simulate_path but with the random effect supplied by the caller.
ClaimHistory simulate_path_given(const ModelSpec& spec, long periods,
                                 std::span<const double> theta, Rng& rng);

struct SufficientStats {
  long r_t = 0;  // count of positive entries
  long m_t = 0;  // sum of (y_s - 1) over positive entries
};

SufficientStats sufficient_stats(const ClaimHistory& history);

}  // namespace zerocred
