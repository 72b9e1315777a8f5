#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>

#include "zerocred/models.hpp"
#include "zerocred/quadrature.hpp"

namespace zerocred {

// ---------------------------------------------------------------------------
// Conjugate posterior (ConjHurdle)
// ---------------------------------------------------------------------------

/// Beta(a*, b*) x Gamma(alpha*, beta*) hyperparameters after observing a
/// history with sufficient statistics (r_t, m_t):
///   a* = a + r_t,  b* = b + t - r_t,  alpha* = alpha + m_t,  beta* = beta + r_t.
struct PosteriorState {
  double a_star = 1.0;
  double b_star = 1.0;
  double alpha_star = 1.0;
  double beta_star = 1.0;
  long r_t = 0;
  long m_t = 0;
  long t = 0;
};

PosteriorState conjugate_update(const BetaGamma& prior, const ClaimHistory& history);

/// One-step-ahead predictive mean a*/(a*+b*) (1 + alpha*/beta*).
double predictive_mean_conjugate(const PosteriorState& state);

/// log P(Y_{t+1} = y | history) under the conjugate posterior (the count
/// stage marginalizes to a negative binomial).
double conjugate_predictive_logpmf(const PosteriorState& state, long y);
long conjugate_predictive_support_max(const PosteriorState& state, double tail = kTailMass);

// ---------------------------------------------------------------------------
// Payoff transforms
// ---------------------------------------------------------------------------

struct Identity {};
struct Deductible {
  long d = 0;
};
struct Limit {
  long d = 0;
};

/// Nondecreasing payoff h applied to counts: y, (y-d)^+ or y ^ d.
using Transform = std::variant<Identity, Deductible, Limit>;

double transform_apply(const Transform& h, long y);
std::string transform_name(const Transform& h);
Transform transform_from_name(const std::string& name);

/// Sum_y h(y) P(Y_t = y | theta) over the truncated support.
double cond_transform_mean(const ModelSpec& spec, long t, std::span<const double> theta,
                           const Transform& h);

// ---------------------------------------------------------------------------
// Posterior evaluation
// ---------------------------------------------------------------------------

enum class Method { Conjugate, Quadrature, MCMC };

const char* method_name(Method m);
Method method_from_name(const std::string& name);

struct MCMCConfig {
  int draws = 1000;              // retained draws per run (S)
  int burnin = 500;
  int thin = 1;
  double proposal_scale = 1.0;   // initial scale, adapted during burn-in
  int runs = 100;                // independent runs (R)
  std::uint64_t seed = 1;
};

struct EvalConfig {
  Method method = Method::Quadrature;
  int quad_nodes = 64;
  MCMCConfig mcmc;
  unsigned threads = 0;  // 0: hardware concurrency
};

struct Estimate {
  double value = 0.0;
  double mcse = 0.0;  // 0 for deterministic methods
};

/// Deterministic posterior over a fixed prior grid, reweighted by the
/// history likelihood.  Exposes posterior expectations and the one-step
/// predictive law.
class QuadraturePosterior {
 public:
  QuadraturePosterior(ModelSpec spec, ClaimHistory history, int nodes_per_dim);
  QuadraturePosterior(ModelSpec spec, ClaimHistory history, const PriorGrid& grid);

  long next_t() const { return static_cast<long>(history_.size()) + 1; }

  /// Posterior expectation of a function of the random effect.
  template <typename G>
  double expect(G&& g) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < post_w_.size(); ++i)
      acc += post_w_[i] * g(theta_span(i));
    return acc;
  }

  double predictive_mean() const;
  double predictive_transform_mean(const Transform& h) const;
  /// All transforms in one pass over (node, y); cheaper than repeated
  /// predictive_transform_mean calls when several payoffs share a posterior.
  std::vector<double> predictive_transform_means(std::span<const Transform> hs) const;
  double predictive_logpmf(long y) const;
  long predictive_support_max(double tail = kTailMass) const;

 private:
  void reweight();
  std::span<const double> theta_span(std::size_t i) const {
    return {nodes_[i].data(), static_cast<std::size_t>(dim_)};
  }

  ModelSpec spec_;
  ClaimHistory history_;
  int dim_;
  std::vector<std::array<double, 2>> nodes_;
  std::vector<double> log_prior_w_;
  std::vector<double> log_post_w_;  // unnormalized: log prior weight + loglik
  std::vector<double> post_w_;      // normalized
};

struct McmcSamples {
  int dim = 1;
  std::vector<std::array<double, 2>> draws;
  std::array<double, 2> accept_rate{0.0, 0.0};
};

/// Component-wise Gaussian random-walk Metropolis targeting the posterior of
/// the random effect given the history; proposal scales adapt during burn-in
/// toward 30-45% acceptance and then freeze.  Deterministic given the rng.
McmcSamples mcmc_posterior(const ModelSpec& spec, const ClaimHistory& history,
                           const MCMCConfig& cfg, Rng& rng);

/// E[h(Y_{t+1}) | history].  Conjugate is exact and only valid for
/// ConjHurdle; Quadrature is deterministic; MCMC reports an MCSE (standard
/// deviation across runs / sqrt(runs), or batch means for a single run).
Estimate predictive_expectation(const ModelSpec& spec, const ClaimHistory& history,
                                const Transform& h, const EvalConfig& cfg);

}  // namespace zerocred
