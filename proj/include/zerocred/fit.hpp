#pragma once

#include <map>

#include <nlohmann/json_fwd.hpp>

#include "zerocred/orders.hpp"
#include "zerocred/panel.hpp"

namespace zerocred {

struct FitConfig {
  int sweeps = 1500;           // recorded sweeps after burn-in
  int burnin = 500;
  double proposal_scale = 0.3; // initial, adapted during burn-in
  std::uint64_t seed = 1;
};

/// Output of a panel fit: a flat named parameter vector on the natural
/// scale (regression coefficients plus the family's global parameters),
/// summaries, per-entity random-effect means, and a point-estimate link
/// usable for prediction.
struct FitResult {
  FitFamily family = FitFamily::ComonoHurdle;
  std::vector<std::string> param_names;
  Eigen::VectorXd estimate;  // posterior means (MCMC) or MLEs
  Eigen::VectorXd sd;        // posterior sds or asymptotic standard errors
  Eigen::VectorXd ci_lo;     // 95% interval
  Eigen::VectorXd ci_hi;
  std::vector<std::string> covariate_names;
  CovariateLink link;        // rebuilt from the estimates
  std::vector<std::array<double, 2>> re_mean;  // per entity; slot 1 unused for 1-D effects
  std::map<std::string, double> diagnostics;   // acceptance rates, loglik, iterations

  int sweeps = 0;
  int burnin = 0;
  std::uint64_t seed = 0;

  double param(const std::string& name) const;
  nlohmann::json to_json() const;
  static FitResult from_json(const nlohmann::json& j);
};

/// Metropolis-within-Gibbs fit of a random-effects family.  ConjHurdle is
/// fitted under the hard constraint a < beta via a = beta sigma(u).  Throws
/// std::invalid_argument on an empty panel or rank-deficient design and
/// std::runtime_error if no finite starting point is found.
FitResult fit_mcmc(const PanelDataset& panel, FitFamily family, const FitConfig& cfg, Rng& rng);

/// Cross-sectional maximum likelihood for the no-random-effect benchmarks
/// (PoissonGLM, PoissonHurdle, PoissonZIP).  Newton iterations stop when the
/// gradient norm drops below 1e-8; non-convergence raises std::runtime_error.
/// zero_inflation_offset shifts the ZIP structural-zero logit; at -inf the
/// mixture collapses to the plain Poisson GLM (the binary block is frozen
/// once the offset passes -30).
FitResult fit_mle(const PanelDataset& panel, FitFamily family,
                  double zero_inflation_offset = 0.0);

struct PredictionRow {
  long entity = 0;
  double actual = 0.0;
  double predicted = 0.0;
};

struct PredictResult {
  double mse = 0.0;
  std::vector<PredictionRow> rows;
};

/// One-step-ahead predictions at the fitted point estimates: posterior
/// predictive means given each entity's training history for random-effect
/// families, covariate-only means for the benchmarks.  The holdout must
/// hold exactly one period per entity and every holdout entity must appear
/// in training (PanelFormatError otherwise).
PredictResult predict_oos(const FitResult& fit, const PanelDataset& train,
                          const PanelDataset& holdout, int quad_nodes = 64);

struct ViolationReport {
  int t_anchor = 5;
  /// One report per payoff ("base" first, then the supplied transforms);
  /// each report holds one comparison per entity.
  std::vector<std::pair<std::string, OrderReport>> by_transform;
  nlohmann::json to_json() const;
};

/// Counterfactual monotonicity diagnostic: per entity, holds
/// y_{1:t_anchor-1} fixed and compares E[h(Y_{t_anchor+1}) | ..., Y=0] to
/// the Y=1 counterpart at the fitted point estimates.
ViolationReport violation_report(const FitResult& fit, const PanelDataset& panel, int t_anchor,
                                 const std::vector<Transform>& transforms, int quad_nodes = 64);

}  // namespace zerocred
