#pragma once

#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "zerocred/models.hpp"

namespace zerocred {

/// Longitudinal claim panel.  Covariates are constant over time within an
/// entity and include a leading intercept column; periods are contiguous
/// from 1.
struct PanelEntity {
  long id = 0;
  std::vector<double> x;
  std::vector<long> counts;
};

struct PanelDataset {
  std::vector<std::string> covariate_names;  // incl. "intercept"
  std::vector<PanelEntity> entities;

  std::size_t n_covariates() const { return covariate_names.size(); }
  std::size_t n_observations() const;
  const PanelEntity* find(long id) const;
};

/// Malformed panel input, carrying the offending location.
class PanelFormatError : public std::runtime_error {
 public:
  PanelFormatError(const std::string& msg, std::size_t row, std::string column)
      : std::runtime_error(msg + " (row " + std::to_string(row) + ", column " + column + ")"),
        row_(row),
        column_(std::move(column)) {}
  std::size_t row() const { return row_; }
  const std::string& column() const { return column_; }

 private:
  std::size_t row_;
  std::string column_;
};

/// Schema: header `entity,period,count,<covariate columns>`; the intercept
/// column is implicit and prepended on load.
PanelDataset read_panel_csv(std::istream& is);
PanelDataset read_panel_csv_file(const std::string& path);
void write_panel_csv(const PanelDataset& panel, std::ostream& os);
void write_panel_csv_file(const PanelDataset& panel, const std::string& path);

/// Splits off the last observed period of every entity as a one-period
/// holdout panel.
std::pair<PanelDataset, PanelDataset> split_last_period(const PanelDataset& panel);

// ---------------------------------------------------------------------------
// Model families fitted on panels
// ---------------------------------------------------------------------------

enum class FitFamily {
  GaussHurdle,    // random effects, bivariate normal
  ConjHurdle,     // random effects, Beta x Gamma (fitted under a < beta)
  ComonoHurdle,   // random effects, scalar comonotonic, softplus
  PoissonGLMM,    // random effects, lognormal Poisson
  PoissonGLM,     // cross-sectional benchmarks
  PoissonHurdle,
  PoissonZIP,
};

const char* family_name(FitFamily family);
FitFamily family_from_name(const std::string& name);
bool family_has_random_effects(FitFamily family);

/// Per-family covariate linkage.  coef1/coef2 are the two regression blocks:
///   GaussHurdle:   mu1_i = <x, coef1>,        mu2_i = <x, coef2>
///   ConjHurdle:    b_i = exp<x, coef1>,       alpha_i = exp<x, coef2>
///   ComonoHurdle:  c_i = <x, coef1>,          d_i = <x, coef2>
///   PoissonGLMM/GLM: lambda_i = exp<x, coef1>             (coef2 unused)
///   PoissonHurdle/ZIP: pi_i = sigma<x, coef1>, lambda_i = exp<x, coef2>
struct CovariateLink {
  FitFamily family = FitFamily::ComonoHurdle;
  Eigen::VectorXd coef1;
  Eigen::VectorXd coef2;
  double a = 0.5;        // ConjHurdle global (a < beta enforced when fitting)
  double beta = 1.0;     // ConjHurdle global
  double kappa2 = 0.5;   // ComonoHurdle RE variance
  double s1sq = 1.0;     // GaussHurdle covariance
  double s2sq = 1.0;
  double rho = 0.5;
  double d = 0.5;        // PoissonGLMM RE scale: R_i ~ N(-d^2/2, d^2)
  LinkFn link = LinkFn::Softplus;
};

/// Per-entity model implied by the link (random-effect families only).
ModelSpec entity_spec(const CovariateLink& link, const std::vector<double>& x);

/// Simulates a panel from the link over an explicit design (one covariate
/// row per entity, intercept included).
PanelDataset simulate_panel(const CovariateLink& truth,
                            const std::vector<std::vector<double>>& design,
                            const std::vector<std::string>& names, long periods, Rng& rng);

// ---------------------------------------------------------------------------
// Synthetic covariate generator
// ---------------------------------------------------------------------------

struct SynthConfig {
  FitFamily family = FitFamily::ComonoHurdle;
  long k = 497;
  long periods = 6;
  std::uint64_t seed = 1;
};

/// Reference proportions of the categorical covariates (entity type with
/// six levels, coverage with three).
const std::vector<std::pair<std::string, double>>& entity_type_levels();
const std::vector<std::pair<std::string, double>>& coverage_levels();

/// Default ground-truth link for each family over the synthetic design.
CovariateLink default_truth(FitFamily family, std::size_t p);

/// Categorical covariates drawn with the reference proportions, one-hot
/// encoded against the Miscellaneous / coverage-1 reference levels, counts
/// simulated from default_truth (or the supplied link).
PanelDataset synth_panel(const SynthConfig& cfg);
PanelDataset synth_panel(const SynthConfig& cfg, const CovariateLink& truth);

}  // namespace zerocred
