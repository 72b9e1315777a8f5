#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "zerocred/posterior.hpp"

namespace zerocred {

enum class TableId {
  T1_sigma1,
  T2_sigma2,
  T3_mu2,
  Ex1_deductible,
  C1_rho,
  C2_zip_sigma1,
  C3_zip_sigma2,
  Thm1_limit,
};

const char* table_name(TableId id);
TableId table_from_name(const std::string& name);
std::vector<TableId> all_tables();

struct TableJob {
  TableId id = TableId::T1_sigma1;
  /// Method backing the est_* columns; quadrature_* columns are always
  /// computed.  Ex1 ignores this and uses the exact conjugate predictive.
  Method method = Method::MCMC;
  MCMCConfig mcmc;
  int quad_nodes = 64;
  unsigned threads = 0;
  /// The C1 sweep's published header conditions on Y1 in {1, 2}; set this
  /// to condition on {0, 1} instead (the caption's variant).
  bool c1_condition_zero_one = false;
};

struct TableRow {
  double sweep = 0.0;
  double est_0 = 0.0;
  double mcse_0 = 0.0;
  double est_1 = 0.0;
  double mcse_1 = 0.0;
  double quadrature_0 = 0.0;
  double quadrature_1 = 0.0;
};

struct TableResult {
  std::string table;
  std::string sweep_name;
  long cond_lo = 0;  // the two conditioning outcomes behind columns *_0 / *_1
  long cond_hi = 1;
  std::vector<TableRow> rows;
  nlohmann::json manifest() const;
  void write_csv(std::ostream& os) const;

  std::string method;
  int draws = 0;
  int burnin = 0;
  int runs = 0;
  int quad_nodes = 0;
  std::uint64_t seed = 0;
};

/// Sweep values of each table (fixed to the published rows).
std::vector<double> table_sweep(TableId id);

TableResult run_table(const TableJob& job);

/// Published reference estimates with their Monte Carlo standard errors,
/// used by --strict reproduction checks and by the acceptance suite.
struct ReferenceRow {
  double sweep;
  double val_0;
  double se_0;
  double val_1;
  double se_1;
};
std::vector<ReferenceRow> reference_rows(TableId id);

/// Comparison band for strict reproduction checks: 3x the published MCSE,
/// or the 3-decimal rounding band for the deterministic deductible table.
double reference_tolerance(TableId id, const ReferenceRow& row, int column);

struct Theorem1Result {
  std::vector<double> s1sq_grid;
  std::vector<double> diff;     // E[Y2 | Y1=0] - E[Y2 | Y1=1] per grid point
  double limit = 0.0;           // analytic sigma1^2 -> 0 limit of the difference
  double limit_cond0 = 0.0;     // limiting E[Y2 | Y1=0]
  double limit_cond1 = 0.0;     // limiting E[Y2 | Y1=1]
};

/// Quadrature evaluation of the vanishing-sigma1 difference plus its
/// analytic limit sigma(mu1) (E[W] - E[W e^-W] / E[e^-W]), W = exp(Theta2*),
/// Theta2* ~ N(mu2, s2sq), computed by 1-D quadrature.
Theorem1Result run_theorem1_sweep(std::span<const double> s1sq_grid, double mu1, double mu2,
                                  double s2sq, double rho, int quad_nodes = 64);

}  // namespace zerocred
