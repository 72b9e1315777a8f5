#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "zerocred/posterior.hpp"

namespace zerocred {

// ---------------------------------------------------------------------------
// Credibility-order reports
// ---------------------------------------------------------------------------

struct OrderComparison {
  ClaimHistory lo;
  ClaimHistory hi;
  double value_lo = 0.0;
  double value_hi = 0.0;
  double mcse_lo = 0.0;
  double mcse_hi = 0.0;
  double gap = 0.0;        // value_lo - value_hi; positive means reversal
  bool violated = false;   // value_lo > value_hi + tolerance
  bool inconclusive = false;  // MC reversal inside the noise band
};

struct OrderReport {
  std::vector<OrderComparison> comparisons;
  std::string method;
  std::string transform = "identity";
  double tolerance = 0.0;

  std::size_t violations() const;
  double violation_rate() const;

  nlohmann::json to_json() const;
  void write_csv(std::ostream& os) const;  // one row per comparison
};

/// Finite enumeration box {0, ..., y_max}^t.
struct LatticeSpec {
  int t = 2;
  int y_max = 3;
};

std::vector<ClaimHistory> lattice_histories(const LatticeSpec& lattice);

/// All coordinatewise-comparable pairs (lo < hi) of the lattice.
std::vector<std::pair<ClaimHistory, ClaimHistory>> comparable_pairs(const LatticeSpec& lattice);

/// Checks E[Y_{t+1} | lo] <= E[Y_{t+1} | hi] over the supplied pairs.
/// Deterministic methods flag a reversal beyond tol (default 1e-8); MC
/// methods flag only beyond 3x the combined MCSE and otherwise mark the
/// comparison inconclusive.  Throws std::invalid_argument on incomparable
/// pairs.
OrderReport check_base_order(const ModelSpec& spec,
                             const std::vector<std::pair<ClaimHistory, ClaimHistory>>& pairs,
                             const EvalConfig& cfg, double tol = 1e-8);

/// Same with E[h(Y_{t+1}) | history].
OrderReport check_general_order(const ModelSpec& spec, const Transform& h,
                                const std::vector<std::pair<ClaimHistory, ClaimHistory>>& pairs,
                                const EvalConfig& cfg, double tol = 1e-8);

// ---------------------------------------------------------------------------
// Likelihood-ratio / total-positivity checks
// ---------------------------------------------------------------------------

struct LrReport {
  bool holds = false;
  bool inconclusive = false;  // truncation mass condition not met
  double tail_lo = 0.0;
  double tail_hi = 0.0;
  std::optional<std::pair<long, long>> first_violation;
  double worst_margin = 0.0;  // most negative log-domain slack observed
};

/// Verifies f(x) g(y) >= f(y) g(x) for all x <= y <= support_max, in log
/// space with tolerance 1e-12.  If either pmf leaves more than 1e-8 mass
/// beyond support_max the result is inconclusive, not a pass.
LrReport check_lr_order(std::span<const double> pmf_lo, std::span<const double> pmf_hi,
                        long support_max);

/// Predictive pmf of Y_{t+1} given the history, tabulated on 0..support_max
/// where support_max carries mass >= 1 - tail.
std::vector<double> predictive_pmf_table(const ModelSpec& spec, const ClaimHistory& history,
                                         int quad_nodes, double tail = kTailMass);

struct Tp2Report {
  bool holds = false;
  std::optional<std::array<double, 2>> violating_thetas;
  std::optional<std::pair<long, long>> violating_ys;
};

/// TP2 of the conditional kernel eta_t(y, theta) on a sorted theta grid.
Tp2Report check_tp2_kernel(const ModelSpec& spec, long t, std::span<const double> theta_grid,
                           long y_max);

struct MtpReport {
  bool holds = false;
  std::optional<std::pair<std::size_t, std::size_t>> violating_pair;  // flat indices
};

/// MTP2 of a joint pmf tabulated over the lattice (mixed-radix order, last
/// coordinate fastest): g(x) g(y) <= g(x^y) g(x|y) for every pair.  Guarded
/// to t <= 3, y_max <= 6.  Log-domain comparisons with tolerance 1e-10; a
/// zero g(x) g(y) satisfies the inequality vacuously.
MtpReport check_mtp2_lattice(const LatticeSpec& lattice, std::span<const double> joint_logpmf);

/// Joint log pmf of (Y_1, ..., Y_t) over the lattice by prior quadrature.
std::vector<double> joint_logpmf(const ModelSpec& spec, const LatticeSpec& lattice,
                                 int quad_nodes);

// ---------------------------------------------------------------------------
// Analytic monotonicity conditions
// ---------------------------------------------------------------------------

/// alpha* a* <= beta* (alpha* + beta* + 1): the exact condition for the
/// conjugate hurdle predictive mean to be nondecreasing under a 0 -> 1 flip
/// at this state.
bool condition_eq53(const PosteriorState& state);

/// Checks condition_eq53 at every lattice history that still has a zero
/// entry (the states from which a 0 -> 1 increment is possible).
bool condition_eq53_reachable(const BetaGamma& prior, int t_max, int y_max);

/// Sufficient condition a < beta for the base credibility order.
bool condition_a_lt_beta(const BetaGamma& prior);

/// True iff the link derivative stays in [0, 1] on every grid point of
/// d + theta over the supplied ranges.
bool softplus_condition(LinkFn link, std::pair<double, double> d_range,
                        std::pair<double, double> theta_range, double grid_step);

}  // namespace zerocred
