#include "zerocred/orders.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace zerocred {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLrLogTol = 1e-12;
constexpr double kMtpLogTol = 1e-10;

bool comparable(const ClaimHistory& lo, const ClaimHistory& hi) {
  if (lo.size() != hi.size()) return false;
  for (std::size_t i = 0; i < lo.size(); ++i)
    if (lo[i] > hi[i]) return false;
  return true;
}

std::string history_key(const ClaimHistory& h) {
  std::string key;
  for (long y : h) {
    key += std::to_string(y);
    key += ',';
  }
  return key;
}

OrderReport check_order_impl(const ModelSpec& spec, const Transform& h,
                             const std::vector<std::pair<ClaimHistory, ClaimHistory>>& pairs,
                             const EvalConfig& cfg, double tol) {
  OrderReport report;
  report.method = method_name(cfg.method);
  report.transform = transform_name(h);
  report.tolerance = tol;
  report.comparisons.reserve(pairs.size());

  std::map<std::string, Estimate> cache;
  auto evaluate = [&](const ClaimHistory& hist) -> Estimate {
    const std::string key = history_key(hist);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
    const Estimate est = predictive_expectation(spec, hist, h, cfg);
    cache.emplace(key, est);
    return est;
  };

  const bool stochastic = cfg.method == Method::MCMC;
  for (const auto& [lo, hi] : pairs) {
    if (!comparable(lo, hi))
      throw std::invalid_argument("check order: history pair is not coordinatewise comparable");
    OrderComparison cmp;
    cmp.lo = lo;
    cmp.hi = hi;
    const Estimate elo = evaluate(lo);
    const Estimate ehi = evaluate(hi);
    cmp.value_lo = elo.value;
    cmp.value_hi = ehi.value;
    cmp.mcse_lo = elo.mcse;
    cmp.mcse_hi = ehi.mcse;
    cmp.gap = elo.value - ehi.value;
    if (stochastic) {
      const double band = 3.0 * std::hypot(elo.mcse, ehi.mcse);
      cmp.violated = cmp.gap > band;
      cmp.inconclusive = !cmp.violated && cmp.gap > 0.0;
    } else {
      cmp.violated = cmp.gap > tol;
    }
    report.comparisons.push_back(std::move(cmp));
  }
  return report;
}

}  // namespace

std::size_t OrderReport::violations() const {
  std::size_t n = 0;
  for (const auto& c : comparisons) n += c.violated ? 1 : 0;
  return n;
}

double OrderReport::violation_rate() const {
  if (comparisons.empty()) return 0.0;
  return static_cast<double>(violations()) / static_cast<double>(comparisons.size());
}

nlohmann::json OrderReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& c : comparisons) {
    rows.push_back({{"history_low", c.lo},
                    {"history_high", c.hi},
                    {"value_low", c.value_lo},
                    {"value_high", c.value_hi},
                    {"mcse_low", c.mcse_lo},
                    {"mcse_high", c.mcse_hi},
                    {"gap", c.gap},
                    {"violated", c.violated},
                    {"inconclusive", c.inconclusive}});
  }
  return {{"method", method},
          {"transform", transform},
          {"tolerance", tolerance},
          {"comparisons", rows},
          {"violations", violations()},
          {"violation_rate", violation_rate()}};
}

void OrderReport::write_csv(std::ostream& os) const {
  os << "history_low,history_high,value_low,value_high,mcse_low,mcse_high,gap,"
        "violated,inconclusive\n";
  auto join = [](const ClaimHistory& h) {
    std::string s;
    for (std::size_t i = 0; i < h.size(); ++i) {
      if (i > 0) s += ' ';
      s += std::to_string(h[i]);
    }
    return s;
  };
  char buf[64];
  auto num = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (const auto& c : comparisons) {
    os << '"' << join(c.lo) << "\",\"" << join(c.hi) << "\"," << num(c.value_lo) << ','
       << num(c.value_hi) << ',' << num(c.mcse_lo) << ',' << num(c.mcse_hi) << ','
       << num(c.gap) << ',' << (c.violated ? 1 : 0) << ',' << (c.inconclusive ? 1 : 0)
       << '\n';
  }
}

std::vector<ClaimHistory> lattice_histories(const LatticeSpec& lattice) {
  if (lattice.t < 1 || lattice.y_max < 1)
    throw std::invalid_argument("lattice requires t >= 1 and y_max >= 1");
  std::vector<ClaimHistory> out;
  ClaimHistory current(static_cast<std::size_t>(lattice.t), 0);
  for (;;) {
    out.push_back(current);
    int pos = lattice.t - 1;
    while (pos >= 0 && current[static_cast<std::size_t>(pos)] == lattice.y_max) {
      current[static_cast<std::size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
    ++current[static_cast<std::size_t>(pos)];
  }
  return out;
}

std::vector<std::pair<ClaimHistory, ClaimHistory>> comparable_pairs(const LatticeSpec& lattice) {
  const std::vector<ClaimHistory> all = lattice_histories(lattice);
  std::vector<std::pair<ClaimHistory, ClaimHistory>> pairs;
  for (const auto& lo : all) {
    for (const auto& hi : all) {
      if (lo == hi || !comparable(lo, hi)) continue;
      pairs.emplace_back(lo, hi);
    }
  }
  return pairs;
}

OrderReport check_base_order(const ModelSpec& spec,
                             const std::vector<std::pair<ClaimHistory, ClaimHistory>>& pairs,
                             const EvalConfig& cfg, double tol) {
  return check_order_impl(spec, Identity{}, pairs, cfg, tol);
}

OrderReport check_general_order(const ModelSpec& spec, const Transform& h,
                                const std::vector<std::pair<ClaimHistory, ClaimHistory>>& pairs,
                                const EvalConfig& cfg, double tol) {
  return check_order_impl(spec, h, pairs, cfg, tol);
}

LrReport check_lr_order(std::span<const double> pmf_lo, std::span<const double> pmf_hi,
                        long support_max) {
  if (support_max < 0) throw std::invalid_argument("check_lr_order: negative support_max");
  const std::size_t n = static_cast<std::size_t>(support_max) + 1;
  if (pmf_lo.size() < n || pmf_hi.size() < n)
    throw std::invalid_argument("check_lr_order: pmf arrays shorter than support_max + 1");

  LrReport report;
  double mass_lo = 0.0, mass_hi = 0.0;
  std::vector<double> lf(n), lg(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (pmf_lo[i] < 0.0 || pmf_hi[i] < 0.0)
      throw std::invalid_argument("check_lr_order: negative pmf entry");
    mass_lo += pmf_lo[i];
    mass_hi += pmf_hi[i];
    lf[i] = pmf_lo[i] > 0.0 ? std::log(pmf_lo[i]) : kNegInf;
    lg[i] = pmf_hi[i] > 0.0 ? std::log(pmf_hi[i]) : kNegInf;
  }
  report.tail_lo = 1.0 - mass_lo;
  report.tail_hi = 1.0 - mass_hi;

  report.holds = true;
  report.worst_margin = 0.0;
  for (std::size_t x = 0; x < n && report.holds; ++x) {
    for (std::size_t y = x + 1; y < n; ++y) {
      const double rhs = lf[y] + lg[x];
      if (rhs == kNegInf) continue;  // vacuous
      const double lhs = lf[x] + lg[y];
      const double margin = lhs - rhs;
      report.worst_margin = std::min(report.worst_margin, margin);
      if (margin < -kLrLogTol) {
        report.holds = false;
        report.first_violation = {static_cast<long>(x), static_cast<long>(y)};
        break;
      }
    }
  }
  if (report.tail_lo > 1e-8 || report.tail_hi > 1e-8) {
    report.inconclusive = true;
    if (report.holds) report.holds = false;  // a pass requires the mass condition
  }
  return report;
}

std::vector<double> predictive_pmf_table(const ModelSpec& spec, const ClaimHistory& history,
                                         int quad_nodes, double tail) {
  const QuadraturePosterior post(spec, history, quad_nodes);
  std::vector<double> pmf;
  double cum = 0.0;
  for (long y = 0; y <= kSupportCap; ++y) {
    pmf.push_back(std::exp(post.predictive_logpmf(y)));
    cum += pmf.back();
    if (cum >= 1.0 - tail) break;
  }
  return pmf;
}

Tp2Report check_tp2_kernel(const ModelSpec& spec, long t, std::span<const double> theta_grid,
                           long y_max) {
  for (std::size_t i = 1; i < theta_grid.size(); ++i)
    if (theta_grid[i] < theta_grid[i - 1])
      throw std::invalid_argument("check_tp2_kernel: theta grid must be sorted ascending");
  if (prior_dim(model_law(spec)) != 1)
    throw std::invalid_argument("check_tp2_kernel: requires a scalar random effect");

  const std::size_t m = theta_grid.size();
  const std::size_t ny = static_cast<std::size_t>(y_max) + 1;
  std::vector<double> logk(m * ny);
  for (std::size_t i = 0; i < m; ++i) {
    const double th = theta_grid[i];
    for (std::size_t y = 0; y < ny; ++y)
      logk[i * ny + y] = cond_logpmf(spec, t, {&th, 1}, static_cast<long>(y));
  }

  Tp2Report report;
  report.holds = true;
  for (std::size_t i = 0; i < m && report.holds; ++i) {
    for (std::size_t j = i + 1; j < m && report.holds; ++j) {
      for (std::size_t y0 = 0; y0 < ny && report.holds; ++y0) {
        for (std::size_t y1 = y0 + 1; y1 < ny; ++y1) {
          // eta(y0, th_i) eta(y1, th_j) >= eta(y1, th_i) eta(y0, th_j)
          const double rhs = logk[i * ny + y1] + logk[j * ny + y0];
          if (rhs == kNegInf) continue;
          const double lhs = logk[i * ny + y0] + logk[j * ny + y1];
          if (lhs < rhs - kMtpLogTol) {
            report.holds = false;
            report.violating_thetas = {theta_grid[i], theta_grid[j]};
            report.violating_ys = {static_cast<long>(y0), static_cast<long>(y1)};
            break;
          }
        }
      }
    }
  }
  return report;
}

namespace {

std::size_t lattice_size(const LatticeSpec& lattice) {
  std::size_t n = 1;
  for (int i = 0; i < lattice.t; ++i) n *= static_cast<std::size_t>(lattice.y_max) + 1;
  return n;
}

void unflatten(const LatticeSpec& lattice, std::size_t idx, std::vector<long>& out) {
  const std::size_t base = static_cast<std::size_t>(lattice.y_max) + 1;
  out.resize(static_cast<std::size_t>(lattice.t));
  for (int i = lattice.t - 1; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = static_cast<long>(idx % base);
    idx /= base;
  }
}

std::size_t flatten(const LatticeSpec& lattice, const std::vector<long>& x) {
  const std::size_t base = static_cast<std::size_t>(lattice.y_max) + 1;
  std::size_t idx = 0;
  for (long v : x) idx = idx * base + static_cast<std::size_t>(v);
  return idx;
}

}  // namespace

MtpReport check_mtp2_lattice(const LatticeSpec& lattice, std::span<const double> logpmf) {
  if (lattice.t > 3 || lattice.y_max > 6)
    throw std::invalid_argument("check_mtp2_lattice: lattice too large (t <= 3, y_max <= 6)");
  const std::size_t n = lattice_size(lattice);
  if (logpmf.size() != n)
    throw std::invalid_argument("check_mtp2_lattice: joint pmf size does not match lattice");

  MtpReport report;
  report.holds = true;
  std::vector<long> x, y, lo, hi;
  for (std::size_t i = 0; i < n && report.holds; ++i) {
    unflatten(lattice, i, x);
    for (std::size_t j = i + 1; j < n; ++j) {
      unflatten(lattice, j, y);
      lo.resize(x.size());
      hi.resize(x.size());
      for (std::size_t k = 0; k < x.size(); ++k) {
        lo[k] = std::min(x[k], y[k]);
        hi[k] = std::max(x[k], y[k]);
      }
      // g(x) g(y) <= g(x^y) g(x|y): the aligned product dominates the
      // crossed one.  A zero left-hand side is vacuously fine.
      const double lhs = logpmf[i] + logpmf[j];
      if (lhs == kNegInf) continue;
      const double rhs = logpmf[flatten(lattice, lo)] + logpmf[flatten(lattice, hi)];
      if (lhs > rhs + kMtpLogTol) {
        report.holds = false;
        report.violating_pair = {i, j};
        break;
      }
    }
  }
  return report;
}

std::vector<double> joint_logpmf(const ModelSpec& spec, const LatticeSpec& lattice,
                                 int quad_nodes) {
  if (lattice.t > 3 || lattice.y_max > 6)
    throw std::invalid_argument("joint_logpmf: lattice too large (t <= 3, y_max <= 6)");
  const PriorGrid grid = make_prior_grid(model_law(spec), quad_nodes);
  const std::size_t n = lattice_size(lattice);
  std::vector<double> out(n);
  std::vector<long> x;
  std::vector<double> terms(grid.nodes.size());
  for (std::size_t idx = 0; idx < n; ++idx) {
    unflatten(lattice, idx, x);
    for (std::size_t i = 0; i < grid.nodes.size(); ++i) {
      const std::span<const double> th{grid.nodes[i].data(),
                                       static_cast<std::size_t>(grid.dim)};
      double ll = grid.logw[i];
      for (std::size_t s = 0; s < x.size() && ll > kNegInf; ++s)
        ll += cond_logpmf(spec, static_cast<long>(s + 1), th, x[s]);
      terms[i] = ll;
    }
    out[idx] = logsumexp(terms);
  }
  return out;
}

bool condition_eq53(const PosteriorState& state) {
  return state.alpha_star * state.a_star <=
         state.beta_star * (state.alpha_star + state.beta_star + 1.0);
}

bool condition_eq53_reachable(const BetaGamma& prior, int t_max, int y_max) {
  for (int t = 1; t <= t_max; ++t) {
    for (const ClaimHistory& h : lattice_histories({t, y_max})) {
      if (std::find(h.begin(), h.end(), 0L) == h.end()) continue;  // no flip possible
      if (!condition_eq53(conjugate_update(prior, h))) return false;
    }
  }
  return true;
}

bool condition_a_lt_beta(const BetaGamma& prior) { return prior.a < prior.beta; }

bool softplus_condition(LinkFn link, std::pair<double, double> d_range,
                        std::pair<double, double> theta_range, double grid_step) {
  if (!(grid_step > 0.0)) throw std::invalid_argument("softplus_condition: step must be positive");
  if (!(std::isfinite(d_range.first) && std::isfinite(d_range.second) &&
        std::isfinite(theta_range.first) && std::isfinite(theta_range.second)))
    throw std::invalid_argument("softplus_condition: ranges must be finite");
  const double lo = d_range.first + theta_range.first;
  const double hi = d_range.second + theta_range.second;
  for (double x = lo; x <= hi + 0.5 * grid_step; x += grid_step) {
    const double deriv = link_deriv(link, std::min(x, hi));
    if (deriv < 0.0 || deriv > 1.0) return false;
  }
  return true;
}

}  // namespace zerocred
