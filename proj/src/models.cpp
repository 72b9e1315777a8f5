#include "zerocred/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace zerocred {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double logsumexp2(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}
}  // namespace

void validate_history(const ClaimHistory& history) {
  for (long y : history)
    if (y < 0) throw std::domain_error("claim history entries must be non-negative");
}

void validate(const ModelSpec& spec) {
  std::visit(
      [](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        validate(REPriorLaw{m.law});
        if constexpr (std::is_same_v<T, NBHurdle>) {
          if (!(m.r > 0.0)) throw std::domain_error("NBHurdle: r must be positive");
        }
      },
      spec);
}

REPriorLaw model_law(const ModelSpec& spec) {
  return std::visit([](const auto& m) { return REPriorLaw{m.law}; }, spec);
}

bool is_zero_inflated(const ModelSpec& spec) {
  return std::holds_alternative<ZIPComono>(spec) || std::holds_alternative<ZIPGauss>(spec);
}

const char* model_name(const ModelSpec& spec) {
  return std::visit(
      [](const auto& m) -> const char* {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, GaussHurdle>) return "gauss_hurdle";
        else if constexpr (std::is_same_v<T, ConjHurdle>) return "conj_hurdle";
        else if constexpr (std::is_same_v<T, ComonoHurdle>) return "comono_hurdle";
        else if constexpr (std::is_same_v<T, NBHurdle>) return "nb_hurdle";
        else if constexpr (std::is_same_v<T, ZIPComono>) return "zip_comono";
        else return "zip_gauss";
      },
      spec);
}

double seq_at(const std::vector<double>& seq, long t) {
  if (seq.empty())
    throw std::invalid_argument("exogenous sequence is empty but was indexed");
  if (t < 1) throw std::invalid_argument("sequence index t must be >= 1");
  const std::size_t i = static_cast<std::size_t>(t - 1);
  return i < seq.size() ? seq[i] : seq.back();
}

double binary_prob(const ModelSpec& spec, long t, std::span<const double> theta) {
  return std::visit(
      [&](const auto& m) -> double {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, GaussHurdle> || std::is_same_v<T, ZIPGauss>) {
          return logistic(theta[0]);
        } else if constexpr (std::is_same_v<T, ConjHurdle>) {
          return theta[0];
        } else {
          return logistic(seq_at(m.c_seq, t) + theta[0]);
        }
      },
      spec);
}

CountDist count_component(const ModelSpec& spec, long t, std::span<const double> theta) {
  return std::visit(
      [&](const auto& m) -> CountDist {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, GaussHurdle> || std::is_same_v<T, ZIPGauss>) {
          return Poisson{std::exp(theta[1])};
        } else if constexpr (std::is_same_v<T, ConjHurdle>) {
          return Poisson{theta[1]};
        } else if constexpr (std::is_same_v<T, NBHurdle>) {
          // The logistic saturates to 0/1 in doubles past |x| ~ 36.7; far
          // quadrature nodes land there, so pin p inside the open interval.
          const double p = logistic(seq_at(m.d_seq, t) + theta[0] / m.r);
          return NegBin{m.r, std::clamp(p, std::numeric_limits<double>::min(),
                                        0x1.fffffffffffffp-1)};
        } else {
          return Poisson{link_eval(m.link, seq_at(m.d_seq, t) + theta[0])};
        }
      },
      spec);
}

double cond_logpmf(const ModelSpec& spec, long t, std::span<const double> theta, long y) {
  if (t < 1) throw std::invalid_argument("cond_pmf: t must be >= 1");
  if (y < 0) throw std::domain_error("cond_pmf: y must be non-negative");
  if (static_cast<int>(theta.size()) != prior_dim(model_law(spec)))
    throw std::invalid_argument("cond_pmf: theta dimension does not match model");
  const double p = binary_prob(spec, t, theta);
  const double logp = p > 0.0 ? std::log(p) : kNegInf;
  const double log1mp = p < 1.0 ? std::log1p(-p) : kNegInf;
  if (is_zero_inflated(spec)) {
    const CountDist count = count_component(spec, t, theta);
    if (y == 0) return logsumexp2(log1mp, logp + count_logpmf(count, 0));
    return logp + count_logpmf(count, y);
  }
  if (y == 0) return log1mp;
  return logp + count_logpmf(count_component(spec, t, theta), y - 1);
}

double cond_pmf(const ModelSpec& spec, long t, std::span<const double> theta, long y) {
  return std::exp(cond_logpmf(spec, t, theta, y));
}

double cond_mean(const ModelSpec& spec, long t, std::span<const double> theta) {
  if (t < 1) throw std::invalid_argument("cond_mean: t must be >= 1");
  if (static_cast<int>(theta.size()) != prior_dim(model_law(spec)))
    throw std::invalid_argument("cond_mean: theta dimension does not match model");
  const double p = binary_prob(spec, t, theta);
  const double mean_n = count_mean(count_component(spec, t, theta));
  return is_zero_inflated(spec) ? p * mean_n : p * (1.0 + mean_n);
}

long cond_support_max(const ModelSpec& spec, long t, std::span<const double> theta,
                      double tail) {
  const long nmax = count_support_max(count_component(spec, t, theta), tail);
  const long shift = is_zero_inflated(spec) ? 0 : 1;
  return std::min(nmax + shift, kSupportCap);
}

double history_loglik(const ModelSpec& spec, const ClaimHistory& history,
                      std::span<const double> theta) {
  double ll = 0.0;
  for (std::size_t s = 0; s < history.size(); ++s) {
    ll += cond_logpmf(spec, static_cast<long>(s + 1), theta, history[s]);
    if (ll == kNegInf) break;
  }
  return ll;
}

ClaimHistory simulate_path_given(const ModelSpec& spec, long periods,
                                 std::span<const double> theta, Rng& rng) {
  if (periods < 1) throw std::invalid_argument("simulate_path: periods must be >= 1");
  ClaimHistory path(static_cast<std::size_t>(periods));
  const bool zip = is_zero_inflated(spec);
  for (long t = 1; t <= periods; ++t) {
    const bool z = rng.bernoulli(binary_prob(spec, t, theta));
    const long n = count_sample(count_component(spec, t, theta), rng);
    path[static_cast<std::size_t>(t - 1)] = z ? (zip ? n : 1 + n) : 0;
  }
  return path;
}

ClaimHistory simulate_path(const ModelSpec& spec, long periods, Rng& rng) {
  validate(spec);
  const std::vector<double> theta = sample_prior(model_law(spec), rng);
  return simulate_path_given(spec, periods, theta, rng);
}

SufficientStats sufficient_stats(const ClaimHistory& history) {
  validate_history(history);
  SufficientStats s;
  for (long y : history) {
    if (y > 0) {
      ++s.r_t;
      s.m_t += y - 1;
    }
  }
  return s;
}

}  // namespace zerocred
