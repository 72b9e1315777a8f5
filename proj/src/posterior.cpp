#include "zerocred/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "zerocred/parallel.hpp"

namespace zerocred {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

PosteriorState conjugate_update(const BetaGamma& prior, const ClaimHistory& history) {
  validate(REPriorLaw{prior});
  const SufficientStats s = sufficient_stats(history);
  const long t = static_cast<long>(history.size());
  PosteriorState st;
  st.a_star = prior.a + static_cast<double>(s.r_t);
  st.b_star = prior.b + static_cast<double>(t - s.r_t);
  st.alpha_star = prior.alpha + static_cast<double>(s.m_t);
  st.beta_star = prior.beta + static_cast<double>(s.r_t);
  st.r_t = s.r_t;
  st.m_t = s.m_t;
  st.t = t;
  return st;
}

double predictive_mean_conjugate(const PosteriorState& state) {
  return state.a_star / (state.a_star + state.b_star) *
         (1.0 + state.alpha_star / state.beta_star);
}

double conjugate_predictive_logpmf(const PosteriorState& state, long y) {
  if (y < 0) throw std::domain_error("predictive pmf: y must be non-negative");
  const double log_p_pos = std::log(state.a_star) - std::log(state.a_star + state.b_star);
  if (y == 0) return std::log(state.b_star) - std::log(state.a_star + state.b_star);
  const NegBin marg{state.alpha_star, 1.0 / (1.0 + state.beta_star)};
  return log_p_pos + count_logpmf(CountDist{marg}, y - 1);
}

long conjugate_predictive_support_max(const PosteriorState& state, double tail) {
  const NegBin marg{state.alpha_star, 1.0 / (1.0 + state.beta_star)};
  return std::min(count_support_max(CountDist{marg}, tail) + 1, kSupportCap);
}

double transform_apply(const Transform& h, long y) {
  return std::visit(
      [y](const auto& tr) -> double {
        using T = std::decay_t<decltype(tr)>;
        if constexpr (std::is_same_v<T, Identity>) return static_cast<double>(y);
        else if constexpr (std::is_same_v<T, Deductible>) return static_cast<double>(std::max(y - tr.d, 0L));
        else return static_cast<double>(std::min(y, tr.d));
      },
      h);
}

std::string transform_name(const Transform& h) {
  return std::visit(
      [](const auto& tr) -> std::string {
        using T = std::decay_t<decltype(tr)>;
        if constexpr (std::is_same_v<T, Identity>) return "identity";
        else if constexpr (std::is_same_v<T, Deductible>) return "deductible(" + std::to_string(tr.d) + ")";
        else return "limit(" + std::to_string(tr.d) + ")";
      },
      h);
}

Transform transform_from_name(const std::string& name) {
  auto parse_arg = [&](std::size_t open) -> long {
    const std::size_t close = name.find(')', open);
    return std::stol(name.substr(open + 1, close - open - 1));
  };
  if (name == "identity" || name == "base") return Identity{};
  if (name.rfind("deductible", 0) == 0) return Deductible{parse_arg(name.find('('))};
  if (name.rfind("limit", 0) == 0) return Limit{parse_arg(name.find('('))};
  throw std::invalid_argument("unknown transform: " + name);
}

double cond_transform_mean(const ModelSpec& spec, long t, std::span<const double> theta,
                           const Transform& h) {
  const long ymax = cond_support_max(spec, t, theta);
  double acc = 0.0;
  for (long y = 0; y <= ymax; ++y) {
    const double hy = transform_apply(h, y);
    if (hy != 0.0) acc += hy * cond_pmf(spec, t, theta, y);
  }
  return acc;
}

const char* method_name(Method m) {
  switch (m) {
    case Method::Conjugate: return "conjugate";
    case Method::Quadrature: return "quadrature";
    case Method::MCMC: return "mcmc";
  }
  return "?";
}

Method method_from_name(const std::string& name) {
  if (name == "conjugate") return Method::Conjugate;
  if (name == "quadrature") return Method::Quadrature;
  if (name == "mcmc") return Method::MCMC;
  throw std::invalid_argument("unknown method: " + name);
}

// ---------------------------------------------------------------------------
// QuadraturePosterior
// ---------------------------------------------------------------------------

QuadraturePosterior::QuadraturePosterior(ModelSpec spec, ClaimHistory history,
                                         int nodes_per_dim)
    : QuadraturePosterior(spec, std::move(history),
                          make_prior_grid(model_law(spec), nodes_per_dim)) {}

QuadraturePosterior::QuadraturePosterior(ModelSpec spec, ClaimHistory history,
                                         const PriorGrid& grid)
    : spec_(std::move(spec)),
      history_(std::move(history)),
      dim_(grid.dim),
      nodes_(grid.nodes),
      log_prior_w_(grid.logw) {
  validate(spec_);
  validate_history(history_);
  if (dim_ != prior_dim(model_law(spec_)))
    throw std::invalid_argument("prior grid dimension does not match model");
  reweight();
}

void QuadraturePosterior::reweight() {
  log_post_w_.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    log_post_w_[i] = log_prior_w_[i] + history_loglik(spec_, history_, theta_span(i));
  const double norm = logsumexp(log_post_w_);
  if (!std::isfinite(norm))
    throw std::runtime_error("quadrature posterior: all node weights underflowed");
  post_w_.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    post_w_[i] = std::exp(log_post_w_[i] - norm);
}

double QuadraturePosterior::predictive_mean() const {
  const long t = next_t();
  return expect([&](std::span<const double> th) { return cond_mean(spec_, t, th); });
}

double QuadraturePosterior::predictive_transform_mean(const Transform& h) const {
  if (std::holds_alternative<Identity>(h)) return predictive_mean();
  const long t = next_t();
  return expect([&](std::span<const double> th) { return cond_transform_mean(spec_, t, th, h); });
}

std::vector<double> QuadraturePosterior::predictive_transform_means(
    std::span<const Transform> hs) const {
  const long t = next_t();
  std::vector<double> acc(hs.size(), 0.0);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (post_w_[i] == 0.0) continue;
    const std::span<const double> th = theta_span(i);
    const long ymax = cond_support_max(spec_, t, th);
    for (long y = 0; y <= ymax; ++y) {
      const double w = post_w_[i] * cond_pmf(spec_, t, th, y);
      for (std::size_t j = 0; j < hs.size(); ++j) {
        const double hy = transform_apply(hs[j], y);
        if (hy != 0.0) acc[j] += w * hy;
      }
    }
  }
  return acc;
}

double QuadraturePosterior::predictive_logpmf(long y) const {
  const long t = next_t();
  std::vector<double> terms(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    terms[i] = log_post_w_[i] + cond_logpmf(spec_, t, theta_span(i), y);
  return logsumexp(terms) - logsumexp(log_post_w_);
}

long QuadraturePosterior::predictive_support_max(double tail) const {
  double cum = 0.0;
  for (long y = 0; y <= kSupportCap; ++y) {
    cum += std::exp(predictive_logpmf(y));
    if (cum >= 1.0 - tail) return y;
  }
  return kSupportCap;
}

// ---------------------------------------------------------------------------
// Random-walk Metropolis
// ---------------------------------------------------------------------------

McmcSamples mcmc_posterior(const ModelSpec& spec, const ClaimHistory& history,
                           const MCMCConfig& cfg, Rng& rng) {
  validate(spec);
  validate_history(history);
  if (cfg.draws < 1 || cfg.burnin < 0 || cfg.thin < 1 || !(cfg.proposal_scale > 0.0))
    throw std::invalid_argument("mcmc_posterior: invalid configuration");
  const REPriorLaw law = model_law(spec);
  const int dim = prior_dim(law);

  auto target = [&](std::span<const double> th) {
    const double lp = prior_logpdf(law, th);
    if (lp == kNegInf) return kNegInf;
    return lp + history_loglik(spec, history, th);
  };

  std::array<double, 2> theta{0.0, 0.0};
  double lp = kNegInf;
  for (int attempt = 0; attempt < 100 && lp == kNegInf; ++attempt) {
    const std::vector<double> draw = sample_prior(law, rng);
    std::copy(draw.begin(), draw.end(), theta.begin());
    lp = target({theta.data(), static_cast<std::size_t>(dim)});
  }
  if (lp == kNegInf)
    throw std::runtime_error("mcmc_posterior: could not find a starting point with "
                             "positive posterior density");

  std::array<double, 2> scale{cfg.proposal_scale, cfg.proposal_scale};
  std::array<long, 2> adapt_acc{0, 0};
  std::array<long, 2> post_acc{0, 0};
  constexpr int kAdaptWindow = 50;

  McmcSamples out;
  out.dim = dim;
  out.draws.reserve(static_cast<std::size_t>(cfg.draws));

  const long total = cfg.burnin + static_cast<long>(cfg.draws) * cfg.thin;
  for (long it = 0; it < total; ++it) {
    const bool warm = it < cfg.burnin;
    for (int j = 0; j < dim; ++j) {
      std::array<double, 2> prop = theta;
      prop[j] += scale[j] * rng.normal();
      const double lp_prop = target({prop.data(), static_cast<std::size_t>(dim)});
      if (lp_prop > kNegInf &&
          (lp_prop >= lp || std::log(rng.uniform_pos()) < lp_prop - lp)) {
        theta = prop;
        lp = lp_prop;
        (warm ? adapt_acc : post_acc)[j] += 1;
      }
    }
    if (warm && (it + 1) % kAdaptWindow == 0) {
      for (int j = 0; j < dim; ++j) {
        const double rate = static_cast<double>(adapt_acc[j]) / kAdaptWindow;
        scale[j] = std::clamp(scale[j] * std::exp(0.666 * (rate - 0.375)), 1e-3, 50.0);
        adapt_acc[j] = 0;
      }
    }
    if (!warm && (it - cfg.burnin) % cfg.thin == 0) out.draws.push_back(theta);
  }

  const double denom = static_cast<double>(cfg.draws) * cfg.thin;
  for (int j = 0; j < dim; ++j)
    out.accept_rate[j] = static_cast<double>(post_acc[j]) / denom;
  if (post_acc[0] == 0 && (dim < 2 || post_acc[1] == 0) && denom >= 50)
    throw std::runtime_error("mcmc_posterior: chain accepted no proposal after burn-in");
  return out;
}

// ---------------------------------------------------------------------------
// Predictive expectations
// ---------------------------------------------------------------------------

namespace {

double conjugate_transform_mean(const PosteriorState& st, const Transform& h) {
  const long ymax = conjugate_predictive_support_max(st);
  double acc = 0.0;
  for (long y = 0; y <= ymax; ++y) {
    const double hy = transform_apply(h, y);
    if (hy != 0.0) acc += hy * std::exp(conjugate_predictive_logpmf(st, y));
  }
  return acc;
}

double chain_estimate(const ModelSpec& spec, const ClaimHistory& history,
                      const Transform& h, const MCMCConfig& cfg, Rng& rng) {
  const McmcSamples chain = mcmc_posterior(spec, history, cfg, rng);
  const long t = static_cast<long>(history.size()) + 1;
  const bool identity = std::holds_alternative<Identity>(h);
  double acc = 0.0;
  for (const auto& th : chain.draws) {
    const std::span<const double> sp{th.data(), static_cast<std::size_t>(chain.dim)};
    acc += identity ? cond_mean(spec, t, sp) : cond_transform_mean(spec, t, sp, h);
  }
  return acc / static_cast<double>(chain.draws.size());
}

/// Batch-means MCSE for a single chain of per-draw functional values.
double batch_means_mcse(const ModelSpec& spec, const McmcSamples& chain, long t,
                        const Transform& h) {
  const std::size_t n = chain.draws.size();
  const std::size_t nbatch = std::max<std::size_t>(2, static_cast<std::size_t>(std::sqrt(n)));
  const std::size_t len = n / nbatch;
  const bool identity = std::holds_alternative<Identity>(h);
  std::vector<double> means;
  means.reserve(nbatch);
  for (std::size_t b = 0; b < nbatch; ++b) {
    double acc = 0.0;
    for (std::size_t i = b * len; i < (b + 1) * len; ++i) {
      const std::span<const double> sp{chain.draws[i].data(),
                                       static_cast<std::size_t>(chain.dim)};
      acc += identity ? cond_mean(spec, t, sp) : cond_transform_mean(spec, t, sp, h);
    }
    means.push_back(acc / static_cast<double>(len));
  }
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / means.size();
  double ss = 0.0;
  for (double m : means) ss += (m - grand) * (m - grand);
  const double var = ss / (means.size() - 1);
  return std::sqrt(var / means.size());
}

}  // namespace

Estimate predictive_expectation(const ModelSpec& spec, const ClaimHistory& history,
                                const Transform& h, const EvalConfig& cfg) {
  validate(spec);
  validate_history(history);
  switch (cfg.method) {
    case Method::Conjugate: {
      const auto* conj = std::get_if<ConjHurdle>(&spec);
      if (conj == nullptr)
        throw std::invalid_argument("Conjugate method is only valid for the conjugate "
                                    "hurdle model");
      const PosteriorState st = conjugate_update(conj->law, history);
      if (std::holds_alternative<Identity>(h))
        return {predictive_mean_conjugate(st), 0.0};
      return {conjugate_transform_mean(st, h), 0.0};
    }
    case Method::Quadrature: {
      const QuadraturePosterior post(spec, history, cfg.quad_nodes);
      return {post.predictive_transform_mean(h), 0.0};
    }
    case Method::MCMC: {
      const int runs = std::max(1, cfg.mcmc.runs);
      if (runs == 1) {
        Rng rng = Rng(cfg.mcmc.seed).split(0);
        const McmcSamples chain = mcmc_posterior(spec, history, cfg.mcmc, rng);
        const long t = static_cast<long>(history.size()) + 1;
        const bool identity = std::holds_alternative<Identity>(h);
        double acc = 0.0;
        for (const auto& th : chain.draws) {
          const std::span<const double> sp{th.data(), static_cast<std::size_t>(chain.dim)};
          acc += identity ? cond_mean(spec, t, sp) : cond_transform_mean(spec, t, sp, h);
        }
        const double est = acc / static_cast<double>(chain.draws.size());
        return {est, batch_means_mcse(spec, chain, t, h)};
      }
      std::vector<double> run_est(static_cast<std::size_t>(runs));
      parallel_for(static_cast<std::size_t>(runs), cfg.threads, [&](std::size_t r) {
        Rng rng = Rng(cfg.mcmc.seed).split(r);
        run_est[r] = chain_estimate(spec, history, h, cfg.mcmc, rng);
      });
      const double mean = std::accumulate(run_est.begin(), run_est.end(), 0.0) / runs;
      double ss = 0.0;
      for (double e : run_est) ss += (e - mean) * (e - mean);
      const double sd = std::sqrt(ss / (runs - 1));
      return {mean, sd / std::sqrt(static_cast<double>(runs))};
    }
  }
  throw std::logic_error("predictive_expectation: unknown method");
}

}  // namespace zerocred
