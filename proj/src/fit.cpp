#include "zerocred/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace zerocred {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double dot(const Eigen::VectorXd& coef, const std::vector<double>& x) {
  double acc = 0.0;
  for (Eigen::Index j = 0; j < coef.size(); ++j) acc += coef(j) * x[static_cast<std::size_t>(j)];
  return acc;
}

/// Adaptive proposal scale for one MH block (targets ~37% acceptance).
struct Adapt {
  double scale = 0.3;
  long acc = 0;
  long tries = 0;

  void record(bool accepted) {
    acc += accepted ? 1 : 0;
    ++tries;
  }
  void maybe_adapt() {
    if (tries < 50) return;
    const double rate = static_cast<double>(acc) / static_cast<double>(tries);
    scale = std::clamp(scale * std::exp(0.666 * (rate - 0.375)), 1e-4, 50.0);
    acc = 0;
    tries = 0;
  }
};

bool accept(double delta, Rng& rng) {
  return delta >= 0.0 || std::log(rng.uniform_pos()) < delta;
}

double normal_prior_logpdf(double x) { return -x * x / 200.0; }  // N(0, 10^2), up to const

double scalar_normal_logpdf(double x, double mean, double var) {
  const double z = x - mean;
  return -0.5 * std::log(var) - 0.5 * z * z / var;  // up to const
}

// log N(theta; mu, Sigma(s1sq, s2sq, rho)), up to const
double bvn_logpdf(double t1, double t2, double m1, double m2, double s1sq, double s2sq,
                  double rho) {
  const double z1 = (t1 - m1) / std::sqrt(s1sq);
  const double z2 = (t2 - m2) / std::sqrt(s2sq);
  const double omr = 1.0 - rho * rho;
  return -0.5 * std::log(s1sq * s2sq * omr) -
         0.5 * (z1 * z1 - 2.0 * rho * z1 * z2 + z2 * z2) / omr;
}

void check_design(const PanelDataset& panel) {
  if (panel.entities.empty()) throw std::invalid_argument("fit: panel is empty");
  const std::size_t p = panel.n_covariates();
  Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p),
                                              static_cast<Eigen::Index>(p));
  for (const auto& e : panel.entities) {
    Eigen::Map<const Eigen::VectorXd> x(e.x.data(), static_cast<Eigen::Index>(p));
    xtx += x * x.transpose();
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(xtx);
  if (lu.rank() < static_cast<Eigen::Index>(p))
    throw std::invalid_argument("fit: design matrix is rank deficient");
}

struct DrawStore {
  std::vector<std::string> names;
  Eigen::MatrixXd draws;  // sweeps x params
  long next = 0;

  void init(std::vector<std::string> n, int sweeps) {
    names = std::move(n);
    draws.resize(sweeps, static_cast<Eigen::Index>(names.size()));
  }
  void record(const Eigen::VectorXd& v) { draws.row(next++) = v.transpose(); }
};

void summarize(const DrawStore& store, FitResult& out) {
  const Eigen::Index n = store.draws.rows();
  const Eigen::Index p = store.draws.cols();
  out.param_names = store.names;
  out.estimate = store.draws.colwise().mean();
  out.sd.resize(p);
  out.ci_lo.resize(p);
  out.ci_hi.resize(p);
  std::vector<double> col(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < p; ++j) {
    const double mean = out.estimate(j);
    double ss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      col[static_cast<std::size_t>(i)] = store.draws(i, j);
      const double d = store.draws(i, j) - mean;
      ss += d * d;
    }
    out.sd(j) = std::sqrt(ss / static_cast<double>(n - 1));
    std::sort(col.begin(), col.end());
    auto quantile = [&col](double q) {
      const double pos = q * static_cast<double>(col.size() - 1);
      const std::size_t lo = static_cast<std::size_t>(pos);
      const std::size_t hi = std::min(lo + 1, col.size() - 1);
      const double frac = pos - static_cast<double>(lo);
      return col[lo] * (1.0 - frac) + col[hi] * frac;
    };
    out.ci_lo(j) = quantile(0.025);
    out.ci_hi(j) = quantile(0.975);
  }
}

std::vector<std::string> block_names(const std::string& prefix,
                                     const std::vector<std::string>& covs) {
  std::vector<std::string> names;
  names.reserve(covs.size());
  for (const auto& c : covs) names.push_back(prefix + "." + c);
  return names;
}

// ---------------------------------------------------------------------------
// GaussHurdle sampler
// ---------------------------------------------------------------------------

FitResult fit_gauss(const PanelDataset& panel, const FitConfig& cfg, Rng& rng) {
  const std::size_t k = panel.entities.size();
  const Eigen::Index p = static_cast<Eigen::Index>(panel.n_covariates());

  auto data_ll = [&](const PanelEntity& e, double t1, double t2) {
    double ll = 0.0;
    const double lam = std::exp(t2);
    for (long y : e.counts) {
      if (y == 0) ll += log1m_logistic(t1);
      else ll += log_logistic(t1) + static_cast<double>(y - 1) * t2 - lam;
    }
    return ll;
  };

  Eigen::VectorXd b1 = Eigen::VectorXd::Zero(p), b2 = Eigen::VectorXd::Zero(p);
  double ls1 = 0.0, ls2 = 0.0, rho = 0.0;
  std::vector<std::array<double, 2>> theta(k, {0.0, 0.0});

  std::vector<double> mu1(k, 0.0), mu2(k, 0.0), ll_data(k), ll_re(k);
  auto re_ll = [&](std::size_t i, double t1, double t2) {
    return bvn_logpdf(t1, t2, mu1[i], mu2[i], std::exp(ls1), std::exp(ls2), rho);
  };
  for (std::size_t i = 0; i < k; ++i) {
    ll_data[i] = data_ll(panel.entities[i], theta[i][0], theta[i][1]);
    ll_re[i] = re_ll(i, theta[i][0], theta[i][1]);
  }

  Adapt a_theta1{cfg.proposal_scale}, a_theta2{cfg.proposal_scale};
  std::vector<Adapt> a_b1(static_cast<std::size_t>(p), Adapt{cfg.proposal_scale});
  std::vector<Adapt> a_b2(static_cast<std::size_t>(p), Adapt{cfg.proposal_scale});
  Adapt a_ls1{0.2}, a_ls2{0.2}, a_rho{0.2};

  DrawStore store;
  {
    std::vector<std::string> names = block_names("mu1", panel.covariate_names);
    const std::vector<std::string> n2 = block_names("mu2", panel.covariate_names);
    names.insert(names.end(), n2.begin(), n2.end());
    names.insert(names.end(), {"sigma1_sq", "sigma2_sq", "rho"});
    store.init(std::move(names), cfg.sweeps);
  }

  std::vector<std::array<double, 2>> re_sum(k, {0.0, 0.0});
  long global_acc = 0, global_tries = 0;

  const long total = cfg.burnin + cfg.sweeps;
  for (long sweep = 0; sweep < total; ++sweep) {
    const bool warm = sweep < cfg.burnin;

    for (std::size_t i = 0; i < k; ++i) {
      for (int coord = 0; coord < 2; ++coord) {
        Adapt& ad = coord == 0 ? a_theta1 : a_theta2;
        std::array<double, 2> cand = theta[i];
        cand[coord] += ad.scale * rng.normal();
        const double ld = data_ll(panel.entities[i], cand[0], cand[1]);
        const double lr = re_ll(i, cand[0], cand[1]);
        const bool ok = accept(ld + lr - ll_data[i] - ll_re[i], rng);
        if (ok) {
          theta[i] = cand;
          ll_data[i] = ld;
          ll_re[i] = lr;
        }
        ad.record(ok);
      }
    }
    if (warm) {
      a_theta1.maybe_adapt();
      a_theta2.maybe_adapt();
    }

    // Regression blocks move the RE prior means only.
    auto update_mean_coef = [&](Eigen::VectorXd& b, std::vector<double>& mu,
                                std::vector<Adapt>& adapts) {
      for (Eigen::Index j = 0; j < p; ++j) {
        Adapt& ad = adapts[static_cast<std::size_t>(j)];
        const double delta_b = ad.scale * rng.normal();
        double delta_lp = normal_prior_logpdf(b(j) + delta_b) - normal_prior_logpdf(b(j));
        std::vector<double> mu_new(k), ll_new(k);
        const bool first = &b == &b1;
        for (std::size_t i = 0; i < k; ++i) {
          mu_new[i] = mu[i] + delta_b * panel.entities[i].x[static_cast<std::size_t>(j)];
          ll_new[i] = first ? bvn_logpdf(theta[i][0], theta[i][1], mu_new[i], mu2[i],
                                         std::exp(ls1), std::exp(ls2), rho)
                            : bvn_logpdf(theta[i][0], theta[i][1], mu1[i], mu_new[i],
                                         std::exp(ls1), std::exp(ls2), rho);
          delta_lp += ll_new[i] - ll_re[i];
        }
        const bool ok = accept(delta_lp, rng);
        if (ok) {
          b(j) += delta_b;
          mu = std::move(mu_new);
          ll_re = std::move(ll_new);
        }
        ad.record(ok);
        if (warm) ad.maybe_adapt();
        global_acc += ok ? 1 : 0;
        ++global_tries;
      }
    };
    update_mean_coef(b1, mu1, a_b1);
    update_mean_coef(b2, mu2, a_b2);

    // Covariance parameters; Gamma(1,1) priors on the variances (log scale
    // with Jacobian), uniform on rho.
    auto update_cov = [&](double& par, Adapt& ad, bool is_rho) {
      const double cand = par + ad.scale * rng.normal();
      if (is_rho && !(cand > -0.999 && cand < 0.999)) {
        ad.record(false);
        return;
      }
      const double old = par;
      par = cand;
      double delta = 0.0;
      std::vector<double> ll_new(k);
      for (std::size_t i = 0; i < k; ++i) {
        ll_new[i] = re_ll(i, theta[i][0], theta[i][1]);
        delta += ll_new[i] - ll_re[i];
      }
      if (!is_rho) delta += (-std::exp(cand) + cand) - (-std::exp(old) + old);
      const bool ok = accept(delta, rng);
      if (ok) ll_re = std::move(ll_new);
      else par = old;
      ad.record(ok);
      if (warm) ad.maybe_adapt();
    };
    update_cov(ls1, a_ls1, false);
    update_cov(ls2, a_ls2, false);
    update_cov(rho, a_rho, true);

    if (!warm) {
      Eigen::VectorXd row(2 * p + 3);
      row.head(p) = b1;
      row.segment(p, p) = b2;
      row(2 * p) = std::exp(ls1);
      row(2 * p + 1) = std::exp(ls2);
      row(2 * p + 2) = rho;
      store.record(row);
      for (std::size_t i = 0; i < k; ++i) {
        re_sum[i][0] += theta[i][0];
        re_sum[i][1] += theta[i][1];
      }
    }
  }

  FitResult out;
  out.family = FitFamily::GaussHurdle;
  summarize(store, out);
  out.covariate_names = panel.covariate_names;
  out.link.family = FitFamily::GaussHurdle;
  out.link.coef1 = out.estimate.head(p);
  out.link.coef2 = out.estimate.segment(p, p);
  out.link.s1sq = out.estimate(2 * p);
  out.link.s2sq = out.estimate(2 * p + 1);
  out.link.rho = out.estimate(2 * p + 2);
  out.re_mean.resize(k);
  for (std::size_t i = 0; i < k; ++i)
    out.re_mean[i] = {re_sum[i][0] / cfg.sweeps, re_sum[i][1] / cfg.sweeps};
  auto rate = [](const Adapt& a) {
    return a.tries > 0 ? static_cast<double>(a.acc) / static_cast<double>(a.tries) : 0.0;
  };
  out.diagnostics["accept_theta1"] = rate(a_theta1);
  out.diagnostics["accept_theta2"] = rate(a_theta2);
  out.diagnostics["accept_global"] =
      static_cast<double>(global_acc) / static_cast<double>(global_tries);
  return out;
}

// ---------------------------------------------------------------------------
// ConjHurdle sampler (collapsed: random effects integrate out exactly)
// ---------------------------------------------------------------------------

double lbeta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

FitResult fit_conj(const PanelDataset& panel, const FitConfig& cfg, Rng& rng) {
  const std::size_t k = panel.entities.size();
  const Eigen::Index p = static_cast<Eigen::Index>(panel.n_covariates());

  std::vector<double> r(k), m(k), T(k);
  for (std::size_t i = 0; i < k; ++i) {
    const SufficientStats s = sufficient_stats(panel.entities[i].counts);
    r[i] = static_cast<double>(s.r_t);
    m[i] = static_cast<double>(s.m_t);
    T[i] = static_cast<double>(panel.entities[i].counts.size());
  }

  // a = beta sigma(u) keeps a < beta exactly on every draw.
  double u = 0.0, lb = 0.0;
  Eigen::VectorXd bb = Eigen::VectorXd::Zero(p), ba = Eigen::VectorXd::Zero(p);
  std::vector<double> eta_b(k, 0.0), eta_a(k, 0.0);

  auto marginal = [&](std::size_t i, double a, double beta, double bi, double ai) {
    return lbeta(a + r[i], bi + T[i] - r[i]) - lbeta(a, bi) + ai * std::log(beta) -
           std::lgamma(ai) + std::lgamma(ai + m[i]) - (ai + m[i]) * std::log(beta + r[i]);
  };
  auto hyper_prior = [](double u_, double lb_) {
    // Gamma(1,1) on a and beta plus the (u, log beta) Jacobian.
    const double beta = std::exp(lb_);
    const double a = beta * logistic(u_);
    return -a - beta + 2.0 * lb_ + log_logistic(u_) + log1m_logistic(u_);
  };

  std::vector<double> ll(k);
  auto refresh_all = [&]() {
    const double beta = std::exp(lb);
    const double a = beta * logistic(u);
    for (std::size_t i = 0; i < k; ++i)
      ll[i] = marginal(i, a, beta, std::exp(eta_b[i]), std::exp(eta_a[i]));
  };
  refresh_all();

  Adapt a_u{0.3}, a_lb{0.3};
  std::vector<Adapt> a_bb(static_cast<std::size_t>(p), Adapt{cfg.proposal_scale});
  std::vector<Adapt> a_ba(static_cast<std::size_t>(p), Adapt{cfg.proposal_scale});

  DrawStore store;
  {
    std::vector<std::string> names = block_names("b", panel.covariate_names);
    const std::vector<std::string> n2 = block_names("alpha", panel.covariate_names);
    names.insert(names.end(), n2.begin(), n2.end());
    names.insert(names.end(), {"a", "beta"});
    store.init(std::move(names), cfg.sweeps);
  }

  std::vector<std::array<double, 2>> re_sum(k, {0.0, 0.0});
  double min_beta_minus_a = std::numeric_limits<double>::infinity();
  const long total = cfg.burnin + cfg.sweeps;
  for (long sweep = 0; sweep < total; ++sweep) {
    const bool warm = sweep < cfg.burnin;

    // Scalar hyperparameter updates.
    for (int which = 0; which < 2; ++which) {
      double& par = which == 0 ? u : lb;
      Adapt& ad = which == 0 ? a_u : a_lb;
      const double old = par;
      const double cand = old + ad.scale * rng.normal();
      par = cand;
      const double beta = std::exp(lb);
      const double a = beta * logistic(u);
      std::vector<double> ll_new(k);
      double delta = hyper_prior(u, lb);
      for (std::size_t i = 0; i < k; ++i) {
        ll_new[i] = marginal(i, a, beta, std::exp(eta_b[i]), std::exp(eta_a[i]));
        delta += ll_new[i] - ll[i];
      }
      par = old;
      delta -= hyper_prior(u, lb);
      const bool ok = accept(delta, rng);
      if (ok) {
        par = cand;
        ll = std::move(ll_new);
      }
      ad.record(ok);
      if (warm) ad.maybe_adapt();
    }

    // Regression blocks on log b_i and log alpha_i.
    for (int which = 0; which < 2; ++which) {
      Eigen::VectorXd& b = which == 0 ? bb : ba;
      std::vector<double>& eta = which == 0 ? eta_b : eta_a;
      std::vector<Adapt>& adapts = which == 0 ? a_bb : a_ba;
      const double beta = std::exp(lb);
      const double a = beta * logistic(u);
      for (Eigen::Index j = 0; j < p; ++j) {
        Adapt& ad = adapts[static_cast<std::size_t>(j)];
        const double step = ad.scale * rng.normal();
        double delta = normal_prior_logpdf(b(j) + step) - normal_prior_logpdf(b(j));
        std::vector<double> eta_new(k), ll_new(k);
        for (std::size_t i = 0; i < k; ++i) {
          eta_new[i] = eta[i] + step * panel.entities[i].x[static_cast<std::size_t>(j)];
          const double bi = which == 0 ? std::exp(eta_new[i]) : std::exp(eta_b[i]);
          const double ai = which == 0 ? std::exp(eta_a[i]) : std::exp(eta_new[i]);
          ll_new[i] = marginal(i, a, beta, bi, ai);
          delta += ll_new[i] - ll[i];
        }
        const bool ok = accept(delta, rng);
        if (ok) {
          b(j) += step;
          eta = std::move(eta_new);
          ll = std::move(ll_new);
        }
        ad.record(ok);
        if (warm) ad.maybe_adapt();
      }
    }

    if (!warm) {
      const double beta = std::exp(lb);
      const double a = beta * logistic(u);
      Eigen::VectorXd row(2 * p + 2);
      row.head(p) = bb;
      row.segment(p, p) = ba;
      row(2 * p) = a;
      row(2 * p + 1) = beta;
      store.record(row);
      min_beta_minus_a = std::min(min_beta_minus_a, beta - a);
      // Exact conjugate draws of the random effects for reporting.
      for (std::size_t i = 0; i < k; ++i) {
        const double bi = std::exp(eta_b[i]);
        const double ai = std::exp(eta_a[i]);
        re_sum[i][0] += rng.beta(a + r[i], bi + T[i] - r[i]);
        re_sum[i][1] += rng.gamma(ai + m[i], beta + r[i]);
      }
    }
  }

  FitResult out;
  out.family = FitFamily::ConjHurdle;
  summarize(store, out);
  out.covariate_names = panel.covariate_names;
  out.link.family = FitFamily::ConjHurdle;
  out.link.coef1 = out.estimate.head(p);
  out.link.coef2 = out.estimate.segment(p, p);
  out.link.a = out.estimate(2 * p);
  out.link.beta = out.estimate(2 * p + 1);
  out.re_mean.resize(k);
  for (std::size_t i = 0; i < k; ++i)
    out.re_mean[i] = {re_sum[i][0] / cfg.sweeps, re_sum[i][1] / cfg.sweeps};
  out.diagnostics["min_beta_minus_a"] = min_beta_minus_a;
  return out;
}

// ---------------------------------------------------------------------------
// ComonoHurdle sampler
// ---------------------------------------------------------------------------

FitResult fit_comono(const PanelDataset& panel, const FitConfig& cfg, Rng& rng) {
  const std::size_t k = panel.entities.size();
  const Eigen::Index p = static_cast<Eigen::Index>(panel.n_covariates());

  auto data_ll = [](const PanelEntity& e, double c, double d, double th) {
    double ll = 0.0;
    const double lam = softplus(d + th);
    const double loglam = std::log(lam);
    for (long y : e.counts) {
      if (y == 0) ll += log1m_logistic(c + th);
      else ll += log_logistic(c + th) + static_cast<double>(y - 1) * loglam - lam;
    }
    return ll;
  };

  Eigen::VectorXd bc = Eigen::VectorXd::Zero(p), bd = Eigen::VectorXd::Zero(p);
  double lk = std::log(0.5);
  std::vector<double> theta(k, 0.0), c(k, 0.0), d(k, 0.0), ll_data(k), ll_re(k);
  for (std::size_t i = 0; i < k; ++i) {
    ll_data[i] = data_ll(panel.entities[i], c[i], d[i], theta[i]);
    ll_re[i] = scalar_normal_logpdf(theta[i], 0.0, std::exp(lk));
  }

  Adapt a_theta{cfg.proposal_scale}, a_lk{0.2};
  std::vector<Adapt> a_bc(static_cast<std::size_t>(p), Adapt{cfg.proposal_scale});
  std::vector<Adapt> a_bd(static_cast<std::size_t>(p), Adapt{cfg.proposal_scale});

  DrawStore store;
  {
    std::vector<std::string> names = block_names("c", panel.covariate_names);
    const std::vector<std::string> n2 = block_names("d", panel.covariate_names);
    names.insert(names.end(), n2.begin(), n2.end());
    names.push_back("kappa2");
    store.init(std::move(names), cfg.sweeps);
  }

  std::vector<double> re_sum(k, 0.0);
  const long total = cfg.burnin + cfg.sweeps;
  for (long sweep = 0; sweep < total; ++sweep) {
    const bool warm = sweep < cfg.burnin;

    for (std::size_t i = 0; i < k; ++i) {
      const double cand = theta[i] + a_theta.scale * rng.normal();
      const double ld = data_ll(panel.entities[i], c[i], d[i], cand);
      const double lr = scalar_normal_logpdf(cand, 0.0, std::exp(lk));
      const bool ok = accept(ld + lr - ll_data[i] - ll_re[i], rng);
      if (ok) {
        theta[i] = cand;
        ll_data[i] = ld;
        ll_re[i] = lr;
      }
      a_theta.record(ok);
    }
    if (warm) a_theta.maybe_adapt();

    for (int which = 0; which < 2; ++which) {
      Eigen::VectorXd& b = which == 0 ? bc : bd;
      std::vector<double>& offset = which == 0 ? c : d;
      std::vector<Adapt>& adapts = which == 0 ? a_bc : a_bd;
      for (Eigen::Index j = 0; j < p; ++j) {
        Adapt& ad = adapts[static_cast<std::size_t>(j)];
        const double step = ad.scale * rng.normal();
        double delta = normal_prior_logpdf(b(j) + step) - normal_prior_logpdf(b(j));
        std::vector<double> off_new(k), ll_new(k);
        for (std::size_t i = 0; i < k; ++i) {
          off_new[i] = offset[i] + step * panel.entities[i].x[static_cast<std::size_t>(j)];
          ll_new[i] = which == 0 ? data_ll(panel.entities[i], off_new[i], d[i], theta[i])
                                 : data_ll(panel.entities[i], c[i], off_new[i], theta[i]);
          delta += ll_new[i] - ll_data[i];
        }
        const bool ok = accept(delta, rng);
        if (ok) {
          b(j) += step;
          offset = std::move(off_new);
          ll_data = std::move(ll_new);
        }
        ad.record(ok);
        if (warm) ad.maybe_adapt();
      }
    }

    {
      const double old = lk;
      const double cand = lk + a_lk.scale * rng.normal();
      double delta = (-std::exp(cand) + cand) - (-std::exp(old) + old);
      std::vector<double> ll_new(k);
      for (std::size_t i = 0; i < k; ++i) {
        ll_new[i] = scalar_normal_logpdf(theta[i], 0.0, std::exp(cand));
        delta += ll_new[i] - ll_re[i];
      }
      const bool ok = accept(delta, rng);
      if (ok) {
        lk = cand;
        ll_re = std::move(ll_new);
      }
      a_lk.record(ok);
      if (warm) a_lk.maybe_adapt();
    }

    if (!warm) {
      Eigen::VectorXd row(2 * p + 1);
      row.head(p) = bc;
      row.segment(p, p) = bd;
      row(2 * p) = std::exp(lk);
      store.record(row);
      for (std::size_t i = 0; i < k; ++i) re_sum[i] += theta[i];
    }
  }

  FitResult out;
  out.family = FitFamily::ComonoHurdle;
  summarize(store, out);
  out.covariate_names = panel.covariate_names;
  out.link.family = FitFamily::ComonoHurdle;
  out.link.coef1 = out.estimate.head(p);
  out.link.coef2 = out.estimate.segment(p, p);
  out.link.kappa2 = out.estimate(2 * p);
  out.link.link = LinkFn::Softplus;
  out.re_mean.resize(k);
  for (std::size_t i = 0; i < k; ++i) out.re_mean[i] = {re_sum[i] / cfg.sweeps, 0.0};
  return out;
}

// ---------------------------------------------------------------------------
// Poisson GLMM sampler
// ---------------------------------------------------------------------------

FitResult fit_glmm(const PanelDataset& panel, const FitConfig& cfg, Rng& rng) {
  const std::size_t k = panel.entities.size();
  const Eigen::Index p = static_cast<Eigen::Index>(panel.n_covariates());

  auto data_ll = [](const PanelEntity& e, double eta, double re) {
    double ll = 0.0;
    const double lam = std::exp(eta + re);
    for (long y : e.counts) ll += static_cast<double>(y) * (eta + re) - lam;
    return ll;
  };

  Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
  double ld = std::log(0.5);  // log of the RE scale d
  std::vector<double> re(k, 0.0), eta(k, 0.0), ll_data(k), ll_re(k);
  auto re_prior = [&](double r_) {
    const double dv = std::exp(ld);
    return scalar_normal_logpdf(r_, -0.5 * dv * dv, dv * dv);
  };
  for (std::size_t i = 0; i < k; ++i) {
    ll_data[i] = data_ll(panel.entities[i], eta[i], re[i]);
    ll_re[i] = re_prior(re[i]);
  }

  Adapt a_re{cfg.proposal_scale}, a_ld{0.2};
  std::vector<Adapt> a_b(static_cast<std::size_t>(p), Adapt{cfg.proposal_scale});

  DrawStore store;
  {
    std::vector<std::string> names = block_names("lambda", panel.covariate_names);
    names.push_back("d");
    store.init(std::move(names), cfg.sweeps);
  }

  std::vector<double> re_sum(k, 0.0);
  double exp_re_sum = 0.0;
  const long total = cfg.burnin + cfg.sweeps;
  for (long sweep = 0; sweep < total; ++sweep) {
    const bool warm = sweep < cfg.burnin;

    for (std::size_t i = 0; i < k; ++i) {
      const double cand = re[i] + a_re.scale * rng.normal();
      const double ldata = data_ll(panel.entities[i], eta[i], cand);
      const double lprior = re_prior(cand);
      const bool ok = accept(ldata + lprior - ll_data[i] - ll_re[i], rng);
      if (ok) {
        re[i] = cand;
        ll_data[i] = ldata;
        ll_re[i] = lprior;
      }
      a_re.record(ok);
    }
    if (warm) a_re.maybe_adapt();

    for (Eigen::Index j = 0; j < p; ++j) {
      Adapt& ad = a_b[static_cast<std::size_t>(j)];
      const double step = ad.scale * rng.normal();
      double delta = normal_prior_logpdf(b(j) + step) - normal_prior_logpdf(b(j));
      std::vector<double> eta_new(k), ll_new(k);
      for (std::size_t i = 0; i < k; ++i) {
        eta_new[i] = eta[i] + step * panel.entities[i].x[static_cast<std::size_t>(j)];
        ll_new[i] = data_ll(panel.entities[i], eta_new[i], re[i]);
        delta += ll_new[i] - ll_data[i];
      }
      const bool ok = accept(delta, rng);
      if (ok) {
        b(j) += step;
        eta = std::move(eta_new);
        ll_data = std::move(ll_new);
      }
      ad.record(ok);
      if (warm) ad.maybe_adapt();
    }

    {
      // Half-normal(1) hyperprior on d, sampled as log d.
      const double old = ld;
      const double cand = ld + a_ld.scale * rng.normal();
      const double dv_old = std::exp(old), dv_new = std::exp(cand);
      double delta = (-0.5 * dv_new * dv_new + cand) - (-0.5 * dv_old * dv_old + old);
      ld = cand;
      std::vector<double> ll_new(k);
      for (std::size_t i = 0; i < k; ++i) {
        ll_new[i] = re_prior(re[i]);
        delta += ll_new[i] - ll_re[i];
      }
      ld = old;
      const bool ok = accept(delta, rng);
      if (ok) {
        ld = cand;
        ll_re = std::move(ll_new);
      }
      a_ld.record(ok);
      if (warm) a_ld.maybe_adapt();
    }

    if (!warm) {
      Eigen::VectorXd row(p + 1);
      row.head(p) = b;
      row(p) = std::exp(ld);
      store.record(row);
      for (std::size_t i = 0; i < k; ++i) {
        re_sum[i] += re[i];
        exp_re_sum += std::exp(re[i]);
      }
    }
  }

  FitResult out;
  out.family = FitFamily::PoissonGLMM;
  summarize(store, out);
  out.covariate_names = panel.covariate_names;
  out.link.family = FitFamily::PoissonGLMM;
  out.link.coef1 = out.estimate.head(p);
  out.link.coef2 = Eigen::VectorXd();
  out.link.d = out.estimate(p);
  out.re_mean.resize(k);
  for (std::size_t i = 0; i < k; ++i) out.re_mean[i] = {re_sum[i] / cfg.sweeps, 0.0};
  out.diagnostics["mean_exp_re"] =
      exp_re_sum / (static_cast<double>(cfg.sweeps) * static_cast<double>(k));
  return out;
}

// ---------------------------------------------------------------------------
// Maximum likelihood benchmarks
// ---------------------------------------------------------------------------

struct Pooled {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

Pooled pool_observations(const PanelDataset& panel) {
  const std::size_t n = panel.n_observations();
  const std::size_t p = panel.n_covariates();
  Pooled out;
  out.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  out.y.resize(static_cast<Eigen::Index>(n));
  Eigen::Index row = 0;
  for (const auto& e : panel.entities) {
    for (long count : e.counts) {
      for (std::size_t j = 0; j < p; ++j) out.X(row, static_cast<Eigen::Index>(j)) = e.x[j];
      out.y(row) = static_cast<double>(count);
      ++row;
    }
  }
  return out;
}

/// Newton with step halving; score/curvature supplied per linear predictor.
/// mean_fn(eta) -> fitted mean; weight_fn(eta) -> -d(mean)/d(eta) curvature.
template <typename Score, typename Curv>
Eigen::VectorXd newton_glm(const Eigen::MatrixXd& X, Score&& score_fn, Curv&& curv_fn,
                           Eigen::VectorXd beta, Eigen::MatrixXd* info_out,
                           const char* label) {
  constexpr int kMaxIter = 200;
  const Eigen::Index n = X.rows();
  Eigen::VectorXd eta = X * beta;
  for (int iter = 0; iter < kMaxIter; ++iter) {
    Eigen::VectorXd s(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      s(i) = score_fn(i, eta(i));
      w(i) = curv_fn(i, eta(i));
    }
    const Eigen::VectorXd grad = X.transpose() * s;
    if (grad.norm() < 1e-8) {
      if (info_out != nullptr) *info_out = X.transpose() * w.asDiagonal() * X;
      return beta;
    }
    const Eigen::MatrixXd info = X.transpose() * w.asDiagonal() * X;
    const Eigen::VectorXd step = info.ldlt().solve(grad);
    double scale = 1.0;
    for (int half = 0; half < 40; ++half) {
      const Eigen::VectorXd cand = beta + scale * step;
      const Eigen::VectorXd eta_cand = X * cand;
      Eigen::VectorXd s_cand(n);
      bool finite = true;
      for (Eigen::Index i = 0; i < n && finite; ++i) {
        s_cand(i) = score_fn(i, eta_cand(i));
        finite = std::isfinite(s_cand(i));
      }
      if (finite && (X.transpose() * s_cand).norm() <= grad.norm()) {
        beta = cand;
        eta = eta_cand;
        break;
      }
      scale *= 0.5;
    }
  }
  throw std::runtime_error(std::string(label) +
                           ": Newton did not reach gradient norm 1e-8 in 200 iterations");
}

FitResult finalize_mle(FitFamily family, const PanelDataset& panel,
                       std::vector<std::string> names, const Eigen::VectorXd& estimate,
                       const Eigen::MatrixXd& info) {
  FitResult out;
  out.family = family;
  out.param_names = std::move(names);
  out.estimate = estimate;
  const Eigen::MatrixXd cov = info.inverse();
  out.sd.resize(estimate.size());
  for (Eigen::Index j = 0; j < estimate.size(); ++j)
    out.sd(j) = std::sqrt(std::max(cov(j, j), 0.0));
  out.ci_lo = out.estimate - 1.959963984540054 * out.sd;
  out.ci_hi = out.estimate + 1.959963984540054 * out.sd;
  out.covariate_names = panel.covariate_names;
  return out;
}

FitResult fit_poisson_glm(const PanelDataset& panel) {
  const Pooled data = pool_observations(panel);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(data.X.cols());
  beta(0) = std::log(data.y.mean() + 0.1);
  Eigen::MatrixXd info;
  beta = newton_glm(
      data.X, [&](Eigen::Index i, double eta) { return data.y(i) - std::exp(eta); },
      [&](Eigen::Index, double eta) { return std::exp(eta); }, beta, &info, "poisson_glm");
  FitResult out = finalize_mle(FitFamily::PoissonGLM, panel,
                               block_names("lambda", panel.covariate_names), beta, info);
  out.link.family = FitFamily::PoissonGLM;
  out.link.coef1 = beta;
  return out;
}

Eigen::VectorXd fit_logistic_part(const Eigen::MatrixXd& X, const Eigen::VectorXd& z,
                                  Eigen::MatrixXd* info) {
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(X.cols());
  return newton_glm(
      X, [&](Eigen::Index i, double eta) { return z(i) - logistic(eta); },
      [&](Eigen::Index, double eta) {
        const double s = logistic(eta);
        return s * (1.0 - s);
      },
      beta, info, "logistic");
}

/// Zero-truncated Poisson mean lambda / (1 - e^-lambda) and its eta-derivative.
double tpois_mean(double lambda) { return lambda / -std::expm1(-lambda); }

double tpois_mean_deta(double lambda) {
  const double em = -std::expm1(-lambda);  // 1 - e^-lambda
  const double mu = lambda / em;
  // d mu / d lambda = (em - lambda e^-lambda) / em^2; chain rule with
  // d lambda / d eta = lambda.
  const double dmu_dlam = (em - lambda * std::exp(-lambda)) / (em * em);
  return dmu_dlam * lambda;
}

FitResult fit_poisson_hurdle_mle(const PanelDataset& panel) {
  const Pooled data = pool_observations(panel);
  const Eigen::Index n = data.X.rows();
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z(i) = data.y(i) > 0.0 ? 1.0 : 0.0;

  Eigen::MatrixXd info1;
  const Eigen::VectorXd beta1 = fit_logistic_part(data.X, z, &info1);

  // Positive part: zero-truncated Poisson on the y > 0 rows.
  const Eigen::Index npos = static_cast<Eigen::Index>(z.sum());
  if (npos == 0) throw std::runtime_error("poisson_hurdle: no positive counts");
  Eigen::MatrixXd Xp(npos, data.X.cols());
  Eigen::VectorXd yp(npos);
  Eigen::Index rpos = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (z(i) > 0.0) {
      Xp.row(rpos) = data.X.row(i);
      yp(rpos) = data.y(i);
      ++rpos;
    }
  }
  Eigen::VectorXd beta2 = Eigen::VectorXd::Zero(data.X.cols());
  beta2(0) = std::log(std::max(yp.mean() - 1.0, 0.2));
  Eigen::MatrixXd info2;
  beta2 = newton_glm(
      Xp, [&](Eigen::Index i, double eta) { return yp(i) - tpois_mean(std::exp(eta)); },
      [&](Eigen::Index, double eta) { return tpois_mean_deta(std::exp(eta)); }, beta2, &info2,
      "truncated_poisson");

  const Eigen::Index p = data.X.cols();
  Eigen::VectorXd estimate(2 * p);
  estimate.head(p) = beta1;
  estimate.segment(p, p) = beta2;
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(2 * p, 2 * p);
  info.topLeftCorner(p, p) = info1;
  info.bottomRightCorner(p, p) = info2;

  std::vector<std::string> names = block_names("pi", panel.covariate_names);
  const std::vector<std::string> n2 = block_names("lambda", panel.covariate_names);
  names.insert(names.end(), n2.begin(), n2.end());
  FitResult out = finalize_mle(FitFamily::PoissonHurdle, panel, std::move(names), estimate, info);
  out.link.family = FitFamily::PoissonHurdle;
  out.link.coef1 = beta1;
  out.link.coef2 = beta2;
  return out;
}

FitResult fit_poisson_zip_mle(const PanelDataset& panel, double zero_inflation_offset) {
  const Pooled data = pool_observations(panel);
  const Eigen::Index n = data.X.rows();
  const Eigen::Index p = data.X.cols();
  const bool frozen_binary = zero_inflation_offset <= -30.0;
  const double off = zero_inflation_offset;

  // pi_i = sigma(<x, beta1> - off): probability of the count component.
  Eigen::VectorXd beta1 = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd beta2 = Eigen::VectorXd::Zero(p);
  beta2(0) = std::log(data.y.mean() + 0.1);

  auto loglik_grad = [&](const Eigen::VectorXd& b1, const Eigen::VectorXd& b2,
                         Eigen::VectorXd* grad) {
    double ll = 0.0;
    if (grad != nullptr) grad->setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double eta1 = data.X.row(i).dot(b1) - off;
      const double eta2 = data.X.row(i).dot(b2);
      const double pi = logistic(eta1);
      const double lam = std::exp(eta2);
      const double yv = data.y(i);
      if (yv > 0.0) {
        ll += log_logistic(eta1) + yv * eta2 - lam - std::lgamma(yv + 1.0);
        if (grad != nullptr) {
          grad->head(p) += (1.0 - pi) * data.X.row(i).transpose();
          grad->segment(p, p) += (yv - lam) * data.X.row(i).transpose();
        }
      } else {
        // log((1 - pi) + pi e^-lam)
        const double l0 = logsumexp(std::array{log1m_logistic(eta1),
                                               log_logistic(eta1) - lam});
        ll += l0;
        if (grad != nullptr) {
          const double denom = std::exp(l0);
          const double dpi = pi * (1.0 - pi) * (std::exp(-lam) - 1.0) / denom;
          const double dlam = -pi * std::exp(-lam) * lam / denom;
          grad->head(p) += dpi * data.X.row(i).transpose();
          grad->segment(p, p) += dlam * data.X.row(i).transpose();
        }
      }
    }
    return ll;
  };

  if (frozen_binary) {
    // Structural zeros vanish; the count block is a plain Poisson GLM.
    Eigen::MatrixXd info2;
    beta2 = newton_glm(
        data.X, [&](Eigen::Index i, double eta) { return data.y(i) - std::exp(eta); },
        [&](Eigen::Index, double eta) { return std::exp(eta); }, beta2, &info2, "zip_frozen");
    Eigen::VectorXd estimate(2 * p);
    estimate.head(p) = beta1;
    estimate.segment(p, p) = beta2;
    Eigen::MatrixXd info = Eigen::MatrixXd::Identity(2 * p, 2 * p);
    info.bottomRightCorner(p, p) = info2;
    std::vector<std::string> names = block_names("pi", panel.covariate_names);
    const std::vector<std::string> n2 = block_names("lambda", panel.covariate_names);
    names.insert(names.end(), n2.begin(), n2.end());
    FitResult out = finalize_mle(FitFamily::PoissonZIP, panel, std::move(names), estimate, info);
    out.link.family = FitFamily::PoissonZIP;
    out.link.coef1 = beta1;
    out.link.coef2 = beta2;
    out.diagnostics["zero_inflation_offset"] = off;
    return out;
  }

  // A few EM passes for stability, then Newton on the observed likelihood
  // with a finite-difference Hessian of the analytic gradient.
  for (int em = 0; em < 30; ++em) {
    Eigen::VectorXd tau(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (data.y(i) > 0.0) {
        tau(i) = 1.0;
        continue;
      }
      const double eta1 = data.X.row(i).dot(beta1) - off;
      const double lam = std::exp(data.X.row(i).dot(beta2));
      const double num = log_logistic(eta1) - lam;
      tau(i) = std::exp(num - logsumexp(std::array{log1m_logistic(eta1), num}));
    }
    beta1 = newton_glm(
        data.X, [&](Eigen::Index i, double eta) { return tau(i) - logistic(eta - off); },
        [&](Eigen::Index, double eta) {
          const double s = logistic(eta - off);
          return s * (1.0 - s);
        },
        beta1, nullptr, "zip_em_binary");
    beta2 = newton_glm(
        data.X,
        [&](Eigen::Index i, double eta) { return tau(i) * (data.y(i) - std::exp(eta)); },
        [&](Eigen::Index i, double eta) { return tau(i) * std::exp(eta); }, beta2, nullptr,
        "zip_em_count");
  }

  // Newton polish on the stacked parameter vector.
  Eigen::VectorXd par(2 * p);
  par.head(p) = beta1;
  par.segment(p, p) = beta2;
  auto grad_at = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd g(2 * p);
    loglik_grad(v.head(p), v.segment(p, p), &g);
    return g;
  };
  Eigen::MatrixXd hess(2 * p, 2 * p);
  for (int iter = 0; iter < 100; ++iter) {
    const Eigen::VectorXd g = grad_at(par);
    if (g.norm() < 1e-8) break;
    const double h = 1e-6;
    for (Eigen::Index j = 0; j < 2 * p; ++j) {
      Eigen::VectorXd shifted = par;
      shifted(j) += h;
      hess.col(j) = (grad_at(shifted) - g) / h;
    }
    const Eigen::MatrixXd sym = -0.5 * (hess + hess.transpose());
    Eigen::VectorXd step = sym.ldlt().solve(g);
    double scale = 1.0;
    const double g0 = g.norm();
    for (int half = 0; half < 40; ++half) {
      const Eigen::VectorXd cand = par + scale * step;
      if (grad_at(cand).norm() <= g0) {
        par = cand;
        break;
      }
      scale *= 0.5;
    }
    if (iter == 99)
      throw std::runtime_error("poisson_zip: Newton did not reach gradient norm 1e-8");
  }
  if (grad_at(par).norm() >= 1e-8)
    throw std::runtime_error("poisson_zip: Newton did not reach gradient norm 1e-8");

  const Eigen::VectorXd g = grad_at(par);
  const double h = 1e-6;
  for (Eigen::Index j = 0; j < 2 * p; ++j) {
    Eigen::VectorXd shifted = par;
    shifted(j) += h;
    hess.col(j) = (grad_at(shifted) - g) / h;
  }
  const Eigen::MatrixXd info = -0.5 * (hess + hess.transpose());

  std::vector<std::string> names = block_names("pi", panel.covariate_names);
  const std::vector<std::string> n2 = block_names("lambda", panel.covariate_names);
  names.insert(names.end(), n2.begin(), n2.end());
  FitResult out = finalize_mle(FitFamily::PoissonZIP, panel, std::move(names), par, info);
  out.link.family = FitFamily::PoissonZIP;
  out.link.coef1 = par.head(p);
  out.link.coef2 = par.segment(p, p);
  out.diagnostics["zero_inflation_offset"] = off;
  return out;
}

// ---------------------------------------------------------------------------
// Prediction helpers
// ---------------------------------------------------------------------------

double glmm_predictive_mean(const CovariateLink& link, const std::vector<double>& x,
                            const ClaimHistory& history, int quad_nodes) {
  const double eta = dot(link.coef1, x);
  const double lam = std::exp(eta);
  const double dv = link.d;
  const QuadratureRule gh = gauss_hermite_rule(quad_nodes);
  std::vector<double> lw(gh.nodes.size());
  double total_y = 0.0;
  for (long y : history) total_y += static_cast<double>(y);
  for (std::size_t j = 0; j < gh.nodes.size(); ++j) {
    const double r = -0.5 * dv * dv + dv * gh.nodes[j];
    double ll = std::log(gh.weights[j]);
    ll += total_y * r - static_cast<double>(history.size()) * lam * std::exp(r);
    lw[j] = ll;
  }
  const double norm = logsumexp(lw);
  double acc = 0.0;
  for (std::size_t j = 0; j < gh.nodes.size(); ++j) {
    const double r = -0.5 * dv * dv + dv * gh.nodes[j];
    acc += std::exp(lw[j] - norm + r);
  }
  return lam * acc;
}

double glmm_predictive_transform_mean(const CovariateLink& link, const std::vector<double>& x,
                                      const ClaimHistory& history, const Transform& h,
                                      int quad_nodes) {
  const double lam = std::exp(dot(link.coef1, x));
  const double dv = link.d;
  const QuadratureRule gh = gauss_hermite_rule(quad_nodes);
  std::vector<double> lw(gh.nodes.size());
  double total_y = 0.0;
  for (long y : history) total_y += static_cast<double>(y);
  for (std::size_t j = 0; j < gh.nodes.size(); ++j) {
    const double r = -0.5 * dv * dv + dv * gh.nodes[j];
    lw[j] = std::log(gh.weights[j]) + total_y * r -
            static_cast<double>(history.size()) * lam * std::exp(r);
  }
  const double norm = logsumexp(lw);
  double acc = 0.0;
  for (std::size_t j = 0; j < gh.nodes.size(); ++j) {
    const double r = -0.5 * dv * dv + dv * gh.nodes[j];
    const CountDist pois = Poisson{lam * std::exp(r)};
    const long ymax = count_support_max(pois);
    double inner = 0.0;
    for (long y = 0; y <= ymax; ++y) {
      const double hy = transform_apply(h, y);
      if (hy != 0.0) inner += hy * count_pmf(pois, y);
    }
    acc += std::exp(lw[j] - norm) * inner;
  }
  return acc;
}

double benchmark_mean(const CovariateLink& link, const std::vector<double>& x) {
  switch (link.family) {
    case FitFamily::PoissonGLM:
      return std::exp(dot(link.coef1, x));
    case FitFamily::PoissonHurdle: {
      const double pi = logistic(dot(link.coef1, x));
      const double lam = std::exp(dot(link.coef2, x));
      return pi * tpois_mean(lam);
    }
    case FitFamily::PoissonZIP: {
      const double pi = logistic(dot(link.coef1, x));
      const double lam = std::exp(dot(link.coef2, x));
      return pi * lam;
    }
    default:
      throw std::logic_error("benchmark_mean: not a benchmark family");
  }
}

}  // namespace

double FitResult::param(const std::string& name) const {
  for (std::size_t j = 0; j < param_names.size(); ++j)
    if (param_names[j] == name) return estimate(static_cast<Eigen::Index>(j));
  throw std::invalid_argument("unknown parameter: " + name);
}

FitResult fit_mcmc(const PanelDataset& panel, FitFamily family, const FitConfig& cfg,
                   Rng& rng) {
  if (!family_has_random_effects(family))
    throw std::invalid_argument("fit_mcmc: family has no random effects; use fit_mle");
  if (cfg.sweeps < 2 || cfg.burnin < 0)
    throw std::invalid_argument("fit_mcmc: invalid sweep configuration");
  check_design(panel);
  FitResult out;
  switch (family) {
    case FitFamily::GaussHurdle: out = fit_gauss(panel, cfg, rng); break;
    case FitFamily::ConjHurdle: out = fit_conj(panel, cfg, rng); break;
    case FitFamily::ComonoHurdle: out = fit_comono(panel, cfg, rng); break;
    case FitFamily::PoissonGLMM: out = fit_glmm(panel, cfg, rng); break;
    default: throw std::logic_error("unreachable");
  }
  out.sweeps = cfg.sweeps;
  out.burnin = cfg.burnin;
  out.seed = rng.seed();
  for (Eigen::Index j = 0; j < out.estimate.size(); ++j)
    if (!std::isfinite(out.estimate(j)))
      throw std::runtime_error("fit_mcmc: non-finite posterior mean");
  return out;
}

FitResult fit_mle(const PanelDataset& panel, FitFamily family, double zero_inflation_offset) {
  check_design(panel);
  switch (family) {
    case FitFamily::PoissonGLM: return fit_poisson_glm(panel);
    case FitFamily::PoissonHurdle: return fit_poisson_hurdle_mle(panel);
    case FitFamily::PoissonZIP: return fit_poisson_zip_mle(panel, zero_inflation_offset);
    default:
      throw std::invalid_argument("fit_mle: family requires MCMC fitting");
  }
}

PredictResult predict_oos(const FitResult& fit, const PanelDataset& train,
                          const PanelDataset& holdout, int quad_nodes) {
  PredictResult out;
  out.rows.reserve(holdout.entities.size());
  double sse = 0.0;
  for (const auto& e : holdout.entities) {
    if (e.counts.size() != 1)
      throw PanelFormatError("holdout must contain exactly one period per entity", 0,
                             "period");
    const PanelEntity* tr = train.find(e.id);
    if (tr == nullptr)
      throw PanelFormatError("holdout entity " + std::to_string(e.id) +
                                 " is missing from training data",
                             0, "entity");
    double pred = 0.0;
    switch (fit.family) {
      case FitFamily::GaussHurdle:
      case FitFamily::ComonoHurdle: {
        const QuadraturePosterior post(entity_spec(fit.link, tr->x), tr->counts, quad_nodes);
        pred = post.predictive_mean();
        break;
      }
      case FitFamily::ConjHurdle: {
        const auto spec = std::get<ConjHurdle>(entity_spec(fit.link, tr->x));
        pred = predictive_mean_conjugate(conjugate_update(spec.law, tr->counts));
        break;
      }
      case FitFamily::PoissonGLMM:
        pred = glmm_predictive_mean(fit.link, tr->x, tr->counts, quad_nodes);
        break;
      default:
        pred = benchmark_mean(fit.link, tr->x);
        break;
    }
    const double actual = static_cast<double>(e.counts.front());
    sse += (actual - pred) * (actual - pred);
    out.rows.push_back({e.id, actual, pred});
  }
  out.mse = sse / static_cast<double>(holdout.entities.size());
  return out;
}

ViolationReport violation_report(const FitResult& fit, const PanelDataset& panel,
                                 int t_anchor, const std::vector<Transform>& transforms,
                                 int quad_nodes) {
  if (t_anchor < 1) throw std::invalid_argument("violation_report: t_anchor must be >= 1");
  for (const auto& e : panel.entities)
    if (e.counts.size() < static_cast<std::size_t>(t_anchor))
      throw std::invalid_argument("violation_report: every entity needs >= t_anchor periods");

  std::vector<Transform> all;
  all.push_back(Identity{});
  all.insert(all.end(), transforms.begin(), transforms.end());

  ViolationReport report;
  report.t_anchor = t_anchor;
  std::vector<OrderReport> reports(all.size());
  for (std::size_t j = 0; j < all.size(); ++j) {
    reports[j].method = "point_estimate";
    reports[j].transform = j == 0 ? "base" : transform_name(all[j]);
    reports[j].tolerance = 1e-8;
  }

  for (const auto& e : panel.entities) {
    ClaimHistory base(e.counts.begin(), e.counts.begin() + (t_anchor - 1));
    ClaimHistory lo = base, hi = base;
    lo.push_back(0);
    hi.push_back(1);

    std::vector<double> v_lo(all.size()), v_hi(all.size());
    switch (fit.family) {
      case FitFamily::GaussHurdle:
      case FitFamily::ComonoHurdle: {
        const ModelSpec spec = entity_spec(fit.link, e.x);
        v_lo = QuadraturePosterior(spec, lo, quad_nodes).predictive_transform_means(all);
        v_hi = QuadraturePosterior(spec, hi, quad_nodes).predictive_transform_means(all);
        break;
      }
      case FitFamily::ConjHurdle: {
        const auto spec = std::get<ConjHurdle>(entity_spec(fit.link, e.x));
        for (std::size_t j = 0; j < all.size(); ++j) {
          EvalConfig cfg;
          cfg.method = Method::Conjugate;
          v_lo[j] = predictive_expectation(spec, lo, all[j], cfg).value;
          v_hi[j] = predictive_expectation(spec, hi, all[j], cfg).value;
        }
        break;
      }
      case FitFamily::PoissonGLMM: {
        for (std::size_t j = 0; j < all.size(); ++j) {
          v_lo[j] = glmm_predictive_transform_mean(fit.link, e.x, lo, all[j], quad_nodes);
          v_hi[j] = glmm_predictive_transform_mean(fit.link, e.x, hi, all[j], quad_nodes);
        }
        break;
      }
      default: {
        // No random effects: predictions ignore the history entirely.
        for (std::size_t j = 0; j < all.size(); ++j) {
          v_lo[j] = benchmark_mean(fit.link, e.x);
          v_hi[j] = v_lo[j];
        }
        break;
      }
    }

    for (std::size_t j = 0; j < all.size(); ++j) {
      OrderComparison cmp;
      cmp.lo = lo;
      cmp.hi = hi;
      cmp.value_lo = v_lo[j];
      cmp.value_hi = v_hi[j];
      cmp.gap = v_lo[j] - v_hi[j];
      cmp.violated = cmp.gap > reports[j].tolerance;
      reports[j].comparisons.push_back(std::move(cmp));
    }
  }

  for (std::size_t j = 0; j < all.size(); ++j)
    report.by_transform.emplace_back(reports[j].transform, std::move(reports[j]));
  return report;
}

nlohmann::json ViolationReport::to_json() const {
  nlohmann::json out;
  out["t_anchor"] = t_anchor;
  nlohmann::json rates = nlohmann::json::object();
  for (const auto& [name, rep] : by_transform) rates[name] = rep.violation_rate();
  out["violation_rates"] = rates;
  return out;
}

nlohmann::json FitResult::to_json() const {
  nlohmann::json j;
  j["family"] = family_name(family);
  j["param_names"] = param_names;
  j["estimate"] = std::vector<double>(estimate.data(), estimate.data() + estimate.size());
  j["sd"] = std::vector<double>(sd.data(), sd.data() + sd.size());
  j["ci_lo"] = std::vector<double>(ci_lo.data(), ci_lo.data() + ci_lo.size());
  j["ci_hi"] = std::vector<double>(ci_hi.data(), ci_hi.data() + ci_hi.size());
  j["covariate_names"] = covariate_names;
  j["link"] = {
      {"coef1", std::vector<double>(link.coef1.data(), link.coef1.data() + link.coef1.size())},
      {"coef2", std::vector<double>(link.coef2.data(), link.coef2.data() + link.coef2.size())},
      {"a", link.a},
      {"beta", link.beta},
      {"kappa2", link.kappa2},
      {"s1sq", link.s1sq},
      {"s2sq", link.s2sq},
      {"rho", link.rho},
      {"d", link.d},
      {"link_fn", link_name(link.link)},
  };
  nlohmann::json re = nlohmann::json::array();
  for (const auto& v : re_mean) re.push_back({v[0], v[1]});
  j["re_mean"] = re;
  j["diagnostics"] = diagnostics;
  j["provenance"] = {{"sweeps", sweeps}, {"burnin", burnin}, {"seed", seed}};
  return j;
}

FitResult FitResult::from_json(const nlohmann::json& j) {
  FitResult out;
  out.family = family_from_name(j.at("family").get<std::string>());
  out.param_names = j.at("param_names").get<std::vector<std::string>>();
  auto to_vec = [](const nlohmann::json& arr) {
    const std::vector<double> v = arr.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()))
        .eval();
  };
  out.estimate = to_vec(j.at("estimate"));
  out.sd = to_vec(j.at("sd"));
  out.ci_lo = to_vec(j.at("ci_lo"));
  out.ci_hi = to_vec(j.at("ci_hi"));
  out.covariate_names = j.at("covariate_names").get<std::vector<std::string>>();
  const nlohmann::json& l = j.at("link");
  out.link.family = out.family;
  out.link.coef1 = to_vec(l.at("coef1"));
  out.link.coef2 = to_vec(l.at("coef2"));
  out.link.a = l.at("a").get<double>();
  out.link.beta = l.at("beta").get<double>();
  out.link.kappa2 = l.at("kappa2").get<double>();
  out.link.s1sq = l.at("s1sq").get<double>();
  out.link.s2sq = l.at("s2sq").get<double>();
  out.link.rho = l.at("rho").get<double>();
  out.link.d = l.at("d").get<double>();
  out.link.link = link_from_name(l.at("link_fn").get<std::string>());
  if (j.contains("re_mean")) {
    for (const auto& v : j.at("re_mean"))
      out.re_mean.push_back({v[0].get<double>(), v[1].get<double>()});
  }
  if (j.contains("diagnostics"))
    out.diagnostics = j.at("diagnostics").get<std::map<std::string, double>>();
  if (j.contains("provenance")) {
    out.sweeps = j["provenance"].value("sweeps", 0);
    out.burnin = j["provenance"].value("burnin", 0);
    out.seed = j["provenance"].value("seed", 0ULL);
  }
  return out;
}

}  // namespace zerocred
