#include <doctest.h>

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "zerocred/posterior.hpp"

using namespace zerocred;

namespace {

/// Independent Bayes oracle: midpoint-rule posterior mean of the conditional
/// mean over a fine (theta1, theta2) grid, straight from Bayes' rule.
double grid_bayes_predictive_mean(const BetaGamma& prior, const ClaimHistory& history) {
  const ModelSpec spec = ConjHurdle{prior};
  const int n1 = 400, n2 = 900;
  const double hi2 = 40.0;
  double num = 0.0, den = 0.0;
  for (int i = 0; i < n1; ++i) {
    const double t1 = (i + 0.5) / n1;
    for (int j = 0; j < n2; ++j) {
      const double t2 = (j + 0.5) * hi2 / n2;
      const double theta[] = {t1, t2};
      const double w = std::exp(prior_logpdf(REPriorLaw{prior}, theta) +
                                history_loglik(spec, history, theta));
      num += w * t1 * (1.0 + t2);
      den += w;
    }
  }
  return num / den;
}

}  // namespace

TEST_CASE("conjugate update formulas") {
  PosteriorState st = conjugate_update(BetaGamma{1, 1, 1, 1}, {0});
  CHECK(st.a_star == 1.0);
  CHECK(st.b_star == 2.0);
  CHECK(st.alpha_star == 1.0);
  CHECK(st.beta_star == 1.0);

  st = conjugate_update(BetaGamma{0.5, 1, 1, 1}, {1});
  CHECK(st.a_star == 1.5);
  CHECK(st.b_star == 1.0);
  CHECK(st.alpha_star == 1.0);
  CHECK(st.beta_star == 2.0);

  st = conjugate_update(BetaGamma{1, 1, 1, 1}, {});
  CHECK(st.a_star == 1.0);
  CHECK(st.b_star == 1.0);
  CHECK(st.alpha_star == 1.0);
  CHECK(st.beta_star == 1.0);
  CHECK(st.t == 0);
}

TEST_CASE("one-step predictive mean after a single observation") {
  const BetaGamma prior{0.5, 1, 1, 1};
  CHECK(predictive_mean_conjugate(conjugate_update(prior, {0})) ==
        doctest::Approx(0.4).epsilon(1e-15));
  CHECK(predictive_mean_conjugate(conjugate_update(prior, {1})) ==
        doctest::Approx(0.9).epsilon(1e-15));
  CHECK(predictive_mean_conjugate(conjugate_update(prior, {2})) ==
        doctest::Approx(1.2).epsilon(1e-15));
}

TEST_CASE("conjugate predictive mean matches a grid Bayes oracle") {
  Rng rng(300);
  for (int rep = 0; rep < 6; ++rep) {
    const BetaGamma prior{1.0 + 3.0 * rng.uniform(), 1.0 + 3.0 * rng.uniform(),
                          1.0 + 3.0 * rng.uniform(), 1.0 + 3.0 * rng.uniform()};
    ClaimHistory history;
    const int t = 1 + static_cast<int>(rng.uniform() * 4);
    for (int s = 0; s < t; ++s) history.push_back(static_cast<long>(rng.uniform() * 6));
    const double want = grid_bayes_predictive_mean(prior, history);
    const double got = predictive_mean_conjugate(conjugate_update(prior, history));
    CHECK(got == doctest::Approx(want).epsilon(1e-4));
  }
}

TEST_CASE("deductible table values and geometric closed form") {
  const ModelSpec spec = ConjHurdle{{0.5, 1, 1, 1}};
  EvalConfig cfg;
  cfg.method = Method::Conjugate;
  for (long d = 1; d <= 9; ++d) {
    const double e0 = predictive_expectation(spec, {0}, Deductible{d}, cfg).value;
    const double e1 = predictive_expectation(spec, {1}, Deductible{d}, cfg).value;
    // Closed forms: 0.4 * 2^-d and 0.9 * 3^-d (geometric predictive tails).
    CHECK(e0 == doctest::Approx(0.4 * std::pow(2.0, -d)).epsilon(1e-8));
    CHECK(e1 == doctest::Approx(0.9 * std::pow(3.0, -d)).epsilon(1e-8));
  }
}

TEST_CASE("transform payoffs") {
  CHECK(transform_apply(Identity{}, 7) == 7.0);
  CHECK(transform_apply(Deductible{3}, 7) == 4.0);
  CHECK(transform_apply(Deductible{9}, 7) == 0.0);
  CHECK(transform_apply(Limit{3}, 7) == 3.0);
  CHECK(transform_apply(Limit{3}, 2) == 2.0);
  CHECK(transform_name(Deductible{3}) == "deductible(3)");
  CHECK(transform_apply(transform_from_name("limit(4)"), 9) == 4.0);
}

TEST_CASE("conditional transform means") {
  const ModelSpec gauss = GaussHurdle{{0, 0, 1, 1, 0.5}};
  const double th[] = {0.0, 0.0};
  CHECK(cond_transform_mean(gauss, 1, th, Identity{}) ==
        doctest::Approx(cond_mean(gauss, 1, th)).epsilon(1e-8));
  // (y - 0)^+ = y on the whole grid.
  for (double a : {-1.0, 0.0, 1.0}) {
    const double theta[] = {a, -a};
    CHECK(cond_transform_mean(gauss, 1, theta, Deductible{0}) ==
          doctest::Approx(cond_transform_mean(gauss, 1, theta, Identity{})).epsilon(1e-12));
  }
  // y ^ 1 = 1{y >= 1}: P(Y >= 1) = sigma(0) = 0.5.
  CHECK(cond_transform_mean(gauss, 1, th, Limit{1}) == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("quadrature rules reproduce prior moments") {
  const QuadratureRule gh = gauss_hermite_rule(64);
  double wsum = 0.0, mean = 0.0, var = 0.0;
  for (std::size_t i = 0; i < gh.nodes.size(); ++i) {
    wsum += gh.weights[i];
    mean += gh.weights[i] * gh.nodes[i];
    var += gh.weights[i] * gh.nodes[i] * gh.nodes[i];
  }
  CHECK(wsum == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(mean == doctest::Approx(0.0).epsilon(1e-13));
  CHECK(var == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t i = 0; i < gh.nodes.size() / 2; ++i)
    CHECK(gh.nodes[i] == doctest::Approx(-gh.nodes[gh.nodes.size() - 1 - i]).epsilon(1e-13));

  const QuadratureRule qg = gauss_gamma_rule(48, 2.5, 1.5);
  double gm = 0.0, gv = 0.0;
  for (std::size_t i = 0; i < qg.nodes.size(); ++i) {
    gm += qg.weights[i] * qg.nodes[i];
    gv += qg.weights[i] * qg.nodes[i] * qg.nodes[i];
  }
  CHECK(gm == doctest::Approx(2.5 / 1.5).epsilon(1e-12));
  CHECK(gv - gm * gm == doctest::Approx(2.5 / 2.25).epsilon(1e-10));

  const QuadratureRule qb = gauss_beta_rule(48, 0.5, 1.0);  // a + b = 1.5
  double bm = 0.0;
  for (std::size_t i = 0; i < qb.nodes.size(); ++i) bm += qb.weights[i] * qb.nodes[i];
  CHECK(bm == doctest::Approx(0.5 / 1.5).epsilon(1e-12));
}

TEST_CASE("quadrature predictive matches the published sign pattern row") {
  const ModelSpec spec = GaussHurdle{{0, 0, 0.1, 1, 0.5}};
  EvalConfig cfg;
  const double e0 = predictive_expectation(spec, {0}, Identity{}, cfg).value;
  const double e1 = predictive_expectation(spec, {1}, Identity{}, cfg).value;
  CHECK(std::abs(e0 - 1.3073) <= 3 * 0.0110);
  CHECK(std::abs(e1 - 0.8396) <= 3 * 0.0032);
  CHECK(e0 > e1);
}

TEST_CASE("node doubling leaves expectations unchanged") {
  const ModelSpec specs[] = {GaussHurdle{{0, 0, 5, 1, 0.5}}, GaussHurdle{{0, 2, 1, 1, 0.5}},
                             ModelSpec{ZIPGauss{{0, 0, 1, 3, 0.5}}}};
  for (const auto& spec : specs) {
    for (long y : {0L, 1L}) {
      EvalConfig c64, c128;
      c128.quad_nodes = 128;
      const double a = predictive_expectation(spec, {y}, Identity{}, c64).value;
      const double b = predictive_expectation(spec, {y}, Identity{}, c128).value;
      CHECK(std::abs(a - b) < 1e-6);
    }
  }
}

TEST_CASE("tower consistency of the quadrature predictive") {
  const ModelSpec spec = GaussHurdle{{0, 0, 1, 1, 0.5}};
  const QuadraturePosterior post(spec, {2, 0}, 64);
  const double via_sum =
      post.expect([&](std::span<const double> th) {
        return cond_transform_mean(spec, 3, th, Identity{});
      });
  CHECK(post.predictive_mean() == doctest::Approx(via_sum).epsilon(1e-8));
}

TEST_CASE("transform monotonicity in the level d") {
  const ModelSpec spec = GaussHurdle{{0, 0, 1, 1, 0.5}};
  EvalConfig cfg;
  double prev_ded = std::numeric_limits<double>::infinity();
  double prev_lim = -1.0;
  for (long d = 0; d <= 6; ++d) {
    const double ded = predictive_expectation(spec, {1}, Deductible{d}, cfg).value;
    const double lim = predictive_expectation(spec, {1}, Limit{d}, cfg).value;
    CHECK(ded <= prev_ded + 1e-12);
    CHECK(lim >= prev_lim - 1e-12);
    prev_ded = ded;
    prev_lim = lim;
  }
}

TEST_CASE("beta-gamma quadrature agrees with the exact conjugate") {
  const ModelSpec spec = ConjHurdle{{0.5, 1, 1, 1}};
  EvalConfig quad, conj;
  quad.method = Method::Quadrature;
  quad.quad_nodes = 96;
  conj.method = Method::Conjugate;
  for (long y1 : {0L, 1L, 3L}) {
    CHECK(predictive_expectation(spec, {y1}, Identity{}, quad).value ==
          doctest::Approx(predictive_expectation(spec, {y1}, Identity{}, conj).value)
              .epsilon(1e-7));
    CHECK(predictive_expectation(spec, {y1}, Deductible{3}, quad).value ==
          doctest::Approx(predictive_expectation(spec, {y1}, Deductible{3}, conj).value)
              .epsilon(1e-5));
  }
}

TEST_CASE("unsupported method pairings raise usage errors") {
  EvalConfig conj;
  conj.method = Method::Conjugate;
  CHECK_THROWS_AS(
      predictive_expectation(GaussHurdle{{0, 0, 1, 1, 0.5}}, {0}, Identity{}, conj),
      std::invalid_argument);
}

TEST_CASE("mcmc agrees with quadrature and the conjugate analytics") {
  SUBCASE("gauss hurdle vs quadrature") {
    const ModelSpec spec = GaussHurdle{{0, 0, 1, 1, 0.5}};
    EvalConfig mc;
    mc.method = Method::MCMC;
    mc.mcmc.draws = 600;
    mc.mcmc.burnin = 300;
    mc.mcmc.runs = 24;
    mc.mcmc.seed = 99;
    const Estimate est = predictive_expectation(spec, {0}, Identity{}, mc);
    EvalConfig quad;
    const double want = predictive_expectation(spec, {0}, Identity{}, quad).value;
    CHECK(std::abs(est.value - want) <= 4.0 * est.mcse);
    CHECK(est.mcse > 0.0);
  }
  SUBCASE("conj hurdle posterior means vs analytic") {
    const ModelSpec spec = ConjHurdle{{1, 1, 1, 1}};
    const ClaimHistory history{0, 2};
    const PosteriorState st = conjugate_update(BetaGamma{1, 1, 1, 1}, history);
    const double want1 = st.a_star / (st.a_star + st.b_star);
    const double want2 = st.alpha_star / st.beta_star;
    const int runs = 24;
    MCMCConfig cfg;
    cfg.draws = 600;
    cfg.burnin = 300;
    std::vector<double> m1(runs), m2(runs);
    for (int r = 0; r < runs; ++r) {
      Rng rng = Rng(1717).split(static_cast<std::uint64_t>(r));
      const McmcSamples chain = mcmc_posterior(spec, history, cfg, rng);
      double s1 = 0, s2 = 0;
      for (const auto& th : chain.draws) {
        s1 += th[0];
        s2 += th[1];
      }
      m1[r] = s1 / chain.draws.size();
      m2[r] = s2 / chain.draws.size();
    }
    auto mean_se = [&](const std::vector<double>& v) {
      const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
      double ss = 0;
      for (double x : v) ss += (x - mean) * (x - mean);
      return std::pair{mean, std::sqrt(ss / (v.size() - 1) / v.size())};
    };
    const auto [mean1, se1] = mean_se(m1);
    const auto [mean2, se2] = mean_se(m2);
    CHECK(std::abs(mean1 - want1) <= 4.0 * se1);
    CHECK(std::abs(mean2 - want2) <= 4.0 * se2);
  }
  SUBCASE("fixed seed reproduces the chain") {
    const ModelSpec spec = GaussHurdle{{0, 0, 1, 1, 0.5}};
    MCMCConfig cfg;
    cfg.draws = 100;
    cfg.burnin = 50;
    Rng r1(5), r2(5);
    const McmcSamples a = mcmc_posterior(spec, {1}, cfg, r1);
    const McmcSamples b = mcmc_posterior(spec, {1}, cfg, r2);
    REQUIRE(a.draws.size() == b.draws.size());
    for (std::size_t i = 0; i < a.draws.size(); ++i) {
      CHECK(a.draws[i][0] == b.draws[i][0]);
      CHECK(a.draws[i][1] == b.draws[i][1]);
    }
  }
  SUBCASE("single run reports a batch-means mcse") {
    const ModelSpec spec = GaussHurdle{{0, 0, 1, 1, 0.5}};
    EvalConfig mc;
    mc.method = Method::MCMC;
    mc.mcmc.runs = 1;
    mc.mcmc.draws = 400;
    mc.mcmc.burnin = 200;
    const Estimate est = predictive_expectation(spec, {0}, Identity{}, mc);
    CHECK(est.mcse > 0.0);
    CHECK(std::isfinite(est.value));
  }
}

TEST_CASE("predictive pmf sums to one over its truncated support") {
  const ModelSpec spec = ComonoHurdle{{0.0, 0.7}, LinkFn::Softplus, {0.2}, {-0.1}};
  const QuadraturePosterior post(spec, {0, 2, 1}, 64);
  double total = 0.0;
  for (long y = 0; y <= post.predictive_support_max(); ++y)
    total += std::exp(post.predictive_logpmf(y));
  CHECK(total >= 1.0 - 1e-10);
  CHECK(total <= 1.0 + 1e-12);
}
