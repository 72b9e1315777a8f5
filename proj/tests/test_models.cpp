#include <doctest.h>

#include <cmath>
#include <sstream>

#include "zerocred/models.hpp"
#include "zerocred/posterior.hpp"

using namespace zerocred;

namespace {

const ModelSpec kGauss = GaussHurdle{{0, 0, 1, 1, 0.5}};
const ModelSpec kConj = ConjHurdle{{1, 1, 1, 1}};
const ModelSpec kComono = ComonoHurdle{{0.0, 1.0}, LinkFn::Softplus, {0.0}, {0.0}};
const ModelSpec kNb = NBHurdle{{0.0, 1.0}, 2.0, {0.0}, {0.0}};
const ModelSpec kZip = ZIPComono{{0.0, 1.0}, LinkFn::Softplus, {0.0}, {0.0}};

}  // namespace

TEST_CASE("conditional pmf closed forms") {
  const double th[] = {0.0, 0.0};
  CHECK(cond_pmf(kGauss, 1, th, 0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(cond_pmf(kGauss, 1, th, 1) == doctest::Approx(0.5 * std::exp(-1.0)).epsilon(1e-14));

  const double z[] = {0.0};
  // sigma(0) e^{-ln 2} (ln 2)^1 / 1!
  CHECK(cond_pmf(kComono, 1, z, 2) == doctest::Approx(0.25 * std::log(2.0)).epsilon(1e-13));
}

TEST_CASE("conditional mean closed forms") {
  const double th[] = {0.0, 0.0};
  CHECK(cond_mean(kGauss, 1, th) == doctest::Approx(1.0).epsilon(1e-14));
  const double tc[] = {0.2, 3.0};
  CHECK(cond_mean(kConj, 1, tc) == doctest::Approx(0.8).epsilon(1e-14));
  const double z[] = {0.0};
  CHECK(cond_mean(kZip, 1, z) == doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("conditional law sums to one and matches its mean") {
  const ModelSpec specs[] = {kGauss, kConj, kComono, kNb, kZip};
  const double grid[] = {-1.5, 0.0, 0.8};
  for (const auto& spec : specs) {
    const int dim = prior_dim(model_law(spec));
    for (double a : grid) {
      for (double b : grid) {
        double theta[2] = {a, b};
        if (std::holds_alternative<ConjHurdle>(spec)) {
          theta[0] = logistic(a);  // map into the Beta/Gamma support
          theta[1] = std::exp(b);
        }
        const std::span<const double> th{theta, static_cast<std::size_t>(dim)};
        const long ymax = cond_support_max(spec, 1, th);
        double total = 0.0, mean = 0.0;
        for (long y = 0; y <= ymax; ++y) {
          const double p = cond_pmf(spec, 1, th, y);
          total += p;
          mean += static_cast<double>(y) * p;
        }
        CHECK(total >= 1.0 - 1e-10);
        CHECK(total <= 1.0 + 1e-12);
        CHECK(mean == doctest::Approx(cond_mean(spec, 1, th)).epsilon(1e-8));
        if (dim == 1) break;
      }
    }
  }
}

TEST_CASE("hurdle composition partitions mass at zero") {
  const double th[] = {0.7, 1.3};
  const double p = logistic(0.7);
  CHECK(cond_pmf(kGauss, 1, th, 0) == doctest::Approx(1.0 - p).epsilon(1e-12));
  double positive = 0.0;
  for (long y = 1; y <= cond_support_max(kGauss, 1, th); ++y)
    positive += cond_pmf(kGauss, 1, th, y);
  CHECK(positive == doctest::Approx(p).epsilon(1e-9));
}

TEST_CASE("exogenous sequences extend as constant") {
  const ModelSpec spec = ComonoHurdle{{0.0, 1.0}, LinkFn::Softplus, {0.5, -0.5}, {0.0}};
  const double th[] = {0.0};
  CHECK(binary_prob(spec, 1, th) == doctest::Approx(logistic(0.5)));
  CHECK(binary_prob(spec, 2, th) == doctest::Approx(logistic(-0.5)));
  CHECK(binary_prob(spec, 9, th) == doctest::Approx(logistic(-0.5)));

  const ModelSpec empty = ComonoHurdle{{0.0, 1.0}, LinkFn::Softplus, {}, {0.0}};
  CHECK_THROWS_AS(binary_prob(empty, 1, th), std::invalid_argument);
  CHECK_THROWS_AS(cond_pmf(kComono, 0, th, 0), std::invalid_argument);
}

TEST_CASE("sufficient statistics") {
  SufficientStats s = sufficient_stats({0, 2, 0, 3});
  CHECK(s.r_t == 2);
  CHECK(s.m_t == 3);
  s = sufficient_stats({});
  CHECK(s.r_t == 0);
  CHECK(s.m_t == 0);
  s = sufficient_stats({1, 1, 1});
  CHECK(s.r_t == 3);
  CHECK(s.m_t == 0);
  CHECK_THROWS_AS(sufficient_stats({1, -1}), std::domain_error);
}

TEST_CASE("simulated first-period mean matches quadrature") {
  const int n = 100000;
  SUBCASE("gauss hurdle") {
    Rng rng(111);
    double s = 0.0, ss = 0.0;
    for (int i = 0; i < n; ++i) {
      Rng path_rng = rng.split(static_cast<std::uint64_t>(i));
      const long y = simulate_path(kGauss, 1, path_rng)[0];
      s += static_cast<double>(y);
      ss += static_cast<double>(y) * static_cast<double>(y);
    }
    const double mean = s / n;
    const double se = std::sqrt((ss / n - mean * mean) / n);
    // Quadrature oracle for E[Y_1] = E[sigma(T1) (1 + e^{T2})].
    const PriorGrid grid = make_prior_grid(BivariateNormal{0, 0, 1, 1, 0.5}, 64);
    double want = 0.0;
    for (std::size_t i = 0; i < grid.nodes.size(); ++i)
      want += std::exp(grid.logw[i]) * logistic(grid.nodes[i][0]) *
              (1.0 + std::exp(grid.nodes[i][1]));
    CHECK(std::abs(mean - want) < 4.0 * se);
  }
  SUBCASE("conj hurdle zero probability") {
    Rng rng(112);
    long zeros = 0;
    for (int i = 0; i < n; ++i) {
      Rng path_rng = rng.split(static_cast<std::uint64_t>(i));
      zeros += simulate_path(kConj, 1, path_rng)[0] == 0 ? 1 : 0;
    }
    const double phat = static_cast<double>(zeros) / n;
    CHECK(std::abs(phat - 0.5) < 4.0 * std::sqrt(0.25 / n));
  }
}

TEST_CASE("fixed seed reproduces identical paths") {
  Rng r1(202), r2(202);
  const ClaimHistory a = simulate_path(kNb, 12, r1);
  const ClaimHistory b = simulate_path(kNb, 12, r2);
  CHECK(a == b);
  Rng r3(203);
  CHECK(simulate_path(kNb, 12, r3) != a);
}

TEST_CASE("zero-inflated composition produces zeros from both stages") {
  // P(Y=0) = (1-p) + p e^{-lam} for the ZIP at theta = 0.
  const double z[] = {0.0};
  const double p = 0.5, lam = std::log(2.0);
  CHECK(cond_pmf(kZip, 1, z, 0) ==
        doctest::Approx((1 - p) + p * std::exp(-lam)).epsilon(1e-13));
  CHECK(cond_pmf(kZip, 1, z, 1) ==
        doctest::Approx(p * std::exp(-lam) * lam).epsilon(1e-13));
}

TEST_CASE("nb hurdle count stage uses the shape-scaled logistic") {
  const double z[] = {1.0};
  const auto& nb = std::get<NBHurdle>(kNb);
  const CountDist count = count_component(kNb, 1, z);
  const auto& dist = std::get<NegBin>(count);
  CHECK(dist.r == nb.r);
  CHECK(dist.p == doctest::Approx(logistic(0.0 + 1.0 / nb.r)).epsilon(1e-14));
}
