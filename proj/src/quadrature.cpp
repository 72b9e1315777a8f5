#include "zerocred/quadrature.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace zerocred {

namespace {

/// Golub-Welsch: nodes are eigenvalues of the symmetric tridiagonal Jacobi
/// matrix built from the three-term recurrence; weights are the squared
/// first components of the normalized eigenvectors (weight function already
/// normalized to total mass one).
QuadratureRule golub_welsch(const Eigen::VectorXd& diag, const Eigen::VectorXd& offdiag) {
  const int n = static_cast<int>(diag.size());
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    jacobi(i, i) = diag(i);
    if (i + 1 < n) {
      jacobi(i, i + 1) = offdiag(i);
      jacobi(i + 1, i) = offdiag(i);
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("quadrature: eigen decomposition failed");
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    rule.nodes[i] = solver.eigenvalues()(i);
    const double v = solver.eigenvectors()(0, i);
    rule.weights[i] = v * v;
    total += rule.weights[i];
  }
  for (double& w : rule.weights) w /= total;
  return rule;
}

void check_order(int n) {
  if (n < 1 || n > 1024) throw std::invalid_argument("quadrature order must be in [1, 1024]");
}

}  // namespace

QuadratureRule gauss_hermite_rule(int n) {
  check_order(n);
  // Orthonormal recurrence for the standard normal weight: a_k = 0, b_k = sqrt(k).
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd off(n > 1 ? n - 1 : 0);
  for (int k = 1; k < n; ++k) off(k - 1) = std::sqrt(static_cast<double>(k));
  QuadratureRule rule = golub_welsch(diag, off);
  // Symmetrize: pair up mirrored nodes so the grid is exactly symmetric.
  for (int i = 0, j = n - 1; i < j; ++i, --j) {
    const double m = 0.5 * (rule.nodes[j] - rule.nodes[i]);
    rule.nodes[i] = -m;
    rule.nodes[j] = m;
    const double w = 0.5 * (rule.weights[i] + rule.weights[j]);
    rule.weights[i] = w;
    rule.weights[j] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

QuadratureRule gauss_gamma_rule(int n, double alpha, double rate) {
  check_order(n);
  if (!(alpha > 0.0) || !(rate > 0.0))
    throw std::domain_error("gauss_gamma_rule: alpha and rate must be positive");
  // Generalized Laguerre, weight x^(alpha-1) e^-x on (0, inf).
  const double g = alpha - 1.0;
  Eigen::VectorXd diag(n);
  Eigen::VectorXd off(n > 1 ? n - 1 : 0);
  for (int k = 0; k < n; ++k) diag(k) = 2.0 * k + g + 1.0;
  for (int k = 1; k < n; ++k) off(k - 1) = std::sqrt(k * (k + g));
  QuadratureRule rule = golub_welsch(diag, off);
  for (double& x : rule.nodes) x /= rate;
  return rule;
}

QuadratureRule gauss_beta_rule(int n, double a, double b) {
  check_order(n);
  if (!(a > 0.0) || !(b > 0.0))
    throw std::domain_error("gauss_beta_rule: a and b must be positive");
  // Jacobi weight (1-x)^A (1+x)^B on (-1, 1) with A = b-1, B = a-1, then map
  // to (0, 1).  Monic recurrence per Gautschi; the k = 1 coefficient is
  // written with the (1+A+B) factor cancelled so a+b = 1 stays finite.
  const double A = b - 1.0, B = a - 1.0;
  const double s = A + B;
  Eigen::VectorXd diag(n);
  Eigen::VectorXd off(n > 1 ? n - 1 : 0);
  diag(0) = (B - A) / (s + 2.0);
  for (int k = 1; k < n; ++k) {
    const double den = (2.0 * k + s) * (2.0 * k + s + 2.0);
    diag(k) = (B * B - A * A) / den;
  }
  if (n > 1) {
    const double b1 = 4.0 * (1.0 + A) * (1.0 + B) / ((2.0 + s) * (2.0 + s) * (3.0 + s));
    off(0) = std::sqrt(b1);
  }
  for (int k = 2; k < n; ++k) {
    const double t = 2.0 * k + s;
    const double bk = 4.0 * k * (k + A) * (k + B) * (k + s) / (t * t * (t + 1.0) * (t - 1.0));
    off(k - 1) = std::sqrt(bk);
  }
  QuadratureRule rule = golub_welsch(diag, off);
  for (double& x : rule.nodes) x = 0.5 * (1.0 + x);
  return rule;
}

PriorGrid make_prior_grid(const REPriorLaw& law, int nodes_per_dim) {
  validate(law);
  PriorGrid grid;
  grid.dim = prior_dim(law);
  std::visit(
      [&](const auto& l) {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, BivariateNormal>) {
          const QuadratureRule gh = gauss_hermite_rule(nodes_per_dim);
          const double s1 = std::sqrt(l.s1sq), s2 = std::sqrt(l.s2sq);
          const double c = std::sqrt(1.0 - l.rho * l.rho);
          grid.nodes.reserve(gh.nodes.size() * gh.nodes.size());
          grid.logw.reserve(gh.nodes.size() * gh.nodes.size());
          for (std::size_t i = 0; i < gh.nodes.size(); ++i) {
            for (std::size_t j = 0; j < gh.nodes.size(); ++j) {
              const double z1 = gh.nodes[i], z2 = gh.nodes[j];
              grid.nodes.push_back({l.mu1 + s1 * z1, l.mu2 + s2 * (l.rho * z1 + c * z2)});
              grid.logw.push_back(std::log(gh.weights[i]) + std::log(gh.weights[j]));
            }
          }
        } else if constexpr (std::is_same_v<T, BetaGamma>) {
          const QuadratureRule qb = gauss_beta_rule(nodes_per_dim, l.a, l.b);
          const QuadratureRule qg = gauss_gamma_rule(nodes_per_dim, l.alpha, l.beta);
          grid.nodes.reserve(qb.nodes.size() * qg.nodes.size());
          grid.logw.reserve(qb.nodes.size() * qg.nodes.size());
          for (std::size_t i = 0; i < qb.nodes.size(); ++i) {
            for (std::size_t j = 0; j < qg.nodes.size(); ++j) {
              grid.nodes.push_back({qb.nodes[i], qg.nodes[j]});
              grid.logw.push_back(std::log(qb.weights[i]) + std::log(qg.weights[j]));
            }
          }
        } else {
          const QuadratureRule gh = gauss_hermite_rule(nodes_per_dim);
          const double s = std::sqrt(l.var);
          grid.nodes.reserve(gh.nodes.size());
          grid.logw.reserve(gh.nodes.size());
          for (std::size_t i = 0; i < gh.nodes.size(); ++i) {
            grid.nodes.push_back({l.mean + s * gh.nodes[i], 0.0});
            grid.logw.push_back(std::log(gh.weights[i]));
          }
        }
      },
      law);
  return grid;
}

double logsumexp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace zerocred
