#pragma once

#include <array>
#include <vector>

#include "zerocred/dists.hpp"

namespace zerocred {

/// Nodes and probability weights of a Gaussian quadrature rule against a
/// normalized weight function: sum_i w_i f(x_i) approximates E[f(X)] and the
/// weights sum to one.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Rule for X ~ N(0, 1); nodes are symmetric about 0.
QuadratureRule gauss_hermite_rule(int n);

/// Rule for X ~ Gamma(alpha, rate) (generalized Gauss-Laguerre).
QuadratureRule gauss_gamma_rule(int n, double alpha, double rate);

/// Rule for X ~ Beta(a, b) on (0, 1) (Gauss-Jacobi).
QuadratureRule gauss_beta_rule(int n, double a, double b);

/// Tensor grid of prior-law nodes with log prior weights, ready for
/// likelihood reweighting.  1-D laws produce n nodes, 2-D laws n x n.
struct PriorGrid {
  int dim = 1;
  std::vector<std::array<double, 2>> nodes;  // second slot unused when dim == 1
  std::vector<double> logw;
};

PriorGrid make_prior_grid(const REPriorLaw& law, int nodes_per_dim);

double logsumexp(std::span<const double> v);

}  // namespace zerocred
