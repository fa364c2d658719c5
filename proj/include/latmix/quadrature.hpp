#pragma once

#include <vector>

namespace latmix {

enum class QuadratureKind { GaussHermite, GaussLegendre };

struct QuadratureRule {
  QuadratureKind kind;
  std::vector<double> nodes;    // strictly increasing
  std::vector<double> weights;  // positive

  int size() const { return static_cast<int>(nodes.size()); }
};

/// Gauss-Hermite rule for expectations under N(0, 1): sum w_i f(x_i) ~ E f(X).
/// Exact for polynomials up to degree 2n-1. Requires 1 <= n <= 100.
QuadratureRule gauss_hermite(int n);

/// Gauss-Legendre rule on [a, b]. Requires a < b and n >= 1.
QuadratureRule gauss_legendre(int n, double a, double b);

}  // namespace latmix
