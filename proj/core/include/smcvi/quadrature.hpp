#pragma once

#include <cstddef>
#include <vector>

namespace smcvi {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// n-point Gauss–Legendre rule on [-1, 1]. Nodes come from Newton iteration
/// on P_n started at Chebyshev-like guesses.
QuadratureRule gauss_legendre(std::size_t n);

/// Gauss–Legendre on [log t_min, log t_max] mapped back through exp:
/// nodes e^{u_i}, weights w_i e^{u_i}. Integrates f(t) dt over [t_min, t_max].
/// Throws std::domain_error unless 0 < t_min < t_max.
QuadratureRule log_transformed_rule(double t_min, double t_max, std::size_t n);

/// Same map applied to a cached reference rule (no allocation of a new
/// Legendre solve).
void log_transformed_rule(const QuadratureRule& reference, double t_min, double t_max, QuadratureRule& out);

}  // namespace smcvi
