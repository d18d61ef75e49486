#include "smcvi/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace smcvi {

QuadratureRule gauss_legendre(std::size_t n) {
  if (n == 0) throw std::invalid_argument("quadrature needs at least one node");
  QuadratureRule r;
  r.nodes.resize(n);
  r.weights.resize(n);
  const double dn = static_cast<double>(n);
  for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (dn + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (std::size_t k = 2; k <= n; ++k) {
        const double dk = static_cast<double>(k);
        const double p2 = ((2.0 * dk - 1.0) * x * p1 - (dk - 1.0) * p0) / dk;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      // P_n = p1, P_{n-1} = p0
      dp = dn * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    {
      double p0 = 1.0, p1 = x;
      for (std::size_t k = 2; k <= n; ++k) {
        const double dk = static_cast<double>(k);
        const double p2 = ((2.0 * dk - 1.0) * x * p1 - (dk - 1.0) * p0) / dk;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      dp = dn * (x * p1 - p0) / (x * x - 1.0);
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    r.nodes[i] = -x;
    r.nodes[n - 1 - i] = x;
    r.weights[i] = w;
    r.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) r.nodes[n / 2] = 0.0;
  return r;
}

void log_transformed_rule(const QuadratureRule& reference, double t_min, double t_max, QuadratureRule& out) {
  if (!(t_min > 0.0)) throw std::domain_error("log-transformed quadrature needs t_min > 0");
  if (!(t_max > t_min)) throw std::domain_error("log-transformed quadrature needs t_max > t_min");
  const double a = std::log(t_min), b = std::log(t_max);
  const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
  const std::size_t n = reference.nodes.size();
  out.nodes.resize(n);
  out.weights.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = std::exp(mid + half * reference.nodes[i]);
    out.nodes[i] = t;
    out.weights[i] = half * reference.weights[i] * t;
  }
}

QuadratureRule log_transformed_rule(double t_min, double t_max, std::size_t n) {
  QuadratureRule out;
  log_transformed_rule(gauss_legendre(n), t_min, t_max, out);
  return out;
}

}  // namespace smcvi
