#include "smcvi/diagnostics.hpp"

namespace smcvi::diag {

DensityGrid evaluate_grid(const GridAxis& x, const GridAxis& y, std::vector<double> fixed,
                          const std::function<double(std::span<const double>, const RngStream&)>& density,
                          const RngStream& rng) {
  if (x.index >= fixed.size() || y.index >= fixed.size() || x.index == y.index) {
    throw std::invalid_argument("grid axes must name two distinct path coordinates");
  }
  DensityGrid g{x, y, fixed, std::vector<double>(x.points * y.points, 0.0)};
  std::vector<double> path = fixed;
  for (std::size_t ix = 0; ix < x.points; ++ix) {
    for (std::size_t iy = 0; iy < y.points; ++iy) {
      path[x.index] = x.at(ix);
      path[y.index] = y.at(iy);
      g.at(ix, iy) = density(path, rng.child(ix * y.points + iy));
    }
  }
  return g;
}

}  // namespace smcvi::diag
