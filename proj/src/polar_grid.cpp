#include "vpbd/polar_grid.hpp"

#include "vpbd/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace vpbd {

PolarGrid::PolarGrid(int nr, int ntheta)
    : nr_(nr), ntheta_(ntheta), dr_(1.0 / nr), dtheta_(2.0 * std::numbers::pi / ntheta) {
  require(nr >= 2, "polar grid needs at least 2 rings");
  require(ntheta >= 4, "polar grid needs at least 4 angular nodes");
  const int n = node_count();
  node_measure_.assign(static_cast<std::size_t>(n), 0.0);
  control_area_.assign(static_cast<std::size_t>(n), 0.0);
  const double h = dr_;
  node_measure_[0] = std::numbers::pi * h * h / 3.0;
  control_area_[0] = std::numbers::pi * 0.25 * h * h;
  for (int i = 1; i <= nr_; ++i) {
    const double ri = radius(i);
    double hat = ri * h * dtheta_;
    double area = ri * h * dtheta_;
    if (i == nr_) {
      hat = h * dtheta_ * (0.5 - h / 6.0);
      const double inner = 1.0 - 0.5 * h;
      area = 0.5 * (1.0 - inner * inner) * dtheta_;
    }
    for (int j = 0; j < ntheta_; ++j) {
      node_measure_[static_cast<std::size_t>(index(i, j))] = hat;
      control_area_[static_cast<std::size_t>(index(i, j))] = area;
    }
  }
}

int PolarGrid::index(int ring, int j) const {
  if (ring == 0) return 0;
  j %= ntheta_;
  if (j < 0) j += ntheta_;
  return 1 + (ring - 1) * ntheta_ + j;
}

Vec PolarGrid::position(int node) const {
  const double r = radius(ring_of(node));
  const double th = theta(angle_of(node));
  return vec2(r * std::cos(th), r * std::sin(th));
}

PolarGrid::Stencil PolarGrid::locate(double x, double y) const {
  Stencil s;
  const double r = std::hypot(x, y);
  double th = std::atan2(y, x);
  if (th < 0) th += 2.0 * std::numbers::pi;
  double a = th / dtheta_;
  int j = static_cast<int>(std::floor(a));
  double fa = a - j;
  if (j >= ntheta_) {
    j -= ntheta_;
  }
  fa = std::clamp(fa, 0.0, 1.0);
  const double q = r / dr_;
  if (q < 1.0) {
    s.count = 3;
    s.nodes = {0, index(1, j), index(1, j + 1), 0};
    s.weights = {1.0 - q, q * (1.0 - fa), q * fa, 0.0};
    return s;
  }
  int i = static_cast<int>(std::floor(q));
  i = std::clamp(i, 1, nr_ - 1);
  const double fr = std::clamp(q - i, 0.0, 1.0);
  s.count = 4;
  s.nodes = {index(i, j), index(i, j + 1), index(i + 1, j), index(i + 1, j + 1)};
  s.weights = {(1 - fr) * (1 - fa), (1 - fr) * fa, fr * (1 - fa), fr * fa};
  return s;
}

double PolarGrid::interpolate(std::span<const double> values, double x, double y) const {
  const Stencil s = locate(x, y);
  double out = 0.0;
  for (int k = 0; k < s.count; ++k) out += s.weights[static_cast<std::size_t>(k)] * values[static_cast<std::size_t>(s.nodes[static_cast<std::size_t>(k)])];
  return out;
}

}  // namespace vpbd
