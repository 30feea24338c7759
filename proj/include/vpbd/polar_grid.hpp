#pragma once

#include "vpbd/geometry.hpp"

#include <array>
#include <span>
#include <vector>

namespace vpbd {

// Node-centred polar grid on the closed unit disk. Node 0 is the pole; ring i
// (1..nr) sits at radius i/nr with ntheta equally spaced angular nodes, ring nr
// being the boundary circle.
class PolarGrid {
 public:
  PolarGrid(int nr, int ntheta);

  int nr() const { return nr_; }
  int ntheta() const { return ntheta_; }
  int node_count() const { return 1 + nr_ * ntheta_; }
  double dr() const { return dr_; }
  double dtheta() const { return dtheta_; }

  int index(int ring, int j) const;
  int ring_of(int node) const { return node == 0 ? 0 : 1 + (node - 1) / ntheta_; }
  int angle_of(int node) const { return node == 0 ? 0 : (node - 1) % ntheta_; }
  double radius(int ring) const { return ring * dr_; }
  double theta(int j) const { return j * dtheta_; }
  Vec position(int node) const;

  // Volume of the bilinear hat attached to each node; sums to pi.
  const std::vector<double>& node_measure() const { return node_measure_; }
  // Finite-volume control areas; sums to pi.
  const std::vector<double>& control_area() const { return control_area_; }

  struct Stencil {
    std::array<int, 4> nodes{};
    std::array<double, 4> weights{};
    int count = 0;
  };
  // Bilinear (r, theta) interpolation weights; linear between the pole and ring 1.
  Stencil locate(double x, double y) const;
  double interpolate(std::span<const double> values, double x, double y) const;

  bool operator==(const PolarGrid& o) const { return nr_ == o.nr_ && ntheta_ == o.ntheta_; }

 private:
  int nr_;
  int ntheta_;
  double dr_;
  double dtheta_;
  std::vector<double> node_measure_;
  std::vector<double> control_area_;
};

}  // namespace vpbd
