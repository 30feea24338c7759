#pragma once

#include "vpbd/density.hpp"
#include "vpbd/geometry.hpp"

namespace vpbd {

struct QuadratureSpec {
  double relative_tolerance = 1e-10;
  double absolute_tolerance = 1e-14;
  unsigned max_depth = 12;
};

struct GreenFieldValue {
  double potential = 0;
  Vec field;
  double error_estimate = 0;
};

// Potential and field of rho through the Dirichlet Green function of the unit disk,
//   G(x, y) = (1/2pi) [ -ln|x - y| + 1/2 ln(|x|^2 |y|^2 - 2 x.y + 1) ],
// integrated in polar coordinates centred at x so the kernel singularity cancels.
// x may lie anywhere in the closed disk. Throws QuadratureFailure.
GreenFieldValue disk_green_field(const DensitySpec& rho, const Vec& x, const QuadratureSpec& spec = {});

// Closed form of the same field for a bump density whose support lies in the disk:
// Gauss law for the radial part plus a single image charge.
class AppendixField {
 public:
  explicit AppendixField(const BumpParams& bump);

  Vec field(const Vec& x) const;
  double potential(const Vec& x) const;
  const BumpParams& bump() const { return bump_; }
  double mass() const { return mass_; }

 private:
  BumpParams bump_;
  double mass_;
};

}  // namespace vpbd
