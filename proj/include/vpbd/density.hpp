#pragma once

#include "vpbd/geometry.hpp"
#include "vpbd/polar_grid.hpp"

#include <optional>
#include <string>
#include <vector>

namespace vpbd {

// rho(x) = C exp(-1 / (1 - |x - c|^2 / R^2)) for |x - c| < R, zero otherwise.
double appendix_density(const Vec& x, const Vec& center, double radius, double norm_const);

// Integral of exp(-1/w) over w in (0, 1).
double bump_profile_integral();
// Constant C giving the bump total mass `mass`.
double appendix_normalization(double radius, double mass = 1.0);
// Mass of the bump inside the disk of radius r about its centre.
double bump_enclosed_mass(double r, double radius, double norm_const);

struct BumpParams {
  Vec center;
  double radius;
  double norm_const;
};

class DensitySpec {
 public:
  enum class Kind { AppendixBump, Constant, GridSampled, ParticleDeposited };

  static DensitySpec appendix_bump(const Vec& center, double radius, double mass = 1.0);
  // Constant value on the unit disk; mass = value * pi.
  static DensitySpec constant(double value);
  static DensitySpec zero() { return constant(0.0); }
  // Nodal values on a polar grid; mass is the node-measure sum.
  static DensitySpec grid_sampled(const PolarGrid& grid, std::vector<double> values,
                                  Kind kind = Kind::GridSampled);

  Kind kind() const { return kind_; }
  std::string kind_name() const;
  double mass() const { return mass_; }
  double operator()(const Vec& x) const;
  // Nodal values on the given grid.
  std::vector<double> sample(const PolarGrid& grid) const;

  const BumpParams& bump() const { return *bump_; }
  bool has_bump() const { return bump_.has_value(); }
  double constant_value() const { return constant_; }
  const std::optional<PolarGrid>& grid() const { return grid_; }
  const std::vector<double>& values() const { return values_; }

  // Scaled copy.
  DensitySpec scaled(double factor) const;
  // Support disk (centre, radius) used by quadrature; the whole unit disk unless a bump.
  std::pair<Vec, double> support_disk() const;

 private:
  Kind kind_ = Kind::Constant;
  double mass_ = 0.0;
  double constant_ = 0.0;
  std::optional<BumpParams> bump_;
  std::optional<PolarGrid> grid_;
  std::vector<double> values_;
};

// ||rho||_inf^{4/9} ||rho||_{5/3}^{5/9} with norms taken over the grid nodes.
double field_bound_estimate(const DensitySpec& rho, const PolarGrid& grid);

}  // namespace vpbd
