#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <variant>
#include <vector>

namespace vpbd {

// Small fixed-capacity vectors; d is 2 or 3.
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, 3, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, 3, 3>;

inline Vec vec2(double x, double y) {
  Vec v(2);
  v << x, y;
  return v;
}

inline constexpr double kBoundaryTolerance = 1e-12;
inline constexpr double kDefaultCollarWidth = 0.1;

struct LevelSetValue {
  double xi;
  Vec gradient;
  Mat hessian;
};

struct UnitDisk {};

struct Ellipse {
  double a;
  double b;
};

// User-supplied level set. The box must contain the closure of the domain.
struct CustomLevelSet {
  int dimension = 2;
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> gradient;
  std::function<Mat(const Vec&)> hessian;
  Vec box_lo;
  Vec box_hi;
  double third_derivative_bound = 0.0;
  std::string name = "custom";
};

// Omega = { x : xi(x) < 0 }, uniformly convex.
class ConvexDomain {
 public:
  static ConvexDomain unit_disk(double collar_width = kDefaultCollarWidth);
  static ConvexDomain ellipse(double a, double b, double collar_width = kDefaultCollarWidth);
  // Throws NotUniformlyConvex if the sampled Hessian is not positive definite.
  static ConvexDomain custom(CustomLevelSet level_set, double collar_width = kDefaultCollarWidth);

  int dimension() const { return dimension_; }
  std::string kind_name() const;
  bool is_unit_disk() const { return std::holds_alternative<UnitDisk>(kind_); }

  LevelSetValue level_set(const Vec& x) const;
  double xi(const Vec& x) const;
  Vec gradient(const Vec& x) const;
  Mat hessian(const Vec& x) const;

  // Throws NotOnBoundary unless |xi(x)| <= kBoundaryTolerance.
  Vec outward_normal(const Vec& x) const;
  // Newton iteration on xi along its gradient; throws NoConvergence.
  Vec project_to_boundary(const Vec& x) const;

  double convexity_constant() const { return convexity_; }
  double gradient_floor() const { return gradient_floor_; }
  double collar_width() const { return collar_width_; }
  // Bounds over the closure used by the kinetic-distance constants.
  double hessian_bound() const { return hessian_bound_; }
  double gradient_bound() const { return gradient_bound_; }
  double third_derivative_bound() const { return third_bound_; }
  double measure() const { return measure_; }
  double boundary_measure() const { return boundary_measure_; }

  // Distance to the boundary; exact for the disk, first order |xi|/|grad xi| otherwise.
  double distance_to_boundary(const Vec& x) const;
  bool in_collar(const Vec& x) const;

  // Boundary points ordered by angle (2-D only).
  std::vector<Vec> boundary_samples(int count) const;
  // Points at normal depths in [0, collar_width) below each boundary sample.
  std::vector<Vec> collar_samples(int tangential, int normal) const;

  const Vec& box_lo() const { return box_lo_; }
  const Vec& box_hi() const { return box_hi_; }

 private:
  using Kind = std::variant<UnitDisk, Ellipse, CustomLevelSet>;
  ConvexDomain(Kind kind, int dimension, double collar_width);
  void compute_constants();
  Vec boundary_point_along(const Vec& direction) const;

  Kind kind_;
  int dimension_;
  double collar_width_;
  double convexity_ = 0;
  double gradient_floor_ = 0;
  double hessian_bound_ = 0;
  double gradient_bound_ = 0;
  double third_bound_ = 0;
  double measure_ = 0;
  double boundary_measure_ = 0;
  Vec box_lo_;
  Vec box_hi_;
  Vec interior_point_;
};

}  // namespace vpbd
