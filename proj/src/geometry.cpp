#include "vpbd/geometry.hpp"

#include "vpbd/error.hpp"
#include "vpbd/quasirandom.hpp"

#include <boost/math/special_functions/ellint_2.hpp>
#include <fmt/format.h>

#include <cmath>
#include <limits>
#include <numbers>

namespace vpbd {

namespace {

constexpr int kConvexitySamples = 10000;
constexpr int kNewtonSteps = 50;

}  // namespace

ConvexDomain::ConvexDomain(Kind kind, int dimension, double collar_width)
    : kind_(std::move(kind)), dimension_(dimension), collar_width_(collar_width) {
  require(collar_width > 0, "collar width must be positive");
  compute_constants();
}

ConvexDomain ConvexDomain::unit_disk(double collar_width) {
  return ConvexDomain(UnitDisk{}, 2, collar_width);
}

ConvexDomain ConvexDomain::ellipse(double a, double b, double collar_width) {
  require(a > 0 && b > 0, "ellipse semi-axes must be positive");
  return ConvexDomain(Ellipse{a, b}, 2, collar_width);
}

ConvexDomain ConvexDomain::custom(CustomLevelSet level_set, double collar_width) {
  require(level_set.dimension == 2 || level_set.dimension == 3, "dimension must be 2 or 3");
  require(level_set.value && level_set.gradient && level_set.hessian,
          "custom level set needs value, gradient and hessian callbacks");
  require(level_set.box_lo.size() == level_set.dimension &&
              level_set.box_hi.size() == level_set.dimension,
          "custom level set box has the wrong dimension");
  const int d = level_set.dimension;
  return ConvexDomain(std::move(level_set), d, collar_width);
}

std::string ConvexDomain::kind_name() const {
  if (std::holds_alternative<UnitDisk>(kind_)) return "unit_disk";
  if (const auto* e = std::get_if<Ellipse>(&kind_)) return fmt::format("ellipse(a={}, b={})", e->a, e->b);
  return std::get<CustomLevelSet>(kind_).name;
}

LevelSetValue ConvexDomain::level_set(const Vec& x) const {
  if (std::holds_alternative<UnitDisk>(kind_)) {
    return {0.5 * (x.squaredNorm() - 1.0), x, Mat::Identity(2, 2)};
  }
  if (const auto* e = std::get_if<Ellipse>(&kind_)) {
    const double ia = 1.0 / (e->a * e->a);
    const double ib = 1.0 / (e->b * e->b);
    Mat h = Mat::Zero(2, 2);
    h(0, 0) = ia;
    h(1, 1) = ib;
    return {0.5 * (x[0] * x[0] * ia + x[1] * x[1] * ib - 1.0), vec2(x[0] * ia, x[1] * ib), h};
  }
  const auto& c = std::get<CustomLevelSet>(kind_);
  return {c.value(x), c.gradient(x), c.hessian(x)};
}

double ConvexDomain::xi(const Vec& x) const {
  if (std::holds_alternative<UnitDisk>(kind_)) return 0.5 * (x.squaredNorm() - 1.0);
  if (const auto* e = std::get_if<Ellipse>(&kind_)) {
    return 0.5 * (x[0] * x[0] / (e->a * e->a) + x[1] * x[1] / (e->b * e->b) - 1.0);
  }
  return std::get<CustomLevelSet>(kind_).value(x);
}

Vec ConvexDomain::gradient(const Vec& x) const {
  if (std::holds_alternative<UnitDisk>(kind_)) return x;
  if (const auto* e = std::get_if<Ellipse>(&kind_)) {
    return vec2(x[0] / (e->a * e->a), x[1] / (e->b * e->b));
  }
  return std::get<CustomLevelSet>(kind_).gradient(x);
}

Mat ConvexDomain::hessian(const Vec& x) const {
  if (std::holds_alternative<UnitDisk>(kind_) || std::holds_alternative<Ellipse>(kind_)) {
    return level_set(x).hessian;
  }
  return std::get<CustomLevelSet>(kind_).hessian(x);
}

Vec ConvexDomain::outward_normal(const Vec& x) const {
  const double value = xi(x);
  if (std::abs(value) > kBoundaryTolerance) {
    throw Error(ErrorCode::NotOnBoundary, fmt::format("|xi(x)| = {:.3e} exceeds boundary tolerance", std::abs(value)));
  }
  const Vec g = gradient(x);
  return g / g.norm();
}

Vec ConvexDomain::project_to_boundary(const Vec& x) const {
  Vec p = x;
  for (int step = 0; step <= kNewtonSteps; ++step) {
    const double value = xi(p);
    if (std::abs(value) <= kBoundaryTolerance) return p;
    if (step == kNewtonSteps) break;
    const Vec g = gradient(p);
    const double g2 = g.squaredNorm();
    if (!(g2 > 0.0) || !std::isfinite(g2)) {
      throw Error(ErrorCode::NoConvergence, "level-set gradient vanishes during boundary projection");
    }
    p -= (value / g2) * g;
  }
  throw Error(ErrorCode::NoConvergence, fmt::format("boundary projection did not converge in {} steps", kNewtonSteps));
}

double ConvexDomain::distance_to_boundary(const Vec& x) const {
  if (std::holds_alternative<UnitDisk>(kind_)) return std::abs(1.0 - x.norm());
  const double g = gradient(x).norm();
  if (g == 0.0) return std::numeric_limits<double>::infinity();
  return std::abs(xi(x)) / g;
}

bool ConvexDomain::in_collar(const Vec& x) const { return distance_to_boundary(x) < collar_width_; }

Vec ConvexDomain::boundary_point_along(const Vec& direction) const {
  const Vec d = direction / direction.norm();
  if (std::holds_alternative<UnitDisk>(kind_)) return d;
  if (const auto* e = std::get_if<Ellipse>(&kind_)) {
    const double s = 1.0 / std::sqrt(d[0] * d[0] / (e->a * e->a) + d[1] * d[1] / (e->b * e->b));
    return s * d;
  }
  // Bisect xi along the ray from an interior point, then polish with Newton.
  double hi = (box_hi_ - box_lo_).norm();
  double lo = 0.0;
  for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (xi(interior_point_ + mid * d) < 0.0) lo = mid; else hi = mid;
  }
  return project_to_boundary(interior_point_ + lo * d);
}

std::vector<Vec> ConvexDomain::boundary_samples(int count) const {
  require(dimension_ == 2, "boundary samples are only available in 2-D");
  require(count > 0, "boundary sample count must be positive");
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    const double th = 2.0 * std::numbers::pi * k / count;
    out.push_back(boundary_point_along(vec2(std::cos(th), std::sin(th))));
  }
  return out;
}

std::vector<Vec> ConvexDomain::collar_samples(int tangential, int normal) const {
  std::vector<Vec> out;
  for (const Vec& p : boundary_samples(tangential)) {
    const Vec g = gradient(p);
    const Vec n = g / g.norm();
    for (int k = 0; k < normal; ++k) {
      out.push_back(p - collar_width_ * (static_cast<double>(k) / normal) * n);
    }
  }
  return out;
}

void ConvexDomain::compute_constants() {
  constexpr double pi = std::numbers::pi;
  if (std::holds_alternative<UnitDisk>(kind_)) {
    convexity_ = 1.0;
    gradient_floor_ = 1.0 - collar_width_;
    hessian_bound_ = 1.0;
    gradient_bound_ = 1.0;
    third_bound_ = 0.0;
    measure_ = pi;
    boundary_measure_ = 2.0 * pi;
    box_lo_ = vec2(-1, -1);
    box_hi_ = vec2(1, 1);
    interior_point_ = vec2(0, 0);
    return;
  }
  if (const auto* e = std::get_if<Ellipse>(&kind_)) {
    const double ia = 1.0 / (e->a * e->a);
    const double ib = 1.0 / (e->b * e->b);
    convexity_ = std::min(ia, ib);
    hessian_bound_ = std::max(ia, ib);
    gradient_bound_ = std::max(1.0 / e->a, 1.0 / e->b);
    third_bound_ = 0.0;
    measure_ = pi * e->a * e->b;
    const double major = std::max(e->a, e->b);
    const double minor = std::min(e->a, e->b);
    const double ecc = std::sqrt(1.0 - (minor * minor) / (major * major));
    boundary_measure_ = 4.0 * major * boost::math::ellint_2(ecc);
    box_lo_ = vec2(-e->a, -e->b);
    box_hi_ = vec2(e->a, e->b);
    interior_point_ = vec2(0, 0);
    gradient_floor_ = std::numeric_limits<double>::infinity();
    for (const Vec& x : collar_samples(256, 16)) gradient_floor_ = std::min(gradient_floor_, gradient(x).norm());
    return;
  }

  const auto& c = std::get<CustomLevelSet>(kind_);
  box_lo_ = c.box_lo;
  box_hi_ = c.box_hi;
  third_bound_ = c.third_derivative_bound;
  const int d = dimension_;
  const Vec span = box_hi_ - box_lo_;
  double min_eig = std::numeric_limits<double>::infinity();
  double max_eig = 0.0;
  double max_grad = 0.0;
  double best_xi = std::numeric_limits<double>::infinity();
  int inside = 0;
  for (int i = 1; i <= kConvexitySamples; ++i) {
    const auto h = halton_point<3>(static_cast<std::uint64_t>(i));
    Vec x(d);
    for (int k = 0; k < d; ++k) x[k] = box_lo_[k] + h[static_cast<std::size_t>(k)] * span[k];
    const double value = c.value(x);
    if (value > 0.0) continue;
    ++inside;
    if (value < best_xi) {
      best_xi = value;
      interior_point_ = x;
    }
    Eigen::SelfAdjointEigenSolver<Mat> eig(c.hessian(x), Eigen::EigenvaluesOnly);
    min_eig = std::min(min_eig, eig.eigenvalues().minCoeff());
    max_eig = std::max(max_eig, eig.eigenvalues().cwiseAbs().maxCoeff());
    max_grad = std::max(max_grad, c.gradient(x).norm());
  }
  if (inside == 0) throw Error(ErrorCode::NotUniformlyConvex, "no sample point lies inside the custom domain");
  if (!(min_eig > 0.0)) {
    throw Error(ErrorCode::NotUniformlyConvex,
                fmt::format("minimum sampled Hessian eigenvalue {:.6g} is not positive", min_eig));
  }
  convexity_ = min_eig;
  hessian_bound_ = max_eig;
  double box_volume = 1.0;
  for (int k = 0; k < d; ++k) box_volume *= span[k];
  measure_ = box_volume * inside / kConvexitySamples;

  gradient_floor_ = std::numeric_limits<double>::infinity();
  if (d == 2) {
    const auto ring = boundary_samples(1024);
    boundary_measure_ = 0.0;
    for (std::size_t k = 0; k < ring.size(); ++k) {
      boundary_measure_ += (ring[(k + 1) % ring.size()] - ring[k]).norm();
      max_grad = std::max(max_grad, c.gradient(ring[k]).norm());
    }
    for (const Vec& x : collar_samples(256, 16)) gradient_floor_ = std::min(gradient_floor_, c.gradient(x).norm());
  } else {
    // Surface measure is not needed by the 3-D code paths.
    boundary_measure_ = std::numeric_limits<double>::quiet_NaN();
    for (int i = 1; i <= kConvexitySamples; ++i) {
      const auto h = halton_point<3>(static_cast<std::uint64_t>(i));
      Vec x(d);
      for (int k = 0; k < d; ++k) x[k] = box_lo_[k] + h[static_cast<std::size_t>(k)] * span[k];
      if (c.value(x) <= 0.0 && in_collar(x)) gradient_floor_ = std::min(gradient_floor_, c.gradient(x).norm());
    }
  }
  gradient_bound_ = max_grad;
}

}  // namespace vpbd
