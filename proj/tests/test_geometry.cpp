#include "doctest.h"

#include "vpbd/error.hpp"
#include "vpbd/geometry.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <numbers>
#include <random>

using namespace vpbd;

namespace {

template <class Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidArgument;
}

// Ellipse x^2/a^2 + y^2/b^2 = 1 rotated by phi, as a custom level set.
CustomLevelSet rotated_ellipse(double a, double b, double phi) {
  const double c = std::cos(phi), s = std::sin(phi);
  Mat h(2, 2);
  h << c * c / (a * a) + s * s / (b * b), c * s * (1 / (a * a) - 1 / (b * b)),
      c * s * (1 / (a * a) - 1 / (b * b)), s * s / (a * a) + c * c / (b * b);
  CustomLevelSet ls;
  ls.value = [h](const Vec& x) { return 0.5 * (x.dot(h * x) - 1.0); };
  ls.gradient = [h](const Vec& x) -> Vec { return h * x; };
  ls.hessian = [h](const Vec&) -> Mat { return h; };
  const double r = std::max(a, b) * 1.05;
  ls.box_lo = vec2(-r, -r);
  ls.box_hi = vec2(r, r);
  ls.name = "rotated_ellipse";
  return ls;
}

}  // namespace

TEST_SUITE("geometry") {
  TEST_CASE("unit disk level set values") {
    const auto disk = ConvexDomain::unit_disk();
    const auto ls = disk.level_set(vec2(0.5, 0.0));
    CHECK(ls.xi == doctest::Approx(-0.375).epsilon(1e-15));
    CHECK(ls.gradient[0] == 0.5);
    CHECK(ls.gradient[1] == 0.0);
    CHECK(ls.hessian.isApprox(Mat::Identity(2, 2)));
    CHECK(disk.xi(vec2(1.0, 0.0)) == 0.0);
  }

  TEST_CASE("ellipse level set values") {
    const auto e = ConvexDomain::ellipse(2.0, 1.0);
    const auto ls = e.level_set(vec2(2.0, 0.0));
    CHECK(ls.xi == 0.0);
    CHECK(ls.gradient[0] == doctest::Approx(0.5));
    CHECK(ls.gradient[1] == 0.0);
  }

  TEST_CASE("outward normals") {
    const auto disk = ConvexDomain::unit_disk();
    CHECK((disk.outward_normal(vec2(0, 1)) - vec2(0, 1)).norm() < 1e-15);
    CHECK((disk.outward_normal(vec2(-1, 0)) - vec2(-1, 0)).norm() < 1e-15);
    const auto e = ConvexDomain::ellipse(2.0, 1.0);
    CHECK((e.outward_normal(vec2(0, 1)) - vec2(0, 1)).norm() < 1e-15);
    CHECK(code_of([&] { disk.outward_normal(vec2(0.5, 0)); }) == ErrorCode::NotOnBoundary);
  }

  TEST_CASE("convexity constants") {
    CHECK(ConvexDomain::unit_disk().convexity_constant() == 1.0);
    CHECK(ConvexDomain::ellipse(2.0, 1.0).convexity_constant() == doctest::Approx(0.25).epsilon(1e-15));
    CustomLevelSet saddle;
    saddle.value = [](const Vec& x) { return 0.5 * (x[0] * x[0] - x[1] * x[1]) - 0.1; };
    saddle.gradient = [](const Vec& x) -> Vec { return vec2(x[0], -x[1]); };
    saddle.hessian = [](const Vec&) -> Mat {
      Mat h(2, 2);
      h << 1, 0, 0, -1;
      return h;
    };
    saddle.box_lo = vec2(-1, -1);
    saddle.box_hi = vec2(1, 1);
    CHECK(code_of([&] { ConvexDomain::custom(saddle); }) == ErrorCode::NotUniformlyConvex);
  }

  TEST_CASE("convexity constant is rotation invariant") {
    const double base = ConvexDomain::custom(rotated_ellipse(2.0, 1.0, 0.0)).convexity_constant();
    CHECK(base == doctest::Approx(0.25).epsilon(1e-12));
    for (double phi : {0.3, 1.1, 2.5}) {
      CHECK(std::abs(ConvexDomain::custom(rotated_ellipse(2.0, 1.0, phi)).convexity_constant() - base) < 1e-8);
    }
  }

  TEST_CASE("projection to the boundary") {
    const auto disk = ConvexDomain::unit_disk();
    CHECK((disk.project_to_boundary(vec2(0.5, 0)) - vec2(1, 0)).norm() < 1e-14);
    CHECK((disk.project_to_boundary(vec2(0, -0.99)) - vec2(0, -1)).norm() < 1e-14);
    CHECK((disk.project_to_boundary(vec2(0.6, 0.8)) - vec2(0.6, 0.8)).norm() < 1e-14);
    const auto e = ConvexDomain::ellipse(2.0, 1.0);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-0.9, 0.9);
    for (int k = 0; k < 200; ++k) {
      const Vec x = vec2(2 * u(rng), u(rng));
      if (e.xi(x) >= 0.0) continue;
      const Vec p = e.project_to_boundary(x);
      CHECK(std::abs(e.xi(p)) <= kBoundaryTolerance);
      CHECK((e.project_to_boundary(p) - p).norm() < kBoundaryTolerance);
    }
  }

  TEST_CASE("sampled invariants on the ellipse") {
    const auto e = ConvexDomain::ellipse(2.0, 1.0);
    for (const Vec& p : e.boundary_samples(128)) {
      CHECK(std::abs(e.xi(p)) <= kBoundaryTolerance);
      const Vec n = e.outward_normal(p);
      CHECK(std::abs(n.norm() - 1.0) < 1e-14);
      CHECK(std::abs(n.dot(e.gradient(p)) - e.gradient(p).norm()) < 1e-12);
    }
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int k = 0; k < 500; ++k) {
      const Vec x = vec2(2 * u(rng), u(rng));
      if (e.xi(x) > 0) continue;
      const double th = 3.14159 * u(rng);
      const Vec v = vec2(std::cos(th), std::sin(th));
      const Mat h = e.hessian(x);
      CHECK((h - h.transpose()).norm() == 0.0);
      CHECK(v.dot(h * v) >= e.convexity_constant() - 1e-15);
    }
    for (const Vec& x : e.collar_samples(64, 8)) {
      CHECK(e.xi(x) <= kBoundaryTolerance);
      CHECK(e.gradient(x).norm() >= e.gradient_floor() - 1e-15);
    }
  }

  TEST_CASE("ellipse perimeter matches direct quadrature") {
    const auto e = ConvexDomain::ellipse(2.0, 1.0);
    const double ref = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        [](double t) { return std::hypot(2.0 * std::sin(t), std::cos(t)); }, 0.0, 2.0 * std::numbers::pi, 15, 1e-14);
    CHECK(e.boundary_measure() == doctest::Approx(ref).epsilon(1e-12));
    CHECK(e.measure() == doctest::Approx(2.0 * std::numbers::pi).epsilon(1e-15));
  }

  TEST_CASE("disk constants") {
    const auto disk = ConvexDomain::unit_disk();
    CHECK(disk.gradient_floor() == doctest::Approx(1.0 - disk.collar_width()));
    CHECK(disk.hessian_bound() == 1.0);
    CHECK(disk.third_derivative_bound() == 0.0);
    CHECK(disk.in_collar(vec2(0.95, 0.0)));
    CHECK_FALSE(disk.in_collar(vec2(0.5, 0.0)));
  }
}
