#include "doctest.h"

#include "oracles.hpp"

#include "vpbd/density.hpp"
#include "vpbd/polar_grid.hpp"

#include <boost/math/quadrature/tanh_sinh.hpp>

#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

using namespace vpbd;

TEST_SUITE("polar_grid") {
  TEST_CASE("node measures and control areas cover the disk") {
    for (auto [nr, nt] : {std::pair{2, 4}, {8, 16}, {32, 64}, {64, 128}}) {
      const PolarGrid g(nr, nt);
      const auto& m = g.node_measure();
      const auto& a = g.control_area();
      CHECK(std::accumulate(m.begin(), m.end(), 0.0) == doctest::Approx(std::numbers::pi).epsilon(1e-13));
      CHECK(std::accumulate(a.begin(), a.end(), 0.0) == doctest::Approx(std::numbers::pi).epsilon(1e-13));
      for (double v : m) CHECK(v > 0.0);
    }
  }

  TEST_CASE("node indexing") {
    const PolarGrid g(4, 8);
    CHECK(g.node_count() == 33);
    CHECK(g.index(0, 5) == 0);
    CHECK(g.index(1, 0) == 1);
    CHECK(g.index(2, 8) == g.index(2, 0));
    CHECK(g.index(2, -1) == g.index(2, 7));
    for (int n = 1; n < g.node_count(); ++n) CHECK(g.index(g.ring_of(n), g.angle_of(n)) == n);
  }

  TEST_CASE("interpolation weights form a partition of unity and hit nodes") {
    const PolarGrid g(16, 32);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int k = 0; k < 1000; ++k) {
      const double x = u(rng), y = u(rng);
      if (x * x + y * y > 1.0) continue;
      const auto s = g.locate(x, y);
      double sum = 0.0;
      for (int i = 0; i < s.count; ++i) {
        CHECK(s.weights[static_cast<std::size_t>(i)] >= -1e-15);
        sum += s.weights[static_cast<std::size_t>(i)];
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
    }
    std::vector<double> values(static_cast<std::size_t>(g.node_count()));
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = std::sin(static_cast<double>(i));
    for (int n = 0; n < g.node_count(); ++n) {
      const Vec p = g.position(n);
      CHECK(g.interpolate(values, p[0], p[1]) == doctest::Approx(values[static_cast<std::size_t>(n)]).epsilon(1e-12));
    }
  }
}

TEST_SUITE("density") {
  TEST_CASE("bump point values") {
    const auto rho = DensitySpec::appendix_bump(vec2(0.5, 0.0), 0.5);
    const double c = rho.bump().norm_const;
    CHECK(rho(vec2(0.5, 0.6)) == 0.0);
    CHECK(rho(vec2(1.1, 0.0)) == 0.0);
    CHECK(rho(vec2(0.5, 0.0)) == doctest::Approx(c * std::exp(-1.0)).epsilon(1e-15));
  }

  TEST_CASE("bump normalisation agrees with a two-dimensional quadrature") {
    for (double radius : {0.5, 0.3}) {
      const auto rho = DensitySpec::appendix_bump(vec2(0.0, 0.0), radius);
      // Cartesian nested quadrature over the support square, independent of the radial formula.
      boost::math::quadrature::tanh_sinh<double> ts;
      const double total = ts.integrate(
          [&](double x) {
            const double half = std::sqrt(std::max(0.0, radius * radius - x * x));
            if (half == 0.0) return 0.0;
            return ts.integrate([&](double y) { return rho(vec2(x, y)); }, -half, half, 1e-13);
          },
          -radius, radius, 1e-12);
      CHECK(total == doctest::Approx(1.0).epsilon(1e-10));
      CHECK(rho.bump().norm_const == doctest::Approx(oracle::bump_constant(radius)).epsilon(1e-12));
    }
  }

  TEST_CASE("enclosed mass matches the radial oracle") {
    const double c = oracle::bump_constant(0.5);
    for (double r : {0.05, 0.1, 0.25, 0.4, 0.49, 0.5, 0.8}) {
      CHECK(bump_enclosed_mass(r, 0.5, c) == doctest::Approx(c * oracle::radial_shape_mass(r, 0.5)).epsilon(1e-12));
    }
  }

  TEST_CASE("field bound estimate") {
    const PolarGrid g(32, 64);
    CHECK(field_bound_estimate(DensitySpec::zero(), g) == 0.0);
    CHECK(field_bound_estimate(DensitySpec::constant(1.0), g) == doctest::Approx(std::cbrt(std::numbers::pi)).epsilon(1e-12));
    const double b = field_bound_estimate(DensitySpec::appendix_bump(vec2(0.5, 0.0), 0.5), g);
    CHECK(std::isfinite(b));
    CHECK(b > 0.0);
  }

  TEST_CASE("grid densities") {
    const PolarGrid g(8, 16);
    std::vector<double> v(static_cast<std::size_t>(g.node_count()), 2.0);
    const auto d = DensitySpec::grid_sampled(g, v);
    CHECK(d.mass() == doctest::Approx(2.0 * std::numbers::pi).epsilon(1e-13));
    CHECK(d(vec2(0.3, 0.2)) == doctest::Approx(2.0));
    CHECK(DensitySpec::constant(3.0).mass() == doctest::Approx(3.0 * std::numbers::pi));
  }
}
