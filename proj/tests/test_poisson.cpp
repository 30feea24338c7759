#include "doctest.h"

#include "oracles.hpp"

#include "vpbd/error.hpp"
#include "vpbd/poisson.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <numbers>
#include <random>

using namespace vpbd;

namespace {

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::vector<double> random_nodal(const PolarGrid& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  std::vector<double> out(static_cast<std::size_t>(g.node_count()));
  for (auto& x : out) x = u(rng);
  return out;
}

// U(r) = int_r^1 M(s) / (2 pi s) ds for the centred bump.
double radial_potential(double r, double radius, double c) {
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      [&](double s) { return oracle::gauss_field(s, radius, c); }, r, 1.0, 10, 1e-13);
}

}  // namespace

TEST_SUITE("poisson") {
  TEST_CASE("linear solve is linear in the density") {
    const PolarGrid g(16, 32);
    const auto a = random_nodal(g, 1), b = random_nodal(g, 2);
    std::vector<double> sum(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) sum[i] = 2.0 * a[i] + 0.5 * b[i];
    const auto ua = grid_poisson_solve(DensitySpec::grid_sampled(g, a), BoundaryCondition::dirichlet(), g);
    const auto ub = grid_poisson_solve(DensitySpec::grid_sampled(g, b), BoundaryCondition::dirichlet(), g);
    const auto us = grid_poisson_solve(DensitySpec::grid_sampled(g, sum), BoundaryCondition::dirichlet(), g);
    std::vector<double> combo(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) combo[i] = 2.0 * ua.potential[i] + 0.5 * ub.potential[i];
    CHECK(max_abs_diff(combo, us.potential) < 1e-12);
  }

  TEST_CASE("constant density has the quadratic solution") {
    const PolarGrid g(32, 64);
    const auto sol = grid_poisson_solve(DensitySpec::constant(2.0), BoundaryCondition::dirichlet(), g);
    double err = 0.0;
    for (int n = 0; n < g.node_count(); ++n) {
      const double r = g.radius(g.ring_of(n));
      err = std::max(err, std::abs(sol.potential[static_cast<std::size_t>(n)] - 2.0 * (1.0 - r * r) / 4.0));
    }
    CHECK(err < 1e-3);
    CHECK(sol.residual_linf <= sol.tolerance);
  }

  TEST_CASE("radial bump potential matches the Gauss law integral") {
    const PolarGrid g(64, 128);
    const auto rho = DensitySpec::appendix_bump(vec2(0.0, 0.0), 0.5);
    const auto sol = grid_poisson_solve(rho, BoundaryCondition::dirichlet(), g);
    const double c = oracle::bump_constant(0.5);
    double err = 0.0;
    for (int ring = 0; ring <= g.nr(); ring += 4) {
      const double exact = radial_potential(g.radius(ring), 0.5, c);
      err = std::max(err, std::abs(sol.potential[static_cast<std::size_t>(g.index(ring, 3))] - exact));
    }
    CHECK(err < 1e-3);
  }

  TEST_CASE("Dirichlet data vanishes on the boundary") {
    const PolarGrid g(32, 64);
    const auto sol = grid_poisson_solve(DensitySpec::appendix_bump(vec2(0.5, 0.0), 0.5), BoundaryCondition::dirichlet(), g);
    for (int j = 0; j < g.ntheta(); ++j) CHECK(std::abs(sol.potential[static_cast<std::size_t>(g.index(g.nr(), j))]) <= kSolverTolerance);
    CHECK(sol.residual_linf <= sol.tolerance);
    CHECK(sol.min_normal_field > 0.0);
  }

  TEST_CASE("Neumann solve fixes the zero-mean gauge") {
    const PolarGrid g(32, 64);
    const auto rho = DensitySpec::appendix_bump(vec2(0.5, 0.0), 0.5);
    const auto sol = grid_poisson_solve(rho, BoundaryCondition::neumann(-rho.mass() / (2.0 * std::numbers::pi)), g);
    double mean = 0.0;
    for (int n = 0; n < g.node_count(); ++n) mean += sol.potential[static_cast<std::size_t>(n)] * g.control_area()[static_cast<std::size_t>(n)];
    CHECK(std::abs(mean) < 1e-10);
    CHECK(sol.residual_linf <= sol.tolerance);
  }

  TEST_CASE("incompatible Neumann data is rejected") {
    const PolarGrid g(16, 32);
    const auto rho = DensitySpec::appendix_bump(vec2(0.5, 0.0), 0.5);
    try {
      grid_poisson_solve(rho, BoundaryCondition::neumann(1.0), g);
      FAIL("expected IncompatibleNeumannData");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::IncompatibleNeumannData);
    }
  }

  TEST_CASE("VPME with zero density and Dirichlet data is zero") {
    const PolarGrid g(16, 32);
    const auto sol = vpme_poisson_solve(DensitySpec::zero(), BoundaryCondition::dirichlet(), g);
    for (double u : sol.potential) CHECK(std::abs(u) <= kSolverTolerance);
  }

  TEST_CASE("VPME solution is independent of the starting guess") {
    const PolarGrid g(16, 32);
    const auto rho = DensitySpec::appendix_bump(vec2(0.5, 0.0), 0.5);
    const auto base = vpme_poisson_solve(rho, BoundaryCondition::dirichlet(), g);
    for (std::uint64_t seed : {1u, 7u, 42u}) {
      VpmeOptions opt;
      opt.noise_seed = seed;
      const auto other = vpme_poisson_solve(rho, BoundaryCondition::dirichlet(), g, opt);
      CHECK(max_abs_diff(base.potential, other.potential) < 1e-8);
    }
  }

  TEST_CASE("VPME energy descent decreases the energy and agrees with Newton") {
    const PolarGrid g(16, 32);
    const auto rho = DensitySpec::appendix_bump(vec2(0.5, 0.0), 0.5);
    VpmeOptions opt;
    opt.method = VpmeMethod::EnergyDescent;
    const auto descent = vpme_poisson_solve(rho, BoundaryCondition::dirichlet(), g, opt);
    const auto newton = vpme_poisson_solve(rho, BoundaryCondition::dirichlet(), g);
    REQUIRE(descent.energy_history.size() >= 2);
    for (std::size_t i = 1; i < descent.energy_history.size(); ++i) {
      CHECK(descent.energy_history[i] <= descent.energy_history[i - 1]);
    }
    CHECK(max_abs_diff(descent.potential, newton.potential) < 1e-8);
  }

  TEST_CASE("VPME radial solution matches the one-dimensional oracle") {
    const PolarGrid g(64, 64);
    const auto rho = DensitySpec::appendix_bump(vec2(0.0, 0.0), 0.5);
    const auto sol = vpme_poisson_solve(rho, BoundaryCondition::dirichlet(), g);
    const auto ref = oracle::radial_vpme(1024, 0.5, oracle::bump_constant(0.5));
    double err = 0.0;
    for (int ring = 0; ring <= g.nr(); ++ring) {
      err = std::max(err, std::abs(sol.potential[static_cast<std::size_t>(g.index(ring, 0))] - ref[static_cast<std::size_t>(16 * ring)]));
    }
    CHECK(err < 1e-3);
  }

  TEST_CASE("split solve reconstructs the full solution") {
    const PolarGrid g(32, 64);
    const auto rho = DensitySpec::appendix_bump(vec2(0.5, 0.0), 0.5);
    const auto full = vpme_poisson_solve(rho, BoundaryCondition::dirichlet(), g);
    const auto split = vpme_split_solve(rho, BoundaryCondition::dirichlet(), g);
    REQUIRE(split.split.has_value());
    std::vector<double> sum(full.potential.size());
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = split.split->regular[i] + split.split->singular[i];
    CHECK(max_abs_diff(sum, full.potential) < 1e-8);
    CHECK(split.split->regular_residual <= split.tolerance);
    CHECK(split.split->singular_residual <= split.tolerance);
  }

  TEST_CASE("split solve of zero density is zero") {
    const PolarGrid g(16, 32);
    const auto split = vpme_split_solve(DensitySpec::zero(), BoundaryCondition::dirichlet(), g);
    REQUIRE(split.split.has_value());
    for (std::size_t i = 0; i < split.potential.size(); ++i) {
      CHECK(std::abs(split.split->regular[i]) <= kSolverTolerance);
      CHECK(std::abs(split.split->singular[i]) <= kSolverTolerance);
    }
  }

  TEST_CASE("cached linear solver matches the direct solve") {
    const PolarGrid g(16, 32);
    const auto rho = DensitySpec::appendix_bump(vec2(0.5, 0.0), 0.5);
    const LinearPoissonSolver solver(g, BoundaryKind::Dirichlet);
    const auto a = solver.solve(rho, BoundaryCondition::dirichlet());
    const auto b = grid_poisson_solve(rho, BoundaryCondition::dirichlet(), g);
    CHECK(max_abs_diff(a.potential, b.potential) < 1e-13);
  }
}
