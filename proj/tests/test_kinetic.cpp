#include "doctest.h"

#include "vpbd/error.hpp"
#include "vpbd/kinetic.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

using namespace vpbd;

namespace {

double weight_sum(const ParticleEnsemble& e) { return std::accumulate(e.w.begin(), e.w.end(), 0.0); }

ParticleEnsemble single_particle(const Vec& x, const Vec& v) {
  ParticleEnsemble e;
  e.x = {x};
  e.v = {v};
  e.w = {1.0};
  e.f0 = {1.0};
  e.q_history = {{0.0, 0.0}};
  return e;
}

bool same_states(const ParticleEnsemble& a, const ParticleEnsemble& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.x[i] != b.x[i] || a.v[i] != b.v[i] || a.w[i] != b.w[i]) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("kinetic") {
  TEST_CASE("uniform initial data") {
    const auto disk = ConvexDomain::unit_disk();
    const auto ens = init_ensemble(uniform_initial_data(vec2(0, 0), 0.5, 1.0, 1000), disk);
    CHECK(ens.size() == 1000);
    CHECK(weight_sum(ens) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ens.q() == 1.0);
    for (std::size_t i = 0; i < ens.size(); ++i) {
      CHECK(ens.x[i].norm() <= 0.5 + 1e-15);
      CHECK(ens.v[i].norm() <= 1.0 + 1e-15);
      CHECK(ens.w[i] >= 0.0);
    }
  }

  TEST_CASE("Halton sampling covers the same support") {
    const auto disk = ConvexDomain::unit_disk();
    const auto ens =
        init_ensemble(uniform_initial_data(vec2(0.2, 0), 0.3, 0.5, 500, Sampling::QuasiRandomHalton, 17), disk);
    CHECK(weight_sum(ens) == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t i = 0; i < ens.size(); ++i) {
      CHECK((ens.x[i] - vec2(0.2, 0)).norm() <= 0.3 + 1e-15);
      CHECK(ens.v[i].norm() <= 0.5 + 1e-15);
    }
  }

  TEST_CASE("vanishing profile has empty support") {
    auto spec = uniform_initial_data(vec2(0, 0), 0.5, 1.0, 100);
    spec.profile = [](const Vec&, const Vec&) { return 0.0; };
    try {
      init_ensemble(spec, ConvexDomain::unit_disk());
      FAIL("expected EmptySupport");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EmptySupport);
    }
  }

  TEST_CASE("non-flat profile near the grazing set is rejected") {
    auto spec = uniform_initial_data(vec2(0, 0), 1.0, 1.0, 4000);
    spec.profile = [](const Vec& x, const Vec&) { return 1.0 + x[0]; };
    spec.flatness_delta0 = 0.5;
    try {
      init_ensemble(spec, ConvexDomain::unit_disk());
      FAIL("expected FlatnessViolated");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::FlatnessViolated);
    }
  }

  TEST_CASE("deposition examples") {
    const PolarGrid g(8, 16);
    const int node = g.index(3, 5);
    auto one = single_particle(g.position(node), vec2(0, 0));
    const auto rho = deposit_density(one, g);
    for (int n = 0; n < g.node_count(); ++n) {
      const double expect = n == node ? 1.0 / g.node_measure()[static_cast<std::size_t>(n)] : 0.0;
      CHECK(rho.values()[static_cast<std::size_t>(n)] == doctest::Approx(expect).epsilon(1e-12));
    }
    CHECK(rho.mass() == doctest::Approx(1.0).epsilon(1e-14));

    ParticleEnsemble pair = single_particle(vec2(0.3, 0.2), vec2(0, 0));
    pair.x.push_back(vec2(-0.3, -0.2));
    pair.v.push_back(vec2(0, 0));
    pair.w = {0.5, 0.5};
    pair.f0 = {1.0, 1.0};
    const auto sym = deposit_density(pair, g);
    for (int n = 1; n < g.node_count(); ++n) {
      const int opposite = g.index(g.ring_of(n), g.angle_of(n) + g.ntheta() / 2);
      CHECK(sym.values()[static_cast<std::size_t>(n)] ==
            doctest::Approx(sym.values()[static_cast<std::size_t>(opposite)]).epsilon(1e-12));
    }
  }

  TEST_CASE("deposited appendix density approximates the bump") {
    const auto disk = ConvexDomain::unit_disk();
    const auto ens = init_ensemble(appendix_initial_data(10000), disk);
    const PolarGrid g(32, 64);
    const auto rho = deposit_density(ens, g);
    const auto exact = DensitySpec::appendix_bump(vec2(0.5, 0.0), 0.5);
    double l1 = 0.0;
    for (int n = 0; n < g.node_count(); ++n) {
      l1 += std::abs(rho.values()[static_cast<std::size_t>(n)] - exact(g.position(n))) * g.node_measure()[static_cast<std::size_t>(n)];
    }
    CHECK(l1 <= 3e-2);
    CHECK(rho.mass() == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("free transport keeps weights and speeds") {
    const auto disk = ConvexDomain::unit_disk();
    const auto ens = init_ensemble(uniform_initial_data(vec2(0, 0), 0.5, 1.0, 400), disk);
    const auto out = linear_vlasov_solve(ens, disk, FieldModel::zero(), 1.0);
    CHECK(out.w == ens.w);
    CHECK(out.f0 == ens.f0);
    CHECK(out.q() == ens.q());
    CHECK(out.mass() == ens.mass());
    for (std::size_t i = 0; i < ens.size(); ++i) {
      CHECK(std::abs(out.v[i].norm() - ens.v[i].norm()) < 1e-12);
      CHECK(disk.xi(out.x[i]) <= kBoundaryTolerance);
    }
  }

  TEST_CASE("frozen appendix field increases Q by at most the field norm") {
    const auto disk = ConvexDomain::unit_disk();
    const auto field = FieldModel::appendix(AppendixField(DensitySpec::appendix_bump(vec2(0.5, 0.0), 0.5).bump()));
    const auto ens = init_ensemble(appendix_initial_data(400), disk);
    const auto out = linear_vlasov_solve(ens, disk, field, 1.0);
    CHECK(out.q() >= ens.q());
    CHECK(out.q() <= ens.q() + field.sup_norm() * 1.0 + 1e-12);
  }

  TEST_CASE("reversing velocities returns the ensemble") {
    const auto disk = ConvexDomain::unit_disk();
    const auto field = FieldModel::appendix(AppendixField(DensitySpec::appendix_bump(vec2(0.5, 0.0), 0.5).bump()));
    const auto ens = init_ensemble(appendix_initial_data(200), disk);
    auto fwd = linear_vlasov_solve(ens, disk, field, 1.0);
    for (auto& v : fwd.v) v = -v;
    fwd.t = 0.0;
    const auto back = linear_vlasov_solve(fwd, disk, field, 1.0);
    double err = 0.0;
    for (std::size_t i = 0; i < ens.size(); ++i) err += (back.x[i] - ens.x[i]).norm();
    CHECK(err / static_cast<double>(ens.size()) <= 1e-6);
  }

  TEST_CASE("results do not depend on the worker count") {
    const auto disk = ConvexDomain::unit_disk();
    const auto field = FieldModel::appendix(AppendixField(DensitySpec::appendix_bump(vec2(0.5, 0.0), 0.5).bump()));
    const auto ens = init_ensemble(appendix_initial_data(300), disk);
    KineticOptions a, b;
    a.workers = 1;
    b.workers = 3;
    CHECK(same_states(linear_vlasov_solve(ens, disk, field, 0.5, a), linear_vlasov_solve(ens, disk, field, 0.5, b)));
  }

  TEST_CASE("Q follows the exact speed in a linear field") {
    // E = x from rest: x(t) = r0 cosh t, v(t) = r0 sinh t until the boundary.
    const auto disk = ConvexDomain::unit_disk();
    const auto out = linear_vlasov_solve(single_particle(vec2(0.1, 0.0), vec2(0.0, 0.0)), disk, FieldModel::linear(1.0), 1.0);
    CHECK(std::abs(out.q() - 0.1 * std::sinh(1.0)) < 1e-8);
    CHECK(std::abs(out.x[0][0] - 0.1 * std::cosh(1.0)) < 1e-8);
    CHECK(std::abs(out.x[0][1]) == 0.0);
  }

  TEST_CASE("first Picard iterate equals one frozen-field solve") {
    const auto disk = ConvexDomain::unit_disk();
    const auto ens = init_ensemble(appendix_initial_data(200), disk);
    PicardConfig cfg;
    cfg.horizon = 0.2;
    cfg.snapshot_dt = 0.05;
    cfg.iterations = 1;
    cfg.field.grid = PolarGrid(16, 32);
    const auto res = picard_iterate(ens, disk, cfg);
    const FieldSolver solver(cfg.field);
    const auto e0 = FieldModel::from_solution(solver.solve(ens));
    const auto direct = linear_vlasov_solve(ens, disk, e0, 0.2);
    REQUIRE(res.ensembles.size() == 1);
    CHECK(same_states(res.ensembles[0], direct));
    CHECK(res.state.cauchy.size() == 1);
  }

  TEST_CASE("Picard iterates contract") {
    const auto disk = ConvexDomain::unit_disk();
    PicardConfig cfg;
    cfg.horizon = 0.2;
    cfg.snapshot_dt = 0.05;
    cfg.iterations = 4;
    cfg.field.grid = PolarGrid(16, 32);
    const auto res = picard_iterate(appendix_initial_data(400), disk, cfg);
    CHECK(res.state.monotone);
    CHECK(res.state.cauchy.back() < res.state.cauchy.front());
  }

  TEST_CASE("uncoupled simulation conserves energy and Q") {
    const auto disk = ConvexDomain::unit_disk();
    CoupledConfig cfg;
    cfg.horizon = 0.5;
    cfg.dt = 0.05;
    cfg.field.grid = PolarGrid(16, 32);
    cfg.field.coupling = 0.0;
    const auto res = coupled_simulate(appendix_initial_data(300), disk, cfg);
    REQUIRE(res.ledger.size() == 11);
    for (const auto& row : res.ledger) {
      CHECK(row.field_energy == 0.0);
      CHECK(row.q == res.ledger.front().q);
      CHECK(row.mass == res.ledger.front().mass);
      CHECK(std::abs(row.kinetic_energy - res.ledger.front().kinetic_energy) < 1e-12);
    }
    CHECK(res.energy_drift < 1e-11);
  }

  TEST_CASE("growth ratio formula") {
    CHECK(raw_growth_ratio(1.0, 1.0, 0.1) == 0.0);
    const double q = 2.0;
    CHECK(raw_growth_ratio(1.0, q, 0.5) ==
          doctest::Approx(1.0 / (0.5 * std::pow(q, 8.0 / 11.0) * std::sqrt(std::log(std::numbers::e + q)))));
    ParticleEnsemble e = single_particle(vec2(0, 0), vec2(0, 0));
    e.q_history = {{0.0, 1.0}, {1.0, 1.0}, {2.0, 2.0}, {3.0, 3.0}};
    const auto h = q_history(e);
    CHECK(h[1].growth_ratio == 0.0);
    CHECK(h[2].growth_ratio == doctest::Approx(1.0));
  }
}
