#include "doctest.h"

#include "vpbd/error.hpp"
#include "vpbd/flow.hpp"

#include <cmath>
#include <numbers>

using namespace vpbd;

namespace {

PhaseState state(double x, double y, double vx, double vy, double t = 0.0) { return {t, vec2(x, y), vec2(vx, vy)}; }

FieldModel appendix_model() {
  return FieldModel::appendix(AppendixField(DensitySpec::appendix_bump(vec2(0.5, 0.0), 0.5).bump()));
}

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

}  // namespace

TEST_SUITE("flow") {
  TEST_CASE("specular reflection") {
    CHECK((reflect(vec2(1, 1), vec2(1, 0)) - vec2(-1, 1)).norm() == 0.0);
    CHECK((reflect(vec2(0.3, -0.4), vec2(0, -1)) - vec2(0.3, 0.4)).norm() < 1e-16);
    const Vec n = vec2(std::cos(0.4), std::sin(0.4));
    const Vec v = vec2(0.7, -1.3);
    CHECK(std::abs(reflect(v, n).norm() - v.norm()) < 1e-15);
    CHECK((reflect(reflect(v, n), n) - v).norm() < 1e-15);
  }

  TEST_CASE("kinetic distance examples") {
    const auto disk = ConvexDomain::unit_disk();
    const auto zero = FieldModel::zero();
    CHECK(kinetic_distance(disk, zero, state(0, 0, 1, 0)) == doctest::Approx(0.5));
    CHECK(kinetic_distance(disk, zero, state(1, 0, 0, 1)) == 0.0);
    // E = 0 on the disk: alpha = (|v|^2 - (x^v)^2) / 2.
    const PhaseState s = state(0.3, -0.2, 0.8, 0.5);
    const double cross = 0.3 * 0.5 - (-0.2) * 0.8;
    CHECK(kinetic_distance(disk, zero, s) == doctest::Approx(0.5 * (0.89 - cross * cross)).epsilon(1e-14));
  }

  TEST_CASE("diameter billiard") {
    const auto disk = ConvexDomain::unit_disk();
    const auto traj = advance(disk, state(0, 0, 1, 0), FieldModel::zero(), 3.5);
    REQUIRE(traj.events.size() == 2);
    CHECK(traj.events[0].tau == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(traj.events[1].tau == doctest::Approx(3.0).epsilon(1e-12));
    CHECK((traj.events[1].x - vec2(-1, 0)).norm() < 1e-12);
    CHECK((traj.samples.back().x - vec2(-0.5, 0)).norm() < 1e-12);
    CHECK(traj.samples.back().t == 3.5);
    for (std::size_t i = 1; i < traj.samples.size(); ++i) CHECK(traj.samples[i].t > traj.samples[i - 1].t);
  }

  TEST_CASE("chord billiard has equally spaced reflections") {
    const auto disk = ConvexDomain::unit_disk();
    const auto traj = advance(disk, state(std::sqrt(0.99), 0, 0, 1), FieldModel::zero(), 1.0);
    const auto rc = count_reflections(traj, disk, FieldModel::zero(), 0.0, 1.0);
    CHECK(rc.k == 5);
    REQUIRE(traj.events.size() >= 5);
    for (std::size_t i = 1; i < traj.events.size(); ++i) {
      CHECK(traj.events[i].tau - traj.events[i - 1].tau == doctest::Approx(0.2).epsilon(1e-9));
    }
    const auto gaps = bounce_gap_check(traj, disk, FieldModel::zero());
    CHECK(gaps.min_ratio >= 1.0 - 1e-9);
  }

  TEST_CASE("reflection events satisfy their postconditions") {
    const auto disk = ConvexDomain::unit_disk();
    const auto field = appendix_model();
    const auto traj = advance(disk, state(-0.6, 0.0, 0.3, 1.5), field, 4.0);
    REQUIRE(!traj.events.empty());
    for (const auto& e : traj.events) {
      CHECK(std::abs(disk.xi(e.x)) <= kBoundaryTolerance);
      CHECK(e.v_pre.dot(e.normal) > 0.0);
      CHECK(e.v_post.dot(e.normal) < 0.0);
      CHECK(std::abs(e.v_post.norm() - e.v_pre.norm()) < 1e-12);
      CHECK((e.v_post - reflect(e.v_pre, e.normal)).norm() < 1e-15);
    }
    for (const auto& s : traj.samples) CHECK(disk.xi(s.x) <= kBoundaryTolerance);
  }

  TEST_CASE("energy is conserved in a static field") {
    const auto disk = ConvexDomain::unit_disk();
    const auto field = appendix_model();
    const auto traj = advance(disk, state(-0.6, 0.0, 0.3, 1.5), field, 4.0);
    auto energy = [&](const PhaseState& s) { return 0.5 * s.v.squaredNorm() + field.potential(s.t, s.x); };
    const double e0 = energy(traj.samples.front());
    double drift = 0.0;
    for (const auto& s : traj.samples) drift = std::max(drift, std::abs(energy(s) - e0));
    CHECK(drift < 1e-8);
  }

  TEST_CASE("time reversal returns to the start") {
    const auto disk = ConvexDomain::unit_disk();
    const auto field = appendix_model();
    const auto fwd = advance(disk, state(-0.2, 0.1, 0.9, 0.7), field, 2.0);
    const PhaseState end = fwd.samples.back();
    const auto back = advance(disk, {0.0, end.x, -end.v}, field, 2.0);
    CHECK((back.samples.back().x - vec2(-0.2, 0.1)).norm() < 1e-6);
    CHECK((back.samples.back().v + vec2(0.9, 0.7)).norm() < 1e-6);
  }

  TEST_CASE("restarting from an intermediate state is bitwise identical") {
    const auto disk = ConvexDomain::unit_disk();
    const auto field = appendix_model();
    const PhaseState s0 = state(-0.6, 0.0, 0.3, 1.5);
    const auto once = advance_state(disk, s0, field, 3.0);
    const auto half = advance_state(disk, s0, field, 1.5);
    const auto twice = advance_state(disk, half.state, field, 3.0);
    CHECK(once.state.x[0] == twice.state.x[0]);
    CHECK(once.state.x[1] == twice.state.x[1]);
    CHECK(once.state.v[0] == twice.state.v[0]);
    CHECK(once.state.v[1] == twice.state.v[1]);
    CHECK(once.reflections == half.reflections + twice.reflections);
  }

  TEST_CASE("velocity lemma holds for zero and constant fields") {
    const auto disk = ConvexDomain::unit_disk();
    for (const auto& field : {FieldModel::zero(), FieldModel::constant(vec2(0.3, 0.0))}) {
      const auto traj = advance(disk, state(-0.9, 0.0, 0.2, 1.0), field, 3.0);
      const auto rep = velocity_lemma_check(traj, disk, field);
      CHECK(rep.checked > 0);
      CHECK(rep.fraction_ok == 1.0);
    }
  }

  TEST_CASE("reflection counts respect their bound") {
    const auto disk = ConvexDomain::unit_disk();
    const auto zero = FieldModel::zero();
    const auto diam = advance(disk, state(0, 0, 1, 0), zero, 10.0);
    CHECK(count_reflections(diam, disk, zero, 0.0, 10.0).k == 5);
    CHECK(bounce_gap_check(diam, disk, zero).min_ratio == doctest::Approx(1.0).epsilon(1e-9));
    const auto field = appendix_model();
    const auto graze = advance(disk, state(-0.95, 0.0, 0.0, 2.0), field, 4.0);
    const auto rc = count_reflections(graze, disk, field, 0.0, 4.0);
    CHECK(rc.k > 0);
    CHECK(static_cast<double>(rc.k) <= rc.k_bound);
  }

  TEST_CASE("tangential start stalls") {
    const auto disk = ConvexDomain::unit_disk();
    CHECK(code_of([&] { advance(disk, state(1, 0, 0, 1), FieldModel::zero(), 1.0); }) == ErrorCode::GrazingStall);
    const auto out = advance_state(disk, state(1, 0, 0, 1), FieldModel::zero(), 1.0);
    CHECK(out.status == AdvanceStatus::GrazingStall);
  }

  TEST_CASE("step limit is enforced") {
    FlowOptions opt;
    opt.max_steps = 10;
    CHECK(code_of([&] { advance(ConvexDomain::unit_disk(), state(0, 0, 1, 0), FieldModel::zero(), 1.0, opt); }) ==
          ErrorCode::StepLimitExceeded);
  }

  TEST_CASE("grazing isolation envelope holds") {
    const auto disk = ConvexDomain::unit_disk();
    const auto field = appendix_model();
    const auto traj = advance(disk, state(-0.9, 0.0, 0.0, 2.0), field, 4.0);
    CHECK(grazing_isolation_check(traj, disk, field).holds);
    CHECK(traj.certificate_ok);
  }
}
