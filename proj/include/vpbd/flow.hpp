#pragma once

#include "vpbd/field_model.hpp"
#include "vpbd/geometry.hpp"

#include <cstddef>
#include <limits>
#include <string>
#include <vector>

namespace vpbd {

struct PhaseState {
  double t = 0;
  Vec x;
  Vec v;
};

struct ReflectionEvent {
  double tau = 0;
  Vec x;
  Vec v_pre;
  Vec v_post;
  Vec normal;
  double alpha_at_event = 0;
  // v_pre . n; positive for an outgoing crossing.
  double normal_speed_pre = 0;
};

struct IntegratorStats {
  std::size_t steps = 0;
  std::size_t rejected = 0;  // steps cut back to a boundary crossing
  double min_alpha = std::numeric_limits<double>::infinity();  // over collar states
};

struct Trajectory {
  std::vector<PhaseState> samples;
  // Index into events for samples that are reflection points (post-reflection state), else -1.
  std::vector<int> sample_event;
  std::vector<ReflectionEvent> events;
  std::vector<double> alpha;  // alpha at each sample
  std::string field_id;
  IntegratorStats stats;
  double outgoing_margin = 0;
  bool certificate_ok = false;
};

struct FlowOptions {
  double base_step = 1e-3;
  double grazing_factor = 1e-14;
  std::size_t max_steps = 200'000'000;
  std::size_t max_events = std::numeric_limits<std::size_t>::max();
  bool check_certificate = true;
};

Vec reflect(const Vec& v, const Vec& n);

// alpha = 1/2 (v.grad xi)^2 + (v.Hess xi.v + E.grad xi) |xi|
double kinetic_distance(const ConvexDomain& domain, const FieldModel& field, const PhaseState& state);

// Integrates dX/ds = V, dV/ds = E(s, X) with specular reflection at the boundary.
// Throws GrazingStall or StepLimitExceeded.
Trajectory advance(const ConvexDomain& domain, const PhaseState& start, const FieldModel& field, double t_end,
                   const FlowOptions& options = {});

enum class AdvanceStatus { Completed, GrazingStall, StepLimit };

struct AdvanceOutcome {
  PhaseState state;
  AdvanceStatus status = AdvanceStatus::Completed;
  std::size_t reflections = 0;
  double max_speed = 0;  // over step endpoints, including the start
};

// Same integration without recording samples; reports stalls instead of throwing.
AdvanceOutcome advance_state(const ConvexDomain& domain, const PhaseState& start, const FieldModel& field,
                             double t_end, const FlowOptions& options = {});

// Constants of the kinetic-distance estimates for a field and a speed range.
struct KineticConstants {
  double third_derivative = 0;  // ||D^3 xi||
  double hessian = 0;           // ||D^2 xi||
  double gradient = 0;          // sup |grad xi|
  double convexity = 0;         // C_Omega
  double field_sup = 0;
  double field_lipschitz = 0;
  double field_time_lipschitz = 0;
  double collar_normal_min = 0;  // min E.grad xi over the collar
  double speed_lo = 0;
  double speed_hi = 0;
  // |d alpha/ds| <= C (|V| + 1) alpha in the collar.
  double velocity_lemma = 0;
  // Bounce-count prefactor.
  double bounce = 0;
};

KineticConstants kinetic_constants(const ConvexDomain& domain, const FieldModel& field, double speed_lo,
                                   double speed_hi);

struct VelocityLemmaReport {
  std::size_t checked = 0;
  std::size_t satisfied = 0;
  double fraction_ok = 1.0;
  double worst_ratio = 0.0;
  KineticConstants constants;
  std::vector<double> derivative;  // |d alpha/ds| per checked pair
  std::vector<double> bound;       // C (|V|+1) alpha per checked pair
};

VelocityLemmaReport velocity_lemma_check(const Trajectory& traj, const ConvexDomain& domain,
                                         const FieldModel& field);

struct BounceGapReport {
  std::vector<double> gaps;
  std::vector<double> bounds;
  std::vector<double> ratios;
  double min_ratio = std::numeric_limits<double>::infinity();
};

BounceGapReport bounce_gap_check(const Trajectory& traj, const ConvexDomain& domain, const FieldModel& field);

struct ReflectionCount {
  std::size_t k = 0;
  double k_bound = 0;
  double c0 = 0;
  double c1 = 0;
  double alpha_end = 0;
};

// Events with t0 < tau < t1 and the bound evaluated with the state at t1.
ReflectionCount count_reflections(const Trajectory& traj, const ConvexDomain& domain, const FieldModel& field,
                                  double t0, double t1);

struct GrazingIsolationReport {
  double alpha_start = 0;
  double min_collar_alpha = 0;
  double envelope = 0;
  bool holds = true;
};

// min collar alpha >= alpha(0) exp(-C[(sup|V| + 1) T + ||E|| T^2]).
GrazingIsolationReport grazing_isolation_check(const Trajectory& traj, const ConvexDomain& domain,
                                               const FieldModel& field);

}  // namespace vpbd
