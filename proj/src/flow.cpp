#include "vpbd/flow.hpp"

#include "vpbd/error.hpp"

#include <fmt/format.h>

#include <cmath>
#include <numbers>

namespace vpbd {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

struct Rk4Result {
  Vec x;
  Vec v;
};

Rk4Result rk4_step(const FieldModel& field, double t, const Vec& x, const Vec& v, double h) {
  const Vec a1 = field.field(t, x);
  const Vec x2 = x + 0.5 * h * v;
  const Vec v2 = v + 0.5 * h * a1;
  const Vec a2 = field.field(t + 0.5 * h, x2);
  const Vec x3 = x + 0.5 * h * v2;
  const Vec v3 = v + 0.5 * h * a2;
  const Vec a3 = field.field(t + 0.5 * h, x3);
  const Vec x4 = x + h * v3;
  const Vec v4 = v + h * a3;
  const Vec a4 = field.field(t + h, x4);
  return {x + (h / 6.0) * (v + 2.0 * v2 + 2.0 * v3 + v4), v + (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)};
}

// Observer hooks: on_step(state) after a plain step, on_event(event, state) after a reflection.
template <class Observer>
AdvanceStatus integrate(const ConvexDomain& domain, const FieldModel& field, PhaseState& st, double t_end,
                        const FlowOptions& opt, IntegratorStats& stats, Observer& obs) {
  const double h0 = opt.base_step;
  const double field_sup = field.sup_norm();
  std::size_t events = 0;
  while (st.t < t_end) {
    if (events >= opt.max_events) return AdvanceStatus::Completed;
    if (stats.steps >= opt.max_steps) return AdvanceStatus::StepLimit;
    // Steps end on the global grid k*h0 so restarts at grid times reproduce a single run.
    const double k = std::floor(st.t / h0 + 1e-9);
    const double grid_target = (k + 1.0) * h0;
    const double target = std::min(t_end, grid_target);
    double h = target - st.t;
    bool capped = false;
    const double speed = st.v.norm();
    if (domain.in_collar(st.x)) {
      const double alpha = kinetic_distance(domain, field, st);
      stats.min_alpha = std::min(stats.min_alpha, alpha);
      if (alpha < opt.grazing_factor * (1.0 + speed * speed)) return AdvanceStatus::GrazingStall;
      const double cap = 0.1 * std::sqrt(alpha) / (speed + field_sup + 1.0);
      if (cap < h) {
        h = cap;
        capped = true;
      }
    }
    ++stats.steps;
    const Rk4Result full = rk4_step(field, st.t, st.x, st.v, h);
    const double g = domain.xi(full.x);
    if (g > kBoundaryTolerance) {
      ++stats.rejected;
      // Bisect the step length until the end point lies on the boundary.
      double lo = 0.0;
      double hi = h;
      Rk4Result hit = full;
      double tau = h;
      bool found = false;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (!(mid > lo && mid < hi)) break;
        hit = rk4_step(field, st.t, st.x, st.v, mid);
        const double gm = domain.xi(hit.x);
        tau = mid;
        if (std::abs(gm) <= kBoundaryTolerance) {
          found = true;
          break;
        }
        if (gm > 0.0) hi = mid; else lo = mid;
      }
      if (!found) {
        hit = rk4_step(field, st.t, st.x, st.v, lo);
        tau = lo;
        hit.x = domain.project_to_boundary(hit.x);
      }
      ReflectionEvent ev;
      ev.tau = st.t + tau;
      ev.x = hit.x;
      ev.v_pre = hit.v;
      ev.normal = domain.outward_normal(hit.x);
      ev.v_post = reflect(hit.v, ev.normal);
      ev.normal_speed_pre = hit.v.dot(ev.normal);
      st = PhaseState{ev.tau, hit.x, hit.v};
      ev.alpha_at_event = kinetic_distance(domain, field, st);
      st.v = ev.v_post;
      ++events;
      obs.on_event(ev, st);
      continue;
    }
    st.t = capped ? st.t + h : target;
    st.x = full.x;
    st.v = full.v;
    if (std::abs(g) <= kBoundaryTolerance && st.v.dot(domain.gradient(st.x)) > 0.0) {
      ReflectionEvent ev;
      ev.tau = st.t;
      ev.x = st.x;
      ev.v_pre = st.v;
      ev.normal = domain.outward_normal(st.x);
      ev.v_post = reflect(st.v, ev.normal);
      ev.normal_speed_pre = st.v.dot(ev.normal);
      ev.alpha_at_event = kinetic_distance(domain, field, st);
      st.v = ev.v_post;
      ++events;
      obs.on_event(ev, st);
      continue;
    }
    obs.on_step(st);
  }
  return AdvanceStatus::Completed;
}

struct Recorder {
  const ConvexDomain& domain;
  const FieldModel& field;
  Trajectory& traj;

  void push(const PhaseState& st, int event) {
    traj.samples.push_back(st);
    traj.sample_event.push_back(event);
    traj.alpha.push_back(kinetic_distance(domain, field, st));
  }
  void on_step(const PhaseState& st) { push(st, -1); }
  void on_event(const ReflectionEvent& ev, const PhaseState& st) {
    traj.events.push_back(ev);
    push(st, static_cast<int>(traj.events.size()) - 1);
  }
};

struct Tracker {
  std::size_t reflections = 0;
  double max_speed = 0;
  void on_step(const PhaseState& st) { max_speed = std::max(max_speed, st.v.norm()); }
  void on_event(const ReflectionEvent&, const PhaseState& st) {
    ++reflections;
    max_speed = std::max(max_speed, st.v.norm());
  }
};

void check_start(const ConvexDomain& domain, const PhaseState& start, double t_end) {
  require(start.x.size() == domain.dimension() && start.v.size() == domain.dimension(),
          "state dimension does not match the domain");
  require(domain.xi(start.x) <= kBoundaryTolerance, "initial position lies outside the domain");
  require(t_end >= start.t, "t_end precedes the initial time");
}

}  // namespace

Vec reflect(const Vec& v, const Vec& n) { return v - 2.0 * v.dot(n) * n; }

double kinetic_distance(const ConvexDomain& domain, const FieldModel& field, const PhaseState& state) {
  const LevelSetValue ls = domain.level_set(state.x);
  const double b = state.v.dot(ls.gradient);
  const double curvature = state.v.dot(ls.hessian * state.v);
  const double push = field.field(state.t, state.x).dot(ls.gradient);
  return 0.5 * b * b + (curvature + push) * std::abs(ls.xi);
}

Trajectory advance(const ConvexDomain& domain, const PhaseState& start, const FieldModel& field, double t_end,
                   const FlowOptions& options) {
  check_start(domain, start, t_end);
  Trajectory traj;
  traj.field_id = field.id();
  if (options.check_certificate && domain.dimension() == 2) {
    traj.outgoing_margin = field.outgoing_margin(domain);
    traj.certificate_ok = traj.outgoing_margin > 0.0;
  }
  Recorder rec{domain, field, traj};
  rec.push(start, -1);
  PhaseState st = start;
  const AdvanceStatus status = integrate(domain, field, st, t_end, options, traj.stats, rec);
  if (status == AdvanceStatus::GrazingStall) {
    throw Error(ErrorCode::GrazingStall,
                fmt::format("kinetic distance fell below the grazing cutoff at t = {:.17g}", st.t));
  }
  if (status == AdvanceStatus::StepLimit) {
    throw Error(ErrorCode::StepLimitExceeded, fmt::format("step limit {} reached at t = {:.17g}", options.max_steps, st.t));
  }
  return traj;
}

AdvanceOutcome advance_state(const ConvexDomain& domain, const PhaseState& start, const FieldModel& field,
                             double t_end, const FlowOptions& options) {
  check_start(domain, start, t_end);
  Tracker tracker;
  tracker.max_speed = start.v.norm();
  IntegratorStats stats;
  AdvanceOutcome out;
  out.state = start;
  out.status = integrate(domain, field, out.state, t_end, options, stats, tracker);
  out.reflections = tracker.reflections;
  out.max_speed = tracker.max_speed;
  return out;
}

KineticConstants kinetic_constants(const ConvexDomain& domain, const FieldModel& field, double speed_lo,
                                   double speed_hi) {
  KineticConstants c;
  c.third_derivative = domain.third_derivative_bound();
  c.hessian = domain.hessian_bound();
  c.gradient = domain.gradient_bound();
  c.convexity = domain.convexity_constant();
  c.field_sup = field.sup_norm();
  c.field_lipschitz = field.lipschitz();
  c.field_time_lipschitz = field.time_lipschitz();
  c.collar_normal_min = field.collar_normal_minimum(domain);
  c.speed_lo = speed_lo;
  c.speed_hi = speed_hi;
  const double a = c.third_derivative;
  const double b = 3.0 * c.field_sup * c.hessian + c.field_lipschitz * c.gradient;
  const double d = c.field_time_lipschitz * c.gradient;
  if (a == 0.0 && b == 0.0 && d == 0.0) {
    c.velocity_lemma = 0.0;
  } else {
    // |d alpha/ds| <= |xi| (A s^3 + B s + D) and alpha >= |xi| (C_Omega s^2 + c_E) in the collar.
    double best = 0.0;
    constexpr int kSamples = 2000;
    for (int k = 0; k <= kSamples; ++k) {
      const double s = speed_lo + (speed_hi - speed_lo) * k / kSamples;
      const double denom = (s + 1.0) * (c.convexity * s * s + c.collar_normal_min);
      if (!(denom > 0.0)) {
        best = std::numeric_limits<double>::infinity();
        break;
      }
      best = std::max(best, (a * s * s * s + b * s + d) / denom);
    }
    c.velocity_lemma = best;
  }
  c.bounce = std::max(c.hessian, c.gradient) / (2.0 * std::numbers::sqrt2);
  return c;
}

VelocityLemmaReport velocity_lemma_check(const Trajectory& traj, const ConvexDomain& domain,
                                         const FieldModel& field) {
  VelocityLemmaReport rep;
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (const auto& s : traj.samples) {
    if (!domain.in_collar(s.x)) continue;
    lo = std::min(lo, s.v.norm());
    hi = std::max(hi, s.v.norm());
  }
  if (!(hi > 0.0)) return rep;
  rep.constants = kinetic_constants(domain, field, lo, hi);
  const double c = rep.constants.velocity_lemma;
  for (std::size_t k = 0; k + 1 < traj.samples.size(); ++k) {
    const auto& s0 = traj.samples[k];
    const auto& s1 = traj.samples[k + 1];
    const double ds = s1.t - s0.t;
    if (!(ds > 1e-12) || !domain.in_collar(s0.x) || !domain.in_collar(s1.x)) continue;
    const double deriv = std::abs(traj.alpha[k + 1] - traj.alpha[k]) / ds;
    const double alpha_mid = 0.5 * (traj.alpha[k] + traj.alpha[k + 1]);
    const double speed_mid = 0.5 * (s0.v.norm() + s1.v.norm());
    // Reflection points are located to |xi| <= kBoundaryTolerance, which moves alpha by about
    // (|v|^2 + |E|) times that tolerance.
    const double noise = 64.0 * kEps * (speed_mid * speed_mid + 1.0) +
                         2.0 * kBoundaryTolerance * (speed_mid * speed_mid + field.sup_norm() + 1.0);
    const double roundoff = noise / ds;
    const double bound = c * (speed_mid + 1.0) * alpha_mid;
    ++rep.checked;
    if (deriv <= bound + roundoff) ++rep.satisfied;
    if (bound > 0.0) {
      rep.worst_ratio = std::max(rep.worst_ratio, deriv / bound);
    } else if (deriv > roundoff) {
      rep.worst_ratio = std::numeric_limits<double>::infinity();
    }
    rep.derivative.push_back(deriv);
    rep.bound.push_back(bound);
  }
  rep.fraction_ok = rep.checked ? static_cast<double>(rep.satisfied) / rep.checked : 1.0;
  return rep;
}

BounceGapReport bounce_gap_check(const Trajectory& traj, const ConvexDomain& domain, const FieldModel& field) {
  BounceGapReport rep;
  const double e = field.sup_norm();
  for (std::size_t k = 0; k + 1 < traj.events.size(); ++k) {
    const auto& a = traj.events[k];
    const auto& b = traj.events[k + 1];
    const double gap = b.tau - a.tau;
    const double normal_speed = std::abs(a.v_post.dot(domain.gradient(a.x)));
    const double m = a.v_post.norm() + gap * e;
    const double bound = 2.0 * normal_speed / (domain.hessian_bound() * m * m + e * domain.gradient_bound());
    rep.gaps.push_back(gap);
    rep.bounds.push_back(bound);
    rep.ratios.push_back(gap / bound);
    rep.min_ratio = std::min(rep.min_ratio, gap / bound);
  }
  return rep;
}

ReflectionCount count_reflections(const Trajectory& traj, const ConvexDomain& domain, const FieldModel& field,
                                  double t0, double t1) {
  require(!traj.samples.empty(), "empty trajectory");
  require(t0 <= t1 && t0 >= traj.samples.front().t - 1e-12 && t1 <= traj.samples.back().t + 1e-12,
          "window lies outside the trajectory span");
  ReflectionCount out;
  for (const auto& ev : traj.events) {
    if (ev.tau > t0 && ev.tau < t1) ++out.k;
  }
  std::size_t idx = 0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (std::size_t k = 0; k < traj.samples.size(); ++k) {
    const auto& s = traj.samples[k];
    if (s.t <= t1 + 1e-12) idx = k;
    if (s.t >= t0 - 1e-12 && s.t <= t1 + 1e-12) {
      lo = std::min(lo, s.v.norm());
      hi = std::max(hi, s.v.norm());
    }
  }
  const auto& ref = traj.samples[idx];
  const KineticConstants kc = kinetic_constants(domain, field, std::min(lo, hi), hi);
  const double delta = t1 - t0;
  const double e = kc.field_sup;
  const double speed = ref.v.norm();
  out.c0 = kc.velocity_lemma;
  out.c1 = kc.bounce;
  out.alpha_end = traj.alpha[idx];
  if (!(out.alpha_end > 0.0)) {
    out.k_bound = std::numeric_limits<double>::infinity();
    return out;
  }
  const double m = speed + delta * e;
  const double growth = out.c0 == 0.0 ? 1.0 : std::exp(out.c0 * ((speed + 1.0) * delta + e * delta * delta));
  out.k_bound = delta * out.c1 * (m * m + e) / std::sqrt(out.alpha_end) * growth;
  return out;
}

GrazingIsolationReport grazing_isolation_check(const Trajectory& traj, const ConvexDomain& domain,
                                               const FieldModel& field) {
  GrazingIsolationReport rep;
  require(!traj.samples.empty(), "empty trajectory");
  rep.alpha_start = traj.alpha.front();
  double sup_speed = 0.0;
  double lo = std::numeric_limits<double>::infinity();
  rep.min_collar_alpha = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < traj.samples.size(); ++k) {
    const double s = traj.samples[k].v.norm();
    sup_speed = std::max(sup_speed, s);
    if (domain.in_collar(traj.samples[k].x)) {
      lo = std::min(lo, s);
      rep.min_collar_alpha = std::min(rep.min_collar_alpha, traj.alpha[k]);
    }
  }
  if (!std::isfinite(rep.min_collar_alpha)) return rep;
  const KineticConstants kc = kinetic_constants(domain, field, lo, sup_speed);
  const double t = traj.samples.back().t - traj.samples.front().t;
  rep.envelope =
      rep.alpha_start * std::exp(-kc.velocity_lemma * ((sup_speed + 1.0) * t + kc.field_sup * t * t));
  rep.holds = rep.min_collar_alpha >= rep.envelope * (1.0 - 1e-9);
  return rep;
}

}  // namespace vpbd
