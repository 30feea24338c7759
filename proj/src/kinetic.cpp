#include "vpbd/kinetic.hpp"

#include "vpbd/error.hpp"
#include "vpbd/parallel.hpp"
#include "vpbd/quasirandom.hpp"

#include <fmt/format.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <array>

namespace vpbd {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kGolden = 0.6180339887498949;
constexpr double kSqrt2Frac = 0.41421356237309515;
constexpr std::size_t kVelocitiesPerSite = 4;

double frac(double x) { return x - std::floor(x); }

void check_support(const InitialDataSpec& spec, const ConvexDomain& domain) {
  require(static_cast<bool>(spec.profile), "initial data needs a profile");
  require(spec.particle_count > 0, "particle count must be positive");
  if (!(spec.x_radius > 0.0) || !(spec.v_radius > 0.0)) {
    throw Error(ErrorCode::EmptySupport, "declared support radii must be positive");
  }
  require(static_cast<int>(spec.x_center.size()) == domain.dimension(), "support centre dimension does not match the domain");
  require(domain.dimension() == 2, "particle sampling is two-dimensional");
  for (int k = 0; k < 256; ++k) {
    const double th = 2.0 * kPi * k / 256;
    const Vec p = spec.x_center + spec.x_radius * vec2(std::cos(th), std::sin(th));
    require(domain.xi(p) <= kBoundaryTolerance, "declared spatial support leaves the domain");
  }
}

// Maps unit-square coordinates to a disk with equal-area cells.
Vec disk_point(const Vec& center, double radius, double u, double w) {
  const double r = radius * std::sqrt(u);
  const double th = 2.0 * kPi * w;
  return center + vec2(r * std::cos(th), r * std::sin(th));
}

double sup_difference(const FieldModel& a, const FieldModel& b) {
  const PoissonSolution* sa = a.solution();
  const PoissonSolution* sb = b.solution();
  require(sa && sb && sa->grid == sb->grid, "field difference needs solutions on one grid");
  double d = 0.0;
  for (std::size_t k = 0; k < sa->field_x.size(); ++k) {
    d = std::max(d, std::hypot(sa->field_x[k] - sb->field_x[k], sa->field_y[k] - sb->field_y[k]));
  }
  return d;
}

// Number of base steps in an interval; intervals must be whole multiples of the base step.
long long steps_in(double interval, double base_step, const char* what) {
  const long long m = std::llround(interval / base_step);
  require(m >= 1 && std::abs(static_cast<double>(m) * base_step - interval) <= 1e-9 * interval,
          fmt::format("{} {} is not a positive multiple of the base step {}", what, interval, base_step));
  return m;
}

}  // namespace

InitialDataSpec appendix_initial_data(std::size_t count, Sampling sampling, std::uint64_t seed, double v_radius) {
  InitialDataSpec spec;
  const Vec center = vec2(0.5, 0.0);
  const double radius = 0.5;
  const double cx = appendix_normalization(radius);
  const double cv = appendix_normalization(v_radius);
  const Vec zero = vec2(0, 0);
  spec.profile = [=](const Vec& x, const Vec& v) {
    return appendix_density(x, center, radius, cx) * appendix_density(v, zero, v_radius, cv);
  };
  spec.x_center = center;
  spec.x_radius = radius;
  spec.v_radius = v_radius;
  spec.particle_count = count;
  spec.sampling = sampling;
  spec.seed = seed;
  spec.name = "appendix";
  return spec;
}

InitialDataSpec uniform_initial_data(const Vec& center, double rx, double vmax, std::size_t count, Sampling sampling,
                                     std::uint64_t seed) {
  InitialDataSpec spec;
  const double value = 1.0 / (kPi * rx * rx * kPi * vmax * vmax);
  spec.profile = [=](const Vec& x, const Vec& v) {
    return ((x - center).norm() <= rx && v.norm() <= vmax) ? value : 0.0;
  };
  spec.x_center = center;
  spec.x_radius = rx;
  spec.v_radius = vmax;
  spec.particle_count = count;
  spec.sampling = sampling;
  spec.seed = seed;
  spec.name = "uniform";
  return spec;
}

double ParticleEnsemble::mass() const {
  double s = 0.0;
  for (double wi : w) s += wi;
  return s;
}

double ParticleEnsemble::f_linf() const {
  double m = 0.0;
  for (double f : f0) m = std::max(m, f);
  return m;
}

double ParticleEnsemble::kinetic_energy() const {
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += 0.5 * w[i] * v[i].squaredNorm();
  return s;
}

ParticleEnsemble init_ensemble(const InitialDataSpec& spec, const ConvexDomain& domain,
                               const FieldModel* flatness_field) {
  check_support(spec, domain);
  const std::size_t n = spec.particle_count;
  ParticleEnsemble ens;
  ens.flatness_delta0 = spec.flatness_delta0;
  ens.x.resize(n);
  ens.v.resize(n);
  ens.w.resize(n);
  ens.f0.resize(n);

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Vec vzero = vec2(0, 0);
  if (spec.sampling == Sampling::StratifiedGrid) {
    // Spatial sites on a Vogel spiral (equal-area, isotropic). Each site carries a few velocities, one per
    // equal-area speed shell, with the shell offset and direction varied from site to site. For a radial
    // velocity profile every site then carries nearly the same velocity mass, so the deposited density is
    // not modulated by velocity sampling noise.
    const double rot_x = unit(rng);
    const double rot_v = unit(rng);
    const std::size_t per_site = n >= 64 ? kVelocitiesPerSite : 1;
    const std::size_t sites = (n + per_site - 1) / per_site;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = k / per_site;
      const std::size_t j = k % per_site;
      const double di = static_cast<double>(i);
      const double u = (di + 0.5) / static_cast<double>(sites);
      ens.x[k] = disk_point(spec.x_center, spec.x_radius, u, frac(di * (1.0 - kGolden) + rot_x));
      const double offset = frac(radical_inverse(i + 1, 3) + rot_v);
      const double shell = j % 2 == 0 ? offset : 1.0 - offset;
      const double su = (static_cast<double>(j) + shell) / static_cast<double>(per_site);
      const double sw = frac(di * kSqrt2Frac + static_cast<double>(j) / static_cast<double>(per_site));
      ens.v[k] = disk_point(vzero, spec.v_radius, su, sw);
    }
  } else {
    const std::uint64_t skip = 1 + spec.seed % 4096;
    std::array<double, 4> shift{};
    for (double& s : shift) s = unit(rng);
    for (std::size_t k = 0; k < n; ++k) {
      auto p = halton_point<4>(skip + k);
      for (std::size_t d = 0; d < 4; ++d) p[d] = frac(p[d] + shift[d]);
      ens.x[k] = disk_point(spec.x_center, spec.x_radius, p[0], p[1]);
      ens.v[k] = disk_point(vzero, spec.v_radius, p[2], p[3]);
    }
  }

  const double cell = kPi * spec.x_radius * spec.x_radius * kPi * spec.v_radius * spec.v_radius / static_cast<double>(n);
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double f = spec.profile(ens.x[k], ens.v[k]);
    require(std::isfinite(f) && f >= 0.0, "profile must be finite and nonnegative");
    ens.f0[k] = f;
    ens.w[k] = f * cell;
    total += ens.w[k];
  }
  if (!(total > 0.0)) throw Error(ErrorCode::EmptySupport, "initial profile vanishes on every sample");
  for (double& wk : ens.w) wk /= total;

  if (spec.flatness_delta0 > 0.0) {
    const FieldModel zero = FieldModel::zero(domain.dimension());
    const FieldModel& field = flatness_field ? *flatness_field : zero;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
      if (!domain.in_collar(ens.x[k])) continue;
      if (kinetic_distance(domain, field, PhaseState{0.0, ens.x[k], ens.v[k]}) > spec.flatness_delta0) continue;
      lo = std::min(lo, ens.f0[k]);
      hi = std::max(hi, ens.f0[k]);
    }
    if (hi > lo && hi - lo > 1e-14 * std::max(1.0, hi)) {
      throw Error(ErrorCode::FlatnessViolated,
                  fmt::format("f0 ranges over [{:.6g}, {:.6g}] where alpha <= {}", lo, hi, spec.flatness_delta0));
    }
  }

  double q0 = spec.v_radius;
  for (std::size_t k = 0; k < n; ++k) {
    if (ens.w[k] > 0.0) q0 = std::max(q0, ens.v[k].norm());
  }
  ens.q_history.emplace_back(0.0, q0);
  return ens;
}

DensitySpec deposit_density(const ParticleEnsemble& ens, const PolarGrid& grid, double scale) {
  std::vector<double> acc(static_cast<std::size_t>(grid.node_count()), 0.0);
  for (std::size_t i = 0; i < ens.size(); ++i) {
    const auto s = grid.locate(ens.x[i][0], ens.x[i][1]);
    for (int k = 0; k < s.count; ++k) {
      acc[static_cast<std::size_t>(s.nodes[static_cast<std::size_t>(k)])] += ens.w[i] * s.weights[static_cast<std::size_t>(k)];
    }
  }
  const auto& measure = grid.node_measure();
  for (std::size_t n = 0; n < acc.size(); ++n) acc[n] = scale * acc[n] / measure[n];
  return DensitySpec::grid_sampled(grid, std::move(acc), DensitySpec::Kind::ParticleDeposited);
}

ParticleEnsemble linear_vlasov_solve(const ParticleEnsemble& ens, const ConvexDomain& domain,
                                     const FieldModel& field, double t_end, const KineticOptions& options) {
  require(t_end >= ens.t, "t_end precedes the ensemble time");
  ParticleEnsemble out = ens;
  if (domain.dimension() == 2) {
    const bool outgoing = field.outgoing_margin(domain) > 0.0;
    if (!outgoing && options.enforce_certificate) {
      throw Error(ErrorCode::InvalidArgument, "field is not outgoing on the boundary");
    }
    out.ledger.certificate_warning = out.ledger.certificate_warning || !outgoing;
  }
  std::vector<AdvanceOutcome> results(ens.size());
  parallel_for(ens.size(), options.workers, [&](std::size_t i) {
    results[i] = advance_state(domain, PhaseState{ens.t, ens.x[i], ens.v[i]}, field, t_end, options.flow);
  });
  double q = ens.q();
  std::size_t stalls = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    if (r.status == AdvanceStatus::StepLimit) {
      throw Error(ErrorCode::StepLimitExceeded, fmt::format("particle {} exceeded the step limit", i));
    }
    if (r.status == AdvanceStatus::GrazingStall) ++stalls;
    out.x[i] = r.state.x;
    out.v[i] = r.state.v;
    out.ledger.reflections += r.reflections;
    if (ens.w[i] > 0.0) q = std::max(q, r.max_speed);
  }
  out.ledger.grazing_stalls += stalls;
  if (stalls > 0 && ens.flatness_delta0 > 0.0) {
    throw Error(ErrorCode::GrazingStall,
                fmt::format("{} particles reached the grazing set although f0 is declared flat there", stalls));
  }
  out.t = t_end;
  out.q_history.emplace_back(t_end, q);
  return out;
}

FieldSolver::FieldSolver(FieldSolveConfig config) : config_(std::move(config)) {
  require(config_.coupling >= 0.0, "coupling must be nonnegative");
  if (config_.variant == FieldVariant::VP) linear_.emplace(config_.grid, config_.bc.kind);
}

PoissonSolution FieldSolver::solve(const DensitySpec& rho) const {
  if (config_.variant == FieldVariant::VP) return linear_->solve(rho, config_.bc);
  VpmeOptions opt;
  opt.method = config_.method;
  return vpme_poisson_solve(rho, config_.bc, config_.grid, opt);
}

PoissonSolution FieldSolver::solve(const ParticleEnsemble& ens) const {
  return solve(deposit_density(ens, config_.grid, config_.coupling));
}

PicardResult picard_iterate(const InitialDataSpec& spec, const ConvexDomain& domain, const PicardConfig& config) {
  return picard_iterate(init_ensemble(spec, domain), domain, config);
}

PicardResult picard_iterate(const ParticleEnsemble& initial, const ConvexDomain& domain, const PicardConfig& config) {
  require(domain.is_unit_disk(), "field solves run on the unit disk");
  require(config.iterations >= 1, "at least one Picard iteration is needed");
  const double h0 = config.kinetic.flow.base_step;
  const long long per_snapshot = steps_in(config.snapshot_dt, h0, "snapshot interval");
  const long long snapshots = std::llround(config.horizon / config.snapshot_dt);
  require(snapshots >= 1 && std::abs(static_cast<double>(snapshots) * config.snapshot_dt - config.horizon) <=
                                1e-9 * config.horizon,
          "horizon must be a whole number of snapshot intervals");

  PicardResult res;
  res.initial = initial;
  PicardState& st = res.state;
  for (long long k = 0; k <= snapshots; ++k) st.snapshot_times.push_back(static_cast<double>(k * per_snapshot) * h0);

  const FieldSolver solver(config.field);
  const FieldModel e0 = FieldModel::from_solution(solver.solve(initial));
  std::vector<FieldModel> prev(st.snapshot_times.size(), e0);
  for (int n = 1; n <= config.iterations; ++n) {
    ParticleEnsemble ens = initial;
    std::vector<FieldModel> cur;
    cur.reserve(prev.size());
    for (std::size_t k = 0; k < st.snapshot_times.size(); ++k) {
      if (k > 0) ens = linear_vlasov_solve(ens, domain, prev[k - 1], st.snapshot_times[k], config.kinetic);
      cur.push_back(FieldModel::from_solution(solver.solve(ens)));
    }
    double diff = 0.0;
    for (std::size_t k = 0; k < cur.size(); ++k) diff = std::max(diff, sup_difference(cur[k], prev[k]));
    if (!st.cauchy.empty() && !(diff < st.cauchy.back())) st.monotone = false;
    st.cauchy.push_back(diff);
    res.ensembles.push_back(std::move(ens));
    st.previous_fields = std::move(prev);
    prev = cur;
    st.fields = std::move(cur);
    st.n = n;
  }
  return res;
}

double raw_growth_ratio(double q_prev, double q, double dt) {
  if (!(q > 0.0)) return 0.0;
  return (q - q_prev) / (dt * std::pow(q, 8.0 / 11.0) * std::sqrt(std::log(std::numbers::e + q)));
}

std::vector<QSample> q_history(const ParticleEnsemble& ens) {
  require(!ens.q_history.empty(), "ensemble has no Q history");
  std::vector<QSample> out;
  double first = 0.0;
  for (std::size_t k = 0; k < ens.q_history.size(); ++k) {
    QSample s{ens.q_history[k].first, ens.q_history[k].second, 0.0};
    if (k > 0) {
      const double dt = s.t - ens.q_history[k - 1].first;
      const double raw = dt > 0.0 ? raw_growth_ratio(ens.q_history[k - 1].second, s.q, dt) : 0.0;
      if (first == 0.0 && raw != 0.0) first = raw;
      s.growth_ratio = first != 0.0 ? raw / first : 0.0;
    }
    out.push_back(s);
  }
  return out;
}

CoupledResult coupled_simulate(const InitialDataSpec& spec, const ConvexDomain& domain, const CoupledConfig& config) {
  return coupled_simulate(init_ensemble(spec, domain), domain, config);
}

CoupledResult coupled_simulate(ParticleEnsemble initial, const ConvexDomain& domain, const CoupledConfig& config) {
  require(domain.is_unit_disk(), "field solves run on the unit disk");
  const double h0 = config.kinetic.flow.base_step;
  const long long per_step = steps_in(config.dt, h0, "time step");
  const long long steps = std::llround(config.horizon / config.dt);
  require(steps >= 1 && std::abs(static_cast<double>(steps) * config.dt - config.horizon) <= 1e-9 * config.horizon,
          "horizon must be a whole number of time steps");

  CoupledResult res;
  const FieldSolver solver(config.field);
  const double coupling = config.field.coupling;
  ParticleEnsemble ens = std::move(initial);
  double first_ratio = 0.0;
  for (long long k = 0; k <= steps; ++k) {
    PoissonSolution sol = solver.solve(ens);
    LedgerRow row;
    row.t = ens.t;
    row.mass = ens.mass();
    row.f_linf = ens.f_linf();
    row.kinetic_energy = ens.kinetic_energy();
    row.field_energy = coupling > 0.0 ? sol.field_energy / coupling : 0.0;
    row.total_energy = row.kinetic_energy + row.field_energy;
    row.q = ens.q();
    if (k > 0) {
      const double raw = raw_growth_ratio(res.ledger.back().q, row.q, config.dt);
      if (first_ratio == 0.0 && raw != 0.0) first_ratio = raw;
      row.growth_ratio = first_ratio != 0.0 ? raw / first_ratio : 0.0;
    }
    res.max_growth_ratio = std::max(res.max_growth_ratio, std::abs(row.growth_ratio));
    res.ledger.push_back(row);
    for (double ts : config.snapshot_times) {
      if (std::abs(ts - ens.t) <= 1e-9) res.snapshots.push_back(ens);
    }
    if (k == steps) break;
    const FieldModel field = FieldModel::from_solution(std::move(sol));
    ens = linear_vlasov_solve(ens, domain, field, static_cast<double>((k + 1) * per_step) * h0, config.kinetic);
  }
  const double w0 = res.ledger.front().total_energy;
  for (const auto& row : res.ledger) {
    res.energy_drift = std::max(res.energy_drift, std::abs(row.total_energy - w0) / std::max(std::abs(w0), 1e-300));
  }
  res.final_ensemble = std::move(ens);
  return res;
}

}  // namespace vpbd
