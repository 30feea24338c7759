#include "vpbd/runner.hpp"

#include "vpbd/density.hpp"
#include "vpbd/field_model.hpp"
#include "vpbd/geometry.hpp"
#include "vpbd/green.hpp"
#include "vpbd/io.hpp"
#include "vpbd/kinetic.hpp"
#include "vpbd/poisson.hpp"

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <ctime>
#include <map>
#include <numbers>
#include <set>

namespace vpbd {

using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr double kPi = std::numbers::pi;

// Typed access to one config object; every key read is remembered so that
// finish() can reject the rest.
class Block {
 public:
  Block(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, fmt::format("'{}' must be an object", label()));
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  double number(const std::string& key, std::optional<double> fallback = std::nullopt) {
    const json* v = find(key, fallback.has_value());
    if (!v) return *fallback;
    if (!v->is_number()) throw ConfigError(child_path(key), fmt::format("'{}' must be a number", child_path(key)));
    const double d = v->get<double>();
    if (!std::isfinite(d)) throw ConfigError(child_path(key), fmt::format("'{}' must be finite", child_path(key)));
    return d;
  }

  double positive(const std::string& key, std::optional<double> fallback = std::nullopt) {
    const double d = number(key, fallback);
    if (!(d > 0.0)) throw ConfigError(child_path(key), fmt::format("'{}' must be positive", child_path(key)));
    return d;
  }

  std::int64_t integer(const std::string& key, std::optional<std::int64_t> fallback = std::nullopt,
                       std::int64_t min = std::numeric_limits<std::int64_t>::min()) {
    const json* v = find(key, fallback.has_value());
    if (!v) return *fallback;
    if (!v->is_number_integer()) throw ConfigError(child_path(key), fmt::format("'{}' must be an integer", child_path(key)));
    const auto i = v->get<std::int64_t>();
    if (i < min) throw ConfigError(child_path(key), fmt::format("'{}' must be at least {}", child_path(key), min));
    return i;
  }

  bool boolean(const std::string& key, bool fallback) {
    const json* v = find(key, true);
    if (!v) return fallback;
    if (!v->is_boolean()) throw ConfigError(child_path(key), fmt::format("'{}' must be true or false", child_path(key)));
    return v->get<bool>();
  }

  std::string choice(const std::string& key, const std::vector<std::string>& allowed,
                     std::optional<std::string> fallback = std::nullopt) {
    const json* v = find(key, fallback.has_value());
    if (!v) return *fallback;
    if (!v->is_string()) throw ConfigError(child_path(key), fmt::format("'{}' must be a string", child_path(key)));
    const auto s = v->get<std::string>();
    if (std::find(allowed.begin(), allowed.end(), s) == allowed.end()) {
      throw ConfigError(child_path(key),
                        fmt::format("'{}' must be one of {}, got '{}'", child_path(key), fmt::join(allowed, ", "), s));
    }
    return s;
  }

  std::vector<double> numbers(const std::string& key, std::optional<std::vector<double>> fallback = std::nullopt) {
    const json* v = find(key, fallback.has_value());
    if (!v) return *fallback;
    if (!v->is_array()) throw ConfigError(child_path(key), fmt::format("'{}' must be an array of numbers", child_path(key)));
    std::vector<double> out;
    for (const auto& e : *v) {
      if (!e.is_number()) throw ConfigError(child_path(key), fmt::format("'{}' must be an array of numbers", child_path(key)));
      out.push_back(e.get<double>());
    }
    return out;
  }

  Vec point(const std::string& key, std::optional<Vec> fallback = std::nullopt) {
    std::optional<std::vector<double>> fb;
    if (fallback) fb = std::vector<double>(fallback->data(), fallback->data() + fallback->size());
    const auto v = numbers(key, fb);
    if (v.size() != 2) throw ConfigError(child_path(key), fmt::format("'{}' must have two components", child_path(key)));
    return vec2(v[0], v[1]);
  }

  // Number or array of numbers.
  std::vector<double> scalar_or_array(const std::string& key) {
    const json* v = find(key, false);
    if (v->is_number()) return {v->get<double>()};
    return numbers(key);
  }

  std::optional<Block> child(const std::string& key) {
    const json* v = find(key, true);
    if (!v) return std::nullopt;
    return Block(*v, child_path(key));
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!used_.count(key)) throw ConfigError(child_path(key), fmt::format("unknown key '{}'", child_path(key)));
    }
  }

  void forbid(const std::string& key, const std::string& why) const {
    if (has(key)) throw ConfigError(child_path(key), fmt::format("key '{}' {}", child_path(key), why));
  }

  std::string child_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string label() const { return path_.empty() ? "config" : path_; }

  const json* find(const std::string& key, bool optional) {
    used_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) {
      if (optional) return nullptr;
      throw ConfigError(child_path(key), fmt::format("missing required key '{}'", child_path(key)));
    }
    return &*it;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

struct DomainConfig {
  std::string kind = "unit_disk";
  double a = 1.0;
  double b = 1.0;
  double collar = kDefaultCollarWidth;

  ConvexDomain build() const {
    return kind == "ellipse" ? ConvexDomain::ellipse(a, b, collar) : ConvexDomain::unit_disk(collar);
  }
};

struct DensityConfig {
  std::string kind = "appendix_bump";
  Vec center = vec2(0.5, 0.0);
  double radius = 0.5;
  double mass = 1.0;
  double value = 0.0;

  DensitySpec build() const {
    return kind == "constant" ? DensitySpec::constant(value) : DensitySpec::appendix_bump(center, radius, mass);
  }
};

struct SolverConfig {
  std::string variant = "vp";
  std::string boundary = "dirichlet";
  std::vector<double> h;
  int nr = 32;
  int ntheta = 64;
  std::string method = "damped_newton";
  double coupling = 1.0;
  bool split = false;
  std::optional<std::uint64_t> noise_seed;

  BoundaryCondition bc() const {
    return boundary == "neumann" ? BoundaryCondition::neumann(h) : BoundaryCondition::dirichlet();
  }
  VpmeMethod vpme_method() const {
    return method == "energy_descent" ? VpmeMethod::EnergyDescent : VpmeMethod::DampedNewton;
  }
  VpmeOptions vpme_options() const {
    VpmeOptions o;
    o.method = vpme_method();
    o.noise_seed = noise_seed;
    return o;
  }
  FieldSolveConfig field_solve() const {
    FieldSolveConfig c;
    c.variant = variant == "vpme" ? FieldVariant::VPME : FieldVariant::VP;
    c.bc = bc();
    c.grid = PolarGrid(nr, ntheta);
    c.method = vpme_method();
    c.coupling = coupling;
    return c;
  }
};

struct FieldConfig {
  std::string kind = "zero";
  Vec value = vec2(0, 0);
  double k = 0.0;
  DensityConfig bump;
};

struct TrajectoryConfig {
  Vec x;
  Vec v;
  double horizon = 1.0;
  std::optional<std::size_t> max_events;
};

struct InitialConfig {
  std::string kind = "appendix";
  std::size_t particles = 10000;
  std::string sampling = "stratified";
  Vec center = vec2(0.0, 0.0);
  double radius = 0.5;
  double v_radius = 0.5;
  double flatness_delta0 = 0.0;

  InitialDataSpec build(std::uint64_t seed) const {
    const Sampling s = sampling == "halton" ? Sampling::QuasiRandomHalton : Sampling::StratifiedGrid;
    InitialDataSpec spec = kind == "uniform" ? uniform_initial_data(center, radius, v_radius, particles, s, seed)
                                             : appendix_initial_data(particles, s, seed, v_radius);
    spec.flatness_delta0 = flatness_delta0;
    return spec;
  }
};

struct RunConfig {
  std::string command;
  std::uint64_t seed = 0;
  std::filesystem::path output = "out";
  bool plots = false;
  unsigned threads = 0;
  DomainConfig domain;
  FieldConfig field;
  std::optional<DensityConfig> density;
  SolverConfig solver;
  std::optional<TrajectoryConfig> trajectory;
  FlowOptions flow;
  std::optional<InitialConfig> initial;
  PicardConfig picard;
  CoupledConfig simulate;
  AppendixSettings appendix;
};

DensityConfig parse_density(Block b) {
  DensityConfig d;
  d.kind = b.choice("kind", {"appendix_bump", "constant"}, "appendix_bump");
  if (d.kind == "constant") {
    d.value = b.number("value");
  } else {
    d.center = b.point("center", vec2(0.5, 0.0));
    d.radius = b.positive("radius", 0.5);
    d.mass = b.number("mass", 1.0);
    if (d.center.norm() + d.radius > 1.0 + 1e-12) {
      throw ConfigError(b.child_path("radius"), "bump support must lie inside the unit disk");
    }
  }
  b.finish();
  return d;
}

SolverConfig parse_solver(Block b) {
  SolverConfig s;
  s.variant = b.choice("variant", {"vp", "vpme"}, "vp");
  if (auto bc = b.child("boundary")) {
    s.boundary = bc->choice("kind", {"dirichlet", "neumann"}, "dirichlet");
    if (s.boundary == "neumann") s.h = bc->scalar_or_array("h");
    bc->finish();
  }
  if (auto g = b.child("grid")) {
    s.nr = static_cast<int>(g->integer("nr", 32, 2));
    s.ntheta = static_cast<int>(g->integer("ntheta", 64, 4));
    g->finish();
  }
  if (s.boundary == "neumann" && s.h.size() != 1 && s.h.size() != static_cast<std::size_t>(s.ntheta)) {
    throw ConfigError(b.child_path("boundary.h"), "Neumann data needs one value or one value per boundary node");
  }
  s.method = b.choice("method", {"damped_newton", "energy_descent"}, "damped_newton");
  s.coupling = b.number("coupling", 1.0);
  if (s.coupling < 0.0) throw ConfigError(b.child_path("coupling"), "coupling must be nonnegative");
  s.split = b.boolean("split", false);
  if (b.has("noise_seed")) s.noise_seed = static_cast<std::uint64_t>(b.integer("noise_seed", 0, 0));
  b.finish();
  return s;
}

FlowOptions parse_flow(Block b) {
  FlowOptions f;
  f.base_step = b.positive("base_step", f.base_step);
  f.grazing_factor = b.positive("grazing_factor", f.grazing_factor);
  f.max_steps = static_cast<std::size_t>(b.integer("max_steps", static_cast<std::int64_t>(f.max_steps), 1));
  b.finish();
  return f;
}

RunConfig parse_config(const json& j) {
  Block root(j, "");
  RunConfig c;
  c.command = root.choice("command", {"trajectory", "field", "vpme_poisson", "picard", "simulate", "reproduce_appendix"});
  c.seed = static_cast<std::uint64_t>(root.integer("seed", 0, 0));
  if (root.has("output")) {
    const json& o = j.at("output");
    if (!o.is_string()) throw ConfigError("output", "'output' must be a string");
    c.output = o.get<std::string>();
  }
  root.child("output");
  c.plots = root.boolean("plots", false);
  c.threads = static_cast<unsigned>(root.integer("threads", 0, 0));

  // Blocks each command may carry.
  static const std::map<std::string, std::set<std::string>> allowed = {
      {"trajectory", {"domain", "field", "trajectory", "flow", "density", "solver"}},
      {"field", {"domain", "density", "solver"}},
      {"vpme_poisson", {"domain", "density", "solver"}},
      {"picard", {"domain", "initial_data", "solver", "picard", "flow"}},
      {"simulate", {"domain", "initial_data", "solver", "simulate", "flow"}},
      {"reproduce_appendix", {"appendix"}},
  };
  const auto& ok = allowed.at(c.command);
  for (const char* block : {"domain", "field", "trajectory", "flow", "density", "solver", "initial_data", "picard",
                            "simulate", "appendix"}) {
    if (!ok.count(block)) root.forbid(block, fmt::format("is not used by command '{}'", c.command));
  }

  if (auto d = root.child("domain")) {
    c.domain.kind = d->choice("kind", {"unit_disk", "ellipse"}, "unit_disk");
    if (c.domain.kind == "ellipse") {
      c.domain.a = d->positive("a");
      c.domain.b = d->positive("b");
    }
    c.domain.collar = d->positive("collar_width", kDefaultCollarWidth);
    d->finish();
  }
  if (auto f = root.child("field")) {
    c.field.kind = f->choice("kind", {"zero", "constant", "linear", "appendix", "poisson", "vpme"}, "zero");
    if (c.field.kind == "constant") c.field.value = f->point("value");
    if (c.field.kind == "linear") c.field.k = f->number("k");
    if (c.field.kind == "appendix") {
      c.field.bump.center = f->point("center", vec2(0.5, 0.0));
      c.field.bump.radius = f->positive("radius", 0.5);
      c.field.bump.mass = f->number("mass", 1.0);
      if (c.field.bump.center.norm() + c.field.bump.radius > 1.0 + 1e-12) {
        throw ConfigError("field.radius", "bump support must lie inside the unit disk");
      }
    }
    f->finish();
  }
  if (auto d = root.child("density")) c.density = parse_density(*d);
  if (auto s = root.child("solver")) c.solver = parse_solver(*s);
  if (auto f = root.child("flow")) c.flow = parse_flow(*f);
  if (auto t = root.child("trajectory")) {
    TrajectoryConfig tc;
    tc.x = t->point("x");
    tc.v = t->point("v");
    tc.horizon = t->number("horizon", 1.0);
    if (tc.horizon < 0.0) throw ConfigError("trajectory.horizon", "horizon must be nonnegative");
    if (t->has("max_events")) tc.max_events = static_cast<std::size_t>(t->integer("max_events", 0, 0));
    t->finish();
    c.trajectory = tc;
  }
  if (auto i = root.child("initial_data")) {
    InitialConfig ic;
    ic.kind = i->choice("kind", {"appendix", "uniform"}, "appendix");
    ic.particles = static_cast<std::size_t>(i->integer("particles", 10000, 1));
    ic.sampling = i->choice("sampling", {"stratified", "halton"}, "stratified");
    if (ic.kind == "uniform") {
      ic.center = i->point("center", vec2(0.0, 0.0));
      ic.radius = i->positive("radius", 0.5);
      ic.v_radius = i->positive("v_radius", 1.0);
    } else {
      ic.v_radius = i->positive("v_radius", 0.5);
    }
    ic.flatness_delta0 = i->number("flatness_delta0", 0.0);
    i->finish();
    c.initial = ic;
  }
  if (auto p = root.child("picard")) {
    c.picard.horizon = p->positive("horizon", 0.5);
    c.picard.iterations = static_cast<int>(p->integer("iterations", 5, 1));
    c.picard.snapshot_dt = p->positive("snapshot_dt", 0.05);
    p->finish();
  }
  if (auto s = root.child("simulate")) {
    c.simulate.horizon = s->positive("horizon", 2.0);
    c.simulate.dt = s->positive("dt", 1e-2);
    c.simulate.snapshot_times = s->numbers("snapshot_times", std::vector<double>{});
    for (double ts : c.simulate.snapshot_times) {
      const double k = ts / c.simulate.dt;
      if (ts < 0.0 || ts > c.simulate.horizon + 1e-12 || std::abs(k - std::round(k)) > 1e-9 * std::max(1.0, k)) {
        throw ConfigError("simulate.snapshot_times",
                          fmt::format("snapshot time {} is not a multiple of dt within the horizon", ts));
      }
    }
    s->finish();
  }
  if (auto a = root.child("appendix")) {
    c.appendix.fig2_speed = a->positive("fig2_speed", c.appendix.fig2_speed);
    c.appendix.fig2_horizon = a->positive("fig2_horizon", c.appendix.fig2_horizon);
    c.appendix.family_speed = a->positive("family_speed", c.appendix.family_speed);
    c.appendix.family_horizon = a->positive("family_horizon", c.appendix.family_horizon);
    c.appendix.grid_nr = static_cast<int>(a->integer("grid_nr", c.appendix.grid_nr, 2));
    c.appendix.grid_ntheta = static_cast<int>(a->integer("grid_ntheta", c.appendix.grid_ntheta, 4));
    a->finish();
  }
  root.finish();

  // Blocks a command cannot run without.
  auto need = [&](bool present, const char* block) {
    if (!present) throw ConfigError(block, fmt::format("command '{}' needs a '{}' block", c.command, block));
  };
  if (c.command == "trajectory") {
    need(c.trajectory.has_value(), "trajectory");
    if (c.field.kind == "poisson" || c.field.kind == "vpme") need(c.density.has_value(), "density");
  }
  if (c.command == "field" || c.command == "vpme_poisson") need(c.density.has_value(), "density");
  if (c.command == "picard" || c.command == "simulate") need(c.initial.has_value(), "initial_data");
  if (c.command == "picard") need(j.contains("picard"), "picard");
  if (c.command == "simulate") need(j.contains("simulate"), "simulate");
  const bool grid_solve = c.command == "field" || c.command == "vpme_poisson" || c.command == "picard" ||
                          c.command == "simulate" || c.field.kind == "poisson" || c.field.kind == "vpme";
  if (grid_solve && c.domain.kind != "unit_disk") {
    throw ConfigError("domain.kind", "grid field solves run on the unit disk only");
  }
  return c;
}

json field_report(const PoissonSolution& sol) {
  return {{"residual_linf", io::json_number(sol.residual_linf)},
          {"tolerance", io::json_number(sol.tolerance)},
          {"flux_shift", io::json_number(sol.flux_shift)},
          {"min_normal_field", io::json_number(sol.min_normal_field)},
          {"field_energy", io::json_number(sol.field_energy)},
          {"iterations", sol.iterations},
          {"boundary", sol.bc.name()},
          {"nonlinear", sol.nonlinear}};
}

std::string grid_csv(const PoissonSolution& sol) {
  io::Csv csv({"r", "theta", "x", "y", "U", "Ex", "Ey", "rho", "residual"});
  const PolarGrid& g = sol.grid;
  for (int n = 0; n < g.node_count(); ++n) {
    const auto k = static_cast<std::size_t>(n);
    const Vec p = g.position(n);
    csv.row({g.radius(g.ring_of(n)), g.theta(g.angle_of(n)), p[0], p[1], sol.potential[k], sol.field_x[k],
             sol.field_y[k], sol.density[k], sol.residual[k]});
  }
  return csv.str();
}

std::string ensemble_csv(const ParticleEnsemble& ens) {
  io::Csv csv({"x1", "x2", "v1", "v2", "w", "f0"});
  for (std::size_t i = 0; i < ens.size(); ++i) csv.row({ens.x[i][0], ens.x[i][1], ens.v[i][0], ens.v[i][1], ens.w[i], ens.f0[i]});
  return csv.str();
}

std::string alpha_csv(const Trajectory& traj, const ConvexDomain& domain) {
  io::Csv csv({"t", "alpha", "dist_to_boundary", "in_collar"});
  for (std::size_t i = 0; i < traj.samples.size(); ++i) {
    const auto& s = traj.samples[i];
    csv.row({s.t, traj.alpha[i], domain.distance_to_boundary(s.x), domain.in_collar(s.x) ? 1.0 : 0.0});
  }
  return csv.str();
}

json trajectory_report(const Trajectory& traj, const ConvexDomain& domain, const FieldModel& field, double t_end) {
  const auto vl = velocity_lemma_check(traj, domain, field);
  const auto bg = bounce_gap_check(traj, domain, field);
  const auto rc = count_reflections(traj, domain, field, traj.samples.front().t, t_end);
  const auto gi = grazing_isolation_check(traj, domain, field);
  double max_dist = 0.0;
  double min_dist = std::numeric_limits<double>::infinity();
  for (const auto& s : traj.samples) {
    max_dist = std::max(max_dist, domain.distance_to_boundary(s.x));
    min_dist = std::min(min_dist, domain.distance_to_boundary(s.x));
  }
  return {{"velocity_lemma",
           {{"fraction_ok", io::json_number(vl.fraction_ok)},
            {"worst_ratio", io::json_number(vl.worst_ratio)},
            {"checked", vl.checked},
            {"constant", io::json_number(vl.constants.velocity_lemma)}}},
          {"bounce_gap", {{"min_ratio", io::json_number(bg.min_ratio)}, {"gaps", bg.gaps.size()}}},
          {"reflections",
           {{"k", rc.k}, {"k_bound", io::json_number(rc.k_bound)}, {"c0", io::json_number(rc.c0)},
            {"c1", io::json_number(rc.c1)}, {"alpha_end", io::json_number(rc.alpha_end)}}},
          {"grazing_isolation",
           {{"alpha_start", io::json_number(gi.alpha_start)},
            {"min_collar_alpha", io::json_number(gi.min_collar_alpha)},
            {"envelope", io::json_number(gi.envelope)},
            {"holds", gi.holds}}},
          {"certificate", {{"outgoing_margin", io::json_number(traj.outgoing_margin)}, {"ok", traj.certificate_ok}}},
          {"alpha_initial", io::json_number(traj.alpha.front())},
          {"max_dist_to_boundary", io::json_number(max_dist)},
          {"min_dist_to_boundary", io::json_number(min_dist)},
          {"steps", traj.stats.steps},
          {"samples", traj.samples.size()}};
}

io::Series trajectory_path(const Trajectory& traj, const std::string& label) {
  io::Series s{label, {}, {}};
  for (const auto& p : traj.samples) {
    s.x.push_back(p.x[0]);
    s.y.push_back(p.x[1]);
  }
  return s;
}

io::Series alpha_series(const Trajectory& traj, const std::string& label) {
  io::Series s{label, {}, {}};
  for (std::size_t i = 0; i < traj.samples.size(); ++i) {
    s.x.push_back(traj.samples[i].t);
    s.y.push_back(traj.alpha[i]);
  }
  return s;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json base_manifest(const std::string& command, const json& config) {
  return {{"software", {{"name", "vpbd"}, {"version", kVersion}}},
          {"command", command},
          {"config", config},
          {"started_utc", utc_now()}};
}

json domain_constants(const ConvexDomain& domain) {
  return {{"C_Omega", io::json_number(domain.convexity_constant())},
          {"gradient_floor", io::json_number(domain.gradient_floor())},
          {"collar_width", io::json_number(domain.collar_width())}};
}

constexpr const char* kSplitRule = "h_singular = -mass/(2 pi); h_regular = h - h_singular";

FieldModel build_static_field(const RunConfig& c, json& constants) {
  const auto& f = c.field;
  if (f.kind == "constant") return FieldModel::constant(f.value);
  if (f.kind == "linear") return FieldModel::linear(f.k);
  if (f.kind == "appendix") {
    const auto rho = DensitySpec::appendix_bump(f.bump.center, f.bump.radius, f.bump.mass);
    constants["appendix_normalization"] = io::json_number(rho.bump().norm_const);
    return FieldModel::appendix(AppendixField(rho.bump()));
  }
  if (f.kind == "poisson" || f.kind == "vpme") {
    const DensitySpec rho = c.density->build();
    const PolarGrid grid(c.solver.nr, c.solver.ntheta);
    PoissonSolution sol = f.kind == "vpme" ? vpme_poisson_solve(rho, c.solver.bc(), grid, c.solver.vpme_options())
                                           : grid_poisson_solve(rho, c.solver.bc(), grid);
    return FieldModel::from_solution(std::move(sol));
  }
  return FieldModel::zero(2);
}

RunResult run_trajectory(const RunConfig& c, io::ArtifactWriter& out, json& manifest) {
  const ConvexDomain domain = c.domain.build();
  json constants = domain_constants(domain);
  const FieldModel field = build_static_field(c, constants);
  FlowOptions opt = c.flow;
  if (c.trajectory->max_events) opt.max_events = *c.trajectory->max_events;
  const Trajectory traj = advance(domain, PhaseState{0.0, c.trajectory->x, c.trajectory->v}, field,
                                  c.trajectory->horizon, opt);
  const json report = trajectory_report(traj, domain, field, traj.samples.back().t);
  out.write("trajectory.csv", trajectory_csv(traj));
  out.write("alpha.csv", alpha_csv(traj, domain));
  out.write("report.json", report.dump(2) + "\n");
  if (c.plots) {
    out.write("trajectory.svg", io::svg_plot({trajectory_path(traj, "")},
                                             {"trajectory", "x1", "x2", true, domain.is_unit_disk(), false}));
    out.write("alpha.svg", io::svg_plot({alpha_series(traj, "")}, {"kinetic distance", "t", "alpha"}));
  }
  const auto& vl = report["velocity_lemma"];
  constants["C0"] = vl["constant"];
  constants["C1"] = report["reflections"]["c1"];
  constants["field_sup"] = io::json_number(field.sup_norm());
  constants["field_lipschitz"] = io::json_number(field.lipschitz());
  manifest["constants"] = constants;
  return {out.dir(), out.names(), report};
}

RunResult run_field(const RunConfig& c, io::ArtifactWriter& out, json& manifest, bool nonlinear) {
  const DensitySpec rho = c.density->build();
  const PolarGrid grid(c.solver.nr, c.solver.ntheta);
  const BoundaryCondition bc = c.solver.bc();
  PoissonSolution sol;
  if (!nonlinear) {
    sol = grid_poisson_solve(rho, bc, grid);
  } else if (c.solver.split) {
    sol = vpme_split_solve(rho, bc, grid, c.solver.vpme_options());
  } else {
    sol = vpme_poisson_solve(rho, bc, grid, c.solver.vpme_options());
  }
  json report = field_report(sol);
  report["density_mass"] = io::json_number(rho.mass());
  double umax = 0.0;
  for (double u : sol.potential) umax = std::max(umax, std::abs(u));
  report["max_abs_potential"] = io::json_number(umax);

  json constants = domain_constants(ConvexDomain::unit_disk());
  const FieldModel model = FieldModel::from_solution(sol);
  constants["field_sup"] = io::json_number(model.sup_norm());
  constants["field_lipschitz"] = io::json_number(model.lipschitz());
  constants["field_bound_estimate"] = io::json_number(field_bound_estimate(rho, grid));
  if (rho.has_bump()) constants["appendix_normalization"] = io::json_number(rho.bump().norm_const);
  if (nonlinear && bc.is_neumann()) constants["h_split_rule"] = kSplitRule;

  if (!nonlinear && !bc.is_neumann() && rho.has_bump()) {
    const AppendixField exact(rho.bump());
    double diff = 0.0;
    for (int n = 0; n < grid.node_count(); ++n) {
      const Vec e = exact.field(grid.position(n));
      const auto k = static_cast<std::size_t>(n);
      diff = std::max(diff, std::hypot(sol.field_x[k] - e[0], sol.field_y[k] - e[1]));
    }
    report["closed_form_max_field_diff"] = io::json_number(diff);
  }

  const std::string stem = nonlinear ? "vpme" : "field";
  out.write(stem + "_grid.csv", grid_csv(sol));
  io::Csv flux({"theta", "E_n"});
  io::Series en{"E.n", {}, {}};
  for (int j = 0; j < grid.ntheta(); ++j) {
    const auto k = static_cast<std::size_t>(grid.index(grid.nr(), j));
    const double th = grid.theta(j);
    const double value = sol.field_x[k] * std::cos(th) + sol.field_y[k] * std::sin(th);
    flux.row({th, value});
    en.x.push_back(th);
    en.y.push_back(value);
  }
  out.write("boundary_flux.csv", flux.str());
  if (nonlinear) {
    io::Csv hist({"iteration", "energy"});
    for (std::size_t i = 0; i < sol.energy_history.size(); ++i) hist.row({static_cast<double>(i), sol.energy_history[i]});
    out.write("energy_history.csv", hist.str());
    if (sol.split) {
      io::Csv parts({"r", "theta", "U_regular", "U_singular"});
      for (int n = 0; n < grid.node_count(); ++n) {
        const auto k = static_cast<std::size_t>(n);
        parts.row({grid.radius(grid.ring_of(n)), grid.theta(grid.angle_of(n)), sol.split->regular[k], sol.split->singular[k]});
      }
      out.write("split_parts.csv", parts.str());
      report["split"] = {{"regular_residual", io::json_number(sol.split->regular_residual)},
                         {"singular_residual", io::json_number(sol.split->singular_residual)}};
    }
  }
  out.write("report.json", report.dump(2) + "\n");
  if (c.plots) out.write("boundary_flux.svg", io::svg_plot({en}, {"normal field on the boundary", "theta", "E.n"}));
  manifest["constants"] = constants;
  return {out.dir(), out.names(), report};
}

KineticOptions kinetic_options(const RunConfig& c) {
  KineticOptions k;
  k.flow = c.flow;
  k.workers = c.threads;
  return k;
}

RunResult run_picard(const RunConfig& c, io::ArtifactWriter& out, json& manifest) {
  const ConvexDomain domain = c.domain.build();
  PicardConfig pc = c.picard;
  pc.field = c.solver.field_solve();
  pc.kinetic = kinetic_options(c);
  const InitialDataSpec spec = c.initial->build(c.seed);
  const ParticleEnsemble init = init_ensemble(spec, domain);
  const PicardResult res = picard_iterate(init, domain, pc);

  io::Csv ledger({"n", "cauchy_sup_diff"});
  io::Series series{"sup |E^n - E^(n-1)|", {}, {}};
  for (std::size_t n = 0; n < res.state.cauchy.size(); ++n) {
    ledger.row({static_cast<double>(n + 1), res.state.cauchy[n]});
    series.x.push_back(static_cast<double>(n + 1));
    series.y.push_back(res.state.cauchy[n]);
  }
  out.write("picard_ledger.csv", ledger.str());
  out.write("ensemble_initial.csv", ensemble_csv(init));
  out.write("ensemble_final.csv", ensemble_csv(res.ensembles.back()));
  const auto& last = res.ensembles.back().ledger;
  json report = {{"monotone", res.state.monotone},
                 {"iterations", res.state.n},
                 {"cauchy", res.state.cauchy},
                 {"grazing_stalls", last.grazing_stalls},
                 {"reflections", last.reflections},
                 {"certificate_warning", last.certificate_warning},
                 {"mass", io::json_number(init.mass())}};
  if (!res.state.monotone) report["warning"] = "NonmonotoneCauchy";
  out.write("report.json", report.dump(2) + "\n");
  if (c.plots) out.write("picard.svg", io::svg_plot({series}, {"Picard differences", "n", "sup diff", false, false, true}));

  json constants = domain_constants(domain);
  constants["field_sup_initial"] = io::json_number(res.state.fields.front().sup_norm());
  if (c.initial->kind == "appendix") constants["appendix_normalization"] = io::json_number(appendix_normalization(0.5));
  manifest["constants"] = constants;
  return {out.dir(), out.names(), report};
}

RunResult run_simulate(const RunConfig& c, io::ArtifactWriter& out, json& manifest) {
  const ConvexDomain domain = c.domain.build();
  CoupledConfig cc = c.simulate;
  cc.field = c.solver.field_solve();
  cc.kinetic = kinetic_options(c);
  const InitialDataSpec spec = c.initial->build(c.seed);
  const CoupledResult res = coupled_simulate(init_ensemble(spec, domain), domain, cc);

  io::Csv ledger({"t", "mass", "f_linf", "kinetic_energy", "field_energy", "total_energy", "Q", "growth_ratio"});
  io::Series energy{"total energy", {}, {}}, q{"Q", {}, {}}, ratio{"growth ratio", {}, {}};
  for (const auto& r : res.ledger) {
    ledger.row({r.t, r.mass, r.f_linf, r.kinetic_energy, r.field_energy, r.total_energy, r.q, r.growth_ratio});
    energy.x.push_back(r.t);
    energy.y.push_back(r.total_energy);
    q.x.push_back(r.t);
    q.y.push_back(r.q);
    ratio.x.push_back(r.t);
    ratio.y.push_back(r.growth_ratio);
  }
  out.write("run_ledger.csv", ledger.str());
  for (const auto& snap : res.snapshots) out.write(fmt::format("ensemble_t{:g}.csv", snap.t), ensemble_csv(snap));
  const auto& led = res.final_ensemble.ledger;
  json report = {{"energy_drift", io::json_number(res.energy_drift)},
                 {"max_growth_ratio", io::json_number(res.max_growth_ratio)},
                 {"final_Q", io::json_number(res.final_ensemble.q())},
                 {"grazing_stalls", led.grazing_stalls},
                 {"reflections", led.reflections},
                 {"certificate_warning", led.certificate_warning},
                 {"steps", res.ledger.size() - 1}};
  out.write("report.json", report.dump(2) + "\n");
  if (c.plots) {
    out.write("energy.svg", io::svg_plot({energy}, {"total energy", "t", "W"}));
    out.write("q.svg", io::svg_plot({q, ratio}, {"velocity support and growth ratio", "t", "value"}));
  }
  json constants = domain_constants(domain);
  if (c.initial->kind == "appendix") constants["appendix_normalization"] = io::json_number(appendix_normalization(0.5));
  if (cc.field.bc.is_neumann() && cc.field.variant == FieldVariant::VPME) constants["h_split_rule"] = kSplitRule;
  manifest["constants"] = constants;
  return {out.dir(), out.names(), report};
}

RunResult write_appendix(const std::filesystem::path& dir, bool plots, const AppendixSettings& s, json manifest) {
  const auto start = std::chrono::steady_clock::now();
  io::ArtifactWriter out(dir);
  const ConvexDomain disk = ConvexDomain::unit_disk();
  const DensitySpec rho = DensitySpec::appendix_bump(vec2(0.5, 0.0), 0.5);
  const AppendixField exact(rho.bump());
  const FieldModel field = FieldModel::appendix(exact);

  // Figure 1: density, potential and field of the bump.
  const PolarGrid grid(s.grid_nr, s.grid_ntheta);
  const PoissonSolution sol = grid_poisson_solve(rho, BoundaryCondition::dirichlet(), grid);
  out.write("fig1_density_field.csv", grid_csv(sol));
  io::Csv boundary({"theta", "En_closed_form", "En_grid"});
  io::Series en_exact{"closed form", {}, {}}, en_grid{"grid", {}, {}};
  double min_en = std::numeric_limits<double>::infinity();
  for (int j = 0; j < 64; ++j) {
    const double th = 2.0 * kPi * j / 64;
    const Vec p = vec2(std::cos(th), std::sin(th));
    const double e_exact = exact.field(p).dot(p);
    const double e_grid = grid.interpolate(sol.field_x, p[0], p[1]) * p[0] + grid.interpolate(sol.field_y, p[0], p[1]) * p[1];
    boundary.row({th, e_exact, e_grid});
    en_exact.x.push_back(th);
    en_exact.y.push_back(e_exact);
    en_grid.x.push_back(th);
    en_grid.y.push_back(e_grid);
    min_en = std::min(min_en, e_exact);
  }
  out.write("fig1_boundary_field.csv", boundary.str());

  // Figures 2 and 3: one trajectory and its kinetic distance.
  const Vec launch = vec2(-0.2, 1.0);
  const Vec v2 = s.fig2_speed * launch / launch.norm();
  const Trajectory fig2 = advance(disk, PhaseState{0.0, vec2(-0.9, 0.0), v2}, field, s.fig2_horizon);
  out.write("fig2_trajectory.csv", trajectory_csv(fig2));
  out.write("fig3_alpha.csv", alpha_csv(fig2, disk));
  json fig2_report = trajectory_report(fig2, disk, field, s.fig2_horizon);
  bool sign_change = false;
  for (std::size_t i = 1; i < fig2.samples.size(); ++i) {
    if (fig2.samples[i].v[0] * fig2.samples[0].v[0] < 0.0) sign_change = true;
  }
  fig2_report["horizontal_velocity_sign_change"] = sign_change;

  // Figures 4 and 5: vertical launches at decreasing distance from the boundary.
  json family = json::array();
  std::vector<io::Series> paths, alphas;
  const auto& starts = appendix_family_starts();
  for (std::size_t k = 0; k < starts.size(); ++k) {
    const Trajectory t = advance(disk, PhaseState{0.0, vec2(starts[k], 0.0), vec2(0.0, s.family_speed)}, field,
                                 s.family_horizon);
    out.write(fmt::format("fig4_trajectory_{}.csv", k + 1), trajectory_csv(t));
    out.write(fmt::format("fig5_alpha_{}.csv", k + 1), alpha_csv(t, disk));
    json r = trajectory_report(t, disk, field, s.family_horizon);
    r["index"] = k + 1;
    r["start_x1"] = starts[k];
    r["stays_in_collar"] = r["max_dist_to_boundary"].get<double>() <= disk.collar_width();
    family.push_back(r);
    paths.push_back(trajectory_path(t, fmt::format("x1 = {}", starts[k])));
    alphas.push_back(alpha_series(t, fmt::format("x1 = {}", starts[k])));
  }
  bool alpha_decreasing = true;
  for (std::size_t k = 1; k < family.size(); ++k) {
    if (!(family[k]["alpha_initial"].get<double>() < family[k - 1]["alpha_initial"].get<double>())) alpha_decreasing = false;
  }

  json report = {{"fig1", {{"grid", {{"nr", grid.nr()}, {"ntheta", grid.ntheta()}}},
                           {"residual_linf", io::json_number(sol.residual_linf)},
                           {"min_boundary_normal_field", io::json_number(min_en)}}},
                 {"fig2", fig2_report},
                 {"family", family},
                 {"family_alpha_initial_decreasing", alpha_decreasing},
                 {"settings",
                  {{"fig2_speed", s.fig2_speed}, {"fig2_horizon", s.fig2_horizon},
                   {"family_speed", s.family_speed}, {"family_horizon", s.family_horizon}}}};
  out.write("appendix_report.json", report.dump(2) + "\n");

  if (plots) {
    io::Series density{"rho on x2 = 0", {}, {}};
    for (int i = 0; i <= 200; ++i) {
      const double x = -1.0 + 2.0 * i / 200;
      density.x.push_back(x);
      density.y.push_back(rho(vec2(x, 0.0)));
    }
    out.write("fig1_density.svg", io::svg_plot({density}, {"density along the x1 axis", "x1", "rho"}));
    out.write("fig1_boundary_field.svg", io::svg_plot({en_exact, en_grid}, {"E.n on the boundary", "theta", "E.n"}));
    out.write("fig2_trajectory.svg", io::svg_plot({trajectory_path(fig2, "")}, {"trajectory", "x1", "x2", true, true, false}));
    io::Series speed{"|V|", {}, {}};
    for (const auto& p : fig2.samples) {
      speed.x.push_back(p.t);
      speed.y.push_back(p.v.norm());
    }
    out.write("fig2_speed.svg", io::svg_plot({speed}, {"speed", "t", "|V|"}));
    out.write("fig3_alpha.svg", io::svg_plot({alpha_series(fig2, "")}, {"kinetic distance", "t", "alpha"}));
    out.write("fig4_trajectories.svg", io::svg_plot(paths, {"trajectories", "x1", "x2", true, true, false}));
    out.write("fig5_alpha.svg", io::svg_plot(alphas, {"kinetic distance", "t", "alpha"}));
  }

  json constants = domain_constants(disk);
  constants["appendix_normalization"] = io::json_number(rho.bump().norm_const);
  constants["field_sup"] = io::json_number(field.sup_norm());
  constants["field_lipschitz"] = io::json_number(field.lipschitz());
  constants["C0"] = fig2_report["velocity_lemma"]["constant"];
  constants["C1"] = fig2_report["reflections"]["c1"];
  manifest["constants"] = constants;
  manifest["appendix_settings"] = report["settings"];
  manifest["wall_clock_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.finish(std::move(manifest));
  return {out.dir(), out.names(), report};
}

}  // namespace

ConfigError::ConfigError(std::string key, const std::string& message, int line)
    : Error(ErrorCode::ConfigInvalid, message), key_(std::move(key)), line_(line) {}

nlohmann::json load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const Error&) {
    throw ConfigError("", fmt::format("cannot read config file {}", path.string()));
  }
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    int line = 1;
    for (std::size_t i = 0; i < std::min<std::size_t>(e.byte, text.size()); ++i) {
      if (text[i] == '\n') ++line;
    }
    throw ConfigError("", fmt::format("{}:{}: {}", path.string(), line, e.what()), line);
  }
}

RunResult run_config(const nlohmann::json& config, const RunOverrides& overrides) {
  RunConfig c = parse_config(config);
  if (overrides.seed) c.seed = *overrides.seed;
  if (overrides.out_dir) c.output = *overrides.out_dir;
  if (overrides.threads) c.threads = *overrides.threads;
  c.plots = c.plots || overrides.plots;

  json manifest = base_manifest(c.command, config);
  manifest["seed"] = c.seed;
  if (c.command == "reproduce_appendix") return write_appendix(c.output, c.plots, c.appendix, manifest);

  const auto start = std::chrono::steady_clock::now();
  io::ArtifactWriter out(c.output);
  RunResult result;
  if (c.command == "trajectory") result = run_trajectory(c, out, manifest);
  if (c.command == "field") result = run_field(c, out, manifest, false);
  if (c.command == "vpme_poisson") result = run_field(c, out, manifest, true);
  if (c.command == "picard") result = run_picard(c, out, manifest);
  if (c.command == "simulate") result = run_simulate(c, out, manifest);
  manifest["wall_clock_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.finish(std::move(manifest));
  return result;
}

RunResult reproduce_appendix(const std::filesystem::path& out_dir, bool plots, const AppendixSettings& settings) {
  const json config = {{"command", "reproduce_appendix"}};
  return write_appendix(out_dir, plots, settings, base_manifest("reproduce_appendix", config));
}

std::string trajectory_csv(const Trajectory& traj) {
  io::Csv csv({"t", "x1", "x2", "v1", "v2", "speed", "alpha", "event_flag"});
  for (std::size_t i = 0; i < traj.samples.size(); ++i) {
    const auto& s = traj.samples[i];
    const int ev = traj.sample_event[i];
    if (ev >= 0) {
      const auto& e = traj.events[static_cast<std::size_t>(ev)];
      csv.row({e.tau, e.x[0], e.x[1], e.v_pre[0], e.v_pre[1], e.v_pre.norm(), e.alpha_at_event, 1.0});
    }
    csv.row({s.t, s.x[0], s.x[1], s.v[0], s.v[1], s.v.norm(), traj.alpha[i], ev >= 0 ? 2.0 : 0.0});
  }
  return csv.str();
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigInvalid:
    case ErrorCode::InvalidArgument:
      return 2;
    case ErrorCode::IoFailure:
      return 4;
    default:
      return 3;
  }
}

nlohmann::json error_json(const Error& error) {
  json j = {{"error", std::string(to_string(error.code()))},
            {"message", error.what()},
            {"exit_code", exit_code_for(error.code())}};
  if (const auto* ce = dynamic_cast<const ConfigError*>(&error)) {
    if (!ce->key().empty()) j["key"] = ce->key();
    if (ce->line() > 0) j["line"] = ce->line();
  }
  return j;
}

}  // namespace vpbd
