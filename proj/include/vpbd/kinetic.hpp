#pragma once

#include "vpbd/density.hpp"
#include "vpbd/field_model.hpp"
#include "vpbd/flow.hpp"
#include "vpbd/geometry.hpp"
#include "vpbd/poisson.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace vpbd {

enum class Sampling { StratifiedGrid, QuasiRandomHalton };

struct InitialDataSpec {
  std::function<double(const Vec& x, const Vec& v)> profile;
  // Declared support: |x - x_center| <= x_radius, |v| <= v_radius (= Q(0)).
  Vec x_center = vec2(0, 0);
  double x_radius = 0.5;
  double v_radius = 1.0;
  // f0 must be constant on collar states with alpha(0, x, v) <= flatness_delta0.
  double flatness_delta0 = 0.0;
  std::size_t particle_count = 1000;
  Sampling sampling = Sampling::StratifiedGrid;
  std::uint64_t seed = 0;
  std::string name = "custom";
};

// f0 = rho(x) b(|v|) with rho the unit-mass bump of radius 0.5 at (0.5, 0) and b the
// same bump shape in velocity with radius v_radius, normalised to unit mass.
InitialDataSpec appendix_initial_data(std::size_t count, Sampling sampling = Sampling::StratifiedGrid,
                                      std::uint64_t seed = 0, double v_radius = 0.5);
// Uniform f0 on {|x - c| <= rx} x {|v| <= vmax}.
InitialDataSpec uniform_initial_data(const Vec& center, double rx, double vmax, std::size_t count,
                                     Sampling sampling = Sampling::StratifiedGrid, std::uint64_t seed = 0);

struct EnsembleLedger {
  std::size_t grazing_stalls = 0;
  std::size_t reflections = 0;
  std::size_t flatness_violations = 0;
  bool certificate_warning = false;
};

struct ParticleEnsemble {
  std::vector<Vec> x;
  std::vector<Vec> v;
  std::vector<double> w;
  std::vector<double> f0;
  double t = 0;
  double flatness_delta0 = 0;
  std::vector<std::pair<double, double>> q_history;
  EnsembleLedger ledger;

  std::size_t size() const { return w.size(); }
  double mass() const;
  double f_linf() const;
  double kinetic_energy() const;
  double q() const { return q_history.empty() ? 0.0 : q_history.back().second; }
};

// Samples f0 over its declared support. The optional field enters the flatness check
// through alpha; the zero field is used when absent.
ParticleEnsemble init_ensemble(const InitialDataSpec& spec, const ConvexDomain& domain,
                               const FieldModel* flatness_field = nullptr);

// Cloud-in-cell deposition with the grid's bilinear hats, summed in particle order.
DensitySpec deposit_density(const ParticleEnsemble& ens, const PolarGrid& grid, double scale = 1.0);

struct KineticOptions {
  FlowOptions flow;
  unsigned workers = 0;  // 0 = hardware concurrency
  bool enforce_certificate = false;
};

// Advances every particle to t_end under a frozen field.
ParticleEnsemble linear_vlasov_solve(const ParticleEnsemble& ens, const ConvexDomain& domain,
                                     const FieldModel& field, double t_end, const KineticOptions& options = {});

enum class FieldVariant { VP, VPME };

struct FieldSolveConfig {
  FieldVariant variant = FieldVariant::VP;
  BoundaryCondition bc = BoundaryCondition::dirichlet();
  PolarGrid grid{32, 64};
  VpmeMethod method = VpmeMethod::DampedNewton;
  // rho = coupling * deposited density.
  double coupling = 1.0;
};

class FieldSolver {
 public:
  explicit FieldSolver(FieldSolveConfig config);
  PoissonSolution solve(const DensitySpec& rho) const;
  PoissonSolution solve(const ParticleEnsemble& ens) const;
  const FieldSolveConfig& config() const { return config_; }

 private:
  FieldSolveConfig config_;
  std::optional<LinearPoissonSolver> linear_;
};

struct PicardConfig {
  double horizon = 0.5;
  int iterations = 5;
  double snapshot_dt = 0.05;
  FieldSolveConfig field;
  KineticOptions kinetic;
};

struct PicardState {
  int n = 0;
  std::vector<double> snapshot_times;
  std::vector<FieldModel> fields;           // E^n at the snapshot times
  std::vector<FieldModel> previous_fields;  // E^{n-1}
  std::vector<double> cauchy;               // sup |E^n - E^{n-1}|, n = 1, 2, ...
  bool monotone = true;
};

struct PicardResult {
  PicardState state;
  ParticleEnsemble initial;
  std::vector<ParticleEnsemble> ensembles;  // f^n at the horizon
};

PicardResult picard_iterate(const InitialDataSpec& spec, const ConvexDomain& domain, const PicardConfig& config);
PicardResult picard_iterate(const ParticleEnsemble& initial, const ConvexDomain& domain, const PicardConfig& config);

struct CoupledConfig {
  double horizon = 2.0;
  double dt = 1e-2;
  FieldSolveConfig field;
  KineticOptions kinetic;
  std::vector<double> snapshot_times;
};

struct LedgerRow {
  double t = 0;
  double mass = 0;
  double f_linf = 0;
  double kinetic_energy = 0;
  double field_energy = 0;
  double total_energy = 0;
  double q = 0;
  double growth_ratio = 0;
};

struct CoupledResult {
  std::vector<LedgerRow> ledger;
  ParticleEnsemble final_ensemble;
  std::vector<ParticleEnsemble> snapshots;
  double energy_drift = 0;
  double max_growth_ratio = 0;
};

CoupledResult coupled_simulate(const InitialDataSpec& spec, const ConvexDomain& domain, const CoupledConfig& config);
CoupledResult coupled_simulate(ParticleEnsemble initial, const ConvexDomain& domain, const CoupledConfig& config);

struct QSample {
  double t = 0;
  double q = 0;
  double growth_ratio = 0;
};

// [Q(t) - Q(t - dt)] / (dt Q^{8/11} ln^{1/2}(e + Q)) before normalisation.
double raw_growth_ratio(double q_prev, double q, double dt);
std::vector<QSample> q_history(const ParticleEnsemble& ens);

}  // namespace vpbd
