#pragma once

#include "vpbd/density.hpp"
#include "vpbd/polar_grid.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace vpbd {

inline constexpr double kSolverTolerance = 1e-10;

enum class BoundaryKind { Dirichlet, Neumann };

struct BoundaryCondition {
  BoundaryKind kind = BoundaryKind::Dirichlet;
  // Neumann data d_n U at the boundary nodes; a single entry means constant.
  std::vector<double> h;

  static BoundaryCondition dirichlet() { return {}; }
  static BoundaryCondition neumann(double value) { return {BoundaryKind::Neumann, {value}}; }
  static BoundaryCondition neumann(std::vector<double> samples) {
    return {BoundaryKind::Neumann, std::move(samples)};
  }

  bool is_neumann() const { return kind == BoundaryKind::Neumann; }
  double flux(int j) const { return h.size() == 1 ? h[0] : h[static_cast<std::size_t>(j)]; }
  // Periodic trapezoid rule on the unit circle.
  double flux_integral(int ntheta) const;
  double abs_flux_integral(int ntheta) const;
  std::string name() const { return is_neumann() ? "neumann" : "dirichlet"; }
};

enum class VpmeMethod { DampedNewton, EnergyDescent };

struct VpmeOptions {
  VpmeMethod method = VpmeMethod::DampedNewton;
  // Start from uniform noise in [-noise_amplitude, noise_amplitude] when set.
  std::optional<std::uint64_t> noise_seed;
  double noise_amplitude = 1.0;
  int max_newton_iterations = 60;
  int max_descent_iterations = 20000;
};

struct SplitParts {
  std::vector<double> regular;   // solves  Lap U_reg = exp(U_sing + U_reg) - 1
  std::vector<double> singular;  // solves  Lap U_sing = -rho
  double regular_residual = 0;
  double singular_residual = 0;
  std::vector<double> h_regular;   // Neumann data of the regular part
  std::vector<double> h_singular;  // Neumann data of the singular part
};

struct PoissonSolution {
  PolarGrid grid{2, 4};
  BoundaryCondition bc;
  bool nonlinear = false;
  std::vector<double> potential;
  std::vector<double> field_x;
  std::vector<double> field_y;
  std::vector<double> density;
  std::vector<double> residual;
  double residual_linf = 0;
  // Achieved tolerance: max(kSolverTolerance, roundoff floor of the stencil).
  double tolerance = kSolverTolerance;
  // Constant added to the Neumann data to close the discrete compatibility gap.
  double flux_shift = 0;
  double min_normal_field = 0;  // min over boundary nodes of E.n
  int iterations = 0;
  std::vector<double> energy_history;
  double field_energy = 0;
  std::optional<SplitParts> split;
};

// Finite-volume Laplacian on a polar grid: symmetric stiffness K and control areas A,
// so that the discrete Laplacian is -(K u)/A plus boundary flux terms.
class PolarLaplacian {
 public:
  explicit PolarLaplacian(const PolarGrid& grid);

  const PolarGrid& grid() const { return grid_; }
  // y = K u over all nodes.
  std::vector<double> apply(const std::vector<double>& u) const;
  // Row sums of |K| weighted by |u|.
  std::vector<double> apply_abs(const std::vector<double>& u) const;

  struct Edge {
    int a;
    int b;
    double c;
  };
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<double>& area() const { return grid_.control_area(); }

 private:
  PolarGrid grid_;
  std::vector<Edge> edges_;
};

// Linear Poisson Lap U = -rho. Neumann data must satisfy int h = -mass to 1e-8.
PoissonSolution grid_poisson_solve(const DensitySpec& rho, const BoundaryCondition& bc, const PolarGrid& grid);
// Nonlinear Lap U = exp(U) - rho - 1 via minimisation of the discrete energy.
PoissonSolution vpme_poisson_solve(const DensitySpec& rho, const BoundaryCondition& bc, const PolarGrid& grid,
                                   const VpmeOptions& options = {});
// Same equation solved as singular linear part plus regular nonlinear part.
PoissonSolution vpme_split_solve(const DensitySpec& rho, const BoundaryCondition& bc, const PolarGrid& grid,
                                 const VpmeOptions& options = {});

// E = -grad U at the nodes.
void nodal_field(const PolarGrid& grid, const std::vector<double>& u, std::vector<double>& ex,
                 std::vector<double>& ey);

// Caches the factorisation for repeated linear solves on one grid and boundary kind.
class LinearPoissonSolver {
 public:
  LinearPoissonSolver(const PolarGrid& grid, BoundaryKind kind);
  ~LinearPoissonSolver();
  LinearPoissonSolver(LinearPoissonSolver&&) noexcept;
  LinearPoissonSolver& operator=(LinearPoissonSolver&&) noexcept;

  PoissonSolution solve(const DensitySpec& rho, const BoundaryCondition& bc) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace vpbd
