#include "vpbd/poisson.hpp"

#include "vpbd/error.hpp"

#include <Eigen/Sparse>
#include <fmt/format.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace vpbd {

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Factor = Eigen::SimplicialLDLT<SpMat>;
constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kFloorFactor = 16.0;
constexpr double kNeumannCompatibility = 1e-8;

// e^x - 1 - x without cancellation for small x.
double exp_remainder(double x) {
  if (std::abs(x) < 0.1) {
    double term = x * x / 2.0;
    double sum = term;
    for (int k = 3; k < 12; ++k) {
      term *= x / k;
      sum += term;
    }
    return sum;
  }
  return std::expm1(x) - x;
}

struct FreeMap {
  std::vector<int> index;  // node -> unknown, -1 if fixed
  std::vector<int> nodes;  // unknown -> node
};

FreeMap make_free_map(const PolarGrid& grid, BoundaryKind kind, bool pin_pole) {
  FreeMap m;
  m.index.assign(static_cast<std::size_t>(grid.node_count()), -1);
  for (int n = 0; n < grid.node_count(); ++n) {
    const bool fixed = (kind == BoundaryKind::Dirichlet && grid.ring_of(n) == grid.nr()) || (pin_pole && n == 0);
    if (fixed) continue;
    m.index[static_cast<std::size_t>(n)] = static_cast<int>(m.nodes.size());
    m.nodes.push_back(n);
  }
  return m;
}

SpMat restricted_matrix(const PolarLaplacian& lap, const FreeMap& m, const std::vector<double>& diag_add) {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(lap.edges().size() * 4 + m.nodes.size());
  for (const auto& e : lap.edges()) {
    const int fa = m.index[static_cast<std::size_t>(e.a)];
    const int fb = m.index[static_cast<std::size_t>(e.b)];
    if (fa >= 0) trips.emplace_back(fa, fa, e.c);
    if (fb >= 0) trips.emplace_back(fb, fb, e.c);
    if (fa >= 0 && fb >= 0) {
      trips.emplace_back(fa, fb, -e.c);
      trips.emplace_back(fb, fa, -e.c);
    }
  }
  for (std::size_t k = 0; k < diag_add.size(); ++k) {
    if (diag_add[k] != 0.0) trips.emplace_back(static_cast<int>(k), static_cast<int>(k), diag_add[k]);
  }
  const int nf = static_cast<int>(m.nodes.size());
  SpMat mat(nf, nf);
  mat.setFromTriplets(trips.begin(), trips.end());
  return mat;
}

std::vector<double> boundary_flux_vector(const PolarGrid& grid, const BoundaryCondition& bc) {
  std::vector<double> beta(static_cast<std::size_t>(grid.node_count()), 0.0);
  if (!bc.is_neumann()) return beta;
  for (int j = 0; j < grid.ntheta(); ++j) {
    beta[static_cast<std::size_t>(grid.index(grid.nr(), j))] = grid.dtheta() * bc.flux(j);
  }
  return beta;
}

void check_boundary_data(const PolarGrid& grid, const BoundaryCondition& bc) {
  if (!bc.is_neumann()) return;
  require(bc.h.size() == 1 || static_cast<int>(bc.h.size()) == grid.ntheta(),
          fmt::format("Neumann data needs 1 or {} samples, got {}", grid.ntheta(), bc.h.size()));
  for (double v : bc.h) require(std::isfinite(v), "Neumann data must be finite");
}

// Residual of  -(K u)/A + beta/A = rhs  at PDE rows; U itself at Dirichlet rows.
struct ResidualReport {
  std::vector<double> residual;
  double linf = 0;
  double floor = 0;
};

ResidualReport residual_of(const PolarLaplacian& lap, BoundaryKind kind, const std::vector<double>& u,
                           const std::vector<double>& beta, const std::vector<double>& rhs,
                           const std::vector<double>& rhs_scale) {
  const PolarGrid& grid = lap.grid();
  const auto& area = lap.area();
  const auto ku = lap.apply(u);
  const auto kabs = lap.apply_abs(u);
  ResidualReport rep;
  rep.residual.assign(u.size(), 0.0);
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (kind == BoundaryKind::Dirichlet && grid.ring_of(static_cast<int>(i)) == grid.nr()) {
      rep.residual[i] = u[i];
    } else {
      rep.residual[i] = (-ku[i] + beta[i]) / area[i] - rhs[i];
      const double scale = (kabs[i] + std::abs(beta[i])) / area[i] + rhs_scale[i];
      rep.floor = std::max(rep.floor, kFloorFactor * kEps * scale);
    }
    rep.linf = std::max(rep.linf, std::abs(rep.residual[i]));
  }
  return rep;
}

void finish_solution(PoissonSolution& sol, const PolarLaplacian& lap) {
  const PolarGrid& grid = sol.grid;
  nodal_field(grid, sol.potential, sol.field_x, sol.field_y);
  double min_normal = std::numeric_limits<double>::infinity();
  for (int j = 0; j < grid.ntheta(); ++j) {
    const auto k = static_cast<std::size_t>(grid.index(grid.nr(), j));
    const double th = grid.theta(j);
    min_normal = std::min(min_normal, sol.field_x[k] * std::cos(th) + sol.field_y[k] * std::sin(th));
  }
  sol.min_normal_field = min_normal;
  const auto ku = lap.apply(sol.potential);
  double energy = 0.0;
  for (std::size_t i = 0; i < ku.size(); ++i) energy += 0.5 * sol.potential[i] * ku[i];
  if (sol.nonlinear) {
    const auto& area = lap.area();
    for (std::size_t i = 0; i < ku.size(); ++i) {
      const double u = sol.potential[i];
      energy += area[i] * (u * std::exp(u) - std::exp(u) + 1.0);
    }
  }
  sol.field_energy = energy;
}

// Minimiser of  J(p) = 1/2 p.K p + sum A (e^{b+p} - (1+s) p) - beta.p  over free nodes.
struct NonlinearProblem {
  const PolarLaplacian* lap;
  BoundaryKind kind;
  std::vector<double> background;
  std::vector<double> source;
  std::vector<double> beta;
};

struct NonlinearResult {
  std::vector<double> u;
  int iterations = 0;
  std::vector<double> energy_history;
  ResidualReport report;
  double tolerance = kSolverTolerance;
};

class NonlinearSolver {
 public:
  explicit NonlinearSolver(NonlinearProblem p)
      : p_(std::move(p)), map_(make_free_map(p_.lap->grid(), p_.kind, false)) {}

  NonlinearResult solve(std::vector<double> u, const VpmeOptions& opt) {
    return opt.method == VpmeMethod::DampedNewton ? newton(std::move(u), opt) : descent(std::move(u), opt);
  }

 private:
  const std::vector<double>& area() const { return p_.lap->area(); }

  std::vector<double> gradient(const std::vector<double>& u) const {
    auto g = p_.lap->apply(u);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (map_.index[i] < 0) {
        g[i] = 0.0;
        continue;
      }
      g[i] += area()[i] * (std::exp(p_.background[i] + u[i]) - 1.0 - p_.source[i]) - p_.beta[i];
    }
    return g;
  }

  double energy(const std::vector<double>& u) const {
    const auto ku = p_.lap->apply(u);
    double e = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      if (map_.index[i] < 0) continue;
      e += 0.5 * u[i] * ku[i] + area()[i] * (std::exp(p_.background[i] + u[i]) - (1.0 + p_.source[i]) * u[i]) -
           p_.beta[i] * u[i];
    }
    return e;
  }

  // J(u + t d) - J(u), evaluated from its exact expansion to avoid cancellation.
  double energy_change(const std::vector<double>& u, const std::vector<double>& g,
                       const std::vector<double>& d, const std::vector<double>& kd, double t) const {
    double lin = 0.0;
    double quad = 0.0;
    double rem = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      if (map_.index[i] < 0) continue;
      lin += g[i] * d[i];
      quad += d[i] * kd[i];
      rem += area()[i] * std::exp(p_.background[i] + u[i]) * exp_remainder(t * d[i]);
    }
    return t * lin + 0.5 * t * t * quad + rem;
  }

  ResidualReport residual(const std::vector<double>& u) const {
    std::vector<double> rhs(u.size());
    std::vector<double> scale(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
      const double e = std::exp(p_.background[i] + u[i]);
      rhs[i] = e - 1.0 - p_.source[i];
      scale[i] = e + 1.0 + std::abs(p_.source[i]);
    }
    return residual_of(*p_.lap, p_.kind, u, p_.beta, rhs, scale);
  }

  std::vector<double> hessian_diag(const std::vector<double>& u, bool preconditioner) const {
    std::vector<double> diag(map_.nodes.size());
    for (std::size_t k = 0; k < map_.nodes.size(); ++k) {
      const auto i = static_cast<std::size_t>(map_.nodes[k]);
      diag[k] = area()[i] * (preconditioner ? 1.0 : std::exp(p_.background[i] + u[i]));
    }
    return diag;
  }

  Eigen::VectorXd restrict(const std::vector<double>& v) const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(map_.nodes.size()));
    for (std::size_t k = 0; k < map_.nodes.size(); ++k) out[static_cast<Eigen::Index>(k)] = v[static_cast<std::size_t>(map_.nodes[k])];
    return out;
  }

  std::vector<double> extend(const Eigen::VectorXd& v) const {
    std::vector<double> out(map_.index.size(), 0.0);
    for (std::size_t k = 0; k < map_.nodes.size(); ++k) out[static_cast<std::size_t>(map_.nodes[k])] = v[static_cast<Eigen::Index>(k)];
    return out;
  }

  NonlinearResult newton(std::vector<double> u, const VpmeOptions& opt) {
    NonlinearResult res;
    double j = energy(u);
    res.energy_history.push_back(j);
    Factor factor;
    bool analysed = false;
    for (int it = 0;; ++it) {
      res.report = residual(u);
      res.tolerance = std::max(kSolverTolerance, res.report.floor);
      if (res.report.linf <= res.tolerance) break;
      if (it >= opt.max_newton_iterations) {
        throw Error(ErrorCode::SolverDivergence,
                    fmt::format("Newton did not converge in {} steps (residual {:.3e}, energy {:.12g})", it,
                                res.report.linf, j));
      }
      const SpMat h = restricted_matrix(*p_.lap, map_, hessian_diag(u, false));
      if (!analysed) {
        factor.analyzePattern(h);
        analysed = true;
      }
      factor.factorize(h);
      if (factor.info() != Eigen::Success) throw Error(ErrorCode::SolverDivergence, "Hessian factorisation failed");
      const auto g = gradient(u);
      const auto d = extend(-factor.solve(restrict(g)));
      const auto kd = p_.lap->apply(d);
      double slope = 0.0;
      for (std::size_t i = 0; i < d.size(); ++i) slope += g[i] * d[i];
      double t = 1.0;
      double change = energy_change(u, g, d, kd, t);
      int halvings = 0;
      while (!(change <= 1e-4 * t * slope)) {
        if (++halvings > 30) {
          throw Error(ErrorCode::SolverDivergence,
                      fmt::format("line search failed at Newton step {} (residual {:.3e}, energy {:.12g})", it,
                                  res.report.linf, j));
        }
        t *= 0.5;
        change = energy_change(u, g, d, kd, t);
      }
      for (std::size_t i = 0; i < u.size(); ++i) u[i] += t * d[i];
      j += change;
      res.energy_history.push_back(j);
      res.iterations = it + 1;
    }
    res.u = std::move(u);
    return res;
  }

  // Largest eigenvalue of P^{-1} H by power iteration (10 steps).
  double spectral_bound(const Factor& pre, const std::vector<double>& u) const {
    const auto hdiag = hessian_diag(u, false);
    const auto pdiag = hessian_diag(u, true);
    Eigen::VectorXd v(static_cast<Eigen::Index>(map_.nodes.size()));
    for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = 1.0 + 0.5 * std::sin(static_cast<double>(k));
    double lambda = 1.0;
    for (int it = 0; it < 10; ++it) {
      const auto full = extend(v);
      const Eigen::VectorXd kv = restrict(p_.lap->apply(full));
      Eigen::VectorXd hv = kv;
      Eigen::VectorXd pv = kv;
      for (Eigen::Index k = 0; k < v.size(); ++k) {
        hv[k] += hdiag[static_cast<std::size_t>(k)] * v[k];
        pv[k] += pdiag[static_cast<std::size_t>(k)] * v[k];
      }
      lambda = v.dot(hv) / v.dot(pv);
      v = pre.solve(hv);
      v /= v.norm();
    }
    return lambda;
  }

  NonlinearResult descent(std::vector<double> u, const VpmeOptions& opt) {
    NonlinearResult res;
    const SpMat p = restricted_matrix(*p_.lap, map_, hessian_diag(u, true));
    Factor pre(p);
    if (pre.info() != Eigen::Success) throw Error(ErrorCode::SolverDivergence, "preconditioner factorisation failed");
    double j = energy(u);
    res.energy_history.push_back(j);
    double step = 1.0 / spectral_bound(pre, u);
    for (int it = 0;; ++it) {
      res.report = residual(u);
      res.tolerance = std::max(kSolverTolerance, res.report.floor);
      if (res.report.linf <= res.tolerance) break;
      if (it >= opt.max_descent_iterations) {
        throw Error(ErrorCode::SolverDivergence,
                    fmt::format("energy descent did not converge in {} steps (residual {:.3e}, energy {:.12g})", it,
                                res.report.linf, j));
      }
      if (it > 0 && it % 25 == 0) step = 1.0 / spectral_bound(pre, u);
      const auto g = gradient(u);
      const auto d = extend(-pre.solve(restrict(g)));
      const auto kd = p_.lap->apply(d);
      double t = step;
      double change = energy_change(u, g, d, kd, t);
      int halvings = 0;
      while (!(change <= 0.0)) {
        if (++halvings > 30) {
          throw Error(ErrorCode::SolverDivergence,
                      fmt::format("energy descent stalled at step {} (residual {:.3e}, energy {:.12g})", it,
                                  res.report.linf, j));
        }
        t *= 0.5;
        change = energy_change(u, g, d, kd, t);
      }
      for (std::size_t i = 0; i < u.size(); ++i) u[i] += t * d[i];
      j += change;
      res.energy_history.push_back(j);
      res.iterations = it + 1;
    }
    res.u = std::move(u);
    return res;
  }

  NonlinearProblem p_;
  FreeMap map_;
};

std::vector<double> initial_guess(const PolarGrid& grid, BoundaryKind kind, const VpmeOptions& opt) {
  std::vector<double> u(static_cast<std::size_t>(grid.node_count()), 0.0);
  if (!opt.noise_seed) return u;
  std::mt19937_64 rng(*opt.noise_seed);
  std::uniform_real_distribution<double> dist(-opt.noise_amplitude, opt.noise_amplitude);
  for (int n = 0; n < grid.node_count(); ++n) {
    const double value = dist(rng);
    if (kind == BoundaryKind::Dirichlet && grid.ring_of(n) == grid.nr()) continue;
    u[static_cast<std::size_t>(n)] = value;
  }
  return u;
}

void check_vpme_neumann(const DensitySpec& rho, const BoundaryCondition& bc, const PolarGrid& grid) {
  if (!bc.is_neumann()) return;
  for (double v : bc.h) {
    if (!(v < 0.0)) {
      throw Error(ErrorCode::NeumannConditionViolated, fmt::format("Neumann data must be negative, found {}", v));
    }
  }
  const double total = bc.abs_flux_integral(grid.ntheta());
  const double limit = rho.mass() + std::numbers::pi;
  if (!(total < limit)) {
    throw Error(ErrorCode::NeumannConditionViolated,
                fmt::format("boundary integral of |h| = {:.12g} must be below mass + |domain| = {:.12g}", total, limit));
  }
}

PoissonSolution nonlinear_solution(const PolarLaplacian& lap, const BoundaryCondition& bc,
                                   const std::vector<double>& rho_nodes, std::vector<double> u) {
  PoissonSolution sol;
  sol.grid = lap.grid();
  sol.bc = bc;
  sol.nonlinear = true;
  sol.density = rho_nodes;
  sol.potential = std::move(u);
  std::vector<double> rhs(rho_nodes.size());
  std::vector<double> scale(rho_nodes.size());
  for (std::size_t i = 0; i < rhs.size(); ++i) {
    const double e = std::exp(sol.potential[i]);
    rhs[i] = e - 1.0 - rho_nodes[i];
    scale[i] = e + 1.0 + rho_nodes[i];
  }
  const auto rep = residual_of(lap, bc.kind, sol.potential, boundary_flux_vector(lap.grid(), bc), rhs, scale);
  sol.residual = rep.residual;
  sol.residual_linf = rep.linf;
  sol.tolerance = std::max(kSolverTolerance, rep.floor);
  finish_solution(sol, lap);
  return sol;
}

}  // namespace

double BoundaryCondition::flux_integral(int ntheta) const {
  const double dt = 2.0 * std::numbers::pi / ntheta;
  double s = 0.0;
  for (int j = 0; j < ntheta; ++j) s += flux(j);
  return dt * s;
}

double BoundaryCondition::abs_flux_integral(int ntheta) const {
  const double dt = 2.0 * std::numbers::pi / ntheta;
  double s = 0.0;
  for (int j = 0; j < ntheta; ++j) s += std::abs(flux(j));
  return dt * s;
}

PolarLaplacian::PolarLaplacian(const PolarGrid& grid) : grid_(grid) {
  const int nr = grid.nr();
  const int nt = grid.ntheta();
  const double h = grid.dr();
  const double dt = grid.dtheta();
  for (int j = 0; j < nt; ++j) edges_.push_back({0, grid.index(1, j), 0.5 * dt});
  for (int i = 1; i < nr; ++i) {
    for (int j = 0; j < nt; ++j) edges_.push_back({grid.index(i, j), grid.index(i + 1, j), (i + 0.5) * dt});
  }
  for (int i = 1; i <= nr; ++i) {
    const double extent = i == nr ? 0.5 * h : h;
    const double c = extent / (grid.radius(i) * dt);
    for (int j = 0; j < nt; ++j) edges_.push_back({grid.index(i, j), grid.index(i, j + 1), c});
  }
}

std::vector<double> PolarLaplacian::apply(const std::vector<double>& u) const {
  std::vector<double> y(u.size(), 0.0);
  for (const auto& e : edges_) {
    const double f = e.c * (u[static_cast<std::size_t>(e.a)] - u[static_cast<std::size_t>(e.b)]);
    y[static_cast<std::size_t>(e.a)] += f;
    y[static_cast<std::size_t>(e.b)] -= f;
  }
  return y;
}

std::vector<double> PolarLaplacian::apply_abs(const std::vector<double>& u) const {
  std::vector<double> y(u.size(), 0.0);
  for (const auto& e : edges_) {
    const double f = e.c * (std::abs(u[static_cast<std::size_t>(e.a)]) + std::abs(u[static_cast<std::size_t>(e.b)]));
    y[static_cast<std::size_t>(e.a)] += f;
    y[static_cast<std::size_t>(e.b)] += f;
  }
  return y;
}

void nodal_field(const PolarGrid& grid, const std::vector<double>& u, std::vector<double>& ex,
                 std::vector<double>& ey) {
  const int nr = grid.nr();
  const int nt = grid.ntheta();
  const double h = grid.dr();
  const double dt = grid.dtheta();
  ex.assign(u.size(), 0.0);
  ey.assign(u.size(), 0.0);
  auto at = [&](int ring, int j) { return u[static_cast<std::size_t>(grid.index(ring, j))]; };
  for (int i = 1; i <= nr; ++i) {
    const double r = grid.radius(i);
    for (int j = 0; j < nt; ++j) {
      double dudr = 0.0;
      if (i < nr) {
        dudr = (at(i + 1, j) - at(i - 1, j)) / (2.0 * h);
      } else {
        dudr = (3.0 * at(i, j) - 4.0 * at(i - 1, j) + at(i - 2, j)) / (2.0 * h);
      }
      const double dudt = (at(i, j + 1) - at(i, j - 1)) / (2.0 * dt);
      const double th = grid.theta(j);
      const double c = std::cos(th);
      const double s = std::sin(th);
      const double er = -dudr;
      const double et = -dudt / r;
      const auto k = static_cast<std::size_t>(grid.index(i, j));
      ex[k] = er * c - et * s;
      ey[k] = er * s + et * c;
    }
  }
  // Pole: gradient from the first angular harmonic of rings 1 and 2, Richardson-extrapolated.
  double g[2][2] = {{0, 0}, {0, 0}};
  for (int i = 1; i <= 2; ++i) {
    double a = 0.0;
    double b = 0.0;
    for (int j = 0; j < nt; ++j) {
      a += at(i, j) * std::cos(grid.theta(j));
      b += at(i, j) * std::sin(grid.theta(j));
    }
    g[i - 1][0] = 2.0 * a / nt / grid.radius(i);
    g[i - 1][1] = 2.0 * b / nt / grid.radius(i);
  }
  ex[0] = -(4.0 * g[0][0] - g[1][0]) / 3.0;
  ey[0] = -(4.0 * g[0][1] - g[1][1]) / 3.0;
}

struct LinearPoissonSolver::Impl {
  PolarLaplacian lap;
  BoundaryKind kind;
  FreeMap map;
  Factor factor;

  Impl(const PolarGrid& grid, BoundaryKind k)
      : lap(grid), kind(k), map(make_free_map(grid, k, k == BoundaryKind::Neumann)) {
    factor.compute(restricted_matrix(lap, map, {}));
    if (factor.info() != Eigen::Success) throw Error(ErrorCode::SolverDivergence, "Laplacian factorisation failed");
  }

  Eigen::VectorXd solve_restricted(const std::vector<double>& rhs) const {
    Eigen::VectorXd b(static_cast<Eigen::Index>(map.nodes.size()));
    for (std::size_t k = 0; k < map.nodes.size(); ++k) b[static_cast<Eigen::Index>(k)] = rhs[static_cast<std::size_t>(map.nodes[k])];
    return factor.solve(b);
  }
};

LinearPoissonSolver::LinearPoissonSolver(const PolarGrid& grid, BoundaryKind kind)
    : impl_(std::make_unique<Impl>(grid, kind)) {}
LinearPoissonSolver::~LinearPoissonSolver() = default;
LinearPoissonSolver::LinearPoissonSolver(LinearPoissonSolver&&) noexcept = default;
LinearPoissonSolver& LinearPoissonSolver::operator=(LinearPoissonSolver&&) noexcept = default;

PoissonSolution LinearPoissonSolver::solve(const DensitySpec& rho, const BoundaryCondition& bc) const {
  const Impl& m = *impl_;
  const PolarGrid& grid = m.lap.grid();
  require(bc.kind == m.kind, "boundary condition does not match the cached solver");
  check_boundary_data(grid, bc);
  PoissonSolution sol;
  sol.grid = grid;
  sol.bc = bc;
  sol.density = rho.sample(grid);
  const auto& area = m.lap.area();
  const std::size_t n = sol.density.size();
  std::vector<double> beta = boundary_flux_vector(grid, bc);
  if (bc.is_neumann()) {
    const double mismatch = bc.flux_integral(grid.ntheta()) + rho.mass();
    if (std::abs(mismatch) > kNeumannCompatibility) {
      throw Error(ErrorCode::IncompatibleNeumannData,
                  fmt::format("boundary integral of h plus mass is {:.3e}, expected 0", mismatch));
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += area[i] * sol.density[i] + beta[i];
    sol.flux_shift = -total / (2.0 * std::numbers::pi);
    for (int j = 0; j < grid.ntheta(); ++j) beta[static_cast<std::size_t>(grid.index(grid.nr(), j))] += grid.dtheta() * sol.flux_shift;
  }
  std::vector<double> load(n);
  for (std::size_t i = 0; i < n; ++i) load[i] = area[i] * sol.density[i] + beta[i];

  std::vector<double> u(n, 0.0);
  std::vector<double> neg_rho(n);
  std::vector<double> scale(n);
  for (std::size_t i = 0; i < n; ++i) {
    neg_rho[i] = -sol.density[i];
    scale[i] = std::abs(sol.density[i]);
  }
  ResidualReport rep;
  for (int pass = 0; pass < 4; ++pass) {
    const auto ku = m.lap.apply(u);
    std::vector<double> defect(n);
    for (std::size_t i = 0; i < n; ++i) defect[i] = load[i] - ku[i];
    const Eigen::VectorXd corr = m.solve_restricted(defect);
    for (std::size_t k = 0; k < m.map.nodes.size(); ++k) u[static_cast<std::size_t>(m.map.nodes[k])] += corr[static_cast<Eigen::Index>(k)];
    if (bc.is_neumann()) {
      double mean = 0.0;
      double total_area = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        mean += area[i] * u[i];
        total_area += area[i];
      }
      mean /= total_area;
      for (double& v : u) v -= mean;
    }
    rep = residual_of(m.lap, m.kind, u, beta, neg_rho, scale);
    sol.tolerance = std::max(kSolverTolerance, rep.floor);
    sol.iterations = pass + 1;
    if (rep.linf <= sol.tolerance) break;
  }
  if (rep.linf > sol.tolerance) {
    throw Error(ErrorCode::SolverDivergence,
                fmt::format("linear residual {:.3e} above tolerance {:.3e}", rep.linf, sol.tolerance));
  }
  sol.potential = std::move(u);
  sol.residual = std::move(rep.residual);
  sol.residual_linf = rep.linf;
  finish_solution(sol, m.lap);
  return sol;
}

PoissonSolution grid_poisson_solve(const DensitySpec& rho, const BoundaryCondition& bc, const PolarGrid& grid) {
  return LinearPoissonSolver(grid, bc.kind).solve(rho, bc);
}

PoissonSolution vpme_poisson_solve(const DensitySpec& rho, const BoundaryCondition& bc, const PolarGrid& grid,
                                   const VpmeOptions& options) {
  check_boundary_data(grid, bc);
  check_vpme_neumann(rho, bc, grid);
  const PolarLaplacian lap(grid);
  const auto rho_nodes = rho.sample(grid);
  NonlinearSolver solver({&lap, bc.kind, std::vector<double>(rho_nodes.size(), 0.0), rho_nodes,
                          boundary_flux_vector(grid, bc)});
  auto result = solver.solve(initial_guess(grid, bc.kind, options), options);
  PoissonSolution sol = nonlinear_solution(lap, bc, rho_nodes, std::move(result.u));
  sol.iterations = result.iterations;
  sol.energy_history = std::move(result.energy_history);
  sol.tolerance = std::max(sol.tolerance, result.tolerance);
  return sol;
}

PoissonSolution vpme_split_solve(const DensitySpec& rho, const BoundaryCondition& bc, const PolarGrid& grid,
                                 const VpmeOptions& options) {
  check_boundary_data(grid, bc);
  check_vpme_neumann(rho, bc, grid);
  BoundaryCondition bc_singular = BoundaryCondition::dirichlet();
  if (bc.is_neumann()) {
    const double h2 = -rho.mass() / (2.0 * std::numbers::pi);
    for (int j = 0; j < grid.ntheta(); ++j) {
      if (bc.flux(j) - h2 > 0.0) {
        throw Error(ErrorCode::NeumannConditionViolated,
                    fmt::format("split rule gives positive regular flux {:.6g} at boundary node {}", bc.flux(j) - h2, j));
      }
    }
    bc_singular = BoundaryCondition::neumann(h2);
  }
  const PoissonSolution singular = grid_poisson_solve(rho, bc_singular, grid);

  SplitParts parts;
  parts.singular = singular.potential;
  parts.singular_residual = singular.residual_linf;
  BoundaryCondition bc_regular = BoundaryCondition::dirichlet();
  if (bc.is_neumann()) {
    const double h2 = bc_singular.h[0] + singular.flux_shift;
    parts.h_singular.assign(static_cast<std::size_t>(grid.ntheta()), h2);
    parts.h_regular.resize(static_cast<std::size_t>(grid.ntheta()));
    for (int j = 0; j < grid.ntheta(); ++j) parts.h_regular[static_cast<std::size_t>(j)] = bc.flux(j) - h2;
    bc_regular = BoundaryCondition::neumann(parts.h_regular);
  }

  const PolarLaplacian lap(grid);
  NonlinearSolver solver({&lap, bc.kind, singular.potential, std::vector<double>(singular.potential.size(), 0.0),
                          boundary_flux_vector(grid, bc_regular)});
  auto result = solver.solve(initial_guess(grid, bc.kind, options), options);
  parts.regular = result.u;
  parts.regular_residual = result.report.linf;

  std::vector<double> u(parts.regular.size());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = parts.regular[i] + parts.singular[i];
  PoissonSolution sol = nonlinear_solution(lap, bc, singular.density, std::move(u));
  sol.iterations = result.iterations;
  sol.energy_history = std::move(result.energy_history);
  sol.tolerance = std::max(sol.tolerance, result.tolerance + singular.tolerance);
  sol.split = std::move(parts);
  return sol;
}

}  // namespace vpbd
