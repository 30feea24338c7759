#include "vpbd/field_model.hpp"

#include "vpbd/error.hpp"

#include <fmt/format.h>

#include <cmath>
#include <limits>

namespace vpbd {

namespace {

// Max nodal |E| and max difference quotient over neighbouring grid nodes.
std::pair<double, double> grid_norms(const PolarGrid& grid, const std::vector<double>& ex,
                                     const std::vector<double>& ey) {
  double sup = 0.0;
  for (std::size_t k = 0; k < ex.size(); ++k) sup = std::max(sup, std::hypot(ex[k], ey[k]));
  double lip = 0.0;
  auto pair = [&](int a, int b) {
    const double dist = (grid.position(a) - grid.position(b)).norm();
    const auto ia = static_cast<std::size_t>(a);
    const auto ib = static_cast<std::size_t>(b);
    lip = std::max(lip, std::hypot(ex[ia] - ex[ib], ey[ia] - ey[ib]) / dist);
  };
  for (int j = 0; j < grid.ntheta(); ++j) {
    pair(0, grid.index(1, j));
    for (int i = 1; i <= grid.nr(); ++i) {
      pair(grid.index(i, j), grid.index(i, j + 1));
      if (i < grid.nr()) pair(grid.index(i, j), grid.index(i + 1, j));
    }
  }
  return {sup, lip};
}

}  // namespace

FieldModel::FieldModel(Source source, Impl impl, std::string id)
    : source_(source), impl_(std::move(impl)), id_(std::move(id)) {
  compute_norms();
}

FieldModel FieldModel::zero(int dimension) { return {Source::Zero, ZeroField{dimension}, "zero"}; }

FieldModel FieldModel::constant(const Vec& e) {
  return {Source::Constant, ConstantField{e}, fmt::format("constant({})", fmt::join(e.data(), e.data() + e.size(), ","))};
}

FieldModel FieldModel::linear(double k, int dimension) {
  return {Source::Linear, LinearField{k, dimension}, fmt::format("linear(k={})", k)};
}

FieldModel FieldModel::appendix(const AppendixField& field) {
  return {Source::AnalyticAppendix, field,
          fmt::format("appendix(center=({},{}), radius={})", field.bump().center[0], field.bump().center[1],
                      field.bump().radius)};
}

FieldModel FieldModel::from_solution(PoissonSolution solution) {
  const Source source = solution.nonlinear ? Source::VPME : Source::LinearPoisson;
  const std::string id = fmt::format("{}_{}_{}x{}", solution.nonlinear ? "vpme" : "linear", solution.bc.name(),
                                     solution.grid.nr(), solution.grid.ntheta());
  return {source, GridField{std::make_shared<const PoissonSolution>(std::move(solution))}, id};
}

const PoissonSolution* FieldModel::solution() const {
  if (const auto* g = std::get_if<GridField>(&impl_)) return g->solution.get();
  return nullptr;
}

Vec FieldModel::field(double, const Vec& x) const {
  switch (impl_.index()) {
    case 0: return Vec::Zero(x.size());
    case 1: return std::get<ConstantField>(impl_).e;
    case 2: return std::get<LinearField>(impl_).k * x;
    case 3: return std::get<AppendixField>(impl_).field(x);
    default: {
      const auto& sol = *std::get<GridField>(impl_).solution;
      const auto s = sol.grid.locate(x[0], x[1]);
      double ex = 0.0;
      double ey = 0.0;
      for (int k = 0; k < s.count; ++k) {
        const auto n = static_cast<std::size_t>(s.nodes[static_cast<std::size_t>(k)]);
        const double w = s.weights[static_cast<std::size_t>(k)];
        ex += w * sol.field_x[n];
        ey += w * sol.field_y[n];
      }
      return vec2(ex, ey);
    }
  }
}

double FieldModel::potential(double, const Vec& x) const {
  switch (impl_.index()) {
    case 0: return 0.0;
    case 1: return -std::get<ConstantField>(impl_).e.dot(x);
    case 2: return -0.5 * std::get<LinearField>(impl_).k * x.squaredNorm();
    case 3: return std::get<AppendixField>(impl_).potential(x);
    default: {
      const auto& sol = *std::get<GridField>(impl_).solution;
      return sol.grid.interpolate(sol.potential, x[0], x[1]);
    }
  }
}

void FieldModel::compute_norms() {
  switch (impl_.index()) {
    case 0:
      sup_norm_ = 0.0;
      lipschitz_ = 0.0;
      return;
    case 1:
      sup_norm_ = std::get<ConstantField>(impl_).e.norm();
      lipschitz_ = 0.0;
      return;
    case 2: {
      // Norms over the unit ball; the linear field is only used on the disk.
      const double k = std::abs(std::get<LinearField>(impl_).k);
      sup_norm_ = k;
      lipschitz_ = k;
      return;
    }
    case 3: {
      const PolarGrid grid(128, 256);
      std::vector<double> ex(static_cast<std::size_t>(grid.node_count()));
      std::vector<double> ey(ex.size());
      const auto& f = std::get<AppendixField>(impl_);
      for (int n = 0; n < grid.node_count(); ++n) {
        const Vec e = f.field(grid.position(n));
        ex[static_cast<std::size_t>(n)] = e[0];
        ey[static_cast<std::size_t>(n)] = e[1];
      }
      std::tie(sup_norm_, lipschitz_) = grid_norms(grid, ex, ey);
      return;
    }
    default: {
      const auto& sol = *std::get<GridField>(impl_).solution;
      std::tie(sup_norm_, lipschitz_) = grid_norms(sol.grid, sol.field_x, sol.field_y);
      return;
    }
  }
}

double FieldModel::outgoing_margin(const ConvexDomain& domain, int samples) const {
  double m = std::numeric_limits<double>::infinity();
  for (const Vec& p : domain.boundary_samples(samples)) m = std::min(m, field(0.0, p).dot(domain.outward_normal(p)));
  return m;
}

double FieldModel::collar_normal_minimum(const ConvexDomain& domain) const {
  double m = std::numeric_limits<double>::infinity();
  for (const Vec& p : domain.collar_samples(128, 16)) m = std::min(m, field(0.0, p).dot(domain.gradient(p)));
  return m;
}

}  // namespace vpbd
