#include "vpbd/density.hpp"

#include "vpbd/error.hpp"

#include <boost/math/special_functions/expint.hpp>

#include <cmath>
#include <numbers>

namespace vpbd {

namespace {

// Antiderivative of exp(-1/w): F(w) = w e^{-1/w} - E1(1/w), F(0) = 0.
double bump_antiderivative(double w) {
  if (w <= 0.0) return 0.0;
  const double z = 1.0 / w;
  if (z > 700.0) return 0.0;
  return w * std::exp(-z) - boost::math::expint(1, z);
}

}  // namespace

double appendix_density(const Vec& x, const Vec& center, double radius, double norm_const) {
  const double q = (x - center).squaredNorm() / (radius * radius);
  if (q >= 1.0) return 0.0;
  return norm_const * std::exp(-1.0 / (1.0 - q));
}

double bump_profile_integral() { return bump_antiderivative(1.0); }

double appendix_normalization(double radius, double mass) {
  require(radius > 0, "bump radius must be positive");
  return mass / (std::numbers::pi * radius * radius * bump_profile_integral());
}

double bump_enclosed_mass(double r, double radius, double norm_const) {
  const double full = bump_antiderivative(1.0);
  const double w = r >= radius ? 0.0 : 1.0 - (r * r) / (radius * radius);
  return std::numbers::pi * norm_const * radius * radius * (full - bump_antiderivative(w));
}

DensitySpec DensitySpec::appendix_bump(const Vec& center, double radius, double mass) {
  require(radius > 0, "bump radius must be positive");
  require(mass >= 0, "bump mass must be nonnegative");
  DensitySpec d;
  d.kind_ = Kind::AppendixBump;
  d.mass_ = mass;
  d.bump_ = BumpParams{center, radius, appendix_normalization(radius, mass)};
  return d;
}

DensitySpec DensitySpec::constant(double value) {
  require(value >= 0, "density must be nonnegative");
  DensitySpec d;
  d.kind_ = Kind::Constant;
  d.constant_ = value;
  d.mass_ = value * std::numbers::pi;
  return d;
}

DensitySpec DensitySpec::grid_sampled(const PolarGrid& grid, std::vector<double> values, Kind kind) {
  require(static_cast<int>(values.size()) == grid.node_count(), "density values do not match the grid");
  require(kind == Kind::GridSampled || kind == Kind::ParticleDeposited, "grid densities are sampled or deposited");
  DensitySpec d;
  d.kind_ = kind;
  const auto& w = grid.node_measure();
  double mass = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    require(values[k] >= 0, "density must be nonnegative");
    mass += values[k] * w[k];
  }
  d.mass_ = mass;
  d.grid_ = grid;
  d.values_ = std::move(values);
  return d;
}

std::string DensitySpec::kind_name() const {
  switch (kind_) {
    case Kind::AppendixBump: return "appendix_bump";
    case Kind::Constant: return "constant";
    case Kind::GridSampled: return "grid_sampled";
    case Kind::ParticleDeposited: return "particle_deposited";
  }
  return "unknown";
}

double DensitySpec::operator()(const Vec& x) const {
  switch (kind_) {
    case Kind::AppendixBump: return appendix_density(x, bump_->center, bump_->radius, bump_->norm_const);
    case Kind::Constant: return constant_;
    case Kind::GridSampled:
    case Kind::ParticleDeposited: return grid_->interpolate(values_, x[0], x[1]);
  }
  return 0.0;
}

std::vector<double> DensitySpec::sample(const PolarGrid& grid) const {
  if ((kind_ == Kind::GridSampled || kind_ == Kind::ParticleDeposited) && grid_ && *grid_ == grid) {
    return values_;
  }
  std::vector<double> out(static_cast<std::size_t>(grid.node_count()));
  for (int n = 0; n < grid.node_count(); ++n) out[static_cast<std::size_t>(n)] = (*this)(grid.position(n));
  return out;
}

DensitySpec DensitySpec::scaled(double factor) const {
  require(factor >= 0, "density scale must be nonnegative");
  DensitySpec d = *this;
  d.mass_ *= factor;
  d.constant_ *= factor;
  if (d.bump_) d.bump_->norm_const *= factor;
  for (double& v : d.values_) v *= factor;
  return d;
}

std::pair<Vec, double> DensitySpec::support_disk() const {
  if (bump_) return {bump_->center, bump_->radius};
  return {vec2(0, 0), 1.0};
}

double field_bound_estimate(const DensitySpec& rho, const PolarGrid& grid) {
  const auto values = rho.sample(grid);
  const auto& w = grid.node_measure();
  double sup = 0.0;
  double p_sum = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    sup = std::max(sup, values[k]);
    p_sum += std::pow(values[k], 5.0 / 3.0) * w[k];
  }
  if (sup == 0.0) return 0.0;
  const double lp = std::pow(p_sum, 3.0 / 5.0);
  return std::pow(sup, 4.0 / 9.0) * std::pow(lp, 5.0 / 9.0);
}

}  // namespace vpbd
