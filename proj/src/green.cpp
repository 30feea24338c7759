#include "vpbd/green.hpp"

#include "vpbd/error.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <fmt/format.h>

#include <cmath>
#include <complex>
#include <numbers>

namespace vpbd {

namespace {

using boost::math::quadrature::gauss_kronrod;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Chord {
  double lo = 0;
  double hi = 0;
};

}  // namespace

GreenFieldValue disk_green_field(const DensitySpec& rho, const Vec& x, const QuadratureSpec& spec) {
  require(x.size() == 2, "disk Green function is two-dimensional");
  const double x2 = x.squaredNorm();
  const double one_minus_x2 = std::max(0.0, 1.0 - x2);
  require(x2 <= 1.0 + 2.0 * kBoundaryTolerance, "evaluation point lies outside the unit disk");
  GreenFieldValue out{0.0, vec2(0, 0), 0.0};
  if (rho.mass() == 0.0) return out;

  const auto [center, radius] = rho.support_disk();
  const Vec w = x - center;
  const double wn = w.norm();
  double phi_lo = 0.0;
  double phi_hi = kTwoPi;
  const bool inside_support = wn < radius;
  if (!inside_support) {
    const double axis = std::atan2(-w[1], -w[0]);
    const double half = std::asin(std::min(1.0, radius / wn));
    phi_lo = axis - half;
    phi_hi = axis + half;
  }

  auto chord = [&](double phi) {
    const double ex = std::cos(phi);
    const double ey = std::sin(phi);
    const double we = w[0] * ex + w[1] * ey;
    const double disc = we * we - wn * wn + radius * radius;
    Chord c;
    if (disc <= 0.0) return c;
    const double root = std::sqrt(disc);
    c.hi = -we + root;
    c.lo = inside_support ? 0.0 : std::max(0.0, -we - root);
    const double xe = x[0] * ex + x[1] * ey;
    const double exit = -xe + std::sqrt(std::max(0.0, xe * xe - x2 + 1.0));
    c.hi = std::min(c.hi, exit);
    if (c.hi < c.lo) c.hi = c.lo;
    return c;
  };

  double worst_inner = 0.0;
  const double tol = spec.relative_tolerance;
  auto integrate_component = [&](int component) {
    auto outer = [&](double phi) {
      const Chord c = chord(phi);
      if (c.hi <= c.lo) return 0.0;
      const double ex = std::cos(phi);
      const double ey = std::sin(phi);
      auto inner = [&](double s) {
        if (s <= 0.0 && component == 0) return 0.0;
        const Vec y = vec2(x[0] + s * ex, x[1] + s * ey);
        const double r = rho(y);
        if (r == 0.0) return 0.0;
        // Expanded in s so nothing cancels when x sits on the boundary:
        //   |x|^2 |y|^2 - 2 x.y + 1 = s^2 + (1 - |x|^2)(1 - |y|^2).
        const double xe = x[0] * ex + x[1] * ey;
        const double gap_y = one_minus_x2 - 2.0 * s * xe - s * s;
        const double q = one_minus_x2 * gap_y;
        if (component == 0) return r * s * 0.5 * std::log1p(q / (s * s));
        const double d = s * s + q;
        // -(x - y)/|x - y|^2 + image term, times the Jacobian s, reduces to
        //   gap_y (dir (1 - |x|^2) - s x_c) / d,
        // which stays accurate for the tangential component on the boundary.
        const double dir = component == 1 ? ex : ey;
        const double xc = component == 1 ? x[0] : x[1];
        return r * gap_y * (dir * one_minus_x2 - s * xc) / d;
      };
      double err = 0.0;
      double l1 = 0.0;
      double v = 0.0;
      if (component == 0) {
        // s = t^2 smooths the s ln s endpoint behaviour of the potential kernel.
        auto smoothed = [&](double t) { return 2.0 * t * inner(t * t); };
        v = gauss_kronrod<double, 31>::integrate(smoothed, std::sqrt(c.lo), std::sqrt(c.hi), spec.max_depth, tol * 0.1,
                                                 &err, &l1);
      } else {
        v = gauss_kronrod<double, 31>::integrate(inner, c.lo, c.hi, spec.max_depth, tol * 0.1, &err, &l1);
      }
      worst_inner = std::max(worst_inner, err);
      return v;
    };
    // The outer tolerance is relative to the first estimate, which vanishes for field components that are
    // zero by symmetry (the tangential field on the boundary). Shifting by the typical ray magnitude keeps
    // the stopping rule tied to the size of the integrand instead.
    double shift = 0.0;
    for (int k = 0; k < 9; ++k) {
      const double phi = phi_lo + (phi_hi - phi_lo) * (k + 0.5) / 9.0;
      shift = std::max(shift, std::abs(outer(phi)));
    }
    worst_inner = 0.0;
    double err = 0.0;
    double l1 = 0.0;
    const double shifted = gauss_kronrod<double, 31>::integrate([&](double phi) { return outer(phi) + shift; }, phi_lo,
                                                                phi_hi, spec.max_depth, tol, &err, &l1);
    const double v = shifted - shift * (phi_hi - phi_lo);
    // Inner errors enter the outer integral at most multiplied by the angular range.
    const double total = err + worst_inner * (phi_hi - phi_lo);
    if (total > 10.0 * tol * l1 + spec.absolute_tolerance || !std::isfinite(v)) {
      throw Error(ErrorCode::QuadratureFailure,
                  fmt::format("Green-function quadrature error {:.3e} exceeds budget at ({}, {})", total, x[0], x[1]));
    }
    out.error_estimate = std::max(out.error_estimate, total / kTwoPi);
    return v / kTwoPi;
  };

  out.potential = integrate_component(0);
  const double gx = integrate_component(1);
  const double gy = integrate_component(2);
  out.field = vec2(-gx, -gy);
  return out;
}

AppendixField::AppendixField(const BumpParams& bump) : bump_(bump) {
  require(bump.center.size() == 2, "appendix field is two-dimensional");
  require(bump.center.norm() + bump.radius <= 1.0 + 1e-12, "bump support must lie inside the unit disk");
  mass_ = bump_enclosed_mass(bump.radius, bump.radius, bump.norm_const);
}

Vec AppendixField::field(const Vec& x) const {
  const Vec w = x - bump_.center;
  const double r2 = w.squaredNorm();
  Vec e = vec2(0, 0);
  if (r2 > 0.0) {
    const double m = bump_enclosed_mass(std::sqrt(r2), bump_.radius, bump_.norm_const);
    e = (m / (kTwoPi * r2)) * w;
  }
  const std::complex<double> z(x[0], x[1]);
  const std::complex<double> c(bump_.center[0], bump_.center[1]);
  const std::complex<double> image = (mass_ / kTwoPi) * c / std::conj(1.0 - std::conj(c) * z);
  e[0] += image.real();
  e[1] += image.imag();
  return e;
}

double AppendixField::potential(const Vec& x) const {
  const double R = bump_.radius;
  const double r = (x - bump_.center).norm();
  double radial = 0.0;
  if (r > 0.0) radial = bump_enclosed_mass(r, R, bump_.norm_const) * std::log(r);
  if (r < R) {
    // int_r^R 2 pi s rho(s) ln s ds with u = s^2/R^2.
    auto integrand = [&](double u) {
      if (u >= 1.0) return 0.0;
      return std::exp(-1.0 / (1.0 - u)) * 0.5 * std::log(R * R * u);
    };
    const double lo = (r * r) / (R * R);
    const double k = gauss_kronrod<double, 31>::integrate(integrand, lo, 1.0, 15, 1e-12);
    radial += std::numbers::pi * R * R * bump_.norm_const * k;
  }
  const std::complex<double> z(x[0], x[1]);
  const std::complex<double> c(bump_.center[0], bump_.center[1]);
  return -radial / kTwoPi + (mass_ / kTwoPi) * std::log(std::abs(1.0 - std::conj(c) * z));
}

}  // namespace vpbd
