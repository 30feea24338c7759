#pragma once

// Test-side reference computations. These do not call into the library numerics.

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include <cmath>
#include <numbers>
#include <vector>

namespace oracle {

constexpr double kPi = std::numbers::pi;

// Unnormalised bump exp(-1/(1 - s^2/R^2)).
inline double bump_shape(double s, double radius) {
  const double q = s / radius;
  if (q >= 1.0) return 0.0;
  return std::exp(-1.0 / (1.0 - q * q));
}

// Mass of the unnormalised radial bump inside radius r.
inline double radial_shape_mass(double r, double radius) {
  const double upper = std::min(r, radius);
  if (upper <= 0.0) return 0.0;
  boost::math::quadrature::tanh_sinh<double> ts;
  return ts.integrate([&](double s) { return 2.0 * kPi * s * bump_shape(s, radius); }, 0.0, upper, 1e-15);
}

// Normalisation constant for a unit-mass bump of the given radius.
inline double bump_constant(double radius, double mass = 1.0) { return mass / radial_shape_mass(radius, radius); }

// |E|(r) = M(r) / (2 pi r) for a radial density.
inline double gauss_field(double r, double radius, double constant) {
  return constant * radial_shape_mass(r, radius) / (2.0 * kPi * r);
}

// Radial solution of U'' + U'/r = exp(U) - rho(r) - 1 on [0, 1] with U'(0) = 0, U(1) = 0.
// Vertex-centred finite volumes on n cells and damped Newton with a tridiagonal solve.
inline std::vector<double> radial_vpme(int n, double radius, double constant) {
  const double h = 1.0 / n;
  std::vector<double> r(n + 1), vol(n + 1), rho(n + 1), u(n + 1, 0.0);
  for (int i = 0; i <= n; ++i) {
    r[i] = i * h;
    vol[i] = i == 0 ? h * h / 8.0 : r[i] * h;
    rho[i] = constant * bump_shape(r[i], radius);
  }
  auto residual = [&](const std::vector<double>& w, std::vector<double>& res) {
    double norm = 0.0;
    for (int i = 0; i < n; ++i) {
      const double right = (i + 0.5) * h * (w[i + 1] - w[i]) / h;
      const double left = i == 0 ? 0.0 : (i - 0.5) * h * (w[i] - w[i - 1]) / h;
      res[i] = right - left - vol[i] * (std::exp(w[i]) - rho[i] - 1.0);
      norm = std::max(norm, std::abs(res[i]) / vol[i]);
    }
    return norm;
  };
  std::vector<double> res(n), a(n), b(n), c(n), d(n);
  for (int it = 0; it < 100; ++it) {
    const double norm = residual(u, res);
    if (norm < 1e-13) break;
    for (int i = 0; i < n; ++i) {
      const double cr = (i + 0.5);
      const double cl = i == 0 ? 0.0 : (i - 0.5);
      a[i] = cl;
      c[i] = i + 1 < n ? cr : 0.0;
      b[i] = -cr - cl - vol[i] * std::exp(u[i]);
      d[i] = -res[i];
    }
    // Thomas algorithm.
    for (int i = 1; i < n; ++i) {
      const double m = a[i] / b[i - 1];
      b[i] -= m * c[i - 1];
      d[i] -= m * d[i - 1];
    }
    std::vector<double> du(n);
    du[n - 1] = d[n - 1] / b[n - 1];
    for (int i = n - 2; i >= 0; --i) du[i] = (d[i] - c[i] * du[i + 1]) / b[i];
    double step = 1.0;
    std::vector<double> trial(u);
    for (int k = 0; k < 30; ++k) {
      for (int i = 0; i < n; ++i) trial[i] = u[i] + step * du[i];
      if (residual(trial, res) < norm) break;
      step *= 0.5;
    }
    u = trial;
  }
  return u;
}

}  // namespace oracle
