#pragma once

#include <array>
#include <cstdint>

namespace vpbd {

// Van der Corput radical inverse of i in the given base.
inline double radical_inverse(std::uint64_t i, unsigned base) {
  const double inv = 1.0 / base;
  double f = inv;
  double r = 0.0;
  while (i > 0) {
    r += f * static_cast<double>(i % base);
    i /= base;
    f *= inv;
  }
  return r;
}

// Point i of the Halton sequence in [0,1)^D using the first D primes.
template <std::size_t D>
std::array<double, D> halton_point(std::uint64_t i) {
  static constexpr unsigned primes[] = {2, 3, 5, 7, 11, 13};
  static_assert(D <= 6);
  std::array<double, D> p{};
  for (std::size_t k = 0; k < D; ++k) p[k] = radical_inverse(i, primes[k]);
  return p;
}

}  // namespace vpbd
