// Localized Gaussian initial data (psi0, v0, v1).
#pragma once

#include "dkg/field.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>

namespace dkg {

struct InitialData {
  SpinorField psi0;
  ScalarField v0;
  ScalarField v1;
};

namespace detail {
/// Uniform double in [0, 1) from the top 53 bits; independent of the
/// standard library's distribution implementations.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}
}  // namespace detail

/// Seed-dependent constants of the data family: unit C^4 weight for the spinor
/// and the amplitude ratio of v1 to v0.
struct GaussianWeights {
  Vec4 spinor;
  double v1_ratio;

  static GaussianWeights from_seed(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    GaussianWeights w;
    double norm2 = 0.0;
    for (int c = 0; c < 4; ++c) {
      const double mag = 0.5 + 0.5 * detail::unit_uniform(rng);
      const double phase = 2.0 * std::numbers::pi * detail::unit_uniform(rng);
      w.spinor(c) = std::polar(mag, phase);
      norm2 += mag * mag;
    }
    w.spinor /= std::sqrt(norm2);
    w.v1_ratio = 0.5 + 0.5 * detail::unit_uniform(rng);
    return w;
  }
};

/// psi0 = eps w g, v0 = eps g, v1 = eps r g with g = exp(-|x|^2 / (2 sigma^2)).
/// Requires sigma < L/4 so the data stay clear of the periodic seam.
inline InitialData gaussian_data(double amplitude, double width, const Grid& grid, std::uint64_t seed) {
  if (!(amplitude >= 0.0) || !std::isfinite(amplitude))
    throw std::invalid_argument("gaussian_data: amplitude must be >= 0");
  if (!(width > 0.0)) throw std::invalid_argument("gaussian_data: width must be positive");
  if (!(width < grid.half_length() / 4.0))
    throw std::invalid_argument("gaussian_data: width must be < L/4 to keep the data inside the box");
  const auto w = GaussianWeights::from_seed(seed);
  InitialData d{SpinorField(grid), ScalarField(grid), ScalarField(grid)};
  const double inv = 1.0 / (2.0 * width * width);
  for_each_point(grid, [&](std::size_t p, const std::array<double, 4>& x) {
    const double r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + x[3] * x[3];
    const double g = amplitude * std::exp(-r2 * inv);
    for (int c = 0; c < 4; ++c) d.psi0(p, c) = g * w.spinor(c);
    d.v0(p) = g;
    d.v1(p) = w.v1_ratio * g;
  });
  return d;
}

}  // namespace dkg
