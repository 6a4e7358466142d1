// Periodic box [-L, L)^4 with n points per axis, and uniform time grids.
#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace dkg {

inline constexpr int kDim = 4;

class Grid {
 public:
  Grid() = default;
  Grid(int n, double half_length) : n_(n), L_(half_length) {
    if (n <= 0 || n % 2 != 0)
      throw std::invalid_argument("grid: points per axis must be a positive even integer, got " +
                                  std::to_string(n));
    if (!(half_length > 0.0) || !std::isfinite(half_length))
      throw std::invalid_argument("grid: half-length must be positive and finite");
    coords_.resize(static_cast<std::size_t>(n));
    freqs_.resize(static_cast<std::size_t>(n));
    symbols_.resize(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
      coords_[j] = -L_ + j * spacing();
      const int k = wavenumber(j);
      freqs_[j] = std::numbers::pi * k / L_;
      symbols_[j] = (k == -n / 2) ? 0.0 : freqs_[j];
    }
  }

  int n() const { return n_; }
  double half_length() const { return L_; }
  double spacing() const { return 2.0 * L_ / n_; }
  std::size_t points() const {
    const auto m = static_cast<std::size_t>(n_);
    return m * m * m * m;
  }
  double cell_volume() const { return std::pow(spacing(), 4); }
  double volume() const { return std::pow(2.0 * L_, 4); }

  /// Box coordinate of index j along any axis.
  double coord(int j) const { return coords_[static_cast<std::size_t>(j)]; }
  /// Signed integer wavenumber k in [-n/2, n/2) for FFT index j.
  int wavenumber(int j) const { return j < n_ / 2 ? j : j - n_; }
  int index_of_wavenumber(int k) const { return k >= 0 ? k : k + n_; }
  /// pi k / L.
  double frequency(int j) const { return freqs_[static_cast<std::size_t>(j)]; }
  /// Symbol of d/dx used for every spectral first derivative: pi k / L with the
  /// Nyquist entry set to zero so real fields stay real.
  double derivative_symbol(int j) const { return symbols_[static_cast<std::size_t>(j)]; }

  /// Flat row-major index, axis 0 (x_1) slowest.
  std::size_t flat(int i0, int i1, int i2, int i3) const {
    const auto m = static_cast<std::size_t>(n_);
    return ((static_cast<std::size_t>(i0) * m + i1) * m + i2) * m + i3;
  }
  std::array<int, 4> unflat(std::size_t p) const {
    const auto m = static_cast<std::size_t>(n_);
    std::array<int, 4> idx{};
    for (int a = 3; a >= 0; --a) {
      idx[a] = static_cast<int>(p % m);
      p /= m;
    }
    return idx;
  }
  std::array<double, 4> point(std::size_t p) const {
    const auto idx = unflat(p);
    return {coord(idx[0]), coord(idx[1]), coord(idx[2]), coord(idx[3])};
  }

  friend bool operator==(const Grid& a, const Grid& b) { return a.n_ == b.n_ && a.L_ == b.L_; }

 private:
  int n_ = 0;
  double L_ = 0.0;
  std::vector<double> coords_;
  std::vector<double> freqs_;
  std::vector<double> symbols_;
};

/// Uniform grid t_k = t0 + k dt, k = 0..steps.
struct TimeGrid {
  double t0 = 0.0;
  double dt = 0.0;
  std::size_t steps = 0;

  TimeGrid() = default;
  TimeGrid(double start, double step, std::size_t nsteps) : t0(start), dt(step), steps(nsteps) {
    if (nsteps > 0 && !(step > 0.0))
      throw std::invalid_argument("time grid: step must be positive");
  }
  static TimeGrid up_to(double t_max, double step) {
    if (!(step > 0.0)) throw std::invalid_argument("time grid: step must be positive");
    const double r = t_max / step;
    const auto n = static_cast<std::size_t>(std::llround(r));
    if (std::abs(r - static_cast<double>(n)) > 1e-9 * std::max(1.0, r))
      throw std::invalid_argument("time grid: t_max must be a multiple of dt");
    return {0.0, step, n};
  }

  std::size_t size() const { return steps + 1; }
  double time(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }
  double end() const { return time(steps); }
};

/// <rho> = (1 + rho^2)^{1/2}.
inline double japanese(double rho) { return std::sqrt(1.0 + rho * rho); }

}  // namespace dkg
