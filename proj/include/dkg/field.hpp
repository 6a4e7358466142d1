// Sampled fields on a Grid and their Fourier coefficients.
//
// Fourier convention (Fourier series on the box):
//   f(x) = sum_k F_k exp(i xi_k . x),   F_k = N^{-1} sum_x f(x) exp(-i xi_k . x),
// with xi_k = pi k / L and box coordinates x. Under the spectral norm
//   ||F|| = ((2L)^4 sum_k |F_k|^2)^{1/2}
// Plancherel holds exactly: ||F|| equals the discrete L2 norm of f.
#pragma once

#include "dkg/fft.hpp"
#include "dkg/gamma.hpp"
#include "dkg/grid.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <span>
#include <stdexcept>
#include <type_traits>

namespace dkg {

template <class T>
inline constexpr bool is_complex_v = std::is_same_v<T, cplx>;

/// C-component field of T (double or complex) on a grid, stored as C planes.
template <class T, int C>
class Field {
 public:
  using value_type = T;
  static constexpr int components = C;

  Field() = default;
  explicit Field(const Grid& g) : grid_(g), data_(static_cast<std::size_t>(C) * g.points(), T{}) {}

  const Grid& grid() const { return grid_; }
  std::size_t points() const { return grid_.points(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t p, int c = 0) { return data_[static_cast<std::size_t>(c) * points() + p]; }
  const T& operator()(std::size_t p, int c = 0) const {
    return data_[static_cast<std::size_t>(c) * points() + p];
  }
  std::span<T> plane(int c) { return {data_.data() + static_cast<std::size_t>(c) * points(), points()}; }
  std::span<const T> plane(int c) const {
    return {data_.data() + static_cast<std::size_t>(c) * points(), points()};
  }
  std::span<T> raw() { return {data_.data(), data_.size()}; }
  std::span<const T> raw() const { return {data_.data(), data_.size()}; }

  Field& operator+=(const Field& o) {
    check_same(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Field& operator-=(const Field& o) {
    check_same(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Field& operator*=(double s) {
    for (auto& v : data_) v *= s;
    return *this;
  }
  template <class U = T, class = std::enable_if_t<is_complex_v<U>>>
  Field& operator*=(cplx s) {
    for (auto& v : data_) v *= s;
    return *this;
  }
  /// this += s * o
  template <class S>
  Field& axpy(S s, const Field& o) {
    check_same(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * o.data_[i];
    return *this;
  }

  friend Field operator+(Field a, const Field& b) { return a += b; }
  friend Field operator-(Field a, const Field& b) { return a -= b; }
  friend Field operator*(double s, Field a) { return a *= s; }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](const T& v) {
      if constexpr (is_complex_v<T>)
        return std::isfinite(v.real()) && std::isfinite(v.imag());
      else
        return std::isfinite(v);
    });
  }

  bool same_shape(const Field& o) const { return grid_ == o.grid_ && data_.size() == o.data_.size(); }

 private:
  void check_same(const Field& o) const {
    if (!same_shape(o)) throw std::invalid_argument("field: grid mismatch");
  }

  Grid grid_;
  aligned_vector<T> data_;
};

using ScalarField = Field<double, 1>;
using ComplexScalarField = Field<cplx, 1>;
using SpinorField = Field<cplx, 4>;

/// Fourier coefficients in FFT order (index j along each axis <-> wavenumber
/// grid.wavenumber(j)).
template <int C>
class Spectral {
 public:
  static constexpr int components = C;
  Spectral() = default;
  explicit Spectral(const Grid& g) : grid_(g), data_(static_cast<std::size_t>(C) * g.points()) {}

  const Grid& grid() const { return grid_; }
  std::size_t modes() const { return grid_.points(); }
  cplx& operator()(std::size_t p, int c = 0) { return data_[static_cast<std::size_t>(c) * modes() + p]; }
  const cplx& operator()(std::size_t p, int c = 0) const {
    return data_[static_cast<std::size_t>(c) * modes() + p];
  }
  /// Coefficient at integer wavenumber vector k (each entry in [-n/2, n/2)).
  cplx& at(const std::array<int, 4>& k, int c = 0) { return (*this)(flat_of(k), c); }
  const cplx& at(const std::array<int, 4>& k, int c = 0) const { return (*this)(flat_of(k), c); }
  std::span<cplx> plane(int c) { return {data_.data() + static_cast<std::size_t>(c) * modes(), modes()}; }
  std::span<const cplx> plane(int c) const {
    return {data_.data() + static_cast<std::size_t>(c) * modes(), modes()};
  }
  std::span<cplx> raw() { return {data_.data(), data_.size()}; }
  std::span<const cplx> raw() const { return {data_.data(), data_.size()}; }

  /// ((2L)^4 sum |F_k|^2)^{1/2}
  double norm() const {
    double s = 0.0;
    for (const auto& v : data_) s += std::norm(v);
    return std::sqrt(grid_.volume() * s);
  }

 private:
  std::size_t flat_of(const std::array<int, 4>& k) const {
    const int n = grid_.n();
    for (int a = 0; a < 4; ++a)
      if (k[a] < -n / 2 || k[a] >= n / 2) throw std::out_of_range("spectral: wavenumber out of range");
    return grid_.flat(grid_.index_of_wavenumber(k[0]), grid_.index_of_wavenumber(k[1]),
                      grid_.index_of_wavenumber(k[2]), grid_.index_of_wavenumber(k[3]));
  }

  Grid grid_;
  aligned_vector<cplx> data_;
};

using SpectralScalar = Spectral<1>;
using SpectralSpinor = Spectral<4>;

namespace detail {

/// Multiplies each entry of an n^4 plane by (-1)^(i0+i1+i2+i3) * scale; this
/// shifts the FFT's [0, 2L) origin to box coordinates.
inline void apply_parity(int n, std::span<cplx> plane, double scale) {
#pragma omp parallel for
  for (int i0 = 0; i0 < n; ++i0) {
    std::size_t p = static_cast<std::size_t>(i0) * n * n * n;
    for (int i1 = 0; i1 < n; ++i1)
      for (int i2 = 0; i2 < n; ++i2) {
        const bool odd = ((i0 + i1 + i2) & 1) != 0;
        for (int i3 = 0; i3 < n; ++i3, ++p) {
          const double s = (odd != ((i3 & 1) != 0)) ? -scale : scale;
          plane[p] *= s;
        }
      }
  }
}

}  // namespace detail

template <class T, int C>
Spectral<C> forward_transform(const Field<T, C>& f) {
  const Grid& g = f.grid();
  Spectral<C> out(g);
  const double scale = 1.0 / static_cast<double>(g.points());
  for (int c = 0; c < C; ++c) {
    auto dst = out.plane(c);
    auto src = f.plane(c);
    for (std::size_t p = 0; p < src.size(); ++p) dst[p] = cplx(src[p]);
    fft4_forward(g.n(), dst.data());
    detail::apply_parity(g.n(), dst, scale);
  }
  return out;
}

/// Inverse transform into a field of value type T (real part taken when T = double).
template <class T, int C>
Field<T, C> inverse_transform_as(Spectral<C> s) {
  const Grid& g = s.grid();
  Field<T, C> out(g);
  for (int c = 0; c < C; ++c) {
    auto buf = s.plane(c);
    detail::apply_parity(g.n(), buf, 1.0);
    fft4_backward(g.n(), buf.data());
    auto dst = out.plane(c);
    for (std::size_t p = 0; p < buf.size(); ++p) {
      if constexpr (is_complex_v<T>)
        dst[p] = buf[p];
      else
        dst[p] = buf[p].real();
    }
  }
  return out;
}

inline SpinorField inverse_transform(const SpectralSpinor& s) { return inverse_transform_as<cplx, 4>(s); }
inline ScalarField inverse_transform(const SpectralScalar& s) { return inverse_transform_as<double, 1>(s); }

/// Calls fn(p, kappa) for every mode p with kappa the derivative symbols.
template <class Fn>
void for_each_mode(const Grid& g, Fn&& fn) {
  const int n = g.n();
#pragma omp parallel for
  for (int i0 = 0; i0 < n; ++i0) {
    std::size_t p = static_cast<std::size_t>(i0) * n * n * n;
    for (int i1 = 0; i1 < n; ++i1)
      for (int i2 = 0; i2 < n; ++i2)
        for (int i3 = 0; i3 < n; ++i3, ++p) {
          const std::array<double, 4> kappa{g.derivative_symbol(i0), g.derivative_symbol(i1),
                                            g.derivative_symbol(i2), g.derivative_symbol(i3)};
          fn(p, kappa);
        }
  }
}

/// Calls fn(p, x) for every grid point with box coordinates x.
template <class Fn>
void for_each_point(const Grid& g, Fn&& fn) {
  const int n = g.n();
#pragma omp parallel for
  for (int i0 = 0; i0 < n; ++i0) {
    std::size_t p = static_cast<std::size_t>(i0) * n * n * n;
    for (int i1 = 0; i1 < n; ++i1)
      for (int i2 = 0; i2 < n; ++i2)
        for (int i3 = 0; i3 < n; ++i3, ++p) {
          const std::array<double, 4> x{g.coord(i0), g.coord(i1), g.coord(i2), g.coord(i3)};
          fn(p, x);
        }
  }
}

/// Field multiplied by a per-mode complex symbol.
template <class T, int C, class Symbol>
Field<T, C> apply_symbol(const Field<T, C>& f, Symbol&& sym) {
  auto s = forward_transform(f);
  for_each_mode(f.grid(), [&](std::size_t p, const std::array<double, 4>& kappa) {
    const cplx m = sym(kappa);
    for (int c = 0; c < C; ++c) s(p, c) *= m;
  });
  return inverse_transform_as<T, C>(std::move(s));
}

/// Spectral d/dx_a, a in 1..4.
template <class T, int C>
Field<T, C> derivative(const Field<T, C>& f, int a) {
  if (a < 1 || a > 4) throw std::out_of_range("derivative: axis must be 1..4");
  return apply_symbol(f, [a](const std::array<double, 4>& k) { return cplx(0.0, k[a - 1]); });
}

/// All four spatial derivatives from one forward transform.
template <class T, int C>
std::array<Field<T, C>, 4> gradient(const Field<T, C>& f) {
  const auto s = forward_transform(f);
  std::array<Field<T, C>, 4> out;
  for (int a = 0; a < 4; ++a) {
    Spectral<C> d = s;
    for_each_mode(f.grid(), [&](std::size_t p, const std::array<double, 4>& kappa) {
      for (int c = 0; c < C; ++c) d(p, c) *= cplx(0.0, kappa[a]);
    });
    out[a] = inverse_transform_as<T, C>(std::move(d));
  }
  return out;
}

/// Spectral Laplacian with symbol -sum_a kappa_a^2 (consistent with derivative()).
template <class T, int C>
Field<T, C> laplacian(const Field<T, C>& f) {
  return apply_symbol(f, [](const std::array<double, 4>& k) {
    return cplx(-(k[0] * k[0] + k[1] * k[1] + k[2] * k[2] + k[3] * k[3]), 0.0);
  });
}

/// Pointwise x_a f(x) in box coordinates.
template <class T, int C>
Field<T, C> times_coordinate(const Field<T, C>& f, int a) {
  Field<T, C> out(f.grid());
  const Grid& g = f.grid();
  for_each_point(g, [&](std::size_t p, const std::array<double, 4>& x) {
    for (int c = 0; c < C; ++c) out(p, c) = x[a - 1] * f(p, c);
  });
  return out;
}

/// Pointwise constant-matrix action on a spinor field.
inline SpinorField apply_matrix(const Mat4& m, const SpinorField& f) {
  SpinorField out(f.grid());
  const std::size_t np = f.points();
#pragma omp parallel for
  for (std::size_t p = 0; p < np; ++p) {
    for (int r = 0; r < 4; ++r) {
      cplx acc = 0.0;
      for (int c = 0; c < 4; ++c) acc += m(r, c) * f(p, c);
      out(p, r) = acc;
    }
  }
  return out;
}

/// u F phi, pointwise.
template <class S>
SpinorField scalar_times_spinor(const Field<S, 1>& u, const Mat4& F, const SpinorField& phi) {
  SpinorField out = apply_matrix(F, phi);
  const std::size_t np = phi.points();
  for (std::size_t p = 0; p < np; ++p)
    for (int c = 0; c < 4; ++c) out(p, c) *= u(p);
  return out;
}

/// phi1^* H phi2, pointwise (complex in general).
inline ComplexScalarField bilinear(const SpinorField& phi1, const Mat4& H, const SpinorField& phi2) {
  ComplexScalarField out(phi1.grid());
  const std::size_t np = phi1.points();
#pragma omp parallel for
  for (std::size_t p = 0; p < np; ++p) {
    cplx acc = 0.0;
    for (int r = 0; r < 4; ++r) {
      cplx hv = 0.0;
      for (int c = 0; c < 4; ++c) hv += H(r, c) * phi2(p, c);
      acc += std::conj(phi1(p, r)) * hv;
    }
    out(p) = acc;
  }
  return out;
}

inline ScalarField real_part(const ComplexScalarField& f) {
  ScalarField out(f.grid());
  for (std::size_t p = 0; p < f.points(); ++p) out(p) = f(p).real();
  return out;
}

inline double max_imag(const ComplexScalarField& f) {
  double m = 0.0;
  for (std::size_t p = 0; p < f.points(); ++p) m = std::max(m, std::abs(f(p).imag()));
  return m;
}

inline ComplexScalarField to_complex(const ScalarField& f) {
  ComplexScalarField out(f.grid());
  for (std::size_t p = 0; p < f.points(); ++p) out(p) = f(p);
  return out;
}

/// Modulus at point p: |f| for scalars, Euclidean C^4 norm for spinors.
template <class T, int C>
double modulus(const Field<T, C>& f, std::size_t p) {
  if constexpr (C == 1) {
    return std::abs(f(p));
  } else {
    double s = 0.0;
    for (int c = 0; c < C; ++c) s += std::norm(f(p, c));
    return std::sqrt(s);
  }
}

}  // namespace dkg
