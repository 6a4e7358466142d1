// Dirac matrices in 1+4 dimensions, interaction matrices and the per-mode
// Dirac symbol.
//
// Conventions: eta = diag(-1, 1, 1, 1, 1); the matrices satisfy
//   gamma^mu gamma^nu + gamma^nu gamma^mu = -2 eta_{mu nu} I_4,
//   (gamma^mu)^* = -eta_{mu nu} gamma^nu.
#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace dkg {

using cplx = std::complex<double>;
using Mat4 = Eigen::Matrix4cd;
using Vec4 = Eigen::Vector4cd;

inline constexpr std::array<double, 5> kMinkowski{-1.0, 1.0, 1.0, 1.0, 1.0};

/// Entrywise max-norm of a 4x4 complex matrix.
inline double max_abs(const Mat4& a) {
  double m = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) m = std::max(m, std::abs(a(i, j)));
  return m;
}

class GammaSet {
 public:
  /// Representation used throughout: gamma^0 = diag(1,1,-1,-1) and
  /// gamma^4 = -gamma^0 gamma^1 gamma^2 gamma^3.
  static GammaSet standard();

  /// Accepts any representation whose Clifford violation is <= tol.
  static GammaSet from_matrices(const std::array<Mat4, 5>& m, double tol = 1e-12);

  /// No validation; used to probe check_clifford with broken sets.
  static GammaSet unchecked(const std::array<Mat4, 5>& m) { return GammaSet(m); }

  const Mat4& operator[](int mu) const { return m_.at(static_cast<std::size_t>(mu)); }
  const std::array<Mat4, 5>& matrices() const { return m_; }
  static constexpr const std::array<double, 5>& signature() { return kMinkowski; }

  /// gamma^0 gamma^a for a = 1..4 (Hermitian, squares to I).
  const Mat4& g0ga(int a) const { return g0ga_.at(static_cast<std::size_t>(a - 1)); }
  /// gamma^a gamma^b for spatial a, b.
  Mat4 gagb(int a, int b) const { return m_[a] * m_[b]; }

 private:
  explicit GammaSet(const std::array<Mat4, 5>& m) : m_(m) {
    for (int a = 1; a <= 4; ++a) g0ga_[a - 1] = m_[0] * m_[a];
  }
  std::array<Mat4, 5> m_;
  std::array<Mat4, 4> g0ga_;
};

/// Max over mu, nu of |gamma^mu gamma^nu + gamma^nu gamma^mu + 2 eta_{mu nu} I|_max.
inline double check_clifford(const GammaSet& g) {
  double worst = 0.0;
  for (int mu = 0; mu < 5; ++mu) {
    for (int nu = 0; nu < 5; ++nu) {
      Mat4 r = g[mu] * g[nu] + g[nu] * g[mu];
      if (mu == nu) r += 2.0 * kMinkowski[mu] * Mat4::Identity();
      worst = std::max(worst, max_abs(r));
    }
  }
  return worst;
}

/// Max over mu of |(gamma^mu)^* + eta_{mu mu} gamma^mu|_max.
inline double check_adjoints(const GammaSet& g) {
  double worst = 0.0;
  for (int mu = 0; mu < 5; ++mu)
    worst = std::max(worst, max_abs(g[mu].adjoint() + kMinkowski[mu] * g[mu]));
  return worst;
}

inline GammaSet GammaSet::standard() {
  const cplx i(0.0, 1.0);
  std::array<Mat4, 5> m;
  m[0] << 1, 0, 0, 0,
          0, 1, 0, 0,
          0, 0, -1, 0,
          0, 0, 0, -1;
  m[1] << 0, 0, 0, 1,
          0, 0, 1, 0,
          0, -1, 0, 0,
          -1, 0, 0, 0;
  m[2] << 0, 0, 0, -i,
          0, 0, i, 0,
          0, i, 0, 0,
          -i, 0, 0, 0;
  m[3] << 0, 0, 1, 0,
          0, 0, 0, -1,
          -1, 0, 0, 0,
          0, 1, 0, 0;
  m[4] << 0, 0, i, 0,
          0, 0, 0, i,
          i, 0, 0, 0,
          0, i, 0, 0;
  if (max_abs(m[4] + m[0] * m[1] * m[2] * m[3]) != 0.0)
    throw std::logic_error("gamma^4 does not match -gamma^0 gamma^1 gamma^2 gamma^3");
  return GammaSet(m);
}

inline GammaSet GammaSet::from_matrices(const std::array<Mat4, 5>& m, double tol) {
  GammaSet g(m);
  const double v = check_clifford(g);
  if (!(v <= tol))
    throw std::invalid_argument("Clifford relations violated by " + std::to_string(v));
  return g;
}

struct InteractionPair {
  Mat4 F = Mat4::Identity();
  Mat4 H = Mat4::Identity();

  /// F = I_4, H = gamma^0.
  static InteractionPair identity_gamma0(const GammaSet& g) { return {Mat4::Identity(), g[0]}; }
};

struct InteractionReport {
  double f_violation = 0.0;  // |(gamma^0 F)^* - gamma^0 F|_max
  double h_violation = 0.0;  // |H^* - H|_max
  bool valid(double tol = 1e-12) const { return f_violation <= tol && h_violation <= tol; }
};

inline InteractionReport validate_interactions(const InteractionPair& p, const GammaSet& g) {
  const Mat4 g0f = g[0] * p.F;
  return {max_abs(g0f.adjoint() - g0f), max_abs(p.H.adjoint() - p.H)};
}

/// Hermitian symbol sum_a xi_a gamma^0 gamma^a + M gamma^0; squares to (|xi|^2 + M^2) I.
inline Mat4 dirac_symbol(const GammaSet& g, const std::array<double, 4>& xi, double mass) {
  Mat4 h = mass * g[0];
  for (int a = 1; a <= 4; ++a) h += xi[a - 1] * g.g0ga(a);
  return h;
}

/// Applies Hs(xi) to a vector without forming the matrix. When every term
/// has one nonzero per row (true for the standard set) the product is a
/// gather; otherwise it falls back to dense matrix-vector products.
class SymbolKernel {
 public:
  SymbolKernel(const GammaSet& g, double mass) {
    for (int m = 0; m < 5; ++m) {
      terms_[m] = m < 4 ? g.g0ga(m + 1) : Mat4(mass * g[0]);
      for (int r = 0; r < 4; ++r) {
        int nz = 0;
        for (int c = 0; c < 4; ++c)
          if (terms_[m](r, c) != cplx(0.0)) {
            ++nz;
            col_[m][r] = c;
            val_[m][r] = terms_[m](r, c);
          }
        if (nz == 0) {
          col_[m][r] = 0;
          val_[m][r] = 0.0;
        }
        sparse_ = sparse_ && nz <= 1;
      }
    }
  }

  Vec4 apply(const std::array<double, 4>& xi, const Vec4& v) const {
    if (!sparse_) {
      Mat4 h = terms_[4];
      for (int a = 0; a < 4; ++a) h += xi[a] * terms_[a];
      return h * v;
    }
    Vec4 out;
    for (int r = 0; r < 4; ++r) {
      cplx acc = val_[4][r] * v(col_[4][r]);
      for (int a = 0; a < 4; ++a) acc += xi[a] * (val_[a][r] * v(col_[a][r]));
      out(r) = acc;
    }
    return out;
  }

 private:
  std::array<Mat4, 5> terms_;
  int col_[5][4] = {};
  cplx val_[5][4] = {};
  bool sparse_ = true;
};
}  // namespace dkg
