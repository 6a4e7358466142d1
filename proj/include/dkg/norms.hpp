// Discrete Lebesgue norms and the weighted data norm used as the smallness
// measure for initial data.
#pragma once

#include "dkg/field.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace dkg {

enum class LpNorm { L1, L2, Linf };

/// L1 = h^4 sum|f|, L2 = (h^4 sum|f|^2)^{1/2}, Linf = max|f|; spinor modulus is
/// the C^4 Euclidean norm. Summation order is fixed (flat index order).
template <class T, int C>
double lebesgue_norm(const Field<T, C>& f, LpNorm p) {
  const std::size_t np = f.points();
  double acc = 0.0;
  switch (p) {
    case LpNorm::L1:
      for (std::size_t i = 0; i < np; ++i) acc += modulus(f, i);
      return acc * f.grid().cell_volume();
    case LpNorm::L2:
      for (std::size_t i = 0; i < np; ++i) {
        if constexpr (C == 1) {
          acc += std::norm(f(i));
        } else {
          for (int c = 0; c < C; ++c) acc += std::norm(f(i, c));
        }
      }
      return std::sqrt(acc * f.grid().cell_volume());
    case LpNorm::Linf:
      for (std::size_t i = 0; i < np; ++i) acc = std::max(acc, modulus(f, i));
      return acc;
  }
  return acc;
}

template <class T, int C>
double l2_norm(const Field<T, C>& f) {
  return lebesgue_norm(f, LpNorm::L2);
}

template <class T, int C>
double sup_norm(const Field<T, C>& f) {
  return lebesgue_norm(f, LpNorm::Linf);
}

/// Relative L2 distance ||a - b|| / ||b|| (absolute when ||b|| == 0).
template <class T, int C>
double relative_l2(const Field<T, C>& a, const Field<T, C>& b) {
  const double nb = l2_norm(b);
  const double d = l2_norm(a - b);
  return nb > 0.0 ? d / nb : d;
}

namespace detail {

/// Exponent vectors alpha with |alpha| = k over 4 axes, with multinomial
/// multiplicity k!/(alpha_1! ... alpha_4!).
struct DerivativeMonomial {
  std::array<int, 4> alpha;
  double multiplicity;
};

inline std::vector<DerivativeMonomial> monomials_of_order(int k) {
  std::vector<DerivativeMonomial> out;
  auto fact = [](int m) {
    double r = 1.0;
    for (int i = 2; i <= m; ++i) r *= i;
    return r;
  };
  for (int a = 0; a <= k; ++a)
    for (int b = 0; a + b <= k; ++b)
      for (int c = 0; a + b + c <= k; ++c) {
        const int d = k - a - b - c;
        out.push_back({{a, b, c, d}, fact(k) / (fact(a) * fact(b) * fact(c) * fact(d))});
      }
  return out;
}

/// Pointwise |nabla^k f| (Frobenius norm of the k-th derivative tensor).
template <class T, int C>
ScalarField derivative_tensor_modulus(const Field<T, C>& f, int k) {
  const Grid& g = f.grid();
  ScalarField acc(g);
  if (k == 0) {
    for (std::size_t p = 0; p < f.points(); ++p) acc(p) = modulus(f, p);
    return acc;
  }
  const auto s = forward_transform(f);
  for (const auto& mono : monomials_of_order(k)) {
    Spectral<C> d = s;
    for_each_mode(g, [&](std::size_t p, const std::array<double, 4>& kappa) {
      cplx sym = 1.0;
      for (int a = 0; a < 4; ++a)
        for (int r = 0; r < mono.alpha[a]; ++r) sym *= cplx(0.0, kappa[a]);
      for (int c = 0; c < C; ++c) d(p, c) *= sym;
    });
    const auto df = inverse_transform_as<T, C>(std::move(d));
    for (std::size_t p = 0; p < f.points(); ++p) {
      const double m = modulus(df, p);
      acc(p) += mono.multiplicity * m * m;
    }
  }
  for (std::size_t p = 0; p < f.points(); ++p) acc(p) = std::sqrt(acc(p));
  return acc;
}

template <class T, int C>
double weighted_derivative_norm(const Field<T, C>& f, int k, int weight_power, LpNorm p) {
  ScalarField m = derivative_tensor_modulus(f, k);
  if (weight_power != 0) {
    for_each_point(f.grid(), [&](std::size_t i, const std::array<double, 4>& x) {
      const double r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + x[3] * x[3];
      m(i) *= std::pow(std::sqrt(1.0 + r2), weight_power);
    });
  }
  return lebesgue_norm(m, p);
}

}  // namespace detail

/// Weighted smallness norm of (psi0, v0, v1) with weight <|x|>^N and spectral
/// derivatives up to order N (psi0, v1) and N + 1 (v0). The weight uses the
/// box-coordinate radius.
inline double data_norm(const SpinorField& psi0, const ScalarField& v0, const ScalarField& v1, int order) {
  if (order < 0) throw std::invalid_argument("data_norm: order must be >= 0");
  double total = 0.0;
  for (int k = 0; k <= order; ++k) total += detail::weighted_derivative_norm(psi0, k, order, LpNorm::L2);
  for (int k = 0; k <= order + 1; ++k) {
    total += detail::weighted_derivative_norm(v0, k, order, LpNorm::L1);
    total += detail::weighted_derivative_norm(v0, k, order, LpNorm::L2);
  }
  for (int k = 0; k <= order; ++k) {
    total += detail::weighted_derivative_norm(v1, k, order, LpNorm::L1);
    total += detail::weighted_derivative_norm(v1, k, order, LpNorm::L2);
  }
  return total;
}

}  // namespace dkg
