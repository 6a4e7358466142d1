// Vector fields on R^{1+4}: translations d_alpha, rotations Omega_ab, boosts
// L_a, the scaling field L_0, and the spinor-modified Omega^_ab, L^_a.
//
// Fields carry time dependence as jets: Jet::d[j] is d_t^j f at time t. A
// first-order operator maps level j of its output to levels j and j+1 of its
// input:
//   (L_a f)^(j)   = t d_a f^(j) + j d_a f^(j-1) + x_a f^(j+1)
//   (L_0 f)^(j)   = t f^(j+1) + j f^(j) + x^a d_a f^(j)
//   (Omega_ab f)^(j) = x_a d_b f^(j) - x_b d_a f^(j)
// Spatial derivatives are spectral; coordinates are box coordinates.
#pragma once

#include "dkg/field.hpp"
#include "dkg/gamma.hpp"
#include "dkg/norms.hpp"

#include <Eigen/SVD>

#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dkg {

struct VectorFieldId {
  enum class Kind { Partial, Rotation, Boost, Scaling };

  Kind kind = Kind::Partial;
  int a = 0;  // Partial: alpha in 0..4; Rotation: a < b in 1..4; Boost: a in 1..4
  int b = 0;
  bool modified = false;

  static VectorFieldId partial(int alpha) {
    if (alpha < 0 || alpha > 4) throw std::out_of_range("partial: index must be 0..4");
    return {Kind::Partial, alpha, 0, false};
  }
  static VectorFieldId rotation(int a, int b, bool modified = false) {
    if (!(1 <= a && a < b && b <= 4)) throw std::out_of_range("rotation: need 1 <= a < b <= 4");
    return {Kind::Rotation, a, b, modified};
  }
  static VectorFieldId boost(int a, bool modified = false) {
    if (a < 1 || a > 4) throw std::out_of_range("boost: index must be 1..4");
    return {Kind::Boost, a, 0, modified};
  }
  static VectorFieldId scaling() { return {Kind::Scaling, 0, 0, false}; }

  /// Number of extra time levels the operator consumes.
  int time_order() const {
    return (kind == Kind::Partial && a == 0) || kind == Kind::Boost || kind == Kind::Scaling ? 1 : 0;
  }
  bool has_matrix_term() const { return modified && (kind == Kind::Rotation || kind == Kind::Boost); }

  std::string name() const {
    const std::string hat = has_matrix_term() ? "^" : "";
    switch (kind) {
      case Kind::Partial: return "d" + std::to_string(a);
      case Kind::Rotation: return "O" + hat + std::to_string(a) + std::to_string(b);
      case Kind::Boost: return "L" + hat + std::to_string(a);
      case Kind::Scaling: return "L0";
    }
    return "?";
  }

  bool operator==(const VectorFieldId&) const = default;
};

using MultiIndex = std::vector<VectorFieldId>;

/// The fifteen fields (d_0..d_4, Omega_12..Omega_34, L_1..L_4) in order;
/// modified selects the hatted rotations and boosts.
inline std::array<VectorFieldId, 15> vector_field_family(bool modified) {
  std::array<VectorFieldId, 15> f;
  int i = 0;
  for (int al = 0; al <= 4; ++al) f[i++] = VectorFieldId::partial(al);
  for (int a = 1; a <= 4; ++a)
    for (int b = a + 1; b <= 4; ++b) f[i++] = VectorFieldId::rotation(a, b, modified);
  for (int a = 1; a <= 4; ++a) f[i++] = VectorFieldId::boost(a, modified);
  return f;
}

inline std::string word_name(const MultiIndex& w) {
  if (w.empty()) return "id";
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) s += (i ? "*" : "") + w[i].name();
  return s;
}

/// Constant matrix c with Gamma^ = Gamma - c (zero for unmodified fields).
inline Mat4 matrix_term(const VectorFieldId& op, const GammaSet& g) {
  if (!op.has_matrix_term()) return Mat4::Zero();
  if (op.kind == VectorFieldId::Kind::Rotation) return 0.5 * g[op.a] * g[op.b];
  return 0.5 * g[0] * g[op.a];
}

template <class F>
struct Jet {
  double t = 0.0;
  std::vector<F> d;

  int order() const { return static_cast<int>(d.size()) - 1; }
  const Grid& grid() const { return d.at(0).grid(); }
  Jet truncated(int order) const {
    if (order > this->order()) throw std::invalid_argument("jet: cannot raise order by truncation");
    return {t, std::vector<F>(d.begin(), d.begin() + order + 1)};
  }
  Jet& operator-=(const Jet& o) {
    if (o.d.size() < d.size()) throw std::invalid_argument("jet: order mismatch");
    for (std::size_t j = 0; j < d.size(); ++j) d[j] -= o.d[j];
    return *this;
  }
};

namespace detail {

template <class F>
constexpr bool is_spinor_v = F::components == 4;

/// Jet with lazily computed spatial gradients per level.
template <class F>
class JetNode {
 public:
  explicit JetNode(Jet<F> j) : jet_(std::move(j)), grads_(jet_.d.size()) {}
  const Jet<F>& jet() const { return jet_; }
  const std::array<F, 4>& grad(int level) const {
    auto& g = grads_.at(static_cast<std::size_t>(level));
    if (!g) g = gradient(jet_.d[static_cast<std::size_t>(level)]);
    return *g;
  }

 private:
  Jet<F> jet_;
  mutable std::vector<std::optional<std::array<F, 4>>> grads_;
};

/// out(p) = sum_i w_i(x) * in_i(p) for a handful of (coordinate weight, field) terms.
template <class F>
void accumulate_weighted(F& out, const F& in, const std::function<double(const std::array<double, 4>&)>& w) {
  for_each_point(out.grid(), [&](std::size_t p, const std::array<double, 4>& x) {
    const double s = w(x);
    for (int c = 0; c < F::components; ++c) out(p, c) += s * in(p, c);
  });
}

}  // namespace detail

/// Applies op to a jet, producing levels 0..out_order.
template <class F>
Jet<F> apply(const VectorFieldId& op, const detail::JetNode<F>& node, int out_order, const GammaSet& gamma) {
  const Jet<F>& in = node.jet();
  if (op.has_matrix_term() && !detail::is_spinor_v<F>)
    throw std::invalid_argument("modified vector field applied to a scalar field");
  if (out_order < 0 || out_order + op.time_order() > in.order())
    throw std::invalid_argument("apply: jet of order " + std::to_string(in.order()) + " too short for " + op.name());
  const double t = in.t;
  Jet<F> out{t, {}};
  out.d.reserve(static_cast<std::size_t>(out_order) + 1);
  for (int j = 0; j <= out_order; ++j) {
    F r(in.grid());
    switch (op.kind) {
      case VectorFieldId::Kind::Partial:
        r = op.a == 0 ? in.d[j + 1] : node.grad(j)[op.a - 1];
        break;
      case VectorFieldId::Kind::Rotation: {
        const auto& g = node.grad(j);
        const int a = op.a, b = op.b;
        for_each_point(in.grid(), [&](std::size_t p, const std::array<double, 4>& x) {
          for (int c = 0; c < F::components; ++c) r(p, c) = x[a - 1] * g[b - 1](p, c) - x[b - 1] * g[a - 1](p, c);
        });
        break;
      }
      case VectorFieldId::Kind::Boost: {
        const int a = op.a;
        r = t * node.grad(j)[a - 1];
        if (j > 0) r.axpy(static_cast<double>(j), node.grad(j - 1)[a - 1]);
        const F& next = in.d[j + 1];
        for_each_point(in.grid(), [&](std::size_t p, const std::array<double, 4>& x) {
          for (int c = 0; c < F::components; ++c) r(p, c) += x[a - 1] * next(p, c);
        });
        break;
      }
      case VectorFieldId::Kind::Scaling: {
        r = t * in.d[j + 1];
        if (j > 0) r.axpy(static_cast<double>(j), in.d[j]);
        const auto& g = node.grad(j);
        for_each_point(in.grid(), [&](std::size_t p, const std::array<double, 4>& x) {
          for (int c = 0; c < F::components; ++c)
            r(p, c) += x[0] * g[0](p, c) + x[1] * g[1](p, c) + x[2] * g[2](p, c) + x[3] * g[3](p, c);
        });
        break;
      }
    }
    if constexpr (detail::is_spinor_v<F>) {
      if (op.has_matrix_term()) r -= apply_matrix(matrix_term(op, gamma), in.d[j]);
    }
    out.d.push_back(std::move(r));
  }
  return out;
}

template <class F>
Jet<F> apply(const VectorFieldId& op, const Jet<F>& jet, int out_order, const GammaSet& gamma) {
  return apply(op, detail::JetNode<F>(jet), out_order, gamma);
}

inline int time_order(const MultiIndex& w) {
  int s = 0;
  for (const auto& op : w) s += op.time_order();
  return s;
}

/// Gamma^I f at the jet's time, with I = (Gamma_{i1}, ..., Gamma_{ik}) read as the
/// operator product Gamma_{i1} ... Gamma_{ik}: the rightmost entry acts first.
template <class F>
F apply_multi(const MultiIndex& word, const Jet<F>& f, const GammaSet& gamma) {
  if (time_order(word) > f.order())
    throw std::invalid_argument("apply_multi: jet too short for " + word_name(word));
  Jet<F> cur = f;
  int remaining = time_order(word);
  for (auto it = word.rbegin(); it != word.rend(); ++it) {
    remaining -= it->time_order();
    cur = apply(*it, cur, remaining, gamma);
  }
  return cur.d.at(0);
}

/// Number of canonical (non-decreasing) words of length <= K over n letters.
inline std::size_t canonical_word_count(int letters, int K) {
  std::size_t total = 0, c = 1;
  for (int k = 0; k <= K; ++k) {
    total += c;
    c = c * static_cast<std::size_t>(letters + k) / static_cast<std::size_t>(k + 1);
  }
  return total;
}

/// Visits Gamma^I f for every canonical word |I| <= K over the family (indices
/// non-decreasing left to right, so each product is listed once). The jet must
/// have order >= K.
template <class F, class Visitor>
void for_each_word(const Jet<F>& f, int K, const std::array<VectorFieldId, 15>& family, const GammaSet& gamma,
                   Visitor&& visit) {
  if (K < 0) throw std::invalid_argument("for_each_word: K must be >= 0");
  if (f.order() < K) throw std::invalid_argument("for_each_word: jet order below K");
  MultiIndex word;
  std::function<void(const detail::JetNode<F>&, int, int)> dfs = [&](const detail::JetNode<F>& node, int max_idx,
                                                                        int depth) {
    visit(static_cast<const MultiIndex&>(word), node.jet().d[0]);
    if (depth == K) return;
    const int out_order = K - depth - 1;
    for (int k = 0; k <= max_idx; ++k) {
      detail::JetNode<F> child(apply(family[k], node, out_order, gamma));
      word.insert(word.begin(), family[k]);
      dfs(child, k, depth + 1);
      word.erase(word.begin());
    }
  };
  dfs(detail::JetNode<F>(f.truncated(K)), 14, 0);
}

// ---------------------------------------------------------------------------
// Analytic test functions: finite sums T_k(t) g_k(x) with closed-form time
// factors, so every jet level is exact.

struct TimeFactor {
  enum class Kind { Polynomial, Cosine };
  Kind kind = Kind::Polynomial;
  std::vector<double> coeffs{1.0};  // sum c_i t^i
  double omega = 0.0;
  double phase = 0.0;

  static TimeFactor polynomial(std::vector<double> c) { return {Kind::Polynomial, std::move(c), 0.0, 0.0}; }
  static TimeFactor cosine(double omega, double phase) { return {Kind::Cosine, {}, omega, phase}; }

  double derivative(int j, double t) const {
    if (kind == Kind::Cosine) {
      // d^j/dt^j cos(w t + p) = w^j cos(w t + p + j pi/2)
      return std::pow(omega, j) * std::cos(omega * t + phase + j * std::acos(0.0));
    }
    double s = 0.0;
    for (std::size_t i = static_cast<std::size_t>(j); i < coeffs.size(); ++i) {
      double fall = 1.0;
      for (int r = 0; r < j; ++r) fall *= static_cast<double>(i - r);
      s += coeffs[i] * fall * std::pow(t, static_cast<double>(i) - j);
    }
    return s;
  }
};

template <class F>
struct AnalyticField {
  std::string name;
  std::vector<std::pair<TimeFactor, F>> terms;

  Jet<F> jet(double t, int order) const {
    if (terms.empty()) throw std::logic_error("analytic field has no terms");
    Jet<F> j{t, {}};
    for (int k = 0; k <= order; ++k) {
      F acc(terms.front().second.grid());
      for (const auto& [tf, g] : terms) acc.axpy(tf.derivative(k, t), g);
      j.d.push_back(std::move(acc));
    }
    return j;
  }
};

/// Polynomial times Gaussian exp(-|x - c|^2 / (2 sigma^2)), sampled on the grid.
inline ScalarField poly_gaussian(const Grid& g, double sigma, const std::array<double, 4>& centre,
                                 const std::function<double(const std::array<double, 4>&)>& poly) {
  ScalarField f(g);
  for_each_point(g, [&](std::size_t p, const std::array<double, 4>& x) {
    double r2 = 0.0;
    for (int a = 0; a < 4; ++a) r2 += (x[a] - centre[a]) * (x[a] - centre[a]);
    f(p) = poly(x) * std::exp(-r2 / (2.0 * sigma * sigma));
  });
  return f;
}

inline SpinorField spinor_profile(const ScalarField& s, const Vec4& w) {
  SpinorField f(s.grid());
  for (std::size_t p = 0; p < s.points(); ++p)
    for (int c = 0; c < 4; ++c) f(p, c) = s(p) * w(c);
  return f;
}

/// Gaussian width of the registered corpus (near the measured optimum between
/// the tail left at the seam and spectral truncation at n = 32).
inline double corpus_width(const Grid& g) { return g.half_length() / std::sqrt(51.0); }

namespace detail {

template <class T, int C>
Field<T, C> unit_l2(Field<T, C> f) {
  f *= 1.0 / l2_norm(f);
  return f;
}

/// (1 + 0.1 x1 + 0.04 x2 - 0.07 x3) g(x): a mildly non-radial profile.
inline ScalarField tilted_gaussian(const Grid& g, double s) {
  return poly_gaussian(g, s, {0, 0, 0, 0}, [](const auto& x) { return 1.0 + 0.1 * x[0] + 0.04 * x[1] - 0.07 * x[2]; });
}

/// Trigonometric polynomial sum_j w_j exp(i pi k_j.x / L) with |k_j,a| <= 3.
inline SpinorField trig_spinor(const Grid& g, const std::vector<std::pair<std::array<int, 4>, Vec4>>& modes) {
  SpinorField f(g);
  const double base = std::acos(-1.0) / g.half_length();
  for_each_point(g, [&](std::size_t p, const std::array<double, 4>& x) {
    for (const auto& [k, w] : modes) {
      const double ph = base * (k[0] * x[0] + k[1] * x[1] + k[2] * x[2] + k[3] * x[3]);
      const cplx e(std::cos(ph), std::sin(ph));
      for (int c = 0; c < 4; ++c) f(p, c) += w(c) * e;
    }
  });
  return f;
}

struct TrigMode {
  std::array<int, 4> k;
  double amplitude;
  double phase;
};

inline ScalarField trig_scalar(const Grid& g, const std::vector<TrigMode>& modes) {
  ScalarField f(g);
  const double base = std::acos(-1.0) / g.half_length();
  for_each_point(g, [&](std::size_t p, const std::array<double, 4>& x) {
    for (const auto& m : modes)
      f(p) += m.amplitude * std::cos(base * (m.k[0] * x[0] + m.k[1] * x[1] + m.k[2] * x[2] + m.k[3] * x[3]) + m.phase);
  });
  return f;
}

}  // namespace detail

/// Unit-L2 Gaussian profiles with analytic time factors; used for the
/// commutator identities.
inline std::vector<AnalyticField<ScalarField>> scalar_corpus(const Grid& g) {
  const double s = corpus_width(g);
  std::vector<AnalyticField<ScalarField>> out;
  out.push_back({"gauss_cos_t",
                 {{TimeFactor::cosine(0.7, 0.3), detail::unit_l2(poly_gaussian(g, s, {0, 0, 0, 0}, [](const auto&) {
                     return 1.0;
                   }))}}});
  out.push_back({"tilted_gauss_quadratic_t",
                 {{TimeFactor::polynomial({1.0, 0.3, -0.1}), detail::unit_l2(detail::tilted_gaussian(g, s))}}});
  return out;
}

inline std::vector<AnalyticField<SpinorField>> spinor_corpus(const Grid& g) {
  const double s = corpus_width(g);
  const cplx i(0.0, 1.0);
  const auto centred = detail::unit_l2(poly_gaussian(g, s, {0, 0, 0, 0}, [](const auto&) { return 1.0; }));
  const auto tilted = detail::unit_l2(detail::tilted_gaussian(g, s));
  std::vector<AnalyticField<SpinorField>> out;
  out.push_back({"spinor_gauss_linear_t",
                 {{TimeFactor::polynomial({1.0, -0.4}), spinor_profile(centred, Vec4(0.8, 0.4 * i, -0.2, 0.4))}}});
  out.push_back({"spinor_mixed_cos_t",
                 {{TimeFactor::cosine(1.1, -0.4), spinor_profile(tilted, Vec4(0.3, 0.6, 0.5 * i, -0.5 * i))},
                  {TimeFactor::polynomial({0.2, 0.0, 0.3, -0.05}), spinor_profile(centred, Vec4(-0.6 * i, 0.4, 0.0, 0.7))}}});
  return out;
}

/// Trigonometric polynomials with wavenumbers |k_a| <= 3, so pairwise products
/// are resolved exactly for n >= 16; used for the Leibniz identities.
inline std::vector<AnalyticField<ScalarField>> band_limited_scalar_corpus(const Grid& g) {
  std::vector<AnalyticField<ScalarField>> out;
  out.push_back({"trig_scalar",
                 {{TimeFactor::polynomial({0.5, 1.0, -0.3}), detail::trig_scalar(g, {{{1, 0, 2, 0}, 0.3, 0.3}, {{0, 3, 0, -1}, 0.5, -1.1}})},
                  {TimeFactor::cosine(0.9, 0.2), detail::trig_scalar(g, {{{2, -1, 0, 1}, 0.7, 0.4}})}}});
  return out;
}

inline std::vector<AnalyticField<SpinorField>> band_limited_spinor_corpus(const Grid& g) {
  const cplx i(0.0, 1.0);
  std::vector<AnalyticField<SpinorField>> out;
  out.push_back({"trig_spinor_a",
                 {{TimeFactor::cosine(1.3, 0.1),
                   detail::trig_spinor(g, {{{1, 0, 0, 0}, Vec4(1.0, 0.5 * i, 0.0, -0.3)},
                                           {{0, -2, 1, 3}, Vec4(0.2, 0.0, 0.4 * i, 0.1)}})},
                  {TimeFactor::polynomial({0.0, 1.0, 0.0, 0.2}),
                   detail::trig_spinor(g, {{{-3, 1, 0, 2}, Vec4(0.0, 0.3, -0.5, 0.2 * i)}})}}});
  out.push_back({"trig_spinor_b",
                 {{TimeFactor::polynomial({1.0, -0.5, 0.25}),
                   detail::trig_spinor(g, {{{0, 0, 0, 0}, Vec4(0.4, 0.0, 0.1, 0.0)},
                                           {{2, 2, -1, 0}, Vec4(0.0, -0.7 * i, 0.3, 0.5)},
                                           {{0, 1, 3, -2}, Vec4(0.25, 0.25, 0.0, -0.6 * i)}})}}});
  return out;
}

// ---------------------------------------------------------------------------
// Wave operators and commutators.

enum class WaveOperator {
  KleinGordon,  // -Box = d_t^2 - Lap
  Dirac,        // -i gamma^mu d_mu = -i gamma^0 d_t - i gamma^a d_a
};

inline int operator_order(WaveOperator A) { return A == WaveOperator::KleinGordon ? 2 : 1; }

template <class F>
Jet<F> apply_operator(WaveOperator A, const detail::JetNode<F>& node, int out_order, const GammaSet& gamma) {
  const Jet<F>& in = node.jet();
  if (out_order + operator_order(A) > in.order()) throw std::invalid_argument("apply_operator: jet too short");
  Jet<F> out{in.t, {}};
  for (int j = 0; j <= out_order; ++j) {
    if (A == WaveOperator::KleinGordon) {
      F r = in.d[j + 2];
      r -= laplacian(in.d[j]);
      out.d.push_back(std::move(r));
    } else {
      if constexpr (!detail::is_spinor_v<F>) {
        throw std::invalid_argument("Dirac operator needs a spinor field");
      } else {
        const cplx mi(0.0, -1.0);
        SpinorField r = apply_matrix(mi * gamma[0], in.d[j + 1]);
        const auto& g = node.grad(j);
        for (int a = 1; a <= 4; ++a) r += apply_matrix(mi * gamma[a], g[a - 1]);
        out.d.push_back(std::move(r));
      }
    }
  }
  return out;
}

/// kappa in [A, Gamma] = kappa A: 2 for (-Box, L_0), 1 for (Dirac, L_0), else 0.
inline double commutator_anomaly(WaveOperator A, const VectorFieldId& op) {
  if (op.kind != VectorFieldId::Kind::Scaling) return 0.0;
  return A == WaveOperator::KleinGordon ? 2.0 : 1.0;
}

/// Evaluates || [A, Gamma] f - kappa A f ||_2 for many Gamma at one f, sharing
/// the gradients of f and of A f. The jet must have order >= operator_order(A) + 1.
template <class F>
class CommutatorProbe {
 public:
  CommutatorProbe(WaveOperator A, const Jet<F>& f, const GammaSet& gamma)
      : A_(A),
        gamma_(gamma),
        root_(f.truncated(operator_order(A) + 1)),
        af_(apply_operator(A, root_, 1, gamma)) {}

  double residual(const VectorFieldId& op) const {
    const detail::JetNode<F> gf(apply(op, root_, operator_order(A_), gamma_));
    F res = apply_operator(A_, gf, 0, gamma_).d[0];
    res -= apply(op, af_, 0, gamma_).d[0];
    res.axpy(-commutator_anomaly(A_, op), af_.jet().d[0]);
    return l2_norm(res);
  }

 private:
  WaveOperator A_;
  const GammaSet& gamma_;
  detail::JetNode<F> root_;
  detail::JetNode<F> af_;
};

template <class F>
double commutator_residual(WaveOperator A, const VectorFieldId& op, const Jet<F>& f, const GammaSet& gamma) {
  return CommutatorProbe<F>(A, f, gamma).residual(op);
}

template <class F>
double commutator_residual(WaveOperator A, const VectorFieldId& op, const AnalyticField<F>& f, double t,
                           const GammaSet& gamma) {
  return commutator_residual(A, op, f.jet(t, operator_order(A) + 1), gamma);
}

// ---------------------------------------------------------------------------
// Leibniz identities for the two nonlinear terms.

enum class LeibnizCase {
  ScalarSpinorRotation,  // Omega^_ab (f F Phi)
  ScalarSpinorBoost,     // L^_a (f F Phi)
  BilinearRotation,      // Omega_ab (Phi1^* H Phi2)
  BilinearBoost,         // L_a (Phi1^* H Phi2)
  BilinearPartial,       // d_alpha (Phi1^* H Phi2)
};

inline std::string leibniz_case_name(LeibnizCase c) {
  switch (c) {
    case LeibnizCase::ScalarSpinorRotation: return "uFphi-rotation";
    case LeibnizCase::ScalarSpinorBoost: return "uFphi-boost";
    case LeibnizCase::BilinearRotation: return "bilinear-rotation";
    case LeibnizCase::BilinearBoost: return "bilinear-boost";
    case LeibnizCase::BilinearPartial: return "bilinear-partial";
  }
  return "?";
}

namespace detail {

inline double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

inline ComplexScalarField complex_of(const ScalarField& f) { return to_complex(f); }

/// Time jet of f F Phi by the Leibniz rule in t.
inline Jet<SpinorField> product_jet(const Jet<ScalarField>& f, const Mat4& F, const Jet<SpinorField>& phi, int order) {
  Jet<SpinorField> out{f.t, {}};
  for (int j = 0; j <= order; ++j) {
    SpinorField acc(phi.grid());
    for (int i = 0; i <= j; ++i) acc.axpy(binomial(j, i), scalar_times_spinor(f.d[i], F, phi.d[j - i]));
    out.d.push_back(std::move(acc));
  }
  return out;
}

inline Jet<ComplexScalarField> bilinear_jet(const Jet<SpinorField>& p1, const Mat4& H, const Jet<SpinorField>& p2,
                                            int order) {
  Jet<ComplexScalarField> out{p1.t, {}};
  for (int j = 0; j <= order; ++j) {
    ComplexScalarField acc(p1.grid());
    for (int i = 0; i <= j; ++i) acc.axpy(binomial(j, i), bilinear(p1.d[i], H, p2.d[j - i]));
    out.d.push_back(std::move(acc));
  }
  return out;
}

}  // namespace detail

/// L2 norm of (left - right) in the selected exact identity. `op` must match
/// the case (rotation / boost / partial; its modified flag is ignored). The
/// scalar-spinor cases use f and phi1; the bilinear cases use phi1 and phi2.
inline double leibniz_residual(LeibnizCase c, const VectorFieldId& op, const Jet<ScalarField>& f,
                               const Jet<SpinorField>& phi1, const Jet<SpinorField>& phi2,
                               const InteractionPair& pair, const GammaSet& gamma) {
  using K = VectorFieldId::Kind;
  const bool rot = c == LeibnizCase::ScalarSpinorRotation || c == LeibnizCase::BilinearRotation;
  const bool boost = c == LeibnizCase::ScalarSpinorBoost || c == LeibnizCase::BilinearBoost;
  if ((rot && op.kind != K::Rotation) || (boost && op.kind != K::Boost) ||
      (c == LeibnizCase::BilinearPartial && op.kind != K::Partial))
    throw std::invalid_argument("leibniz_residual: vector field does not match the case");
  VectorFieldId plain = op, hat = op;
  plain.modified = false;
  hat.modified = op.kind != K::Partial;
  const int to = op.time_order();
  const Mat4 cm = matrix_term(hat, gamma);  // 1/2 gamma^a gamma^b or 1/2 gamma^0 gamma^a

  if (c == LeibnizCase::ScalarSpinorRotation || c == LeibnizCase::ScalarSpinorBoost) {
    const Mat4& F = pair.F;
    const auto prod = detail::product_jet(f, F, phi1, to);
    SpinorField lhs = apply(hat, prod, 0, gamma).d[0];
    const ScalarField gf = apply(plain, f, 0, gamma).d[0];
    const SpinorField gphi = apply(hat, phi1, 0, gamma).d[0];
    SpinorField rhs = scalar_times_spinor(gf, F, phi1.d[0]);
    rhs += scalar_times_spinor(f.d[0], F, gphi);
    rhs += scalar_times_spinor(f.d[0], Mat4(F * cm - cm * F), phi1.d[0]);
    lhs -= rhs;
    return l2_norm(lhs);
  }

  const Mat4& H = pair.H;
  const auto prod = detail::bilinear_jet(phi1, H, phi2, to);
  ComplexScalarField lhs = apply(plain, prod, 0, gamma).d[0];
  const SpinorField g1 = apply(hat, phi1, 0, gamma).d[0];
  const SpinorField g2 = apply(hat, phi2, 0, gamma).d[0];
  ComplexScalarField rhs = bilinear(g1, H, phi2.d[0]);
  rhs += bilinear(phi1.d[0], H, g2);
  if (c == LeibnizCase::BilinearRotation) {
    rhs.axpy(-1.0, bilinear(phi1.d[0], Mat4(cm * H - H * cm), phi2.d[0]));
  } else if (c == LeibnizCase::BilinearBoost) {
    rhs += bilinear(phi1.d[0], Mat4(cm * H + H * cm), phi2.d[0]);
  }
  lhs -= rhs;
  return l2_norm(lhs);
}

// ---------------------------------------------------------------------------
// The full identity sweep on the registered corpora.

struct IdentityRow {
  std::string kind;       // "commutator" or "leibniz"
  std::string relation;   // "-Box", "Dirac" or a leibniz_case_name
  std::string field;      // VectorFieldId::name()
  std::string function;   // corpus entry
  double residual = 0.0;
};

/// Pair used for the Leibniz rows: F = I + i/2 gamma^1 gamma^2, H = gamma^0 + I/4.
/// Both admissible; neither commutes with the matrix terms.
inline InteractionPair leibniz_test_pair(const GammaSet& g) {
  return {Mat4::Identity() + cplx(0.0, 0.5) * g[1] * g[2], g[0] + 0.25 * Mat4::Identity()};
}

/// Commutator residuals of -Box (scalar corpus, plain fields and L0) and of the
/// Dirac operator (spinor corpus, modified fields and L0) at time t_comm, and
/// every Leibniz case on the band-limited corpus at time t_leib.
inline std::vector<IdentityRow> identity_suite(const Grid& g, const GammaSet& gamma, double t_comm = 0.8,
                                               double t_leib = 1.2) {
  std::vector<IdentityRow> rows;
  auto family_with_scaling = [](bool modified) {
    std::vector<VectorFieldId> ops;
    for (const auto& op : vector_field_family(modified)) ops.push_back(op);
    ops.push_back(VectorFieldId::scaling());
    return ops;
  };
  for (const auto& f : scalar_corpus(g)) {
    const CommutatorProbe<ScalarField> p(WaveOperator::KleinGordon, f.jet(t_comm, 3), gamma);
    for (const auto& op : family_with_scaling(false))
      rows.push_back({"commutator", "-Box", op.name(), f.name, p.residual(op)});
  }
  for (const auto& f : spinor_corpus(g)) {
    const CommutatorProbe<SpinorField> p(WaveOperator::Dirac, f.jet(t_comm, 2), gamma);
    for (const auto& op : family_with_scaling(true))
      rows.push_back({"commutator", "Dirac", op.name(), f.name, p.residual(op)});
  }

  const auto sc = band_limited_scalar_corpus(g)[0];
  const auto sp = band_limited_spinor_corpus(g);
  const auto f = sc.jet(t_leib, 1);
  const auto p1 = sp[0].jet(t_leib, 1), p2 = sp[1].jet(t_leib, 1);
  const auto pair = leibniz_test_pair(gamma);
  const std::string fs = sc.name + "*" + sp[0].name, bs = sp[0].name + "*" + sp[1].name;
  using K = VectorFieldId::Kind;
  auto add = [&](LeibnizCase c, const VectorFieldId& op, const std::string& fn) {
    rows.push_back({"leibniz", leibniz_case_name(c), op.name(), fn, leibniz_residual(c, op, f, p1, p2, pair, gamma)});
  };
  for (const auto& op : vector_field_family(false)) {
    if (op.kind == K::Partial) {
      add(LeibnizCase::BilinearPartial, op, bs);
    } else if (op.kind == K::Rotation) {
      add(LeibnizCase::ScalarSpinorRotation, op, fs);
      add(LeibnizCase::BilinearRotation, op, bs);
    } else {
      add(LeibnizCase::ScalarSpinorBoost, op, fs);
      add(LeibnizCase::BilinearBoost, op, bs);
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Pointwise equivalence of hatted and plain vector-field sums.

/// Bound C(K) with sum_{|I|<=K} |Gamma^^I f| <= C(K) sum_{|I|<=K} |Gamma^I f| (and
/// the reverse), from expanding prod (Gamma_k - c_k) over canonical words and
/// the operator norms |c_k|.
inline double equivalence_constant(int K, const GammaSet& gamma) {
  const auto fam = vector_field_family(true);
  std::array<double, 15> cn{};
  for (int k = 0; k < 15; ++k) {
    Eigen::JacobiSVD<Mat4> svd(matrix_term(fam[k], gamma));
    cn[k] = svd.singularValues()(0);
  }
  std::map<std::vector<int>, double> weight;
  std::vector<int> word;
  std::function<void(int, int)> words = [&](int min_idx, int depth) {
    const int len = static_cast<int>(word.size());
    for (int mask = 0; mask < (1 << len); ++mask) {
      double w = 1.0;
      std::vector<int> rest;
      for (int i = 0; i < len; ++i) {
        if (mask & (1 << i))
          w *= cn[word[i]];
        else
          rest.push_back(word[i]);
      }
      if (w > 0.0) weight[rest] += w;
    }
    if (depth == K) return;
    for (int k = min_idx; k < 15; ++k) {
      word.push_back(k);
      words(k, depth + 1);
      word.pop_back();
    }
  };
  words(0, 0);
  double c = 0.0;
  for (const auto& [w, v] : weight) c = std::max(c, v);
  return c;
}

struct EquivalenceRatios {
  double hat_over_plain = 0.0;
  double plain_over_hat = 0.0;
  std::size_t valid_points = 0;
};

inline EquivalenceRatios norm_equivalence_check(const Jet<SpinorField>& f, int K, const GammaSet& gamma,
                                                double floor = 1e-14) {
  if (K < 1) throw std::invalid_argument("norm_equivalence_check: K must be >= 1");
  const Grid& g = f.grid();
  ScalarField hat_sum(g), plain_sum(g);
  auto accumulate = [](ScalarField& acc) {
    return [&acc](const MultiIndex&, const SpinorField& v) {
      for (std::size_t p = 0; p < v.points(); ++p) acc(p) += modulus(v, p);
    };
  };
  for_each_word(f, K, vector_field_family(true), gamma, accumulate(hat_sum));
  for_each_word(f, K, vector_field_family(false), gamma, accumulate(plain_sum));
  EquivalenceRatios r;
  for (std::size_t p = 0; p < g.points(); ++p) {
    if (hat_sum(p) < floor || plain_sum(p) < floor) continue;
    ++r.valid_points;
    r.hat_over_plain = std::max(r.hat_over_plain, hat_sum(p) / plain_sum(p));
    r.plain_over_hat = std::max(r.plain_over_hat, plain_sum(p) / hat_sum(p));
  }
  return r;
}

/// Fraction of the L2 mass sitting where some |x_a| > frac * L; x-weighted
/// operators are not meaningful there on the torus.
template <class T, int C>
double edge_mass_fraction(const Field<T, C>& f, double frac = 0.9) {
  const Grid& g = f.grid();
  const double lim = frac * g.half_length();
  double edge = 0.0, total = 0.0;
  for (std::size_t p = 0; p < g.points(); ++p) {
    const auto x = g.point(p);
    const double m = modulus(f, p);
    total += m * m;
    if (std::abs(x[0]) > lim || std::abs(x[1]) > lim || std::abs(x[2]) > lim || std::abs(x[3]) > lim) edge += m * m;
  }
  return total > 0.0 ? std::sqrt(edge / total) : 0.0;
}

}  // namespace dkg
