// Exact per-mode propagators for the Klein-Gordon and Dirac equations with
// Duhamel source terms, and an explicit RK4 method-of-lines integrator used as
// an independent oracle.
//
//   Klein-Gordon:  u_tt - Lap u + m^2 u = G
//     u^(t) = c(t) u0^ + s(t) u1^ + int_0^t s(t - s') G^(s') ds',
//     c(t) = cos(w t), s(t) = sin(w t)/w, w = (|xi|^2 + m^2)^{1/2}.
//   Dirac:  -i gamma^mu d_mu psi + M psi = G   <=>   psi_t = -i Hs psi + i gamma^0 G,
//     Hs(xi) = sum_a xi_a gamma^0 gamma^a + M gamma^0, Hs^2 = (|xi|^2 + M^2) I,
//     U(t) = exp(-i Hs t) = cos(w t) I - i (sin(w t)/w) Hs.
#pragma once

#include "dkg/field.hpp"
#include "dkg/gamma.hpp"
#include "dkg/norms.hpp"
#include "dkg/trajectory.hpp"

#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dkg {

class MissingSourceNode : public std::out_of_range {
 public:
  explicit MissingSourceNode(std::size_t node)
      : std::out_of_range("source provider has no snapshot at node " + std::to_string(node)) {}
};

class BlowUp : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// sin(w tau)/w with the removable singularity at w tau -> 0.
inline double sinc_kernel(double w, double tau) {
  const double z = w * tau;
  if (std::abs(z) < 1e-4) return tau * (1.0 - z * z / 6.0);
  return std::sin(z) / w;
}

/// Weights for int_{t_k}^{t_{k+1}} g over a uniform grid with `intervals`
/// intervals, using the cubic interpolant on four surrounding nodes (one-sided
/// at the ends). Fewer nodes fall back to quadratic/trapezoid rules.
struct IntervalRule {
  std::size_t first = 0;
  int count = 0;
  std::array<double, 4> w{};
};

inline IntervalRule interval_rule(std::size_t k, std::size_t intervals) {
  if (k >= intervals) throw std::out_of_range("interval_rule: interval index out of range");
  if (intervals == 1) return {k, 2, {0.5, 0.5, 0.0, 0.0}};
  if (intervals == 2) {
    if (k == 0) return {0, 3, {5.0 / 12, 8.0 / 12, -1.0 / 12, 0.0}};
    return {0, 3, {-1.0 / 12, 8.0 / 12, 5.0 / 12, 0.0}};
  }
  if (k == 0) return {0, 4, {9.0 / 24, 19.0 / 24, -5.0 / 24, 1.0 / 24}};
  if (k == intervals - 1) return {k - 2, 4, {1.0 / 24, -5.0 / 24, 19.0 / 24, 9.0 / 24}};
  return {k - 1, 4, {-1.0 / 24, 13.0 / 24, 13.0 / 24, -1.0 / 24}};
}

/// Cumulative integrals int_{t_0}^{t_k} g for samples on a uniform grid,
/// built from interval_rule.
inline std::vector<double> cumulative_integral(const std::vector<double>& g, double dt) {
  std::vector<double> out(g.size(), 0.0);
  if (g.size() < 2) return out;
  const std::size_t intervals = g.size() - 1;
  for (std::size_t k = 0; k < intervals; ++k) {
    const auto r = interval_rule(k, intervals);
    double s = 0.0;
    for (int i = 0; i < r.count; ++i) s += r.w[i] * g[r.first + i];
    out[k + 1] = out[k] + dt * s;
  }
  return out;
}

/// Source term for a linear evolution: nothing, snapshots at the time-grid
/// nodes, or an analytic function of time.
template <class F>
class SourceProvider {
 public:
  enum class Kind { None, Sampled, Analytic };

  static SourceProvider none() { return {}; }
  static SourceProvider sampled(std::size_t count, std::function<F(std::size_t)> at_node) {
    SourceProvider s;
    s.kind_ = Kind::Sampled;
    s.count_ = count;
    s.node_ = std::move(at_node);
    return s;
  }
  /// Borrows the vector; it must outlive the provider.
  static SourceProvider snapshots(const std::vector<F>& v) {
    return sampled(v.size(), [&v](std::size_t k) { return v[k]; });
  }
  static SourceProvider analytic(std::function<F(double)> at_time) {
    SourceProvider s;
    s.kind_ = Kind::Analytic;
    s.time_ = std::move(at_time);
    return s;
  }

  Kind kind() const { return kind_; }
  F node(std::size_t k) const {
    if (kind_ != Kind::Sampled || k >= count_) throw MissingSourceNode(k);
    return node_(k);
  }
  F at(double t) const {
    if (kind_ != Kind::Analytic) throw std::logic_error("source provider is not analytic");
    return time_(t);
  }

 private:
  Kind kind_ = Kind::None;
  std::size_t count_ = 0;
  std::function<F(std::size_t)> node_;
  std::function<F(double)> time_;
};

namespace detail {

/// Transformed source snapshots keyed by node, dropping nodes older than a window.
template <int C, class F>
class SpectralSourceCache {
 public:
  explicit SpectralSourceCache(const SourceProvider<F>& src) : src_(src) {}
  const Spectral<C>& node(std::size_t k) {
    auto it = cache_.find(k);
    if (it == cache_.end()) it = cache_.emplace(k, forward_transform(src_.node(k))).first;
    return it->second;
  }
  void drop_before(std::size_t k) {
    while (!cache_.empty() && cache_.begin()->first < k) cache_.erase(cache_.begin());
  }

 private:
  const SourceProvider<F>& src_;
  std::map<std::size_t, Spectral<C>> cache_;
};

/// Quadrature nodes (time, weight*dt, sampled index or -1) for the integral
/// over [t_{k}, t_{k+1}].
struct QuadNode {
  double t;
  double weight;
  std::optional<std::size_t> node;
};

template <class F>
std::vector<QuadNode> step_quadrature(const SourceProvider<F>& src, const TimeGrid& tg, std::size_t k) {
  std::vector<QuadNode> q;
  if (src.kind() == SourceProvider<F>::Kind::Sampled) {
    const auto r = interval_rule(k, tg.steps);
    for (int i = 0; i < r.count; ++i) q.push_back({tg.time(r.first + i), r.w[i] * tg.dt, r.first + i});
  } else if (src.kind() == SourceProvider<F>::Kind::Analytic) {
    const double a = tg.time(k), b = tg.time(k + 1);
    q.push_back({a, tg.dt / 6.0, std::nullopt});
    q.push_back({0.5 * (a + b), 4.0 * tg.dt / 6.0, std::nullopt});
    q.push_back({b, tg.dt / 6.0, std::nullopt});
  }
  return q;
}

}  // namespace detail

/// Per-mode frequencies w = (|kappa|^2 + m^2)^{1/2} for the Klein-Gordon flow.
class KgPropagatorPlan {
 public:
  KgPropagatorPlan(const Grid& g, double mass) : grid_(g), mass_(mass), omega_(g.points()) {
    if (!(mass >= 0.0 && mass <= 1.0)) throw std::invalid_argument("kg: mass must lie in [0, 1]");
    for_each_mode(g, [&](std::size_t p, const std::array<double, 4>& k) {
      omega_[p] = std::sqrt(k[0] * k[0] + k[1] * k[1] + k[2] * k[2] + k[3] * k[3] + mass * mass);
    });
  }
  const Grid& grid() const { return grid_; }
  double mass() const { return mass_; }
  double omega(std::size_t p) const { return omega_[p]; }

 private:
  Grid grid_;
  double mass_;
  std::vector<double> omega_;
};

/// Per-mode Dirac data: w = <kappa>_M and the symbol Hs(kappa).
class DiracPropagatorPlan {
 public:
  DiracPropagatorPlan(const Grid& g, double mass, const GammaSet& gamma)
      : grid_(g), mass_(mass), gamma_(gamma), kernel_(gamma, mass), omega_(g.points()) {
    if (!(mass >= 0.0 && mass <= 1.0)) throw std::invalid_argument("dirac: mass must lie in [0, 1]");
    for_each_mode(g, [&](std::size_t p, const std::array<double, 4>& k) {
      omega_[p] = std::sqrt(k[0] * k[0] + k[1] * k[1] + k[2] * k[2] + k[3] * k[3] + mass * mass);
    });
  }
  const Grid& grid() const { return grid_; }
  double mass() const { return mass_; }
  const GammaSet& gamma() const { return gamma_; }
  double omega(std::size_t p) const { return omega_[p]; }
  Mat4 symbol(const std::array<double, 4>& kappa) const { return dirac_symbol(gamma_, kappa, mass_); }
  Vec4 apply_symbol(const std::array<double, 4>& kappa, const Vec4& v) const { return kernel_.apply(kappa, v); }

  /// U(tau) v = cos(w tau) v - i (sin(w tau)/w) Hs v.
  Vec4 propagate(const std::array<double, 4>& kappa, double w, double tau, const Vec4& v) const {
    return std::cos(w * tau) * v - cplx(0.0, sinc_kernel(w, tau)) * kernel_.apply(kappa, v);
  }

 private:
  Grid grid_;
  double mass_;
  GammaSet gamma_;
  SymbolKernel kernel_;
  std::vector<double> omega_;
};

namespace detail {
inline Vec4 load(const SpectralSpinor& s, std::size_t p) {
  return Vec4(s(p, 0), s(p, 1), s(p, 2), s(p, 3));
}
inline void store(SpectralSpinor& s, std::size_t p, const Vec4& v) {
  for (int c = 0; c < 4; ++c) s(p, c) = v(c);
}
}  // namespace detail

/// Klein-Gordon flow of (v0, v1) with source; returns v and d_t v at every node.
/// Node 0 reproduces (v0, v1) exactly.
inline ScalarTrajectory kg_evolve(const ScalarField& v0, const ScalarField& v1,
                                  const SourceProvider<ScalarField>& source, double mass,
                                  const TimeGrid& times) {
  const Grid& g = v0.grid();
  const KgPropagatorPlan plan(g, mass);
  const auto u0 = forward_transform(v0);
  const auto u1 = forward_transform(v1);
  SpectralScalar acc_c(g), acc_s(g);  // int c(s) G^ ds, int s(s) G^ ds
  detail::SpectralSourceCache<1, ScalarField> cache(source);

  ScalarTrajectory out;
  out.times = times;
  out.values.reserve(times.size());
  out.values.push_back(v0);
  out.rates.emplace(0, v1);

  for (std::size_t k = 0; k < times.steps; ++k) {
    for (const auto& q : detail::step_quadrature(source, times, k)) {
      const SpectralScalar* gh = nullptr;
      SpectralScalar tmp;
      if (q.node) {
        gh = &cache.node(*q.node);
      } else {
        tmp = forward_transform(source.at(q.t));
        gh = &tmp;
      }
      for_each_mode(g, [&](std::size_t p, const std::array<double, 4>&) {
        const double w = plan.omega(p);
        acc_c(p) += q.weight * std::cos(w * q.t) * (*gh)(p);
        acc_s(p) += q.weight * sinc_kernel(w, q.t) * (*gh)(p);
      });
    }
    if (k >= 1) cache.drop_before(k - 1);

    const double t = times.time(k + 1);
    SpectralScalar uh(g), uth(g);
    for_each_mode(g, [&](std::size_t p, const std::array<double, 4>&) {
      const double w = plan.omega(p);
      const double c = std::cos(w * t), s = sinc_kernel(w, t);
      uh(p) = c * u0(p) + s * u1(p) + s * acc_c(p) - c * acc_s(p);
      uth(p) = -w * w * s * u0(p) + c * u1(p) + c * acc_c(p) + w * w * s * acc_s(p);
    });
    out.values.push_back(inverse_transform(uh));
    out.rates.emplace(k + 1, inverse_transform(uth));
  }
  return out;
}

struct DiracEvolveOptions {
  /// Store d_t psi at nodes k with k % rate_stride == 0 (0 = never).
  std::size_t rate_stride = 0;
};

/// Dirac flow of psi0 with source G in -i gamma^mu d_mu psi + M psi = G.
/// Node 0 reproduces psi0 exactly.
inline SpinorTrajectory dirac_evolve(const SpinorField& psi0, const SourceProvider<SpinorField>& source,
                                     double mass, const TimeGrid& times, const GammaSet& gamma,
                                     DiracEvolveOptions opts = {}) {
  const Grid& g = psi0.grid();
  const DiracPropagatorPlan plan(g, mass, gamma);
  const auto p0 = forward_transform(psi0);
  SpectralSpinor acc(g);  // int U(-s) i gamma^0 G^(s) ds
  detail::SpectralSourceCache<4, SpinorField> cache(source);
  const Mat4 ig0 = cplx(0.0, 1.0) * gamma[0];

  auto want_rate = [&](std::size_t k) { return opts.rate_stride > 0 && k % opts.rate_stride == 0; };

  SpinorTrajectory out;
  out.times = times;
  out.values.reserve(times.size());
  out.values.push_back(psi0);

  auto rate_at = [&](std::size_t k, const SpectralSpinor& ph) {
    std::optional<SpectralSpinor> gh;
    if (source.kind() == SourceProvider<SpinorField>::Kind::Sampled)
      gh = cache.node(k);
    else if (source.kind() == SourceProvider<SpinorField>::Kind::Analytic)
      gh = forward_transform(source.at(times.time(k)));
    SpectralSpinor r(g);
    for_each_mode(g, [&](std::size_t p, const std::array<double, 4>& kappa) {
      Vec4 v = cplx(0.0, -1.0) * plan.apply_symbol(kappa, detail::load(ph, p));
      if (gh) v += ig0 * detail::load(*gh, p);
      detail::store(r, p, v);
    });
    return inverse_transform(r);
  };

  if (want_rate(0)) out.rates.emplace(0, rate_at(0, p0));

  for (std::size_t k = 0; k < times.steps; ++k) {
    for (const auto& q : detail::step_quadrature(source, times, k)) {
      const SpectralSpinor* gh = nullptr;
      SpectralSpinor tmp;
      if (q.node) {
        gh = &cache.node(*q.node);
      } else {
        tmp = forward_transform(source.at(q.t));
        gh = &tmp;
      }
      for_each_mode(g, [&](std::size_t p, const std::array<double, 4>& kappa) {
        const Vec4 src = ig0 * detail::load(*gh, p);
        const Vec4 v = plan.propagate(kappa, plan.omega(p), -q.t, src);
        for (int c = 0; c < 4; ++c) acc(p, c) += q.weight * v(c);
      });
    }
    if (k >= 1) cache.drop_before(k - 1);

    const double t = times.time(k + 1);
    SpectralSpinor ph(g);
    for_each_mode(g, [&](std::size_t p, const std::array<double, 4>& kappa) {
      const Vec4 v = detail::load(p0, p) + detail::load(acc, p);
      detail::store(ph, p, plan.propagate(kappa, plan.omega(p), t, v));
    });
    if (want_rate(k + 1)) out.rates.emplace(k + 1, rate_at(k + 1, ph));
    out.values.push_back(inverse_transform(ph));
  }
  return out;
}

/// Spatial part of the Dirac flow: -gamma^0 gamma^a d_a psi - i M gamma^0 psi,
/// i.e. the symbol -i Hs(kappa).
inline SpinorField dirac_spatial_operator(const SpinorField& psi, double mass, const GammaSet& gamma) {
  auto s = forward_transform(psi);
  const SymbolKernel kernel(gamma, mass);
  for_each_mode(psi.grid(), [&](std::size_t p, const std::array<double, 4>& kappa) {
    const Vec4 v = cplx(0.0, -1.0) * kernel.apply(kappa, detail::load(s, p));
    detail::store(s, p, v);
  });
  return inverse_transform(s);
}

/// State of the first-order method-of-lines system (psi, v, d_t v).
struct MolState {
  SpinorField psi;
  ScalarField v;
  ScalarField vt;

  MolState& axpy(double a, const MolState& o) {
    psi.axpy(a, o.psi);
    v.axpy(a, o.v);
    vt.axpy(a, o.vt);
    return *this;
  }
};

/// Right-hand side of
///   psi_t = -i Hs psi + i gamma^0 (coupling v F psi + G_dirac(t)),
///   v_tt  = Lap v - m^2 v + coupling Re(psi^* H psi) + G_kg(t).
struct MolSystem {
  GammaSet gamma = GammaSet::standard();
  double dirac_mass = 0.0;
  double kg_mass = 0.0;
  std::optional<InteractionPair> coupling;
  std::function<SpinorField(double)> dirac_source;
  std::function<ScalarField(double)> kg_source;

  MolState rhs(double t, const MolState& s) const {
    MolState d{dirac_spatial_operator(s.psi, dirac_mass, gamma), s.vt, laplacian(s.v)};
    d.vt.axpy(-kg_mass * kg_mass, s.v);
    const Mat4 ig0 = cplx(0.0, 1.0) * gamma[0];
    if (coupling) {
      d.psi += apply_matrix(ig0, scalar_times_spinor(s.v, coupling->F, s.psi));
      d.vt += real_part(bilinear(s.psi, coupling->H, s.psi));
    }
    if (dirac_source) d.psi += apply_matrix(ig0, dirac_source(t));
    if (kg_source) d.vt += kg_source(t);
    return d;
  }
};

/// Classical RK4 step.
inline MolState rk4_step(const MolSystem& sys, double t, const MolState& s, double dt) {
  const MolState k1 = sys.rhs(t, s);
  MolState y = s;
  y.axpy(0.5 * dt, k1);
  const MolState k2 = sys.rhs(t + 0.5 * dt, y);
  y = s;
  y.axpy(0.5 * dt, k2);
  const MolState k3 = sys.rhs(t + 0.5 * dt, y);
  y = s;
  y.axpy(dt, k3);
  const MolState k4 = sys.rhs(t + dt, y);
  MolState out = s;
  out.axpy(dt / 6.0, k1).axpy(dt / 3.0, k2).axpy(dt / 3.0, k3).axpy(dt / 6.0, k4);
  return out;
}

/// Largest internal step accepted by the oracle: h/8.
inline double oracle_step_bound(const Grid& g) { return g.spacing() / 8.0; }

/// Integrates the method-of-lines system, calling observe(k, t, state) at each
/// output node of `times`. dt_internal must divide times.dt and be <= h/8.
inline void mol_integrate(const MolSystem& sys, MolState state, const TimeGrid& times, double dt_internal,
                          const std::function<void(std::size_t, double, const MolState&)>& observe,
                          double blowup = 1e6) {
  const Grid& g = state.psi.grid();
  if (!(dt_internal > 0.0) || dt_internal > oracle_step_bound(g) * (1.0 + 1e-12))
    throw std::invalid_argument("oracle: internal step exceeds stability bound h/8");
  const double r = times.dt / dt_internal;
  const auto sub = static_cast<std::size_t>(std::llround(r));
  if (times.steps > 0 && (sub == 0 || std::abs(r - static_cast<double>(sub)) > 1e-9 * r))
    throw std::invalid_argument("oracle: output step must be a multiple of the internal step");
  observe(0, times.time(0), state);
  for (std::size_t k = 0; k < times.steps; ++k) {
    for (std::size_t j = 0; j < sub; ++j) {
      const double t = times.time(k) + static_cast<double>(j) * dt_internal;
      state = rk4_step(sys, t, state, dt_internal);
    }
    const double norms = l2_norm(state.psi) + l2_norm(state.v) + l2_norm(state.vt);
    if (!(norms <= blowup)) throw BlowUp("oracle: field norm exceeded blow-up guard at t = " +
                                         std::to_string(times.time(k + 1)));
    observe(k + 1, times.time(k + 1), state);
  }
}

struct CoupledTrajectories {
  SpinorTrajectory psi;
  ScalarTrajectory v;  // rates hold d_t v at every node
};

/// Nonlinear Dirac-Klein-Gordon system integrated by RK4 in physical space
/// with spectral derivatives.
inline CoupledTrajectories coupled_direct_solve(const SpinorField& psi0, const ScalarField& v0,
                                                const ScalarField& v1, const InteractionPair& pair,
                                                double dirac_mass, double kg_mass, const TimeGrid& times,
                                                double dt_internal, const GammaSet& gamma = GammaSet::standard()) {
  if (!(dirac_mass >= 0.0 && dirac_mass <= 1.0 && kg_mass >= 0.0 && kg_mass <= 1.0))
    throw std::invalid_argument("oracle: masses must lie in [0, 1]");
  MolSystem sys;
  sys.gamma = gamma;
  sys.dirac_mass = dirac_mass;
  sys.kg_mass = kg_mass;
  sys.coupling = pair;
  CoupledTrajectories out;
  out.psi.times = out.v.times = times;
  mol_integrate(sys, MolState{psi0, v0, v1}, times, dt_internal,
                [&](std::size_t k, double, const MolState& s) {
                  out.psi.values.push_back(s.psi);
                  out.v.values.push_back(s.v);
                  out.v.rates.emplace(k, s.vt);
                });
  return out;
}

}  // namespace dkg
