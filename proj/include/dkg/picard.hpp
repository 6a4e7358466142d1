// The space X, its norm, the map T and plain Picard iteration.
//
// An iterate stores full trajectories (phi, u, d_t u) on the time grid plus,
// at every X-sample node, time jets of order K built from the linear equations
// the iterate solves:
//   phi^(j+1) = D phi^(j) + i gamma^0 S^(j),        S = u_in F phi_in
//   u^(j+2)   = Lap u^(j) - m^2 u^(j) + G^(j),       G = Re(phi_in^* H phi_in)
// where (phi_in, u_in) is the pair T was applied to and D = -i Hs(kappa).
#pragma once

#include "dkg/initial_data.hpp"
#include "dkg/propagate.hpp"
#include "dkg/vecfields.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dkg {

struct XNormConfig {
  int K = 2;
  double weight_exponent = 0.25;
  /// The sup in time runs over nodes k with k % sample_stride == 0.
  std::size_t sample_stride = 4;

  void validate(const TimeGrid& times) const {
    if (K < 0 || K > 2) throw std::invalid_argument("x-norm: K must be in [0, 2]");
    if (!(weight_exponent >= 0.0 && weight_exponent <= 1.0))
      throw std::invalid_argument("x-norm: weight exponent must be in [0, 1]");
    if (sample_stride == 0) throw std::invalid_argument("x-norm: sample stride must be positive");
    if (times.steps % sample_stride != 0)
      throw std::invalid_argument("x-norm: the number of time steps must be a multiple of the sample stride");
  }
  std::vector<std::size_t> sample_nodes(const TimeGrid& times) const {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k <= times.steps; k += sample_stride) out.push_back(k);
    return out;
  }
};

struct SampleJets {
  std::size_t node = 0;
  Jet<SpinorField> phi;
  Jet<ScalarField> u;
};

struct IteratePair {
  SpinorTrajectory phi;
  ScalarTrajectory u;  // rates hold d_t u at every node
  std::vector<SampleJets> jets;
};

struct XNorm {
  double phi_part = 0.0;  // sup_{t, I} ||Gamma^^I phi||_2
  double u_part = 0.0;    // sup_{t, I} <t>^{-w} ||Gamma^I u||_2
  double total() const { return phi_part + u_part; }
};

/// X-norm from jets at the sample nodes; jets must have order >= cfg.K.
inline XNorm x_norm_parts(const std::vector<SampleJets>& samples, const XNormConfig& cfg, const GammaSet& gamma) {
  XNorm r;
  const auto hat = vector_field_family(true), plain = vector_field_family(false);
  for (const auto& s : samples) {
    const double w = std::pow(japanese(s.u.t), -cfg.weight_exponent);
    for_each_word(s.phi, cfg.K, hat, gamma,
                  [&](const MultiIndex&, const SpinorField& v) { r.phi_part = std::max(r.phi_part, l2_norm(v)); });
    for_each_word(s.u, cfg.K, plain, gamma,
                  [&](const MultiIndex&, const ScalarField& v) { r.u_part = std::max(r.u_part, w * l2_norm(v)); });
  }
  return r;
}

inline double x_norm(const IteratePair& x, const XNormConfig& cfg, const GammaSet& gamma = GammaSet::standard()) {
  return x_norm_parts(x.jets, cfg, gamma).total();
}

/// X-norm of plain trajectories. Only K = 0 is available without jets.
inline double x_norm(const SpinorTrajectory& phi, const ScalarTrajectory& u, const XNormConfig& cfg) {
  if (cfg.K != 0) throw std::invalid_argument("x-norm: K > 0 needs time jets; use an IteratePair");
  cfg.validate(phi.times);
  std::vector<SampleJets> s;
  for (std::size_t k : cfg.sample_nodes(phi.times)) {
    const double t = phi.time(k);
    s.push_back({k, {t, {phi.values.at(k)}}, {t, {u.values.at(k)}}});
  }
  return x_norm_parts(s, cfg, GammaSet::standard()).total();
}

/// || a - b ||_X.
inline double x_distance(const IteratePair& a, const IteratePair& b, const XNormConfig& cfg,
                         const GammaSet& gamma = GammaSet::standard()) {
  if (a.jets.size() != b.jets.size()) throw std::invalid_argument("x-distance: sample mismatch");
  XNorm r;
  for (std::size_t i = 0; i < a.jets.size(); ++i) {
    SampleJets d = a.jets[i];
    d.phi -= b.jets[i].phi;
    d.u -= b.jets[i].u;
    const XNorm one = x_norm_parts({d}, cfg, gamma);
    r.phi_part = std::max(r.phi_part, one.phi_part);
    r.u_part = std::max(r.u_part, one.u_part);
  }
  return r.total();
}

struct PicardProblem {
  InitialData data;
  InteractionPair pair;
  double dirac_mass = 0.0;
  double kg_mass = 0.0;
  TimeGrid times;
  XNormConfig cfg;
  GammaSet gamma = GammaSet::standard();

  void validate() const {
    if (!(dirac_mass >= 0.0 && dirac_mass <= 1.0 && kg_mass >= 0.0 && kg_mass <= 1.0))
      throw std::invalid_argument("picard: masses must lie in [0, 1]");
    cfg.validate(times);
  }
};

/// Raised when phi^* H phi has an imaginary part above 1e-10 (H not Hermitian).
class HermiticityViolation : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

namespace detail {

inline ScalarField checked_real(const ComplexScalarField& c) {
  if (max_imag(c) > 1e-10)
    throw HermiticityViolation("source phi^* H phi has imaginary part " + std::to_string(max_imag(c)));
  return real_part(c);
}

inline ScalarField real_bilinear(const SpinorField& a, const Mat4& H, const SpinorField& b) {
  return checked_real(bilinear(a, H, b));
}

/// Sources and their time derivatives up to `order` at one node, from input jets.
inline std::pair<std::vector<SpinorField>, std::vector<ScalarField>> source_jets(const SampleJets& in,
                                                                                 const InteractionPair& pair,
                                                                                 int order) {
  std::vector<SpinorField> S;
  std::vector<ScalarField> G;
  for (int j = 0; j <= order; ++j) {
    SpinorField s(in.phi.grid());
    ComplexScalarField gsum(in.phi.grid());
    for (int i = 0; i <= j; ++i) {
      s.axpy(binomial(j, i), scalar_times_spinor(in.u.d[i], pair.F, in.phi.d[j - i]));
      gsum.axpy(binomial(j, i), bilinear(in.phi.d[i], pair.H, in.phi.d[j - i]));
    }
    S.push_back(std::move(s));
    G.push_back(checked_real(gsum));
  }
  return {std::move(S), std::move(G)};
}

inline SampleJets zero_jets(const Grid& g, std::size_t node, double t, int order) {
  SampleJets s{node, {t, {}}, {t, {}}};
  for (int j = 0; j <= order; ++j) {
    s.phi.d.emplace_back(g);
    s.u.d.emplace_back(g);
  }
  return s;
}

}  // namespace detail

/// The zero pair on the problem's grid and sample nodes.
inline IteratePair zero_pair(const PicardProblem& pb) {
  const Grid& g = pb.data.psi0.grid();
  IteratePair z;
  z.phi.times = z.u.times = pb.times;
  for (std::size_t k = 0; k < pb.times.size(); ++k) {
    z.phi.values.emplace_back(g);
    z.u.values.emplace_back(g);
    z.u.rates.emplace(k, ScalarField(g));
  }
  for (std::size_t k : pb.cfg.sample_nodes(pb.times)) z.jets.push_back(detail::zero_jets(g, k, pb.times.time(k), pb.cfg.K));
  return z;
}

/// T(phi, u): solves the two linear problems with sources u F phi and
/// phi^* H phi and data (psi0, v0, v1).
inline IteratePair apply_T(const IteratePair& in, const PicardProblem& pb) {
  pb.validate();
  if (in.phi.size() != pb.times.size() || in.u.size() != pb.times.size())
    throw std::invalid_argument("apply_T: input trajectories do not match the time grid");
  const InteractionPair& pair = pb.pair;
  const auto dirac_src = SourceProvider<SpinorField>::sampled(
      pb.times.size(), [&](std::size_t k) { return scalar_times_spinor(in.u.values[k], pair.F, in.phi.values[k]); });
  const auto kg_src = SourceProvider<ScalarField>::sampled(
      pb.times.size(), [&](std::size_t k) { return detail::real_bilinear(in.phi.values[k], pair.H, in.phi.values[k]); });

  IteratePair out;
  out.phi = dirac_evolve(pb.data.psi0, dirac_src, pb.dirac_mass, pb.times, pb.gamma);
  out.u = kg_evolve(pb.data.v0, pb.data.v1, kg_src, pb.kg_mass, pb.times);

  const int K = pb.cfg.K;
  const Mat4 ig0 = cplx(0.0, 1.0) * pb.gamma[0];
  const double m2 = pb.kg_mass * pb.kg_mass;
  for (std::size_t i = 0; i < in.jets.size(); ++i) {
    const SampleJets& sin = in.jets[i];
    if (sin.phi.order() < std::max(K - 1, 0) || sin.u.order() < std::max(K - 1, 0))
      throw std::invalid_argument("apply_T: input jets too short");
    const std::size_t k = sin.node;
    const double t = pb.times.time(k);
    const auto [S, G] = detail::source_jets(sin, pair, std::max(K - 1, 0));
    SampleJets s{k, {t, {out.phi.values[k]}}, {t, {out.u.values[k]}}};
    if (K >= 1) s.u.d.push_back(out.u.rate(k));
    for (int j = 0; j < K; ++j) {
      SpinorField next = dirac_spatial_operator(s.phi.d[j], pb.dirac_mass, pb.gamma);
      next += apply_matrix(ig0, S[j]);
      s.phi.d.push_back(std::move(next));
    }
    for (int j = 0; j + 2 <= K; ++j) {
      ScalarField next = laplacian(s.u.d[j]);
      next.axpy(-m2, s.u.d[j]);
      next += G[j];
      s.u.d.push_back(std::move(next));
    }
    out.jets.push_back(std::move(s));
  }
  return out;
}

/// Raised when successive X-distances grow twice in a row, or an early
/// iterate leaves the configured ball.
class IterationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct IterateOptions {
  double tol = 1e-8;
  std::size_t max_iter = 30;
  /// Upper bound on the X-norms of the first two iterates.
  double x_cap = std::numeric_limits<double>::infinity();
  double blowup = 1e6;
  std::function<void(std::size_t step, double distance, double ratio)> on_step;
};

struct IterationState {
  IteratePair current;
  std::size_t iterations = 0;      // applications of T after the seed
  std::vector<double> distances;   // d_k = || x_{k+1} - x_k ||_X
  std::vector<double> ratios;      // d_k / d_{k-1}, k >= 1
  std::vector<double> x_norms;     // || x_0 ||_X, || x_1 ||_X with x_0 = T(0, 0)
  double final_x_norm = 0.0;       // || current ||_X
  std::vector<double> step_seconds;
  bool converged = false;

  /// Last recorded ratio whose two distances both exceed `floor`; the early
  /// transient and roundoff-dominated tails are excluded by the caller's floor.
  double stable_ratio(double floor = 0.0) const {
    double r = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t k = 0; k < ratios.size(); ++k)
      if (distances[k] > floor && distances[k + 1] > floor) r = ratios[k];
    return r;
  }
  double max_ratio() const {
    double r = 0.0;
    for (double v : ratios) r = std::max(r, v);
    return r;
  }
};

inline IterationState iterate(const PicardProblem& pb, const IterateOptions& opts = {}) {
  pb.validate();
  using clock = std::chrono::steady_clock;
  IterationState st;
  auto t0 = clock::now();
  st.current = apply_T(zero_pair(pb), pb);
  st.x_norms.push_back(x_norm(st.current, pb.cfg, pb.gamma));
  st.step_seconds.push_back(std::chrono::duration<double>(clock::now() - t0).count());
  if (st.x_norms[0] > opts.x_cap) throw IterationFailure("picard: first iterate exceeds the X-norm cap");

  int increases = 0;
  double bound = st.x_norms[0];  // ||x_k|| <= ||x_0|| + sum of distances
  while (st.iterations < opts.max_iter) {
    t0 = clock::now();
    IteratePair next = apply_T(st.current, pb);
    const double d = x_distance(next, st.current, pb.cfg, pb.gamma);
    st.current = std::move(next);
    ++st.iterations;
    if (st.iterations == 1) st.x_norms.push_back(x_norm(st.current, pb.cfg, pb.gamma));
    bound += d;
    st.distances.push_back(d);
    double ratio = std::numeric_limits<double>::quiet_NaN();
    if (st.distances.size() >= 2) {
      const double prev = st.distances[st.distances.size() - 2];
      ratio = prev > 0.0 ? d / prev : 0.0;
      st.ratios.push_back(ratio);
      increases = d > prev ? increases + 1 : 0;
    }
    st.step_seconds.push_back(std::chrono::duration<double>(clock::now() - t0).count());
    if (opts.on_step) opts.on_step(st.iterations, d, ratio);

    if (!std::isfinite(d) || bound > opts.blowup)
      throw BlowUp("picard: iterate exceeded the blow-up guard");
    if (st.iterations == 1 && st.x_norms.back() > opts.x_cap)
      throw IterationFailure("picard: second iterate exceeds the X-norm cap");
    if (d <= opts.tol) {
      st.converged = true;
      break;
    }
    if (increases >= 2) throw IterationFailure("picard: X-distance increased twice in a row");
  }
  st.final_x_norm = st.iterations <= 1 ? st.x_norms.back() : x_norm(st.current, pb.cfg, pb.gamma);
  return st;
}

/// Geometric mean of a.ratios[k] / b.ratios[k] over the step indices k both
/// runs recorded with distances above `rel_floor` times their first distance.
/// Ratios of one run drift with the step index, so runs are compared index by
/// index. NaN when no index qualifies.
inline double ratio_scaling(const IterationState& a, const IterationState& b, double rel_floor = 1e-6) {
  auto ok = [&](const IterationState& s, std::size_t k) {
    const double f = rel_floor * s.distances.front();
    return s.distances[k] > f && s.distances[k + 1] > f && s.ratios[k] > 0.0;
  };
  double log_sum = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < std::min(a.ratios.size(), b.ratios.size()); ++k)
    if (ok(a, k) && ok(b, k)) {
      log_sum += std::log(a.ratios[k] / b.ratios[k]);
      ++count;
    }
  return count ? std::exp(log_sum / static_cast<double>(count)) : std::numeric_limits<double>::quiet_NaN();
}

/// CSV log: step, X-distance, ratio (empty for the first step).
inline void write_iteration_log(std::ostream& os, const IterationState& st) {
  os << "step,x_distance,ratio\n";
  os.precision(17);
  for (std::size_t k = 0; k < st.distances.size(); ++k) {
    os << (k + 1) << ',' << st.distances[k] << ',';
    if (k >= 1) os << st.ratios[k - 1];
    os << '\n';
  }
}

namespace detail {

/// 4th-order first and second derivative stencils on a uniform grid, one-sided
/// near the ends.
template <class F>
F time_derivative(const std::vector<F>& v, std::size_t k, double dt, int order) {
  const std::size_t n = v.size();
  if (n < 6) throw std::invalid_argument("fixed_point_residual: need at least 6 time nodes");
  F out(v[0].grid());
  auto add = [&](std::size_t idx, double w) { out.axpy(w, v[idx]); };
  if (order == 1) {
    static constexpr double c[5] = {1.0 / 12, -8.0 / 12, 0.0, 8.0 / 12, -1.0 / 12};
    static constexpr double f[5] = {-25.0 / 12, 48.0 / 12, -36.0 / 12, 16.0 / 12, -3.0 / 12};
    if (k >= 2 && k + 2 < n) {
      for (int i = 0; i < 5; ++i) add(k - 2 + i, c[i]);
    } else if (k < 2) {
      // Shifted forward stencil: derivative at offset k from the first of five nodes.
      if (k == 0)
        for (int i = 0; i < 5; ++i) add(i, f[i]);
      else {
        static constexpr double s1[5] = {-3.0 / 12, -10.0 / 12, 18.0 / 12, -6.0 / 12, 1.0 / 12};
        for (int i = 0; i < 5; ++i) add(i, s1[i]);
      }
    } else {
      const std::size_t b = n - 5;
      if (k == n - 1)
        for (int i = 0; i < 5; ++i) add(b + i, -f[4 - i]);
      else {
        static constexpr double s1[5] = {-3.0 / 12, -10.0 / 12, 18.0 / 12, -6.0 / 12, 1.0 / 12};
        for (int i = 0; i < 5; ++i) add(b + i, -s1[4 - i]);
      }
    }
    out *= 1.0 / dt;
  } else {
    static constexpr double c[5] = {-1.0 / 12, 16.0 / 12, -30.0 / 12, 16.0 / 12, -1.0 / 12};
    static constexpr double f0[6] = {45.0 / 12, -154.0 / 12, 214.0 / 12, -156.0 / 12, 61.0 / 12, -10.0 / 12};
    static constexpr double f1[6] = {10.0 / 12, -15.0 / 12, -4.0 / 12, 14.0 / 12, -6.0 / 12, 1.0 / 12};
    if (k >= 2 && k + 2 < n) {
      for (int i = 0; i < 5; ++i) add(k - 2 + i, c[i]);
    } else if (k < 2) {
      const double* w = k == 0 ? f0 : f1;
      for (int i = 0; i < 6; ++i) add(i, w[i]);
    } else {
      const std::size_t b = n - 6;
      const double* w = k == n - 1 ? f0 : f1;
      for (int i = 0; i < 6; ++i) add(b + i, w[5 - i]);
    }
    out *= 1.0 / (dt * dt);
  }
  return out;
}

}  // namespace detail

struct PdeResidual {
  double dirac = 0.0;
  double kg = 0.0;
};

/// Max over stored times of || -i gamma^mu d_mu psi + M psi - v F psi ||_2 and
/// || -Box v + m^2 v - psi^* H psi ||_2, with time derivatives from 4th-order
/// finite differences along the trajectory and spectral space derivatives.
inline PdeResidual fixed_point_residual(const SpinorTrajectory& psi, const ScalarTrajectory& v,
                                        const InteractionPair& pair, double dirac_mass, double kg_mass,
                                        const GammaSet& gamma = GammaSet::standard()) {
  if (psi.size() != v.size()) throw std::invalid_argument("fixed_point_residual: trajectory length mismatch");
  const double dt = psi.times.dt;
  const Mat4 mig0 = cplx(0.0, -1.0) * gamma[0];
  PdeResidual r;
  for (std::size_t k = 0; k < psi.size(); ++k) {
    // -i g^0 psi_t - i g^a d_a psi + M psi = -i g^0 (psi_t - D psi), D = -i Hs.
    SpinorField e = detail::time_derivative(psi.values, k, dt, 1);
    e -= dirac_spatial_operator(psi.values[k], dirac_mass, gamma);
    SpinorField dres = apply_matrix(mig0, e);
    dres -= scalar_times_spinor(v.values[k], pair.F, psi.values[k]);
    r.dirac = std::max(r.dirac, l2_norm(dres));

    ScalarField kres = detail::time_derivative(v.values, k, dt, 2);
    kres -= laplacian(v.values[k]);
    kres.axpy(kg_mass * kg_mass, v.values[k]);
    kres -= real_part(bilinear(psi.values[k], pair.H, psi.values[k]));
    r.kg = std::max(r.kg, l2_norm(kres));
  }
  return r;
}

struct Calibration {
  double epsilon0 = 0.0;
  std::vector<std::pair<double, double>> probes;  // (epsilon, ||x_2||_X / ||x_1||_X)
};

/// Largest epsilon (to relative precision rel_tol) with ||T(x_1)||_X <= growth * ||x_1||_X,
/// x_1 = T(0, 0), for data make_data(epsilon).
inline Calibration calibrate_epsilon(const std::function<InitialData(double)>& make_data, PicardProblem pb,
                                     double start = 0.01, double growth = 2.0, double rel_tol = 0.02,
                                     double eps_max = 1e3) {
  Calibration c;
  auto ratio = [&](double eps) {
    pb.data = make_data(eps);
    const IteratePair x1 = apply_T(zero_pair(pb), pb);
    const double n1 = x_norm(x1, pb.cfg, pb.gamma);
    const IteratePair x2 = apply_T(x1, pb);
    const double q = x_norm(x2, pb.cfg, pb.gamma) / n1;
    c.probes.emplace_back(eps, q);
    return q;
  };
  double lo = start, hi = start;
  if (ratio(start) <= growth) {
    while (hi < eps_max) {
      hi *= 2.0;
      if (ratio(hi) > growth) break;
      lo = hi;
    }
    if (hi >= eps_max) {
      c.epsilon0 = eps_max;
      return c;
    }
  } else {
    while (lo > 1e-12) {
      lo /= 2.0;
      if (ratio(lo) <= growth) break;
      hi = lo;
    }
  }
  while (hi / lo > 1.0 + rel_tol) {
    const double mid = std::sqrt(lo * hi);
    (ratio(mid) <= growth ? lo : hi) = mid;
  }
  c.epsilon0 = lo;
  return c;
}

}  // namespace dkg
