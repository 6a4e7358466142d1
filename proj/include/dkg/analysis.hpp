// Energies, inequality monitors, the Klainerman-Sobolev ratio, decay fits and
// the mass sweep.
#pragma once

#include "dkg/picard.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace dkg {

/// E_m = int (u_t^2 + |grad u|^2 + m^2 u^2) dx.
inline double energy(const ScalarField& u, const ScalarField& ut, double m) {
  const auto grad = gradient(u);
  double acc = 0.0;
  for (std::size_t p = 0; p < u.points(); ++p) {
    double e = ut(p) * ut(p) + m * m * u(p) * u(p);
    for (const auto& d : grad) e += d(p) * d(p);
    acc += e;
  }
  return acc * u.grid().cell_volume();
}

struct MonitorReport {
  std::string id;
  std::vector<double> times;
  std::vector<double> left;
  std::vector<double> right;
  std::vector<double> slack;  // right - left

  double worst_slack() const {
    double w = std::numeric_limits<double>::infinity();
    for (double s : slack) w = std::min(w, s);
    return w;
  }
  /// left / right per time; 0 where the right side vanishes.
  std::vector<double> ratios() const {
    std::vector<double> r(left.size());
    for (std::size_t k = 0; k < r.size(); ++k) r[k] = right[k] > 0.0 ? left[k] / right[k] : 0.0;
    return r;
  }
  double max_ratio() const {
    double m = 0.0;
    for (double r : ratios()) m = std::max(m, r);
    return m;
  }
  bool all_finite() const {
    auto fin = [](const std::vector<double>& v) { return std::ranges::all_of(v, [](double x) { return std::isfinite(x); }); };
    return fin(left) && fin(right) && fin(slack);
  }
};

namespace detail {

template <class A, class B>
void check_matching(const Trajectory<A>& a, const Trajectory<B>& b, const char* who) {
  if (a.size() != b.size() || a.times.dt != b.times.dt || a.times.t0 != b.times.t0)
    throw std::invalid_argument(std::string(who) + ": trajectories have different time grids");
}

inline MonitorReport make_report(std::string id, const TimeGrid& times, std::vector<double> left,
                                 std::vector<double> right) {
  MonitorReport r{std::move(id), {}, std::move(left), std::move(right), {}};
  for (std::size_t k = 0; k < r.left.size(); ++k) {
    r.times.push_back(times.time(k));
    r.slack.push_back(r.right[k] - r.left[k]);
  }
  return r;
}

template <class F>
std::vector<double> norm_series(const Trajectory<F>& f, LpNorm p) {
  std::vector<double> out;
  for (const auto& v : f.values) out.push_back(lebesgue_norm(v, p));
  return out;
}

}  // namespace detail

/// left = ||psi(t)||_2, right = ||psi(0)||_2 + int_0^t ||G(s)||_2 ds.
inline MonitorReport monitor_dirac_l2(const SpinorTrajectory& psi, const SpinorTrajectory& source) {
  detail::check_matching(psi, source, "monitor_dirac_l2");
  auto right = cumulative_integral(detail::norm_series(source, LpNorm::L2), psi.times.dt);
  const double n0 = l2_norm(psi.values.at(0));
  for (double& r : right) r += n0;
  return detail::make_report("dirac_l2", psi.times, detail::norm_series(psi, LpNorm::L2), std::move(right));
}

/// left = ||u(t)||_2. For m = 1 the right side is
///   ||u0||_2 + ||u1||_2 + int_0^t ||G||_2 ds,
/// otherwise
///   ||u0||_2 + ||u1||_1 + ||u1||_2 + int_{t_1}^t (s^d ||G||_2 + s^{-d} ||G||_1) ds
/// with d = delta1, starting at the first positive node t_1.
inline MonitorReport monitor_kg_l2(const ScalarTrajectory& u, const ScalarTrajectory& source, double m,
                                   double delta1 = 0.75) {
  detail::check_matching(u, source, "monitor_kg_l2");
  const ScalarField& u1 = u.rate(0);
  const double dt = u.times.dt;
  std::vector<double> right(u.size());
  if (m == 1.0) {
    right = cumulative_integral(detail::norm_series(source, LpNorm::L2), dt);
    for (double& r : right) r += l2_norm(u.values[0]) + l2_norm(u1);
  } else {
    const double base = l2_norm(u.values[0]) + lebesgue_norm(u1, LpNorm::L1) + l2_norm(u1);
    right[0] = base;
    if (u.size() > 1) {
      std::vector<double> h;
      for (std::size_t k = 1; k < u.size(); ++k) {
        const double s = u.time(k);
        h.push_back(std::pow(s, delta1) * l2_norm(source.values[k]) +
                    std::pow(s, -delta1) * lebesgue_norm(source.values[k], LpNorm::L1));
      }
      const auto c = cumulative_integral(h, dt);
      for (std::size_t k = 1; k < u.size(); ++k) right[k] = base + c[k - 1];
    }
  }
  return detail::make_report("kg_l2", u.times, detail::norm_series(u, LpNorm::L2), std::move(right));
}

/// left = E_m(t)^{1/2}, right = E_m(0)^{1/2} + int_0^t ||G||_2 ds. Needs d_t u at every node.
inline MonitorReport monitor_energy(const ScalarTrajectory& u, const ScalarTrajectory& source, double m) {
  detail::check_matching(u, source, "monitor_energy");
  std::vector<double> left;
  for (std::size_t k = 0; k < u.size(); ++k) left.push_back(std::sqrt(energy(u.values[k], u.rate(k), m)));
  auto right = cumulative_integral(detail::norm_series(source, LpNorm::L2), u.times.dt);
  for (double& r : right) r += left[0];
  return detail::make_report("energy", u.times, std::move(left), std::move(right));
}

/// Time jets of a source-free Klein-Gordon trajectory at nodes k % stride == 0:
/// levels 0 and 1 from the stored values and rates, higher levels from
/// u^(j+2) = Lap u^(j) - m^2 u^(j).
inline std::vector<Jet<ScalarField>> free_kg_jets(const ScalarTrajectory& u, double m, int order, std::size_t stride) {
  if (order < 0 || stride == 0) throw std::invalid_argument("free_kg_jets: order must be >= 0 and stride positive");
  std::vector<Jet<ScalarField>> out;
  for (std::size_t k = 0; k < u.size(); k += stride) {
    Jet<ScalarField> j{u.time(k), {u.values[k]}};
    if (order >= 1) j.d.push_back(u.rate(k));
    for (int l = 2; l <= order; ++l) {
      ScalarField next = laplacian(j.d[l - 2]);
      next.axpy(-m * m, j.d[l - 2]);
      j.d.push_back(std::move(next));
    }
    out.push_back(std::move(j));
  }
  return out;
}

/// max_x |f(t)| <t>^{3/2} / sup_{s in [0, 2t]} sum_{|I| <= K} ||Gamma^I f(s)||_2, the sup
/// running over the supplied jets. Spinors use the modified fields. 0 when the
/// denominator vanishes.
template <class F>
double ks_ratio(const Trajectory<F>& f, const std::vector<Jet<F>>& jets, double t, int K = 2,
                const GammaSet& gamma = GammaSet::standard()) {
  const double tol = 1e-9 * std::max(1.0, t);
  const double kk = (t - f.times.t0) / f.times.dt;
  const auto k = static_cast<std::size_t>(std::llround(kk));
  if (t < f.times.t0 || std::abs(kk - static_cast<double>(k)) > 1e-9 * std::max(1.0, kk) || k >= f.size())
    throw std::invalid_argument("ks_ratio: t is not a stored time");
  if (f.times.end() < 2.0 * t - tol || jets.empty() || jets.back().t < 2.0 * t - tol)
    throw std::invalid_argument("ks_ratio: the trajectory must extend to 2t");

  const bool spinor = std::is_same_v<F, SpinorField>;
  const auto family = vector_field_family(spinor);
  double denom = 0.0;
  for (const auto& j : jets) {
    if (j.t > 2.0 * t + tol) break;
    double sum = 0.0;
    for_each_word(j, K, family, gamma, [&](const MultiIndex&, const F& v) { sum += l2_norm(v); });
    denom = std::max(denom, sum);
  }
  if (denom == 0.0) return 0.0;
  return sup_norm(f.values[k]) * std::pow(japanese(t), 1.5) / denom;
}

struct DecayFit {
  double t1 = 0.0;
  double t2 = 0.0;
  double exponent = 0.0;
  double rms = 0.0;  // RMS residual of the log-log fit
  std::size_t samples = 0;
};

/// Least-squares slope of log(value) against log<t> over samples with t in [t1, t2].
inline DecayFit fit_decay(const std::vector<double>& t, const std::vector<double>& v, double t1, double t2) {
  if (t.size() != v.size()) throw std::invalid_argument("fit_decay: series length mismatch");
  if (!(t1 >= 1.0) || !(t2 > t1)) throw std::invalid_argument("fit_decay: window must satisfy 1 <= t1 < t2");
  std::vector<double> x, y;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (t[k] < t1 - 1e-12 || t[k] > t2 + 1e-12) continue;
    if (!(v[k] > 0.0)) throw std::invalid_argument("fit_decay: nonpositive value in window at t = " + std::to_string(t[k]));
    x.push_back(std::log(japanese(t[k])));
    y.push_back(std::log(v[k]));
  }
  if (x.size() < 8) throw std::invalid_argument("fit_decay: fewer than 8 samples in window");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  DecayFit f{t1, t2, sxy / sxx, 0.0, x.size()};
  double ss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (my + f.exponent * (x[i] - mx));
    ss += r * r;
  }
  f.rms = std::sqrt(ss / n);
  return f;
}

struct DecaySeries {
  std::string id;
  std::vector<double> times;
  std::vector<double> values;

  DecayFit fit(double t1, double t2) const { return fit_decay(times, values, t1, t2); }
};

template <class F>
DecaySeries sup_series(std::string id, const Trajectory<F>& f) {
  DecaySeries s{std::move(id), {}, {}};
  for (std::size_t k = 0; k < f.size(); ++k) {
    s.times.push_back(f.time(k));
    s.values.push_back(sup_norm(f.values[k]));
  }
  return s;
}

/// Left sides of the nonlinear-term estimates at the X-sample nodes, each a max
/// over |I| <= K: ||hat Gamma^I (u F phi)||_2, ||Gamma^I (phi^* H phi)||_2 and
/// ||Gamma^I (phi^* H phi)||_1.
struct NonlinearMonitor {
  DecaySeries dirac_source;
  DecaySeries kg_source;
  DecaySeries kg_source_l1;
};

inline NonlinearMonitor monitor_nonlinear(const IteratePair& x, const InteractionPair& pair, int K,
                                          const GammaSet& gamma = GammaSet::standard()) {
  NonlinearMonitor mon{{"dirac_source_l2", {}, {}}, {"kg_source_l2", {}, {}}, {"kg_source_l1", {}, {}}};
  const auto hat = vector_field_family(true), plain = vector_field_family(false);
  for (const auto& s : x.jets) {
    if (s.phi.order() < K || s.u.order() < K) throw std::invalid_argument("monitor_nonlinear: jets shorter than K");
    auto [S, G] = detail::source_jets(s, pair, K);
    const Jet<SpinorField> sj{s.phi.t, std::move(S)};
    const Jet<ScalarField> gj{s.phi.t, std::move(G)};
    double a = 0.0, b = 0.0, c = 0.0;
    for_each_word(sj, K, hat, gamma, [&](const MultiIndex&, const SpinorField& v) { a = std::max(a, l2_norm(v)); });
    for_each_word(gj, K, plain, gamma, [&](const MultiIndex&, const ScalarField& v) {
      b = std::max(b, l2_norm(v));
      c = std::max(c, lebesgue_norm(v, LpNorm::L1));
    });
    for (auto* series : {&mon.dirac_source, &mon.kg_source, &mon.kg_source_l1}) series->times.push_back(s.phi.t);
    mon.dirac_source.values.push_back(a);
    mon.kg_source.values.push_back(b);
    mon.kg_source_l1.values.push_back(c);
  }
  return mon;
}

struct MassSweepRow {
  double M = 0.0;
  double m = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
  double x_norm = std::numeric_limits<double>::quiet_NaN();
  double ratio = std::numeric_limits<double>::quiet_NaN();  // IterationState::stable_ratio
  std::optional<DecayFit> psi_decay;                        // max_x |psi|
  std::optional<DecayFit> v_decay;                          // max_x |v|
  double sup_v = std::numeric_limits<double>::quiet_NaN();  // sup_t ||v(t)||_2
  double m_sup_v = std::numeric_limits<double>::quiet_NaN();
  /// E_m(0, v)^{1/2} + int_0^{t_max} ||psi^* H psi||_2 ds
  double energy_bound = std::numeric_limits<double>::quiet_NaN();
  std::string error;
};

struct MassSweepOptions {
  IterateOptions iterate;
  double window_t1 = 2.0;
  double window_t2 = std::numeric_limits<double>::infinity();  // clipped to t_max
  /// Distances below this fraction of the first are excluded from the stable ratio.
  double ratio_floor = 1e-6;
  std::function<void(const MassSweepRow&)> on_row;
};

/// One Picard run per (M, m) pair, M-major. A failing pair is recorded in its
/// row's `error` and the sweep continues.
inline std::vector<MassSweepRow> mass_sweep(const InitialData& data, const InteractionPair& pair,
                                            const std::vector<double>& Ms, const std::vector<double>& ms,
                                            const TimeGrid& times, const XNormConfig& cfg,
                                            const MassSweepOptions& opts = {},
                                            const GammaSet& gamma = GammaSet::standard()) {
  std::vector<MassSweepRow> rows;
  for (double M : Ms)
    for (double m : ms) {
      MassSweepRow row;
      row.M = M;
      row.m = m;
      try {
        const PicardProblem pb{data, pair, M, m, times, cfg, gamma};
        const IterationState st = iterate(pb, opts.iterate);
        row.converged = st.converged;
        row.iterations = st.iterations;
        row.x_norm = st.final_x_norm;
        if (!st.distances.empty()) row.ratio = st.stable_ratio(opts.ratio_floor * st.distances.front());
        const double t2 = std::min(opts.window_t2, times.end());
        auto fit = [&](const DecaySeries& s) -> std::optional<DecayFit> {
          try {
            return s.fit(opts.window_t1, t2);
          } catch (const std::invalid_argument&) {
            return std::nullopt;
          }
        };
        row.psi_decay = fit(sup_series("psi_sup", st.current.phi));
        row.v_decay = fit(sup_series("v_sup", st.current.u));
        row.sup_v = 0.0;
        for (const auto& v : st.current.u.values) row.sup_v = std::max(row.sup_v, l2_norm(v));
        row.m_sup_v = m * row.sup_v;
        std::vector<double> g;
        for (const auto& p : st.current.phi.values) g.push_back(l2_norm(real_part(bilinear(p, pair.H, p))));
        row.energy_bound = std::sqrt(energy(data.v0, data.v1, m)) + cumulative_integral(g, times.dt).back();
      } catch (const std::exception& e) {
        row.converged = false;
        row.error = e.what();
      }
      if (opts.on_row) opts.on_row(row);
      rows.push_back(std::move(row));
    }
  return rows;
}

/// CSV: t,left,right,slack.
inline void write_monitor_csv(std::ostream& os, const MonitorReport& r) {
  os << "t,left,right,slack\n";
  os.precision(17);
  for (std::size_t k = 0; k < r.left.size(); ++k)
    os << r.times[k] << ',' << r.left[k] << ',' << r.right[k] << ',' << r.slack[k] << '\n';
}

/// Two whitespace-separated columns, one sample per line.
inline void write_series(std::ostream& os, const DecaySeries& s) {
  os << "# t " << s.id << '\n';
  os.precision(17);
  for (std::size_t k = 0; k < s.values.size(); ++k) os << s.times[k] << ' ' << s.values[k] << '\n';
}

}  // namespace dkg
