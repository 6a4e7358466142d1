#include "dkg/initial_data.hpp"
#include "dkg/propagate.hpp"
#include "test_support.hpp"

#include <unsupported/Eigen/MatrixFunctions>
#include <gtest/gtest.h>

#include <numbers>

using namespace dkg;
using dkg::testing::max_abs_diff;
using dkg::testing::random_spinor;

namespace {

const GammaSet kGamma = GammaSet::standard();

ScalarField gaussian(const Grid& g, double sigma, double amp = 1.0, std::array<double, 4> c = {0, 0, 0, 0}) {
  ScalarField f(g);
  for_each_point(g, [&](std::size_t p, const std::array<double, 4>& x) {
    double r2 = 0.0;
    for (int a = 0; a < 4; ++a) r2 += (x[a] - c[a]) * (x[a] - c[a]);
    f(p) = amp * std::exp(-r2 / (2 * sigma * sigma));
  });
  return f;
}

SpinorField spinor_gaussian(const Grid& g, double sigma, const Vec4& w, std::array<double, 4> c = {0, 0, 0, 0}) {
  const auto s = gaussian(g, sigma, 1.0, c);
  SpinorField f(g);
  for (std::size_t p = 0; p < g.points(); ++p)
    for (int k = 0; k < 4; ++k) f(p, k) = s(p) * w(k);
  return f;
}

// Independent energy oracle evaluated in Fourier space: vol * sum (|u_t^|^2 + w^2 |u^|^2).
double spectral_energy(const ScalarField& u, const ScalarField& ut, double m) {
  const auto a = forward_transform(u), b = forward_transform(ut);
  double e = 0.0;
  const Grid& g = u.grid();
  for (std::size_t p = 0; p < g.points(); ++p) {
    const auto idx = g.unflat(p);
    double k2 = m * m;
    for (int i = 0; i < 4; ++i) k2 += std::pow(g.derivative_symbol(idx[i]), 2);
    e += std::norm(b(p)) + k2 * std::norm(a(p));
  }
  return g.volume() * e;
}

}  // namespace

TEST(Quadrature, RulesIntegrateCubicsExactly) {
  for (std::size_t nodes : {2u, 3u, 4u, 5u, 9u}) {
    const double dt = 0.3;
    std::vector<double> g(nodes);
    for (std::size_t k = 0; k < nodes; ++k) {
      const double t = k * dt;
      g[k] = nodes >= 4 ? 1 + t - 2 * t * t + 0.5 * t * t * t : (nodes == 3 ? 1 + t - 2 * t * t : 1 + t);
    }
    const auto c = cumulative_integral(g, dt);
    for (std::size_t k = 0; k < nodes; ++k) {
      const double t = k * dt;
      const double exact = nodes >= 4 ? t + t * t / 2 - 2 * t * t * t / 3 + t * t * t * t / 8
                                      : (nodes == 3 ? t + t * t / 2 - 2 * t * t * t / 3 : t + t * t / 2);
      EXPECT_NEAR(c[k], exact, 1e-13) << "nodes=" << nodes << " k=" << k;
    }
  }
  EXPECT_THROW(interval_rule(3, 3), std::out_of_range);
}

TEST(Quadrature, SincKernelGuard) {
  EXPECT_EQ(sinc_kernel(0.0, 0.7), 0.7);
  EXPECT_NEAR(sinc_kernel(1e-6, 2.0), std::sin(2e-6) / 1e-6, 1e-15);
  EXPECT_NEAR(sinc_kernel(3.0, 0.5), std::sin(1.5) / 3.0, 1e-15);
}

TEST(KgEvolve, ZeroStaysZero) {
  const Grid g(8, 4.0);
  const auto tr = kg_evolve(ScalarField(g), ScalarField(g), SourceProvider<ScalarField>::none(), 0.5,
                            TimeGrid::up_to(1.0, 0.25));
  ASSERT_EQ(tr.size(), 5u);
  for (const auto& v : tr.values) EXPECT_EQ(sup_norm(v), 0.0);
}

TEST(KgEvolve, ZeroModeWithUnitMassIsCosine) {
  const Grid g(8, 4.0);
  ScalarField one(g);
  for (auto& v : one.raw()) v = 1.0;
  const auto tg = TimeGrid::up_to(3.0, 0.25);
  const auto tr = kg_evolve(one, ScalarField(g), SourceProvider<ScalarField>::none(), 1.0, tg);
  for (std::size_t k = 0; k < tg.size(); ++k) {
    EXPECT_NEAR(tr.values[k](0), std::cos(tg.time(k)), 1e-14);
    EXPECT_NEAR(tr.rate(k)(5), -std::sin(tg.time(k)), 1e-14);
  }
}

TEST(KgEvolve, MasslessSingleModeIsSine) {
  const Grid g(8, 4.0);
  SpectralScalar s(g);
  s.at({1, 0, 0, 0}) = 0.5;
  s.at({-1, 0, 0, 0}) = 0.5;
  const auto v1 = inverse_transform(s);  // cos(pi x_1 / L)
  const double xi = std::numbers::pi / g.half_length();
  const auto tg = TimeGrid::up_to(2.0, 0.5);
  const auto tr = kg_evolve(ScalarField(g), v1, SourceProvider<ScalarField>::none(), 0.0, tg);
  for (std::size_t k = 0; k < tg.size(); ++k) {
    const auto c = forward_transform(tr.values[k]);
    EXPECT_NEAR(std::abs(c.at({1, 0, 0, 0}) - 0.5 * std::sin(xi * tg.time(k)) / xi), 0.0, 1e-14);
  }
}

TEST(KgEvolve, NodeZeroIsDataBitForBit) {
  const Grid g(8, 4.0);
  const auto v0 = gaussian(g, 0.8), v1 = gaussian(g, 0.6, 0.3);
  const auto src = SourceProvider<ScalarField>::analytic([&](double t) { return std::cos(t) * v0; });
  const auto tr = kg_evolve(v0, v1, src, 0.3, TimeGrid::up_to(0.5, 0.25));
  EXPECT_EQ(max_abs_diff(tr.values[0], v0), 0.0);
  EXPECT_EQ(max_abs_diff(tr.rate(0), v1), 0.0);
}

TEST(KgEvolve, EnergyConservedWithoutSource) {
  const Grid g(16, 8.0);
  const auto v0 = gaussian(g, 1.0, 0.2), v1 = gaussian(g, 1.0, 0.1, {0.5, 0, 0, 0});
  for (double m : {0.0, 0.5, 1.0}) {
    const auto tr = kg_evolve(v0, v1, SourceProvider<ScalarField>::none(), m, TimeGrid::up_to(6.0, 0.5));
    const double e0 = spectral_energy(v0, v1, m);
    for (std::size_t k = 0; k < tr.size(); ++k)
      EXPECT_NEAR(spectral_energy(tr.values[k], tr.rate(k), m) / e0, 1.0, 1e-12);
  }
}

TEST(KgEvolve, ConstantSourceClosedForm) {
  // u_tt + w^2 u = G constant in time, zero data: u^ = G^ (1 - cos wt) / w^2.
  const Grid g(8, 4.0);
  const auto G = gaussian(g, 0.9);
  const auto Gh = forward_transform(G);
  const double m = 0.4, t = 2.0;
  SpectralScalar ref(g);
  for_each_mode(g, [&](std::size_t p, const std::array<double, 4>& k) {
    const double w2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2] + k[3] * k[3] + m * m;
    ref(p) = Gh(p) * (1 - std::cos(std::sqrt(w2) * t)) / w2;
  });
  const auto exact = inverse_transform(ref);
  std::vector<double> errs;
  for (double dt : {0.25, 0.125, 0.0625}) {
    const auto tr = kg_evolve(ScalarField(g), ScalarField(g),
                              SourceProvider<ScalarField>::analytic([&](double) { return G; }), m,
                              TimeGrid::up_to(t, dt));
    errs.push_back(relative_l2(tr.values.back(), exact));
  }
  EXPECT_GT(errs[0] / errs[1], 12.0);
  EXPECT_GT(errs[1] / errs[2], 12.0);
  EXPECT_LT(errs[2], 1e-6);
}

TEST(KgEvolve, MissingSourceNodeSignals) {
  const Grid g(8, 4.0);
  std::vector<ScalarField> snaps(3, ScalarField(g));
  EXPECT_THROW(kg_evolve(ScalarField(g), ScalarField(g), SourceProvider<ScalarField>::snapshots(snaps), 0.0,
                         TimeGrid::up_to(1.0, 0.25)),
               MissingSourceNode);
}

TEST(KgEvolve, MassOutOfRange) {
  const Grid g(8, 4.0);
  EXPECT_THROW(kg_evolve(ScalarField(g), ScalarField(g), SourceProvider<ScalarField>::none(), 1.5,
                         TimeGrid::up_to(1.0, 0.5)),
               std::invalid_argument);
}

TEST(KgEvolve, MassContinuity) {
  const Grid g(16, 8.0);
  const auto v0 = gaussian(g, 1.0, 0.1), v1 = gaussian(g, 1.0, 0.05);
  const auto tg = TimeGrid::up_to(4.0, 0.5);
  for (double m : {0.0, 0.5, 0.999}) {
    const auto a = kg_evolve(v0, v1, SourceProvider<ScalarField>::none(), m, tg);
    const auto b = kg_evolve(v0, v1, SourceProvider<ScalarField>::none(), m + 1e-3, tg);
    const double d = l2_norm(a.values.back() - b.values.back()) / l2_norm(a.values.back());
    EXPECT_LT(d, 1e-2);
  }
}

TEST(DiracEvolve, ZeroModeWithUnitMassIsPhase) {
  const Grid g(8, 4.0);
  SpinorField psi(g);
  for (std::size_t p = 0; p < g.points(); ++p) psi(p, 0) = 1.0;
  const auto tg = TimeGrid::up_to(2.0, 0.25);
  const auto tr = dirac_evolve(psi, SourceProvider<SpinorField>::none(), 1.0, tg, kGamma);
  for (std::size_t k = 0; k < tg.size(); ++k) {
    const cplx want = std::polar(1.0, -tg.time(k));
    EXPECT_LT(std::abs(tr.values[k](9, 0) - want), 1e-14);
    for (int c = 1; c < 4; ++c) EXPECT_LT(std::abs(tr.values[k](9, c)), 1e-14);
  }
}

TEST(DiracEvolve, PerModePropagatorMatchesMatrixExponential) {
  const Grid g(8, 4.0);
  const DiracPropagatorPlan plan(g, 0.7, kGamma);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::array<double, 4> xi{u(rng), u(rng), u(rng), u(rng)};
    const double tau = 0.1 * (trial + 1);
    const Mat4 hs = plan.symbol(xi);
    const double w = std::sqrt(xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2] + xi[3] * xi[3] + 0.49);
    const Mat4 ref = (Mat4(cplx(0, -tau) * hs)).exp();
    for (int c = 0; c < 4; ++c) {
      Vec4 e = Vec4::Zero();
      e(c) = 1.0;
      EXPECT_LT((plan.propagate(xi, w, tau, e) - ref.col(c)).norm(), 1e-12);
      EXPECT_LT((plan.apply_symbol(xi, e) - hs.col(c)).norm(), 1e-15);
    }
    EXPECT_LT((ref.adjoint() * ref - Mat4::Identity()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(DiracEvolve, L2ConservedWithoutSource) {
  const Grid g(16, 8.0);
  const auto psi0 = dkg::testing::half_band(random_spinor(g, 17));
  for (double M : {0.0, 0.5, 1.0}) {
    const auto tr = dirac_evolve(psi0, SourceProvider<SpinorField>::none(), M, TimeGrid::up_to(6.0, 0.5), kGamma);
    const double n0 = l2_norm(psi0);
    for (const auto& v : tr.values) EXPECT_NEAR(l2_norm(v) / n0, 1.0, 1e-12);
  }
}

TEST(DiracEvolve, ConstantSourceClosedForm) {
  // int_0^t U(t - s) ds = (sin wt / w) I - i ((1 - cos wt) / w^2) Hs.
  const Grid g(8, 4.0);
  const Vec4 w4(1.0, cplx(0, 0.5), -0.3, 0.2);
  const auto G = spinor_gaussian(g, 0.9, w4);
  const auto Gh = forward_transform(G);
  const double t = 2.0;
  SpectralSpinor ref(g);
  const Mat4 ig0 = cplx(0, 1) * kGamma[0];
  for_each_mode(g, [&](std::size_t p, const std::array<double, 4>& k) {
    const double w2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2] + k[3] * k[3];
    const double w = std::sqrt(w2);
    const double s = w > 0 ? std::sin(w * t) / w : t;
    const double c = w > 0 ? (1 - std::cos(w * t)) / w2 : t * t / 2;
    const Mat4 hs = dirac_symbol(kGamma, k, 0.0);
    Vec4 gv;
    for (int i = 0; i < 4; ++i) gv(i) = Gh(p, i);
    const Vec4 r = (s * Mat4::Identity() - cplx(0, c) * hs) * (ig0 * gv);
    for (int i = 0; i < 4; ++i) ref(p, i) = r(i);
  });
  const auto exact = inverse_transform(ref);
  std::vector<double> errs;
  for (double dt : {0.25, 0.125, 0.0625}) {
    const auto tr = dirac_evolve(SpinorField(g), SourceProvider<SpinorField>::analytic([&](double) { return G; }),
                                 0.0, TimeGrid::up_to(t, dt), kGamma);
    errs.push_back(relative_l2(tr.values.back(), exact));
  }
  EXPECT_GT(errs[0] / errs[1], 12.0);
  EXPECT_GT(errs[1] / errs[2], 12.0);
  EXPECT_LT(errs[2], 1e-7);
}

TEST(DiracEvolve, SampledQuadratureIsFourthOrder) {
  const Grid g(8, 4.0);
  const Vec4 w4(0.5, 0.5, cplx(0, 0.5), 0.5);
  const auto shape = spinor_gaussian(g, 0.9, w4);
  auto source = [&](double t) { return std::cos(2 * t) * shape; };
  const auto exact = dirac_evolve(SpinorField(g), SourceProvider<SpinorField>::analytic(source), 0.3,
                                  TimeGrid::up_to(2.0, 1.0 / 128), kGamma);
  std::vector<double> errs;
  for (double dt : {0.25, 0.125, 0.0625}) {
    const auto tg = TimeGrid::up_to(2.0, dt);
    std::vector<SpinorField> snaps;
    for (std::size_t k = 0; k < tg.size(); ++k) snaps.push_back(source(tg.time(k)));
    const auto tr = dirac_evolve(SpinorField(g), SourceProvider<SpinorField>::snapshots(snaps), 0.3, tg, kGamma);
    errs.push_back(relative_l2(tr.values.back(), exact.values.back()));
  }
  EXPECT_GT(errs[0] / errs[1], 8.0);
  EXPECT_GT(errs[1] / errs[2], 8.0);
}

TEST(DiracEvolve, RateMatchesEquation) {
  const Grid g(8, 4.0);
  const auto psi0 = spinor_gaussian(g, 0.8, Vec4(1, 0, cplx(0, 1), 0));
  const auto shape = spinor_gaussian(g, 0.7, Vec4(0, 1, 0, 1));
  const auto tg = TimeGrid::up_to(1.0, 0.25);
  std::vector<SpinorField> snaps;
  for (std::size_t k = 0; k < tg.size(); ++k) snaps.push_back(std::exp(-tg.time(k)) * shape);
  const auto tr = dirac_evolve(psi0, SourceProvider<SpinorField>::snapshots(snaps), 0.6, tg, kGamma, {2});
  EXPECT_TRUE(tr.has_rate(0));
  EXPECT_FALSE(tr.has_rate(1));
  EXPECT_TRUE(tr.has_rate(4));
  for (std::size_t k : {0u, 2u, 4u}) {
    auto want = dirac_spatial_operator(tr.values[k], 0.6, kGamma);
    want += apply_matrix(cplx(0, 1) * kGamma[0], snaps[k]);
    EXPECT_LT(max_abs_diff(tr.rate(k), want), 1e-13);
  }
  EXPECT_EQ(max_abs_diff(tr.values[0], psi0), 0.0);
}

TEST(Oracle, ZeroDataStaysZero) {
  const Grid g(8, 4.0);
  const auto tg = TimeGrid::up_to(0.5, 0.25);
  const auto out = coupled_direct_solve(SpinorField(g), ScalarField(g), ScalarField(g),
                                        InteractionPair::identity_gamma0(kGamma), 0.5, 0.5, tg, 1.0 / 16);
  for (const auto& v : out.psi.values) EXPECT_EQ(sup_norm(v), 0.0);
  for (const auto& v : out.v.values) EXPECT_EQ(sup_norm(v), 0.0);
}

TEST(Oracle, RejectsUnstableStep) {
  const Grid g(8, 4.0);
  EXPECT_THROW(coupled_direct_solve(SpinorField(g), ScalarField(g), ScalarField(g), InteractionPair{}, 0, 0,
                                    TimeGrid::up_to(1.0, 0.5), 0.5),
               std::invalid_argument);
}

TEST(Oracle, BlowUpGuard) {
  const Grid g(8, 4.0);
  SpinorField psi(g);
  for (auto& v : psi.raw()) v = 1e5;
  EXPECT_THROW(coupled_direct_solve(psi, ScalarField(g), ScalarField(g), InteractionPair::identity_gamma0(kGamma), 0,
                                    0, TimeGrid::up_to(0.125, 0.125), 0.0625),
               BlowUp);
}

TEST(Oracle, UncoupledMatchesExactPropagators) {
  const Grid g(16, 8.0);
  const auto d = gaussian_data(0.5, 1.0, g, 3);
  const auto tg = TimeGrid::up_to(1.0, 0.25);
  const InteractionPair zero{Mat4::Zero(), Mat4::Zero()};
  const double M = 0.5, m = 0.75;
  const auto orc = coupled_direct_solve(d.psi0, d.v0, d.v1, zero, M, m, tg, 1.0 / 256);
  const auto psi = dirac_evolve(d.psi0, SourceProvider<SpinorField>::none(), M, tg, kGamma);
  const auto v = kg_evolve(d.v0, d.v1, SourceProvider<ScalarField>::none(), m, tg);
  EXPECT_LT(relative_l2(orc.psi.values.back(), psi.values.back()), 1e-6);
  EXPECT_LT(relative_l2(orc.v.values.back(), v.values.back()), 1e-6);
  EXPECT_LT(relative_l2(orc.v.rate(tg.steps), v.rate(tg.steps)), 1e-6);
}

TEST(Oracle, SourcedLinearProblemConvergesAtFourthOrder) {
  // Duhamel with analytic sources against RK4 with the same sources; both
  // step sizes halved together.
  const Grid g(8, 4.0);
  const auto shape_s = gaussian(g, 0.8, 0.3);
  const auto shape_d = spinor_gaussian(g, 0.8, Vec4(0.5, cplx(0, 0.5), 0.5, -0.5));
  MolSystem sys;
  sys.dirac_mass = 0.4;
  sys.kg_mass = 0.6;
  sys.dirac_source = [&](double t) { return std::sin(3 * t) * shape_d; };
  sys.kg_source = [&](double t) { return std::cos(3 * t) * shape_s; };
  std::vector<double> errs;
  for (double dt : {0.25, 0.125}) {
    const auto tg = TimeGrid::up_to(1.0, dt);
    const auto psi = dirac_evolve(SpinorField(g), SourceProvider<SpinorField>::analytic(sys.dirac_source), 0.4, tg, kGamma);
    const auto v = kg_evolve(ScalarField(g), ScalarField(g), SourceProvider<ScalarField>::analytic(sys.kg_source), 0.6, tg);
    MolState end;
    mol_integrate(sys, MolState{SpinorField(g), ScalarField(g), ScalarField(g)}, tg, dt / 4,
                  [&](std::size_t k, double, const MolState& s) {
                    if (k == tg.steps) end = s;
                  });
    errs.push_back(relative_l2(end.psi, psi.values.back()) + relative_l2(end.v, v.values.back()));
  }
  EXPECT_GT(errs[0] / errs[1], 8.0);
}
