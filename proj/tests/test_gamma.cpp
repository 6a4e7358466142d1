#include "dkg/gamma.hpp"

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace dkg;

namespace {

// Entries typed in row by row, independently of the library table.
std::array<Mat4, 5> transcribed() {
  const cplx i(0, 1);
  std::array<Mat4, 5> m;
  for (auto& x : m) x.setZero();
  m[0](0, 0) = 1; m[0](1, 1) = 1; m[0](2, 2) = -1; m[0](3, 3) = -1;
  m[1](0, 3) = 1; m[1](1, 2) = 1; m[1](2, 1) = -1; m[1](3, 0) = -1;
  m[2](0, 3) = -i; m[2](1, 2) = i; m[2](2, 1) = i; m[2](3, 0) = -i;
  m[3](0, 2) = 1; m[3](1, 3) = -1; m[3](2, 0) = -1; m[3](3, 1) = 1;
  m[4](0, 2) = i; m[4](1, 3) = i; m[4](2, 0) = i; m[4](3, 1) = i;
  return m;
}

}  // namespace

TEST(Gamma, StandardMatchesTranscription) {
  const auto g = GammaSet::standard();
  const auto ref = transcribed();
  for (int mu = 0; mu < 5; ++mu) EXPECT_EQ(max_abs(g[mu] - ref[mu]), 0.0) << "mu=" << mu;
  EXPECT_EQ(g[4](0, 2), cplx(0, 1));
  EXPECT_EQ(g[4](2, 0), cplx(0, 1));
}

TEST(Gamma, CliffordExact) {
  const auto g = GammaSet::standard();
  EXPECT_LE(check_clifford(g), 1e-14);
  EXPECT_EQ(max_abs(g[1] * g[1] + Mat4::Identity()), 0.0);
  EXPECT_EQ(max_abs(g[0] * g[0] - Mat4::Identity()), 0.0);
}

TEST(Gamma, AdjointRelationsExact) {
  const auto g = GammaSet::standard();
  EXPECT_EQ(check_adjoints(g), 0.0);
  EXPECT_EQ(max_abs(g[0].adjoint() - g[0]), 0.0);
  for (int a = 1; a <= 4; ++a) EXPECT_EQ(max_abs(g[a].adjoint() + g[a]), 0.0);
}

TEST(Gamma, GammaFourIsProductOfOthers) {
  const auto g = GammaSet::standard();
  EXPECT_EQ(max_abs(g[4] + g[0] * g[1] * g[2] * g[3]), 0.0);
}

TEST(Gamma, CliffordDetectsIdentityReplacement) {
  auto m = GammaSet::standard().matrices();
  m[1] = Mat4::Identity();
  EXPECT_GE(check_clifford(GammaSet::unchecked(m)), 2.0);
  EXPECT_THROW(GammaSet::from_matrices(m), std::invalid_argument);
}

TEST(Gamma, CliffordPerturbationIsLinear) {
  auto m = GammaSet::standard().matrices();
  m[2](1, 2) += 1e-3;
  const double v = check_clifford(GammaSet::unchecked(m));
  EXPECT_GE(v, 1e-3);
  EXPECT_LE(v, 1e-2);
}

TEST(Gamma, AlternativeRepresentationAccepted) {
  // Unitary conjugation preserves the Clifford relations.
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd;
  Mat4 a;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) a(r, c) = cplx(nd(rng), nd(rng));
  Eigen::HouseholderQR<Mat4> qr(a);
  const Mat4 u = qr.householderQ();
  auto m = GammaSet::standard().matrices();
  for (auto& x : m) x = u * x * u.adjoint();
  EXPECT_NO_THROW(GammaSet::from_matrices(m));
}

TEST(Interaction, IdentityGamma0Valid) {
  const auto g = GammaSet::standard();
  const auto r = validate_interactions(InteractionPair::identity_gamma0(g), g);
  EXPECT_EQ(r.f_violation, 0.0);
  EXPECT_EQ(r.h_violation, 0.0);
  EXPECT_TRUE(r.valid());
}

TEST(Interaction, Gamma0IdentityValid) {
  const auto g = GammaSet::standard();
  const auto r = validate_interactions({g[0], Mat4::Identity()}, g);
  EXPECT_EQ(r.f_violation, 0.0);
  EXPECT_EQ(r.h_violation, 0.0);
}

TEST(Interaction, AntiHermitianHFlagged) {
  const auto g = GammaSet::standard();
  const auto r = validate_interactions({Mat4::Identity(), g[1]}, g);
  EXPECT_EQ(r.h_violation, 2.0);
  EXPECT_FALSE(r.valid());
}

TEST(DiracSymbol, MassOnly) {
  const auto g = GammaSet::standard();
  EXPECT_EQ(max_abs(dirac_symbol(g, {0, 0, 0, 0}, 1.0) - g[0]), 0.0);
}

TEST(DiracSymbol, SingleDirectionSquaresToIdentity) {
  const auto g = GammaSet::standard();
  const Mat4 h = dirac_symbol(g, {1, 0, 0, 0}, 0.0);
  EXPECT_EQ(max_abs(h - g[0] * g[1]), 0.0);
  EXPECT_LE(max_abs(h * h - Mat4::Identity()), 1e-15);
}

TEST(DiracSymbol, SquareAndSpectrumOnRandomSymbols) {
  const auto g = GammaSet::standard();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1.0, 1.0), um(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::array<double, 4> xi;
    double r2 = 0;
    do {
      r2 = 0;
      for (auto& x : xi) {
        x = 10.0 * u(rng);
        r2 += x * x;
      }
    } while (r2 > 100.0);
    const double M = um(rng);
    const Mat4 h = dirac_symbol(g, xi, M);
    EXPECT_LE(max_abs(h.adjoint() - h), 1e-15);
    EXPECT_LE(max_abs(h * h - (r2 + M * M) * Mat4::Identity()), 1e-12);

    Eigen::SelfAdjointEigenSolver<Mat4> es(h);
    auto ev = es.eigenvalues();
    std::vector<double> e(ev.data(), ev.data() + 4);
    std::sort(e.begin(), e.end());
    const double w = std::sqrt(r2 + M * M);
    EXPECT_NEAR(e[0], -w, 1e-10 * (1 + w));
    EXPECT_NEAR(e[1], -w, 1e-10 * (1 + w));
    EXPECT_NEAR(e[2], w, 1e-10 * (1 + w));
    EXPECT_NEAR(e[3], w, 1e-10 * (1 + w));
  }
}
