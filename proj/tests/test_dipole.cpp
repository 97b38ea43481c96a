#include "polyrg/dipole.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

using namespace polyrg;

namespace {

Field random_field(int n, std::uint64_t seed, double scale = 1.0) {
  Rng rng = make_rng(seed, 0);
  std::normal_distribution<double> g(0.0, scale);
  Field f(n);
  for (auto& v : f) v = g(rng);
  return f;
}

// Each undirected edge counted once, both orientations contribute the same square.
double edge_sum_V(const TorusLattice& lat, const SiteSet& X, const Field& psi) {
  double s = 0;
  X.for_each([&](int x) {
    for (int a = 0; a < lat.dim(); ++a) {
      double fwd = psi[lat.neighbor(x, a)] - psi[x];
      double bwd = psi[lat.neighbor(x, a + lat.dim())] - psi[x];
      s += fwd * fwd + bwd * bwd;
    }
  });
  return s / 4;
}

}  // namespace

TEST(LocalV, Examples) {
  TorusLattice lat(2, 3, 1);
  SiteSet all = lat.full_set();
  EXPECT_EQ(local_V(lat, all, Field::Constant(9, 2.5)), 0.0);
  TorusLattice big(2, 9, 1);
  Field lin(big.site_count());
  for (int x = 0; x < big.site_count(); ++x) lin[x] = big.coord(x, 0);
  SiteSet one(big.site_count());
  one.set(big.index({0, 0}));
  EXPECT_DOUBLE_EQ(local_V(big, one, lin), 0.5);
  Field psi = random_field(9, 3);
  EXPECT_NEAR(local_V(lat, all, psi), edge_sum_V(lat, all, psi), 1e-12);
}

TEST(LocalW, Examples) {
  TorusLattice lat(2, 3, 1);
  SiteSet one(9);
  one.set(4);
  EXPECT_DOUBLE_EQ(local_W(lat, one, Field::Zero(9), 1.0), 4.0);
  Field psi = random_field(9, 4, 2.0);
  SiteSet all = lat.full_set();
  double direct = 0;
  for (int x = 0; x < 9; ++x)
    for (int e = 0; e < 4; ++e) direct += std::cos(1.3 * (psi[lat.neighbor(x, e)] - psi[x]));
  double w = local_W(lat, all, psi, 1.3);
  EXPECT_NEAR(w, direct, 1e-12);
  EXPECT_LE(std::abs(w), 36.0);
  EXPECT_DOUBLE_EQ(local_W(lat, all, psi, 0.0), 36.0);
}

TEST(ModelParams, EpsilonSigmaRelation) {
  ModelParams p(0.05, 1.0, 0.25, 0.1);
  EXPECT_DOUBLE_EQ(p.epsilon(), 0.8);
  auto q = ModelParams::from_epsilon(0.05, 1.0, 0.8, 0.1);
  EXPECT_NEAR(q.sigma(), 0.25, 1e-15);
  EXPECT_THROW(ModelParams(0.0, 0.0, 0.0, 0.0), std::invalid_argument);
}

TEST(TestFunction, SampledSineIsMeanZeroAndScaled) {
  TorusLattice lat(2, 3, 2);
  auto tf = TestFunction::sine(2);
  Field f = tf.sample(lat);
  EXPECT_NEAR(f.sum(), 0.0, 1e-12);
  int x = lat.index({2, 0});
  EXPECT_NEAR(f[x], std::pow(3.0, -4.0) * std::sin(2 * std::numbers::pi * 2.0 / 9.0), 1e-15);
}

TEST(TestFunction, GridFileRoundTrip) {
  TorusLattice lat(2, 9, 1);
  auto tf = TestFunction::modes(2, {{{1, 0}, 1.0, false}, {{1, 2}, 0.3, true}});
  auto path = (std::filesystem::temp_directory_path() / "polyrg_grid_test.txt").string();
  tf.write_grid(path, 9);
  auto back = TestFunction::read_grid(path);
  std::remove(path.c_str());
  for (int x = 0; x < lat.site_count(); ++x) EXPECT_NEAR(back.profile_at(lat, x), tf.profile_at(lat, x), 1e-15);
  EXPECT_THROW(TestFunction::grid(2, 3, std::vector<double>(9, 1.0)), std::invalid_argument);
}

TEST(TestFunction, ContinuumFormOfSine) {
  auto tf = TestFunction::sine(2);
  EXPECT_NEAR(tf.continuum_half_form(), 1.0 / (16 * std::numbers::pi * std::numbers::pi), 1e-15);
  // Grid interpolation of a pure mode reproduces the same value.
  TorusLattice lat(2, 9, 1);
  std::vector<double> v(lat.site_count());
  for (int x = 0; x < lat.site_count(); ++x) v[x] = tf.profile_at(lat, x);
  EXPECT_NEAR(TestFunction::grid(2, 9, v).continuum_half_form(), tf.continuum_half_form(), 1e-14);
}

TEST(BuildXi, ZeroSourceAndResidual) {
  TorusLattice lat(2, 3, 2);
  ModelParams p(0.0, 1.0, 0.3, 1e-3);
  auto z = build_xi(Field::Zero(lat.site_count()), p, lat);
  EXPECT_EQ(z.xi.cwiseAbs().maxCoeff(), 0.0);
  auto x = build_xi(TestFunction::sine(2), p, lat);
  EXPECT_LT(x.residual, 1e-9);
  ModelParams massless(0.0, 1.0, 0.3, 0.0);
  auto y = build_xi(TestFunction::sine(2), massless, lat);
  EXPECT_LT(y.residual, 1e-9);
  Field bad = Field::Ones(lat.site_count());
  EXPECT_THROW(build_xi(bad, massless, lat), SingularOperatorError);
}

TEST(BuildXi, GradientScalingAcrossVolumes) {
  ModelParams p(0.0, 1.0, 0.0, 1e-3);
  auto r = xi_scaling_check(TestFunction::sine(2), p, 3, 2, 3);
  EXPECT_NEAR(r.ratio_dxi / r.expected_dxi, 1.0, 0.3);
  EXPECT_NEAR(r.ratio_xi / r.expected_xi, 1.0, 0.3);
  EXPECT_TRUE(r.within(0.3));
}

TEST(InitialActivity, Examples) {
  TorusLattice lat(2, 3, 1);
  Field psi = random_field(9, 5);
  ModelParams free(0.05, 1.0, 0.0, 0.1);
  for (int x = 0; x < 9; ++x) EXPECT_EQ(I0_site(free, lat, x, psi), 1.0);
  ModelParams noz(0.0, 1.0, 0.2, 0.1);
  SiteSet X(9);
  X.set(2);
  EXPECT_EQ(K0(noz, lat, X, psi), 0.0);
  ModelParams p(0.05, 1.3, 0.2, 0.1);
  SiteSet s(9);
  s.set(4);
  double direct = std::exp(-p.sigma() * local_V(lat, s, psi)) *
                  (std::exp(p.z() * local_W(lat, s, psi / std::sqrt(p.epsilon()), std::sqrt(p.beta()))) - 1);
  EXPECT_NEAR(K0_site(p, lat, 4, psi), direct, 1e-14);
  SiteSet two(9);
  two.set(0);
  two.set(4);
  EXPECT_NEAR(K0(p, lat, two, psi), K0_site(p, lat, 0, psi) * K0_site(p, lat, 4, psi), 1e-16);
}

TEST(Mayer, ExhaustiveIdentity) {
  TorusLattice lat(2, 3, 1);
  Field xi = random_field(9, 6, 0.2);
  for (double sigma : {0.0, 0.1})
    for (double z : {0.0, 0.05}) {
      ModelParams p(z, 1.0, sigma, 0.5);
      EXPECT_LT(mayer_identity_check(p, lat, xi, 20, 7), 1e-12) << "sigma=" << sigma << " z=" << z;
    }
  TorusLattice big(2, 5, 1);
  EXPECT_THROW(mayer_identity_residual(ModelParams(0.05, 1, 0, 0.5), big, Field::Zero(25)), EnumerationBudgetError);
}

TEST(K0Functional, BesselExpansionMatchesPointwise) {
  TorusLattice lat(2, 3, 1);
  Field xi = random_field(9, 8, 0.3);
  for (double z : {0.05, -0.05}) {
    ModelParams p(z, 1.0, 0.1, 0.5);
    auto F = K0_site_functional(p, lat, 4, xi);
    for (int t = 0; t < 5; ++t) {
      Field phi = random_field(9, 100 + t);
      Complex v = F.evaluate(phi);
      EXPECT_NEAR(v.real(), K0_site(p, lat, 4, phi + xi), 1e-13);
      EXPECT_NEAR(v.imag(), 0.0, 1e-13);
    }
  }
}

TEST(GeneratingFunction, ZeroSourceGivesOne) {
  TorusLattice lat(2, 3, 1);
  ModelParams p(0.05, 1.0, 0.1, 0.5);
  auto r = generating_function_mc(Field::Zero(9), p, lat, 200, 3);
  EXPECT_DOUBLE_EQ(r.ratio, 1.0);
  EXPECT_DOUBLE_EQ(r.Z, 1.0);
}

TEST(GeneratingFunction, ExactGaussianCaseAndRoutes) {
  TorusLattice lat(2, 3, 1);
  Field f = 3.0 * TestFunction::sine(2).sample(lat);
  ModelParams p(0.0, 1.0, 0.1, 0.5);
  auto ex = generating_function_exact_z0(f, p, lat);
  EXPECT_NEAR(ex.log_Z, ex.log_Z_direct, 1e-12);
  auto mc = generating_function_mc(f, p, lat, 40000, 11);
  EXPECT_LT(std::abs(mc.ratio - std::exp(ex.log_ratio)), 3 * mc.ratio_se + 1e-15);
  EXPECT_LT(std::abs(mc.route_difference), 3 * mc.route_difference_se + 1e-15);

  ModelParams pz(0.05, 1.0, 0.1, 0.5);
  auto mz = generating_function_mc(f, pz, lat, 40000, 12);
  EXPECT_LT(std::abs(mz.route_difference), 3 * mz.route_difference_se);
}

TEST(GeneratingFunction, TunedAndRescaledIntegrandsCoincide) {
  TorusLattice lat(2, 3, 1);
  Field f = TestFunction::sine(2).sample(lat);
  ModelParams p(0.05, 1.2, 0.3, 0.5);
  Field phi = random_field(9, 9);
  double a = tuned_integrand(f, p, lat, phi / std::sqrt(p.epsilon()));
  double b = rescaled_integrand(f, p, lat, phi);
  EXPECT_NEAR(a, b, 1e-13 * b);
}

TEST(GeneratingFunction, ContinuumTrendAtZeroActivity) {
  auto tf = TestFunction::sine(2);
  ModelParams p(0.0, 1.0, 0.2, 1e-3);
  const double target = tf.continuum_half_form();
  double prev = 1e9;
  for (int N : {1, 2, 3}) {
    TorusLattice lat(2, 3, N);
    Field f = tf.sample(lat);
    double a = generating_function_exact_z0(f, p, lat).log_Z;
    ModelParams ph(0.0, 1.0, 0.2, 0.5e-3);
    double b = generating_function_exact_z0(f, ph, lat).log_Z;
    double err = std::abs(richardson_m2(a, b).value - target);
    EXPECT_LT(err, prev);
    prev = err;
  }
  EXPECT_LT(prev / target, 0.01);
}
