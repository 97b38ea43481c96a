#include "polyrg/gaussian.hpp"

#include <gtest/gtest.h>

using namespace polyrg;

namespace {

Field random_field(int n, std::uint64_t seed, double scale = 1.0) {
  Rng rng = make_rng(seed, 99);
  std::normal_distribution<double> g(0.0, scale);
  Field f(n);
  for (auto& v : f) v = g(rng);
  return f;
}

}  // namespace

TEST(Gaussian, ScalarSampleVariance) {
  GaussianSpec spec(Matrix::Constant(1, 1, 5.0));
  auto xs = sample_gff(spec, 3, 0, 100000);
  std::vector<double> sq;
  for (auto& x : xs) sq.push_back(x[0] * x[0]);
  auto est = mean_estimate(sq);
  EXPECT_NEAR(est.mean, 0.2, 5 * est.std_error);
}

TEST(Gaussian, RejectsBadPrecision) {
  Matrix Q(2, 2);
  Q << 1, 2, 2, 1;
  EXPECT_THROW(GaussianSpec{Q}, NotPositiveDefiniteError);
  EXPECT_THROW(GaussianSpec{Matrix::Zero(1, 1)}, NotPositiveDefiniteError);
}

TEST(Gaussian, EmpiricalCovarianceOnFourByFour) {
  PeriodicGrid grid{2, 4};
  Matrix Q(grid.laplacian(1.0));
  Matrix C = Q.inverse();
  GaussianSpec spec(Q);
  const std::size_t n = 100000;
  auto xs = sample_gff(spec, 11, 0, n);
  int worst_a = 0;
  double worst_z = 0;
  for (int a = 0; a < 16; ++a)
    for (int b = a; b < 16; ++b) {
      double s = 0;
      for (auto& x : xs) s += x[a] * x[b];
      double emp = s / n;
      double se = std::sqrt((C(a, a) * C(b, b) + C(a, b) * C(a, b)) / n);
      double z = std::abs(emp - C(a, b)) / se;
      if (z > worst_z) {
        worst_z = z;
        worst_a = a;
      }
    }
  EXPECT_LT(worst_z, 5.0) << "site " << worst_a;
}

TEST(Gaussian, SamplingIsReproducible) {
  PeriodicGrid grid{2, 4};
  GaussianSpec spec{Matrix(grid.laplacian(1.0))};
  auto a = sample_gff(spec, 5, 2, 10), b = sample_gff(spec, 5, 2, 10), c = sample_gff(spec, 5, 3, 10);
  for (int k = 0; k < 10; ++k) EXPECT_EQ(a[k], b[k]);
  EXPECT_NE(a[0], c[0]);
}

TEST(Gaussian, SparseSamplerCovariance) {
  TorusLattice lat(2, 3, 1);
  SparseMatrix Q = torus_laplacian(lat, 0.8);
  Matrix C = Matrix(Q).inverse();
  SparseGaussianSampler s(Q);
  Rng rng = make_rng(1, 1);
  const int n = 100000;
  Matrix acc = Matrix::Zero(9, 9);
  for (int k = 0; k < n; ++k) {
    Eigen::VectorXd x = s.sample(rng);
    acc += x * x.transpose();
  }
  acc /= n;
  for (int a = 0; a < 9; ++a)
    for (int b = 0; b < 9; ++b)
      EXPECT_NEAR(acc(a, b), C(a, b), 5 * std::sqrt((C(a, a) * C(b, b) + C(a, b) * C(a, b)) / n));
}

TEST(Gaussian, ConditionalLawMatchesSchurComplement) {
  TorusLattice lat(2, 3, 2);
  double m = 0.1;
  SiteSet U = cube(lat, lat.index({0, 0}), 2);
  Matrix C = torus_covariance(lat, m);
  for (int t = 0; t < 3; ++t) {
    Field phi = random_field(lat.site_count(), t);
    auto dec = decompose_conditional(lat, U, m, phi);
    auto sc = schur_conditional(C, U, phi);
    auto u = U.indices();
    for (std::size_t a = 0; a < u.size(); ++a) EXPECT_NEAR(sc.mean[a], dec.harmonic[u[a]], 1e-10);
    EXPECT_LT((sc.covariance - dec.covariance).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Gaussian, HarmonicFieldHasNoFluctuation) {
  TorusLattice lat(2, 3, 2);
  SiteSet U = cube(lat, lat.index({1, 1}), 2);
  Field f = random_field(lat.site_count(), 4);
  DirichletOperator D(lat, U, 0.2);
  Field h = D.harmonic_extension(f);
  auto dec = decompose_conditional(lat, U, 0.2, h);
  EXPECT_LT(dec.fluctuation.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(decompose_conditional(lat, lat.full_set(), 0.2, h), GeometryError);
}

TEST(Gaussian, VariationPrincipleSplit) {
  TorusLattice lat(2, 3, 2);
  SiteSet U = cube(lat, lat.index({0, 0}), 2);
  SiteSet V = cube(lat, lat.index({0, 0}), 3);
  for (double m : {0.0, 0.1}) {
    for (int t = 0; t < 20; ++t) {
      Field phi = random_field(lat.site_count(), 200 + t);
      EXPECT_LT(std::abs(variation_split_residual(lat, U, V, m, phi)), 1e-10);
    }
    EXPECT_LT(std::abs(variation_split_residual(lat, U, lat.full_set(), m, random_field(81, 7))), 1e-10);
  }
  EXPECT_THROW(variation_split_residual(lat, U, U, 0.1, random_field(81, 1)), GeometryError);
}

TEST(Gaussian, TowerPropertyForQuadratics) {
  // K(phi) = phi^T B phi + b^T phi has E[K] = mu^T B mu + Tr(B S) + b^T mu.
  TorusLattice lat(2, 3, 2);
  double m = 0.3;
  int o = lat.index({0, 0});
  SiteSet U = cube(lat, o, 3), X = cube(lat, o, 1);
  DirichletOperator DU(lat, U, m), DX(lat, X, m);
  Field phi = random_field(81, 12);
  Matrix B = Matrix(torus_laplacian(lat, 0.0));
  Eigen::VectorXd b = random_field(81, 13);
  Matrix CU = DU.green_full(), CX = DX.green_full(), PX = DX.poisson_full();
  Field mu = DX.harmonic_extension(DU.harmonic_extension(phi));
  Matrix S_nested = PX * CU * PX.transpose() + CX;
  double nested = mu.dot(B * mu) + (B * S_nested).trace() + b.dot(mu);
  Field mu1 = DU.harmonic_extension(phi);
  double direct = mu1.dot(B * mu1) + (B * CU).trace() + b.dot(mu1);
  EXPECT_NEAR(nested, direct, 1e-10 * std::abs(direct));
}

TEST(Gaussian, QuadraticExpectationClosedForms) {
  EXPECT_DOUBLE_EQ(gaussian_quadratic_expectation(Matrix::Zero(3, 3)).value, 1.0);
  auto s = gaussian_quadratic_expectation(Matrix::Constant(1, 1, 0.5));
  EXPECT_NEAR(s.value, std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(s.trace_series, std::sqrt(2.0), 1e-12);
  EXPECT_THROW(gaussian_quadratic_expectation(Matrix::Identity(2, 2)), ContractionError);
  EXPECT_THROW(gaussian_quadratic_expectation(-1.5 * Matrix::Identity(2, 2)), ContractionError);
}

TEST(Gaussian, QuadraticExpectationTraceSeriesAndMonteCarlo) {
  PeriodicGrid grid{2, 4};
  Matrix C = Matrix(grid.laplacian(1.0)).inverse();
  Eigen::SelfAdjointEigenSolver<Matrix> es(C);
  Matrix Ch = es.operatorSqrt();
  Matrix M(gradient_square_matrix(grid, {0, 1, 4, 5}));
  Matrix T = Ch * M * Ch;
  T *= 0.3 / spectral_norm_symmetric(T);
  auto q = gaussian_quadratic_expectation(T);
  EXPECT_NEAR(q.trace_series / q.value, 1.0, 1e-8);
  auto mc = gaussian_quadratic_mc(T, 200000, 17);
  EXPECT_NEAR(mc.mean, q.value, 3 * mc.std_error);
}

class RegulatorTest : public ::testing::Test {
 protected:
  TorusLattice lat{2, 3, 2};
  int o = lat.index({0, 0});
};

TEST_F(RegulatorTest, ZeroFieldGivesOne) {
  Regulator G(lat, cube(lat, o, 1), cube(lat, o, 2), 0.0, 0.1);
  EXPECT_DOUBLE_EQ(G.value(Field::Zero(81)), 1.0);
  EXPECT_EQ(G.log_value_definitional(Field::Zero(81)), 0.0);
}

TEST_F(RegulatorTest, TwoRoutesAgree) {
  for (double m : {0.0, 0.5}) {
    Regulator G(lat, cube(lat, o, 1), cube(lat, o, 3), m, 0.1);
    for (int t = 0; t < 20; ++t) {
      Field phi = random_field(81, 300 + t, 2.0);
      double a = G.log_value(phi), b = G.log_value_definitional(phi);
      EXPECT_NEAR(std::exp(a - b), 1.0, 1e-9);
    }
  }
}

TEST_F(RegulatorTest, ProductOverSeparatedPairs) {
  TorusLattice big(2, 3, 3);
  int c1 = big.index({-6, 0}), c2 = big.index({6, 0});
  SiteSet X1 = cube(big, c1, 1), Y1 = cube(big, c1, 3), X2 = cube(big, c2, 1), Y2 = cube(big, c2, 3);
  ASSERT_FALSE((Y1 | outer_boundary(big, Y1)).intersects(Y2 | outer_boundary(big, Y2)));
  Regulator G1(big, X1, Y1, 0.0, 0.1), G2(big, X2, Y2, 0.0, 0.1), G12(big, X1 | X2, Y1 | Y2, 0.0, 0.1);
  for (int t = 0; t < 5; ++t) {
    Field phi = random_field(big.site_count(), 400 + t);
    EXPECT_NEAR(G1.log_value(phi) + G2.log_value(phi), G12.log_value(phi), 1e-10);
  }
}

TEST_F(RegulatorTest, MonotoneInXAndSandwich) {
  SiteSet Y = cube(lat, o, 3);
  SiteSet Xs = set_from(lat, std::vector<int>{o}), Xm = cube(lat, o, 1), Xl = cube(lat, o, 2);
  Regulator Gs(lat, Xs, Y, 0.0, 0.1), Gm(lat, Xm, Y, 0.0, 0.1), Gl(lat, Xl, Y, 0.0, 0.1);
  for (int t = 0; t < 20; ++t) {
    Field phi = random_field(81, 500 + t);
    double a = Gs.log_value(phi), b = Gm.log_value(phi), c = Gl.log_value(phi);
    EXPECT_LE(a, b + 1e-12);
    EXPECT_LE(b, c + 1e-12);
    auto [lo, hi] = Gm.log_sandwich(phi);
    EXPECT_LE(lo, b + 1e-10);
    EXPECT_LE(b, hi + 1e-10);
  }
}

TEST_F(RegulatorTest, LargeKappaRejected) {
  Regulator G(lat, cube(lat, o, 1), cube(lat, o, 2), 0.0, 0.1);
  double thr = G.certified_threshold();
  EXPECT_GT(thr, 0.1);
  EXPECT_THROW(Regulator(lat, cube(lat, o, 1), cube(lat, o, 2), 0.0, 1.01 * thr), ContractionError);
}

TEST_F(RegulatorTest, G0IsDirectExponential) {
  Field phi = random_field(81, 8);
  SiteSet X = cube(lat, o, 1);
  EXPECT_NEAR(std::log(regulator_g0(lat, X, 0.2, phi)), 0.1 * directed_grad_square(lat, phi, X), 1e-12);
}

TEST(RegulatorIntegration, EmptyXGivesOne) {
  TorusLattice lat(2, 3, 2);
  int o = lat.index({0, 0});
  auto rep = regulator_integration_check(lat, lat.empty_set(), cube(lat, o, 1), cube(lat, o, 2), 0.0, 0.1, 0);
  EXPECT_EQ(rep.exact_ratio, 1.0);
}

TEST(RegulatorIntegration, TraceFormulaAndMonteCarlo) {
  TorusLattice lat(2, 3, 3);
  int o = lat.index({0, 0});
  auto rep = regulator_integration_check(lat, cube(lat, o, 1), cube(lat, o, 4), cube(lat, o, 7), 0.0, 0.05, 1,
                                         20000, 21);
  EXPECT_NEAR(rep.trace_direct, rep.trace_poisson, 1e-9);
  EXPECT_GT(rep.trace_direct, 0.0);
  EXPECT_GT(rep.log_ratio, 0.0);
  ASSERT_TRUE(rep.mc_ratio.has_value());
  EXPECT_NEAR(rep.mc_ratio->mean, rep.exact_ratio, 3 * rep.mc_ratio->std_error);
}

TEST(CovarianceScaling, ScaleZeroIsDirect) {
  TorusLattice lat(2, 3, 2);
  int o = lat.index({0, 0});
  SiteSet U = cube(lat, o, 2);
  double v = smoothed_fluctuation_variance(lat, o, lat.empty_set(), U, 0.0);
  Matrix C = DirichletOperator(lat, U, 0.0).green_full();
  double direct = 0;
  for (int e = 0; e < 4; ++e) {
    int y = lat.neighbor(o, e);
    direct += C(y, y) - 2 * C(y, o) + C(o, o);
  }
  EXPECT_NEAR(v, direct, 1e-12);
}

TEST(CovarianceScaling, ExponentNearMinusD) {
  TorusLattice lat(2, 3, 4);
  auto rep = covariance_scaling_check(lat, {1, 2});
  ASSERT_EQ(rep.exponents.size(), 1u);
  EXPECT_NEAR(rep.exponents[0], -2.0, 0.4);
  EXPECT_THROW(covariance_scaling_check(lat, {3}), GeometryError);
}
