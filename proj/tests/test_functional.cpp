#include "polyrg/functional.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace polyrg;

namespace {

Eigen::VectorXd random_vector(int n, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Eigen::VectorXd v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

Matrix random_spd(int n, Rng& rng) {
  Matrix B = Matrix::Zero(n, n);
  std::normal_distribution<double> g;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) B(i, j) = g(rng);
  return B * B.transpose() / n + Matrix::Identity(n, n);
}

FormPtr random_form(int rows, int n, Rng& rng) {
  auto f = std::make_shared<GradientForm>();
  f->G = Matrix(rows, n);
  std::normal_distribution<double> g(0.0, 0.5);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < n; ++j) f->G(i, j) = g(rng);
  f->g = random_vector(rows, rng, 0.3);
  return f;
}

}  // namespace

TEST(FieldFunctional, GradientExponentialMatchesDirectFormula) {
  Rng rng = make_rng(1, 0);
  const int n = 5;
  auto form = random_form(3, n, rng);
  auto F = FieldFunctional::gradient_exponential(n, form, 0.7, 2.0);
  for (int t = 0; t < 10; ++t) {
    Eigen::VectorXd phi = random_vector(n, rng);
    double direct = 2.0 * std::exp(-0.25 * 0.7 * (form->G * phi + form->g).squaredNorm());
    EXPECT_NEAR(F.evaluate(phi).real(), direct, 1e-14 * std::abs(direct));
    EXPECT_NEAR(F.evaluate(phi).imag(), 0.0, 1e-15);
  }
}

TEST(FieldFunctional, CosineIsRealAndMatches) {
  Rng rng = make_rng(2, 0);
  const int n = 4;
  Eigen::VectorXd ell = random_vector(n, rng);
  auto F = FieldFunctional::cosine(n, ell, 0.4);
  Eigen::VectorXd phi = random_vector(n, rng);
  Complex v = F.evaluate(phi);
  EXPECT_NEAR(v.real(), std::cos(ell.dot(phi) + 0.4), 1e-14);
  EXPECT_NEAR(v.imag(), 0.0, 1e-14);
}

TEST(FieldFunctional, DensifyPreservesValues) {
  Rng rng = make_rng(3, 0);
  const int n = 6;
  auto F = FieldFunctional::gradient_exponential(n, random_form(4, n, rng), 0.3) *
           FieldFunctional::cosine(n, random_vector(n, rng), 0.1);
  Eigen::VectorXd phi = random_vector(n, rng);
  Complex a = F.evaluate(phi), b = 0;
  for (const auto& t : F.terms()) b += evaluate_term(densify(t, n), phi);
  EXPECT_NEAR(std::abs(a - b), 0.0, 1e-14);
}

TEST(GaussianIntegrator, CharacteristicFunction) {
  Rng rng = make_rng(4, 0);
  const int n = 5;
  Matrix Q = random_spd(n, rng);
  Matrix C = Q.inverse();
  Eigen::VectorXd ell = random_vector(n, rng);
  std::vector<int> S = {0, 1, 2, 3, 4};
  GaussianIntegrator I(S, Q, Eigen::VectorXd::Zero(n));
  Complex v = I.integrate(FieldFunctional::cosine(n, ell, 0.3));
  // E cos(l.z + c) = exp(-l^T C l / 2) cos(c)
  EXPECT_NEAR(v.real(), std::exp(-0.5 * ell.dot(C * ell)) * std::cos(0.3), 1e-13);
  EXPECT_NEAR(v.imag(), 0.0, 1e-13);
}

TEST(GaussianIntegrator, OneDimensionalQuadratureOracle) {
  // zeta ~ N(0, 1/q) on one site, F = exp(-(s/4)(a (h + zeta) + g)^2); oracle by Simpson quadrature.
  const double q = 1.7, s = 0.9, a = 1.3, g0 = 0.4, h = 0.25;
  auto form = std::make_shared<GradientForm>();
  form->G = Matrix::Constant(1, 1, a);
  form->g = Eigen::VectorXd::Constant(1, g0);
  GaussianIntegrator I({0}, Matrix::Constant(1, 1, q), Eigen::VectorXd::Constant(1, h));
  Complex v = I.integrate(FieldFunctional::gradient_exponential(1, form, s));
  const int M = 20000;
  const double lo = -12 / std::sqrt(q), hi = 12 / std::sqrt(q), dx = (hi - lo) / M;
  double acc = 0;
  for (int k = 0; k <= M; ++k) {
    double x = lo + k * dx;
    double w = (k == 0 || k == M) ? 1 : (k % 2 ? 4 : 2);
    double u = a * (h + x) + g0;
    acc += w * std::exp(-0.25 * s * u * u) * std::sqrt(q / (2 * std::numbers::pi)) * std::exp(-0.5 * q * x * x);
  }
  acc *= dx / 3;
  EXPECT_NEAR(v.real(), acc, 1e-10);
}

TEST(GaussianIntegrator, PolynomialMoments) {
  Rng rng = make_rng(5, 0);
  const int n = 4;
  Matrix Q = random_spd(n, rng);
  Matrix C = Q.inverse();
  Polynomial p;
  p.p0 = 0.5;
  p.p1 = random_vector(n, rng).cast<Complex>();
  Matrix P2 = random_spd(n, rng);
  p.P2 = P2.cast<Complex>();
  Eigen::VectorXd h = random_vector(n, rng);
  GaussianIntegrator I({0, 1, 2, 3}, Q, h);
  Complex v = I.integrate(FieldFunctional::polynomial(n, p));
  // E p(h + zeta) = p(h) + 1/2 Tr(P2 C)
  double expect = 0.5 + p.p1.real().dot(h) + 0.5 * h.dot(P2 * h) + 0.5 * (P2 * C).trace();
  EXPECT_NEAR(v.real(), expect, 1e-12);
}

TEST(GaussianIntegrator, EmptySiteSetEvaluates) {
  Rng rng = make_rng(6, 0);
  const int n = 3;
  auto F = FieldFunctional::gradient_exponential(n, random_form(2, n, rng), 0.5) *
           FieldFunctional::cosine(n, random_vector(n, rng), 0.2);
  Eigen::VectorXd h = random_vector(n, rng);
  GaussianIntegrator I({}, Matrix(0, 0), h);
  EXPECT_NEAR(std::abs(I.integrate(F) - F.evaluate(h)), 0.0, 1e-14);
}

TEST(GaussianIntegrator, DivergentIntegralThrows) {
  auto form = std::make_shared<GradientForm>();
  form->G = Matrix::Constant(1, 1, 1.0);
  form->g = Eigen::VectorXd::Zero(1);
  GaussianIntegrator I({0}, Matrix::Constant(1, 1, 1.0), Eigen::VectorXd::Zero(1));
  EXPECT_THROW(I.integrate(FieldFunctional::gradient_exponential(1, form, -4.0)), NotPositiveDefiniteError);
}

TEST(ConditionalFunctional, AgreesWithPointwiseIntegration) {
  Rng rng = make_rng(7, 0);
  const int n = 6;
  std::vector<int> S = {1, 2, 4};
  Matrix Q = random_spd(3, rng);
  Matrix P = Matrix::Identity(n, n);
  for (int a : S) P.row(a) = random_vector(n, rng, 0.3).transpose();
  for (int a : S) P.col(a).setZero();
  Polynomial p;
  p.p0 = 1.0;
  p.p1 = random_vector(n, rng).cast<Complex>();
  p.P2 = random_spd(n, rng).cast<Complex>();
  auto F = FieldFunctional::gradient_exponential(n, random_form(3, n, rng), 0.4) *
               FieldFunctional::cosine(n, random_vector(n, rng), 0.3) +
           FieldFunctional::polynomial(n, p) * FieldFunctional::gradient_exponential(n, random_form(2, n, rng), 0.2);
  auto G = conditional_functional(F, S, Q, P);
  for (int t = 0; t < 5; ++t) {
    Eigen::VectorXd phi = random_vector(n, rng);
    GaussianIntegrator I(S, Q, P * phi);
    Complex a = I.integrate(F), b = G.evaluate(phi);
    EXPECT_NEAR(std::abs(a - b), 0.0, 1e-11 * std::max(1.0, std::abs(a)));
  }
}

TEST(Taylor2, QuadraticIsExact) {
  Rng rng = make_rng(8, 0);
  const int n = 4;
  Polynomial p;
  p.p0 = 0.3;
  p.p1 = random_vector(n, rng).cast<Complex>();
  p.P2 = random_spd(n, rng).cast<Complex>();
  auto F = FieldFunctional::polynomial(n, p);
  auto T = taylor2(F);
  Eigen::VectorXd phi = random_vector(n, rng);
  EXPECT_NEAR(std::abs(F.evaluate(phi) - T.evaluate(phi)), 0.0, 1e-13);
}

TEST(Taylor2, ExponentialOfSmallQuadraticAlongRay) {
  Rng rng = make_rng(9, 0);
  const int n = 5;
  Matrix A = -0.1 * random_spd(n, rng);
  Eigen::VectorXd w = random_vector(n, rng, 0.1);
  FieldFunctional F(n);
  FieldTerm t;
  t.A = A;
  t.w = w.cast<Complex>();
  F.terms().push_back(t);
  auto T = taylor2(F);
  Eigen::VectorXd v = random_vector(n, rng);
  const double a = w.dot(v), b = 0.5 * v.dot(A * v);
  for (double s : {0.01, 0.1, 0.5}) {
    // g(s) = exp(a s + b s^2); second-order Taylor 1 + a s + (b + a^2/2) s^2
    double tay = 1 + a * s + (b + 0.5 * a * a) * s * s;
    double full = std::exp(a * s + b * s * s);
    EXPECT_NEAR(T.evaluate(s * v).real(), tay, 1e-13);
    EXPECT_NEAR((F.evaluate(s * v) - T.evaluate(s * v)).real(), full - tay, 1e-13);
  }
}

TEST(Jets, DirectionalAndExpectationJetsMatchFiniteDifferences) {
  Rng rng = make_rng(10, 0);
  const int n = 6;
  std::vector<int> S = {0, 2, 3, 5};
  Matrix Q = random_spd(4, rng) * 2;
  auto F = FieldFunctional::gradient_exponential(n, random_form(3, n, rng), 0.3) *
           FieldFunctional::cosine(n, random_vector(n, rng, 0.5), 0.7);
  Eigen::VectorXd u = random_vector(n, rng), v = random_vector(n, rng);
  auto J = expectation_jet(F, S, Q, u, v);
  auto at = [&](double a, double b) {
    GaussianIntegrator I(S, Q, a * u + b * v);
    return I.integrate(F);
  };
  const double h = 1e-3;
  Complex duv = (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4 * h * h);
  Complex du = (at(h, 0) - at(-h, 0)) / (2 * h);
  EXPECT_NEAR(std::abs(J.value - at(0, 0)), 0.0, 1e-13);
  EXPECT_NEAR(std::abs(J.du - du), 0.0, 1e-6);
  EXPECT_NEAR(std::abs(J.duv - duv), 0.0, 1e-5);

  auto G = conditional_functional(F, S, Q, Matrix::Identity(n, n));
  auto J2 = directional_jet(G, u, v);
  EXPECT_NEAR(std::abs(J2.duv - J.duv), 0.0, 1e-11);
  EXPECT_NEAR(std::abs(J2.dv - J.dv), 0.0, 1e-11);
}
