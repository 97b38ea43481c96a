#pragma once

#include "polyrg/elliptic.hpp"

#include <Eigen/Eigenvalues>

#include <cstdint>
#include <random>

namespace polyrg {

class NotPositiveDefiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ContractionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

// Independent reproducible stream per (seed, stream id).
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

// Gaussian law on R^n given by its precision matrix and mean.
class GaussianSpec {
 public:
  explicit GaussianSpec(Matrix precision, Eigen::VectorXd mean = {})
      : Q_(std::move(precision)), mean_(mean.size() ? std::move(mean) : Eigen::VectorXd::Zero(Q_.rows())) {
    if (Q_.rows() != Q_.cols() || Q_.rows() == 0) throw std::invalid_argument("precision must be square");
    if ((Q_ - Q_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, Q_.cwiseAbs().maxCoeff()))
      throw NotPositiveDefiniteError("precision is not symmetric");
    llt_.compute(Q_);
    if (llt_.info() != Eigen::Success) throw NotPositiveDefiniteError("precision is not positive definite");
    if (!Q_.allFinite()) throw NotPositiveDefiniteError("precision has non-finite entries");
  }
  Eigen::Index dim() const { return Q_.rows(); }
  const Matrix& precision() const { return Q_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  Matrix covariance() const { return llt_.solve(Matrix::Identity(dim(), dim())); }

  // x = mean + L^{-T} z with Q = L L^T has covariance Q^{-1}.
  Eigen::VectorXd sample(Rng& rng) const {
    std::normal_distribution<double> g;
    Eigen::VectorXd z(dim());
    for (auto& v : z) v = g(rng);
    return mean_ + llt_.matrixU().solve(z);
  }

 private:
  Matrix Q_;
  Eigen::VectorXd mean_;
  Eigen::LLT<Matrix> llt_;
};

inline std::vector<Eigen::VectorXd> sample_gff(const GaussianSpec& spec, std::uint64_t seed, std::uint64_t stream,
                                               std::size_t n) {
  Rng rng = make_rng(seed, stream);
  std::vector<Eigen::VectorXd> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) out.push_back(spec.sample(rng));
  return out;
}

// Sparse precision sampler for larger lattices: P Q P^T = L L^T.
class SparseGaussianSampler {
 public:
  explicit SparseGaussianSampler(const SparseMatrix& Q) {
    llt_.compute(Q);
    if (llt_.info() != Eigen::Success) throw NotPositiveDefiniteError("precision is not positive definite");
  }
  Eigen::VectorXd sample(Rng& rng) const {
    std::normal_distribution<double> g;
    Eigen::VectorXd z(llt_.matrixL().rows());
    for (auto& v : z) v = g(rng);
    Eigen::VectorXd y = llt_.matrixU().solve(z);
    return llt_.permutationPinv() * y;
  }

 private:
  Eigen::SimplicialLLT<SparseMatrix> llt_;
};

// ---------------------------------------------------------------------------
// Conditional decomposition phi = P_U phi + zeta.

struct ConditionalDecomposition {
  Field harmonic;        // P_U phi
  Field fluctuation;     // phi - P_U phi, supported on U
  Matrix covariance;     // C_U^D on interior() ordering
  std::vector<int> sites;
};

inline ConditionalDecomposition decompose_conditional(const TorusLattice& lat, const SiteSet& U, double m,
                                                      const Field& phi) {
  if (U.count() == static_cast<std::size_t>(lat.site_count())) throw GeometryError("conditioning on nothing: U = Lambda");
  DirichletOperator D(lat, U, m);
  ConditionalDecomposition out;
  out.harmonic = D.harmonic_extension(phi);
  out.fluctuation = phi - out.harmonic;
  out.covariance = D.green();
  out.sites = D.interior();
  return out;
}

// sum_{x in V} f(x) ((-Delta + m^2) f)(x)
inline double quadratic_form_on(const SparseMatrix& A, const Field& f, const SiteSet& V) {
  Field Af = A * f;
  double s = 0;
  V.for_each([&](int x) { s += f[x] * Af[x]; });
  return s;
}

// Left minus right side of the variation-principle split over V, which must contain U and its boundary.
inline double variation_split_residual(const TorusLattice& lat, const SiteSet& U, const SiteSet& V, double m,
                                       const Field& phi) {
  if (!(U | outer_boundary(lat, U)).subset_of(V)) throw GeometryError("V must contain U and its boundary");
  auto dec = decompose_conditional(lat, U, m, phi);
  SparseMatrix A = torus_laplacian(lat, m);
  double lhs = quadratic_form_on(A, phi, V);
  // zeta is zero off U, so Delta^D_U on zeta is A applied to zeta read on U
  double zeta_part = quadratic_form_on(A, dec.fluctuation, U);
  double harm_part = quadratic_form_on(A, dec.harmonic, V);
  return lhs - zeta_part - harm_part;
}

struct SchurConditional {
  Eigen::VectorXd mean;  // on U (increasing site order)
  Matrix covariance;
};

// Conditional law of phi_U given phi off U computed from the joint covariance C alone.
inline SchurConditional schur_conditional(const Matrix& C, const SiteSet& U, const Field& phi) {
  auto u = U.indices();
  auto c = U.complement().indices();
  auto take = [&](const std::vector<int>& r, const std::vector<int>& k) {
    Matrix out(r.size(), k.size());
    for (std::size_t a = 0; a < r.size(); ++a)
      for (std::size_t b = 0; b < k.size(); ++b) out(a, b) = C(r[a], k[b]);
    return out;
  };
  Matrix Cuu = take(u, u), Cuc = take(u, c), Ccc = take(c, c);
  Eigen::VectorXd pc(c.size());
  for (std::size_t b = 0; b < c.size(); ++b) pc[b] = phi[c[b]];
  Eigen::LDLT<Matrix> f(Ccc);
  SchurConditional out;
  out.mean = Cuc * f.solve(pc);
  out.covariance = Cuu - Cuc * f.solve(Cuc.transpose());
  return out;
}

// ---------------------------------------------------------------------------
// E[exp(1/2 (psi, T psi))] for psi standard normal.

inline double spectral_norm_symmetric(const Matrix& T) {
  Matrix S = 0.5 * (T + T.transpose());
  return Eigen::SelfAdjointEigenSolver<Matrix>(S, Eigen::EigenvaluesOnly).eigenvalues().cwiseAbs().maxCoeff();
}

struct QuadraticExpectation {
  double value = 1;
  double log_value = 0;
  double trace_series = 1;  // exp(1/2 sum_n Tr(T^n)/n), truncated when terms fall below 1e-17
  int series_terms = 0;
  double norm = 0;
};

inline QuadraticExpectation gaussian_quadratic_expectation(const Matrix& T) {
  Matrix S = 0.5 * (T + T.transpose());
  QuadraticExpectation out;
  out.norm = spectral_norm_symmetric(S);
  if (!(out.norm < 1)) throw ContractionError("gaussian_quadratic_expectation needs ||T|| < 1");
  const Eigen::Index n = S.rows();
  Eigen::LLT<Matrix> llt(Matrix::Identity(n, n) - S);
  double logdet = 2 * llt.matrixLLT().diagonal().array().log().sum();
  out.log_value = -0.5 * logdet;
  out.value = std::exp(out.log_value);
  double acc = 0;
  Matrix P = S;
  for (int k = 1; k < 100000; ++k) {
    double term = P.trace() / k;
    acc += term;
    out.series_terms = k;
    if (std::abs(term) < 1e-17 * std::max(1.0, std::abs(acc)) && std::pow(out.norm, k) < 1e-17) break;
    P = P * S;
  }
  out.trace_series = std::exp(0.5 * acc);
  return out;
}

inline MeanEstimate gaussian_quadratic_mc(const Matrix& T, std::size_t samples, std::uint64_t seed,
                                          std::uint64_t stream = 0) {
  Matrix S = 0.5 * (T + T.transpose());
  Rng rng = make_rng(seed, stream);
  std::normal_distribution<double> g;
  std::vector<double> v(samples);
  Eigen::VectorXd psi(S.rows());
  for (std::size_t k = 0; k < samples; ++k) {
    for (auto& x : psi) x = g(rng);
    v[k] = std::exp(0.5 * psi.dot(S * psi));
  }
  return mean_estimate(v);
}

// ---------------------------------------------------------------------------
// Regulators.

// M = sum_e D_e^T 1_X D_e over all 2d directions, so phi^T M phi = sum_{x in X, e} (d_e phi(x))^2.
inline SparseMatrix gradient_square_matrix(const TorusLattice& lat, const SiteSet& X) {
  std::vector<Eigen::Triplet<double>> t;
  X.for_each([&](int x) {
    for (int e = 0; e < lat.num_directions(); ++e) {
      int y = lat.neighbor(x, e);
      t.emplace_back(x, x, 1.0);
      t.emplace_back(y, y, 1.0);
      t.emplace_back(x, y, -1.0);
      t.emplace_back(y, x, -1.0);
    }
  });
  SparseMatrix M(lat.site_count(), lat.site_count());
  M.setFromTriplets(t.begin(), t.end());
  return M;
}

inline SparseMatrix gradient_square_matrix(const PeriodicGrid& grid, const std::vector<int>& X) {
  const int n = grid.site_count();
  std::vector<Eigen::Triplet<double>> t;
  for (int x : X)
    for (int a = 0; a < grid.dim; ++a)
      for (int step : {1, -1}) {
        int y = grid.shift(x, a, step);
        t.emplace_back(x, x, 1.0);
        t.emplace_back(y, y, 1.0);
        t.emplace_back(x, y, -1.0);
        t.emplace_back(y, x, -1.0);
      }
  SparseMatrix M(n, n);
  M.setFromTriplets(t.begin(), t.end());
  return M;
}

// log det of a sparse SPD matrix; throws if it is not positive definite.
inline double sparse_logdet(const SparseMatrix& A) {
  Eigen::SimplicialLDLT<SparseMatrix> f(A);
  if (f.info() != Eigen::Success || !(f.vectorD().array() > 0).all())
    throw NotPositiveDefiniteError("matrix is not positive definite");
  return f.vectorD().array().log().sum();
}

// Largest eigenvalue of A^{-1} M on the same index space (generalized symmetric problem).
inline double generalized_top_eigenvalue(const SparseMatrix& A, const SparseMatrix& M) {
  if (A.rows() <= 1500) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(Matrix(M), Matrix(A), Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
  }
  Eigen::SimplicialLDLT<SparseMatrix> f(A);
  Eigen::VectorXd v = Eigen::VectorXd::Ones(A.rows());
  double lam = 0;
  for (int it = 0; it < 2000; ++it) {
    Eigen::VectorXd w = f.solve(M * v);
    double nl = v.dot(M * v) / v.dot(A * v);
    v = w / w.norm();
    if (it > 10 && std::abs(nl - lam) < 1e-12 * std::abs(nl)) return nl;
    lam = nl;
  }
  return lam;
}

// G(X, Y, phi) with the gradient-square exponent kappa/2 sum_{x in X, e} (d_e phi)^2.
class Regulator {
 public:
  Regulator(const TorusLattice& lat, const SiteSet& X, const SiteSet& Y, double m, double kappa)
      : lat_(&lat), X_(X), Y_(Y), m_(m), kappa_(kappa), D_(lat, Y, m) {
    if (!X.subset_of(Y)) throw GeometryError("regulator needs X inside Y");
    if (Y.count() == static_cast<std::size_t>(lat.site_count())) throw GeometryError("regulator needs Y != Lambda");
    A_ = D_.full_operator();
    M_ = gradient_square_matrix(lat, X);
    const auto& y = D_.interior();
    SparseMatrix MYY = sparse_block(M_, y, y);
    top_ = generalized_top_eigenvalue(D_.restricted(), MYY);
    if (!(kappa * top_ < 1)) throw ContractionError("kappa T_Y is not a contraction; no minimizer exists");
    SparseMatrix B = SparseMatrix(D_.restricted()) - kappa * MYY;
    shifted_.compute(B);
    if (shifted_.info() != Eigen::Success || !(shifted_.vectorD().array() > 0).all())
      throw ContractionError("indefinite regulator minimization problem");
    log_norm_ = -0.5 * (shifted_.vectorD().array().log().sum() - sparse_logdet(D_.restricted()));
  }

  double kappa() const { return kappa_; }
  // kappa must stay below 1 / top for the regulator to exist.
  double certified_threshold() const { return 1.0 / top_; }
  double contraction_norm() const { return kappa_ * top_; }
  // log N(X, Y) = -1/2 [log det(A_YY - kappa M_YY) - log det A_YY]
  double log_normalization() const { return log_norm_; }
  const DirichletOperator& dirichlet() const { return D_; }
  const SparseMatrix& gradient_matrix() const { return M_; }

  // psi_1: minimizer of phi^T A phi - kappa phi^T M phi with phi fixed off Y.
  Field minimizer_kappa(const Field& phi) const {
    const auto& y = D_.interior();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(y.size()));
    Field off = phi;
    for (int x : y) off[x] = 0;
    Field r = A_ * off - kappa_ * (M_ * off);
    for (std::size_t a = 0; a < y.size(); ++a) rhs[a] = -r[y[a]];
    Eigen::VectorXd s = shifted_.solve(rhs);
    for (std::size_t a = 0; a < y.size(); ++a) off[y[a]] = s[a];
    return off;
  }
  Field minimizer_harmonic(const Field& phi) const { return D_.harmonic_extension(phi); }

  // Alternative representation through the two minimizers.
  double log_value(const Field& phi) const {
    Field p1 = minimizer_kappa(phi), p2 = minimizer_harmonic(phi);
    return 0.5 * kappa_ * p1.dot(M_ * p1) - 0.5 * form_Y(p1, phi) + 0.5 * form_Y(p2, phi);
  }
  double value(const Field& phi) const { return std::exp(log_value(phi)); }

  // Definition as a normalized conditional expectation over zeta ~ N(0, C_Y^D), h = P_Y phi.
  double log_value_definitional(const Field& phi) const {
    Field h = D_.harmonic_extension(phi);
    Field Mh = M_ * h;
    const auto& y = D_.interior();
    Eigen::VectorXd b(static_cast<Eigen::Index>(y.size()));
    for (std::size_t a = 0; a < y.size(); ++a) b[a] = kappa_ * Mh[y[a]];
    return 0.5 * kappa_ * h.dot(Mh) + 0.5 * b.dot(shifted_.solve(b));
  }

  // kappa/2 sum_X (d psi)^2 for psi = psi_1 and psi_2: the sandwich bounds.
  std::pair<double, double> log_sandwich(const Field& phi) const {
    Field p1 = minimizer_kappa(phi), p2 = minimizer_harmonic(phi);
    return {0.5 * kappa_ * p2.dot(M_ * p2), 0.5 * kappa_ * p1.dot(M_ * p1)};
  }

 private:
  // psi^T A psi with the (Y^c, Y^c) block dropped; psi agrees with phi off Y.
  double form_Y(const Field& psi, const Field& phi) const {
    Field off = phi;
    for (int x : D_.interior()) off[x] = 0;
    Field in = psi - off;
    return in.dot(A_ * in) + 2 * in.dot(A_ * off);
  }

  const TorusLattice* lat_;
  SiteSet X_, Y_;
  double m_, kappa_;
  DirichletOperator D_;
  SparseMatrix A_, M_;
  double top_ = 0;
  double log_norm_ = 0;
  Eigen::SimplicialLDLT<SparseMatrix> shifted_;
};

// G_0(X) = exp(kappa/2 sum_{x in X, e} (d_e phi(x))^2)
inline double regulator_g0(const TorusLattice& lat, const SiteSet& X, double kappa, const Field& phi) {
  return std::exp(0.5 * kappa * directed_grad_square(lat, phi, X));
}

struct RegulatorIntegrationReport {
  double log_ratio = 0;       // log N(X,U) - log N(X,Y)
  double per_site = 0;        // log_ratio / |X|
  double implied_c = 1;       // exp(log_ratio L^{dj} / |X|)
  double trace_direct = 0;    // Tr(T_U - T_Y) with T = 1/2 C^{1/2} M C^{1/2}
  double trace_poisson = 0;   // 1/2 sum_{e, x in X} sum_y dP_Y(x,y) dC_U(y,x)
  std::optional<MeanEstimate> mc_ratio;
  double exact_ratio = 1;
  int x_size = 0;
};

inline RegulatorIntegrationReport regulator_integration_check(const TorusLattice& lat, const SiteSet& X,
                                                              const SiteSet& Y, const SiteSet& U, double m,
                                                              double kappa, int j, std::size_t mc_samples = 0,
                                                              std::uint64_t seed = 1) {
  if (!X.subset_of(Y) || !Y.subset_of(U)) throw GeometryError("need X inside Y inside U");
  RegulatorIntegrationReport rep;
  rep.x_size = static_cast<int>(X.count());
  if (X.none()) return rep;
  Regulator RY(lat, X, Y, m, kappa), RU(lat, X, U, m, kappa);
  rep.log_ratio = RU.log_normalization() - RY.log_normalization();
  rep.exact_ratio = std::exp(rep.log_ratio);
  rep.per_site = rep.log_ratio / rep.x_size;
  rep.implied_c = std::exp(rep.per_site * std::pow(static_cast<double>(lat.L()), lat.dim() * j));

  const auto& DY = RY.dirichlet();
  const auto& DU = RU.dirichlet();
  Matrix CU = DU.green_full(), CY = DY.green_full();
  Matrix M(RY.gradient_matrix());
  rep.trace_direct = 0.5 * ((M * CU).trace() - (M * CY).trace());
  Matrix P = DY.poisson_full();
  double s = 0;
  X.for_each([&](int x) {
    for (int e = 0; e < lat.num_directions(); ++e) {
      int xe = lat.neighbor(x, e);
      for (int y = 0; y < lat.site_count(); ++y) {
        double dp = P(xe, y) - P(x, y);
        if (dp == 0) continue;
        s += dp * (CU(y, xe) - CU(y, x));
      }
    }
  });
  rep.trace_poisson = 0.5 * s;

  if (mc_samples > 0) {
    auto estimate = [&](const DirichletOperator& D, std::uint64_t stream) {
      SparseGaussianSampler sampler(D.restricted());
      Rng rng = make_rng(seed, stream);
      std::vector<double> v(mc_samples);
      const auto& in = D.interior();
      Field f = Field::Zero(lat.site_count());
      SparseMatrix Msp = RY.gradient_matrix();
      for (std::size_t k = 0; k < mc_samples; ++k) {
        Eigen::VectorXd z = sampler.sample(rng);
        for (std::size_t a = 0; a < in.size(); ++a) f[in[a]] = z[a];
        v[k] = std::exp(0.5 * kappa * f.dot(Msp * f));
      }
      return mean_estimate(v);
    };
    MeanEstimate nu = estimate(DU, 1), ny = estimate(DY, 2);
    MeanEstimate r;
    r.n = mc_samples;
    r.mean = nu.mean / ny.mean;
    r.std_error = r.mean * std::sqrt(std::pow(nu.std_error / nu.mean, 2) + std::pow(ny.std_error / ny.mean, 2));
    rep.mc_ratio = r;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Variance of the smoothed fluctuation field at a site x:
// v = sum_e (D_e P_X) C_U (D_e P_X)^T (x, x), P_X = id when X is empty.

inline double smoothed_fluctuation_variance(const TorusLattice& lat, int x, const SiteSet& X, const SiteSet& U,
                                            double m) {
  if (!X.subset_of(U)) throw GeometryError("need X inside U");
  DirichletOperator DU(lat, U, m);
  std::vector<Eigen::VectorXd> rows;  // (D_e P_X)(x, .) as Lambda-vectors
  const int n = lat.site_count();
  auto prow = [&](const std::optional<DirichletOperator>& DX, int z) {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(n);
    if (!DX || DX->position(z) < 0) {
      r[z] = 1.0;
      return r;
    }
    Eigen::VectorXd ez = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(DX->interior().size()));
    ez[DX->position(z)] = 1.0;
    Eigen::VectorXd w = DX->solve(ez);
    // P_X(z, y) = sum_a w_a (-A)(a, y) for y on the boundary
    for (std::size_t a = 0; a < DX->interior().size(); ++a)
      for (SparseMatrix::InnerIterator it(DX->full_operator(), DX->interior()[a]); it; ++it)
        if (DX->position(it.row()) < 0) r[it.row()] -= w[a] * it.value();
    return r;
  };
  std::optional<DirichletOperator> DX;
  if (X.any()) DX.emplace(lat, X, m);
  Eigen::VectorXd p0 = prow(DX, x);
  double v = 0;
  for (int e = 0; e < lat.num_directions(); ++e) {
    Eigen::VectorXd r = prow(DX, lat.neighbor(x, e)) - p0;
    Eigen::VectorXd ru(static_cast<Eigen::Index>(DU.interior().size()));
    for (std::size_t a = 0; a < DU.interior().size(); ++a) ru[a] = r[DU.interior()[a]];
    v += ru.dot(DU.solve(ru));
  }
  return v;
}

struct CovarianceScalingReport {
  int L = 3;
  std::vector<int> scales;
  std::vector<double> values;
  std::vector<double> exponents;  // log(v_{j+1}/v_j)/log L
};

// X = cube of half-width L^j around the origin, U = cube of half-width 2 L^j.
inline CovarianceScalingReport covariance_scaling_check(const TorusLattice& lat, std::vector<int> scales,
                                                        double m = 0.0) {
  CovarianceScalingReport rep;
  rep.L = lat.L();
  int o = lat.index(std::vector<int>(lat.dim(), 0));
  for (int j : scales) {
    int r = static_cast<int>(checked_pow(lat.L(), j));
    if (4 * r + 3 > lat.side()) throw GeometryError("covariance_scaling_check: scale does not fit the torus");
    rep.scales.push_back(j);
    rep.values.push_back(smoothed_fluctuation_variance(lat, o, cube(lat, o, r), cube(lat, o, 2 * r), m));
  }
  for (std::size_t k = 0; k + 1 < rep.values.size(); ++k)
    rep.exponents.push_back(std::log(rep.values[k + 1] / rep.values[k]) /
                            ((rep.scales[k + 1] - rep.scales[k]) * std::log(static_cast<double>(lat.L()))));
  return rep;
}

}  // namespace polyrg
