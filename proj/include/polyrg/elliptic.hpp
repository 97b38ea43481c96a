#pragma once

#include "polyrg/lattice.hpp"
#include "polyrg/stats.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <numbers>
#include <optional>
#include <random>

namespace polyrg {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Matrix = Eigen::MatrixXd;

class SingularOperatorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One weight per undirected edge (x, x + e_axis), stored at (x, axis).
class EdgeCoefficients {
 public:
  EdgeCoefficients(const TorusLattice& lat, double value = 1.0)
      : lat_(&lat), w_(static_cast<std::size_t>(lat.site_count()) * lat.dim(), value) {}

  double operator()(int x, int e) const {
    const int d = lat_->dim();
    if (e < d) return w_[static_cast<std::size_t>(x) * d + e];
    return w_[static_cast<std::size_t>(lat_->neighbor(x, e)) * d + (e - d)];
  }
  void set(int x, int axis, double v) { w_[static_cast<std::size_t>(x) * lat_->dim() + axis] = v; }
  const TorusLattice& lattice() const { return *lat_; }

  // Ellipticity bounds over edges with at least one endpoint in U.
  std::pair<double, double> bounds(const SiteSet& U) const {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    U.for_each([&](int x) {
      for (int e = 0; e < lat_->num_directions(); ++e) {
        double a = (*this)(x, e);
        lo = std::min(lo, a);
        hi = std::max(hi, a);
      }
    });
    return {lo, hi};
  }

 private:
  const TorusLattice* lat_;
  std::vector<double> w_;
};

// -div(a grad) + m^2 on the full torus; a = nullptr means unit weights (-Delta + m^2).
inline SparseMatrix torus_operator(const TorusLattice& lat, double m, const EdgeCoefficients* a = nullptr) {
  const int n = lat.site_count();
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(n) * (lat.num_directions() + 1));
  for (int x = 0; x < n; ++x) {
    double diag = m * m;
    for (int e = 0; e < lat.num_directions(); ++e) {
      double w = a ? (*a)(x, e) : 1.0;
      diag += w;
      t.emplace_back(x, lat.neighbor(x, e), -w);
    }
    t.emplace_back(x, x, diag);
  }
  SparseMatrix A(n, n);
  A.setFromTriplets(t.begin(), t.end());
  return A;
}

inline SparseMatrix torus_laplacian(const TorusLattice& lat, double m) { return torus_operator(lat, m); }
inline Matrix torus_laplacian_dense(const TorusLattice& lat, double m) { return Matrix(torus_operator(lat, m)); }

inline Matrix dense_block(const SparseMatrix& A, const std::vector<int>& rows, const std::vector<int>& cols) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  std::vector<int> col_pos(A.cols(), -1);
  for (std::size_t c = 0; c < cols.size(); ++c) col_pos[cols[c]] = static_cast<int>(c);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    // A is symmetric, so column r of A is row r.
    for (SparseMatrix::InnerIterator it(A, rows[r]); it; ++it) {
      int c = col_pos[it.row()];
      if (c >= 0) out(static_cast<Eigen::Index>(r), c) = it.value();
    }
  }
  return out;
}

inline SparseMatrix sparse_block(const SparseMatrix& A, const std::vector<int>& rows, const std::vector<int>& cols) {
  std::vector<int> col_pos(A.cols(), -1);
  for (std::size_t c = 0; c < cols.size(); ++c) col_pos[cols[c]] = static_cast<int>(c);
  std::vector<Eigen::Triplet<double>> t;
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (SparseMatrix::InnerIterator it(A, rows[r]); it; ++it) {
      int c = col_pos[it.row()];
      if (c >= 0) t.emplace_back(static_cast<int>(r), c, it.value());
    }
  SparseMatrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

// The operator restricted to U with zero data on the complement, factorized once.
// Solves, Green's functions and Poisson kernels are all derived from it.
class DirichletOperator {
 public:
  DirichletOperator(const TorusLattice& lat, const SiteSet& U, double m, const EdgeCoefficients* a = nullptr)
      : lat_(&lat), U_(U), m_(m), full_(torus_operator(lat, m, a)) {
    if (U.none()) throw GeometryError("Dirichlet problem on the empty set");
    const bool whole = U.count() == static_cast<std::size_t>(lat.site_count());
    if (whole && m == 0) throw SingularOperatorError("the massless torus Laplacian is singular");
    if (a) {
      auto [lo, hi] = a->bounds(U);
      if (!(lo > 0)) throw std::invalid_argument("edge coefficients are not uniformly elliptic");
      lambda_ = lo;
      Lambda_ = hi;
    }
    interior_ = U.indices();
    if (!whole) boundary_ = outer_boundary(lat, U).indices();
    pos_.assign(lat.site_count(), -1);
    for (std::size_t k = 0; k < interior_.size(); ++k) pos_[interior_[k]] = static_cast<int>(k);
    A_UU_ = sparse_block(full_, interior_, interior_);
    solver_.compute(A_UU_);
    if (solver_.info() != Eigen::Success) throw SingularOperatorError("Dirichlet operator factorization failed");
  }

  const TorusLattice& lattice() const { return *lat_; }
  const SiteSet& domain() const { return U_; }
  double mass() const { return m_; }
  const std::vector<int>& interior() const { return interior_; }
  const std::vector<int>& boundary() const { return boundary_; }
  int position(int x) const { return pos_[x]; }
  const SparseMatrix& full_operator() const { return full_; }
  const SparseMatrix& restricted() const { return A_UU_; }
  double ellipticity_lower() const { return lambda_; }
  double ellipticity_upper() const { return Lambda_; }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const { return solver_.solve(rhs); }
  Matrix solve(const Matrix& rhs) const { return solver_.solve(rhs); }

  // |U| x |U| Green's function, rows and columns ordered as interior().
  Matrix green() const {
    Matrix I = Matrix::Identity(A_UU_.rows(), A_UU_.cols());
    Matrix G = solver_.solve(I);
    return 0.5 * (G + G.transpose());
  }

  // Green's function embedded in Lambda x Lambda (zero off U).
  Matrix green_full() const {
    Matrix G = green();
    Matrix out = Matrix::Zero(lat_->site_count(), lat_->site_count());
    for (std::size_t a = 0; a < interior_.size(); ++a)
      for (std::size_t b = 0; b < interior_.size(); ++b) out(interior_[a], interior_[b]) = G(a, b);
    return out;
  }

  // |U| x |dU| kernel: column y is the solution with boundary data 1 at y, 0 elsewhere.
  Matrix poisson_kernel() const {
    Matrix B = -dense_block(full_, interior_, boundary_);
    return solver_.solve(B);
  }

  // P_U as a Lambda x Lambda matrix: harmonic extension inside U, identity outside.
  Matrix poisson_full() const {
    const int n = lat_->site_count();
    Matrix P = Matrix::Zero(n, n);
    for (int x = 0; x < n; ++x)
      if (pos_[x] < 0) P(x, x) = 1.0;
    Matrix K = poisson_kernel();
    for (std::size_t a = 0; a < interior_.size(); ++a)
      for (std::size_t b = 0; b < boundary_.size(); ++b) P(interior_[a], boundary_[b]) = K(a, b);
    return P;
  }

  // Harmonic extension of f from the complement of U into U.
  Field harmonic_extension(const Field& f) const {
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(interior_.size()));
    for (std::size_t a = 0; a < interior_.size(); ++a)
      for (SparseMatrix::InnerIterator it(full_, interior_[a]); it; ++it)
        if (pos_[it.row()] < 0) rhs[a] -= it.value() * f[it.row()];
    Eigen::VectorXd u = solver_.solve(rhs);
    Field out = f;
    for (std::size_t a = 0; a < interior_.size(); ++a) out[interior_[a]] = u[a];
    return out;
  }

  // Residual of the operator applied to g at sites of U (zero iff g is harmonic in U).
  double harmonic_residual(const Field& g) const {
    Field r = full_ * g;
    double mx = 0;
    for (int x : interior_) mx = std::max(mx, std::abs(r[x]));
    return mx;
  }

 private:
  const TorusLattice* lat_;
  SiteSet U_;
  double m_;
  SparseMatrix full_;
  SparseMatrix A_UU_;
  std::vector<int> interior_, boundary_, pos_;
  double lambda_ = 1.0, Lambda_ = 1.0;
  Eigen::SimplicialLDLT<SparseMatrix> solver_;
};

inline Matrix dirichlet_green(const TorusLattice& lat, const SiteSet& U, double m) {
  return DirichletOperator(lat, U, m).green();
}

inline Matrix poisson_kernel(const TorusLattice& lat, const SiteSet& U, double m) {
  return DirichletOperator(lat, U, m).poisson_kernel();
}

inline Matrix variable_coefficient_green(const TorusLattice& lat, const SiteSet& U, const EdgeCoefficients& a,
                                         double m) {
  return DirichletOperator(lat, U, m, &a).green();
}

// Full torus covariance (-Delta + m^2)^{-1}; at m = 0 the pseudo-inverse on mean-zero fields.
inline Matrix torus_covariance(const TorusLattice& lat, double m) {
  Matrix A = torus_laplacian_dense(lat, m);
  const int n = lat.site_count();
  if (m > 0) return A.llt().solve(Matrix::Identity(n, n));
  Matrix J = Matrix::Constant(n, n, 1.0 / n);
  Matrix C = (A + J).llt().solve(Matrix::Identity(n, n));
  return C - J;
}

// Periodic grid of arbitrary side n (even sides included), row-major, axis 0 slowest.
// Forward differences D_a for a = 0..d-1 along +e_a.
struct PeriodicGrid {
  int dim, side;
  int site_count() const {
    int c = 1;
    for (int a = 0; a < dim; ++a) c *= side;
    return c;
  }
  int shift(int x, int axis, int step) const {
    int stride = 1;
    for (int a = dim - 1; a > axis; --a) stride *= side;
    int c = (x / stride) % side;
    int nc = ((c + step) % side + side) % side;
    return x + (nc - c) * stride;
  }
  SparseMatrix forward_difference(int axis) const {
    const int n = site_count();
    std::vector<Eigen::Triplet<double>> t;
    for (int x = 0; x < n; ++x) {
      t.emplace_back(x, shift(x, axis, 1), 1.0);
      t.emplace_back(x, x, -1.0);
    }
    SparseMatrix D(n, n);
    D.setFromTriplets(t.begin(), t.end());
    return D;
  }
  SparseMatrix laplacian(double m) const {
    const int n = site_count();
    SparseMatrix A(n, n);
    for (int a = 0; a < dim; ++a) {
      SparseMatrix D = forward_difference(a);
      A += SparseMatrix(D.transpose() * D);
    }
    SparseMatrix I(n, n);
    I.setIdentity();
    return A + m * m * I;
  }
};

// ---------------------------------------------------------------------------
// Spectral Green's functions on a torus of arbitrary side n in dimension d.

// C(x) = n^{-d} sum_k cos(k.x) / (m^2 + sum_a 2(1 - cos k_a)), x in raw coordinates
// 0..n-1 (row-major, axis 0 slowest). At m = 0 the zero mode is dropped.
inline std::vector<double> spectral_green(int d, int n, double m) {
  if (d < 1 || n < 2) throw std::invalid_argument("spectral_green: bad dimension or side");
  std::size_t total = 1;
  for (int a = 0; a < d; ++a) total *= static_cast<std::size_t>(n);
  std::vector<double> cosk(static_cast<std::size_t>(n) * n);
  for (int k = 0; k < n; ++k)
    for (int x = 0; x < n; ++x) cosk[static_cast<std::size_t>(k) * n + x] = std::cos(2 * std::numbers::pi * k * x / n);
  std::vector<double> eig(n);
  for (int k = 0; k < n; ++k) eig[k] = 2.0 * (1.0 - cosk[static_cast<std::size_t>(k) * n + 1]);
  std::vector<double> cur(total);
  std::vector<int> idx(d, 0);
  for (std::size_t s = 0; s < total; ++s) {
    std::size_t r = s;
    double lam = m * m;
    bool zero = true;
    for (int a = d - 1; a >= 0; --a) {
      int k = static_cast<int>(r % n);
      r /= n;
      lam += eig[k];
      zero = zero && k == 0;
    }
    cur[s] = (zero && m == 0) ? 0.0 : 1.0 / lam;
  }
  // Cosine transform one axis at a time; the sine parts cancel by k -> -k symmetry.
  std::vector<double> next(total);
  std::size_t stride = total;
  for (int a = 0; a < d; ++a) {
    stride /= n;
    const std::size_t outer = total / (stride * n);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < stride; ++i) {
        const std::size_t base = o * stride * n + i;
        for (int x = 0; x < n; ++x) {
          double acc = 0;
          for (int k = 0; k < n; ++k) acc += cosk[static_cast<std::size_t>(k) * n + x] * cur[base + k * stride];
          next[base + x * stride] = acc / n;
        }
      }
    std::swap(cur, next);
  }
  return cur;
}

class SpectralGreen {
 public:
  SpectralGreen(int d, int n, double m) : d_(d), n_(n), m_(m), v_(spectral_green(d, n, m)) {}
  int dim() const { return d_; }
  int side() const { return n_; }
  double mass() const { return m_; }
  double operator()(std::span<const int> x) const {
    std::size_t s = 0;
    for (int a = 0; a < d_; ++a) s = s * n_ + static_cast<std::size_t>(((x[a] % n_) + n_) % n_);
    return v_[s];
  }
  double operator()(std::initializer_list<int> x) const { return (*this)(std::span<const int>(x.begin(), x.size())); }
  // Forward derivative along +e_0 at (r, 0, ..., 0).
  double axis_gradient(int r) const {
    std::vector<int> a(d_, 0), b(d_, 0);
    a[0] = r + 1;
    b[0] = r;
    return (*this)(a) - (*this)(b);
  }
  // Central derivative along e_0 at (r, 0, ...).
  double axis_central_gradient(int r) const {
    std::vector<int> a(d_, 0), b(d_, 0);
    a[0] = r + 1;
    b[0] = r - 1;
    return 0.5 * ((*this)(a) - (*this)(b));
  }

 private:
  int d_, n_;
  double m_;
  std::vector<double> v_;
};

struct GreenDecayReport {
  int dim = 2;
  int side = 0;
  double mass = 0;
  LinearFit gradient_fit;  // log|dC(r e_0)| against log r
  int r_min = 0, r_max = 0;
  bool power_law_rejected = false;  // decay clearly faster than -(d-1) - 1
  // d = 2: a(x) = 2d [C(0) - C(x)] fitted as a_d log|x| + k in the random-walk normalization.
  std::optional<LinearFit> potential_fit;
  int potential_side = 0;
};

inline double euler_gamma() { return std::numbers::egamma; }
inline double green_constant_d2() { return (2 * std::numbers::egamma + std::log(8.0)) / std::numbers::pi; }

inline GreenDecayReport greens_decay_fit(int d, int side, double m, int potential_side = 0) {
  GreenDecayReport rep;
  rep.dim = d;
  rep.side = side;
  rep.mass = m;
  rep.r_min = 4;
  rep.r_max = side / 4;
  if (rep.r_max - rep.r_min < 4) throw std::invalid_argument("greens_decay_fit: insufficient range for a fit");
  SpectralGreen G(d, side, m);
  std::vector<double> lx, ly;
  for (int r = rep.r_min; r <= rep.r_max; ++r) {
    double g = std::abs(G.axis_gradient(r));
    if (g <= 0 || !std::isfinite(std::log(g))) continue;
    lx.push_back(std::log(r + 0.5));
    ly.push_back(std::log(g));
  }
  if (lx.size() < 3) throw std::invalid_argument("greens_decay_fit: gradient vanished below resolution");
  rep.gradient_fit = linear_fit(lx, ly);
  rep.power_law_rejected = rep.gradient_fit.slope < -(d - 1) - 1.0;
  if (d == 2 && potential_side > 0) {
    rep.potential_side = potential_side;
    SpectralGreen P(2, potential_side, 0.0);
    double c0 = P({0, 0});
    std::vector<double> px, py;
    for (int u = -16; u <= 16; ++u)
      for (int v = -16; v <= 16; ++v) {
        double r2 = static_cast<double>(u) * u + static_cast<double>(v) * v;
        if (r2 < 16.0 || r2 > 256.0) continue;
        px.push_back(0.5 * std::log(r2));
        py.push_back(4.0 * (c0 - P({u, v})));
      }
    rep.potential_fit = linear_fit(px, py);
  }
  return rep;
}

struct PeriodizationTailReport {
  int dim = 2, L = 3;
  std::vector<int> N;
  std::vector<int> side;
  std::vector<int> probe_r;      // x = (side / 3, 0, ...)
  std::vector<double> tail;      // dC_torus(x) - dG_proxy(x)
  std::vector<double> ratios;    // tail[k+1] / tail[k]
  double expected_ratio = 0;     // L^{-(d-1)}
  double symmetric_point_residual = 0;  // central gradient at x = 0
};

// The free-lattice gradient is approximated by a torus of side proxy_factor * side + 1.
inline PeriodizationTailReport periodization_tail_check(int d, int L, std::vector<int> Ns, int proxy_factor = 4) {
  if (proxy_factor < 2) throw std::invalid_argument("periodization_tail_check: proxy torus too small");
  PeriodizationTailReport rep;
  rep.dim = d;
  rep.L = L;
  rep.N = Ns;
  rep.expected_ratio = std::pow(static_cast<double>(L), -(d - 1));
  for (int N : Ns) {
    int n = static_cast<int>(checked_pow(L, N));
    int r = n / 3;
    SpectralGreen torus(d, n, 0.0), proxy(d, proxy_factor * n + 1, 0.0);
    rep.side.push_back(n);
    rep.probe_r.push_back(r);
    rep.tail.push_back(torus.axis_gradient(r) - proxy.axis_gradient(r));
    rep.symmetric_point_residual = std::max(rep.symmetric_point_residual, std::abs(torus.axis_central_gradient(0)));
  }
  for (std::size_t k = 0; k + 1 < rep.tail.size(); ++k) rep.ratios.push_back(rep.tail[k + 1] / rep.tail[k]);
  return rep;
}

// ---------------------------------------------------------------------------
// Harmonic-function estimates on cubes K_R = {|x|_inf <= R} around the origin.

struct HarmonicGradientReport {
  int R = 0;
  double c_any = 0;       // sup |d_e f(0)| R / sup|f| over harmonic f, attained by sign data
  double c_positive = 0;  // sup |d_e f(0)| R / f(0) over nonnegative harmonic f
  int samples = 0;
  double sampled_any = 0;  // the same ratio over random boundary data; must not exceed c_any
};

inline HarmonicGradientReport harmonic_gradient_bound_check(const TorusLattice& lat, int R, int trials = 64,
                                                            std::uint64_t seed = 1) {
  if (R < 3) throw GeometryError("harmonic_gradient_bound_check needs R >= 3");
  int o = lat.index(std::vector<int>(lat.dim(), 0));
  DirichletOperator D(lat, cube(lat, o, R), 0.0);
  Matrix K = D.poisson_kernel();
  int p0 = D.position(o);
  HarmonicGradientReport rep;
  rep.R = R;
  for (int e = 0; e < lat.num_directions(); ++e) {
    int q = D.position(lat.neighbor(o, e));
    Eigen::VectorXd g = K.row(q) - K.row(p0);
    rep.c_any = std::max(rep.c_any, R * g.cwiseAbs().sum());
    for (Eigen::Index y = 0; y < K.cols(); ++y)
      rep.c_positive = std::max(rep.c_positive, R * std::abs(g[y]) / K(p0, y));
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  rep.samples = trials;
  for (int t = 0; t < trials; ++t) {
    Eigen::VectorXd b(K.cols());
    for (auto& v : b) v = U(rng);
    Eigen::VectorXd f = K * b;
    double sup = std::max(b.cwiseAbs().maxCoeff(), f.cwiseAbs().maxCoeff());
    for (int e = 0; e < lat.num_directions(); ++e) {
      double grad = std::abs(f[D.position(lat.neighbor(o, e))] - f[p0]);
      rep.sampled_any = std::max(rep.sampled_any, R * grad / sup);
    }
  }
  return rep;
}

struct MeanValueReport {
  int R = 0;
  double r = 0, s = 0;
  int annulus_size = 0;
  double c_squared = 0;  // sup |u(x)|^2 R^d / sum_X u^2, exact over harmonic u
  double c_abs = 0;      // sup |u(x)| R^d / sum_X |u|, over kernel columns and sampled data
  int samples = 0;
};

// u harmonic in K_R; X = K_R \ K_{rR}; x ranges over K_{sR}. Requires 0 < 3s < r < 1.
inline MeanValueReport mean_value_bound_check(const TorusLattice& lat, int R, double r, double s, int trials = 256,
                                              std::uint64_t seed = 2) {
  if (!(s > 0 && 3 * s < r && r < 1)) throw GeometryError("mean_value_bound_check needs 0 < 3s < r < 1");
  const int d = lat.dim();
  int o = lat.index(std::vector<int>(d, 0));
  SiteSet KR = cube(lat, o, R);
  DirichletOperator D(lat, KR, 0.0);
  Matrix K = D.poisson_kernel();
  auto inner = cube(lat, o, static_cast<int>(std::floor(r * R)));
  auto centre = cube(lat, o, static_cast<int>(std::floor(s * R)));
  std::vector<int> annulus;
  (KR - inner).for_each([&](int y) { annulus.push_back(D.position(y)); });
  std::vector<int> xs;
  centre.for_each([&](int x) { xs.push_back(D.position(x)); });
  MeanValueReport rep;
  rep.R = R;
  rep.r = r;
  rep.s = s;
  rep.annulus_size = static_cast<int>(annulus.size());
  const double Rd = std::pow(static_cast<double>(R), d);
  Matrix A(annulus.size(), K.cols());
  for (std::size_t k = 0; k < annulus.size(); ++k) A.row(static_cast<Eigen::Index>(k)) = K.row(annulus[k]);
  Eigen::LDLT<Matrix> gram(A.transpose() * A);
  for (int x : xs) {
    Eigen::VectorXd p = K.row(x).transpose();
    rep.c_squared = std::max(rep.c_squared, Rd * p.dot(gram.solve(p)));
  }
  auto abs_ratio = [&](const Eigen::VectorXd& u) {
    double denom = 0;
    for (int y : annulus) denom += std::abs(u[y]);
    double num = 0;
    for (int x : xs) num = std::max(num, std::abs(u[x]));
    return Rd * num / denom;
  };
  for (Eigen::Index y = 0; y < K.cols(); ++y) rep.c_abs = std::max(rep.c_abs, abs_ratio(K.col(y)));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  rep.samples = static_cast<int>(K.cols()) + trials;
  for (int t = 0; t < trials; ++t) {
    Eigen::VectorXd b(K.cols());
    for (auto& v : b) v = g(rng);
    rep.c_abs = std::max(rep.c_abs, abs_ratio(K * b));
  }
  return rep;
}

struct CaccioppoliReport {
  double lhs = 0;  // sum over edges of avg(phi^2) (grad u)^2
  double rhs = 0;  // sum over edges of avg(u^2) (grad phi)^2
  double ratio = 0;
  double lambda = 1, Lambda = 1;
  double bound = 4;  // 4 Lambda^2 / lambda^2
};

// Edge-weighted Caccioppoli check: u must solve the a-weighted equation on the
// support of the cutoff phi, so the pole of u may not lie in that support.
inline CaccioppoliReport caccioppoli_check(const TorusLattice& lat, const Field& u, const Field& phi,
                                           const SiteSet& harmonic_region, const EdgeCoefficients& a) {
  for (int x = 0; x < lat.site_count(); ++x)
    if (phi[x] != 0 && !harmonic_region.test(x)) throw GeometryError("cutoff support leaves the harmonic region");
  CaccioppoliReport rep;
  auto [lo, hi] = a.bounds(harmonic_region);
  rep.lambda = lo;
  rep.Lambda = hi;
  rep.bound = 4 * hi * hi / (lo * lo);
  for (int x = 0; x < lat.site_count(); ++x)
    for (int e = 0; e < lat.dim(); ++e) {
      int y = lat.neighbor(x, e);
      double du = u[y] - u[x], dphi = phi[y] - phi[x];
      rep.lhs += 0.5 * (phi[x] * phi[x] + phi[y] * phi[y]) * du * du;
      rep.rhs += 0.5 * (u[x] * u[x] + u[y] * u[y]) * dphi * dphi;
    }
  rep.ratio = rep.rhs > 0 ? rep.lhs / rep.rhs : 0.0;
  return rep;
}

// Piecewise-linear radial cutoff in the sup norm: 1 on K_{r1}, 0 outside K_{r2}.
inline Field annular_cutoff(const TorusLattice& lat, int centre, int r1, int r2) {
  Field phi = Field::Zero(lat.site_count());
  for (int x = 0; x < lat.site_count(); ++x) {
    int t = lat.sup_distance(centre, x);
    if (t <= r1)
      phi[x] = 1.0;
    else if (t < r2)
      phi[x] = static_cast<double>(r2 - t) / (r2 - r1);
  }
  return phi;
}

// a = 1 - kappa * bump with a Gaussian bump of width w around site c.
inline EdgeCoefficients bump_coefficients(const TorusLattice& lat, int c, double kappa, double w) {
  EdgeCoefficients a(lat);
  for (int x = 0; x < lat.site_count(); ++x)
    for (int axis = 0; axis < lat.dim(); ++axis) {
      double r2 = 0;
      for (int b = 0; b < lat.dim(); ++b) {
        double dx = lat.displacement(c, x, b) + (b == axis ? 0.5 : 0.0);
        r2 += dx * dx;
      }
      a.set(x, axis, 1.0 - kappa * std::exp(-r2 / (w * w)));
    }
  return a;
}

}  // namespace polyrg
