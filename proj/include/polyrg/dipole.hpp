#pragma once

#include "polyrg/functional.hpp"
#include "polyrg/polymer.hpp"
#include "polyrg/stats.hpp"

#include <Eigen/IterativeLinearSolvers>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>

namespace polyrg {

class ModelParams {
 public:
  ModelParams() = default;
  ModelParams(double z, double beta, double sigma, double m) : z_(z), beta_(beta), sigma_(sigma), m_(m) {
    if (!(beta > 0)) throw std::invalid_argument("beta must be positive");
    if (!(sigma > -1)) throw std::invalid_argument("sigma must exceed -1");
    if (m < 0) throw std::invalid_argument("mass must be non-negative");
  }
  static ModelParams from_epsilon(double z, double beta, double epsilon, double m) {
    return {z, beta, 1.0 / epsilon - 1.0, m};
  }
  double z() const { return z_; }
  double beta() const { return beta_; }
  double sigma() const { return sigma_; }
  double epsilon() const { return 1.0 / (1.0 + sigma_); }
  double mass() const { return m_; }
  // sqrt(beta / epsilon), the fused factor multiplying gradients of phi + xi inside W.
  double phase_factor() const { return std::sqrt(beta_ * (1.0 + sigma_)); }

 private:
  double z_ = 0, beta_ = 1, sigma_ = 0, m_ = 0;
};

inline double local_V(const TorusLattice& lat, const SiteSet& X, const Field& psi) {
  return 0.25 * directed_grad_square(lat, psi, X);
}

// Sum over x in X and all 2d directions of cos(factor * d_e f(x)).
inline double local_W(const TorusLattice& lat, const SiteSet& X, const Field& f, double sqrt_beta) {
  double s = 0;
  X.for_each([&](int x) {
    for (int e = 0; e < lat.num_directions(); ++e) s += std::cos(sqrt_beta * forward_derivative(lat, f, x, e));
  });
  return s;
}

inline double local_W(const TorusLattice& lat, int x, const Field& f, double sqrt_beta) {
  double s = 0;
  for (int e = 0; e < lat.num_directions(); ++e) s += std::cos(sqrt_beta * forward_derivative(lat, f, x, e));
  return s;
}

// Smooth periodic mean-zero profile on [-1/2, 1/2]^d, either a sum of Fourier modes or grid values.
class TestFunction {
 public:
  struct Mode {
    std::vector<int> k;
    double amplitude = 1;
    bool cosine = false;
  };

  static TestFunction modes(int d, std::vector<Mode> ms) {
    TestFunction t;
    t.d_ = d;
    for (auto& m : ms) {
      if (static_cast<int>(m.k.size()) != d) throw std::invalid_argument("mode dimension mismatch");
      bool zero = std::all_of(m.k.begin(), m.k.end(), [](int v) { return v == 0; });
      if (zero && m.cosine) throw std::invalid_argument("constant mode is not mean zero");
    }
    t.modes_ = std::move(ms);
    return t;
  }
  static TestFunction sine(int d, int axis = 0, int k = 1, double amplitude = 1) {
    std::vector<int> kv(d, 0);
    kv[axis] = k;
    return modes(d, {{kv, amplitude, false}});
  }
  // Values in site index order of a side-n torus.
  static TestFunction grid(int d, int side, std::vector<double> values) {
    long long n = checked_pow(side, d);
    if (static_cast<long long>(values.size()) != n) throw std::invalid_argument("grid size mismatch");
    double mean = pairwise_sum(values) / static_cast<double>(n);
    double scale = 0;
    for (double v : values) scale = std::max(scale, std::abs(v));
    if (std::abs(mean) > 1e-12 * std::max(1.0, scale)) throw std::invalid_argument("test function grid is not mean zero");
    TestFunction t;
    t.d_ = d;
    t.side_ = side;
    t.grid_ = std::move(values);
    return t;
  }
  static TestFunction read_grid(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    std::getline(in, line);
    std::istringstream hs(line);
    std::string tag, ver, dtok, stok;
    hs >> tag >> ver >> dtok >> stok;
    if (tag != "dipole-field" || ver != "v1" || dtok.rfind("d=", 0) != 0 || stok.rfind("side=", 0) != 0)
      throw std::runtime_error("bad grid header: " + line);
    int d = std::stoi(dtok.substr(2)), side = std::stoi(stok.substr(5));
    std::vector<double> v;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      v.push_back(std::stod(line));
    }
    return grid(d, side, std::move(v));
  }
  void write_grid(const std::string& path, int side) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "dipole-field v1 d=" << d_ << " side=" << side << "\n";
    TorusLattice lat = grid_lattice(side);
    out.precision(17);
    for (int x = 0; x < lat.site_count(); ++x) out << profile_at(lat, x) << "\n";
  }

  int dim() const { return d_; }
  bool is_grid() const { return !grid_.empty(); }

  double operator()(std::span<const double> u) const {
    if (is_grid()) throw std::logic_error("grid test functions are only defined at grid points");
    double s = 0;
    for (const auto& m : modes_) {
      double arg = 0;
      for (int a = 0; a < d_; ++a) arg += 2 * std::numbers::pi * m.k[a] * u[a];
      s += m.amplitude * (m.cosine ? std::cos(arg) : std::sin(arg));
    }
    return s;
  }

  // Profile value at the lattice point x, i.e. f~(x / side) with centred coordinates.
  double profile_at(const TorusLattice& lat, int x) const {
    if (is_grid()) {
      if (lat.side() != side_ || lat.dim() != d_) throw std::invalid_argument("grid does not match lattice");
      return grid_[x];
    }
    std::vector<double> u(d_);
    for (int a = 0; a < d_; ++a) u[a] = static_cast<double>(lat.coord(x, a)) / lat.side();
    return (*this)(u);
  }

  // f_N(x) = L^{-(d+2)N/2} f~(L^{-N} x).
  Field sample(const TorusLattice& lat) const {
    if (lat.dim() != d_) throw std::invalid_argument("dimension mismatch");
    const double pref = std::pow(static_cast<double>(lat.L()), -0.5 * (d_ + 2) * lat.N());
    Field f(lat.site_count());
    for (int x = 0; x < lat.site_count(); ++x) f[x] = pref * profile_at(lat, x);
    return f;
  }

  // 1/2 * integral of f~ (-Laplacian)^{-1} f~ over the unit torus.
  double continuum_half_form() const {
    if (!is_grid()) {
      // Orthogonal modes: each contributes amplitude^2 / 2 / (2 pi |k|)^2.
      std::map<std::vector<int>, std::pair<double, double>> acc;
      for (const auto& m : modes_) {
        // k and -k describe the same mode; sine flips sign.
        std::vector<int> k = m.k;
        double amp = m.amplitude;
        auto nz = std::find_if(k.begin(), k.end(), [](int v) { return v != 0; });
        if (nz != k.end() && *nz < 0) {
          for (auto& v : k) v = -v;
          if (!m.cosine) amp = -amp;
        }
        auto& a = acc[k];
        (m.cosine ? a.first : a.second) += amp;
      }
      double s = 0;
      for (auto& [k, a] : acc) {
        double k2 = 0;
        for (int v : k) k2 += double(v) * v;
        if (k2 == 0) continue;
        s += 0.5 * (a.first * a.first + a.second * a.second) / (4 * std::numbers::pi * std::numbers::pi * k2);
      }
      return 0.5 * s;
    }
    // Trigonometric interpolation of the grid: discrete Fourier coefficients with the continuum symbol.
    TorusLattice lat = grid_lattice(side_);
    const int n = lat.site_count();
    double s = 0;
    for (int q = 0; q < n; ++q) {
      double k2 = 0;
      for (int a = 0; a < d_; ++a) k2 += double(lat.coord(q, a)) * lat.coord(q, a);
      if (k2 == 0) continue;
      Complex c = 0;
      for (int x = 0; x < n; ++x) {
        double arg = 0;
        for (int a = 0; a < d_; ++a) arg -= 2 * std::numbers::pi * lat.coord(q, a) * lat.coord(x, a) / double(side_);
        c += grid_[x] * std::exp(Complex(0, arg));
      }
      c /= double(n);
      s += std::norm(c) / (4 * std::numbers::pi * std::numbers::pi * k2);
    }
    return 0.5 * s;
  }

 private:
  TorusLattice grid_lattice(int side) const {
    // Any odd side is representable as L = side, N = 1.
    if (side % 2 == 0) throw std::invalid_argument("grid side must be odd");
    return TorusLattice(d_, side, 1);
  }
  int d_ = 0;
  int side_ = 0;
  std::vector<Mode> modes_;
  std::vector<double> grid_;
};

inline double sup_norm(const Field& f) { return f.size() ? f.cwiseAbs().maxCoeff() : 0.0; }

inline double sup_gradient(const TorusLattice& lat, const Field& f) {
  double s = 0;
  for (int x = 0; x < lat.site_count(); ++x)
    for (int e = 0; e < lat.num_directions(); ++e) s = std::max(s, std::abs(forward_derivative(lat, f, x, e)));
  return s;
}

struct ExternalField {
  Field xi;
  Field f;
  double residual = 0;  // sup |(-sqrt(eps) Lap_m) xi - f|
  double sup_xi = 0;
  double sup_dxi = 0;
};

// xi = (-sqrt(eps) Lap_m)^{-1} f; at m = 0 the mean-zero solution of the singular system.
inline ExternalField build_xi(const Field& f, const ModelParams& p, const TorusLattice& lat) {
  SparseMatrix A = torus_operator(lat, p.mass());
  const double se = std::sqrt(p.epsilon());
  ExternalField out;
  out.f = f;
  if (f.cwiseAbs().maxCoeff() == 0) {
    out.xi = Field::Zero(f.size());
  } else if (p.mass() > 0) {
    Eigen::SimplicialLDLT<SparseMatrix> solver(A);
    if (solver.info() != Eigen::Success) throw SingularOperatorError("massive torus operator factorization failed");
    out.xi = solver.solve(f) / se;
  } else {
    double mean = f.mean();
    if (std::abs(mean) > 1e-12 * std::max(1.0, f.cwiseAbs().maxCoeff()))
      throw SingularOperatorError("massless solve needs a mean-zero source");
    Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper> cg;
    cg.setTolerance(1e-14);
    cg.setMaxIterations(100 * lat.site_count());
    cg.compute(A);
    Field x = cg.solve(f);
    if (cg.info() != Eigen::Success) throw SingularOperatorError("conjugate gradient did not converge");
    x.array() -= x.mean();
    out.xi = x / se;
  }
  out.residual = (se * (A * out.xi) - f).cwiseAbs().maxCoeff();
  out.sup_xi = sup_norm(out.xi);
  out.sup_dxi = sup_gradient(lat, out.xi);
  return out;
}

inline ExternalField build_xi(const TestFunction& tf, const ModelParams& p, const TorusLattice& lat) {
  return build_xi(tf.sample(lat), p, lat);
}

// sup-norms of xi and its gradient across two volumes, against h L^{-((d-2)/2 + a) N}.
struct XiScalingReport {
  int N1 = 0, N2 = 0;
  double sup_xi1 = 0, sup_xi2 = 0, sup_dxi1 = 0, sup_dxi2 = 0;
  double ratio_xi = 0, expected_xi = 0;
  double ratio_dxi = 0, expected_dxi = 0;
  double h_measured = 0;  // smallest h compatible with both sizes
  bool within(double rel) const {
    return std::abs(ratio_dxi / expected_dxi - 1) <= rel && std::abs(ratio_xi / expected_xi - 1) <= rel;
  }
};

inline XiScalingReport xi_scaling_check(const TestFunction& tf, const ModelParams& p, int L, int N1, int N2) {
  const int d = tf.dim();
  TorusLattice a(d, L, N1), b(d, L, N2);
  auto x1 = build_xi(tf, p, a), x2 = build_xi(tf, p, b);
  XiScalingReport r;
  r.N1 = N1;
  r.N2 = N2;
  r.sup_xi1 = x1.sup_xi;
  r.sup_xi2 = x2.sup_xi;
  r.sup_dxi1 = x1.sup_dxi;
  r.sup_dxi2 = x2.sup_dxi;
  r.ratio_xi = x2.sup_xi / x1.sup_xi;
  r.ratio_dxi = x2.sup_dxi / x1.sup_dxi;
  r.expected_xi = std::pow(double(L), -0.5 * (d - 2) * (N2 - N1));
  r.expected_dxi = std::pow(double(L), -(0.5 * (d - 2) + 1) * (N2 - N1));
  auto hreq = [&](const ExternalField& x, int N) {
    return std::max(x.sup_xi / std::pow(double(L), -0.5 * (d - 2) * N),
                    x.sup_dxi / std::pow(double(L), -(0.5 * (d - 2) + 1) * N));
  };
  r.h_measured = std::max(hreq(x1, N1), hreq(x2, N2));
  return r;
}

inline double I0_site(const ModelParams& p, const TorusLattice& lat, int x, const Field& psi) {
  double g = 0;
  for (int e = 0; e < lat.num_directions(); ++e) {
    double de = forward_derivative(lat, psi, x, e);
    g += de * de;
  }
  return std::exp(-0.25 * p.sigma() * g);
}

// K_0({x}) = I_0({x}) (exp(z W({x}, psi / sqrt(eps))) - 1).
inline double K0_site(const ModelParams& p, const TorusLattice& lat, int x, const Field& psi) {
  return I0_site(p, lat, x, psi) * std::expm1(p.z() * local_W(lat, x, psi, p.phase_factor()));
}

inline double K0(const ModelParams& p, const TorusLattice& lat, const SiteSet& X, const Field& psi) {
  double v = 1;
  X.for_each([&](int x) { v *= K0_site(p, lat, x, psi); });
  return v;
}

inline double I0(const ModelParams& p, const TorusLattice& lat, const SiteSet& X, const Field& psi) {
  double v = 1;
  X.for_each([&](int x) { v *= I0_site(p, lat, x, psi); });
  return v;
}

// Relative residual of exp(zW(Lambda) - sigma V(Lambda)) = sum_X I_0(Lambda \ X) K_0(X).
inline double mayer_identity_residual(const ModelParams& p, const TorusLattice& lat, const Field& psi) {
  const int n = lat.site_count();
  if (n > 16) throw EnumerationBudgetError("exhaustive Mayer sum needs at most 16 sites");
  SiteSet all = lat.full_set();
  const double lhs = std::exp(p.z() * local_W(lat, all, psi, p.phase_factor()) - p.sigma() * local_V(lat, all, psi));
  std::vector<double> i0(n), k0(n);
  for (int x = 0; x < n; ++x) {
    i0[x] = I0_site(p, lat, x, psi);
    k0[x] = K0_site(p, lat, x, psi);
  }
  std::vector<double> terms(std::size_t(1) << n);
  for (std::size_t mask = 0; mask < terms.size(); ++mask) {
    double t = 1;
    for (int x = 0; x < n; ++x) t *= (mask >> x & 1u) ? k0[x] : i0[x];
    terms[mask] = t;
  }
  const double rhs = pairwise_sum(terms);
  return std::abs(lhs - rhs) / std::abs(lhs);
}

inline double mayer_identity_check(const ModelParams& p, const TorusLattice& lat, const Field& xi, int samples,
                                   std::uint64_t seed) {
  // The identity is pointwise; the law only supplies generic fields.
  GaussianSpec law(torus_laplacian_dense(lat, p.mass() > 0 ? p.mass() : 1.0));
  Rng rng = make_rng(seed, 11);
  double worst = 0;
  for (int s = 0; s < samples; ++s) {
    Field psi = law.sample(rng) + xi;
    worst = std::max(worst, mayer_identity_residual(p, lat, psi));
  }
  return worst;
}

// Closed-class representation of K_0({x}) as a function of phi, with psi = phi + xi.
// exp(z cos t) is expanded in modified Bessel functions and truncated once the tail is below tol.
inline FormPtr site_gradient_form(const TorusLattice& lat, int x, const Field& offset) {
  const int n = lat.site_count();
  auto f = std::make_shared<GradientForm>();
  f->G = Matrix::Zero(lat.num_directions(), n);
  f->g = Eigen::VectorXd::Zero(lat.num_directions());
  for (int e = 0; e < lat.num_directions(); ++e) {
    f->G(e, lat.neighbor(x, e)) += 1;
    f->G(e, x) -= 1;
    f->g[e] = offset.size() ? forward_derivative(lat, offset, x, e) : 0.0;
  }
  return f;
}

inline int bessel_truncation(double z, double tol) {
  const double az = std::abs(z);
  if (az == 0) return 0;
  int k = 0;
  while (std::cyl_bessel_i(double(k + 1), az) > tol * std::cyl_bessel_i(0.0, az) && k < 60) ++k;
  return k;
}

inline FieldFunctional K0_site_functional(const ModelParams& p, const TorusLattice& lat, int x, const Field& xi,
                                          double tol = 1e-14) {
  const int n = lat.site_count();
  FormPtr form = site_gradient_form(lat, x, xi);
  FieldFunctional ew = FieldFunctional::constant(n, 1.0);
  const double c = p.phase_factor();
  const int K = bessel_truncation(p.z(), tol);
  const double az = std::abs(p.z());
  for (int e = 0; e < lat.num_directions(); ++e) {
    FieldFunctional fe(n);
    const double de = xi.size() ? forward_derivative(lat, xi, x, e) : 0.0;
    for (int k = -K; k <= K; ++k) {
      // e^{z cos t} = sum_k I_k(|z|) (sign z)^k e^{i k t}
      double coef = std::cyl_bessel_i(double(std::abs(k)), az);
      if (p.z() < 0 && (k % 2)) coef = -coef;
      CVector w = CVector::Zero(n);
      w[lat.neighbor(x, e)] += Complex(0, k * c);
      w[x] -= Complex(0, k * c);
      fe += FieldFunctional::exponential(n, w, coef * std::exp(Complex(0, k * c * de)));
    }
    ew = ew * fe;
  }
  FieldFunctional out = ew - 1.0;
  if (p.sigma() != 0) out = FieldFunctional::gradient_exponential(n, form, p.sigma()) * out;
  return out;
}

// Monte Carlo estimate of Z'(xi)/Z'(0) and of Z_N(f) by two routes with common random numbers.
struct GeneratingFunctionReport {
  double ratio = 0, ratio_se = 0;        // Z'(xi) / Z'(0)
  double log_prefactor = 0;              // 1/2 f (-eps Lap_m)^{-1} f
  double Z = 0, Z_se = 0;                // shifted route
  double Z_rescaled = 0, Z_rescaled_se = 0;
  double route_difference = 0, route_difference_se = 0;
  std::size_t samples = 0;
};

namespace detail {

// Influence values of a ratio of means a/b for delta-method errors.
inline std::vector<double> ratio_influence(const std::vector<double>& a, const std::vector<double>& b, double& ratio) {
  const double ma = pairwise_sum(a) / a.size(), mb = pairwise_sum(b) / b.size();
  ratio = ma / mb;
  std::vector<double> inf(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) inf[i] = (a[i] - ratio * b[i]) / mb;
  return inf;
}

}  // namespace detail

inline GeneratingFunctionReport generating_function_mc(const Field& f, const ModelParams& p, const TorusLattice& lat,
                                                       std::size_t samples, std::uint64_t seed) {
  if (!(p.mass() > 0)) throw std::invalid_argument("generating function sampling needs m > 0");
  ExternalField X = build_xi(f, p, lat);
  SparseMatrix Q = torus_operator(lat, p.mass());
  GaussianSpec law{Matrix(Q)};
  SiteSet all = lat.full_set();
  const double c = p.phase_factor();
  const double se = std::sqrt(p.epsilon());
  Rng rng = make_rng(seed, 23);
  std::vector<double> num(samples), den(samples), num2(samples);
  for (std::size_t s = 0; s < samples; ++s) {
    Field phi = law.sample(rng);
    Field psi = phi + X.xi;
    num[s] = std::exp(-p.sigma() * local_V(lat, all, psi) + p.z() * local_W(lat, all, psi, c));
    den[s] = std::exp(-p.sigma() * local_V(lat, all, phi) + p.z() * local_W(lat, all, phi, c));
    num2[s] = std::exp(f.dot(phi) / se) * den[s];
  }
  GeneratingFunctionReport r;
  r.samples = samples;
  r.log_prefactor = 0.5 * X.xi.dot(Q * X.xi);
  double ratio = 0, ratio2 = 0;
  auto i1 = detail::ratio_influence(num, den, ratio);
  auto i2 = detail::ratio_influence(num2, den, ratio2);
  const double pref = std::exp(r.log_prefactor);
  std::vector<double> diff(samples), s1(samples), s2(samples);
  for (std::size_t s = 0; s < samples; ++s) {
    s1[s] = pref * i1[s];
    s2[s] = i2[s];
    diff[s] = s1[s] - s2[s];
  }
  r.ratio = ratio;
  r.ratio_se = mean_estimate(i1).std_error;
  r.Z = pref * ratio;
  r.Z_se = mean_estimate(s1).std_error;
  r.Z_rescaled = ratio2;
  r.Z_rescaled_se = mean_estimate(s2).std_error;
  r.route_difference = r.Z - r.Z_rescaled;
  r.route_difference_se = mean_estimate(diff).std_error;
  return r;
}

// Integrand of the tuned representation at a field distributed with covariance [eps(-Lap_m)]^{-1}.
inline double tuned_integrand(const Field& f, const ModelParams& p, const TorusLattice& lat, const Field& phi_eps) {
  SiteSet all = lat.full_set();
  return std::exp(f.dot(phi_eps) + (p.epsilon() - 1) * local_V(lat, all, phi_eps) +
                  p.z() * local_W(lat, all, phi_eps, std::sqrt(p.beta())));
}

// Integrand of the rescaled representation at a field distributed with covariance (-Lap_m)^{-1}.
inline double rescaled_integrand(const Field& f, const ModelParams& p, const TorusLattice& lat, const Field& phi) {
  SiteSet all = lat.full_set();
  return std::exp(f.dot(phi) / std::sqrt(p.epsilon()) - p.sigma() * local_V(lat, all, phi) +
                  p.z() * local_W(lat, all, phi, p.phase_factor()));
}

// At z = 0 everything is Gaussian.  log of Z'(xi)/Z'(0) and of Z_N(f).
struct ExactZeroActivity {
  double log_ratio = 0;
  double log_Z = 0;          // via the shift
  double log_Z_direct = 0;   // 1/2 (f/sqrt eps)^T (Q + sigma K)^{-1} (f/sqrt eps)
};

inline ExactZeroActivity generating_function_exact_z0(const Field& f, const ModelParams& p, const TorusLattice& lat) {
  ExternalField X = build_xi(f, p, lat);
  Matrix K = torus_laplacian_dense(lat, 0.0);
  Matrix Q = torus_laplacian_dense(lat, p.mass());
  const double s = p.sigma();
  ExactZeroActivity r;
  Matrix M = Q + s * K;
  Eigen::LDLT<Matrix> ldlt(M);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0))
    throw NotPositiveDefiniteError("Q + sigma K is not positive definite");
  // E[exp(-s/2 (phi+xi)^T K (phi+xi))] / E[exp(-s/2 phi^T K phi)] = exp(-s/2 xi^T (K - s K M^{-1} K) xi)
  Eigen::VectorXd Kx = K * X.xi;
  r.log_ratio = -0.5 * s * (X.xi.dot(Kx) - s * Kx.dot(ldlt.solve(Kx)));
  r.log_Z = 0.5 * X.xi.dot(Q * X.xi) + r.log_ratio;
  Eigen::VectorXd g = f / std::sqrt(p.epsilon());
  if (p.mass() > 0 || std::abs(g.mean()) < 1e-14) r.log_Z_direct = 0.5 * g.dot(ldlt.solve(g));
  return r;
}

// Richardson extrapolation in m assuming an m^2 leading correction.
struct Extrapolation {
  double value = 0;
  double error = 0;
};

inline Extrapolation richardson_m2(double v_m, double v_half) {
  double ext = (4 * v_half - v_m) / 3;
  return {ext, std::abs(ext - v_half)};
}

}  // namespace polyrg
