#pragma once

#include "polyrg/rg.hpp"

#include <array>

namespace polyrg {

inline double h_scale(double h, int d, int L, int j) { return h * std::pow(static_cast<double>(L), -0.5 * (d - 2) * j); }

// Phi_j(X, Y): (f, lambda xi) -> h_j^{-1} sup_{x in X, e} |L^j d_e (P_Y f + lambda xi)(x)|, P = id at j = 0.
class FieldNorm {
 public:
  FieldNorm(const TorusLattice& lat, int j, double h, const SiteSet& X, const SiteSet& Y, double m)
      : lat_(&lat), j_(j), scale_(std::pow(static_cast<double>(lat.L()), j) / h_scale(h, lat.dim(), lat.L(), j)) {
    if (!X.subset_of(Y)) throw GeometryError("field norm needs X inside Y");
    const int n = lat.site_count();
    if (j > 0) {
      if (static_cast<int>(Y.count()) == n) throw GeometryError("field norm at j > 0 needs Y != Lambda");
      P_ = DirichletOperator(lat, Y, m).poisson_full();
    }
    auto rows = block_gradient_form(lat, X.indices(), nullptr, Field());
    D_ = rows->G;
    G_ = j > 0 ? Matrix(D_ * P_) : D_;
  }

  const TorusLattice& lattice() const { return *lat_; }
  int scale() const { return j_; }
  double factor() const { return scale_; }
  Field harmonic(const Field& f) const { return j_ > 0 ? Field(P_ * f) : f; }

  double operator()(const Field& f, double lambda = 0, const Field& xi = {}) const {
    Eigen::VectorXd r = G_ * f;
    if (lambda != 0 && xi.size()) r += lambda * (D_ * xi);
    return r.size() ? scale_ * r.cwiseAbs().maxCoeff() : 0.0;
  }

 private:
  const TorusLattice* lat_;
  int j_;
  double scale_;
  Matrix P_, D_, G_;
};

using FieldFunction = std::function<double(const Field& phi, const Field& xi)>;

// d^n/dt_1..dt_n F(phi + sum t_i f_i, xi + sum t_i lambda_i xi) at 0 by the 2^n-point central stencil,
// Richardson-refined.
inline double mixed_derivative(const FieldFunction& F, const Field& phi, const Field& xi, const std::vector<Field>& f,
                               const std::vector<double>& lambda, double step, bool richardson = true) {
  const std::size_t n = f.size();
  auto eval = [&](const Field& a, const Field& b) {
    double v = F(a, b);
    if (!std::isfinite(v)) throw DifferentiationError("non-finite value during finite differencing");
    return v;
  };
  if (n == 0) return eval(phi, xi);
  auto stencil = [&](double s) {
    double acc = 0;
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
      Field a = phi, b = xi;
      int sign = 1;
      for (std::size_t i = 0; i < n; ++i) {
        double t = (mask >> i & 1u) ? -s : s;
        if (mask >> i & 1u) sign = -sign;
        a += t * f[i];
        if (!lambda.empty() && lambda[i] != 0 && xi.size()) b += t * lambda[i] * xi;
      }
      acc += sign * eval(a, b);
    }
    return acc / std::pow(2 * s, static_cast<double>(n));
  };
  double coarse = stencil(step);
  return richardson ? (4 * stencil(step / 2) - coarse) / 3 : coarse;
}

struct ProbeSettings {
  int probes = 64;
  double step = 1e-2;
  std::uint64_t seed = 1;
  bool harmonic = false;  // draw test functions as Poisson extensions P_Y f
  bool with_xi = false;   // include lambda xi components
};

struct DerivativeNormReport {
  std::array<double, 5> order{};  // probe lower bounds of ||K^(n)||, n = 0..4
  double total = 0;               // sum_n ||K^(n)|| / n!
  int max_order = 4;
  bool lower_bound = true;
};

// Lower bounds of the T_phi^n norms from unit-norm random test tuples.  Draws are indexed by
// (order, probe) so adding probes never lowers an estimate.
inline DerivativeNormReport derivative_norm_probe(const FieldFunction& F, const Field& phi, const Field& xi,
                                                  const FieldNorm& norm, int max_order, ProbeSettings s = {}) {
  if (max_order < 0 || max_order > 4) throw std::invalid_argument("derivative orders run from 0 to 4");
  const int n = norm.lattice().site_count();
  DerivativeNormReport r;
  r.max_order = max_order;
  r.order[0] = std::abs(mixed_derivative(F, phi, xi, {}, {}, s.step));
  for (int k = 1; k <= max_order; ++k) {
    for (int p = 0; p < s.probes; ++p) {
      Rng rng = make_rng(s.seed, static_cast<std::uint64_t>(k) * 1'000'003ULL + static_cast<std::uint64_t>(p));
      std::normal_distribution<double> g;
      std::vector<Field> fs;
      std::vector<double> ls;
      for (int i = 0; i < k; ++i) {
        Field f(n);
        for (auto& v : f) v = g(rng);
        if (s.harmonic) f = norm.harmonic(f);
        double lam = s.with_xi ? g(rng) : 0.0;
        double nv = norm(f, lam, xi);
        if (nv == 0) nv = 1;
        fs.push_back(f / nv);
        ls.push_back(lam / nv);
      }
      r.order[k] = std::max(r.order[k], std::abs(mixed_derivative(F, phi, xi, fs, ls, s.step)));
    }
  }
  double fact = 1;
  for (int k = 0; k <= max_order; ++k) {
    if (k > 0) fact *= k;
    r.total += r.order[k] / fact;
  }
  return r;
}

// At scale 0 with X = {x} the unit ball, seen through the 2d gradients at x, is the cube [-h, h]^{2d};
// its vertices are the test functions f(x + e) = +-h.
inline Field vertex_test_function(const TorusLattice& lat, int x, double h, unsigned signs) {
  Field f = Field::Zero(lat.site_count());
  for (int e = 0; e < lat.num_directions(); ++e) f[lat.neighbor(x, e)] = (signs >> e & 1u) ? -h : h;
  return f;
}

// Exact ||F^(n)|| for a function of the gradients at the single site x (scale 0): a multilinear form
// attains its sup over a product of cubes at vertices, and symmetry allows sorted vertex tuples.
inline std::array<double, 5> single_site_derivative_norms(const FieldFunction& F, const TorusLattice& lat, int x,
                                                          double h, const Field& phi, const Field& xi, int max_order,
                                                          double step = 1e-2) {
  const unsigned nv = 1u << lat.num_directions();
  std::vector<Field> verts;
  for (unsigned s = 0; s < nv; ++s) verts.push_back(vertex_test_function(lat, x, h, s));
  std::array<double, 5> out{};
  out[0] = std::abs(F(phi, xi));
  for (int k = 1; k <= max_order; ++k) {
    std::vector<unsigned> idx(k, 0);
    while (true) {
      std::vector<Field> fs;
      for (unsigned i : idx) fs.push_back(verts[i]);
      out[k] = std::max(out[k], std::abs(mixed_derivative(F, phi, xi, fs, {}, step)));
      int p = k - 1;
      while (p >= 0 && idx[p] == nv - 1) --p;
      if (p < 0) break;
      ++idx[p];
      for (int q = p + 1; q < k; ++q) idx[q] = idx[p];
    }
  }
  return out;
}

inline double weighted_total(const std::array<double, 5>& a, int max_order = 4) {
  double t = 0, fact = 1;
  for (int k = 0; k <= max_order; ++k) {
    if (k > 0) fact *= k;
    t += a[k] / fact;
  }
  return t;
}

class ThresholdError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct EstimateVConfig {
  double sigma = 1e-4;
  double kappa = 0.1;
  double h = 10;
  double c = 0.02;
  int draws = 1000;
  std::uint64_t seed = 1;
  double step = 1e-2;
};

struct EstimateVReport {
  double worst_I = 0;          // max LHS / RHS for ||e^{sigma V}|| <= 2 e^{kappa/4 sum (d phi)^2}
  double worst_I_minus_1 = 0;  // same for ||e^{sigma V} - 1|| <= 4 c^{-1} h^2 |sigma| e^{...}
  double at_zero_lhs = 0, at_zero_rhs = 2;  // exact sup over the unit ball at phi = 0
  int draws = 0;
  int violations = 0;
  bool pass() const { return violations == 0; }
};

// Scale-0 probes at the centre site of the lattice, with e^{sigma V}, V = -1/2 sum_e (d_e phi + d_e xi)^2.
// Each draw pairs a random field with a random tuple of four unit-norm vertex test functions.
inline EstimateVReport estimate_v_probe_check(const TorusLattice& lat, const EstimateVConfig& cfg,
                                                   const Field& xi_in = {}) {
  if (!(std::abs(cfg.sigma) / cfg.kappa < cfg.c) || !(cfg.h * cfg.h * std::abs(cfg.sigma) < cfg.c))
    throw ThresholdError("estimateV needs sigma / kappa < c and h^2 sigma < c");
  const int n = lat.site_count(), x = lat.index(std::vector<int>(lat.dim(), 0));
  const Field xi = xi_in.size() ? xi_in : Field::Zero(n);
  auto grad2 = [&](const Field& f) {
    double s = 0;
    for (int e = 0; e < lat.num_directions(); ++e) s += std::pow(forward_derivative(lat, f, x, e), 2);
    return s;
  };
  FieldFunction I = [&](const Field& phi, const Field& z) { return std::exp(-0.5 * cfg.sigma * grad2(phi + z)); };
  FieldFunction Im1 = [&](const Field& phi, const Field& z) { return std::expm1(-0.5 * cfg.sigma * grad2(phi + z)); };
  EstimateVReport r;
  Rng rng = make_rng(cfg.seed, 404);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> logamp(std::log(1e-3), std::log(10.0));
  std::uniform_int_distribution<unsigned> vert(0, (1u << lat.num_directions()) - 1);
  for (int k = 0; k < cfg.draws; ++k) {
    Field phi(n);
    double amp = k == 0 ? 0.0 : std::exp(logamp(rng));
    for (auto& v : phi) v = amp * g(rng);
    std::vector<Field> fs;
    for (int i = 0; i < 4; ++i) fs.push_back(vertex_test_function(lat, x, cfg.h, vert(rng)));
    double lhs = 0, lhs1 = 0, fact = 1;
    for (int m = 0; m <= 4; ++m) {
      if (m > 0) fact *= m;
      std::vector<Field> sub(fs.begin(), fs.begin() + m);
      lhs += std::abs(mixed_derivative(I, phi, xi, sub, {}, cfg.step)) / fact;
      lhs1 += std::abs(mixed_derivative(Im1, phi, xi, sub, {}, cfg.step)) / fact;
    }
    const double w = std::exp(0.25 * cfg.kappa * grad2(phi));
    const double rhs = 2 * w, rhs1 = 4 / cfg.c * cfg.h * cfg.h * std::abs(cfg.sigma) * w;
    if (k == 0) {
      r.at_zero_lhs = weighted_total(single_site_derivative_norms(I, lat, x, cfg.h, phi, xi, 4, cfg.step));
      r.at_zero_rhs = rhs;
      r.violations += r.at_zero_lhs > rhs;
    }
    r.worst_I = std::max(r.worst_I, lhs / rhs);
    r.worst_I_minus_1 = std::max(r.worst_I_minus_1, rhs1 > 0 ? lhs1 / rhs1 : (lhs1 > 0 ? INFINITY : 0.0));
    r.violations += (lhs > rhs) + (lhs1 > rhs1);
    ++r.draws;
  }
  return r;
}

// W~({x}, phi, u) = 1/2 sum_e cos(u d_e phi(x)); its m-th u-derivative is
// 1/2 sum_e a_e^m cos^{(m)}(u a_e) and the n-th field derivative of a^m cos^{(m)}(u a) follows from Leibniz.
inline double w_tilde_derivative(double a, double u, int m, int n) {
  auto dcos = [](double y, int k) { return std::cos(y + k * std::numbers::pi / 2); };
  double s = 0;
  for (int k = 0; k <= std::min(n, m); ++k) {
    double binom = 1, fall = 1;
    for (int i = 0; i < k; ++i) {
      binom = binom * (n - i) / (i + 1);
      fall *= m - i;
    }
    s += binom * fall * std::pow(a, m - k) * std::pow(u, n - k) * dcos(u * a, m + n - k);
  }
  return s;
}

// Left side of the W~ estimate in closed form: the n-th derivative is diagonal in the gradient
// coordinates, so its sup over the cube is h^n sum_e |.|.
inline double westi_lhs(const std::vector<double>& a, double u, double h, int m, int max_order = 4) {
  double t = 0, fact = 1;
  for (int n = 0; n <= max_order; ++n) {
    if (n > 0) fact *= n;
    double s = 0;
    for (double ae : a) s += std::abs(w_tilde_derivative(ae, u, m, n));
    t += 0.5 * std::pow(h, n) * s / fact;
  }
  return t;
}

class HypothesisError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct EstimateK0Config {
  double z = 1e-6;
  double beta = 1.0;
  double sigma = 1e-4;
  double kappa = 0.1;
  double h = 10;
  double r = 0.5;
  double A = 0;  // 0 selects 2^{d+3}
  int draws = 1000;
  std::uint64_t seed = 1;
  double step = 1e-2;
};

struct EstimateK0Report {
  std::array<double, 3> westi_worst{};       // max LHS / RHS, orders 0..4, m = 0, 1, 2
  std::array<double, 3> westi_worst_03{};    // same with orders 0..3
  double westi_zero_model_W = 0, westi_zero_bound = 0;  // model W at phi = 0 (2d) vs C_{h,u} = d e^{hu}
  double ewesti_worst = 0;                    // max probe ||e^{z W}||_{00}
  double k0_worst = 0;                        // max probe A ||K_0({x})||_0
  double dsigma_rel_error = 0;                // analytic vs finite-difference dK_0/dsigma
  double z_max_passing = 0;                   // largest |z| on the scan with ||e^{zW}|| <= 2 and A||K_0|| < r
  int draws = 0;
  int violations = 0;
  bool pass() const { return violations == 0; }
};

// dK_0({x})/dsigma with u = sqrt(beta (1 + sigma)) inside W and the prefactor exp(-sigma/4 sum_e (d psi)^2).
inline double k0_site_dsigma(const ModelParams& p, const TorusLattice& lat, int x, const Field& psi) {
  const double u = p.phase_factor();
  double g2 = 0, W = 0, Wu = 0;
  for (int e = 0; e < lat.num_directions(); ++e) {
    double a = forward_derivative(lat, psi, x, e);
    g2 += a * a;
    W += std::cos(u * a);
    Wu -= a * std::sin(u * a);
  }
  const double du = std::sqrt(p.beta()) / (2 * std::sqrt(1 + p.sigma()));
  const double I = std::exp(-0.25 * p.sigma() * g2);
  const double ezw = std::exp(p.z() * W);
  return -0.25 * g2 * I * (ezw - 1) + I * p.z() * Wu * du * ezw;
}

inline EstimateK0Report estimate_k0_probe_check(const TorusLattice& lat, const EstimateK0Config& cfg) {
  if (cfg.kappa < 1 / cfg.h) throw HypothesisError("estimateK0 needs kappa >= 1/h");
  const int n = lat.site_count(), x = lat.index(std::vector<int>(lat.dim(), 0));
  const int nd = lat.num_directions(), d = lat.dim();
  const ModelParams p(cfg.z, cfg.beta, cfg.sigma, 0.0);
  const double u = p.phase_factor();
  const double A = cfg.A > 0 ? cfg.A : std::pow(2.0, d + 3);
  const Field zero = Field::Zero(n);
  auto gradients = [&](const Field& f) {
    std::vector<double> a(nd);
    for (int e = 0; e < nd; ++e) a[e] = forward_derivative(lat, f, x, e);
    return a;
  };
  auto ewz = [&](double z) {
    return FieldFunction([&, z](const Field& phi, const Field&) {
      double w = 0;
      for (double ae : gradients(phi)) w += 0.5 * std::cos(u * ae);
      return std::exp(z * w);
    });
  };
  auto k0 = [&](double z) {
    ModelParams q(z, cfg.beta, cfg.sigma, 0.0);
    return FieldFunction([&, q](const Field& phi, const Field& xi) { return K0_site(q, lat, x, phi + xi); });
  };

  EstimateK0Report r;
  r.westi_zero_model_W = 2.0 * d;
  r.westi_zero_bound = d * std::exp(cfg.h * u);

  std::vector<Field> phis;
  std::vector<std::array<Field, 4>> tuples;
  Rng rng = make_rng(cfg.seed, 505);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> logamp(std::log(1e-3), std::log(10.0));
  std::uniform_int_distribution<unsigned> vert(0, (1u << nd) - 1);
  for (int k = 0; k < cfg.draws; ++k) {
    Field phi(n);
    double amp = k == 0 ? 0.0 : std::exp(logamp(rng));
    for (auto& v : phi) v = amp * g(rng);
    phis.push_back(phi);
    std::array<Field, 4> t;
    for (auto& f : t) f = vertex_test_function(lat, x, cfg.h, vert(rng));
    tuples.push_back(t);
  }
  auto probe_total = [&](const FieldFunction& F, std::size_t k) {
    double tot = 0, fact = 1;
    for (int m = 0; m <= 4; ++m) {
      if (m > 0) fact *= m;
      std::vector<Field> sub(tuples[k].begin(), tuples[k].begin() + m);
      tot += std::abs(mixed_derivative(F, phis[k], zero, sub, {}, cfg.step)) / fact;
    }
    return tot;
  };
  auto g0 = [&](const Field& phi) {
    double s = 0;
    for (double ae : gradients(phi)) s += ae * ae;
    return std::exp(0.5 * cfg.kappa * s);
  };

  for (std::size_t k = 0; k < phis.size(); ++k) {
    auto a = gradients(phis[k]);
    double s2 = 0;
    for (double ae : a) s2 += ae * ae;
    for (int m = 0; m <= 2; ++m) {
      double rhs = d * std::pow(2 * cfg.h, m) * std::exp(cfg.h * u) * std::exp(0.5 * cfg.kappa * s2);
      double l4 = westi_lhs(a, u, cfg.h, m, 4), l3 = westi_lhs(a, u, cfg.h, m, 3);
      r.westi_worst[m] = std::max(r.westi_worst[m], l4 / rhs);
      r.westi_worst_03[m] = std::max(r.westi_worst_03[m], l3 / rhs);
      r.violations += l4 > rhs;
    }
    double e = probe_total(ewz(cfg.z), k);
    r.ewesti_worst = std::max(r.ewesti_worst, e);
    r.violations += e > 2;
    double kn = A * probe_total(k0(cfg.z), k) / g0(phis[k]);
    r.k0_worst = std::max(r.k0_worst, kn);
    r.violations += kn >= cfg.r;

    const double ds = 1e-4;
    ModelParams pp(cfg.z, cfg.beta, cfg.sigma + ds, 0), pm(cfg.z, cfg.beta, cfg.sigma - ds, 0);
    ModelParams pp2(cfg.z, cfg.beta, cfg.sigma + ds / 2, 0), pm2(cfg.z, cfg.beta, cfg.sigma - ds / 2, 0);
    double D1 = (K0_site(pp, lat, x, phis[k]) - K0_site(pm, lat, x, phis[k])) / (2 * ds);
    double D2 = (K0_site(pp2, lat, x, phis[k]) - K0_site(pm2, lat, x, phis[k])) / ds;
    double fd = (4 * D2 - D1) / 3, an = k0_site_dsigma(p, lat, x, phis[k]);
    double scale = std::max(std::abs(an), std::abs(cfg.z) * 1e-3);
    if (scale > 0) r.dsigma_rel_error = std::max(r.dsigma_rel_error, std::abs(fd - an) / scale);
    ++r.draws;
  }
  r.violations += r.dsigma_rel_error > 1e-6;

  // Largest |z| on a geometric grid passing both norm bounds, on a subset of the same draws.
  const std::size_t sub = std::min<std::size_t>(phis.size(), 100);
  for (double lz = -8; lz <= 0.0001; lz += 0.1) {
    const double z = std::pow(10.0, lz);
    bool ok = true;
    for (std::size_t k = 0; k < sub && ok; ++k) {
      ok = probe_total(ewz(z), k) <= 2 && A * probe_total(k0(z), k) / g0(phis[k]) < cfg.r;
    }
    if (!ok) break;
    r.z_max_passing = z;
  }
  return r;
}

struct AbsorptionReport {
  double q = 0;                 // max over samples of the ratio
  double at_zero = 0;           // ratio at phi = 0
  std::vector<double> ray;      // ratio along amplitude 1, 2, 4 of a fixed direction
  int samples = 0;
};

// (2 + ||phi||_{Phi_{j+1}(X., U+)})^3 G(X.., U+) / G(U.., U+) with X the centre site (scale 0) and U the
// centre block at scale 1.
inline AbsorptionReport regulator_polynomial_absorption_check(int L, double kappa, double h, double m, int samples,
                                                              double amplitude, std::uint64_t seed) {
  TorusLattice lat(2, L, 2);
  const int n = lat.site_count();
  const int centre = lat.index({0, 0});
  Polymer X = Polymer::from_blocks(lat, 0, {centre});
  Polymer U = Polymer::from_blocks(lat, 1, {lat.block_of(centre, 1)});
  SiteSet Xdd = ddot_set(X), Xd = dot_set(X), Uplus = plus_set(U), Udd = ddot_set(U);
  auto dist = distance_to_set(lat, Xdd);
  int gap = std::numeric_limits<int>::max();
  for (int y = 0; y < n; ++y)
    if (!Udd.test(y)) gap = std::min(gap, dist[y]);
  if (gap < 3)
    throw GeometryError("degenerate geometry: no annulus of U.. separates the gradients on X.. from its boundary");
  Regulator GX(lat, Xdd, Uplus, m, kappa), GU(lat, Udd, Uplus, m, kappa);
  FieldNorm norm(lat, 1, h, Xd, Uplus, m);
  auto ratio = [&](const Field& phi) {
    return std::pow(2 + norm(phi), 3) * std::exp(GX.log_value(phi) - GU.log_value(phi));
  };
  AbsorptionReport r;
  r.at_zero = ratio(Field::Zero(n));
  r.q = r.at_zero;
  Rng rng = make_rng(seed, 606);
  std::normal_distribution<double> g;
  Field dir(n);
  for (int s = 0; s < samples; ++s) {
    Field phi(n);
    for (auto& v : phi) v = amplitude * g(rng);
    if (s == 0) dir = phi;
    r.q = std::max(r.q, ratio(phi));
    ++r.samples;
  }
  for (double a : {1.0, 2.0, 4.0}) r.ray.push_back(ratio(a * dir));
  return r;
}

}  // namespace polyrg
