#pragma once

#include "polyrg/norms.hpp"

#include <chrono>
#include <string>
#include <utility>

namespace polyrg {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::vector<std::pair<std::string, double>> metrics;
  std::string error;
  double seconds = 0;
  double budget_seconds = 0;
};

namespace acceptance_detail {

inline Field random_field(int n, std::uint64_t seed, double scale = 1.0) {
  Rng rng = make_rng(seed, 0);
  std::normal_distribution<double> g(0.0, scale);
  Field f(n);
  for (auto& v : f) v = g(rng);
  return f;
}

inline std::vector<Polymer> singletons_and_pairs(const TorusLattice& lat, int x) {
  std::vector<Polymer> out{Polymer::from_blocks(lat, 0, {x})};
  for (int a = -1; a <= 1; ++a)
    for (int b = -1; b <= 1; ++b)
      if (a || b) out.push_back(Polymer::from_blocks(lat, 0, {x, lat.translate(x, std::vector<int>{a, b})}));
  return out;
}

inline double spread(double a, double b) { return std::max(a, b) / std::min(a, b); }

using Metrics = std::vector<std::pair<std::string, double>>;

inline bool conditional_law(Metrics& m) {
  TorusLattice lat(2, 3, 2);
  const double mass = 0.1;
  SiteSet U = cube(lat, lat.index({0, 0}), 2);
  Matrix C = torus_covariance(lat, mass);
  double mean_dev = 0, cov_dev = 0;
  for (int t = 0; t < 5; ++t) {
    Field phi = random_field(lat.site_count(), 1000 + t);
    auto dec = decompose_conditional(lat, U, mass, phi);
    auto sc = schur_conditional(C, U, phi);
    auto u = U.indices();
    for (std::size_t a = 0; a < u.size(); ++a) mean_dev = std::max(mean_dev, std::abs(sc.mean[a] - dec.harmonic[u[a]]));
    cov_dev = std::max(cov_dev, (sc.covariance - dec.covariance).cwiseAbs().maxCoeff());
  }
  m = {{"mean_max_dev", mean_dev}, {"covariance_max_dev", cov_dev}, {"limit", 1e-10}};
  return mean_dev < 1e-10 && cov_dev < 1e-10;
}

inline bool variation_split(Metrics& m) {
  TorusLattice lat(2, 3, 2);
  SiteSet U = cube(lat, lat.index({0, 0}), 2), V = cube(lat, lat.index({0, 0}), 3);
  double worst = 0;
  for (int t = 0; t < 100; ++t)
    worst = std::max(worst, std::abs(variation_split_residual(lat, U, V, 0.1, random_field(81, 2000 + t))));
  m = {{"max_residual", worst}, {"draws", 100}, {"limit", 1e-10}};
  return worst < 1e-10;
}

inline bool mayer(Metrics& m) {
  TorusLattice lat(2, 3, 1);
  Field xi = random_field(9, 3000, 0.2);
  double worst = 0;
  for (double sigma : {0.0, 0.1})
    for (double z : {0.0, 0.05}) worst = std::max(worst, mayer_identity_check(ModelParams(z, 1.0, sigma, 0.5), lat, xi, 20, 7));
  m = {{"max_relative_residual", worst}, {"subsets", 512}, {"limit", 1e-12}};
  return worst < 1e-12;
}

inline bool reblocking(Metrics& m) {
  TorusLattice lat(2, 3, 1);
  Field xi = random_field(9, 4000, 0.2);
  auto support = connected_polymers_up_to(lat, 0, 5);
  GradientCosineActivity cosine(lat, support, 0.4, 0.3, 0.5, xi);
  DipoleActivity dipole(ModelParams(0.3, 1.0, 0.2, 0.5), lat, support, xi);
  ScaleContext ctx(lat, 0, 0.5, xi);
  const StepCouplings c{0.2, -0.07, 0.35};
  double worst = 0;
  for (const Activity* K : {static_cast<const Activity*>(&cosine), static_cast<const Activity*>(&dipole)})
    for (int t = 0; t < 20; ++t)
      worst = std::max(worst, reblocking_identity(ctx, *K, c, random_field(9, 4100 + t, 0.7)).relative);
  m = {{"max_relative_residual", worst}, {"draws", 40}, {"sigma_next", c.sigma_next}, {"E_next", c.E_next},
       {"limit", 1e-9}};
  return worst < 1e-9;
}

inline bool gaussian_determinant(Metrics& m) {
  PeriodicGrid grid{2, 4};
  Matrix C = Matrix(grid.laplacian(1.0)).inverse();
  Eigen::SelfAdjointEigenSolver<Matrix> es(C);
  Matrix Ch = es.operatorSqrt();
  Matrix M(gradient_square_matrix(grid, {0, 1, 4, 5}));
  Matrix T = Ch * M * Ch;
  T *= 0.5 / spectral_norm_symmetric(T);
  auto q = gaussian_quadratic_expectation(T);
  auto mc = gaussian_quadratic_mc(T, 1'000'000, 5000);
  const double z = std::abs(mc.mean - q.value) / mc.std_error;
  const double series = std::abs(q.trace_series / q.value - 1);
  m = {{"determinant", q.value}, {"mc_mean", mc.mean}, {"mc_se", mc.std_error}, {"z_score", z},
       {"trace_series_rel", series}, {"norm_T", spectral_norm_symmetric(T)}};
  return z < 3 && series < 1e-8;
}

inline bool regulator_coherence(Metrics& m) {
  TorusLattice lat(2, 3, 2);
  const int o = lat.index({0, 0});
  double route = 0;
  for (double mass : {0.0, 0.5}) {
    Regulator G(lat, cube(lat, o, 1), cube(lat, o, 3), mass, 0.1);
    for (int t = 0; t < 50; ++t) {
      Field phi = random_field(81, 6000 + t, 2.0);
      route = std::max(route, std::abs(std::expm1(G.log_value(phi) - G.log_value_definitional(phi))));
    }
  }
  Regulator G0(lat, cube(lat, o, 1), cube(lat, o, 2), 0.0, 0.1);
  const double zero = std::abs(G0.value(Field::Zero(81)) - 1);

  SiteSet Y = cube(lat, o, 3);
  Regulator Gs(lat, set_from(lat, std::vector<int>{o}), Y, 0.0, 0.1), Gm(lat, cube(lat, o, 1), Y, 0.0, 0.1),
      Gl(lat, cube(lat, o, 2), Y, 0.0, 0.1);
  double monotone = 0, sandwich = 0;
  for (int t = 0; t < 20; ++t) {
    Field phi = random_field(81, 6100 + t);
    double a = Gs.log_value(phi), b = Gm.log_value(phi), c = Gl.log_value(phi);
    monotone = std::max({monotone, a - b, b - c});
    auto [lo, hi] = Gm.log_sandwich(phi);
    sandwich = std::max({sandwich, lo - b, b - hi});
  }

  TorusLattice big(2, 3, 3);
  int c1 = big.index({-6, 0}), c2 = big.index({6, 0});
  Regulator G1(big, cube(big, c1, 1), cube(big, c1, 3), 0.0, 0.1), G2(big, cube(big, c2, 1), cube(big, c2, 3), 0.0, 0.1),
      G12(big, cube(big, c1, 1) | cube(big, c2, 1), cube(big, c1, 3) | cube(big, c2, 3), 0.0, 0.1);
  double product = 0;
  for (int t = 0; t < 5; ++t) {
    Field phi = random_field(big.site_count(), 6200 + t);
    product = std::max(product, std::abs(G1.log_value(phi) + G2.log_value(phi) - G12.log_value(phi)));
  }
  m = {{"route_rel_dev", route}, {"zero_field_dev", zero}, {"monotone_violation", monotone},
       {"sandwich_violation", sandwich}, {"product_dev", product}};
  return route < 1e-9 && zero == 0 && monotone <= 1e-10 && sandwich <= 1e-10 && product < 1e-10;
}

inline bool regulator_integration(Metrics& m) {
  TorusLattice lat(2, 3, 3);
  const int o = lat.index({0, 0});
  auto r0 = regulator_integration_check(lat, cube(lat, o, 0), cube(lat, o, 1), cube(lat, o, 2), 0.0, 0.05, 0);
  auto r1 = regulator_integration_check(lat, cube(lat, o, 1), cube(lat, o, 4), cube(lat, o, 7), 0.0, 0.05, 1);
  const double ratio = r1.per_site / r0.per_site, target = 1.0 / 9;
  m = {{"per_site_j0", r0.per_site}, {"per_site_j1", r1.per_site}, {"ratio", ratio}, {"target", target},
       {"c_j0", r0.implied_c}, {"c_j1", r1.implied_c}};
  return std::isfinite(r0.implied_c) && std::isfinite(r1.implied_c) && ratio > target / 3 && ratio < 3 * target;
}

inline bool covariance_scaling(Metrics& m) {
  TorusLattice lat(2, 3, 4);
  auto rep = covariance_scaling_check(lat, {1, 2});
  const double e = rep.exponents.at(0);
  m = {{"v_j1", rep.values[0]}, {"v_j2", rep.values[1]}, {"exponent", e}, {"target", -2.0}, {"band", 0.4}};
  return std::abs(e + 2) <= 0.4;
}

inline bool greens_decay(Metrics& m) {
  auto rep = greens_decay_fit(2, 81, 1e-4, 325);
  const double slope = rep.gradient_fit.slope;
  const double k = rep.potential_fit ? rep.potential_fit->intercept : NAN;
  const double k0 = green_constant_d2();
  auto tail = periodization_tail_check(2, 3, {3, 4});
  const double tr = tail.ratios.at(0) / tail.expected_ratio;
  m = {{"gradient_slope", slope}, {"slope_target", -1.0}, {"k", k}, {"k_target", k0}, {"k_rel_dev", std::abs(k / k0 - 1)},
       {"tail_ratio_over_expected", tr}};
  return std::abs(slope + 1) <= 0.2 && std::abs(k / k0 - 1) <= 0.1 && std::abs(tr - 1) <= 0.25;
}

inline bool harmonic_estimates(Metrics& m) {
  TorusLattice lat(2, 3, 4);
  std::vector<HarmonicGradientReport> hg;
  std::vector<MeanValueReport> mv;
  for (int R : {4, 8, 16}) {
    hg.push_back(harmonic_gradient_bound_check(lat, R, 32));
    mv.push_back(mean_value_bound_check(lat, R, 0.5, 0.1, 64));
  }
  double s_any = 1, s_pos = 1, s_mv = 1;
  bool sampled_ok = true;
  for (std::size_t k = 0; k < hg.size(); ++k) {
    sampled_ok = sampled_ok && hg[k].sampled_any <= hg[k].c_any * (1 + 1e-12);
    for (std::size_t l = 0; l < k; ++l) {
      s_any = std::max(s_any, spread(hg[k].c_any, hg[l].c_any));
      s_pos = std::max(s_pos, spread(hg[k].c_positive, hg[l].c_positive));
      s_mv = std::max(s_mv, spread(mv[k].c_squared, mv[l].c_squared));
    }
  }

  TorusLattice cl(2, 3, 3);
  int pole = cl.index({0, 0});
  SiteSet U = cube(cl, pole, 12);
  SiteSet region = U;
  region.reset(pole);
  double worst = 0;
  for (bool bump : {false, true}) {
    EdgeCoefficients a = bump ? bump_coefficients(cl, cl.index({4, 4}), 0.1, 3.0) : EdgeCoefficients(cl);
    DirichletOperator D(cl, U, 0.0, &a);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(D.interior().size()));
    rhs[D.position(pole)] = 1.0;
    Eigen::VectorXd g = D.solve(rhs);
    Field u = Field::Zero(cl.site_count());
    for (std::size_t k = 0; k < D.interior().size(); ++k) u[D.interior()[k]] = g[k];
    for (auto [r1, r2] : {std::pair{2, 4}, std::pair{3, 5}}) {
      auto rep = caccioppoli_check(cl, u, annular_cutoff(cl, cl.index({6, 6}), r1, r2), region, a);
      worst = std::max(worst, rep.ratio / rep.bound);
    }
  }
  m = {{"gradient_any_spread", s_any}, {"gradient_positive_spread", s_pos}, {"mean_value_spread", s_mv},
       {"caccioppoli_ratio_over_bound", worst}};
  return sampled_ok && s_any < 2 && s_pos < 2 && s_mv < 2 && worst <= 1;
}

inline bool linearization(Metrics& m) {
  TorusLattice small(2, 3, 1);
  Field xi = random_field(9, 7000, 0.2);
  GradientCosineActivity Kdot(small, connected_polymers_up_to(small, 0, 5), 0.5, 0.3, 0.4, xi);
  ScaleContext ctx(small, 0, 0.7, xi);
  auto lin = linearization_check(ctx, Kdot, StepCouplings{0.3, 0.1, 0.2}, 1e-2);

  TorusLattice lat(2, 3, 2);
  const int B = 40;
  const double mass = 0.5;
  Field xi2 = random_field(81, 7100, 0.3);
  GradientCosineActivity K(lat, singletons_and_pairs(lat, B), 0.2, 0.3, 0.5, xi2);
  auto a = alpha_extraction(K, B, mass);
  GradientQuadraticActivity Q(lat, singletons_and_pairs(lat, B), 0.6);
  auto aq = alpha_extraction(Q, B, mass);
  ScaleContext c2(lat, 0, mass, xi2);
  auto law = fluctuation_law(lat, plus_set(Polymer::from_blocks(lat, 1, {lat.parent_block(0, B)})), mass);
  RGState s{0, 0.15, 0.0, 0.0};
  auto u = coupling_update(s, a, delta_E_trace(*c2.It_form(B), law), lat.block_count(0));
  double l3 = 0;
  for (int t = 0; t < 4; ++t) l3 = std::max(l3, std::abs(l3_tilde_linear(K, B, mass, s, u, random_field(2, 7200 + t))));
  const double sym = a.symmetry_residual / std::abs(a.alpha);
  m = {{"L1", lin.L1}, {"L2", lin.L2}, {"L3", lin.L3}, {"assembled", lin.assembled}, {"finite_difference", lin.fd},
       {"linearization_rel", lin.relative}, {"alpha", a.alpha}, {"alpha_symmetry_rel", sym},
       {"alpha_quadratic", aq.alpha}, {"alpha_quadratic_target", 9 * 0.6}, {"L3_tilde_max", l3}};
  return lin.relative < 1e-4 && sym < 1e-10 && aq.symmetry_residual < 1e-12 && std::abs(aq.alpha - 5.4) < 1e-11 &&
         l3 < 1e-9;
}

inline bool norm_estimate_probes(Metrics& m) {
  TorusLattice lat(2, 9, 1);
  EstimateVConfig v;
  v.draws = 1000;
  auto rv = estimate_v_probe_check(lat, v);
  EstimateK0Config k;
  k.draws = 1000;
  auto rk = estimate_k0_probe_check(lat, k);
  m = {{"sigma", v.sigma}, {"kappa", v.kappa}, {"h", v.h}, {"z", k.z}, {"draws", v.draws},
       {"estimateV_worst_ratio", rv.worst_I}, {"estimateV_minus1_worst_ratio", rv.worst_I_minus_1},
       {"estimateV_at_zero", rv.at_zero_lhs}, {"westi_m0", rk.westi_worst[0]}, {"westi_m1", rk.westi_worst[1]},
       {"westi_m2", rk.westi_worst[2]}, {"ewesti_max", rk.ewesti_worst}, {"A_K0_max", rk.k0_worst}, {"r", k.r},
       {"dK0_dsigma_rel", rk.dsigma_rel_error}, {"z_max_passing", rk.z_max_passing},
       {"violations", static_cast<double>(rv.violations + rk.violations)}};
  return rv.pass() && rk.pass();
}

}  // namespace acceptance_detail

struct CriterionSpec {
  int id;
  const char* name;
  double budget_seconds;
  bool (*run)(acceptance_detail::Metrics&);
};

inline const std::vector<CriterionSpec>& acceptance_criteria() {
  using namespace acceptance_detail;
  static const std::vector<CriterionSpec> all = {
      {1, "conditional-law-equivalence", 1, conditional_law},
      {2, "variation-principle-split", 1, variation_split},
      {3, "mayer-expansion", 1, mayer},
      {4, "extraction-reblocking-identity", 300, reblocking},
      {5, "gaussian-determinant", 30, gaussian_determinant},
      {6, "regulator-coherence", 10, regulator_coherence},
      {7, "regulator-integration", 60, regulator_integration},
      {8, "covariance-scaling", 120, covariance_scaling},
      {9, "greens-function-decay", 120, greens_decay},
      {10, "harmonic-estimates", 60, harmonic_estimates},
      {11, "linearization-consistency", 300, linearization},
      {12, "norm-estimate-probes", 60, norm_estimate_probes},
  };
  return all;
}

// A criterion fails on a violated bound, an exception, or a runtime over its budget.
inline CriterionResult run_criterion(const CriterionSpec& c) {
  CriterionResult r;
  r.id = c.id;
  r.name = c.name;
  r.budget_seconds = c.budget_seconds;
  auto t0 = std::chrono::steady_clock::now();
  try {
    r.pass = c.run(r.metrics);
  } catch (const std::exception& e) {
    r.pass = false;
    r.error = e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (r.seconds > r.budget_seconds) {
    r.pass = false;
    if (r.error.empty()) r.error = "runtime over budget";
  }
  return r;
}

}  // namespace polyrg
