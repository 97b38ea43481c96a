#pragma once

#include "polyrg/acceptance.hpp"
#include "polyrg/report.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <map>
#include <mutex>
#include <thread>

namespace polyrg {

struct SuiteSpec {
  std::string name;
  std::string module;
  std::vector<std::string> anchors;
  std::function<std::vector<CheckReport>(const RunConfig&)> run;
};

namespace suite_detail {

using acceptance_detail::random_field;
using acceptance_detail::singletons_and_pairs;

inline CheckReport make(const std::string& suite, const std::string& check, const std::string& anchor,
                        const std::string& oracle, const RunConfig& c) {
  CheckReport r;
  r.suite = suite;
  r.check = check;
  r.anchor = anchor;
  r.oracle = oracle;
  r.seed = c.seed;
  return r;
}

inline Status verdict(bool ok) { return ok ? Status::pass : Status::fail; }

inline TorusLattice config_lattice(const RunConfig& c) { return TorusLattice(c.dim, c.L, c.N); }

inline ModelParams config_model(const RunConfig& c) { return ModelParams(c.z, c.beta, c.sigma0, c.mass); }

inline std::vector<CheckReport> lattice_info(const RunConfig& c) {
  auto r = make("lattice-info", "torus-blocks", "geometry/torus-blocks", "exact count", c);
  TorusLattice lat = config_lattice(c);
  const double n = lat.site_count();
  bool ok = n == std::pow(static_cast<double>(c.L), c.dim * c.N);
  r.values = {{"side", static_cast<double>(lat.side())}, {"site_count", n}};
  for (int j = 0; j <= c.N; ++j) {
    double blocks = lat.block_count(j);
    r.values.emplace_back("block_count_j" + std::to_string(j), blocks);
    ok = ok && blocks * std::pow(static_cast<double>(c.L), c.dim * j) == n;
  }
  if (c.N >= 1) {
    Polymer B = Polymer::from_blocks(lat, 1, {0});
    r.values.emplace_back("plus_size_j1", static_cast<double>(plus_set(B).count()));
    r.values.emplace_back("ddot_size_j1", static_cast<double>(ddot_set(B).count()));
    r.values.emplace_back("dot_size_j1", static_cast<double>(dot_set(B).count()));
  }
  r.status = verdict(ok);
  return {r};
}

inline std::vector<CheckReport> polymer_counts(const RunConfig& c) {
  auto r = make("polymer", "small-polymer-count", "polymer/small-sets", "enumeration", c);
  TorusLattice lat = config_lattice(c);
  auto small = small_polymers_containing(lat, 0, 0);
  bool ok = true;
  for (const auto& X : small) ok = ok && is_connected(X) && is_small(X) && X.contains_block(0);
  r.values = {{"small_polymers_containing_block", static_cast<double>(small.size())}};
  r.status = verdict(ok && !small.empty());
  return {r};
}

inline std::vector<CheckReport> mayer(const RunConfig& c) {
  auto r = make("mayer", "exhaustive-subset-identity", "dipole/mayer-identity", "exhaustive subset sum", c);
  TorusLattice lat = config_lattice(c);
  const int samples = static_cast<int>(std::min<std::uint64_t>(c.samples, 100));
  double res = mayer_identity_check(config_model(c), lat, Field::Zero(lat.site_count()), samples, c.seed);
  r.values = {{"max_relative_residual", res}, {"draws", static_cast<double>(samples)}, {"tolerance", 1e-12}};
  r.status = verdict(res < 1e-12);
  return {r};
}

inline std::vector<CheckReport> generating_function(const RunConfig& c) {
  TorusLattice lat = config_lattice(c);
  Field f = TestFunction::sine(c.dim).sample(lat);
  ModelParams free(0.0, c.beta, c.sigma0, c.mass > 0 ? c.mass : 0.5);
  auto ex = generating_function_exact_z0(f, free, lat);
  auto a = make("dipole-gf", "gaussian-log-z", "dipole/generating-function", "closed form", c);
  a.values = {{"log_Z", ex.log_Z}, {"log_Z_direct", ex.log_Z_direct}, {"deviation", std::abs(ex.log_Z - ex.log_Z_direct)}};
  a.status = verdict(std::abs(ex.log_Z - ex.log_Z_direct) < 1e-10);
  auto b = make("dipole-gf", "two-routes", "dipole/generating-function", "monte carlo", c);
  auto mc = generating_function_mc(f, config_model(c), lat, c.samples, c.seed);
  b.values = {{"ratio", mc.ratio}, {"ratio_se", mc.ratio_se}, {"route_difference", mc.route_difference},
              {"route_difference_se", mc.route_difference_se}};
  b.status = verdict(std::abs(mc.route_difference) <= 4 * mc.route_difference_se + 1e-15);
  return {a, b};
}

inline std::vector<CheckReport> reblock(const RunConfig& c) {
  auto r = make("reblock", "pointwise-identity", "rg/extraction-reblocking", "dual-side evaluation", c);
  TorusLattice lat = config_lattice(c);
  const int n = lat.site_count();
  Field xi = random_field(n, c.seed * 7 + 1, 0.2);
  DipoleActivity K(config_model(c), lat, connected_polymers_up_to(lat, 0, 5), xi);
  ScaleContext ctx(lat, 0, c.mass, xi);
  const StepCouplings couplings{0.2, -0.07, 0.35};
  double worst = 0, terms = 0;
  for (int t = 0; t < 20; ++t) {
    auto rep = reblocking_identity(ctx, K, couplings, random_field(n, c.seed * 1000 + t, 0.7));
    worst = std::max(worst, rep.relative);
    terms = rep.lhs_terms;
  }
  r.values = {{"max_relative_residual", worst}, {"draws", 20}, {"lhs_terms", terms}, {"tolerance", 1e-9}};
  r.status = verdict(worst < 1e-9);
  return {r};
}

inline std::vector<CheckReport> cond_exp(const RunConfig& c) {
  TorusLattice lat = config_lattice(c);
  const int o = lat.index(std::vector<int>(c.dim, 0));
  const int rad = (lat.side() - 1) / 4;
  SiteSet U = cube(lat, o, rad);
  if (c.mass <= 0) throw ConfigError("cond-exp needs mass > 0 for the torus covariance");
  Matrix C = torus_covariance(lat, c.mass);
  double mean_dev = 0, cov_dev = 0;
  for (int t = 0; t < 5; ++t) {
    Field phi = random_field(lat.site_count(), c.seed * 100 + t);
    auto dec = decompose_conditional(lat, U, c.mass, phi);
    auto sc = schur_conditional(C, U, phi);
    auto u = U.indices();
    for (std::size_t a = 0; a < u.size(); ++a) mean_dev = std::max(mean_dev, std::abs(sc.mean[a] - dec.harmonic[u[a]]));
    cov_dev = std::max(cov_dev, (sc.covariance - dec.covariance).cwiseAbs().maxCoeff());
  }
  auto a = make("cond-exp", "schur-vs-poisson-green", "gaussian/conditional-law", "dense linear algebra", c);
  a.values = {{"mean_max_dev", mean_dev}, {"covariance_max_dev", cov_dev}, {"tolerance", 1e-10}};
  a.status = verdict(mean_dev < 1e-10 && cov_dev < 1e-10);

  auto b = make("cond-exp", "variation-split", "gaussian/variation-split", "quadratic form identity", c);
  SiteSet V = dilate(lat, U, 1);
  double worst = 0;
  for (int t = 0; t < 100; ++t)
    worst = std::max(worst, std::abs(variation_split_residual(lat, U, V, c.mass, random_field(lat.site_count(), c.seed * 200 + t))));
  b.values = {{"max_residual", worst}, {"draws", 100}, {"tolerance", 1e-10}};
  b.status = verdict(worst < 1e-10);
  return {a, b};
}

inline std::vector<CheckReport> gaussian_det(const RunConfig& c) {
  auto r = make("gaussian-det", "determinant-vs-mc", "gaussian/determinant", "monte carlo and trace series", c);
  PeriodicGrid grid{2, 4};
  Matrix C = Matrix(grid.laplacian(1.0)).inverse();
  Eigen::SelfAdjointEigenSolver<Matrix> es(C);
  Matrix Ch = es.operatorSqrt();
  Matrix T = Ch * Matrix(gradient_square_matrix(grid, {0, 1, 4, 5})) * Ch;
  T *= 0.5 / spectral_norm_symmetric(T);
  auto q = gaussian_quadratic_expectation(T);
  auto mc = gaussian_quadratic_mc(T, c.samples, c.seed);
  const double zs = std::abs(mc.mean - q.value) / mc.std_error, series = std::abs(q.trace_series / q.value - 1);
  r.values = {{"determinant", q.value}, {"mc_mean", mc.mean}, {"mc_se", mc.std_error}, {"z_score", zs},
              {"trace_series_rel", series}, {"trace_T", T.trace()}, {"norm_T", spectral_norm_symmetric(T)}};
  r.status = verdict(zs < 3 && series < 1e-8);
  return {r};
}

inline std::vector<CheckReport> regulator(const RunConfig& c) {
  TorusLattice lat(c.dim, c.L, std::max(c.N, 2));
  const int o = lat.index(std::vector<int>(c.dim, 0));
  Regulator G(lat, cube(lat, o, 1), cube(lat, o, 3), c.mass, c.kappa);
  double route = 0;
  for (int t = 0; t < 100; ++t) {
    Field phi = random_field(lat.site_count(), c.seed * 300 + t, 2.0);
    route = std::max(route, std::abs(std::expm1(G.log_value(phi) - G.log_value_definitional(phi))));
  }
  auto a = make("regulator", "two-routes", "regulator/two-routes", "determinant vs minimizer", c);
  a.values = {{"max_rel_dev", route}, {"kappa", c.kappa}, {"contraction_norm", G.contraction_norm()},
              {"certified_threshold", G.certified_threshold()}, {"tolerance", 1e-9}};
  a.status = verdict(route < 1e-9);

  auto b = make("regulator", "integration-constant", "regulator/integration", "determinant ratio", c);
  auto rep = regulator_integration_check(lat, cube(lat, o, 0), cube(lat, o, 1), cube(lat, o, 2), c.mass, c.kappa, 0);
  b.values = {{"log_ratio", rep.log_ratio}, {"per_site", rep.per_site}, {"implied_c", rep.implied_c},
              {"trace_direct", rep.trace_direct}, {"trace_poisson", rep.trace_poisson}};
  b.status = Status::measured;
  return {a, b};
}

// Fits need a torus larger than the default; such suites raise N to a minimum and report the side used.
inline int fit_depth(const RunConfig& c) { return std::max(c.N, c.L == 3 ? 4 : 3); }

inline std::vector<CheckReport> green_decay(const RunConfig& c) {
  TorusLattice lat(c.dim, c.L, fit_depth(c));
  auto r = make("green-decay", "gradient-decay-fit", "elliptic/green-decay", "fit", c);
  auto rep = greens_decay_fit(c.dim, lat.side(), c.mass, c.dim == 2 ? 4 * lat.side() + 1 : 0);
  r.values = {{"side", static_cast<double>(lat.side())}, {"mass", c.mass}, {"slope", rep.gradient_fit.slope},
              {"slope_target", -(c.dim - 1.0)}, {"power_law_rejected", rep.power_law_rejected ? 1.0 : 0.0}};
  if (rep.potential_fit) {
    r.values.emplace_back("k", rep.potential_fit->intercept);
    r.values.emplace_back("k_target", green_constant_d2());
  }
  r.status = Status::measured;
  std::vector<CheckReport> out{r};
  {
    auto t = make("green-decay", "periodization-tail", "elliptic/periodization-tail", "fit", c);
    auto tail = periodization_tail_check(c.dim, c.L, {fit_depth(c) - 1, fit_depth(c)});
    t.values = {{"ratio", tail.ratios.at(0)}, {"expected", tail.expected_ratio},
                {"symmetric_point_residual", tail.symmetric_point_residual}};
    t.status = Status::measured;
    out.push_back(t);
  }
  return out;
}

inline std::vector<CheckReport> cov_scaling(const RunConfig& c) {
  auto r = make("cov-scaling", "decay-exponent", "gaussian/covariance-scaling", "fit", c);
  TorusLattice lat(c.dim, c.L, fit_depth(c));
  std::vector<int> scales;
  for (int j = 1; j <= fit_depth(c); ++j)
    if (4 * checked_pow(c.L, j) + 3 <= lat.side()) scales.push_back(j);
  if (scales.size() < 2) throw ConfigError("cov-scaling needs two scales that fit the torus; increase N");
  auto rep = covariance_scaling_check(lat, scales, c.mass);
  r.values.emplace_back("side", static_cast<double>(lat.side()));
  for (std::size_t k = 0; k < rep.values.size(); ++k)
    r.values.emplace_back("v_j" + std::to_string(rep.scales[k]), rep.values[k]);
  for (std::size_t k = 0; k < rep.exponents.size(); ++k)
    r.values.emplace_back("exponent_j" + std::to_string(rep.scales[k]), rep.exponents[k]);
  r.values.emplace_back("target", -static_cast<double>(c.dim));
  r.status = Status::measured;
  return {r};
}

inline std::vector<CheckReport> caccioppoli(const RunConfig& c) {
  TorusLattice lat(2, 3, 3);
  int pole = lat.index({0, 0});
  SiteSet U = cube(lat, pole, 12);
  SiteSet region = U;
  region.reset(pole);
  std::vector<CheckReport> out;
  for (bool bump : {false, true}) {
    EdgeCoefficients a = bump ? bump_coefficients(lat, lat.index({4, 4}), 0.1, 3.0) : EdgeCoefficients(lat);
    DirichletOperator D(lat, U, 0.0, &a);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(D.interior().size()));
    rhs[D.position(pole)] = 1.0;
    Eigen::VectorXd g = D.solve(rhs);
    Field u = Field::Zero(lat.site_count());
    for (std::size_t k = 0; k < D.interior().size(); ++k) u[D.interior()[k]] = g[k];
    for (auto [r1, r2] : {std::pair{2, 4}, std::pair{3, 5}}) {
      auto rep = caccioppoli_check(lat, u, annular_cutoff(lat, lat.index({6, 6}), r1, r2), region, a);
      auto r = make("caccioppoli", std::string(bump ? "bump" : "unit") + "-annulus-" + std::to_string(r1) + "-" +
                                       std::to_string(r2),
                    "elliptic/caccioppoli", "bound", c);
      r.values = {{"ratio", rep.ratio}, {"bound", rep.bound}, {"lambda", rep.lambda}, {"Lambda", rep.Lambda}};
      r.status = verdict(rep.ratio <= rep.bound);
      out.push_back(r);
    }
  }
  return out;
}

inline std::vector<CheckReport> harmonic(const RunConfig& c) {
  TorusLattice lat(2, 3, 4);
  std::vector<CheckReport> out;
  for (int R : {4, 8, 16}) {
    auto hg = harmonic_gradient_bound_check(lat, R, 32, c.seed);
    auto mv = mean_value_bound_check(lat, R, 0.5, 0.1, 64, c.seed);
    auto r = make("harmonic", "R" + std::to_string(R), "elliptic/harmonic-constants", "exact over kernel columns", c);
    r.values = {{"R", static_cast<double>(R)}, {"c_gradient_any", hg.c_any}, {"c_gradient_positive", hg.c_positive},
                {"sampled_gradient_any", hg.sampled_any}, {"c_mean_value_squared", mv.c_squared},
                {"c_mean_value_abs", mv.c_abs}};
    r.status = verdict(hg.sampled_any <= hg.c_any * (1 + 1e-12));
    out.push_back(r);
  }
  return out;
}

inline std::vector<CheckReport> alpha(const RunConfig& c) {
  auto r = make("alpha", "dipole-alpha", "rg/alpha-extraction", "gaussian expectation jet", c);
  auto rep = dipole_alpha_offcentre(ModelParams(c.z, c.beta, 0.0, c.mass > 0 ? c.mass : 0.1), c.L);
  r.values = {{"alpha_centre", rep.alpha_centre}, {"alpha_offcentre", rep.alpha_offcentre},
              {"relative_difference", rep.relative_difference}, {"symmetry_residual_centre", rep.symmetry_residual_centre}};
  r.status = Status::measured;
  return {r};
}

inline std::vector<CheckReport> rg_flow(const RunConfig& c) {
  TorusLattice lat(2, c.L, std::max(c.N, 2));
  const int B = lat.index({0, 0});
  const double m = c.mass > 0 ? c.mass : 0.1;
  DipoleActivity K(ModelParams(c.z, c.beta, c.sigma0, m), lat, {Polymer::from_blocks(lat, 0, {B})});
  auto a = alpha_extraction(K, B, m);
  ScaleContext ctx(lat, 0, m);
  auto law = fluctuation_law(lat, plus_set(Polymer::from_blocks(lat, 1, {lat.parent_block(0, B)})), m);
  const double dE = delta_E_trace(*ctx.It_form(B), law);
  RGState s{0, c.sigma0, 0.0, 0.0};
  auto u = coupling_update(s, a, dE, lat.block_count(0));
  double l3 = 0;
  for (int t = 0; t < 4; ++t) l3 = std::max(l3, std::abs(l3_tilde_linear(K, B, m, s, u, random_field(2, c.seed + t))));
  auto r = make("rg-flow", "one-step-couplings", "rg/coupling-update", "closed-class expectation", c);
  r.values = {{"sigma_0", s.sigma}, {"sigma_1", u.next.sigma}, {"E_1", u.next.E}, {"E_accum_1", u.next.E_accum},
              {"alpha", a.alpha}, {"alpha_symmetry_residual", a.symmetry_residual}, {"delta_E", dE},
              {"constant", a.constant}, {"L3_tilde_max", l3}, {"tolerance", 1e-9}};
  r.status = verdict(l3 < 1e-9);
  return {r};
}

inline std::vector<CheckReport> linearization(const RunConfig& c) {
  TorusLattice lat(2, 3, 1);
  Field xi = random_field(9, c.seed * 13 + 5, 0.2);
  GradientCosineActivity Kdot(lat, connected_polymers_up_to(lat, 0, 5), 0.5, 0.3, 0.4, xi);
  ScaleContext ctx(lat, 0, 0.7, xi);
  auto rep = linearization_check(ctx, Kdot, StepCouplings{0.3, 0.1, 0.2}, 1e-2);
  auto r = make("linearization", "assembled-vs-finite-difference", "rg/linearization", "finite difference", c);
  r.values = {{"L1", rep.L1}, {"L2", rep.L2}, {"L3", rep.L3}, {"assembled", rep.assembled}, {"fd", rep.fd},
              {"relative", rep.relative}, {"tolerance", 1e-4}};
  r.status = verdict(rep.relative < 1e-4);
  return {r};
}

inline std::vector<CheckReport> norms_probe(const RunConfig& c) {
  TorusLattice lat(2, 9, 1);
  const int draws = static_cast<int>(std::min<std::uint64_t>(c.samples, 100000));
  EstimateVConfig v;
  v.sigma = c.sigma0;
  v.kappa = c.kappa;
  v.h = c.h;
  v.draws = draws;
  v.seed = c.seed;
  auto a = make("norms-probe", "estimate-v", "norms/estimate-v", "probe lower bound", c);
  auto rv = estimate_v_probe_check(lat, v);
  a.values = {{"sigma", v.sigma}, {"kappa", v.kappa}, {"h", v.h}, {"c", v.c}, {"draws", static_cast<double>(rv.draws)},
              {"worst_ratio", rv.worst_I}, {"worst_ratio_minus_1", rv.worst_I_minus_1}, {"at_zero_lhs", rv.at_zero_lhs},
              {"violations", static_cast<double>(rv.violations)}};
  a.status = verdict(rv.pass());

  EstimateK0Config k;
  k.z = c.z;
  k.beta = c.beta;
  k.sigma = c.sigma0;
  k.kappa = c.kappa;
  k.h = c.h;
  k.A = c.A;
  k.draws = draws;
  k.seed = c.seed;
  auto b = make("norms-probe", "estimate-k0", "norms/estimate-k0", "probe lower bound", c);
  auto rk = estimate_k0_probe_check(lat, k);
  b.values = {{"z", k.z}, {"A", k.A}, {"r", k.r}, {"westi_m0", rk.westi_worst[0]}, {"westi_m1", rk.westi_worst[1]},
              {"westi_m2", rk.westi_worst[2]}, {"westi_m0_orders_0_3", rk.westi_worst_03[0]},
              {"westi_zero_model_W", rk.westi_zero_model_W}, {"westi_zero_bound", rk.westi_zero_bound},
              {"ewesti_max", rk.ewesti_worst}, {"A_K0_max", rk.k0_worst}, {"dK0_dsigma_rel", rk.dsigma_rel_error},
              {"z_max_passing", rk.z_max_passing}, {"violations", static_cast<double>(rk.violations)}};
  b.status = verdict(rk.pass());
  return {a, b};
}

inline std::vector<CheckReport> acceptance(const RunConfig& c) {
  std::vector<CheckReport> out;
  for (const auto& spec : acceptance_criteria()) {
    auto res = run_criterion(spec);
    char id[8];
    std::snprintf(id, sizeof id, "%02d", spec.id);
    auto r = make("acceptance", std::string(id) + "-" + spec.name, "acceptance/" + std::string(id), "criterion", c);
    r.values = res.metrics;
    r.values.emplace_back("budget_seconds", spec.budget_seconds);
    r.message = res.error;
    r.status = verdict(res.pass);
    out.push_back(r);
  }
  return out;
}

}  // namespace suite_detail

inline const std::vector<SuiteSpec>& suite_registry() {
  using namespace suite_detail;
  static const std::vector<SuiteSpec> all = {
      {"lattice-info", "geometry", {"geometry/torus-blocks"}, lattice_info},
      {"polymer", "polymer", {"polymer/small-sets"}, polymer_counts},
      {"green-decay", "elliptic", {"elliptic/green-decay", "elliptic/periodization-tail"}, green_decay},
      {"caccioppoli", "elliptic", {"elliptic/caccioppoli"}, caccioppoli},
      {"harmonic", "elliptic", {"elliptic/harmonic-constants"}, harmonic},
      {"cond-exp", "gaussian", {"gaussian/conditional-law", "gaussian/variation-split"}, cond_exp},
      {"gaussian-det", "gaussian", {"gaussian/determinant"}, gaussian_det},
      {"regulator", "gaussian", {"regulator/two-routes", "regulator/integration"}, regulator},
      {"cov-scaling", "gaussian", {"gaussian/covariance-scaling"}, cov_scaling},
      {"mayer", "dipole", {"dipole/mayer-identity"}, mayer},
      {"dipole-gf", "dipole", {"dipole/generating-function"}, generating_function},
      {"reblock", "rg", {"rg/extraction-reblocking"}, reblock},
      {"alpha", "rg", {"rg/alpha-extraction"}, alpha},
      {"rg-flow", "rg", {"rg/coupling-update"}, rg_flow},
      {"linearization", "rg", {"rg/linearization"}, linearization},
      {"norms-probe", "norms", {"norms/estimate-v", "norms/estimate-k0"}, norms_probe},
      {"acceptance", "acceptance",
       {"acceptance/01", "acceptance/02", "acceptance/03", "acceptance/04", "acceptance/05", "acceptance/06",
        "acceptance/07", "acceptance/08", "acceptance/09", "acceptance/10", "acceptance/11", "acceptance/12"},
       acceptance},
  };
  return all;
}

// Suite names, module names (geometry, polymer, elliptic, gaussian, dipole, rg, norms) and "all" expand
// to registry entries, deduplicated in registry order.
inline std::vector<const SuiteSpec*> resolve_suites(const std::vector<std::string>& names) {
  if (names.empty()) throw ConfigError("no suite selected");
  const auto& reg = suite_registry();
  std::vector<bool> take(reg.size(), false);
  for (const auto& n : names) {
    bool found = false;
    for (std::size_t i = 0; i < reg.size(); ++i)
      if (reg[i].name == n || reg[i].module == n || (n == "all" && reg[i].module != "acceptance")) {
        take[i] = true;
        found = true;
      }
    if (!found) throw ConfigError("unknown suite '" + n + "'");
  }
  std::vector<const SuiteSpec*> out;
  for (std::size_t i = 0; i < reg.size(); ++i)
    if (take[i]) out.push_back(&reg[i]);
  return out;
}

inline int worker_cap(int requested) {
  int k = std::max(1, requested);
  if (const char* env = std::getenv("POLYRG_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) k = std::min<long>(k, v);
  }
  return k;
}

// A suite that throws produces one failing report carrying the message; reports are merged by suite name.
inline std::vector<CheckReport> run_suites(const RunConfig& c) {
  validate(c);
  auto suites = resolve_suites(c.suites);
  std::vector<std::vector<CheckReport>> results(suites.size());
  auto run_one = [&](std::size_t i) {
    const auto* s = suites[i];
    auto t0 = std::chrono::steady_clock::now();
    try {
      results[i] = s->run(c);
    } catch (const std::exception& e) {
      CheckReport r = suite_detail::make(s->name, "error", s->anchors.front(), "none", c);
      r.status = Status::fail;
      r.message = e.what();
      results[i] = {r};
    }
    double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (auto& r : results[i]) r.wall_seconds = dt / static_cast<double>(results[i].size());
  };
  const int workers = std::min<int>(worker_cap(c.parallel), static_cast<int>(suites.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < suites.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < suites.size();) run_one(i);
      });
    for (auto& t : pool) t.join();
  }
  std::vector<std::size_t> order(suites.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return suites[a]->name < suites[b]->name; });
  std::vector<CheckReport> out;
  for (auto i : order) out.insert(out.end(), results[i].begin(), results[i].end());
  return out;
}

inline bool all_pass(const std::vector<CheckReport>& reports) {
  return std::none_of(reports.begin(), reports.end(), [](const CheckReport& r) { return r.status == Status::fail; });
}

}  // namespace polyrg
