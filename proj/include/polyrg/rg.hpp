#pragma once

#include "polyrg/dipole.hpp"

#include <functional>
#include <set>
#include <unordered_map>

namespace polyrg {

// Law of the fluctuation zeta on S: Dirichlet Gaussian on S, or the full massive
// torus law when S is the whole torus (in which case P_S = 0).
struct FluctuationLaw {
  std::vector<int> sites;
  Matrix precision;
  Matrix poisson;
  bool whole = false;

  Matrix covariance() const {
    return precision.llt().solve(Matrix::Identity(precision.rows(), precision.cols()));
  }
  Field embed(const Eigen::VectorXd& zS, int n) const {
    Field out = Field::Zero(n);
    for (std::size_t a = 0; a < sites.size(); ++a) out[sites[a]] = zS[static_cast<Eigen::Index>(a)];
    return out;
  }
};

inline FluctuationLaw fluctuation_law(const TorusLattice& lat, const SiteSet& S, double m) {
  FluctuationLaw law;
  const int n = lat.site_count();
  law.sites = S.indices();
  if (static_cast<int>(S.count()) == n) {
    if (!(m > 0)) throw SingularOperatorError("unconditional expectation on the torus needs m > 0");
    law.whole = true;
    law.precision = torus_laplacian_dense(lat, m);
    law.poisson = Matrix::Zero(n, n);
  } else {
    DirichletOperator D(lat, S, m);
    law.precision = Matrix(D.restricted());
    law.poisson = D.poisson_full();
  }
  return law;
}

// Rows d_e (P f)(x) for x in `sites` and all directions, offset d_e offset(x); P = identity when null.
inline FormPtr block_gradient_form(const TorusLattice& lat, const std::vector<int>& sites, const Matrix* P,
                                   const Field& offset) {
  const int n = lat.site_count(), nd = lat.num_directions();
  auto f = std::make_shared<GradientForm>();
  f->G = Matrix::Zero(static_cast<Eigen::Index>(sites.size()) * nd, n);
  f->g = Eigen::VectorXd::Zero(f->G.rows());
  Eigen::Index r = 0;
  for (int x : sites)
    for (int e = 0; e < nd; ++e, ++r) {
      int y = lat.neighbor(x, e);
      if (P)
        f->G.row(r) = P->row(y) - P->row(x);
      else {
        f->G(r, y) += 1;
        f->G(r, x) -= 1;
      }
      if (offset.size()) f->g[r] = offset[y] - offset[x];
    }
  return f;
}

inline double form_square(const GradientForm& f, const Field& phi) { return (f.G * phi + f.g).squaredNorm(); }

// Geometry and I-factor data of one RG step from scale j to j+1:
// I_j(B) uses P_{B+} (identity at j = 0), I-tilde(B) uses P_{(closure B)+} (zero when that is the torus).
class ScaleContext {
 public:
  ScaleContext(const TorusLattice& lat, int j, double m, Field xi = {})
      : lat_(&lat), j_(j), m_(m), xi_(xi.size() ? std::move(xi) : Field::Zero(lat.site_count())) {
    if (j < 0 || j + 1 > lat.N()) throw GeometryError("RG step needs 0 <= j < N");
    const int nb = lat.block_count(j);
    children_.resize(lat.block_count(j + 1));
    for (int b = 0; b < nb; ++b) children_[lat.parent_block(j, b)].push_back(b);
    I_.resize(nb);
    It_.resize(nb);
    for (int b = 0; b < nb; ++b) {
      const auto& s = lat.block_sites(j, b);
      if (j == 0) {
        I_[b] = block_gradient_form(lat, s, nullptr, xi_);
      } else {
        SiteSet plus = plus_set(Polymer::from_blocks(lat, j, {b}));
        Matrix P = fluctuation_law(lat, plus, m).poisson;
        I_[b] = block_gradient_form(lat, s, &P, xi_);
      }
    }
    for (int D = 0; D < lat.block_count(j + 1); ++D) {
      SiteSet plus = plus_set(Polymer::from_blocks(lat, j + 1, {D}));
      Matrix P = static_cast<int>(plus.count()) == lat.site_count()
                     ? Matrix::Zero(lat.site_count(), lat.site_count())
                     : fluctuation_law(lat, plus, m).poisson;
      for (int b : children_[D]) It_[b] = block_gradient_form(lat, lat.block_sites(j, b), &P, xi_);
    }
  }

  const TorusLattice& lattice() const { return *lat_; }
  int scale() const { return j_; }
  double mass() const { return m_; }
  const Field& xi() const { return xi_; }
  int block_count() const { return lat_->block_count(j_); }
  const std::vector<int>& children(int D) const { return children_[D]; }
  const FormPtr& I_form(int B) const { return I_[B]; }
  const FormPtr& It_form(int B) const { return It_[B]; }

  double I(int B, double sigma, const Field& phi) const { return std::exp(-0.25 * sigma * form_square(*I_[B], phi)); }
  double It(int B, double sigma_next, double E_next, const Field& phi) const {
    return std::exp(E_next - 0.25 * sigma_next * form_square(*It_[B], phi));
  }

 private:
  const TorusLattice* lat_;
  int j_;
  double m_;
  Field xi_;
  std::vector<std::vector<int>> children_;
  std::vector<FormPtr> I_, It_;
};

// Polymer activity on connected polymers; values on general polymers factorize over components.
// Subclasses define K(Y, psi) with psi = phi + xi.
class Activity {
 public:
  Activity(const TorusLattice& lat, int j, std::vector<Polymer> support, Field xi = {})
      : lat_(&lat), j_(j), support_(std::move(support)), xi_(xi.size() ? std::move(xi) : Field::Zero(lat.site_count())) {
    for (const auto& p : support_) {
      if (p.scale() != j || !is_connected(p)) throw GeometryError("activity support must be connected polymers at scale j");
      index_.insert(p.blocks());
    }
  }
  virtual ~Activity() = default;

  const TorusLattice& lattice() const { return *lat_; }
  int scale() const { return j_; }
  const std::vector<Polymer>& support() const { return support_; }
  const Field& xi() const { return xi_; }
  bool in_support(const Polymer& Y) const { return index_.count(Y.blocks()) > 0; }

  virtual double value_psi(const Polymer& Y, const Field& psi) const = 0;
  // phi -> K(Y, phi + offset) in the closed class; empty when the activity is outside it.
  virtual std::optional<FieldFunctional> functional_psi(const Polymer&, const Field&) const { return std::nullopt; }

  double value(const Polymer& X, const Field& phi) const {
    Field psi = phi + xi_;
    double v = 1;
    for (const auto& Y : connected_components(X)) {
      if (!in_support(Y)) return 0;
      v *= value_psi(Y, psi);
    }
    return v;
  }

 private:
  const TorusLattice* lat_;
  int j_;
  std::vector<Polymer> support_;
  Field xi_;
  std::unordered_set<Bitset, BitsetHash> index_;
};

inline std::vector<Polymer> connected_polymers_up_to(const TorusLattice& lat, int j, int max_blocks) {
  std::set<Polymer> acc;
  for (int b = 0; b < lat.block_count(j); ++b)
    for (auto& p : connected_polymers_containing(lat, j, b, max_blocks)) acc.insert(p);
  return {acc.begin(), acc.end()};
}

// K(Y) = a^{|Y|} exp(-b/4 sum_{x in Y, e} (d_e psi)^2) cos(u sum_{x in Y} Lap psi(x)) at scale 0.
class GradientCosineActivity : public Activity {
 public:
  GradientCosineActivity(const TorusLattice& lat, std::vector<Polymer> support, double a, double b, double u,
                         Field xi = {})
      : Activity(lat, 0, std::move(support), std::move(xi)), a_(a), b_(b), u_(u) {}

  double value_psi(const Polymer& Y, const Field& psi) const override {
    const auto& lat = lattice();
    double g2 = 0, lap = 0;
    Y.blocks().for_each([&](int x) {
      for (int e = 0; e < lat.num_directions(); ++e) {
        double d = forward_derivative(lat, psi, x, e);
        g2 += d * d;
        lap += d;
      }
    });
    return std::pow(a_, Y.size()) * std::exp(-0.25 * b_ * g2) * std::cos(u_ * lap);
  }

  std::optional<FieldFunctional> functional_psi(const Polymer& Y, const Field& offset) const override {
    const auto& lat = lattice();
    const int n = lat.site_count();
    auto sites = Y.blocks().indices();
    FormPtr form = block_gradient_form(lat, sites, nullptr, offset);
    Eigen::VectorXd ell = u_ * form->G.colwise().sum().transpose();
    double c0 = u_ * form->g.sum();
    return FieldFunctional::gradient_exponential(n, form, b_, std::pow(a_, Y.size())) *
           FieldFunctional::cosine(n, ell, c0);
  }

 private:
  double a_, b_, u_;
};

// K(Y) = c * 1/4 sum_{x in Y, e} (d_e psi)^2 at scale 0.
class GradientQuadraticActivity : public Activity {
 public:
  GradientQuadraticActivity(const TorusLattice& lat, std::vector<Polymer> support, double c, Field xi = {})
      : Activity(lat, 0, std::move(support), std::move(xi)), c_(c) {}

  double value_psi(const Polymer& Y, const Field& psi) const override {
    return c_ * 0.25 * directed_grad_square(lattice(), psi, Y.sites());
  }

  std::optional<FieldFunctional> functional_psi(const Polymer& Y, const Field& offset) const override {
    const int n = lattice().site_count();
    FormPtr f = block_gradient_form(lattice(), Y.blocks().indices(), nullptr, offset);
    Polynomial p;
    p.p0 = c_ * 0.25 * f->g.squaredNorm();
    p.p1 = (c_ * 0.5 * f->G.transpose() * f->g).cast<Complex>();
    p.P2 = (c_ * 0.5 * f->G.transpose() * f->G).cast<Complex>();
    return FieldFunctional::polynomial(n, std::move(p));
  }

 private:
  double c_;
};

// The initial dipole activity K_0(Y) = prod_{x in Y} K_0({x}).
class DipoleActivity : public Activity {
 public:
  DipoleActivity(const ModelParams& p, const TorusLattice& lat, std::vector<Polymer> support, Field xi = {},
                 double bessel_tol = 1e-14)
      : Activity(lat, 0, std::move(support), std::move(xi)), p_(p), tol_(bessel_tol) {}

  double value_psi(const Polymer& Y, const Field& psi) const override {
    double v = 1;
    Y.blocks().for_each([&](int x) { v *= K0_site(p_, lattice(), x, psi); });
    return v;
  }

  std::optional<FieldFunctional> functional_psi(const Polymer& Y, const Field& offset) const override {
    std::optional<FieldFunctional> F;
    Y.blocks().for_each([&](int x) {
      auto f = K0_site_functional(p_, lattice(), x, offset, tol_);
      F = F ? *F * f : f;
    });
    return F;
  }

  const ModelParams& params() const { return p_; }

 private:
  ModelParams p_;
  double tol_;
};

// t * K on connected polymers.
class ScaledActivity : public Activity {
 public:
  ScaledActivity(const Activity& base, double t)
      : Activity(base.lattice(), base.scale(), base.support(), base.xi()), base_(&base), t_(t) {}
  double value_psi(const Polymer& Y, const Field& psi) const override { return t_ * base_->value_psi(Y, psi); }
  std::optional<FieldFunctional> functional_psi(const Polymer& Y, const Field& offset) const override {
    auto f = base_->functional_psi(Y, offset);
    if (f) *f *= t_;
    return f;
  }

 private:
  const Activity* base_;
  double t_;
};

// Couplings of one extraction/reblocking step: sigma_j inside I_j, and the free choices E', sigma'.
struct StepCouplings {
  double sigma = 0;
  double E_next = 0;
  double sigma_next = 0;
};

inline StepCouplings operator*(double t, const StepCouplings& c) {
  return {t * c.sigma, t * c.E_next, t * c.sigma_next};
}

// Expands K#(U) configuration by configuration.  Ops supplies the factors in some algebra
// (pointwise numbers, or closed-class functionals) and receives each product via accept().
// A configuration contributes
//   e^{E' c1} (1 - e^{E'})^{|P|} prod_Q (I - e^{E'}) prod_Z dI prod_{(V' \ <X>) \ Z} I~
//   prod_{D in U \ V'} (prod_{B in D \ <X>} I~(B) - e^{E' n_D}) prod_large K(Y) prod_small K(Y)/|Y|
// with V' = V u closure(X), c1 = |((<X> \ X) n U) \ (P u Q)| - |U|_j, and X inside U.
template <class Ops>
std::size_t expand_ksharp(const ScaleContext& ctx, const Activity& K, const Polymer& U, double E_next, Ops& ops,
                          std::size_t budget = 200'000'000) {
  const auto& lat = ctx.lattice();
  const int j = ctx.scale();
  if (U.scale() != j + 1) throw GeometryError("K# target must be a (j+1)-polymer");
  if (K.scale() != j) throw GeometryError("activity scale does not match the step");
  const int nb = lat.block_count(j);
  Bitset Uj(nb), Uhat(nb);
  U.blocks().for_each([&](int D) {
    for (int b : ctx.children(D)) Uj.set(b);
  });
  hat(U).blocks().for_each([&](int D) {
    for (int b : ctx.children(D)) Uhat.set(b);
  });
  std::vector<Bitset> comps;
  for (auto& c : connected_components(U)) comps.push_back(c.blocks());
  const double eE = std::exp(E_next);
  const int Ucount = static_cast<int>(Uj.count());
  ReblockEnumOptions opt;
  opt.budget = budget;
  opt.support = &K.support();
  std::vector<int> outside;
  return enumerate_configs_within(U, opt, [&](const ReblockConfig& c) {
    if (!c.X.subset_of(Uj)) return;
    if (!c.X_angle.subset_of(Uhat)) throw GeometryError("<X> leaves the hat of U; the resummation does not apply");
    Bitset Vp = c.V;
    c.X.for_each([&](int b) { Vp.set(lat.parent_block(j, b)); });
    for (const auto& comp : comps)
      if (!comp.intersects(Vp)) return;
    Bitset W = U.blocks() - Vp;
    bool dead = false;
    W.for_each([&](int D) {
      bool any = false;
      for (int b : ctx.children(D)) any = any || !c.X_angle.test(b);
      dead = dead || !any;
    });
    if (dead) return;

    Bitset corr = (c.X_angle - c.X) & Uj;
    corr -= c.P;
    corr -= c.Q;
    double pre = std::exp(E_next * (static_cast<double>(corr.count()) - Ucount));
    if (c.P.any()) pre *= std::pow(1 - eE, static_cast<double>(c.P.count()));
    for (const auto& s : c.small) pre /= s.Y.size();
    auto v = ops.constant(pre);
    c.Q.for_each([&](int b) { ops.mul(v, ops.I_minus_e(b)); });
    c.Z.for_each([&](int b) { ops.mul(v, ops.dI(b)); });
    Vp.for_each([&](int D) {
      for (int b : ctx.children(D))
        if (!c.X_angle.test(b) && !c.Z.test(b)) ops.mul(v, ops.It(b));
    });
    W.for_each([&](int D) {
      outside.clear();
      for (int b : ctx.children(D))
        if (!c.X_angle.test(b)) outside.push_back(b);
      ops.mul(v, ops.W_factor(outside));
    });
    for (const auto& Y : c.large) ops.mul(v, ops.K(Y));
    for (const auto& s : c.small) ops.mul(v, ops.K(s.Y));
    ops.accept(std::move(v));
  });
}

// Pointwise factor tables at one field phi.
class PointwiseOps {
 public:
  using T = double;
  PointwiseOps(const ScaleContext& ctx, const Activity& K, const StepCouplings& c, const Field& phi)
      : K_(&K), phi_(phi), E_(c.E_next), eE_(std::exp(c.E_next)) {
    const int nb = ctx.block_count();
    I_.resize(nb);
    It_.resize(nb);
    for (int b = 0; b < nb; ++b) {
      I_[b] = ctx.I(b, c.sigma, phi);
      It_[b] = ctx.It(b, c.sigma_next, c.E_next, phi);
    }
  }
  T constant(double c) const { return c; }
  void mul(T& a, T b) const { a *= b; }
  T I(int b) const { return I_[b]; }
  T It(int b) const { return It_[b]; }
  T dI(int b) const { return I_[b] - It_[b]; }
  T I_minus_e(int b) const { return I_[b] - eE_; }
  T W_factor(const std::vector<int>& bs) const {
    double p = 1;
    for (int b : bs) p *= It_[b];
    return p - std::exp(E_ * static_cast<double>(bs.size()));
  }
  T K(const Polymer& Y) {
    auto it = cache_.find(Y.blocks());
    if (it != cache_.end()) return it->second;
    double v = K_->value(Y, phi_);
    cache_.emplace(Y.blocks(), v);
    return v;
  }
  void accept(T v) { terms_.push_back(v); }
  double total() const { return pairwise_sum(terms_); }
  std::size_t count() const { return terms_.size(); }

 private:
  const Activity* K_;
  Field phi_;
  double E_, eE_;
  std::vector<double> I_, It_;
  std::unordered_map<Bitset, double, BitsetHash> cache_;
  std::vector<double> terms_;
};

// Closed-class factors; each configuration is integrated against the supplied Gaussian as it is produced.
class FunctionalOps {
 public:
  using T = FieldFunctional;
  FunctionalOps(const ScaleContext& ctx, const Activity& K, const StepCouplings& c, GaussianIntegrator& integ)
      : K_(&K), integ_(&integ), n_(ctx.lattice().site_count()), E_(c.E_next) {
    const int nb = ctx.block_count();
    const double eE = std::exp(c.E_next);
    for (int b = 0; b < nb; ++b) {
      I_.push_back(FieldFunctional::gradient_exponential(n_, ctx.I_form(b), c.sigma));
      It_.push_back(FieldFunctional::gradient_exponential(n_, ctx.It_form(b), c.sigma_next, eE));
      dI_.push_back(I_.back() - It_.back());
      Ime_.push_back(I_.back() - Complex(eE));
    }
  }
  T constant(double c) const { return FieldFunctional::constant(n_, c); }
  void mul(T& a, const T& b) const { a = a * b; }
  const T& I(int b) const { return I_[b]; }
  const T& It(int b) const { return It_[b]; }
  const T& dI(int b) const { return dI_[b]; }
  const T& I_minus_e(int b) const { return Ime_[b]; }
  T W_factor(const std::vector<int>& bs) const {
    T p = constant(1.0);
    for (int b : bs) p = p * It_[b];
    return p - Complex(std::exp(E_ * static_cast<double>(bs.size())));
  }
  const T& K(const Polymer& Y) {
    auto it = cache_.find(Y.blocks());
    if (it != cache_.end()) return it->second;
    auto f = K_->functional_psi(Y, K_->xi());
    if (!f) throw std::invalid_argument("activity has no closed-class representation");
    return cache_.emplace(Y.blocks(), std::move(*f)).first->second;
  }
  void accept(const T& v) {
    total_ += integ_->integrate(v);
    terms_ += v.terms().size();
  }
  Complex total() const { return total_; }
  std::size_t integrals() const { return terms_; }

 private:
  const Activity* K_;
  GaussianIntegrator* integ_;
  int n_;
  double E_;
  std::vector<FieldFunctional> I_, It_, dI_, Ime_;
  std::unordered_map<Bitset, FieldFunctional, BitsetHash> cache_;
  Complex total_ = 0;
  std::size_t terms_ = 0;
};

// Configuration-by-configuration evaluation; exponential in |U|_j, meant for cross-checks.
inline double ksharp_value_expanded(const ScaleContext& ctx, const Activity& K, const StepCouplings& c,
                                    const Polymer& U, const Field& phi) {
  if (U.empty()) return 1.0;
  PointwiseOps ops(ctx, K, c, phi);
  expand_ksharp(ctx, K, U, c.E_next, ops);
  return ops.total();
}

// The same sum with the corridor sets summed out block by block.  For a fixed family X each j-block
// b in U \ X carries w(b) if it lies in the corridor W and nw(b) otherwise, so a (j+1)-block D forced
// into V' by X gives prod (w + nw), a free D gives prod (w + nw) - e^{E'|D|}, and a component of U
// with no forced block loses the term where no block of it enters V'.  The |Y| choices of the
// anchoring block of a small polymer give identical terms and cancel its 1/|Y|.
inline double ksharp_value(const ScaleContext& ctx, const Activity& K, const StepCouplings& c, const Polymer& U,
                           const Field& phi, std::size_t family_budget = 50'000'000) {
  if (U.empty()) return 1.0;
  const auto& lat = ctx.lattice();
  const int j = ctx.scale();
  if (U.scale() != j + 1) throw GeometryError("K# target must be a (j+1)-polymer");
  if (K.scale() != j) throw GeometryError("activity scale does not match the step");
  const int nb = lat.block_count(j);
  PointwiseOps ops(ctx, K, c, phi);
  Bitset Uj(nb), Uhat(nb);
  U.blocks().for_each([&](int D) {
    for (int b : ctx.children(D)) Uj.set(b);
  });
  hat(U).blocks().for_each([&](int D) {
    for (int b : ctx.children(D)) Uhat.set(b);
  });
  std::vector<std::vector<int>> comps;
  for (auto& comp : connected_components(U)) comps.push_back(comp.blocks().indices());
  const double eE = std::exp(c.E_next);
  const double global = std::exp(-c.E_next * static_cast<double>(Uj.count()));

  std::vector<Polymer> cands;
  for (const auto& Y : K.support())
    if (Y.blocks().subset_of(Uj)) cands.push_back(Y);

  std::vector<double> terms;
  std::vector<int> chosen;
  std::size_t visited = 0;
  auto family = [&]() {
    if (++visited > family_budget) throw EnumerationBudgetError("K# family enumeration budget exceeded");
    Polymer X(lat, j);
    double kprod = 1;
    for (int k : chosen) {
      X.blocks() |= cands[k].blocks();
      kprod *= ops.K(cands[k]);
    }
    if (kprod == 0) return;
    Bitset xh = X.empty() ? Bitset(nb) : hat(X).blocks();
    Bitset xa = X.empty() ? Bitset(nb) : angle_bracket(X).blocks();
    if (!xa.subset_of(Uhat)) throw GeometryError("<X> leaves the hat of U; the resummation does not apply");
    double total = global * kprod;
    for (const auto& comp : comps) {
      double with = 1, none = 1;
      bool forced = false;
      for (int D : comp) {
        double all = 1, nw_prod = 1;
        bool inX = false;
        for (int b : ctx.children(D)) {
          if (X.contains_block(b)) {
            inX = true;
            continue;
          }
          double w = xh.test(b) ? 1 - eE : xa.test(b) ? ops.I_minus_e(b) : ops.dI(b);
          double nw = xa.test(b) ? eE : ops.It(b);
          all *= w + nw;
          nw_prod *= nw;
        }
        const double eD = std::exp(c.E_next * static_cast<double>(ctx.children(D).size()));
        forced = forced || inX;
        with *= inX ? all : all - eD;
        none *= nw_prod - eD;
      }
      total *= forced ? with : with - none;
    }
    terms.push_back(total);
  };
  std::function<void(std::size_t)> rec = [&](std::size_t start) {
    family();
    for (std::size_t s = start; s < cands.size(); ++s) {
      bool ok = true;
      for (int o : chosen) ok = ok && !touches(cands[o], cands[s]);
      if (!ok) continue;
      chosen.push_back(static_cast<int>(s));
      rec(s + 1);
      chosen.pop_back();
    }
  };
  rec(0);
  return pairwise_sum(terms);
}

struct ReblockingIdentityReport {
  double lhs = 0, rhs = 0, relative = 0;
  std::size_t lhs_terms = 0, rhs_targets = 0;
};

// Sum_X I^{Lambda \ hat X} K(X) against e^{E'|Lambda|_j} Sum_U (I')^{Lambda \ hat U} K#(U),
// I'(D) = e^{-|D|_j E'} prod_{B in D} I~(B).  Exhaustive over (j+1)-polymers.
inline ReblockingIdentityReport reblocking_identity(const ScaleContext& ctx, const Activity& K, const StepCouplings& c,
                                                    const Field& phi) {
  const auto& lat = ctx.lattice();
  const int j = ctx.scale();
  const int nb = ctx.block_count(), nD = lat.block_count(j + 1);
  if (nD > 12) throw EnumerationBudgetError("exhaustive reblocking identity needs at most 12 target blocks");
  ReblockingIdentityReport rep;
  PointwiseOps ops(ctx, K, c, phi);

  const auto& sup = K.support();
  std::vector<double> lhs_terms;
  std::vector<int> chosen;
  std::function<void(std::size_t)> rec = [&](std::size_t start) {
    Polymer X(lat, j);
    double kv = 1;
    for (int k : chosen) {
      X.blocks() |= sup[k].blocks();
      kv *= ops.K(sup[k]);
    }
    Bitset xh = hat(X).blocks();
    double t = kv;
    for (int b = 0; b < nb; ++b)
      if (!xh.test(b)) t *= ops.I(b);
    lhs_terms.push_back(t);
    for (std::size_t s = start; s < sup.size(); ++s) {
      bool ok = true;
      for (int o : chosen) ok = ok && !touches(sup[o], sup[s]);
      if (!ok) continue;
      chosen.push_back(static_cast<int>(s));
      rec(s + 1);
      chosen.pop_back();
    }
  };
  rec(0);
  rep.lhs = pairwise_sum(lhs_terms);
  rep.lhs_terms = lhs_terms.size();

  std::vector<double> Iprime(nD);
  for (int D = 0; D < nD; ++D) {
    double p = std::exp(-c.E_next * static_cast<double>(ctx.children(D).size()));
    for (int b : ctx.children(D)) p *= ops.It(b);
    Iprime[D] = p;
  }
  std::vector<double> rhs_terms;
  for (unsigned mask = 0; mask < (1u << nD); ++mask) {
    Polymer U(lat, j + 1);
    for (int D = 0; D < nD; ++D)
      if (mask >> D & 1u) U.blocks().set(D);
    Bitset uh = U.empty() ? Bitset(nD) : hat(U).blocks();
    double t = std::exp(c.E_next * nb);
    for (int D = 0; D < nD; ++D)
      if (!uh.test(D)) t *= Iprime[D];
    if (t == 0) continue;
    rhs_terms.push_back(t * ksharp_value(ctx, K, c, U, phi));
    ++rep.rhs_targets;
  }
  rep.rhs = pairwise_sum(rhs_terms);
  rep.relative = std::abs(rep.lhs - rep.rhs) / std::max(std::abs(rep.lhs), 1e-300);
  return rep;
}

// ----- conditional expectation step -----

inline bool sites_touch(const TorusLattice& lat, const SiteSet& A, const SiteSet& B) {
  const int d = lat.dim();
  std::vector<int> off(d);
  bool hit = false;
  A.for_each([&](int x) {
    if (hit) return;
    int total = 1;
    for (int a = 0; a < d; ++a) total *= 3;
    for (int k = 0; k < total && !hit; ++k) {
      int r = k;
      for (int a = 0; a < d; ++a) {
        off[a] = r % 3 - 1;
        r /= 3;
      }
      hit = B.test(lat.translate(x, off));
    }
  });
  return hit;
}

// phi -> E[F(P_{V+} phi + zeta)] with zeta Dirichlet on V+; unconditional when V+ is the torus.
class ConditionalStep {
 public:
  ConditionalStep(const TorusLattice& lat, const Polymer& V, double m) : lat_(&lat), V_(V) {
    SiteSet plus = plus_set(V);
    if (static_cast<int>(plus.count()) != lat.site_count()) {
      SiteSet outside = hat(V).sites().complement();
      if (sites_touch(lat, plus, outside)) throw GeometryError("corridor violation: V+ touches the complement of hat V");
    }
    law_ = fluctuation_law(lat, plus, m);
  }

  const FluctuationLaw& law() const { return law_; }
  const Polymer& polymer() const { return V_; }
  Field anchor(const Field& phi) const { return law_.poisson * phi; }

  GaussianIntegrator integrator(const Field& phi) const { return {law_.sites, law_.precision, anchor(phi)}; }

  Complex exact(const FieldFunctional& F, const Field& phi) const {
    auto I = integrator(phi);
    return I.integrate(F);
  }
  FieldFunctional exact_functional(const FieldFunctional& F) const {
    return conditional_functional(F, law_.sites, law_.precision, law_.poisson);
  }
  MeanEstimate monte_carlo(const std::function<double(const Field&)>& f, const Field& phi, std::size_t samples,
                           std::uint64_t seed) const {
    GaussianSpec spec(law_.precision);
    Rng rng = make_rng(seed, 101);
    Field h = anchor(phi);
    std::vector<double> v(samples);
    for (auto& s : v) s = f(h + law_.embed(spec.sample(rng), lat_->site_count()));
    return mean_estimate(v);
  }

 private:
  const TorusLattice* lat_;
  Polymer V_;
  FluctuationLaw law_;
};

enum class Backend { exact, monte_carlo };

// K_{j+1}(U) at phi: product over components V of E[K#(V) | (V+)^c].
inline MeanEstimate next_activity(const ScaleContext& ctx, const Activity& K, const StepCouplings& c, const Polymer& U,
                                  const Field& phi, Backend backend, std::size_t samples = 2000,
                                  std::uint64_t seed = 1) {
  double value = 1, rel_var = 0;
  for (const auto& V : connected_components(U)) {
    ConditionalStep step(ctx.lattice(), V, ctx.mass());
    if (backend == Backend::exact) {
      auto I = step.integrator(phi);
      FunctionalOps ops(ctx, K, c, I);
      expand_ksharp(ctx, K, V, c.E_next, ops);
      value *= ops.total().real();
    } else {
      auto est = step.monte_carlo([&](const Field& f) { return ksharp_value(ctx, K, c, V, f); }, phi, samples, seed++);
      value *= est.mean;
      if (est.mean != 0) rel_var += (est.std_error / est.mean) * (est.std_error / est.mean);
    }
  }
  return {value, std::abs(value) * std::sqrt(rel_var), backend == Backend::exact ? 0 : samples};
}

// ----- Taylor expansion by finite differences -----

struct TaylorData {
  double value = 0;
  Eigen::VectorXd gradient;
  Matrix hessian;
  double operator()(const Field& psi) const { return value + gradient.dot(psi) + 0.5 * psi.dot(hessian * psi); }
};

struct TaylorOptions {
  double step = 1e-2;
  bool richardson = true;
};

class DifferentiationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Second-order Taylor data at psi = 0 along the coordinate directions in `sites`, by central differences.
inline TaylorData taylor2_fd(const std::function<double(const Field&)>& F, int n, const std::vector<int>& sites,
                             TaylorOptions opt = {}) {
  auto eval = [&](const Field& x) {
    double v = F(x);
    if (!std::isfinite(v)) throw DifferentiationError("non-finite value during finite differencing");
    return v;
  };
  const Field zero = Field::Zero(n);
  const double f0 = eval(zero);
  auto at = [&](int a, double sa, int b, double sb) {
    Field x = zero;
    x[a] += sa;
    if (b >= 0) x[b] += sb;
    return eval(x);
  };
  auto grad = [&](int a, double h) { return (at(a, h, -1, 0) - at(a, -h, -1, 0)) / (2 * h); };
  auto hess = [&](int a, int b, double h) {
    if (a == b) return (at(a, h, -1, 0) - 2 * f0 + at(a, -h, -1, 0)) / (h * h);
    return (at(a, h, b, h) - at(a, h, b, -h) - at(a, -h, b, h) + at(a, -h, b, -h)) / (4 * h * h);
  };
  auto refine = [&](auto&& D) { return opt.richardson ? (4 * D(opt.step / 2) - D(opt.step)) / 3 : D(opt.step); };
  TaylorData t;
  t.value = f0;
  t.gradient = Eigen::VectorXd::Zero(n);
  t.hessian = Matrix::Zero(n, n);
  for (std::size_t i = 0; i < sites.size(); ++i) {
    int a = sites[i];
    t.gradient[a] = refine([&](double h) { return grad(a, h); });
    for (std::size_t k = 0; k <= i; ++k) {
      int b = sites[k];
      t.hessian(a, b) = t.hessian(b, a) = refine([&](double h) { return hess(a, b, h); });
    }
  }
  return t;
}

// ----- patch chart, Loc and alpha -----

// x_mu relative to `origin`: signed wrapped displacement along axis a for mu = +e_a, its negative for -e_a.
inline Field chart_coordinate(const TorusLattice& lat, int origin, int mu) {
  const auto dir = lat.direction(mu);
  Field f(lat.site_count());
  for (int x = 0; x < lat.site_count(); ++x) f[x] = dir.sign * lat.displacement(origin, x, dir.axis);
  return f;
}

// Sites carrying nonzero coefficients of a polynomial functional.
inline SiteSet polynomial_support(const TorusLattice& lat, const Polynomial& p) {
  SiteSet s(lat.site_count());
  for (int x = 0; x < lat.site_count(); ++x) {
    bool nz = (p.p1.size() && std::abs(p.p1[x]) > 0) || (p.P2.size() && p.P2.row(x).cwiseAbs().maxCoeff() > 0);
    if (nz) s.set(x);
  }
  return s;
}

class ChartError : public GeometryError {
 public:
  using GeometryError::GeometryError;
};

// The chart is undefined when a set covers every residue along some axis.
inline void require_chart(const TorusLattice& lat, const SiteSet& S) {
  for (int a = 0; a < lat.dim(); ++a) {
    std::vector<char> seen(lat.side(), 0);
    S.for_each([&](int x) { seen[lat.coord(x, a) + lat.half()] = 1; });
    if (std::all_of(seen.begin(), seen.end(), [](char c) { return c; }))
      throw ChartError("patch chart undefined: the set wraps around the torus");
  }
}

// psi -> x . d psi(z) = sum_a x_a (psi(z + e_a) - psi(z - e_a)) / 2, as an n x n matrix.
inline Matrix affine_projection(const TorusLattice& lat, int origin, int z) {
  const int n = lat.site_count(), d = lat.dim();
  Matrix M = Matrix::Zero(n, n);
  for (int a = 0; a < d; ++a) {
    Field xa = chart_coordinate(lat, origin, a);
    Eigen::VectorXd row = Eigen::VectorXd::Zero(n);
    row[lat.neighbor(z, a)] += 0.5;
    row[lat.neighbor(z, a + d)] -= 0.5;
    M += xa * row.transpose();
  }
  return M;
}

// Loc of the second-order Taylor polynomial of F (a functional of psi): average over z in B of
// Tay F evaluated at x . d psi(z), coordinates measured from the block centre.
inline FieldFunctional loc_operator(const TorusLattice& lat, const FieldFunctional& F, const std::vector<int>& block) {
  const int n = lat.site_count();
  FieldFunctional tay = taylor2(F);
  const Polynomial& p = *tay.terms().front().poly;
  require_chart(lat, polynomial_support(lat, p));
  const int origin = block[block.size() / 2];
  Polynomial out;
  out.p0 = p.p0;
  out.p1 = CVector::Zero(n);
  out.P2 = CMatrix::Zero(n, n);
  for (int z : block) {
    CMatrix M = affine_projection(lat, origin, z).cast<Complex>();
    out.p1 += M.transpose() * p.p1;
    out.P2 += M.transpose() * p.P2 * M;
  }
  out.p1 /= static_cast<double>(block.size());
  out.P2 /= static_cast<double>(block.size());
  return FieldFunctional::polynomial(n, std::move(out));
}

struct AlphaReport {
  Matrix alpha_mn;            // 2d x 2d, indexed by directions
  double alpha = 0;
  double symmetry_residual = 0;
  double constant = 0;        // sum_{X contains B} E[K(X, zeta)] / |X|
  double alpha_se = 0;        // nonzero only for the Monte Carlo fallback
  int polymers = 0;
  bool exact = true;
};

struct AlphaOptions {
  std::size_t mc_samples = 20000;
  double mc_step = 1e-2;
  std::uint64_t seed = 1;
};

// alpha_{mu nu}(B) = 1/(8|B|) sum_{X small, X contains B} (1/|X|) d^2/dt1 dt2 E[K(X, t1 x_mu + t2 x_nu + zeta)],
// zeta Dirichlet on (closure X)+.  Exact on the closed class; Monte Carlo otherwise.
inline AlphaReport alpha_extraction(const Activity& K, int block, double m, AlphaOptions opt = {}) {
  const auto& lat = K.lattice();
  const int j = K.scale(), d = lat.dim(), nd = lat.num_directions(), n = lat.site_count();
  const auto& bsites = lat.block_sites(j, block);
  const int origin = lat.block_center(j, block);
  std::vector<Field> xa;
  for (int a = 0; a < d; ++a) xa.push_back(chart_coordinate(lat, origin, a));
  Matrix H = Matrix::Zero(d, d);
  double Hse2 = 0;
  AlphaReport rep;
  std::map<Bitset, FluctuationLaw> laws;
  const Field zero = Field::Zero(n);
  for (const auto& X : K.support()) {
    if (!is_small(X) || !X.contains_block(block)) continue;
    ++rep.polymers;
    Bitset key = closure(X).blocks();
    auto it = laws.find(key);
    if (it == laws.end()) it = laws.emplace(key, fluctuation_law(lat, plus_set(closure(X)), m)).first;
    const auto& law = it->second;
    const double w = 1.0 / X.size();
    auto F = K.functional_psi(X, zero);
    if (F) {
      for (int a = 0; a < d; ++a)
        for (int b = a; b < d; ++b) {
          auto jet = expectation_jet(*F, law.sites, law.precision, xa[a], xa[b]);
          H(a, b) += w * jet.duv.real();
          if (a == 0 && b == 0) rep.constant += w * jet.value.real();
        }
    } else {
      rep.exact = false;
      GaussianSpec spec(law.precision);
      Rng rng = make_rng(opt.seed, static_cast<std::uint64_t>(rep.polymers));
      const double h = opt.mc_step;
      std::vector<std::vector<double>> samples(d * d + 1);
      for (std::size_t s = 0; s < opt.mc_samples; ++s) {
        Field zeta = law.embed(spec.sample(rng), n);
        samples[d * d].push_back(K.value_psi(X, zeta));
        for (int a = 0; a < d; ++a)
          for (int b = a; b < d; ++b) {
            auto f = [&](double s1, double s2) { return K.value_psi(X, zeta + s1 * xa[a] + s2 * xa[b]); };
            samples[a * d + b].push_back((f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4 * h * h));
          }
      }
      rep.constant += w * mean_estimate(samples[d * d]).mean;
      for (int a = 0; a < d; ++a)
        for (int b = a; b < d; ++b) {
          auto est = mean_estimate(samples[a * d + b]);
          H(a, b) += w * est.mean;
          if (a == b) Hse2 += w * w * est.std_error * est.std_error;
        }
    }
  }
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < a; ++b) H(a, b) = H(b, a);
  const double Bn = static_cast<double>(bsites.size());
  rep.alpha_mn = Matrix::Zero(nd, nd);
  for (int mu = 0; mu < nd; ++mu)
    for (int nu = 0; nu < nd; ++nu) {
      auto dm = lat.direction(mu), dn = lat.direction(nu);
      rep.alpha_mn(mu, nu) = dm.sign * dn.sign * H(dm.axis, dn.axis) / (8 * Bn);
    }
  double s = 0;
  for (int mu = 0; mu < nd; ++mu) s += rep.alpha_mn(mu, mu) - rep.alpha_mn(mu, lat.opposite(mu));
  rep.alpha = 4.0 / nd * s;
  for (int mu = 0; mu < nd; ++mu)
    for (int nu = 0; nu < nd; ++nu) {
      double ideal = rep.alpha / 8 * ((mu == nu) - (nu == lat.opposite(mu)));
      rep.symmetry_residual = std::max(rep.symmetry_residual, std::abs(rep.alpha_mn(mu, nu) - ideal));
    }
  rep.alpha_se = 2.0 / (nd * Bn) * std::sqrt(Hse2);
  return rep;
}

// delta E(B) = sum_{x in B, e} E[(d_e P_{B+} zeta)^2] as an exact trace, and its Monte Carlo estimate.
inline double delta_E_trace(const GradientForm& form, const FluctuationLaw& law) {
  Matrix GS(form.G.rows(), static_cast<Eigen::Index>(law.sites.size()));
  for (std::size_t a = 0; a < law.sites.size(); ++a) GS.col(static_cast<Eigen::Index>(a)) = form.G.col(law.sites[a]);
  return (GS * law.covariance() * GS.transpose()).trace();
}

inline MeanEstimate delta_E_mc(const GradientForm& form, const FluctuationLaw& law, std::size_t samples,
                               std::uint64_t seed) {
  GaussianSpec spec(law.precision);
  Rng rng = make_rng(seed, 202);
  const int n = static_cast<int>(form.G.cols());
  std::vector<double> v(samples);
  for (auto& s : v) s = (form.G * law.embed(spec.sample(rng), n)).squaredNorm();
  return mean_estimate(v);
}

struct RGState {
  int j = 0;
  double sigma = 0;
  double E = 0;
  double E_accum = 0;
};

struct CouplingUpdate {
  RGState next;
  double alpha = 0;
  double delta_E = 0;
  double constant = 0;
};

// sigma_{j+1} = sigma_j - alpha, E_{j+1} = sum_{X contains B} E[K(X, zeta)]/|X| - sigma_j dE / 4,
// calE_{j+1} = calE_j + E_{j+1} |Lambda|_j.
inline CouplingUpdate coupling_update(const RGState& s, const AlphaReport& a, double delta_E, int blocks_at_j) {
  CouplingUpdate u;
  u.alpha = a.alpha;
  u.delta_E = delta_E;
  u.constant = a.constant;
  u.next.j = s.j + 1;
  u.next.sigma = s.sigma - a.alpha;
  u.next.E = a.constant - 0.25 * s.sigma * delta_E;
  u.next.E_accum = s.E_accum + u.next.E * blocks_at_j;
  return u;
}

// The quadratic and constant ledger with Tay replaced by Loc, on psi = v . x around block B:
//   (sigma' - sigma)/4 sum_{x in B, e} (d_e psi)^2 - E' - sigma dE/4 + sum_{X contains B} Loc E[K(X)]/|X| (psi).
// The Loc term is computed from the directional jet along psi itself, independently of alpha_{mu nu}.
inline double l3_tilde_linear(const Activity& K, int block, double m, const RGState& s, const CouplingUpdate& u,
                              const Eigen::VectorXd& v) {
  const auto& lat = K.lattice();
  const int j = K.scale(), n = lat.site_count();
  const int origin = lat.block_center(j, block);
  Field psi = Field::Zero(n);
  for (int a = 0; a < lat.dim(); ++a) psi += v[a] * chart_coordinate(lat, origin, a);
  const auto& bsites = lat.block_sites(j, block);
  double g2 = 0;
  for (int x : bsites)
    for (int e = 0; e < lat.num_directions(); ++e) g2 += std::pow(forward_derivative(lat, psi, x, e), 2);
  double loc = 0;
  const Field zero = Field::Zero(n);
  for (const auto& X : K.support()) {
    if (!is_small(X) || !X.contains_block(block)) continue;
    auto law = fluctuation_law(lat, plus_set(closure(X)), m);
    auto F = K.functional_psi(X, zero);
    if (!F) throw std::invalid_argument("l3_tilde_linear needs a closed-class activity");
    auto jet = expectation_jet(*F, law.sites, law.precision, psi, psi);
    loc += (jet.value + jet.du + 0.5 * jet.duv).real() / X.size();
  }
  return 0.25 * (u.next.sigma - s.sigma) * g2 - u.next.E - 0.25 * s.sigma * u.delta_E + loc;
}

// ----- linearization of the one-step map at the trivial point -----

struct LinearizationReport {
  double L1 = 0, L2 = 0, L3 = 0;
  double assembled = 0;
  double fd = 0, fd_coarse = 0;
  double relative = 0;
  std::size_t integrals = 0;
};

// E[K#_t(Lambda)] for couplings t*dir and activity t*Kdot, by exact Gaussian integration.
inline double step_expectation_whole(const ScaleContext& ctx, const Activity& Kdot, const StepCouplings& dir, double t,
                                     std::size_t* integrals = nullptr) {
  const auto& lat = ctx.lattice();
  Polymer U = Polymer::whole(lat, ctx.scale() + 1);
  auto law = fluctuation_law(lat, plus_set(U), ctx.mass());
  if (!law.whole) throw GeometryError("linearization check is set up for U = Lambda");
  GaussianIntegrator I(law.sites, law.precision, Field::Zero(lat.site_count()));
  ScaledActivity Kt(Kdot, t);
  StepCouplings c = t * dir;
  FunctionalOps ops(ctx, Kt, c, I);
  expand_ksharp(ctx, Kt, U, c.E_next, ops);
  if (integrals) *integrals += ops.integrals();
  return ops.total().real();
}

// L1: large connected X; L2: (1 - Tay) of psi -> E[K(X, psi + zeta)] at psi = xi on small X;
// L3: per block, sigma'/4 E|d P~ phi + d xi|^2 - E' - sigma/4 E|d P phi + d xi|^2 + sum_{X contains B} Tay(...)/|X|.
// Compared with a Richardson-refined central difference of t -> E[K#_t(Lambda)].
inline LinearizationReport linearization_check(const ScaleContext& ctx, const Activity& Kdot, const StepCouplings& dir,
                                               double h) {
  const auto& lat = ctx.lattice();
  const int j = ctx.scale(), n = lat.site_count();
  Polymer U = Polymer::whole(lat, j + 1);
  auto law = fluctuation_law(lat, plus_set(U), ctx.mass());
  if (!law.whole) throw GeometryError("linearization check is set up for U = Lambda");
  const Matrix C = law.covariance();
  const Field& xi = ctx.xi();
  const Field zero = Field::Zero(n);
  LinearizationReport rep;

  std::vector<double> tay_share(ctx.block_count(), 0.0);
  for (const auto& X : Kdot.support()) {
    if (!X.subset_of(Polymer::whole(lat, j))) continue;
    if (!is_small(X)) {
      GaussianIntegrator I(law.sites, law.precision, zero);
      auto F = Kdot.functional_psi(X, xi);
      if (!F) throw std::invalid_argument("linearization check needs a closed-class activity");
      rep.L1 += I.integrate(*F).real();
      continue;
    }
    auto F = Kdot.functional_psi(X, zero);
    if (!F) throw std::invalid_argument("linearization check needs a closed-class activity");
    auto g = conditional_functional(*F, law.sites, law.precision, Matrix::Identity(n, n));
    auto tay = taylor2(g);
    double gx = g.evaluate(xi).real(), tx = tay.evaluate(xi).real();
    rep.L2 += gx - tx;
    X.blocks().for_each([&](int b) { tay_share[b] += tx / X.size(); });
  }
  auto expect_sq = [&](const GradientForm& f) { return f.g.squaredNorm() + (f.G * C * f.G.transpose()).trace(); };
  for (int b = 0; b < ctx.block_count(); ++b) {
    rep.L3 += 0.25 * dir.sigma_next * expect_sq(*ctx.It_form(b)) - dir.E_next -
              0.25 * dir.sigma * expect_sq(*ctx.I_form(b)) + tay_share[b];
  }
  rep.assembled = rep.L1 + rep.L2 + rep.L3;

  auto F = [&](double t) { return step_expectation_whole(ctx, Kdot, dir, t, &rep.integrals); };
  auto D = [&](double s) { return (F(s) - F(-s)) / (2 * s); };
  rep.fd_coarse = D(h);
  rep.fd = (4 * D(h / 2) - rep.fd_coarse) / 3;
  rep.relative = std::abs(rep.fd - rep.assembled) / std::max(std::abs(rep.assembled), 1e-300);
  return rep;
}

// ----- measurements -----

struct AffineRemainderReport {
  int L = 0;
  double ratio = 0;  // mean over samples of ||psi - x.dpsi(z)||_{Phi_0(X)} / ||psi||_{Phi_1(U)}
};

// psi harmonic in U+ (U the centre (j+1)-block, j = 0) with random boundary data; X the centre site's
// small neighbourhood.  Gradients are compared with the factor L^{j+1} of the scale-1 norm.
inline AffineRemainderReport affine_remainder_ratio(int L, int samples, std::uint64_t seed) {
  TorusLattice lat(2, L, 2);
  const int n = lat.site_count(), d = lat.dim();
  const int centre = lat.index({0, 0});
  const int D = lat.block_of(centre, 1);
  Polymer U = Polymer::from_blocks(lat, 1, {D});
  SiteSet plus = plus_set(U);
  DirichletOperator op(lat, plus, 0.0);
  SiteSet X(n);
  for (int a = -1; a <= 0; ++a)
    for (int b = -1; b <= 0; ++b) X.set(lat.index({a, b}));
  Matrix M = affine_projection(lat, centre, centre);
  Rng rng = make_rng(seed, 303);
  std::normal_distribution<double> g;
  double acc = 0;
  for (int s = 0; s < samples; ++s) {
    Field f(n);
    for (auto& v : f) v = g(rng);
    Field psi = op.harmonic_extension(f);
    Field r = psi - M * psi;
    double num = 0, den = 0;
    X.for_each([&](int x) {
      for (int e = 0; e < 2 * d; ++e) num = std::max(num, std::abs(forward_derivative(lat, r, x, e)));
    });
    U.sites().for_each([&](int x) {
      for (int e = 0; e < 2 * d; ++e) den = std::max(den, std::abs(forward_derivative(lat, psi, x, e)));
    });
    acc += num / (L * den);
  }
  return {L, acc / samples};
}

struct DipoleAlphaReport {
  int L = 0;
  double alpha_centre = 0, alpha_offcentre = 0;
  double difference = 0, relative_difference = 0;
  double symmetry_residual_centre = 0;
};

// Singleton part of K_0 (the O(z) contribution) at sigma = 0: alpha at the centre site of the centre
// scale-1 block and at the corner site of the same block.
inline DipoleAlphaReport dipole_alpha_offcentre(const ModelParams& p, int L, double bessel_tol = 1e-14) {
  TorusLattice lat(2, L, 2);
  const int centre = lat.index({0, 0});
  const int D = lat.block_of(centre, 1);
  int corner = centre;
  for (int x : lat.block_sites(1, D))
    if (lat.displacement(centre, x, 0) < 0 && lat.displacement(centre, x, 1) < 0 &&
        lat.sup_distance(centre, x) == L / 2)
      corner = x;
  std::vector<Polymer> sup;
  for (int x : {centre, corner}) sup.push_back(Polymer::from_blocks(lat, 0, {x}));
  DipoleActivity K(p, lat, sup, {}, bessel_tol);
  auto a = alpha_extraction(K, centre, p.mass());
  auto b = alpha_extraction(K, corner, p.mass());
  DipoleAlphaReport r;
  r.L = L;
  r.alpha_centre = a.alpha;
  r.alpha_offcentre = b.alpha;
  r.difference = a.alpha - b.alpha;
  r.relative_difference = std::abs(r.difference) / std::abs(a.alpha);
  r.symmetry_residual_centre = a.symmetry_residual;
  return r;
}

}  // namespace polyrg
