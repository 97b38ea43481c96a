#pragma once

#include "polyrg/gaussian.hpp"

#include <complex>
#include <memory>
#include <optional>
#include <unordered_map>

namespace polyrg {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;

// Rows of G are linear functionals of the field; the pair encodes G phi + g.
struct GradientForm {
  Matrix G;
  Eigen::VectorXd g;
};
using FormPtr = std::shared_ptr<const GradientForm>;

// Contributes -(s/4) |G phi + g|^2 to the exponent.
struct QuadraticPart {
  FormPtr form;
  double s;
};

// p0 + p1^T phi + 1/2 phi^T P2 phi
struct Polynomial {
  Complex p0{1.0, 0.0};
  CVector p1;
  CMatrix P2;
};

// c * poly(phi) * exp(1/2 phi^T A phi + w^T phi + sum of quadratic parts).
// Empty A, w or poly stand for zero, zero and one respectively.
struct FieldTerm {
  Complex c{1.0, 0.0};
  std::vector<QuadraticPart> quad;
  Matrix A;
  CVector w;
  std::optional<Polynomial> poly;
};

namespace detail {

inline CVector add_vec(const CVector& a, const CVector& b) {
  if (a.size() == 0) return b;
  if (b.size() == 0) return a;
  return a + b;
}

inline Matrix add_mat(const Matrix& a, const Matrix& b) {
  if (a.size() == 0) return b;
  if (b.size() == 0) return a;
  return a + b;
}

inline Complex poly_eval(const Polynomial& p, const Eigen::VectorXd& x) {
  Complex v = p.p0;
  if (p.p1.size()) v += (p.p1.transpose() * x.cast<Complex>())(0);
  if (p.P2.size()) v += 0.5 * (x.cast<Complex>().transpose() * p.P2 * x.cast<Complex>())(0);
  return v;
}

}  // namespace detail

inline FieldTerm multiply(const FieldTerm& a, const FieldTerm& b) {
  if (a.poly && b.poly) throw std::invalid_argument("product of two polynomial terms leaves the closed class");
  FieldTerm t;
  t.c = a.c * b.c;
  t.quad = a.quad;
  t.quad.insert(t.quad.end(), b.quad.begin(), b.quad.end());
  t.A = detail::add_mat(a.A, b.A);
  t.w = detail::add_vec(a.w, b.w);
  t.poly = a.poly ? a.poly : b.poly;
  return t;
}

// Exponent of a term at phi (complex) and its polynomial factor.
inline Complex term_log_exponential(const FieldTerm& t, const Eigen::VectorXd& phi) {
  Complex e = 0;
  for (const auto& q : t.quad) e += -0.25 * q.s * (q.form->G * phi + q.form->g).squaredNorm();
  if (t.A.size()) e += 0.5 * phi.dot(t.A * phi);
  if (t.w.size()) e += (t.w.transpose() * phi.cast<Complex>())(0);
  return e;
}

inline Complex evaluate_term(const FieldTerm& t, const Eigen::VectorXd& phi) {
  Complex v = t.c * std::exp(term_log_exponential(t, phi));
  if (t.poly) v *= detail::poly_eval(*t.poly, phi);
  return v;
}

// Folds the quadratic parts into (A, w, c); the result has no shared forms.
inline FieldTerm densify(const FieldTerm& t, int n) {
  FieldTerm out = t;
  out.quad.clear();
  if (out.A.size() == 0) out.A = Matrix::Zero(n, n);
  if (out.w.size() == 0) out.w = CVector::Zero(n);
  for (const auto& q : t.quad) {
    out.A -= 0.5 * q.s * q.form->G.transpose() * q.form->G;
    out.w -= (0.5 * q.s * q.form->G.transpose() * q.form->g).cast<Complex>();
    out.c *= std::exp(-0.25 * q.s * q.form->g.squaredNorm());
  }
  return out;
}

// Finite sum of terms over a field of dimension n.  Products expand term by term.
class FieldFunctional {
 public:
  FieldFunctional() = default;
  explicit FieldFunctional(int n) : n_(n) {}

  static FieldFunctional constant(int n, Complex c) {
    FieldFunctional f(n);
    FieldTerm t;
    t.c = c;
    f.terms_.push_back(std::move(t));
    return f;
  }
  static FieldFunctional gradient_exponential(int n, FormPtr form, double s, Complex c = 1.0) {
    FieldFunctional f(n);
    FieldTerm t;
    t.c = c;
    if (s != 0) t.quad.push_back({std::move(form), s});
    f.terms_.push_back(std::move(t));
    return f;
  }
  // c * exp(w^T phi)
  static FieldFunctional exponential(int n, CVector w, Complex c = 1.0) {
    FieldFunctional f(n);
    FieldTerm t;
    t.c = c;
    t.w = std::move(w);
    f.terms_.push_back(std::move(t));
    return f;
  }
  // cos(ell^T phi + c0)
  static FieldFunctional cosine(int n, const Eigen::VectorXd& ell, double c0) {
    const Complex i(0, 1);
    FieldFunctional f = exponential(n, i * ell.cast<Complex>(), 0.5 * std::exp(i * c0));
    f += exponential(n, -i * ell.cast<Complex>(), 0.5 * std::exp(-i * c0));
    return f;
  }
  static FieldFunctional polynomial(int n, Polynomial p) {
    FieldFunctional f(n);
    FieldTerm t;
    t.poly = std::move(p);
    f.terms_.push_back(std::move(t));
    return f;
  }

  int dim() const { return n_; }
  const std::vector<FieldTerm>& terms() const { return terms_; }
  std::vector<FieldTerm>& terms() { return terms_; }
  std::size_t size() const { return terms_.size(); }

  Complex evaluate(const Eigen::VectorXd& phi) const {
    Complex v = 0;
    for (const auto& t : terms_) v += evaluate_term(t, phi);
    return v;
  }
  double evaluate_real(const Eigen::VectorXd& phi) const { return evaluate(phi).real(); }

  FieldFunctional& operator+=(const FieldFunctional& o) {
    check(o);
    terms_.insert(terms_.end(), o.terms_.begin(), o.terms_.end());
    return *this;
  }
  FieldFunctional& operator*=(Complex s) {
    for (auto& t : terms_) t.c *= s;
    return *this;
  }
  friend FieldFunctional operator+(FieldFunctional a, const FieldFunctional& b) { return a += b; }
  friend FieldFunctional operator-(FieldFunctional a, FieldFunctional b) {
    b *= -1.0;
    return a += b;
  }
  friend FieldFunctional operator*(FieldFunctional a, Complex s) { return a *= s; }
  friend FieldFunctional operator*(Complex s, FieldFunctional a) { return a *= s; }
  friend FieldFunctional operator*(const FieldFunctional& a, const FieldFunctional& b) {
    a.check(b);
    FieldFunctional out(a.n_);
    out.terms_.reserve(a.terms_.size() * b.terms_.size());
    for (const auto& x : a.terms_)
      for (const auto& y : b.terms_) out.terms_.push_back(multiply(x, y));
    return out;
  }
  FieldFunctional operator-(Complex s) const { return *this - constant(n_, s); }

 private:
  void check(const FieldFunctional& o) const {
    if (o.n_ != n_) throw std::invalid_argument("field functionals of different dimensions");
  }
  int n_ = 0;
  std::vector<FieldTerm> terms_;
};

// Integrates terms against phi = h + zeta, zeta centred Gaussian on the sites S with
// precision Q (|S| x |S|).  S empty means plain evaluation at h.
class GaussianIntegrator {
 public:
  GaussianIntegrator(std::vector<int> S, Matrix Q, Eigen::VectorXd h)
      : S_(std::move(S)), Q_(std::move(Q)), h_(std::move(h)) {
    if (Q_.rows() != static_cast<Eigen::Index>(S_.size())) throw std::invalid_argument("precision/site mismatch");
    if (!S_.empty()) {
      Eigen::LLT<Matrix> llt(Q_);
      if (llt.info() != Eigen::Success) throw NotPositiveDefiniteError("integration precision is not positive definite");
      logdet_Q_ = 2 * llt.matrixLLT().diagonal().array().log().sum();
      C_ = llt.solve(Matrix::Identity(Q_.rows(), Q_.cols()));
    }
  }

  const std::vector<int>& sites() const { return S_; }
  const Eigen::VectorXd& centre() const { return h_; }
  const Matrix& covariance() const { return C_; }

  Complex integrate(const FieldTerm& t) {
    const Eigen::Index k = static_cast<Eigen::Index>(S_.size());
    Complex expo = 0;
    CVector b = CVector::Zero(k);
    Matrix A_SS;
    bool quadratic = !t.quad.empty() || t.A.size();
    if (quadratic) A_SS = Matrix::Zero(k, k);
    for (const auto& q : t.quad) {
      const auto& c = cached(q.form);
      expo += -0.25 * q.s * c.rr;
      if (k) {
        A_SS.noalias() -= 0.5 * q.s * c.GtG;
        b -= (0.5 * q.s * c.Gtr).cast<Complex>();
      }
    }
    if (t.A.size()) {
      Eigen::VectorXd Ah = t.A * h_;
      expo += 0.5 * h_.dot(Ah);
      for (Eigen::Index a = 0; a < k; ++a) {
        b[a] += Ah[S_[a]];
        for (Eigen::Index c = 0; c < k; ++c) A_SS(a, c) += t.A(S_[a], S_[c]);
      }
    }
    if (t.w.size()) {
      expo += (t.w.transpose() * h_.cast<Complex>())(0);
      for (Eigen::Index a = 0; a < k; ++a) b[a] += t.w[S_[a]];
    }
    CVector mu_S;
    Matrix Minv;
    if (k) {
      if (!quadratic) {
        mu_S = C_.cast<Complex>() * b;
        expo += 0.5 * (b.transpose() * mu_S)(0);
        if (t.poly && t.poly->P2.size()) Minv = C_;
      } else {
        Matrix M = Q_ - A_SS;
        Eigen::LLT<Matrix> llt(M);
        if (llt.info() != Eigen::Success)
          throw NotPositiveDefiniteError("Gaussian integral diverges: Q - A is not positive definite");
        Eigen::VectorXd re = llt.solve(b.real()), im = llt.solve(b.imag());
        mu_S = re.cast<Complex>() + Complex(0, 1) * im.cast<Complex>();
        expo += 0.5 * (b.transpose() * mu_S)(0);
        expo += 0.5 * (logdet_Q_ - 2 * llt.matrixLLT().diagonal().array().log().sum());
        if (t.poly && t.poly->P2.size()) Minv = llt.solve(Matrix::Identity(k, k));
      }
    }
    Complex v = t.c * std::exp(expo);
    if (t.poly) {
      const auto& p = *t.poly;
      CVector y = h_.cast<Complex>();
      for (Eigen::Index a = 0; a < k; ++a) y[S_[a]] += mu_S[a];
      Complex pv = p.p0;
      if (p.p1.size()) pv += (p.p1.transpose() * y)(0);
      if (p.P2.size()) {
        pv += 0.5 * (y.transpose() * p.P2 * y)(0);
        for (Eigen::Index a = 0; a < k; ++a)
          for (Eigen::Index c = 0; c < k; ++c) pv += 0.5 * p.P2(S_[a], S_[c]) * Minv(c, a);
      }
      v *= pv;
    }
    return v;
  }

  Complex integrate(const FieldFunctional& F) {
    Complex s = 0;
    for (const auto& t : F.terms()) s += integrate(t);
    return s;
  }

 private:
  struct Cached {
    Matrix GtG;
    Eigen::VectorXd Gtr;
    double rr;
  };
  const Cached& cached(const FormPtr& f) {
    auto it = cache_.find(f.get());
    if (it != cache_.end()) return it->second;
    Eigen::VectorXd r = f->G * h_ + f->g;
    Matrix G_S(f->G.rows(), static_cast<Eigen::Index>(S_.size()));
    for (std::size_t a = 0; a < S_.size(); ++a) G_S.col(static_cast<Eigen::Index>(a)) = f->G.col(S_[a]);
    Cached c{G_S.transpose() * G_S, G_S.transpose() * r, r.squaredNorm()};
    keep_.push_back(f);
    return cache_.emplace(f.get(), std::move(c)).first->second;
  }

  std::vector<int> S_;
  Matrix Q_, C_;
  Eigen::VectorXd h_;
  double logdet_Q_ = 0;
  std::unordered_map<const GradientForm*, Cached> cache_;
  std::vector<FormPtr> keep_;
};

// phi -> E[F(P phi + zeta)] with zeta supported on S with precision Q, as a closed-form functional.
inline FieldFunctional conditional_functional(const FieldFunctional& F, const std::vector<int>& S, const Matrix& Q,
                                              const Matrix& P) {
  const int n = F.dim();
  const Eigen::Index k = static_cast<Eigen::Index>(S.size());
  Eigen::LLT<Matrix> lltQ(Q);
  if (k && lltQ.info() != Eigen::Success) throw NotPositiveDefiniteError("integration precision is not positive definite");
  const double logdet_Q = k ? 2 * lltQ.matrixLLT().diagonal().array().log().sum() : 0.0;
  FieldFunctional out(n);
  for (const auto& t0 : F.terms()) {
    FieldTerm t = densify(t0, n);
    Matrix R(k, n);
    CVector wS(k);
    Matrix A_SS(k, k);
    for (Eigen::Index a = 0; a < k; ++a) {
      R.row(a) = t.A.row(S[a]);
      wS[a] = t.w[S[a]];
      for (Eigen::Index c = 0; c < k; ++c) A_SS(a, c) = t.A(S[a], S[c]);
    }
    Matrix Mi = Matrix::Zero(k, k);
    Complex c = t.c;
    Matrix Ah = t.A;
    CVector wh = t.w;
    if (k) {
      Eigen::LLT<Matrix> llt(Q - A_SS);
      if (llt.info() != Eigen::Success)
        throw NotPositiveDefiniteError("Gaussian integral diverges: Q - A is not positive definite");
      Mi = llt.solve(Matrix::Identity(k, k));
      Matrix MiR = Mi * R;
      CVector MiwS = Mi.cast<Complex>() * wS;
      Ah += R.transpose() * MiR;
      wh += R.transpose().cast<Complex>() * MiwS;
      c *= std::exp(0.5 * (wS.transpose() * MiwS)(0) +
                    0.5 * (logdet_Q - 2 * llt.matrixLLT().diagonal().array().log().sum()));
      if (t.poly) {
        const auto& p = *t.poly;
        Matrix T = Matrix::Identity(n, n);
        CVector z0 = CVector::Zero(n);
        for (Eigen::Index a = 0; a < k; ++a) {
          T.row(S[a]) += MiR.row(a);
          z0[S[a]] = MiwS[a];
        }
        Polynomial q;
        CMatrix P2 = p.P2.size() ? p.P2 : CMatrix::Zero(n, n);
        CVector p1 = p.p1.size() ? p.p1 : CVector::Zero(n);
        q.p0 = p.p0 + (p1.transpose() * z0)(0) + 0.5 * (z0.transpose() * P2 * z0)(0);
        for (Eigen::Index a = 0; a < k; ++a)
          for (Eigen::Index b = 0; b < k; ++b) q.p0 += 0.5 * P2(S[a], S[b]) * Mi(b, a);
        q.p1 = T.transpose().cast<Complex>() * (p1 + P2 * z0);
        q.P2 = T.transpose().cast<Complex>() * P2 * T.cast<Complex>();
        t.poly = q;
      }
    }
    FieldTerm r;
    r.c = c;
    r.A = P.transpose() * Ah * P;
    r.w = P.transpose().cast<Complex>() * wh;
    if (t.poly) {
      Polynomial q = *t.poly;
      if (q.p1.size()) q.p1 = P.transpose().cast<Complex>() * q.p1;
      if (q.P2.size()) q.P2 = P.transpose().cast<Complex>() * q.P2 * P.cast<Complex>();
      r.poly = q;
    }
    out.terms().push_back(std::move(r));
  }
  return out;
}

// Second-order Taylor polynomial at phi = 0, returned as a single polynomial term.
inline FieldFunctional taylor2(const FieldFunctional& F) {
  const int n = F.dim();
  Polynomial acc;
  acc.p0 = 0;
  acc.p1 = CVector::Zero(n);
  acc.P2 = CMatrix::Zero(n, n);
  for (const auto& t0 : F.terms()) {
    FieldTerm t = densify(t0, n);
    const CVector& w = t.w;
    CMatrix E2 = t.A.cast<Complex>() + w * w.transpose();
    Complex p0 = 1;
    CVector p1 = CVector::Zero(n);
    CMatrix P2 = CMatrix::Zero(n, n);
    if (t.poly) {
      p0 = t.poly->p0;
      if (t.poly->p1.size()) p1 = t.poly->p1;
      if (t.poly->P2.size()) P2 = t.poly->P2;
    }
    acc.p0 += t.c * p0;
    acc.p1 += t.c * (p0 * w + p1);
    acc.P2 += t.c * (p0 * E2 + p1 * w.transpose() + w * p1.transpose() + P2);
  }
  return FieldFunctional::polynomial(n, std::move(acc));
}

// Value, first and mixed second directional derivative of F at phi = 0.
struct DirectionalJet {
  Complex value = 0, du = 0, dv = 0, duv = 0;
};

inline DirectionalJet directional_jet(const FieldFunctional& F, const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  DirectionalJet j;
  const int n = F.dim();
  for (const auto& t0 : F.terms()) {
    if (t0.poly) throw std::invalid_argument("directional_jet: polynomial terms not supported");
    FieldTerm t = densify(t0, n);
    Complex wu = (t.w.transpose() * u.cast<Complex>())(0), wv = (t.w.transpose() * v.cast<Complex>())(0);
    double uAv = u.dot(t.A * v);
    j.value += t.c;
    j.du += t.c * wu;
    j.dv += t.c * wv;
    j.duv += t.c * (uAv + wu * wv);
  }
  return j;
}


// Jet at psi = 0 of psi -> E[F(psi + zeta)], zeta on S with precision Q, without densifying.
inline DirectionalJet expectation_jet(const FieldFunctional& F, const std::vector<int>& S, const Matrix& Q,
                                      const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  const Eigen::Index k = static_cast<Eigen::Index>(S.size());
  Eigen::LLT<Matrix> lltQ(Q);
  if (k && lltQ.info() != Eigen::Success) throw NotPositiveDefiniteError("integration precision is not positive definite");
  const double logdet_Q = k ? 2 * lltQ.matrixLLT().diagonal().array().log().sum() : 0.0;
  Matrix C = k ? Matrix(lltQ.solve(Matrix::Identity(k, k))) : Matrix();
  auto restrict = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd r(k);
    for (Eigen::Index a = 0; a < k; ++a) r[a] = x[S[a]];
    return r;
  };
  const Eigen::VectorXd uS = restrict(u), vS = restrict(v);

  struct Shape {
    std::vector<std::pair<const GradientForm*, double>> key;
    Eigen::LLT<Matrix> llt;
    double logdet;
  };
  std::optional<Shape> last;
  DirectionalJet j;
  for (const auto& t : F.terms()) {
    if (t.poly && t.quad.empty() && !t.A.size() && !t.w.size()) {
      const auto& p = *t.poly;
      Complex tr = 0;
      if (p.P2.size())
        for (Eigen::Index a = 0; a < k; ++a)
          for (Eigen::Index c = 0; c < k; ++c) tr += p.P2(S[a], S[c]) * C(c, a);
      j.value += t.c * (p.p0 + 0.5 * tr);
      if (p.p1.size()) {
        j.du += t.c * (p.p1.transpose() * u.cast<Complex>())(0);
        j.dv += t.c * (p.p1.transpose() * v.cast<Complex>())(0);
      }
      if (p.P2.size()) j.duv += t.c * (u.cast<Complex>().transpose() * p.P2 * v.cast<Complex>())(0);
      continue;
    }
    if (t.poly) throw std::invalid_argument("expectation_jet: polynomial times exponential is not supported");
    Complex E0 = 0, Eu = 0, Ev = 0;
    double Euv = 0;
    CVector b0 = CVector::Zero(k);
    Eigen::VectorXd bu = Eigen::VectorXd::Zero(k), bv = Eigen::VectorXd::Zero(k);
    Matrix A_SS = Matrix::Zero(k, k);
    std::vector<std::pair<const GradientForm*, double>> key;
    for (const auto& q : t.quad) {
      const auto& G = q.form->G;
      const auto& g = q.form->g;
      Eigen::VectorXd Gu = G * u, Gv = G * v;
      E0 += -0.25 * q.s * g.squaredNorm();
      Eu += -0.5 * q.s * Gu.dot(g);
      Ev += -0.5 * q.s * Gv.dot(g);
      Euv += -0.5 * q.s * Gu.dot(Gv);
      if (k) {
        Matrix G_S(G.rows(), k);
        for (Eigen::Index a = 0; a < k; ++a) G_S.col(a) = G.col(S[a]);
        A_SS -= 0.5 * q.s * G_S.transpose() * G_S;
        b0 -= (0.5 * q.s * G_S.transpose() * g).cast<Complex>();
        bu -= 0.5 * q.s * G_S.transpose() * Gu;
        bv -= 0.5 * q.s * G_S.transpose() * Gv;
      }
      key.emplace_back(q.form.get(), q.s);
    }
    if (t.A.size()) {
      Euv += u.dot(t.A * v);
      Eigen::VectorXd Au = t.A * u, Av = t.A * v;
      for (Eigen::Index a = 0; a < k; ++a) {
        bu[a] += Au[S[a]];
        bv[a] += Av[S[a]];
        for (Eigen::Index c = 0; c < k; ++c) A_SS(a, c) += t.A(S[a], S[c]);
      }
    }
    if (t.w.size()) {
      Eu += (t.w.transpose() * u.cast<Complex>())(0);
      Ev += (t.w.transpose() * v.cast<Complex>())(0);
      for (Eigen::Index a = 0; a < k; ++a) b0[a] += t.w[S[a]];
    }
    if (k) {
      auto solve = [&](const auto& rhs) -> CVector {
        if (key.empty() && !t.A.size()) return C.cast<Complex>() * rhs;
        return last->llt.solve(rhs.real()).template cast<Complex>() +
               Complex(0, 1) * last->llt.solve(rhs.imag()).template cast<Complex>();
      };
      double ld = 0;
      if (!key.empty() || t.A.size()) {
        if (!last || t.A.size() || last->key != key) {
          Shape sh{key, Eigen::LLT<Matrix>(Q - A_SS), 0};
          if (sh.llt.info() != Eigen::Success)
            throw NotPositiveDefiniteError("Gaussian integral diverges: Q - A is not positive definite");
          sh.logdet = 2 * sh.llt.matrixLLT().diagonal().array().log().sum();
          last = std::move(sh);
          if (t.A.size()) last->key.clear();
        }
        ld = 0.5 * (logdet_Q - last->logdet);
      }
      CVector Mb0 = solve(b0);
      CVector Mbu = solve(bu.cast<Complex>());
      E0 += 0.5 * (b0.transpose() * Mb0)(0) + ld;
      Eu += (bu.cast<Complex>().transpose() * Mb0)(0);
      Ev += (bv.cast<Complex>().transpose() * Mb0)(0);
      Euv += (bv.cast<Complex>().transpose() * Mbu)(0).real();
    }
    Complex val = t.c * std::exp(E0);
    j.value += val;
    j.du += val * Eu;
    j.dv += val * Ev;
    j.duv += val * (Euv + Eu * Ev);
  }
  return j;
}

}  // namespace polyrg
