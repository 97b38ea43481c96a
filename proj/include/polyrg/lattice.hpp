#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace polyrg {

class GeometryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Field = Eigen::VectorXd;

// Dynamic bitset used for site sets and polymer block sets.
class Bitset {
 public:
  Bitset() = default;
  explicit Bitset(std::size_t n) : n_(n), w_((n + 63) / 64, 0) {}

  std::size_t size() const { return n_; }
  bool test(std::size_t i) const { return (w_[i >> 6] >> (i & 63)) & 1u; }
  void set(std::size_t i, bool v = true) {
    if (v)
      w_[i >> 6] |= (std::uint64_t{1} << (i & 63));
    else
      w_[i >> 6] &= ~(std::uint64_t{1} << (i & 63));
  }
  void reset(std::size_t i) { set(i, false); }
  void clear() { std::fill(w_.begin(), w_.end(), 0); }

  std::size_t count() const {
    std::size_t c = 0;
    for (auto w : w_) c += static_cast<std::size_t>(std::popcount(w));
    return c;
  }
  bool any() const {
    for (auto w : w_)
      if (w) return true;
    return false;
  }
  bool none() const { return !any(); }

  Bitset& operator|=(const Bitset& o) {
    check(o);
    for (std::size_t k = 0; k < w_.size(); ++k) w_[k] |= o.w_[k];
    return *this;
  }
  Bitset& operator&=(const Bitset& o) {
    check(o);
    for (std::size_t k = 0; k < w_.size(); ++k) w_[k] &= o.w_[k];
    return *this;
  }
  Bitset& operator-=(const Bitset& o) {
    check(o);
    for (std::size_t k = 0; k < w_.size(); ++k) w_[k] &= ~o.w_[k];
    return *this;
  }
  friend Bitset operator|(Bitset a, const Bitset& b) { return a |= b; }
  friend Bitset operator&(Bitset a, const Bitset& b) { return a &= b; }
  friend Bitset operator-(Bitset a, const Bitset& b) { return a -= b; }

  Bitset complement() const {
    Bitset r(n_);
    for (std::size_t k = 0; k < w_.size(); ++k) r.w_[k] = ~w_[k];
    r.trim();
    return r;
  }
  bool subset_of(const Bitset& o) const {
    check(o);
    for (std::size_t k = 0; k < w_.size(); ++k)
      if (w_[k] & ~o.w_[k]) return false;
    return true;
  }
  bool intersects(const Bitset& o) const {
    check(o);
    for (std::size_t k = 0; k < w_.size(); ++k)
      if (w_[k] & o.w_[k]) return true;
    return false;
  }

  template <class F>
  void for_each(F&& f) const {
    for (std::size_t k = 0; k < w_.size(); ++k) {
      std::uint64_t w = w_[k];
      while (w) {
        int b = std::countr_zero(w);
        f(static_cast<int>(k * 64 + b));
        w &= w - 1;
      }
    }
  }
  std::vector<int> indices() const {
    std::vector<int> out;
    out.reserve(count());
    for_each([&](int i) { out.push_back(i); });
    return out;
  }
  int first() const {
    for (std::size_t k = 0; k < w_.size(); ++k)
      if (w_[k]) return static_cast<int>(k * 64 + std::countr_zero(w_[k]));
    return -1;
  }

  bool operator==(const Bitset& o) const { return n_ == o.n_ && w_ == o.w_; }
  bool operator<(const Bitset& o) const { return w_ < o.w_; }
  std::size_t hash() const {
    std::size_t h = n_;
    for (auto w : w_) h ^= std::hash<std::uint64_t>{}(w) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    return h;
  }

 private:
  void check(const Bitset& o) const {
    if (o.n_ != n_) throw std::invalid_argument("bitset size mismatch");
  }
  void trim() {
    if (n_ % 64 && !w_.empty()) w_.back() &= (std::uint64_t{1} << (n_ % 64)) - 1;
  }
  std::size_t n_ = 0;
  std::vector<std::uint64_t> w_;
};

struct BitsetHash {
  std::size_t operator()(const Bitset& b) const { return b.hash(); }
};

using SiteSet = Bitset;

struct Direction {
  int axis;
  int sign;
};

inline long long checked_pow(int base, int exp) {
  long long r = 1;
  for (int i = 0; i < exp; ++i) {
    r *= base;
    if (r > (1LL << 40)) throw GeometryError("lattice size overflow");
  }
  return r;
}

// The periodic lattice of side L^N in d dimensions, coordinates in the centered
// window [-(side-1)/2, (side-1)/2], sites indexed row-major (axis 0 slowest).
class TorusLattice {
 public:
  TorusLattice(int dim, int L, int N) : dim_(dim), L_(L), N_(N) {
    if (dim < 1) throw GeometryError("dimension must be positive");
    if (L < 3 || L % 2 == 0) throw GeometryError("L must be an odd integer >= 3");
    if (N < 1) throw GeometryError("N must be >= 1");
    side_ = static_cast<int>(checked_pow(L, N));
    long long count = checked_pow(side_, dim);
    if (count > 50'000'000) throw GeometryError("lattice too large");
    count_ = static_cast<int>(count);
    half_ = (side_ - 1) / 2;
    coords_.resize(static_cast<std::size_t>(count_) * dim_);
    for (int x = 0; x < count_; ++x) {
      int r = x;
      for (int a = dim_ - 1; a >= 0; --a) {
        coords_[static_cast<std::size_t>(x) * dim_ + a] = r % side_ - half_;
        r /= side_;
      }
    }
    nbr_.resize(static_cast<std::size_t>(count_) * 2 * dim_);
    std::vector<int> c(dim_);
    for (int x = 0; x < count_; ++x) {
      for (int e = 0; e < 2 * dim_; ++e) {
        for (int a = 0; a < dim_; ++a) c[a] = coord(x, a);
        Direction dir = direction(e);
        c[dir.axis] += dir.sign;
        nbr_[static_cast<std::size_t>(x) * 2 * dim_ + e] = index(c);
      }
    }
    build_scales();
  }

  int dim() const { return dim_; }
  int L() const { return L_; }
  int N() const { return N_; }
  int side() const { return side_; }
  int half() const { return half_; }
  int site_count() const { return count_; }
  int num_directions() const { return 2 * dim_; }

  // Directions 0..d-1 are +e_a, d..2d-1 are -e_a.
  Direction direction(int e) const { return {e % dim_, e < dim_ ? 1 : -1}; }
  int opposite(int e) const { return e < dim_ ? e + dim_ : e - dim_; }

  int wrap(long long c) const {
    long long s = side_;
    long long r = ((c + half_) % s + s) % s;
    return static_cast<int>(r - half_);
  }
  int index(std::span<const int> c) const {
    if (static_cast<int>(c.size()) != dim_) throw GeometryError("coordinate dimension mismatch");
    long long idx = 0;
    for (int a = 0; a < dim_; ++a) idx = idx * side_ + (wrap(c[a]) + half_);
    return static_cast<int>(idx);
  }
  int index(std::initializer_list<int> c) const {
    return index(std::span<const int>(c.begin(), c.size()));
  }
  int coord(int x, int axis) const { return coords_[static_cast<std::size_t>(x) * dim_ + axis]; }
  std::vector<int> coords(int x) const {
    return {coords_.begin() + static_cast<std::ptrdiff_t>(x) * dim_,
            coords_.begin() + static_cast<std::ptrdiff_t>(x + 1) * dim_};
  }
  int neighbor(int x, int e) const { return nbr_[static_cast<std::size_t>(x) * 2 * dim_ + e]; }
  int translate(int x, std::span<const int> v) const {
    std::vector<int> c = coords(x);
    for (int a = 0; a < dim_; ++a) c[a] += v[a];
    return index(c);
  }

  // Signed displacement y - x reduced to the centered window, per axis.
  int displacement(int x, int y, int axis) const { return wrap(coord(y, axis) - coord(x, axis)); }

  int distance(int x, int y) const {
    int d = 0;
    for (int a = 0; a < dim_; ++a) d += std::abs(displacement(x, y, a));
    return d;
  }
  int sup_distance(int x, int y) const {
    int d = 0;
    for (int a = 0; a < dim_; ++a) d = std::max(d, std::abs(displacement(x, y, a)));
    return d;
  }

  long long scale_side(int j) const { return checked_pow(L_, j); }

  int block_count(int j) const { return scale(j).count; }
  int block_of(int x, int j) const { return scale(j).site_block[x]; }
  const std::vector<int>& block_sites(int j, int b) const { return scale(j).sites[b]; }
  // Blocks at scale j touching block b in the sup-norm sense, b itself included.
  const std::vector<int>& block_touching(int j, int b) const { return scale(j).touching[b]; }
  int parent_block(int j, int b) const {
    if (j + 1 > N_) throw GeometryError("scale overflow");
    return scale(j).parent[b];
  }
  int block_center(int j, int b) const { return scale(j).center[b]; }

  SiteSet empty_set() const { return SiteSet(count_); }
  SiteSet full_set() const { return SiteSet(count_).complement(); }

 private:
  struct Scale {
    int count = 0;
    int per_side = 0;
    std::vector<int> site_block;
    std::vector<std::vector<int>> sites;
    std::vector<std::vector<int>> touching;
    std::vector<int> parent;
    std::vector<int> center;
  };

  const Scale& scale(int j) const {
    if (j < 0 || j > N_) throw GeometryError("scale out of range");
    return scales_[j];
  }

  static long long floor_div(long long a, long long b) {
    long long q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
  }

  void build_scales() {
    scales_.resize(N_ + 1);
    for (int j = 0; j <= N_; ++j) {
      Scale& s = scales_[j];
      int bs = static_cast<int>(checked_pow(L_, j));
      s.per_side = static_cast<int>(checked_pow(L_, N_ - j));
      int hb = (s.per_side - 1) / 2;
      s.count = static_cast<int>(checked_pow(s.per_side, dim_));
      s.site_block.resize(count_);
      s.sites.assign(s.count, {});
      std::vector<int> kc(dim_);
      for (int x = 0; x < count_; ++x) {
        long long b = 0;
        for (int a = 0; a < dim_; ++a) {
          long long k = floor_div(coord(x, a) + (bs - 1) / 2, bs);
          b = b * s.per_side + (k + hb);
        }
        s.site_block[x] = static_cast<int>(b);
        s.sites[b].push_back(x);
      }
      s.center.resize(s.count);
      s.touching.assign(s.count, {});
      for (int b = 0; b < s.count; ++b) {
        int r = b;
        for (int a = dim_ - 1; a >= 0; --a) {
          kc[a] = r % s.per_side - hb;
          r /= s.per_side;
        }
        std::vector<int> c(dim_);
        for (int a = 0; a < dim_; ++a) c[a] = kc[a] * bs;
        s.center[b] = index(c);
        // sup-norm neighbours on the block torus
        int total = 1;
        for (int a = 0; a < dim_; ++a) total *= 3;
        std::vector<int> nb;
        for (int t = 0; t < total; ++t) {
          int rr = t;
          long long bb = 0;
          std::vector<int> k2(dim_);
          for (int a = dim_ - 1; a >= 0; --a) {
            int off = rr % 3 - 1;
            rr /= 3;
            int v = kc[a] + off + hb;
            v = ((v % s.per_side) + s.per_side) % s.per_side;
            k2[a] = v;
          }
          for (int a = 0; a < dim_; ++a) bb = bb * s.per_side + k2[a];
          nb.push_back(static_cast<int>(bb));
        }
        std::sort(nb.begin(), nb.end());
        nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
        s.touching[b] = std::move(nb);
      }
    }
    for (int j = 0; j < N_; ++j) {
      Scale& s = scales_[j];
      s.parent.resize(s.count);
      for (int b = 0; b < s.count; ++b) s.parent[b] = scales_[j + 1].site_block[s.center[b]];
    }
  }

  int dim_, L_, N_;
  int side_ = 0, half_ = 0, count_ = 0;
  std::vector<int> coords_;
  std::vector<int> nbr_;
  std::vector<Scale> scales_;
};

inline int torus_distance(const TorusLattice& lat, int x, int y) { return lat.distance(x, y); }

inline double forward_derivative(const TorusLattice& lat, const Field& f, int x, int e) {
  return f[lat.neighbor(x, e)] - f[x];
}

// Sum over x in X and all 2d directions of (d_e f(x))^2.
inline double directed_grad_square(const TorusLattice& lat, const Field& f, const SiteSet& X) {
  double s = 0.0;
  X.for_each([&](int x) {
    for (int e = 0; e < lat.num_directions(); ++e) {
      double g = f[lat.neighbor(x, e)] - f[x];
      s += g * g;
    }
  });
  return s;
}

// The undirected convention: half of the directed sum.
inline double grad_square(const TorusLattice& lat, const Field& f, const SiteSet& X) {
  return 0.5 * directed_grad_square(lat, f, X);
}

// Multi-source BFS graph distance from X (equal to the wrapped L1 distance).
inline std::vector<int> distance_to_set(const TorusLattice& lat, const SiteSet& X) {
  const int inf = std::numeric_limits<int>::max();
  std::vector<int> dist(lat.site_count(), inf);
  std::deque<int> q;
  X.for_each([&](int x) {
    dist[x] = 0;
    q.push_back(x);
  });
  while (!q.empty()) {
    int x = q.front();
    q.pop_front();
    for (int e = 0; e < lat.num_directions(); ++e) {
      int y = lat.neighbor(x, e);
      if (dist[y] == inf) {
        dist[y] = dist[x] + 1;
        q.push_back(y);
      }
    }
  }
  return dist;
}

inline SiteSet dilate(const TorusLattice& lat, const SiteSet& X, int r) {
  SiteSet out(lat.site_count());
  if (X.none()) return out;
  auto dist = distance_to_set(lat, X);
  for (int x = 0; x < lat.site_count(); ++x)
    if (dist[x] <= r) out.set(x);
  return out;
}

inline SiteSet outer_boundary(const TorusLattice& lat, const SiteSet& X) {
  if (X.none()) throw GeometryError("boundary undefined for the empty set");
  if (X.count() == static_cast<std::size_t>(lat.site_count()))
    throw GeometryError("boundary undefined for the whole torus");
  SiteSet out(lat.site_count());
  X.for_each([&](int x) {
    for (int e = 0; e < lat.num_directions(); ++e) {
      int y = lat.neighbor(x, e);
      if (!X.test(y)) out.set(y);
    }
  });
  return out;
}

inline std::vector<SiteSet> blocks_at_scale(const TorusLattice& lat, int j) {
  if (j < 0 || j > lat.N()) throw GeometryError("scale out of range");
  std::vector<SiteSet> out;
  out.reserve(lat.block_count(j));
  for (int b = 0; b < lat.block_count(j); ++b) {
    SiteSet s(lat.site_count());
    for (int x : lat.block_sites(j, b)) s.set(x);
    out.push_back(std::move(s));
  }
  return out;
}

// Cube {y : |y_a - c_a| <= r for all a} around site c.
inline SiteSet cube(const TorusLattice& lat, int c, int r) {
  if (2 * r + 1 > lat.side()) throw GeometryError("cube wraps the torus");
  SiteSet s(lat.site_count());
  for (int y = 0; y < lat.site_count(); ++y)
    if (lat.sup_distance(c, y) <= r) s.set(y);
  return s;
}

inline SiteSet set_from(const TorusLattice& lat, std::span<const int> sites) {
  SiteSet s(lat.site_count());
  for (int x : sites) s.set(x);
  return s;
}

// A real field defined on an explicit subset; reading outside the subset is an error.
class SubsetField {
 public:
  SubsetField(const TorusLattice& lat, SiteSet domain)
      : domain_(std::move(domain)), values_(Field::Zero(lat.site_count())) {}
  SubsetField(SiteSet domain, Field values) : domain_(std::move(domain)), values_(std::move(values)) {}
  const SiteSet& domain() const { return domain_; }
  double at(int x) const {
    if (x < 0 || static_cast<std::size_t>(x) >= domain_.size() || !domain_.test(x))
      throw GeometryError("field lookup outside its domain");
    return values_[x];
  }
  void set(int x, double v) {
    if (!domain_.test(x)) throw GeometryError("field write outside its domain");
    values_[x] = v;
  }
  const Field& values() const { return values_; }

 private:
  SiteSet domain_;
  Field values_;
};

}  // namespace polyrg
