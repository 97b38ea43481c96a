#pragma once

#include "polyrg/lattice.hpp"

#include <map>
#include <set>
#include <unordered_set>
#include <utility>

namespace polyrg {

class EnumerationBudgetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A union of j-blocks.
class Polymer {
 public:
  Polymer(const TorusLattice& lat, int j) : lat_(&lat), j_(j), blocks_(lat.block_count(j)) {}
  Polymer(const TorusLattice& lat, int j, Bitset blocks) : lat_(&lat), j_(j), blocks_(std::move(blocks)) {
    if (blocks_.size() != static_cast<std::size_t>(lat.block_count(j)))
      throw GeometryError("block bitset size mismatch");
  }

  static Polymer from_blocks(const TorusLattice& lat, int j, std::span<const int> bs) {
    Polymer p(lat, j);
    for (int b : bs) p.blocks_.set(b);
    return p;
  }
  static Polymer from_blocks(const TorusLattice& lat, int j, std::initializer_list<int> bs) {
    return from_blocks(lat, j, std::span<const int>(bs.begin(), bs.size()));
  }
  // Smallest j-polymer containing the site set.
  static Polymer covering(const TorusLattice& lat, int j, const SiteSet& s) {
    Polymer p(lat, j);
    s.for_each([&](int x) { p.blocks_.set(lat.block_of(x, j)); });
    return p;
  }
  static Polymer whole(const TorusLattice& lat, int j) {
    return Polymer(lat, j, Bitset(lat.block_count(j)).complement());
  }

  const TorusLattice& lattice() const { return *lat_; }
  int scale() const { return j_; }
  const Bitset& blocks() const { return blocks_; }
  Bitset& blocks() { return blocks_; }
  int size() const { return static_cast<int>(blocks_.count()); }
  bool empty() const { return blocks_.none(); }
  bool contains_block(int b) const { return blocks_.test(b); }
  long long site_count() const { return size() * checked_pow(lat_->L(), lat_->dim() * j_); }

  SiteSet sites() const {
    SiteSet s(lat_->site_count());
    blocks_.for_each([&](int b) {
      for (int x : lat_->block_sites(j_, b)) s.set(x);
    });
    return s;
  }

  Polymer operator|(const Polymer& o) const { return {*lat_, j_, blocks_ | same(o).blocks_}; }
  Polymer operator&(const Polymer& o) const { return {*lat_, j_, blocks_ & same(o).blocks_}; }
  Polymer operator-(const Polymer& o) const { return {*lat_, j_, blocks_ - same(o).blocks_}; }
  Polymer complement() const { return {*lat_, j_, blocks_.complement()}; }
  bool subset_of(const Polymer& o) const { return blocks_.subset_of(same(o).blocks_); }
  bool operator==(const Polymer& o) const { return j_ == o.j_ && blocks_ == o.blocks_; }
  bool operator<(const Polymer& o) const { return j_ != o.j_ ? j_ < o.j_ : blocks_ < o.blocks_; }

 private:
  const Polymer& same(const Polymer& o) const {
    if (o.j_ != j_ || o.lat_ != lat_) throw GeometryError("polymer scale or lattice mismatch");
    return o;
  }
  const TorusLattice* lat_;
  int j_;
  Bitset blocks_;
};

// Components under sup-norm adjacency of sites; at block level this is
// adjacency of block coordinates on the block torus.
inline std::vector<Polymer> connected_components(const Polymer& X) {
  const auto& lat = X.lattice();
  int j = X.scale();
  std::vector<Polymer> out;
  Bitset seen(lat.block_count(j));
  X.blocks().for_each([&](int b0) {
    if (seen.test(b0)) return;
    Polymer comp(lat, j);
    std::vector<int> stack{b0};
    seen.set(b0);
    while (!stack.empty()) {
      int b = stack.back();
      stack.pop_back();
      comp.blocks().set(b);
      for (int nb : lat.block_touching(j, b))
        if (X.contains_block(nb) && !seen.test(nb)) {
          seen.set(nb);
          stack.push_back(nb);
        }
    }
    out.push_back(std::move(comp));
  });
  return out;
}

inline bool is_connected(const Polymer& X) {
  if (X.empty()) return false;
  return connected_components(X).size() == 1;
}

inline bool is_small(const Polymer& X) {
  return is_connected(X) && X.size() <= (1 << X.lattice().dim());
}

// Sup-norm touching (the closed dilation by one block meets the other set).
inline bool touches(const Polymer& X, const Polymer& Y) {
  const auto& lat = X.lattice();
  bool t = false;
  X.blocks().for_each([&](int b) {
    if (t) return;
    for (int nb : lat.block_touching(X.scale(), b))
      if (Y.contains_block(nb)) {
        t = true;
        return;
      }
  });
  return t;
}

inline bool strictly_disjoint(const Polymer& X, const Polymer& Y) { return !touches(X, Y); }

inline bool family_strictly_disjoint(const std::vector<Polymer>& fam) {
  for (std::size_t a = 0; a < fam.size(); ++a)
    for (std::size_t b = a + 1; b < fam.size(); ++b)
      if (touches(fam[a], fam[b])) return false;
  return true;
}

inline Polymer closure(const Polymer& X) {
  const auto& lat = X.lattice();
  int j = X.scale();
  if (j + 1 > lat.N()) throw GeometryError("closure: scale overflow");
  Polymer out(lat, j + 1);
  X.blocks().for_each([&](int b) { out.blocks().set(lat.parent_block(j, b)); });
  return out;
}

// Union of j-blocks touching X; equal to X at scale 0.
inline Polymer hat(const Polymer& X) {
  if (X.scale() == 0) return X;
  const auto& lat = X.lattice();
  Polymer out(lat, X.scale());
  X.blocks().for_each([&](int b) {
    for (int nb : lat.block_touching(X.scale(), b)) out.blocks().set(nb);
  });
  return out;
}

// {x : d(x, X) <= L^j / k}, compared as k * d <= L^j; X itself at scale 0.
inline SiteSet fractional_neighborhood(const Polymer& X, int k) {
  SiteSet s = X.sites();
  if (X.scale() == 0 || X.empty()) return s;
  const auto& lat = X.lattice();
  long long Lj = lat.scale_side(X.scale());
  auto dist = distance_to_set(lat, s);
  SiteSet out(lat.site_count());
  for (int x = 0; x < lat.site_count(); ++x)
    if (static_cast<long long>(k) * dist[x] <= Lj) out.set(x);
  return out;
}

inline SiteSet plus_set(const Polymer& X) { return fractional_neighborhood(X, 3); }
inline SiteSet ddot_set(const Polymer& X) { return fractional_neighborhood(X, 6); }
inline SiteSet dot_set(const Polymer& X) { return fractional_neighborhood(X, 12); }

struct Neighborhoods {
  Polymer hat;
  SiteSet plus;
  SiteSet ddot;
  SiteSet dot;
};

inline Neighborhoods neighborhoods(const Polymer& X) {
  return {hat(X), plus_set(X), ddot_set(X), dot_set(X)};
}

// Union of j-blocks B whose closure's plus-neighbourhood (at scale j+1) meets hat(X).
inline Polymer angle_bracket(const Polymer& X) {
  const auto& lat = X.lattice();
  int j = X.scale();
  if (j + 1 > lat.N()) throw GeometryError("angle bracket: scale overflow");
  Polymer out(lat, j);
  if (X.empty()) return out;
  SiteSet xh = hat(X).sites();
  std::vector<int> parent_hit(lat.block_count(j + 1), -1);
  for (int b = 0; b < lat.block_count(j); ++b) {
    int p = lat.parent_block(j, b);
    if (parent_hit[p] < 0) {
      Polymer D = Polymer::from_blocks(lat, j + 1, {p});
      parent_hit[p] = plus_set(D).intersects(xh) ? 1 : 0;
    }
    if (parent_hit[p]) out.blocks().set(b);
  }
  return out;
}

// Connected polymers containing block b0 with at most max_blocks blocks.
inline std::vector<Polymer> connected_polymers_containing(const TorusLattice& lat, int j, int b0,
                                                          int max_blocks) {
  std::set<Bitset> seen;
  std::vector<Polymer> out;
  std::vector<Bitset> frontier;
  Bitset start(lat.block_count(j));
  start.set(b0);
  frontier.push_back(start);
  seen.insert(start);
  while (!frontier.empty()) {
    std::vector<Bitset> next;
    for (const auto& s : frontier) {
      out.emplace_back(lat, j, s);
      if (static_cast<int>(s.count()) >= max_blocks) continue;
      s.for_each([&](int b) {
        for (int nb : lat.block_touching(j, b)) {
          if (s.test(nb)) continue;
          Bitset t = s;
          t.set(nb);
          if (seen.insert(t).second) next.push_back(t);
        }
      });
    }
    frontier = std::move(next);
  }
  return out;
}

inline std::vector<Polymer> small_polymers_containing(const TorusLattice& lat, int j, int b0) {
  return connected_polymers_containing(lat, j, b0, 1 << lat.dim());
}

// All connected polymers whose blocks lie inside `within` (exhaustive; |within| <= 24).
inline std::vector<Polymer> connected_polymers_within(const Polymer& within) {
  auto idx = within.blocks().indices();
  if (idx.size() > 24) throw EnumerationBudgetError("too many blocks for exhaustive enumeration");
  std::vector<Polymer> out;
  const auto& lat = within.lattice();
  for (unsigned long long mask = 1; mask < (1ULL << idx.size()); ++mask) {
    Polymer p(lat, within.scale());
    for (std::size_t k = 0; k < idx.size(); ++k)
      if (mask >> k & 1ULL) p.blocks().set(idx[k]);
    if (is_connected(p)) out.push_back(std::move(p));
  }
  return out;
}

struct SmallPair {
  int block;
  Polymer Y;
};

// One term of the scale-(j+1) resummation: families of large and small
// polymers (X = their union), corridor sets P, Q, Z, and V = closure of
// P u Q u Z u {B_i} u X_large.
struct ReblockConfig {
  std::vector<Polymer> large;
  std::vector<SmallPair> small;
  Bitset X, X_hat, X_angle;  // scale j
  Bitset P, Q, Z;            // scale j
  Bitset V;                  // scale j+1
};

struct ReblockEnumOptions {
  std::size_t budget = 200'000'000;
  // Connected polymers on which the activity may be nonzero; nullptr means all.
  const std::vector<Polymer>* support = nullptr;
};

namespace detail {

inline std::vector<Polymer> reblock_candidates(const Polymer& U, const ReblockEnumOptions& opt) {
  const auto& lat = U.lattice();
  int j = U.scale() - 1;
  int smax = 1 << lat.dim();
  Polymer Uj(lat, j);
  for (int b = 0; b < lat.block_count(j); ++b)
    if (U.contains_block(lat.parent_block(j, b))) Uj.blocks().set(b);
  std::vector<Polymer> raw;
  if (opt.support) {
    raw = *opt.support;
  } else {
    std::set<Polymer> acc;
    for (auto& p : connected_polymers_within(Uj)) acc.insert(p);
    Uj.blocks().for_each([&](int b) {
      for (auto& p : small_polymers_containing(lat, j, b)) acc.insert(p);
    });
    raw.assign(acc.begin(), acc.end());
  }
  std::vector<Polymer> out;
  for (auto& p : raw) {
    if (p.scale() != j) throw GeometryError("support polymer has the wrong scale");
    if (!is_connected(p)) throw GeometryError("support polymers must be connected");
    bool small = p.size() <= smax;
    if (small ? p.blocks().intersects(Uj.blocks()) : p.subset_of(Uj)) out.push_back(p);
  }
  return out;
}

}  // namespace detail

// Visits every configuration whose V is a nonempty subset of the (j+1)-polymer U.
// Returns the number of visited configurations.
template <class Visit>
std::size_t enumerate_configs_within(const Polymer& U, const ReblockEnumOptions& opt, Visit&& visit) {
  const auto& lat = U.lattice();
  const int j = U.scale() - 1;
  if (j < 0) throw GeometryError("reblocking needs a target scale >= 1");
  const int smax = 1 << lat.dim();
  const int nb = lat.block_count(j);
  Bitset Uj(nb);
  for (int b = 0; b < nb; ++b)
    if (U.contains_block(lat.parent_block(j, b))) Uj.set(b);

  auto cands = detail::reblock_candidates(U, opt);
  std::size_t visited = 0;
  ReblockConfig cfg{{}, {}, Bitset(nb), Bitset(nb), Bitset(nb), Bitset(nb), Bitset(nb), Bitset(nb),
                    Bitset(lat.block_count(j + 1))};

  std::vector<int> chosen;
  auto process_family = [&]() {
    cfg.large.clear();
    cfg.small.clear();
    Polymer X(lat, j);
    std::vector<const Polymer*> smalls;
    for (int c : chosen) {
      X.blocks() |= cands[c].blocks();
      if (cands[c].size() > smax)
        cfg.large.push_back(cands[c]);
      else
        smalls.push_back(&cands[c]);
    }
    cfg.X = X.blocks();
    cfg.X_hat = hat(X).blocks();
    cfg.X_angle = X.empty() ? Bitset(nb) : angle_bracket(X).blocks();
    Bitset base_V(lat.block_count(j + 1));
    for (auto& p : cfg.large) p.blocks().for_each([&](int b) { base_V.set(lat.parent_block(j, b)); });
    std::vector<int> free = (Uj - cfg.X).indices();
    if (free.size() > 40) throw EnumerationBudgetError("corridor enumeration too large");
    const Bitset corr_P = cfg.X_hat - cfg.X;
    const Bitset corr_Q = cfg.X_angle - cfg.X_hat;

    // choices of B for each small member (B must lie in U)
    std::vector<std::vector<int>> bchoices;
    for (auto* s : smalls) bchoices.push_back((s->blocks() & Uj).indices());
    std::vector<std::size_t> pick(smalls.size(), 0);
    while (true) {
      cfg.small.clear();
      Bitset V0 = base_V;
      for (std::size_t k = 0; k < smalls.size(); ++k) {
        int b = bchoices[k][pick[k]];
        cfg.small.push_back({b, *smalls[k]});
        V0.set(lat.parent_block(j, b));
      }
      const unsigned long long nsub = 1ULL << free.size();
      for (unsigned long long mask = 0; mask < nsub; ++mask) {
        Bitset W(nb);
        cfg.V = V0;
        for (std::size_t k = 0; k < free.size(); ++k)
          if (mask >> k & 1ULL) {
            W.set(free[k]);
            cfg.V.set(lat.parent_block(j, free[k]));
          }
        if (cfg.V.none()) continue;
        cfg.P = W & corr_P;
        cfg.Q = W & corr_Q;
        cfg.Z = W - cfg.X_angle;
        if (++visited > opt.budget) throw EnumerationBudgetError("reblocking enumeration budget exceeded");
        visit(static_cast<const ReblockConfig&>(cfg));
      }
      std::size_t k = 0;
      while (k < pick.size() && ++pick[k] == bchoices[k].size()) pick[k++] = 0;
      if (k == pick.size()) break;
    }
  };

  // families of pairwise strictly disjoint candidates
  std::function<void(std::size_t)> rec = [&](std::size_t start) {
    process_family();
    for (std::size_t c = start; c < cands.size(); ++c) {
      bool ok = true;
      for (int o : chosen)
        if (touches(cands[o], cands[c])) {
          ok = false;
          break;
        }
      if (!ok) continue;
      chosen.push_back(static_cast<int>(c));
      rec(c + 1);
      chosen.pop_back();
    }
  };
  rec(0);
  return visited;
}

// Configurations (P, Q, Z, large family, small pairs) whose closure is exactly V.
template <class Visit>
std::size_t enumerate_reblocking_configs(const Polymer& V, const ReblockEnumOptions& opt, Visit&& visit) {
  std::size_t n = 0;
  if (V.empty()) return 0;
  enumerate_configs_within(V, opt, [&](const ReblockConfig& c) {
    if (c.V == V.blocks()) {
      ++n;
      visit(c);
    }
  });
  return n;
}

}  // namespace polyrg
