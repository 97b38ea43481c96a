#include "polyrg/polymer.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

using namespace polyrg;

namespace {

struct UnionFind {
  std::vector<int> p;
  explicit UnionFind(int n) : p(n) { std::iota(p.begin(), p.end(), 0); }
  int find(int x) { return p[x] == x ? x : p[x] = find(p[x]); }
  void unite(int a, int b) { p[find(a)] = find(b); }
};

// Number of sup-norm components of a site set, by union-find on the 8-neighbour graph.
int component_count_oracle(const TorusLattice& lat, const SiteSet& s) {
  UnionFind uf(lat.site_count());
  auto idx = s.indices();
  for (int a : idx)
    for (int b : idx)
      if (lat.sup_distance(a, b) <= 1) uf.unite(a, b);
  std::set<int> roots;
  for (int a : idx) roots.insert(uf.find(a));
  return static_cast<int>(roots.size());
}

bool connected_oracle(const std::vector<std::pair<int, int>>& cells) {
  UnionFind uf(static_cast<int>(cells.size()));
  for (std::size_t a = 0; a < cells.size(); ++a)
    for (std::size_t b = 0; b < cells.size(); ++b)
      if (std::max(std::abs(cells[a].first - cells[b].first), std::abs(cells[a].second - cells[b].second)) <= 1)
        uf.unite(static_cast<int>(a), static_cast<int>(b));
  for (std::size_t a = 0; a < cells.size(); ++a)
    if (uf.find(static_cast<int>(a)) != uf.find(0)) return false;
  return true;
}

Polymer sites_polymer(const TorusLattice& lat, std::vector<std::vector<int>> pts) {
  Polymer p(lat, 0);
  for (auto& c : pts) p.blocks().set(lat.index(c));
  return p;
}

}  // namespace

TEST(Polymer, DiagonalPairIsConnected) {
  TorusLattice lat(2, 3, 2);
  auto p = sites_polymer(lat, {{0, 0}, {1, 1}});
  EXPECT_EQ(connected_components(p).size(), 1u);
  EXPECT_TRUE(is_connected(p));
  auto q = sites_polymer(lat, {{0, 0}, {2, 0}});
  EXPECT_EQ(connected_components(q).size(), 2u);
}

TEST(Polymer, ComponentsMatchUnionFind) {
  TorusLattice lat(2, 3, 2);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<int> all(lat.site_count());
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng);
    Polymer p(lat, 0);
    for (int k = 0; k < 40; ++k) p.blocks().set(all[k]);
    auto comps = connected_components(p);
    ASSERT_EQ(static_cast<int>(comps.size()), component_count_oracle(lat, p.sites()));
    Bitset u(lat.site_count());
    for (auto& c : comps) {
      EXPECT_FALSE(u.intersects(c.blocks()));
      u |= c.blocks();
      EXPECT_TRUE(is_connected(c));
    }
    EXPECT_EQ(u, p.blocks());
    EXPECT_TRUE(family_strictly_disjoint(comps));
  }
}

TEST(Polymer, BlockLevelComponents) {
  TorusLattice lat(2, 3, 3);
  int b1 = lat.block_of(lat.index({0, 0}), 1);
  int b2 = lat.block_of(lat.index({6, 0}), 1);
  int b3 = lat.block_of(lat.index({3, 3}), 1);
  EXPECT_EQ(connected_components(Polymer::from_blocks(lat, 1, {b1, b2})).size(), 2u);
  EXPECT_EQ(connected_components(Polymer::from_blocks(lat, 1, {b1, b3})).size(), 1u);
}

TEST(Polymer, Smallness) {
  TorusLattice lat(2, 3, 2);
  EXPECT_TRUE(is_small(sites_polymer(lat, {{0, 0}})));
  auto five = sites_polymer(lat, {{0, 0}, {1, 0}, {2, 0}, {3, 0}, {4, 0}});
  EXPECT_TRUE(is_connected(five));
  EXPECT_FALSE(is_small(five));
  EXPECT_FALSE(is_small(sites_polymer(lat, {{0, 0}, {3, 0}})));
}

TEST(Polymer, SmallPolymerCountMatchesBruteForce) {
  TorusLattice lat(2, 3, 3);  // 27 x 27, wrap irrelevant for size <= 4
  int b0 = lat.index({0, 0});
  auto smalls = small_polymers_containing(lat, 0, b0);
  // brute force over subsets of the 7x7 window containing the origin
  std::vector<std::pair<int, int>> window;
  for (int u = -3; u <= 3; ++u)
    for (int v = -3; v <= 3; ++v)
      if (u || v) window.push_back({u, v});
  long long count = 1;  // the single cell
  int n = static_cast<int>(window.size());
  for (int a = 0; a < n; ++a) {
    if (connected_oracle({{0, 0}, window[a]})) ++count;
    for (int b = a + 1; b < n; ++b) {
      if (connected_oracle({{0, 0}, window[a], window[b]})) ++count;
      for (int c = b + 1; c < n; ++c)
        if (connected_oracle({{0, 0}, window[a], window[b], window[c]})) ++count;
    }
  }
  EXPECT_EQ(static_cast<long long>(smalls.size()), count);
  EXPECT_EQ(count, 509);
  for (auto& p : smalls) EXPECT_TRUE(is_small(p));
}

TEST(Polymer, Closure) {
  TorusLattice lat(2, 3, 2);
  auto one = sites_polymer(lat, {{0, 0}});
  auto c = closure(one);
  EXPECT_EQ(c.size(), 1);
  EXPECT_TRUE(c.contains_block(lat.block_of(lat.index({0, 0}), 1)));
  auto blk = Polymer::covering(lat, 0, c.sites());
  EXPECT_EQ(closure(blk), c);
  auto straddle = sites_polymer(lat, {{1, 0}, {2, 0}});
  auto cs = closure(straddle);
  EXPECT_EQ(cs.size(), 2);
  // scan of block membership
  Polymer scan(lat, 1);
  straddle.blocks().for_each([&](int x) { scan.blocks().set(lat.block_of(x, 1)); });
  EXPECT_EQ(cs, scan);
  EXPECT_THROW(closure(Polymer::whole(lat, 2)), GeometryError);
}

TEST(Polymer, ClosureMonotone) {
  TorusLattice lat(2, 3, 2);
  std::mt19937_64 rng(9);
  for (int t = 0; t < 50; ++t) {
    Polymer a(lat, 0), b(lat, 0);
    for (int x = 0; x < lat.site_count(); ++x) {
      bool in = rng() % 6 == 0;
      if (in) a.blocks().set(x);
      if (in || rng() % 4 == 0) b.blocks().set(x);
    }
    EXPECT_TRUE(closure(a).subset_of(closure(b)));
  }
}

TEST(Polymer, NeighborhoodsScaleZero) {
  TorusLattice lat(2, 3, 2);
  auto X = sites_polymer(lat, {{0, 0}, {1, 1}});
  auto nb = neighborhoods(X);
  EXPECT_EQ(nb.hat, X);
  EXPECT_EQ(nb.plus, X.sites());
  EXPECT_EQ(nb.ddot, X.sites());
  EXPECT_EQ(nb.dot, X.sites());
}

TEST(Polymer, NeighborhoodsOneBlock) {
  for (int L : {3, 5}) {
    TorusLattice lat(2, L, 2);
    Polymer X = Polymer::from_blocks(lat, 1, {lat.block_of(lat.index({0, 0}), 1)});
    auto nb = neighborhoods(X);
    SiteSet s = X.sites();
    EXPECT_EQ(nb.dot, s);
    EXPECT_EQ(nb.ddot, s);
    auto dist = distance_to_set(lat, s);
    for (int y = 0; y < lat.site_count(); ++y) EXPECT_EQ(nb.plus.test(y), dist[y] <= 1);
    EXPECT_EQ(nb.hat.size(), 9);
  }
}

TEST(Polymer, NeighborhoodChainExhaustive) {
  TorusLattice lat(2, 5, 2);
  std::set<Polymer> all;
  for (int b = 0; b < lat.block_count(1); ++b)
    for (auto& p : small_polymers_containing(lat, 1, b)) all.insert(p);
  for (auto& X : all) {
    auto nb = neighborhoods(X);
    SiteSet xs = X.sites();
    ASSERT_TRUE(xs.subset_of(nb.dot));
    ASSERT_TRUE(nb.dot.subset_of(nb.ddot));
    ASSERT_TRUE(nb.ddot.subset_of(nb.plus));
    ASSERT_TRUE(nb.plus.subset_of(nb.hat.sites()));
    auto ab = angle_bracket(X);
    ASSERT_TRUE(nb.hat.subset_of(ab));
  }
}

TEST(Polymer, AngleBracket) {
  TorusLattice lat(2, 3, 4);
  EXPECT_TRUE(angle_bracket(Polymer(lat, 1)).empty());
  int b0 = lat.block_of(lat.index({0, 0}), 1);
  Polymer X = Polymer::from_blocks(lat, 1, {b0});
  // direct scan: B qualifies iff its parent comes within distance 9/3 of hat(X)
  auto xh = hat(X).sites().indices();
  std::vector<int> parent_ok(lat.block_count(2), -1);
  Polymer expect(lat, 1);
  for (int b = 0; b < lat.block_count(1); ++b) {
    int p = lat.parent_block(1, b);
    if (parent_ok[p] < 0) {
      parent_ok[p] = 0;
      for (int x : lat.block_sites(2, p))
        for (int y : xh)
          if (3 * lat.distance(x, y) <= 9) parent_ok[p] = 1;
    }
    if (parent_ok[p]) expect.blocks().set(b);
  }
  EXPECT_EQ(angle_bracket(X), expect);
  EXPECT_EQ(angle_bracket(X).size(), 81);
}

TEST(Polymer, GeometricCounting) {
  TorusLattice lat(2, 5, 2);
  double min_ratio = 1e300;
  int b0 = lat.block_of(lat.index({0, 0}), 1);
  for (auto& X : connected_polymers_containing(lat, 1, b0, 6)) {
    int cl = closure(X).size();
    EXPECT_GE(X.size(), cl);
    if (!is_small(X)) min_ratio = std::min(min_ratio, static_cast<double>(X.size()) / cl);
  }
  EXPECT_GT(min_ratio, 1.0);
}

TEST(Polymer, ReblockingConfigCountMatchesClosedForm) {
  // On the 3x3 torus every nonempty X has <X> = everything, so the number of
  // configurations is sum_k C(9,k) w(k) 2^(9-k) with w = k for small X and 1
  // otherwise, the k = 0 term excluding the all-empty configuration.
  TorusLattice lat(2, 3, 1);
  Polymer V = Polymer::whole(lat, 1);
  ReblockEnumOptions opt;
  std::size_t n = enumerate_reblocking_configs(V, opt, [](const ReblockConfig&) {});
  long long oracle = (1 << 9) - 1;
  long long binom = 1;
  for (int k = 1; k <= 9; ++k) {
    binom = binom * (10 - k) / k;
    long long w = k <= 4 ? k : 1;
    oracle += binom * w * (1LL << (9 - k));
  }
  EXPECT_EQ(static_cast<long long>(n), oracle);
}

TEST(Polymer, ReblockingEmptyActivityConfigs) {
  TorusLattice lat(2, 3, 1);
  Polymer V = Polymer::whole(lat, 1);
  std::vector<Polymer> none;
  ReblockEnumOptions opt;
  opt.support = &none;
  std::size_t n = enumerate_reblocking_configs(V, opt, [](const ReblockConfig& c) {
    EXPECT_TRUE(c.large.empty());
    EXPECT_TRUE(c.small.empty());
  });
  EXPECT_EQ(n, (1u << 9) - 1);
}
