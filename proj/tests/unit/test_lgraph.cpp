#include <doctest.h>

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "chaoslab/lgraph.hpp"

using namespace chaoslab;

namespace {

VSet S(std::initializer_list<int> one_based) {
  VSet s = 0;
  for (int v : one_based) s |= static_cast<VSet>(1u << (v - 1));
  return s;
}

LGraph G(int k, std::vector<Edge> edges) {
  LGraph g{k, std::move(edges)};
  g.normalize();
  return g;
}

std::map<LGraph, long long> gamma_map(int k, int m) {
  std::map<LGraph, long long> out;
  for (const auto& c : enumerate(k, m)) out[c.graph] = c.gamma;
  return out;
}

// Product-rule expansion of round^m(Phi^k) on multisets of connected components. Round on a
// product distributes over factors and adds twice the straight edge between each pair.
std::map<LGraph, long long> leibniz_expansion(int k, int m) {
  using Term = std::vector<LGraph>;
  std::map<Term, long long> terms;
  terms[Term(k, LGraph{1, {}})] = 1;
  for (int step = 0; step < m; ++step) {
    std::map<Term, long long> next;
    for (const auto& [t, c] : terms) {
      for (std::size_t i = 0; i < t.size(); ++i) {
        Term u = t;
        const VSet all = static_cast<VSet>((1u << u[i].k) - 1);
        u[i].edges.push_back(make_edge(all, all));
        u[i].normalize();
        u[i] = canonical_form(u[i]);
        std::sort(u.begin(), u.end());
        next[u] += c;
      }
      for (std::size_t i = 0; i < t.size(); ++i)
        for (std::size_t j = i + 1; j < t.size(); ++j) {
          LGraph joined = disjoint_union(t[i], t[j]);
          const VSet a = static_cast<VSet>((1u << t[i].k) - 1);
          const VSet b = static_cast<VSet>(((1u << t[j].k) - 1) << t[i].k);
          joined.edges.push_back(make_edge(a, b));
          joined.normalize();
          Term u;
          for (std::size_t r = 0; r < t.size(); ++r)
            if (r != i && r != j) u.push_back(t[r]);
          u.push_back(canonical_form(joined));
          std::sort(u.begin(), u.end());
          next[u] += 2 * c;
        }
    }
    terms = std::move(next);
  }
  std::map<LGraph, long long> out;
  for (const auto& [t, c] : terms) {
    LGraph g{0, {}};
    for (const auto& comp : t) g = disjoint_union(g, comp);
    out[canonical_form(g)] += c;
  }
  return out;
}

// All valid irreducible L-graphs with k vertices and m edges, by brute force over edge multisets.
std::set<LGraph> brute_force_irreducible(int k, int m) {
  std::vector<Edge> kinds;
  const int full = 1 << k;
  for (int a = 1; a < full; ++a) kinds.push_back(Edge{static_cast<VSet>(a), static_cast<VSet>(a)});
  for (int a = 1; a < full; ++a)
    for (int b = a + 1; b < full; ++b)
      if ((a & b) == 0) kinds.push_back(Edge{static_cast<VSet>(a), static_cast<VSet>(b)});
  std::set<LGraph> out;
  std::vector<int> idx(m, 0);
  std::function<void(int, int)> rec = [&](int pos, int start) {
    if (pos == m) {
      LGraph g{k, {}};
      for (int i : idx) g.edges.push_back(kinds[i]);
      g.normalize();
      if (!validate(g) && is_irreducible(g)) out.insert(canonical_form(g));
      return;
    }
    for (int i = start; i < static_cast<int>(kinds.size()); ++i) {
      idx[pos] = i;
      rec(pos + 1, i);
    }
  };
  rec(0, 0);
  return out;
}

}  // namespace

TEST_CASE("validate") {
  CHECK_FALSE(validate(G(2, {make_edge(S({1}), S({2}))})));
  auto dup = validate(G(2, {make_edge(S({1}), S({2})), make_edge(S({1}), S({2}))}));
  REQUIRE(dup);
  CHECK(dup->property == 2);
  auto twice = validate(G(3, {make_edge(S({1}), S({2})), make_edge(S({1}), S({3}))}));
  REQUIRE(twice);
  CHECK(twice->property == 2);
  auto overlap = validate(G(3, {make_edge(S({1, 2}), S({2, 3}))}));
  REQUIRE(overlap);
  CHECK(overlap->property == 1);
  // {1} sits strictly inside the end {1,2} but is joined to {3}
  auto nest = validate(G(3, {make_edge(S({1, 2}), S({1, 2})), make_edge(S({1}), S({3}))}));
  REQUIRE(nest);
  CHECK(nest->property == 3);
  // repeated round edges are allowed
  CHECK_FALSE(validate(G(1, {make_edge(S({1}), S({1})), make_edge(S({1}), S({1}))})));
}

TEST_CASE("connectivity and irreducibility") {
  auto pair = G(2, {make_edge(S({1}), S({2}))});
  CHECK(is_connected(pair));
  CHECK(is_irreducible(pair));

  auto reducible = G(3, {make_edge(S({1, 2}), S({1, 2})), make_edge(S({3}), S({1, 2}))});
  CHECK_FALSE(validate(reducible));
  CHECK(is_connected(reducible));
  CHECK_FALSE(is_irreducible(reducible));

  auto cubic = G(3, {make_edge(S({1}), S({2})), make_edge(S({3}), S({1, 2}))});
  CHECK(is_connected(cubic));
  CHECK(is_irreducible(cubic));

  CHECK_FALSE(is_connected(G(2, {})));
  CHECK(is_connected(G(1, {})));
  CHECK_THROWS(is_irreducible(G(3, {make_edge(S({1}), S({2})), make_edge(S({1}), S({3}))})));
}

TEST_CASE("published coefficients") {
  auto g11 = enumerate(1, 1);
  REQUIRE(g11.size() == 1);
  CHECK(g11[0].gamma == 1);

  auto c21 = enumerate_connected(2, 1);
  REQUIRE(c21.size() == 1);
  CHECK(c21[0].gamma == 2);
  CHECK(c21[0].graph == canonical_form(G(2, {make_edge(S({1}), S({2}))})));

  auto c32 = enumerate_connected(3, 2);
  REQUIRE(c32.size() == 1);
  CHECK(c32[0].gamma == 12);
  CHECK(c32[0].graph == canonical_form(G(3, {make_edge(S({1}), S({2})), make_edge(S({3}), S({1, 2}))})));

  auto c22 = enumerate_connected(2, 2);
  REQUIRE(c22.size() == 2);
  std::multiset<long long> gammas{c22[0].gamma, c22[1].gamma};
  CHECK(gammas == std::multiset<long long>{2, 4});
  auto loop_then_join = canonical_form(G(2, {make_edge(S({1}), S({1})), make_edge(S({1}), S({2}))}));
  auto join_then_loop = canonical_form(G(2, {make_edge(S({1}), S({2})), make_edge(S({1, 2}), S({1, 2}))}));
  CHECK(gamma_of(loop_then_join) == 4);
  CHECK(gamma_of(join_then_loop) == 2);

  // variance and third cumulant prefactors in powers of 1/(2N)
  CHECK(c21[0].gamma == 2);    // 1/N = 2/(2N)
  CHECK(c32[0].gamma == 12);   // 3/N^2 = 12/(2N)^2

  for (int m = 1; m <= 7; ++m) {
    auto c = enumerate_connected(1, m);
    REQUIRE(c.size() == 1);
    CHECK(c[0].gamma == 1);
    CHECK(c[0].RE == m);
  }
  for (int k = 1; k <= 8; ++k)
    for (int m = 0; m < k - 1 && k + m <= 8; ++m) CHECK(enumerate_connected(k, m).empty());

  CHECK_THROWS(enumerate(5, 4));
}

TEST_CASE("enumerated graphs are valid and irreducible") {
  for (int k = 1; k <= 8; ++k)
    for (int m = 0; k + m <= 8; ++m)
      for (const auto& c : enumerate(k, m)) {
        CHECK_FALSE(validate(c.graph));
        CHECK(c.irreducible);
        CHECK(c.gamma == (1LL << c.SE) * c.N);
        CHECK(c.gamma > 0);
      }
}

TEST_CASE("insertion process reaches every irreducible L-graph") {
  for (int k = 1; k <= 7; ++k)
    for (int m = 0; k + m <= 8; ++m) {
      std::set<LGraph> process;
      for (const auto& c : enumerate(k, m)) process.insert(c.graph);
      auto brute = brute_force_irreducible(k, m);
      CHECK_MESSAGE(process == brute, "k=", k, " m=", m, " process=", process.size(), " brute=", brute.size());
    }
}

TEST_CASE("gamma agrees with the product-rule expansion") {
  for (int k = 1; k <= 4; ++k)
    for (int m = 0; m <= 4 && k + m <= 8; ++m) CHECK(leibniz_expansion(k, m) == gamma_map(k, m));
}

TEST_CASE("gamma decomposition identity") {
  auto two_pairs = canonical_form(G(4, {make_edge(S({1}), S({2})), make_edge(S({3}), S({4}))}));
  CHECK(gamma_of(two_pairs) == 24);
  CHECK(gamma_decomposition_check(two_pairs));
  for (int k = 1; k <= 7; ++k)
    for (int m = 0; k + m <= 7; ++m)
      for (const auto& c : enumerate(k, m)) CHECK_MESSAGE(gamma_decomposition_check(c.graph), to_string(c.graph));
}

TEST_CASE("canonical form") {
  auto a = G(2, {make_edge(S({1}), S({2})), make_edge(S({1}), S({1}))});
  auto b = G(2, {make_edge(S({2}), S({1})), make_edge(S({2}), S({2}))});
  CHECK(canonical_form(a) == canonical_form(b));

  std::mt19937_64 gen(1);
  for (int k = 2; k <= 6; ++k)
    for (int m = 1; k + m <= 8; ++m)
      for (const auto& c : enumerate(k, m))
        for (int trial = 0; trial < 20; ++trial) {
          std::vector<int> perm(k);
          std::iota(perm.begin(), perm.end(), 0);
          std::shuffle(perm.begin(), perm.end(), gen);
          LGraph r{k, {}};
          for (const auto& e : c.graph.edges) {
            VSet x = 0, y = 0;
            for (int v = 0; v < k; ++v) {
              if (e.a & (1u << v)) x |= static_cast<VSet>(1u << perm[v]);
              if (e.b & (1u << v)) y |= static_cast<VSet>(1u << perm[v]);
            }
            r.edges.push_back(make_edge(x, y));
          }
          r.normalize();
          CHECK(canonical_form(r) == c.graph);
        }
}
