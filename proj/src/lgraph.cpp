#include "chaoslab/lgraph.hpp"

#include <algorithm>
#include <bit>
#include <functional>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "chaoslab/partitions.hpp"

namespace chaoslab {

namespace {

bool subset(VSet x, VSet y) { return (x & ~y) == 0; }
bool strict_subset(VSet x, VSet y) { return x != y && subset(x, y); }

VSet permute_set(VSet s, const std::vector<int>& perm) {
  VSet out = 0;
  for (int v = 0; s; ++v, s >>= 1)
    if (s & 1) out |= static_cast<VSet>(1u << perm[v]);
  return out;
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); }
  void unite(int x, int y) { parent[find(x)] = find(y); }
};

// Connectivity of (S, F) where F lists edges with both ends inside S.
bool connected_on(VSet s, const std::vector<Edge>& f, int k) {
  if (s == 0) return true;
  UnionFind uf(k);
  for (const auto& e : f) {
    const VSet u = e.a | e.b;
    const int first = std::countr_zero(static_cast<unsigned>(u));
    for (int v = 0; v < k; ++v)
      if (u & (1u << v)) uf.unite(v, first);
  }
  int root = -1;
  for (int v = 0; v < k; ++v)
    if (s & (1u << v)) {
      if (root < 0) root = uf.find(v);
      else if (uf.find(v) != root) return false;
    }
  return true;
}

}  // namespace

Edge make_edge(VSet x, VSet y) { return x <= y ? Edge{x, y} : Edge{y, x}; }

void LGraph::normalize() {
  for (auto& e : edges) e = make_edge(e.a, e.b);
  std::sort(edges.begin(), edges.end());
}

std::optional<Violation> validate(const LGraph& g) {
  const VSet all = static_cast<VSet>((1u << g.k) - 1);
  for (int i = 0; i < g.m(); ++i) {
    const auto& e = g.edges[i];
    if (e.a == 0 || e.b == 0 || !subset(e.a, all) || !subset(e.b, all))
      return Violation{1, i, -1, "edge end empty or outside the vertex set"};
    if (!e.round() && (e.a & e.b))
      return Violation{1, i, -1, "edge is neither a loop nor between disjoint subsets"};
  }
  for (int i = 0; i < g.m(); ++i) {
    if (g.edges[i].round()) continue;
    for (int j = i + 1; j < g.m(); ++j) {
      if (g.edges[j].round()) continue;
      const auto& x = g.edges[i];
      const auto& y = g.edges[j];
      if (x.a == y.a || x.a == y.b || x.b == y.a || x.b == y.b)
        return Violation{2, i, j, "vertex subset is the end of two straight edges"};
    }
  }
  for (int i = 0; i < g.m(); ++i) {
    const auto& e = g.edges[i];
    for (VSet big : {e.a, e.b})
      for (int j = 0; j < g.m(); ++j) {
        const auto& f = g.edges[j];
        const VSet ends[2][2] = {{f.a, f.b}, {f.b, f.a}};
        for (const auto& p : ends)
          if (strict_subset(p[0], big) && !strict_subset(p[1], big))
            return Violation{3, i, j, "strict subset of an end is connected outside that end"};
      }
  }
  return std::nullopt;
}

bool is_connected(const LGraph& g) {
  return connected_on(static_cast<VSet>((1u << g.k) - 1), g.edges, g.k);
}

bool is_irreducible(const LGraph& g) {
  if (validate(g)) throw std::invalid_argument("is_irreducible: invalid L-graph");
  for (const auto& e : g.edges) {
    if (e.round()) {
      std::vector<Edge> f;
      for (const auto& x : g.edges)
        if (strict_subset(x.a, e.a) && strict_subset(x.b, e.a)) f.push_back(x);
      if (!connected_on(e.a, f, g.k)) return false;
    } else {
      for (VSet s : {e.a, e.b}) {
        std::vector<Edge> f;
        for (const auto& x : g.edges)
          if (subset(x.a, s) && subset(x.b, s)) f.push_back(x);
        if (!connected_on(s, f, g.k)) return false;
      }
    }
  }
  return true;
}

int straight_edges(const LGraph& g) {
  return static_cast<int>(std::count_if(g.edges.begin(), g.edges.end(), [](const Edge& e) { return !e.round(); }));
}

int round_edges(const LGraph& g) { return g.m() - straight_edges(g); }

namespace {

using Signature = std::vector<std::vector<int>>;

std::vector<Signature> vertex_invariants(const LGraph& g) {
  std::vector<Signature> inv(g.k);
  for (const auto& e : g.edges)
    for (int v = 0; v < g.k; ++v) {
      const VSet bit = static_cast<VSet>(1u << v);
      if (e.round()) {
        if (e.a & bit) inv[v].push_back({0, std::popcount(static_cast<unsigned>(e.a)), 0});
      } else {
        if (e.a & bit) inv[v].push_back({1, std::popcount(static_cast<unsigned>(e.a)), std::popcount(static_cast<unsigned>(e.b))});
        if (e.b & bit) inv[v].push_back({1, std::popcount(static_cast<unsigned>(e.b)), std::popcount(static_cast<unsigned>(e.a))});
      }
    }
  for (auto& s : inv) std::sort(s.begin(), s.end());
  return inv;
}

std::vector<Edge> relabeled(const LGraph& g, const std::vector<int>& perm) {
  std::vector<Edge> out;
  out.reserve(g.edges.size());
  for (const auto& e : g.edges) out.push_back(make_edge(permute_set(e.a, perm), permute_set(e.b, perm)));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

LGraph canonical_form(const LGraph& g) {
  const auto inv = vertex_invariants(g);
  std::vector<int> order(g.k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return inv[x] < inv[y]; });

  // Groups of vertices with equal invariants occupy consecutive target slots; try all
  // arrangements within each group.
  std::vector<std::pair<int, int>> groups;
  for (int i = 0; i < g.k;) {
    int j = i;
    while (j < g.k && inv[order[j]] == inv[order[i]]) ++j;
    groups.emplace_back(i, j);
    i = j;
  }
  std::vector<Edge> best;
  bool have = false;
  std::vector<int> arrangement = order;
  std::vector<int> perm(g.k);
  auto consider = [&] {
    for (int slot = 0; slot < g.k; ++slot) perm[arrangement[slot]] = slot;
    auto cand = relabeled(g, perm);
    if (!have || cand < best) {
      best = std::move(cand);
      have = true;
    }
  };
  std::function<void(std::size_t)> rec = [&](std::size_t gi) {
    if (gi == groups.size()) {
      consider();
      return;
    }
    auto [lo, hi] = groups[gi];
    std::sort(arrangement.begin() + lo, arrangement.begin() + hi);
    do {
      rec(gi + 1);
    } while (std::next_permutation(arrangement.begin() + lo, arrangement.begin() + hi));
  };
  rec(0);
  LGraph out{g.k, have ? best : std::vector<Edge>{}};
  return out;
}

std::vector<LGraph> components(const LGraph& g) {
  UnionFind uf(g.k);
  for (const auto& e : g.edges) {
    const VSet u = e.a | e.b;
    const int first = std::countr_zero(static_cast<unsigned>(u));
    for (int v = 0; v < g.k; ++v)
      if (u & (1u << v)) uf.unite(v, first);
  }
  std::map<int, std::vector<int>> members;
  for (int v = 0; v < g.k; ++v) members[uf.find(v)].push_back(v);
  std::vector<std::vector<int>> groups;
  for (auto& [r, vs] : members) groups.push_back(vs);
  std::sort(groups.begin(), groups.end());

  std::vector<LGraph> out;
  for (const auto& vs : groups) {
    std::vector<int> perm(g.k, -1);
    VSet mask = 0;
    for (std::size_t i = 0; i < vs.size(); ++i) {
      perm[vs[i]] = static_cast<int>(i);
      mask |= static_cast<VSet>(1u << vs[i]);
    }
    LGraph c{static_cast<int>(vs.size()), {}};
    for (const auto& e : g.edges)
      if (subset(e.a | e.b, mask)) c.edges.push_back(make_edge(permute_set(e.a, perm), permute_set(e.b, perm)));
    c.normalize();
    out.push_back(std::move(c));
  }
  return out;
}

LGraph disjoint_union(const LGraph& g, const LGraph& h) {
  LGraph u{g.k + h.k, g.edges};
  for (const auto& e : h.edges)
    u.edges.push_back(make_edge(static_cast<VSet>(e.a << g.k), static_cast<VSet>(e.b << g.k)));
  u.normalize();
  return u;
}

namespace {

struct ProcessState {
  std::vector<VSet> comps;
  std::vector<Edge> edges;
};

void insertion_process(ProcessState& s, int remaining, int k, std::map<LGraph, long long>& labeled) {
  if (remaining == 0) {
    LGraph g{k, s.edges};
    g.normalize();
    ++labeled[g];
    return;
  }
  const std::size_t c = s.comps.size();
  for (std::size_t i = 0; i < c; ++i) {
    s.edges.push_back(Edge{s.comps[i], s.comps[i]});
    insertion_process(s, remaining - 1, k, labeled);
    s.edges.pop_back();
  }
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = i + 1; j < c; ++j) {
      const VSet x = s.comps[i], y = s.comps[j];
      ProcessState next;
      next.edges = s.edges;
      next.edges.push_back(make_edge(x, y));
      for (std::size_t r = 0; r < c; ++r)
        if (r != i && r != j) next.comps.push_back(s.comps[r]);
      next.comps.push_back(static_cast<VSet>(x | y));
      insertion_process(next, remaining - 1, k, labeled);
    }
}

const std::vector<GraphClass>& enumerate_cached(int k, int m) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::vector<GraphClass>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find({k, m});
  if (it != cache.end()) return it->second;

  ProcessState s;
  for (int v = 0; v < k; ++v) s.comps.push_back(static_cast<VSet>(1u << v));
  std::map<LGraph, long long> labeled;
  insertion_process(s, m, k, labeled);

  std::map<LGraph, long long> counts;
  for (const auto& [g, n] : labeled) counts[canonical_form(g)] += n;

  std::vector<GraphClass> out;
  for (const auto& [g, n] : counts) {
    GraphClass c;
    c.graph = g;
    c.connected = is_connected(g);
    c.irreducible = is_irreducible(g);
    c.SE = straight_edges(g);
    c.RE = round_edges(g);
    c.N = n;
    c.gamma = (1LL << c.SE) * n;
    out.push_back(std::move(c));
  }
  return cache.emplace(std::make_pair(k, m), std::move(out)).first->second;
}

}  // namespace

std::vector<GraphClass> enumerate(int k, int m) {
  if (k < 1 || m < 0) throw std::invalid_argument("enumerate: need k >= 1 and m >= 0");
  if (k + m > 8) throw std::invalid_argument("enumerate: k + m must not exceed 8");
  return enumerate_cached(k, m);
}

std::vector<GraphClass> enumerate_connected(int k, int m) {
  std::vector<GraphClass> out;
  for (auto& c : enumerate(k, m))
    if (c.connected) out.push_back(c);
  return out;
}

long long gamma_of(const LGraph& g) {
  if (g.k == 0) return 1;
  const LGraph c = canonical_form(g);
  for (const auto& gc : enumerate(g.k, g.m()))
    if (gc.graph == c) return gc.gamma;
  return 0;
}

bool gamma_decomposition_check(const LGraph& g) {
  if (g.k == 0) return true;
  const auto comps = components(g);
  std::map<LGraph, std::size_t> classes;  // canonical component -> index of a representative
  for (std::size_t i = 0; i < comps.size(); ++i) classes.emplace(canonical_form(comps[i]), i);

  long long rhs = 0;
  for (const auto& [canon, idx] : classes) {
    LGraph rest{0, {}};
    for (std::size_t j = 0; j < comps.size(); ++j)
      if (j != idx) rest = disjoint_union(rest, comps[j]);
    const auto& theta = comps[idx];
    rhs += static_cast<long long>(binomial(g.k - 1, theta.k - 1) * binomial(g.m(), theta.m())) *
           gamma_of(theta) * gamma_of(rest);
  }
  return rhs == gamma_of(g);
}

std::string to_string(const LGraph& g) {
  auto set_str = [](VSet s) {
    std::ostringstream os;
    os << '{';
    bool first = true;
    for (int v = 0; s; ++v, s >>= 1)
      if (s & 1) {
        if (!first) os << ',';
        os << v + 1;
        first = false;
      }
    os << '}';
    return os.str();
  };
  std::ostringstream os;
  os << "k=" << g.k << " [";
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    const auto& e = g.edges[i];
    if (i) os << ' ';
    if (e.round()) os << "round" << set_str(e.a);
    else os << set_str(e.a) << '-' << set_str(e.b);
  }
  os << ']';
  return os.str();
}

}  // namespace chaoslab
