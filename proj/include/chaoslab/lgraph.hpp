#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace chaoslab {

// Vertex subsets as bitmasks over vertices 0..k-1.
using VSet = std::uint16_t;

struct Edge {
  VSet a = 0;
  VSet b = 0;  // a <= b; a == b encodes a round edge

  bool round() const { return a == b; }
  auto operator<=>(const Edge&) const = default;
};

Edge make_edge(VSet x, VSet y);

struct LGraph {
  int k = 0;
  std::vector<Edge> edges;  // sorted multiset

  int m() const { return static_cast<int>(edges.size()); }
  void normalize();
  auto operator<=>(const LGraph&) const = default;
};

struct Violation {
  int property = 0;  // 1: loop or disjoint, 2: straight-end uniqueness, 3: nesting
  int edge = -1;
  int other = -1;
  std::string message;
};

std::optional<Violation> validate(const LGraph& g);
bool is_connected(const LGraph& g);
bool is_irreducible(const LGraph& g);

int straight_edges(const LGraph& g);
int round_edges(const LGraph& g);

// Isomorphism-invariant representative.
LGraph canonical_form(const LGraph& g);

// Connected components as graphs relabeled onto 0..v-1.
std::vector<LGraph> components(const LGraph& g);

// Disjoint union; vertices of h are shifted after those of g.
LGraph disjoint_union(const LGraph& g, const LGraph& h);

struct GraphClass {
  LGraph graph;  // canonical form
  bool connected = false;
  bool irreducible = false;
  int SE = 0;
  int RE = 0;
  long long N = 0;
  long long gamma = 0;
};

// Gamma(k,m) up to isomorphism, k + m <= 8. Built by the insertion process: each step either
// closes a round edge over a whole current component or joins two components by a straight edge.
std::vector<GraphClass> enumerate(int k, int m);
std::vector<GraphClass> enumerate_connected(int k, int m);

long long gamma_of(const LGraph& g);

bool gamma_decomposition_check(const LGraph& g);

std::string to_string(const LGraph& g);

}  // namespace chaoslab
