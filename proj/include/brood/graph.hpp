#pragma once

// Graph, order and search-space value types plus the small-p enumeration
// helpers the exact oracle is built on.

#include <algorithm>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "brood/error.hpp"
#include "brood/node_set.hpp"

namespace brood {

struct Edge {
  int src = 0;
  int dst = 0;

  constexpr bool operator==(const Edge&) const = default;
  constexpr auto operator<=>(const Edge&) const = default;
};

/// Kahn elimination over per-node parent sets.
inline bool is_acyclic(std::span<const NodeSet> parents) {
  const int p = static_cast<int>(parents.size());
  std::vector<int> indegree(p);
  std::vector<std::vector<int>> children(p);
  for (int i = 0; i < p; ++i) {
    if (parents[i].contains(i)) return false;
    indegree[i] = parents[i].size();
    parents[i].for_each([&](int j) { children[j].push_back(i); });
  }
  std::vector<int> ready;
  for (int i = 0; i < p; ++i)
    if (indegree[i] == 0) ready.push_back(i);
  int removed = 0;
  while (!ready.empty()) {
    const int v = ready.back();
    ready.pop_back();
    ++removed;
    for (int c : children[v])
      if (--indegree[c] == 0) ready.push_back(c);
  }
  return removed == p;
}

class Dag {
 public:
  Dag() = default;

  /// Empty graph on p nodes.
  explicit Dag(int p) : parents_(check_p(p)) {}

  Dag(int p, std::vector<NodeSet> parents) : parents_(std::move(parents)) {
    require(static_cast<int>(parents_.size()) == p, "Dag: parent list length differs from p");
    check_p(p);
    for (int i = 0; i < p; ++i)
      require(parents_[i].is_subset_of(NodeSet::range(p)), "Dag: parent index out of range");
    require(is_acyclic(parents_), "Dag: graph contains a directed cycle");
  }

  static Dag from_edges(int p, std::span<const Edge> edges) {
    std::vector<NodeSet> parents(check_p(p));
    for (const Edge& e : edges) {
      require(e.src >= 0 && e.src < p && e.dst >= 0 && e.dst < p, "Dag: edge index out of range");
      require(e.src != e.dst, "Dag: self-loop");
      parents[e.dst].insert(e.src);
    }
    return Dag(p, std::move(parents));
  }

  int p() const { return static_cast<int>(parents_.size()); }
  const NodeSet& parents(int i) const { return parents_[i]; }
  std::span<const NodeSet> all_parents() const { return parents_; }
  bool has_edge(int src, int dst) const { return parents_[dst].contains(src); }

  int edge_count() const {
    int n = 0;
    for (const auto& s : parents_) n += s.size();
    return n;
  }

  /// Edges sorted by (src, dst).
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    for (int i = 0; i < p(); ++i) parents_[i].for_each([&](int j) { out.push_back({j, i}); });
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Nodes listed so that parents come first.
  std::vector<int> topological_sort() const {
    std::vector<int> indegree(p()), out;
    std::vector<std::vector<int>> children(p());
    for (int i = 0; i < p(); ++i) {
      indegree[i] = parents_[i].size();
      parents_[i].for_each([&](int j) { children[j].push_back(i); });
    }
    for (int i = 0; i < p(); ++i)
      if (indegree[i] == 0) out.push_back(i);
    for (std::size_t k = 0; k < out.size(); ++k)
      for (int c : children[out[k]])
        if (--indegree[c] == 0) out.push_back(c);
    return out;
  }

  bool operator==(const Dag&) const = default;
  auto operator<=>(const Dag&) const = default;

 private:
  static int check_p(int p) {
    require(p >= 0 && p <= kMaxNodes, "node count out of range");
    return p;
  }

  std::vector<NodeSet> parents_;
};

/// A permutation of 0..p-1; perm[k] is the node at position k. Parents of a
/// compatible DAG sit at earlier positions than their children.
class TopOrder {
 public:
  TopOrder() = default;

  explicit TopOrder(std::vector<int> perm) : perm_(std::move(perm)), pos_(perm_.size(), -1) {
    const int p = static_cast<int>(perm_.size());
    for (int k = 0; k < p; ++k) {
      require(perm_[k] >= 0 && perm_[k] < p && pos_[perm_[k]] == -1, "TopOrder: not a permutation");
      pos_[perm_[k]] = k;
    }
  }

  static TopOrder identity(int p) {
    std::vector<int> perm(p);
    std::iota(perm.begin(), perm.end(), 0);
    return TopOrder(std::move(perm));
  }

  int p() const { return static_cast<int>(perm_.size()); }
  int at(int position) const { return perm_[position]; }
  int position(int node) const { return pos_[node]; }
  bool precedes(int a, int b) const { return pos_[a] < pos_[b]; }
  std::span<const int> perm() const { return perm_; }

  /// Nodes strictly before `node`.
  NodeSet predecessors(int node) const {
    NodeSet s;
    for (int k = 0; k < pos_[node]; ++k) s.insert(perm_[k]);
    return s;
  }

  void swap_positions(int a, int b) {
    std::swap(perm_[a], perm_[b]);
    pos_[perm_[a]] = a;
    pos_[perm_[b]] = b;
  }

  /// Moves the node at position `from` to position `to`, shifting the rest.
  void relocate(int from, int to) {
    if (from < to)
      std::rotate(perm_.begin() + from, perm_.begin() + from + 1, perm_.begin() + to + 1);
    else if (to < from)
      std::rotate(perm_.begin() + to, perm_.begin() + from, perm_.begin() + from + 1);
    const int lo = std::min(from, to), hi = std::max(from, to);
    for (int k = lo; k <= hi; ++k) pos_[perm_[k]] = k;
  }

  bool operator==(const TopOrder& o) const { return perm_ == o.perm_; }
  auto operator<=>(const TopOrder& o) const { return perm_ <=> o.perm_; }

 private:
  std::vector<int> perm_;
  std::vector<int> pos_;
};

/// Directed graph of admissible edges, optionally with an in-degree cap.
/// Need not be acyclic. Self-loops are never stored.
class SearchSpace {
 public:
  SearchSpace() = default;

  explicit SearchSpace(int p, std::optional<int> cap = std::nullopt)
      : allowed_(static_cast<std::size_t>(check_p(p))), cap_(cap) {
    require(!cap || *cap >= 0, "SearchSpace: negative cap");
  }

  SearchSpace(int p, std::vector<NodeSet> allowed, std::optional<int> cap = std::nullopt)
      : SearchSpace(p, cap) {
    require(static_cast<int>(allowed.size()) == p, "SearchSpace: allowed list length differs from p");
    for (int i = 0; i < p; ++i) {
      allowed[i].erase(i);
      require(allowed[i].is_subset_of(NodeSet::range(p)), "SearchSpace: index out of range");
      require(!cap || allowed[i].size() <= *cap,
              "SearchSpace: node " + std::to_string(i) + " has " + std::to_string(allowed[i].size()) +
                  " allowed parents, above the cap of " + std::to_string(*cap));
    }
    allowed_ = std::move(allowed);
  }

  static SearchSpace complete(int p, std::optional<int> cap = std::nullopt) {
    std::vector<NodeSet> allowed(p, NodeSet::range(p));
    return SearchSpace(p, std::move(allowed), cap);
  }

  static SearchSpace from_edges(int p, std::span<const Edge> edges, std::optional<int> cap = std::nullopt) {
    std::vector<NodeSet> allowed(check_p(p));
    for (const Edge& e : edges) {
      require(e.src >= 0 && e.src < p && e.dst >= 0 && e.dst < p, "SearchSpace: edge index out of range");
      require(e.src != e.dst, "SearchSpace: self-loop");
      allowed[e.dst].insert(e.src);
    }
    return SearchSpace(p, std::move(allowed), cap);
  }

  int p() const { return static_cast<int>(allowed_.size()); }
  const NodeSet& allowed(int i) const { return allowed_[i]; }
  std::span<const NodeSet> all_allowed() const { return allowed_; }
  std::optional<int> cap() const { return cap_; }
  bool has_edge(const Edge& e) const { return allowed_[e.dst].contains(e.src); }
  bool at_cap(int i) const { return cap_ && allowed_[i].size() >= *cap_; }

  int edge_count() const {
    int n = 0;
    for (const auto& s : allowed_) n += s.size();
    return n;
  }

  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    for (int i = 0; i < p(); ++i) allowed_[i].for_each([&](int j) { out.push_back({j, i}); });
    std::sort(out.begin(), out.end());
    return out;
  }

  bool operator==(const SearchSpace& o) const { return allowed_ == o.allowed_ && cap_ == o.cap_; }

 private:
  friend SearchSpace space_add_edge(const SearchSpace&, const Edge&);
  friend SearchSpace space_remove_edge(const SearchSpace&, const Edge&);

  static int check_p(int p) {
    require(p >= 0 && p <= kMaxNodes, "node count out of range");
    return p;
  }

  std::vector<NodeSet> allowed_;
  std::optional<int> cap_;
};

inline void check_edge(int p, const Edge& e) {
  require(e.src >= 0 && e.src < p && e.dst >= 0 && e.dst < p, "edge index out of range");
  require(e.src != e.dst, "self-loop edge");
}

inline SearchSpace space_add_edge(const SearchSpace& h, const Edge& e) {
  check_edge(h.p(), e);
  require(!h.has_edge(e), "space_add_edge: edge already present");
  require(!h.at_cap(e.dst), "space_add_edge: node " + std::to_string(e.dst) + " is at its in-degree cap");
  SearchSpace out = h;
  out.allowed_[e.dst].insert(e.src);
  return out;
}

inline SearchSpace space_remove_edge(const SearchSpace& h, const Edge& e) {
  check_edge(h.p(), e);
  require(h.has_edge(e), "space_remove_edge: edge not present");
  SearchSpace out = h;
  out.allowed_[e.dst].erase(e.src);
  return out;
}

inline bool order_compatible(const Dag& g, const TopOrder& o) {
  require(g.p() == o.p(), "order_compatible: dimension mismatch");
  for (int i = 0; i < g.p(); ++i) {
    bool ok = true;
    g.parents(i).for_each([&](int j) { ok = ok && o.precedes(j, i); });
    if (!ok) return false;
  }
  return true;
}

inline bool dag_in_space(const Dag& g, const SearchSpace& h) {
  for (int i = 0; i < g.p(); ++i)
    if (!g.parents(i).is_subset_of(h.allowed(i))) return false;
  return true;
}

/// Largest p accepted by the enumeration helpers.
inline constexpr int kMaxEnumerationNodes = 5;

namespace detail {

/// All subsets of `base` (including the empty set).
inline std::vector<NodeSet> subsets_of(const NodeSet& base) {
  const std::vector<int> items = base.to_vector();
  const std::size_t m = items.size();
  std::vector<NodeSet> out;
  out.reserve(std::size_t{1} << m);
  for (std::size_t code = 0; code < (std::size_t{1} << m); ++code) {
    NodeSet s;
    for (std::size_t k = 0; k < m; ++k)
      if ((code >> k) & 1u) s.insert(items[k]);
    out.push_back(s);
  }
  return out;
}

/// Cartesian product over per-node candidate parent sets, keeping acyclic
/// assignments (all kept if `known_acyclic`).
inline std::vector<Dag> product_dags(int p, const std::vector<std::vector<NodeSet>>& choices,
                                     bool known_acyclic) {
  std::vector<Dag> out;
  std::vector<NodeSet> cur(p);
  std::vector<std::size_t> idx(p, 0);
  while (true) {
    for (int i = 0; i < p; ++i) cur[i] = choices[i][idx[i]];
    if (known_acyclic || is_acyclic(cur)) out.emplace_back(p, cur);
    int k = 0;
    while (k < p && ++idx[k] == choices[k].size()) idx[k++] = 0;
    if (k == p) break;
  }
  return out;
}

inline void require_enumerable(int p) {
  require(p >= 1 && p <= kMaxEnumerationNodes,
          "enumeration requested for p=" + std::to_string(p) + "; supported range is 1.." +
              std::to_string(kMaxEnumerationNodes));
}

}  // namespace detail

/// Every labelled DAG on p nodes, once each.
inline std::vector<Dag> enumerate_dags(int p) {
  detail::require_enumerable(p);
  std::vector<std::vector<NodeSet>> choices(p);
  for (int i = 0; i < p; ++i) {
    NodeSet others = NodeSet::range(p);
    others.erase(i);
    choices[i] = detail::subsets_of(others);
  }
  return detail::product_dags(p, choices, false);
}

/// DAGs whose edges lie in `h` and, when `o` is given, that are compatible with it.
inline std::vector<Dag> dags_in(const SearchSpace& h, const std::optional<TopOrder>& o = std::nullopt) {
  const int p = h.p();
  detail::require_enumerable(p);
  require(!o || o->p() == p, "dags_in: dimension mismatch");
  std::vector<std::vector<NodeSet>> choices(p);
  for (int i = 0; i < p; ++i) {
    NodeSet base = h.allowed(i);
    if (o) base &= o->predecessors(i);
    choices[i] = detail::subsets_of(base);
  }
  return detail::product_dags(p, choices, o.has_value());
}

/// All permutations of 0..p-1 in lexicographic order.
inline std::vector<TopOrder> all_orders(int p) {
  detail::require_enumerable(p);
  std::vector<int> perm(p);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<TopOrder> out;
  do {
    out.emplace_back(perm);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

/// Linear extensions of g.
inline std::vector<TopOrder> compatible_orders(const Dag& g) {
  std::vector<TopOrder> out;
  for (auto& o : all_orders(g.p()))
    if (order_compatible(g, o)) out.push_back(std::move(o));
  return out;
}

}  // namespace brood
