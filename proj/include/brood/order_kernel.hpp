#pragma once

// Metropolis-Hastings over topological orders within a fixed search space,
// and conditional DAG sampling given an order.

#include <cmath>
#include <utility>
#include <vector>

#include "brood/graph.hpp"
#include "brood/rng.hpp"
#include "brood/score_tables.hpp"

namespace brood {

enum class MoveKind { AdjacentSwap, RandomSwap, Relocate };

/// Mixture weights of the three symmetric order moves.
inline constexpr double kAdjacentSwapWeight = 0.5;
inline constexpr double kRandomSwapWeight = 0.3;
inline constexpr double kRelocateWeight = 0.2;

/// Positions a < b for swaps; from/to for relocation.
struct OrderProposal {
  MoveKind kind = MoveKind::AdjacentSwap;
  int a = 0;
  int b = 0;

  int lo() const { return std::min(a, b); }
  int hi() const { return std::max(a, b); }
};

inline void apply_proposal(TopOrder& o, const OrderProposal& m) {
  if (m.kind == MoveKind::Relocate)
    o.relocate(m.a, m.b);
  else
    o.swap_positions(m.a, m.b);
}

inline OrderProposal draw_proposal(int p, Rng& rng) {
  require(p >= 2, "order proposals need p >= 2");
  const double u = uniform01(rng);
  if (u < kAdjacentSwapWeight) {
    const int k = uniform_int(rng, 0, p - 2);
    return {MoveKind::AdjacentSwap, k, k + 1};
  }
  if (u < kAdjacentSwapWeight + kRandomSwapWeight) {
    int a = uniform_int(rng, 0, p - 1);
    int b = uniform_int(rng, 0, p - 2);
    if (b >= a) ++b;
    return {MoveKind::RandomSwap, std::min(a, b), std::max(a, b)};
  }
  return {MoveKind::Relocate, uniform_int(rng, 0, p - 1), uniform_int(rng, 0, p - 1)};
}

inline std::pair<TopOrder, OrderProposal> propose_order(const TopOrder& o, Rng& rng) {
  const OrderProposal m = draw_proposal(o.p(), rng);
  TopOrder next = o;
  apply_proposal(next, m);
  return {std::move(next), m};
}

/// Every proposal with its probability (entries may lead to the same order).
inline std::vector<std::pair<double, OrderProposal>> proposal_distribution(int p) {
  require(p >= 2, "order proposals need p >= 2");
  std::vector<std::pair<double, OrderProposal>> out;
  for (int k = 0; k + 1 < p; ++k) out.push_back({kAdjacentSwapWeight / (p - 1), {MoveKind::AdjacentSwap, k, k + 1}});
  const double pairs = p * (p - 1) / 2.0;
  for (int a = 0; a < p; ++a)
    for (int b = a + 1; b < p; ++b) out.push_back({kRandomSwapWeight / pairs, {MoveKind::RandomSwap, a, b}});
  for (int a = 0; a < p; ++a)
    for (int b = 0; b < p; ++b) out.push_back({kRelocateWeight / (p * p), {MoveKind::Relocate, a, b}});
  return out;
}

/// Order-MCMC state with per-node cached restricted scores.
struct OrderState {
  TopOrder order;
  std::vector<double> node_scores;
  double log_score = 0.0;

  OrderState() = default;
  OrderState(TopOrder o, const TableSet& t) : order(std::move(o)) { refresh(t); }

  void refresh(const TableSet& t) {
    require(order.p() == t.p(), "OrderState: dimension mismatch");
    node_scores.resize(static_cast<std::size_t>(t.p()));
    for (int i = 0; i < t.p(); ++i) node_scores[i] = restricted_node_logscore(t.node(i), order);
    resum();
  }

  /// Re-reads node i after its tables changed.
  void refresh_node(const TableSet& t, int i) {
    node_scores[i] = restricted_node_logscore(t.node(i), order);
    resum();
  }

  void resum() {
    log_score = 0.0;
    for (double v : node_scores) log_score += v;
  }
};

struct Q0Result {
  bool accepted = false;
  OrderProposal move;
};

/// One MH step. Only nodes inside the moved position range are re-scored;
/// every other node keeps its predecessor set.
inline Q0Result q0_step(OrderState& s, const TableSet& t, Rng& rng) {
  const int p = t.p();
  Q0Result res;
  if (p < 2) return res;
  res.move = draw_proposal(p, rng);
  TopOrder next = s.order;
  apply_proposal(next, res.move);
  double delta = 0.0;
  std::vector<std::pair<int, double>> changed;
  for (int k = res.move.lo(); k <= res.move.hi(); ++k) {
    const int v = next.at(k);
    const double nv = restricted_node_logscore(t.node(v), next);
    changed.emplace_back(v, nv);
    if (nv != s.node_scores[v]) delta += nv - s.node_scores[v];
  }
  const double u = uniform01(rng);
  if (std::isnan(delta) || !(delta >= 0.0 || u < std::exp(delta))) return res;
  res.accepted = true;
  s.order = std::move(next);
  for (auto [v, nv] : changed) s.node_scores[v] = nv;
  s.resum();
  return res;
}

/// Conditional distribution of node i's parent set given the order:
/// subsets of its allowed predecessors and, with `plus_one`, those subsets
/// extended by one preceding node outside the space.
inline std::vector<std::pair<NodeSet, double>> parent_set_distribution(const NodeTables& t, const TopOrder& o,
                                                                       bool plus_one) {
  const SubsetCode banned = banned_code(t, o);
  const SubsetCode free_mask = static_cast<SubsetCode>(t.rows() - 1) & ~banned;
  const int pos = o.position(t.node);
  std::vector<int> plus_pre;
  if (plus_one)
    for (int k = 0; k < t.q(); ++k)
      if (o.position(t.plus_cands[k]) < pos) plus_pre.push_back(k);

  std::vector<std::pair<NodeSet, double>> out;
  std::vector<double> logs;
  // Enumerate submasks of free_mask.
  SubsetCode s = free_mask;
  while (true) {
    const NodeSet pa = t.decode(s);
    out.push_back({pa, 0.0});
    logs.push_back(t.score[s]);
    for (int k : plus_pre) {
      NodeSet ext = pa;
      ext.insert(t.plus_cands[k]);
      out.push_back({ext, 0.0});
      logs.push_back(t.plus_score_at(s, k));
    }
    if (s == 0) break;
    s = (s - 1) & free_mask;
  }
  const double z = log_sum_exp(logs);
  for (std::size_t k = 0; k < out.size(); ++k) out[k].second = (z == kNegInf) ? 0.0 : std::exp(logs[k] - z);
  return out;
}

/// Draws a DAG from its conditional law given the order and the space.
inline Dag sample_dag_given(const TopOrder& o, const TableSet& t, Rng& rng, bool plus_one = false) {
  std::vector<NodeSet> parents(static_cast<std::size_t>(t.p()));
  for (int i = 0; i < t.p(); ++i) {
    const auto dist = parent_set_distribution(t.node(i), o, plus_one);
    double u = uniform01(rng);
    parents[i] = dist.back().first;
    for (const auto& [pa, prob] : dist) {
      if (u < prob) {
        parents[i] = pa;
        break;
      }
      u -= prob;
    }
  }
  return Dag(t.p(), std::move(parents));
}

/// Orders nodes by descending total degree in h (ties by index).
inline TopOrder degree_order(const SearchSpace& h) {
  const int p = h.p();
  std::vector<int> degree(p, 0);
  for (const Edge& e : h.edges()) {
    ++degree[e.src];
    ++degree[e.dst];
  }
  std::vector<int> perm(p);
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(), [&](int a, int b) { return degree[a] > degree[b]; });
  return TopOrder(std::move(perm));
}

}  // namespace brood
