#pragma once

// Per-node subset score tables for order MCMC over a restricted search space.
//
// For node i with allowed parents cands (ascending, m of them) every subset of
// cands is encoded as an m-bit integer: bit k set <=> cands[k] is in the subset.
//
//   score[s]          local score of subset s
//   banned[c]         LSE of score[s] over all s disjoint from c
//   plus_score[s][k]  local score of s + {plus_cands[k]}
//   plus_banned[c][k] LSE of plus_score[s][k] over all s disjoint from c
//
// plus_cands holds every node outside cands + {i}. Given an order, the banned
// code of node i marks the candidates that do not precede i, so banned[code]
// is the restricted order score contribution of node i.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "brood/bge.hpp"
#include "brood/error.hpp"
#include "brood/graph.hpp"
#include "brood/logspace.hpp"

namespace brood {

/// Largest candidate list a node table may hold (2^m rows are stored densely).
inline constexpr int kMaxTableCandidates = 24;

using SubsetCode = std::uint32_t;

struct TableCounters {
  /// Table entries read by the order-score functions.
  std::uint64_t reads = 0;
  /// Contractions that fell back to exact re-aggregation of the re-added column.
  std::uint64_t contraction_fallbacks = 0;
};

inline TableCounters& table_counters() {
  thread_local TableCounters counters;
  return counters;
}

struct NodeTables {
  int node = 0;
  std::vector<int> cands;
  std::vector<double> score;
  std::vector<double> banned;
  std::vector<int> plus_cands;
  /// Row-major 2^m x plus_cands.size().
  std::vector<double> plus_score;
  std::vector<double> plus_banned;

  int m() const { return static_cast<int>(cands.size()); }
  int q() const { return static_cast<int>(plus_cands.size()); }
  std::size_t rows() const { return std::size_t{1} << cands.size(); }

  double plus_score_at(SubsetCode s, int k) const { return plus_score[s * plus_cands.size() + k]; }
  double plus_banned_at(SubsetCode c, int k) const { return plus_banned[c * plus_cands.size() + k]; }

  /// Index of `v` in cands or -1.
  int cand_index(int v) const { return index_in(cands, v); }
  /// Index of `v` in plus_cands or -1.
  int plus_index(int v) const { return index_in(plus_cands, v); }

  NodeSet decode(SubsetCode s) const {
    NodeSet out;
    for (int k = 0; k < m(); ++k)
      if ((s >> k) & 1u) out.insert(cands[k]);
    return out;
  }

  bool operator==(const NodeTables&) const = default;

 private:
  static int index_in(const std::vector<int>& xs, int v) {
    auto it = std::lower_bound(xs.begin(), xs.end(), v);
    return (it != xs.end() && *it == v) ? static_cast<int>(it - xs.begin()) : -1;
  }
};

namespace detail {

/// In-place subset-sum transform in log space over `width` interleaved
/// columns: afterwards v[u] = LSE of the original v[s] over all s within u.
inline void log_zeta_transform(std::vector<double>& v, int m, std::size_t width) {
  const std::size_t rows = std::size_t{1} << m;
  for (int b = 0; b < m; ++b) {
    const std::size_t bit = std::size_t{1} << b;
    for (std::size_t u = 0; u < rows; ++u) {
      if (!(u & bit)) continue;
      double* dst = &v[u * width];
      const double* src = &v[(u ^ bit) * width];
      for (std::size_t k = 0; k < width; ++k) dst[k] = log_add(dst[k], src[k]);
    }
  }
}

/// banned[c] = zeta[full ^ c] for every column.
inline std::vector<double> banned_from_scores(const std::vector<double>& scores, int m, std::size_t width) {
  std::vector<double> zeta = scores;
  log_zeta_transform(zeta, m, width);
  const std::size_t rows = std::size_t{1} << m;
  std::vector<double> out(zeta.size());
  for (std::size_t c = 0; c < rows; ++c)
    std::copy_n(&zeta[((rows - 1) ^ c) * width], width, &out[c * width]);
  return out;
}

/// Spreads an m-bit code to m+1 bits by inserting a zero at bit `r`.
inline SubsetCode insert_zero_bit(SubsetCode s, int r) {
  const SubsetCode low = s & ((SubsetCode{1} << r) - 1);
  return low | ((s >> r) << (r + 1));
}

inline void aggregate(NodeTables& t) {
  t.banned = banned_from_scores(t.score, t.m(), 1);
  t.plus_banned = t.q() ? banned_from_scores(t.plus_score, t.m(), t.plus_cands.size()) : std::vector<double>{};
}

/// Fills score and plus_score rows by one batched evaluation per row.
inline void fill_rows(NodeTables& t, const LocalScore& scorer) {
  t.score.assign(t.rows(), kNegInf);
  t.plus_score.assign(t.rows() * t.plus_cands.size(), kNegInf);
  scorer.score_rows(t.node, {}, t.cands, t.plus_cands, t.score, t.plus_score);
}

}  // namespace detail

/// Builds all four tables of node i for the allowed parents of i in h.
inline NodeTables build_node_tables(int i, const SearchSpace& h, const LocalScore& scorer) {
  require(i >= 0 && i < h.p(), "build_node_tables: node out of range");
  require(scorer.p() == h.p(), "build_node_tables: score and space disagree on p");
  require(!h.cap() || h.allowed(i).size() <= *h.cap(), "build_node_tables: node exceeds the cap");
  NodeTables t;
  t.node = i;
  t.cands = h.allowed(i).to_vector();
  require(t.m() <= kMaxTableCandidates, "build_node_tables: too many allowed parents for a dense table");
  t.plus_cands = (NodeSet::range(h.p()) - h.allowed(i) - NodeSet::single(i)).to_vector();
  detail::fill_rows(t, scorer);
  detail::aggregate(t);
  return t;
}

inline NodeTables build_node_tables(int i, const SearchSpace& h, const BgeHyper& hy) {
  return build_node_tables(i, h, BgeScore(hy));
}

/// Tables of node e.dst for the space with e added. Existing rows are reused;
/// only rows containing e.src need new plus-one evaluations.
inline NodeTables expand_node_tables(const NodeTables& t, const Edge& e, const LocalScore& scorer,
                                     std::optional<int> cap = std::nullopt) {
  require(e.dst == t.node, "expand_node_tables: edge does not end at this node");
  const int kj = t.plus_index(e.src);
  require(kj >= 0, "expand_node_tables: source is not a plus candidate");
  require(!cap || t.m() < *cap, "expand_node_tables: node is at the cap");
  require(t.m() + 1 <= kMaxTableCandidates, "expand_node_tables: too many allowed parents for a dense table");

  NodeTables out;
  out.node = t.node;
  out.cands = t.cands;
  const int r = static_cast<int>(std::lower_bound(out.cands.begin(), out.cands.end(), e.src) - out.cands.begin());
  out.cands.insert(out.cands.begin() + r, e.src);
  out.plus_cands = t.plus_cands;
  out.plus_cands.erase(out.plus_cands.begin() + kj);

  const std::size_t old_rows = t.rows();
  const std::size_t q_old = t.plus_cands.size();
  const std::size_t q = out.plus_cands.size();
  out.score.assign(old_rows * 2, kNegInf);
  out.plus_score.assign(old_rows * 2 * q, kNegInf);
  const SubsetCode jbit = SubsetCode{1} << r;
  // Only the rows that contain e.src need new plus-one scores.
  std::vector<double> fresh_rows(old_rows), fresh_plus(old_rows * q);
  if (q > 0) {
    const int src = e.src;
    scorer.score_rows(out.node, std::span<const int>(&src, 1), t.cands, out.plus_cands, fresh_rows, fresh_plus);
  }
  for (SubsetCode s = 0; s < old_rows; ++s) {
    const SubsetCode without = detail::insert_zero_bit(s, r);
    const SubsetCode with = without | jbit;
    out.score[without] = t.score[s];
    out.score[with] = t.plus_score[s * q_old + kj];
    for (std::size_t k = 0, kk = 0; k < q_old; ++k)
      if (static_cast<int>(k) != kj) out.plus_score[without * q + kk++] = t.plus_score[s * q_old + k];
    std::copy_n(&fresh_plus[s * q], q, &out.plus_score[with * q]);
  }
  detail::aggregate(out);
  return out;
}

/// Log-gap below which the memoised plus column of a contraction is
/// recomputed exactly instead of by log-minus-exp (cancellation guard).
inline constexpr double kContractionMinGap = 1e-6;

/// Tables of node e.dst for the space with e removed. Needs no score
/// evaluations: the surviving rows are selected, banned entries that already
/// ban e.src are reused, and the re-added plus column comes from differences
/// of banned aggregates.
inline NodeTables contract_node_tables(const NodeTables& t, const Edge& e) {
  require(e.dst == t.node, "contract_node_tables: edge does not end at this node");
  const int r = t.cand_index(e.src);
  require(r >= 0, "contract_node_tables: source is not an allowed parent");

  NodeTables out;
  out.node = t.node;
  out.cands = t.cands;
  out.cands.erase(out.cands.begin() + r);
  out.plus_cands = t.plus_cands;
  const int kt = static_cast<int>(std::lower_bound(out.plus_cands.begin(), out.plus_cands.end(), e.src) -
                                  out.plus_cands.begin());
  out.plus_cands.insert(out.plus_cands.begin() + kt, e.src);

  const std::size_t rows = out.rows();
  const std::size_t q_old = t.plus_cands.size();
  const std::size_t q = out.plus_cands.size();
  const SubsetCode jbit = SubsetCode{1} << r;
  out.score.resize(rows);
  out.banned.resize(rows);
  out.plus_score.resize(rows * q);
  out.plus_banned.resize(rows * q);
  bool fallback = false;
  for (SubsetCode s = 0; s < rows; ++s) {
    const SubsetCode without = detail::insert_zero_bit(s, r);
    out.score[s] = t.score[without];
    out.banned[s] = t.banned[without | jbit];
    for (std::size_t k = 0, kk = 0; k < q; ++k) {
      if (static_cast<int>(k) == kt) {
        out.plus_score[s * q + k] = t.score[without | jbit];
        const double all = t.banned[without];
        const double rest = t.banned[without | jbit];
        const double diff = log_minus_exp(all, rest);
        if (rest != kNegInf && !(all - rest > kContractionMinGap)) fallback = true;
        out.plus_banned[s * q + k] = diff;
      } else {
        out.plus_score[s * q + k] = t.plus_score[without * q_old + kk];
        out.plus_banned[s * q + k] = t.plus_banned[(without | jbit) * q_old + kk];
        ++kk;
      }
    }
  }
  if (fallback) {
    ++table_counters().contraction_fallbacks;
    std::vector<double> column(rows);
    for (SubsetCode s = 0; s < rows; ++s) column[s] = out.plus_score[s * q + kt];
    column = detail::banned_from_scores(column, out.m(), 1);
    for (SubsetCode s = 0; s < rows; ++s) out.plus_banned[s * q + kt] = column[s];
  }
  return out;
}

/// Banned code of node i under order o: the candidates not preceding i.
inline SubsetCode banned_code(const NodeTables& t, const TopOrder& o) {
  const int pos = o.position(t.node);
  SubsetCode c = 0;
  for (int k = 0; k < t.m(); ++k)
    if (o.position(t.cands[k]) > pos) c |= SubsetCode{1} << k;
  return c;
}

/// Immutable snapshot of every node's tables for one search space. Updating
/// a node returns a new snapshot sharing the untouched nodes.
class TableSet {
 public:
  TableSet() = default;

  TableSet(std::shared_ptr<const LocalScore> scorer, SearchSpace h) : scorer_(std::move(scorer)), space_(std::move(h)) {
    require(scorer_ != nullptr, "TableSet: missing score");
    nodes_.reserve(static_cast<std::size_t>(space_.p()));
    for (int i = 0; i < space_.p(); ++i)
      nodes_.push_back(std::make_shared<const NodeTables>(build_node_tables(i, space_, *scorer_)));
  }

  int p() const { return space_.p(); }
  const SearchSpace& space() const { return space_; }
  const LocalScore& scorer() const { return *scorer_; }
  const std::shared_ptr<const LocalScore>& scorer_ptr() const { return scorer_; }
  const NodeTables& node(int i) const { return *nodes_[i]; }
  const std::shared_ptr<const NodeTables>& node_ptr(int i) const { return nodes_[i]; }

  /// Snapshot for `h` in which node tables[i] replaces the old entry; h must
  /// differ from the current space only in node i's allowed set.
  TableSet with_node(SearchSpace h, std::shared_ptr<const NodeTables> tables) const {
    TableSet out = *this;
    const int i = tables->node;
    for (int v = 0; v < p(); ++v)
      require(v == i || h.allowed(v) == space_.allowed(v), "TableSet::with_node: spaces differ outside the node");
    require(NodeSet::from(tables->cands) == h.allowed(i), "TableSet::with_node: tables do not match the space");
    out.space_ = std::move(h);
    out.nodes_[i] = std::move(tables);
    return out;
  }

  TableSet with_edge_added(const Edge& e) const {
    SearchSpace h = space_add_edge(space_, e);
    return with_node(std::move(h), std::make_shared<const NodeTables>(
                                       expand_node_tables(node(e.dst), e, *scorer_, space_.cap())));
  }

  TableSet with_edge_removed(const Edge& e) const {
    SearchSpace h = space_remove_edge(space_, e);
    return with_node(std::move(h), std::make_shared<const NodeTables>(contract_node_tables(node(e.dst), e)));
  }

 private:
  std::shared_ptr<const LocalScore> scorer_;
  SearchSpace space_;
  std::vector<std::shared_ptr<const NodeTables>> nodes_;
};

inline SubsetCode banned_code(int i, const TopOrder& o, const TableSet& t) { return banned_code(t.node(i), o); }

/// Node i's contribution to the restricted order score.
inline double restricted_node_logscore(const NodeTables& t, const TopOrder& o) {
  ++table_counters().reads;
  return t.banned[banned_code(t, o)];
}

/// Node i's contribution to the plus-one order score: allowed predecessors
/// plus at most one preceding node from outside the space.
inline double plus_node_logscore(const NodeTables& t, const TopOrder& o) {
  const SubsetCode c = banned_code(t, o);
  const int pos = o.position(t.node);
  double acc = t.banned[c];
  std::uint64_t reads = 1;
  for (int k = 0; k < t.q(); ++k) {
    if (o.position(t.plus_cands[k]) >= pos) continue;
    acc = log_add(acc, t.plus_banned_at(c, k));
    ++reads;
  }
  table_counters().reads += reads;
  return acc;
}

/// log of the restricted order score: sum over compatible DAGs within the space.
inline double restricted_order_logscore(const TopOrder& o, const TableSet& t) {
  require(o.p() == t.p(), "restricted_order_logscore: dimension mismatch");
  double total = 0.0;
  for (int i = 0; i < t.p(); ++i) total += restricted_node_logscore(t.node(i), o);
  return total;
}

inline double plus_order_logscore(const TopOrder& o, const TableSet& t) {
  require(o.p() == t.p(), "plus_order_logscore: dimension mismatch");
  double total = 0.0;
  for (int i = 0; i < t.p(); ++i) total += plus_node_logscore(t.node(i), o);
  return total;
}

/// Recomputes banned and plus_banned from the score rows; returns the largest
/// absolute deviation from the stored aggregates (0 when both are -inf).
inline double aggregation_error(const NodeTables& t) {
  NodeTables fresh = t;
  detail::aggregate(fresh);
  double worst = 0.0;
  auto cmp = [&](const std::vector<double>& a, const std::vector<double>& b) {
    for (std::size_t k = 0; k < a.size(); ++k) {
      if (a[k] == b[k]) continue;
      worst = std::max(worst, std::abs(a[k] - b[k]));
    }
  };
  cmp(t.banned, fresh.banned);
  cmp(t.plus_banned, fresh.plus_banned);
  return worst;
}

/// Largest entrywise difference between two tables of the same shape
/// (matching -inf entries count as equal); +inf if shapes differ.
inline double table_distance(const NodeTables& a, const NodeTables& b) {
  if (a.node != b.node || a.cands != b.cands || a.plus_cands != b.plus_cands)
    return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  auto cmp = [&](const std::vector<double>& x, const std::vector<double>& y) {
    for (std::size_t k = 0; k < x.size(); ++k) {
      if (x[k] == y[k]) continue;
      const double d = std::abs(x[k] - y[k]);
      worst = std::max(worst, std::isnan(d) ? std::numeric_limits<double>::infinity() : d);
    }
  };
  cmp(a.score, b.score);
  cmp(a.banned, b.banned);
  cmp(a.plus_score, b.plus_score);
  cmp(a.plus_banned, b.plus_banned);
  return worst;
}

/// Hash of every table entry's bit pattern; equal hashes for bit-identical sets.
inline std::uint64_t table_hash(const TableSet& t) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](std::uint64_t v) {
    h ^= v;
    h *= 1099511628211ull;
  };
  auto mix_doubles = [&](const std::vector<double>& xs) {
    for (double x : xs) mix(std::bit_cast<std::uint64_t>(x));
  };
  for (int i = 0; i < t.p(); ++i) {
    const NodeTables& n = t.node(i);
    for (int c : n.cands) mix(static_cast<std::uint64_t>(c));
    mix_doubles(n.score);
    mix_doubles(n.banned);
    mix_doubles(n.plus_score);
    mix_doubles(n.plus_banned);
  }
  return h;
}

namespace detail {

inline nlohmann::json doubles_to_json(const std::vector<double>& xs) {
  nlohmann::json arr = nlohmann::json::array();
  for (double x : xs) arr.push_back(x == kNegInf ? nlohmann::json(nullptr) : nlohmann::json(x));
  return arr;
}

inline std::vector<double> doubles_from_json(const nlohmann::json& j) {
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) out.push_back(v.is_null() ? kNegInf : v.get<double>());
  return out;
}

}  // namespace detail

/// -inf entries are written as null.
inline nlohmann::json to_json(const NodeTables& t) {
  return {{"node", t.node},
          {"cands", t.cands},
          {"score", detail::doubles_to_json(t.score)},
          {"banned", detail::doubles_to_json(t.banned)},
          {"plus_cands", t.plus_cands},
          {"plus_score", detail::doubles_to_json(t.plus_score)},
          {"plus_banned", detail::doubles_to_json(t.plus_banned)}};
}

inline NodeTables node_tables_from_json(const nlohmann::json& j) {
  NodeTables t;
  t.node = j.at("node").get<int>();
  t.cands = j.at("cands").get<std::vector<int>>();
  t.score = detail::doubles_from_json(j.at("score"));
  t.banned = detail::doubles_from_json(j.at("banned"));
  t.plus_cands = j.at("plus_cands").get<std::vector<int>>();
  t.plus_score = detail::doubles_from_json(j.at("plus_score"));
  t.plus_banned = detail::doubles_from_json(j.at("plus_banned"));
  require(t.score.size() == t.rows() && t.banned.size() == t.rows() &&
              t.plus_score.size() == t.rows() * t.plus_cands.size() && t.plus_banned.size() == t.plus_score.size(),
          "node table JSON has inconsistent sizes");
  return t;
}

inline nlohmann::json to_json(const TableSet& t) {
  nlohmann::json nodes = nlohmann::json::array();
  for (int i = 0; i < t.p(); ++i) nodes.push_back(to_json(t.node(i)));
  return {{"p", t.p()}, {"nodes", std::move(nodes)}};
}

}  // namespace brood
