#pragma once

// Ground-truth graph generation (Erdos-Renyi, stochastic block and
// hierarchical block models), linear SEM data synthesis, and a compact
// PC-style skeleton search used to seed initial search spaces.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "brood/bge.hpp"
#include "brood/error.hpp"
#include "brood/graph.hpp"
#include "brood/rng.hpp"

namespace brood {

struct ErSpec {
  double expected_degree = 4.0;
};

struct SbmSpec {
  std::vector<double> block_probs;
  std::vector<std::vector<double>> connect;
};

struct HsbmSpec {
  std::vector<double> proportions;
  std::vector<SbmSpec> clusters;
  /// Edge probability between nodes of different clusters.
  double between = 0.0;
};

using GraphModel = std::variant<ErSpec, SbmSpec, HsbmSpec>;

enum class ErrorModel { Gaussian, Mixture };

/// How the second mixture component N(0, 2) is read.
enum class MixtureScale { Variance, StdDev };

struct SemSpec {
  int p = 20;
  int n = 200;
  GraphModel graph = ErSpec{};
  ErrorModel error = ErrorModel::Gaussian;
  MixtureScale mixture_scale = MixtureScale::Variance;
  double weight_low = 0.4;
  double weight_high = 2.0;
  std::uint64_t seed = 1;

  void validate() const;
};

inline SbmSpec default_sbm(int p) {
  const double q = p;
  return {{0.8, 0.2},
          {{std::min(0.15, 6 / q), std::min(0.01, 2 / q)}, {std::min(0.01, 2 / q), std::min(0.08, 4 / q)}}};
}

inline HsbmSpec default_hsbm(int p) {
  const double q = p;
  HsbmSpec h;
  h.proportions = {0.1, 0.3, 0.6};
  h.clusters.push_back({{1.0}, {{std::min(0.1, 4 / q)}}});
  SbmSpec two = default_sbm(p);
  two.block_probs = {1.0 / 3, 2.0 / 3};
  h.clusters.push_back(two);
  const double strong = std::min(0.2, 8 / q), weak = std::min(0.01, 1 / q), mid = std::min(0.08, 4 / q);
  h.clusters.push_back({{1.0 / 6, 1.0 / 3, 1.0 / 2}, {{strong, weak, strong}, {weak, 0.0, mid}, {strong, mid, mid}}});
  return h;
}

namespace detail {

inline void validate_probs(const std::vector<double>& probs, const std::string& what) {
  require(!probs.empty(), what + ": empty probability vector");
  double s = 0.0;
  for (double v : probs) {
    require(v >= 0.0 && v <= 1.0, what + ": probability outside [0, 1]");
    s += v;
  }
  require(std::abs(s - 1.0) <= 1e-9, what + ": probabilities must sum to 1");
}

inline void validate_sbm(const SbmSpec& s, const std::string& what) {
  validate_probs(s.block_probs, what + " block_probs");
  require(s.connect.size() == s.block_probs.size(), what + ": connection matrix size must match the block count");
  for (const auto& row : s.connect) {
    require(row.size() == s.block_probs.size(), what + ": connection matrix must be square");
    for (double v : row) require(v >= 0.0 && v <= 1.0, what + ": connection probability outside [0, 1]");
  }
}

}  // namespace detail

inline void SemSpec::validate() const {
  require(p >= 1 && p <= kMaxNodes, "SemSpec: p must be in [1, " + std::to_string(kMaxNodes) + "]");
  require(n >= 1, "SemSpec: n must be positive");
  require(weight_low > 0.0 && weight_low <= weight_high, "SemSpec: need 0 < weight_low <= weight_high");
  if (const auto* er = std::get_if<ErSpec>(&graph)) {
    require(er->expected_degree >= 0.0, "SemSpec: expected degree must be non-negative");
    require(p < 2 || er->expected_degree <= p - 1, "SemSpec: expected degree exceeds p - 1");
  } else if (const auto* sbm = std::get_if<SbmSpec>(&graph)) {
    detail::validate_sbm(*sbm, "SBM");
  } else {
    const auto& h = std::get<HsbmSpec>(graph);
    detail::validate_probs(h.proportions, "hSBM proportions");
    require(h.clusters.size() == h.proportions.size(), "hSBM: one block spec per cluster");
    for (std::size_t c = 0; c < h.clusters.size(); ++c) detail::validate_sbm(h.clusters[c], "hSBM cluster " + std::to_string(c));
    require(h.between >= 0.0 && h.between <= 1.0, "hSBM: between-cluster probability outside [0, 1]");
  }
}

/// Splits p nodes by proportion with largest-remainder rounding.
inline std::vector<int> cluster_sizes(int p, const std::vector<double>& proportions) {
  std::vector<int> sizes(proportions.size());
  std::vector<std::pair<double, std::size_t>> rest;
  int used = 0;
  for (std::size_t k = 0; k < proportions.size(); ++k) {
    const double exact = proportions[k] * p;
    sizes[k] = static_cast<int>(std::floor(exact + 1e-9));
    used += sizes[k];
    rest.push_back({exact - sizes[k], k});
  }
  std::stable_sort(rest.begin(), rest.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; used < p; ++k, ++used) ++sizes[rest[k % rest.size()].second];
  return sizes;
}

/// A sampled graph with the community labels that produced it.
struct GraphDraw {
  Dag dag;
  /// Top-level cluster per node (0 outside the hierarchical model).
  std::vector<int> cluster;
  /// Block per node within its cluster (0 for Erdos-Renyi).
  std::vector<int> block;
};

namespace detail {

inline int draw_category(const std::vector<double>& probs, Rng& rng) {
  return std::discrete_distribution<int>(probs.begin(), probs.end())(rng);
}

/// Keeps the directed edges consistent with a uniformly random order.
inline Dag filter_by_random_order(int p, const std::vector<Edge>& edges, Rng& rng) {
  std::vector<int> perm(p);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  const TopOrder o(std::move(perm));
  std::vector<Edge> kept;
  for (const Edge& e : edges)
    if (o.precedes(e.src, e.dst)) kept.push_back(e);
  return Dag::from_edges(p, kept);
}

}  // namespace detail

inline GraphDraw sample_graph_labelled(const SemSpec& spec, Rng& rng) {
  spec.validate();
  const int p = spec.p;
  GraphDraw out;
  out.cluster.assign(p, 0);
  out.block.assign(p, 0);
  if (const auto* er = std::get_if<ErSpec>(&spec.graph)) {
    // Each unordered pair is joined with probability d / (p - 1), oriented
    // along a random order, so the mean total degree is d.
    const double q = p > 1 ? er->expected_degree / (p - 1) : 0.0;
    std::vector<int> perm(p);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Edge> edges;
    for (int a = 0; a < p; ++a)
      for (int b = a + 1; b < p; ++b)
        if (uniform01(rng) < q) edges.push_back({perm[a], perm[b]});
    out.dag = Dag::from_edges(p, edges);
    return out;
  }

  // Block models: connection probability for every ordered pair.
  std::vector<std::vector<double>> prob(p, std::vector<double>(p, 0.0));
  auto fill_sbm = [&](const SbmSpec& s, const std::vector<int>& nodes, int cluster) {
    for (int v : nodes) {
      out.cluster[v] = cluster;
      out.block[v] = detail::draw_category(s.block_probs, rng);
    }
    for (int a : nodes)
      for (int b : nodes)
        if (a != b) prob[a][b] = s.connect[out.block[a]][out.block[b]];
  };
  if (const auto* sbm = std::get_if<SbmSpec>(&spec.graph)) {
    std::vector<int> all(p);
    std::iota(all.begin(), all.end(), 0);
    fill_sbm(*sbm, all, 0);
  } else {
    const auto& h = std::get<HsbmSpec>(spec.graph);
    for (auto& row : prob) std::fill(row.begin(), row.end(), h.between);
    const std::vector<int> sizes = cluster_sizes(p, h.proportions);
    int next = 0;
    for (std::size_t c = 0; c < sizes.size(); ++c) {
      std::vector<int> nodes(sizes[c]);
      std::iota(nodes.begin(), nodes.end(), next);
      next += sizes[c];
      fill_sbm(h.clusters[c], nodes, static_cast<int>(c));
    }
  }
  std::vector<Edge> edges;
  for (int a = 0; a < p; ++a)
    for (int b = 0; b < p; ++b)
      if (a != b && uniform01(rng) < prob[a][b]) edges.push_back({a, b});
  out.dag = detail::filter_by_random_order(p, edges, rng);
  return out;
}

inline Dag sample_graph(const SemSpec& spec, Rng& rng) { return sample_graph_labelled(spec, rng).dag; }

struct GroundTruth {
  Dag dag;
  std::map<Edge, double> weights;
  /// Raw observations, n x p.
  Matrix samples;
  DataSet data;
};

/// Topological order of g (Kahn's algorithm, smallest index first).
inline std::vector<int> topological_sort(const Dag& g) {
  const int p = g.p();
  std::vector<int> indegree(p, 0), out;
  std::vector<std::vector<int>> children(p);
  for (const Edge& e : g.edges()) {
    ++indegree[e.dst];
    children[e.src].push_back(e.dst);
  }
  std::vector<int> ready;
  for (int i = p - 1; i >= 0; --i)
    if (indegree[i] == 0) ready.push_back(i);
  while (!ready.empty()) {
    std::sort(ready.rbegin(), ready.rend());
    const int v = ready.back();
    ready.pop_back();
    out.push_back(v);
    for (int c : children[v])
      if (--indegree[c] == 0) ready.push_back(c);
  }
  require(static_cast<int>(out.size()) == p, "topological_sort: graph has a cycle");
  return out;
}

/// X_i = e_i + sum over parents j of B_ji X_j with B_ji ~ U(low, high).
inline GroundTruth sample_sem(const Dag& g, const SemSpec& spec, Rng& rng) {
  spec.validate();
  require(g.p() == spec.p, "sample_sem: graph and spec disagree on p");
  require(is_acyclic(g.all_parents()), "sample_sem: graph has a cycle");
  GroundTruth gt;
  gt.dag = g;
  std::uniform_real_distribution<double> weight(spec.weight_low, spec.weight_high);
  for (const Edge& e : g.edges()) gt.weights[e] = weight(rng);

  const double second_sd = spec.mixture_scale == MixtureScale::Variance ? std::sqrt(2.0) : 2.0;
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix x(spec.n, spec.p);
  const std::vector<int> order = topological_sort(g);
  for (int v : order)
    for (int r = 0; r < spec.n; ++r) {
      double e = normal(rng);
      if (spec.error == ErrorModel::Mixture && uniform01(rng) < 0.5) e *= second_sd;
      double value = e;
      g.parents(v).for_each([&](int j) { value += gt.weights.at({j, v}) * x(r, j); });
      x(r, v) = value;
    }
  gt.data = DataSet(x);
  gt.samples = std::move(x);
  return gt;
}

/// Graph and data from one seed.
inline GroundTruth synthesize(const SemSpec& spec) {
  Rng rng = stream_rng(spec.seed, 0);
  const Dag g = sample_graph(spec, rng);
  return sample_sem(g, spec, rng);
}

/// Initial-space caps for the plus-one and fixed-sparsity regimes.
inline int plus_one_cap(int p) { return std::max(10, static_cast<int>(std::lround(3 + 0.05 * p))); }
inline int fixed_cap(int p) { return std::max(12, static_cast<int>(std::lround(3 + 0.06 * p))); }

/// Default significance level for skeleton tests.
inline double default_pc_alpha(int p) { return std::min(0.4, 20.0 / p); }

namespace detail {

/// Partial correlation of columns a and b given s, from a correlation matrix.
inline double partial_correlation(const Matrix& corr, int a, int b, const std::vector<int>& s) {
  if (s.empty()) return corr(a, b);
  std::vector<int> idx{a, b};
  idx.insert(idx.end(), s.begin(), s.end());
  const auto k = static_cast<Eigen::Index>(idx.size());
  Matrix sub(k, k);
  for (Eigen::Index r = 0; r < k; ++r)
    for (Eigen::Index c = 0; c < k; ++c) sub(r, c) = corr(idx[r], idx[c]);
  const Matrix prec = sub.completeOrthogonalDecomposition().pseudoInverse();
  const double denom = std::sqrt(prec(0, 0) * prec(1, 1));
  return denom > 0.0 ? -prec(0, 1) / denom : 0.0;
}

/// Calls f on every size-k subset of items until it returns true.
template <class F>
bool any_subset(const std::vector<int>& items, int k, F&& f) {
  if (k > static_cast<int>(items.size())) return false;
  std::vector<int> pick(k);
  std::iota(pick.begin(), pick.end(), 0);
  std::vector<int> s(k);
  while (true) {
    for (int t = 0; t < k; ++t) s[t] = items[pick[t]];
    if (f(s)) return true;
    int t = k - 1;
    while (t >= 0 && pick[t] == static_cast<int>(items.size()) - k + t) --t;
    if (t < 0) return false;
    ++pick[t];
    for (int u = t + 1; u < k; ++u) pick[u] = pick[u - 1] + 1;
  }
}

}  // namespace detail

/// Order-stable skeleton search with Fisher-z partial-correlation tests and
/// conditioning sets of size at most max_cond. The result allows both
/// directions of every retained pair. With a cap, the weakest pairs at
/// over-full nodes are dropped until every node has at most cap neighbours.
inline SearchSpace pc_skeleton(const DataSet& d, double alpha, int max_cond, std::optional<int> cap = std::nullopt,
                               std::vector<std::string>* warnings = nullptr) {
  const int p = d.p(), n = d.n();
  require(alpha > 0.0 && alpha < 1.0, "pc_skeleton: alpha must be in (0, 1)");
  require(max_cond >= 0, "pc_skeleton: max_cond must be non-negative");
  require(n > 3, "pc_skeleton: need more than 3 observations for Fisher-z tests");
  if (n - max_cond - 3 < 1) {
    if (warnings) warnings->push_back("pc_skeleton: too few observations for conditional tests; using order-0 tests only");
    max_cond = 0;
  }

  Matrix corr = Matrix::Zero(p, p);
  const Matrix& xtx = d.xtx();
  for (int a = 0; a < p; ++a)
    for (int b = 0; b < p; ++b) {
      const double s = std::sqrt(xtx(a, a) * xtx(b, b));
      corr(a, b) = a == b ? 1.0 : (s > 0.0 ? xtx(a, b) / s : 0.0);
    }

  std::vector<NodeSet> adj(p);
  for (int a = 0; a < p; ++a)
    for (int b = 0; b < p; ++b)
      if (a != b) adj[a].insert(b);
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> strength(p, std::vector<double>(p, inf));

  for (int l = 0; l <= max_cond; ++l) {
    const std::vector<NodeSet> snapshot = adj;
    bool tested = false;
    for (int a = 0; a < p; ++a)
      for (int b = a + 1; b < p; ++b) {
        if (!adj[a].contains(b)) continue;
        auto independent = [&](const std::vector<int>& s) {
          tested = true;
          const double r = std::clamp(detail::partial_correlation(corr, a, b, s), -1.0 + 1e-15, 1.0 - 1e-15);
          const double z = std::sqrt(static_cast<double>(n - l - 3)) * std::abs(std::atanh(r));
          strength[a][b] = strength[b][a] = std::min(strength[a][b], z);
          return std::erfc(z / std::sqrt(2.0)) > alpha;
        };
        bool removed = false;
        for (int side : {a, b}) {
          if (removed) break;
          NodeSet others = snapshot[side];
          others.erase(side == a ? b : a);
          std::vector<int> items;
          others.for_each([&](int v) { items.push_back(v); });
          removed = detail::any_subset(items, l, independent);
        }
        if (removed) {
          adj[a].erase(b);
          adj[b].erase(a);
        }
      }
    if (!tested) break;
  }

  if (cap) {
    struct Pair {
      double z;
      int a, b;
    };
    std::vector<Pair> pairs;
    for (int a = 0; a < p; ++a)
      for (int b = a + 1; b < p; ++b)
        if (adj[a].contains(b)) pairs.push_back({strength[a][b], a, b});
    std::sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) {
      return std::tie(x.z, x.a, x.b) < std::tie(y.z, y.a, y.b);
    });
    for (const Pair& pr : pairs)
      if (adj[pr.a].size() > *cap || adj[pr.b].size() > *cap) {
        adj[pr.a].erase(pr.b);
        adj[pr.b].erase(pr.a);
      }
  }
  return SearchSpace(p, std::move(adj), cap);
}

// ---------------------------------------------------------------------------
// Serialization.

inline nlohmann::json to_json(const SbmSpec& s) { return {{"block_probs", s.block_probs}, {"connect", s.connect}}; }

inline SbmSpec sbm_from_json(const nlohmann::json& j) {
  return {j.at("block_probs").get<std::vector<double>>(), j.at("connect").get<std::vector<std::vector<double>>>()};
}

inline nlohmann::json to_json(const SemSpec& s) {
  nlohmann::json g;
  if (const auto* er = std::get_if<ErSpec>(&s.graph)) {
    g = {{"model", "er"}, {"expected_degree", er->expected_degree}};
  } else if (const auto* sbm = std::get_if<SbmSpec>(&s.graph)) {
    g = to_json(*sbm);
    g["model"] = "sbm";
  } else {
    const auto& h = std::get<HsbmSpec>(s.graph);
    nlohmann::json cl = nlohmann::json::array();
    for (const auto& c : h.clusters) cl.push_back(to_json(c));
    g = {{"model", "hsbm"}, {"proportions", h.proportions}, {"clusters", cl}, {"between", h.between}};
  }
  return {{"p", s.p},
          {"n", s.n},
          {"graph", g},
          {"error", s.error == ErrorModel::Gaussian ? "gaussian" : "mixture"},
          {"mixture_scale", s.mixture_scale == MixtureScale::Variance ? "variance" : "sd"},
          {"weight_low", s.weight_low},
          {"weight_high", s.weight_high},
          {"seed", s.seed}};
}

/// Reads a spec; omitted fields keep their defaults, and a graph block that
/// names only its model gets that model's default parameters for p.
inline SemSpec sem_spec_from_json(const nlohmann::json& j) {
  SemSpec s;
  try {
    s.p = j.value("p", s.p);
    s.n = j.value("n", s.n);
    s.weight_low = j.value("weight_low", s.weight_low);
    s.weight_high = j.value("weight_high", s.weight_high);
    s.seed = j.value("seed", s.seed);
    const std::string err = j.value("error", std::string("gaussian"));
    require(err == "gaussian" || err == "mixture", "unknown error model '" + err + "'");
    s.error = err == "gaussian" ? ErrorModel::Gaussian : ErrorModel::Mixture;
    const std::string scale = j.value("mixture_scale", std::string("variance"));
    require(scale == "variance" || scale == "sd", "unknown mixture scale '" + scale + "'");
    s.mixture_scale = scale == "variance" ? MixtureScale::Variance : MixtureScale::StdDev;
    if (!j.contains("graph")) s.graph = ErSpec{std::min(4.0, std::max(0.0, s.p - 1.0))};
    if (j.contains("graph")) {
      const auto& g = j.at("graph");
      const std::string model = g.value("model", std::string("er"));
      if (model == "er") {
        s.graph = ErSpec{g.value("expected_degree", std::min(4.0, std::max(0.0, s.p - 1.0)))};
      } else if (model == "sbm") {
        s.graph = g.contains("block_probs") ? sbm_from_json(g) : default_sbm(s.p);
      } else if (model == "hsbm") {
        HsbmSpec h = default_hsbm(s.p);
        if (g.contains("proportions")) h.proportions = g.at("proportions").get<std::vector<double>>();
        if (g.contains("clusters")) {
          h.clusters.clear();
          for (const auto& c : g.at("clusters")) h.clusters.push_back(sbm_from_json(c));
        }
        h.between = g.value("between", h.between);
        s.graph = h;
      } else {
        require(false, "unknown graph model '" + model + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad synth spec: ") + e.what());
  }
  s.validate();
  return s;
}

/// Data as CSV with a header row X1..Xp, printed to round-trip exactly.
inline std::string data_csv(const Matrix& x) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index c = 0; c < x.cols(); ++c) os << (c ? "," : "") << 'X' << c + 1;
  os << '\n';
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) os << (c ? "," : "") << x(r, c);
    os << '\n';
  }
  return os.str();
}

inline std::string weights_csv(const std::map<Edge, double>& w) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << "src,dst,weight\n";
  for (const auto& [e, v] : w) os << e.src << ',' << e.dst << ',' << v << '\n';
  return os.str();
}

}  // namespace brood
