#pragma once

// Edge-probability estimates from sampled DAGs and the ranking metrics used
// to score them against a ground-truth graph.

#include <algorithm>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "brood/error.hpp"
#include "brood/graph.hpp"
#include "brood/linalg.hpp"

namespace brood {

enum class EdgeMode { Directed, Skeleton };

inline std::string to_string(EdgeMode m) { return m == EdgeMode::Directed ? "directed" : "skeleton"; }

inline EdgeMode parse_edge_mode(const std::string& s) {
  require(s == "directed" || s == "skeleton", "mode must be 'directed' or 'skeleton', got '" + s + "'");
  return s == "directed" ? EdgeMode::Directed : EdgeMode::Skeleton;
}

struct EdgeProbMatrix {
  /// prob(i, j): estimated probability of i -> j (directed) or of the pair
  /// {i, j} (skeleton, symmetric).
  Matrix prob;
  EdgeMode mode = EdgeMode::Directed;

  int p() const { return static_cast<int>(prob.rows()); }
};

inline EdgeProbMatrix edge_probs(std::span<const Dag> trace, EdgeMode mode) {
  require(!trace.empty(), "edge_probs: empty trace");
  const int p = trace.front().p();
  Matrix freq = Matrix::Zero(p, p);
  for (const Dag& g : trace) {
    require(g.p() == p, "edge_probs: DAGs in the trace disagree on p");
    for (const Edge& e : g.edges()) freq(e.src, e.dst) += 1.0;
  }
  freq /= static_cast<double>(trace.size());
  if (mode == EdgeMode::Skeleton) freq = (freq + freq.transpose()).cwiseMin(1.0);
  return {freq, mode};
}

struct MetricsReport {
  /// Undefined when the truth has no edges or no non-edges.
  std::optional<double> roc_auc;
  /// Undefined when the truth has no edges.
  std::optional<double> pr_auc;
  std::optional<double> pr_plus;
  std::optional<double> pr_minus;
  double runtime_seconds = 0.0;
};

/// Scores and labels of the binary instances: ordered pairs (directed) or
/// unordered pairs against the symmetrised truth (skeleton). Diagonal
/// pairs are never instances.
inline std::pair<std::vector<double>, std::vector<bool>> metric_instances(const EdgeProbMatrix& probs, const Dag& truth) {
  require(probs.p() == truth.p(), "evaluate: probabilities and truth disagree on p");
  std::vector<double> score;
  std::vector<bool> label;
  const int p = probs.p();
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) {
      if (i == j) continue;
      if (probs.mode == EdgeMode::Skeleton && j < i) continue;
      score.push_back(probs.prob(i, j));
      label.push_back(truth.has_edge(i, j) || (probs.mode == EdgeMode::Skeleton && truth.has_edge(j, i)));
    }
  return {score, label};
}

/// Mann-Whitney statistic with mid-ranks, so ties count one half.
inline std::optional<double> roc_auc(const std::vector<double>& score, const std::vector<bool>& label) {
  const std::size_t n = score.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
  double pos_rank_sum = 0.0, npos = 0.0;
  for (std::size_t k = 0; k < n;) {
    std::size_t e = k;
    while (e < n && score[idx[e]] == score[idx[k]]) ++e;
    const double mid = 0.5 * static_cast<double>(k + 1 + e);
    for (std::size_t t = k; t < e; ++t)
      if (label[idx[t]]) {
        pos_rank_sum += mid;
        npos += 1.0;
      }
    k = e;
  }
  const double nneg = static_cast<double>(n) - npos;
  if (npos == 0.0 || nneg == 0.0) return std::nullopt;
  return (pos_rank_sum - npos * (npos + 1.0) / 2.0) / (npos * nneg);
}

/// Average precision: precision at each distinct threshold weighted by the
/// recall gained there.
inline std::optional<double> pr_auc(const std::vector<double>& score, const std::vector<bool>& label) {
  const std::size_t n = score.size();
  const auto npos = static_cast<double>(std::count(label.begin(), label.end(), true));
  if (npos == 0.0) return std::nullopt;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  double tp = 0.0, seen = 0.0, ap = 0.0;
  for (std::size_t k = 0; k < n;) {
    std::size_t e = k;
    double gained = 0.0;
    while (e < n && score[idx[e]] == score[idx[k]]) {
      gained += label[idx[e]] ? 1.0 : 0.0;
      ++e;
    }
    tp += gained;
    seen += static_cast<double>(e - k);
    ap += (gained / npos) * (tp / seen);
    k = e;
  }
  return ap;
}

inline MetricsReport evaluate(const EdgeProbMatrix& probs, const Dag& truth) {
  const auto [score, label] = metric_instances(probs, truth);
  MetricsReport r;
  r.roc_auc = roc_auc(score, label);
  r.pr_auc = pr_auc(score, label);
  double sp = 0.0, sn = 0.0, np = 0.0, nn = 0.0;
  for (std::size_t k = 0; k < score.size(); ++k) {
    if (label[k]) {
      sp += score[k];
      np += 1.0;
    } else {
      sn += score[k];
      nn += 1.0;
    }
  }
  if (np > 0.0) r.pr_plus = sp / np;
  if (nn > 0.0) r.pr_minus = sn / nn;
  return r;
}

inline std::string metrics_csv_header() { return "mode,roc_auc,pr_auc,pr_plus,pr_minus,runtime_seconds"; }

/// Undefined metrics are written as empty cells.
inline std::string metrics_csv_row(const MetricsReport& r, EdgeMode mode) {
  std::ostringstream os;
  os.precision(17);
  auto cell = [&](const std::optional<double>& v) {
    os << ',';
    if (v) os << *v;
  };
  os << to_string(mode);
  cell(r.roc_auc);
  cell(r.pr_auc);
  cell(r.pr_plus);
  cell(r.pr_minus);
  os << ',' << r.runtime_seconds;
  return os.str();
}

}  // namespace brood
