#include <gtest/gtest.h>

#include <numeric>

#include "brood/exact_oracle.hpp"
#include "brood/metrics.hpp"
#include "brood/order_kernel.hpp"
#include "support.hpp"

using namespace brood;

namespace {

Dag random_dag(int p, double density, std::mt19937_64& gen) {
  std::bernoulli_distribution keep(density);
  std::vector<int> perm(p);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), gen);
  std::vector<Edge> edges;
  for (int a = 0; a < p; ++a)
    for (int b = a + 1; b < p; ++b)
      if (keep(gen)) edges.push_back({perm[a], perm[b]});
  return Dag::from_edges(p, edges);
}

EdgeProbMatrix random_probs(int p, EdgeMode mode, std::mt19937_64& gen, int levels = 0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix m = Matrix::Zero(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j)
      if (i != j) m(i, j) = levels ? std::floor(u(gen) * levels) / levels : u(gen);
  if (mode == EdgeMode::Skeleton) m = (0.5 * (m + m.transpose())).eval();
  return {m, mode};
}

double brute_auc(const std::vector<double>& s, const std::vector<bool>& l) {
  double c = 0.0, pairs = 0.0;
  for (std::size_t a = 0; a < s.size(); ++a)
    for (std::size_t b = 0; b < s.size(); ++b)
      if (l[a] && !l[b]) {
        pairs += 1.0;
        c += s[a] > s[b] ? 1.0 : (s[a] == s[b] ? 0.5 : 0.0);
      }
  return c / pairs;
}

}  // namespace

TEST(EdgeProbs, SingleDagGivesAdjacency) {
  const Dag g = Dag::from_edges(3, std::vector<Edge>{{0, 1}, {2, 1}});
  const std::vector<Dag> trace(5, g);
  const EdgeProbMatrix d = edge_probs(trace, EdgeMode::Directed);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_EQ(d.prob(i, j), g.has_edge(i, j) ? 1.0 : 0.0);
  EXPECT_THROW(edge_probs(std::vector<Dag>{}, EdgeMode::Directed), ValidationError);
}

TEST(EdgeProbs, OppositeDirections) {
  const std::vector<Dag> trace{Dag::from_edges(2, std::vector<Edge>{{0, 1}}), Dag::from_edges(2, std::vector<Edge>{{1, 0}})};
  const EdgeProbMatrix d = edge_probs(trace, EdgeMode::Directed);
  EXPECT_EQ(d.prob(0, 1), 0.5);
  EXPECT_EQ(d.prob(1, 0), 0.5);
  const EdgeProbMatrix s = edge_probs(trace, EdgeMode::Skeleton);
  EXPECT_EQ(s.prob(0, 1), 1.0);
  EXPECT_EQ(s.prob(1, 0), 1.0);
}

TEST(EdgeProbs, SampledTraceMatchesExactEdgeMarginals) {
  auto s = std::make_shared<BgeScore>(fixtures::random_data(40, 3, 3));
  const ExactPosterior ep(s);
  const TableSet t(s, SearchSpace::complete(3));
  const TopOrder o({2, 0, 1});
  Rng rng(4);
  std::vector<Dag> trace;
  for (int k = 0; k < 50000; ++k) trace.push_back(sample_dag_given(o, t, rng));
  const EdgeProbMatrix d = edge_probs(trace, EdgeMode::Directed);
  // Exact marginals given the order from DAG enumeration.
  std::vector<double> logs;
  std::vector<const Dag*> compat;
  for (std::size_t k = 0; k < ep.dags().size(); ++k)
    if (order_compatible(ep.dags()[k], o)) {
      logs.push_back(ep.dag_log_scores()[k]);
      compat.push_back(&ep.dags()[k]);
    }
  const Distribution w = detail::normalise_logs(logs);
  Matrix exact = Matrix::Zero(3, 3);
  for (std::size_t k = 0; k < compat.size(); ++k)
    for (const Edge& e : compat[k]->edges()) exact(e.src, e.dst) += w[k];
  EXPECT_LE((d.prob - exact).cwiseAbs().maxCoeff(), 0.01);
}

TEST(Evaluate, PerfectAndConstantScores) {
  const Dag truth = Dag::from_edges(4, std::vector<Edge>{{0, 1}, {1, 2}, {0, 3}});
  for (EdgeMode mode : {EdgeMode::Directed, EdgeMode::Skeleton}) {
    Matrix m = Matrix::Zero(4, 4);
    for (const Edge& e : truth.edges()) {
      m(e.src, e.dst) = 1.0;
      if (mode == EdgeMode::Skeleton) m(e.dst, e.src) = 1.0;
    }
    const MetricsReport r = evaluate({m, mode}, truth);
    EXPECT_EQ(*r.roc_auc, 1.0);
    EXPECT_EQ(*r.pr_auc, 1.0);
    EXPECT_EQ(*r.pr_plus, 1.0);
    EXPECT_EQ(*r.pr_minus, 0.0);
    Matrix c = Matrix::Constant(4, 4, 0.3);
    c.diagonal().setZero();
    EXPECT_EQ(*evaluate({c, mode}, truth).roc_auc, 0.5);
  }
}

TEST(Evaluate, EmptyTruthFlagsUndefinedMetrics) {
  const MetricsReport r = evaluate({Matrix::Zero(3, 3), EdgeMode::Directed}, Dag(3));
  EXPECT_FALSE(r.roc_auc.has_value());
  EXPECT_FALSE(r.pr_auc.has_value());
  EXPECT_FALSE(r.pr_plus.has_value());
  EXPECT_EQ(*r.pr_minus, 0.0);
  EXPECT_EQ(metrics_csv_row(r, EdgeMode::Directed), "directed,,,,0,0");
}

TEST(Evaluate, AucMatchesBruteForceConcordance) {
  std::mt19937_64 gen(5);
  for (int k = 0; k < 200; ++k) {
    const int p = 3 + k % 8;
    const Dag truth = random_dag(p, 0.3, gen);
    const EdgeMode mode = k % 2 ? EdgeMode::Skeleton : EdgeMode::Directed;
    const EdgeProbMatrix probs = random_probs(p, mode, gen, k % 3 == 0 ? 4 : 0);
    const auto [s, l] = metric_instances(probs, truth);
    const MetricsReport r = evaluate(probs, truth);
    if (!r.roc_auc) continue;
    EXPECT_NEAR(*r.roc_auc, brute_auc(s, l), 1e-12);
    EXPECT_GE(*r.pr_auc, 0.0);
    EXPECT_LE(*r.pr_auc, 1.0 + 1e-12);
  }
}

TEST(Evaluate, AveragePrecisionHandExample) {
  // Ranked labels 1, 0, 1, 0: AP = (1/2)(1/1) + (1/2)(2/3).
  const std::vector<double> s{0.9, 0.8, 0.7, 0.1};
  const std::vector<bool> l{true, false, true, false};
  EXPECT_NEAR(*pr_auc(s, l), 0.5 + 1.0 / 3.0, 1e-15);
  // A tie between one positive and one negative at the top counts as one step.
  EXPECT_NEAR(*pr_auc({0.5, 0.5}, {true, false}), 0.5, 1e-15);
}

TEST(Evaluate, AucInvariantToMonotoneTransform) {
  std::mt19937_64 gen(6);
  for (int k = 0; k < 50; ++k) {
    const Dag truth = random_dag(7, 0.3, gen);
    EdgeProbMatrix probs = random_probs(7, EdgeMode::Directed, gen);
    EdgeProbMatrix warped = probs;
    warped.prob = probs.prob.array().pow(3.0).matrix();
    const auto a = evaluate(probs, truth), b = evaluate(warped, truth);
    if (!a.roc_auc) continue;
    EXPECT_NEAR(*a.roc_auc, *b.roc_auc, 1e-15);
    EXPECT_NEAR(*a.pr_auc, *b.pr_auc, 1e-15);
  }
}

TEST(Evaluate, SkeletonCreditsAtLeastDirected) {
  std::mt19937_64 gen(7);
  for (int k = 0; k < 30; ++k) {
    const Dag truth = random_dag(6, 0.4, gen);
    if (truth.edge_count() == 0) continue;
    std::vector<Dag> trace;
    for (int t = 0; t < 20; ++t) trace.push_back(random_dag(6, 0.4, gen));
    const auto d = evaluate(edge_probs(trace, EdgeMode::Directed), truth);
    const auto s = evaluate(edge_probs(trace, EdgeMode::Skeleton), truth);
    EXPECT_GE(*s.pr_plus, *d.pr_plus - 1e-15);
  }
}

TEST(Evaluate, PermutationEquivariance) {
  std::mt19937_64 gen(9);
  for (int k = 0; k < 30; ++k) {
    const int p = 6;
    const Dag truth = random_dag(p, 0.4, gen);
    const EdgeMode mode = k % 2 ? EdgeMode::Skeleton : EdgeMode::Directed;
    const EdgeProbMatrix probs = random_probs(p, mode, gen);
    std::vector<int> perm(p);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    std::vector<Edge> moved;
    for (const Edge& e : truth.edges()) moved.push_back({perm[e.src], perm[e.dst]});
    Matrix m(p, p);
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j) m(perm[i], perm[j]) = probs.prob(i, j);
    const auto a = evaluate(probs, truth), b = evaluate({m, mode}, Dag::from_edges(p, moved));
    if (!a.roc_auc) continue;
    EXPECT_NEAR(*a.roc_auc, *b.roc_auc, 1e-12);
    EXPECT_NEAR(*a.pr_auc, *b.pr_auc, 1e-12);
    EXPECT_NEAR(*a.pr_plus, *b.pr_plus, 1e-12);
    EXPECT_NEAR(*a.pr_minus, *b.pr_minus, 1e-12);
  }
}
