#include <gtest/gtest.h>

#include <map>
#include <random>

#include "brood/bge.hpp"
#include "brood/graph.hpp"
#include "support.hpp"

using namespace brood;

TEST(LogSpace, LogSumExpExamples) {
  const std::vector<double> zeros{0.0, 0.0};
  EXPECT_NEAR(log_sum_exp(zeros), std::log(2.0), 1e-15);
  const std::vector<double> one{-3.25};
  EXPECT_EQ(log_sum_exp(one), -3.25);
  const std::vector<double> tiny{-1000.0, -1000.0, -1000.0};
  EXPECT_NEAR(log_sum_exp(tiny), -1000.0 + std::log(3.0), 1e-12);
  EXPECT_EQ(log_sum_exp(std::vector<double>{}), kNegInf);
  const std::vector<double> with_inf{kNegInf, 1.0};
  EXPECT_EQ(log_sum_exp(with_inf), 1.0);
}

TEST(LogSpace, LogSumExpShiftAndPermutation) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-30.0, 30.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> xs(1 + trial % 9);
    for (double& x : xs) x = u(rng);
    const double base = log_sum_exp(xs);
    const double c = u(rng);
    std::vector<double> shifted = xs;
    for (double& x : shifted) x += c;
    EXPECT_NEAR(log_sum_exp(shifted), base + c, 1e-12 * std::max(1.0, std::abs(base + c)));
    std::shuffle(xs.begin(), xs.end(), rng);
    EXPECT_NEAR(log_sum_exp(xs), base, 1e-12 * std::max(1.0, std::abs(base)));
  }
}

TEST(LogSpace, LogMinusExpExamples) {
  EXPECT_NEAR(log_minus_exp(std::log(2.0), 0.0), 0.0, 1e-15);
  EXPECT_EQ(log_minus_exp(1.5, kNegInf), 1.5);
  EXPECT_EQ(log_minus_exp(2.0, 2.0), kNegInf);
  EXPECT_THROW(log_minus_exp(1.0, 2.0), RuntimeError);
}

TEST(LogSpace, LogMinusExpRoundTrip) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> scale(-30.0, 30.0);
  std::uniform_real_distribution<double> jitter(-5.0, 5.0);
  for (int trial = 0; trial < 5000; ++trial) {
    const double m = scale(rng);
    const double a = m + jitter(rng), b = m + jitter(rng);
    const double c = log_add(a, b);
    EXPECT_NEAR(log_minus_exp(c, b), a, 1e-10) << "a=" << a << " b=" << b;
  }
}

// When exp(a) is far below exp(b) the rounding of c itself dominates; the
// recovered value is then only as good as eps * exp(b - a).
TEST(LogSpace, LogMinusExpIllConditionedErrorScales) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-30.0, 30.0);
  for (int trial = 0; trial < 5000; ++trial) {
    const double a = u(rng), b = u(rng);
    const double c = log_add(a, b);
    const double back = log_minus_exp(c, b);
    const double cond = std::exp(std::max(0.0, b - a));
    if (c - b > kLogMinusExpTolerance * std::max(1.0, std::abs(b))) {
      EXPECT_NEAR(back, a, 1e-15 * (1.0 + std::abs(c)) * 8.0 * cond + 1e-13);
    } else {
      EXPECT_EQ(back, kNegInf);
    }
  }
}

TEST(DataSet, CentresAndKeepsMeans) {
  Matrix raw(3, 2);
  raw << 1, 10, 2, 20, 3, 60;
  const DataSet d(raw);
  EXPECT_NEAR(d.means()(0), 2.0, 1e-15);
  EXPECT_NEAR(d.means()(1), 30.0, 1e-15);
  EXPECT_NEAR(d.x().col(0).sum(), 0.0, 1e-12);
  EXPECT_NEAR(d.xtx()(0, 1), d.xtx()(1, 0), 0.0);
  EXPECT_TRUE(d.degenerate_columns().empty());
}

TEST(DataSet, FlagsConstantColumns) {
  Matrix raw(4, 2);
  raw << 1, 5, 2, 5, 3, 5, 4, 5;
  EXPECT_EQ(DataSet(raw).degenerate_columns(), std::vector<int>{1});
}

TEST(DataSet, CsvParsing) {
  const DataSet d = parse_data_csv("a,b\n1,2\n3,4.5\n", true);
  EXPECT_EQ(d.n(), 2);
  EXPECT_EQ(d.p(), 2);
  EXPECT_NEAR(d.means()(1), 3.25, 1e-15);
  EXPECT_EQ(parse_data_csv("1,2\n3,4\n", false).n(), 2);
  EXPECT_THROW(parse_data_csv("1,\n3,4\n", false), ValidationError);
  EXPECT_THROW(parse_data_csv("1,NA\n3,4\n", false), ValidationError);
  EXPECT_THROW(parse_data_csv("1,2\n3\n", false), ValidationError);
  EXPECT_THROW(parse_data_csv("a,b\n", true), ValidationError);
}

TEST(BuildHyper, DefaultsAndScaleMatrix) {
  const DataSet d = fixtures::random_data(10, 4, 1);
  const BgeHyper h = build_hyper(d);
  EXPECT_EQ(h.alpha_w, 6.0);
  EXPECT_EQ(h.alpha_star, 16.0);
  EXPECT_NEAR(h.t_scale, 0.5, 1e-15);
  const Matrix expected = d.x().transpose() * d.x() + 0.5 * Matrix::Identity(4, 4);
  EXPECT_LT((h.r_mat - expected).cwiseAbs().maxCoeff(), 1e-10);
  Eigen::LLT<Matrix> llt(h.r_mat);
  EXPECT_EQ(llt.info(), Eigen::Success);
  EXPECT_THROW(build_hyper(d, 0.0), ValidationError);
  EXPECT_THROW(build_hyper(d, 1.0, 5.0), ValidationError);
}

TEST(NodeScore, MatchesDenseReference) {
  const DataSet d = fixtures::random_data(25, 4, 2);
  const BgeHyper h = build_hyper(d);
  for (int i = 0; i < 4; ++i) {
    NodeSet others = NodeSet::range(4);
    others.erase(i);
    for (const NodeSet& pa : detail::subsets_of(others))
      EXPECT_NEAR(node_score(i, pa, h), fixtures::dense_node_score(d, i, pa), 1e-9);
  }
}

TEST(NodeScore, EmptyParentsIsOneDimensionalMarginal) {
  const DataSet d = fixtures::random_data(30, 3, 6);
  const BgeHyper h = build_hyper(d);
  for (int i = 0; i < 3; ++i)
    EXPECT_NEAR(node_score(i, NodeSet{}, h), fixtures::dense_log_marginal(d, {i}), 1e-9);
}

TEST(NodeScore, ScoreEquivalenceTwoNodes) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const DataSet d = fixtures::random_data(20, 2, seed);
    const BgeHyper h = build_hyper(d);
    const double fwd = node_score(1, NodeSet::single(0), h) + node_score(0, NodeSet{}, h);
    const double rev = node_score(0, NodeSet::single(1), h) + node_score(1, NodeSet{}, h);
    EXPECT_NEAR(fwd, rev, 1e-9);
    EXPECT_NEAR(fwd, fixtures::dense_log_marginal(d, {0, 1}), 1e-9);
  }
}

TEST(NodeScore, Deterministic) {
  const DataSet d = fixtures::random_data(15, 3, 8);
  const BgeHyper a = build_hyper(d), b = build_hyper(d);
  EXPECT_EQ(node_score(2, NodeSet::single(0), a), node_score(2, NodeSet::single(0), b));
}

TEST(NodeScore, SingularFamilyIsNegInf) {
  Matrix raw(6, 3);
  raw << 1, 2, 0, 2, 4, 1, 3, 6, 0, 4, 8, 1, 5, 10, 0, 6, 12, 1;
  const DataSet d(raw);
  BgeHyper h = build_hyper(d);
  // Remove the prior regulariser so the collinear pair really is singular.
  h.r_mat = d.xtx();
  score_counters() = {};
  EXPECT_EQ(node_score(1, NodeSet::single(0), h), kNegInf);
  EXPECT_GT(score_counters().singular, 0u);
  EXPECT_TRUE(std::isfinite(build_hyper(d).r_mat.determinant()));
}

TEST(NodeScore, RejectsSelfParent) {
  const BgeHyper h = build_hyper(fixtures::random_data(10, 3, 1));
  EXPECT_THROW(node_score(1, NodeSet::single(1), h), ValidationError);
}

TEST(CholRank1, IdentityWithZeroVector) {
  const Matrix l = chol_rank1_update(Matrix::Identity(4, 4), Vector::Zero(4));
  EXPECT_LT((l - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(CholRank1, MatchesFreshFactorisation) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int k = 1; k <= 18; ++k) {
    Matrix g(k, k + 3);
    for (int r = 0; r < k; ++r)
      for (int c = 0; c < k + 3; ++c) g(r, c) = z(rng);
    const Matrix a = g * g.transpose() + Matrix::Identity(k, k);
    Vector v1(k), v2(k);
    for (int r = 0; r < k; ++r) v1(r) = z(rng), v2(r) = z(rng);
    const Matrix l0 = a.llt().matrixL();
    const Matrix l1 = chol_rank1_update(l0, v1);
    const Matrix f1 = Matrix(a + v1 * v1.transpose()).llt().matrixL();
    EXPECT_LT((l1 - f1).cwiseAbs().maxCoeff(), 1e-10) << "k=" << k;
    const Matrix l2 = chol_rank1_update(l1, v2);
    const Matrix f2 = Matrix(a + v1 * v1.transpose() + v2 * v2.transpose()).llt().matrixL();
    EXPECT_LT((l2 - f2).cwiseAbs().maxCoeff(), 1e-10) << "k=" << k;
  }
}

TEST(CholRank1, RejectsInvalidFactor) {
  Matrix l = Matrix::Identity(2, 2);
  l(1, 1) = 0.0;
  EXPECT_THROW(chol_rank1_update(l, Vector::Ones(2)), RuntimeError);
}

TEST(PlusOneScores, EmptyCandidates) {
  const BgeHyper h = build_hyper(fixtures::random_data(10, 3, 1));
  EXPECT_TRUE(plus_one_scores(0, NodeSet::single(1), NodeSet{}, h).empty());
}

TEST(PlusOneScores, MatchesNaiveExhaustively) {
  const int p = 6;
  const DataSet d = fixtures::random_data(40, p, 12);
  const BgeHyper h = build_hyper(d);
  std::mt19937_64 rng(2);
  for (int i = 0; i < p; ++i) {
    // Allowed parents: a random triple; plus candidates: everything else.
    std::vector<int> others;
    for (int j = 0; j < p; ++j)
      if (j != i) others.push_back(j);
    std::shuffle(others.begin(), others.end(), rng);
    const NodeSet allowed = NodeSet::from(std::vector<int>(others.begin(), others.begin() + 3));
    const NodeSet plus = NodeSet::range(p) - allowed - NodeSet::single(i);
    for (const NodeSet& pa : detail::subsets_of(allowed)) {
      const auto got = plus_one_scores(i, pa, plus, h);
      const auto cands = plus.to_vector();
      ASSERT_EQ(got.size(), cands.size());
      for (std::size_t k = 0; k < cands.size(); ++k) {
        NodeSet ext = pa;
        ext.insert(cands[k]);
        EXPECT_NEAR(got[k], node_score(i, ext, h), 1e-8);
      }
    }
  }
}

TEST(PlusOneScores, RejectsOverlap) {
  const BgeHyper h = build_hyper(fixtures::random_data(10, 4, 1));
  EXPECT_THROW(plus_one_scores(0, NodeSet::single(1), NodeSet::single(1), h), ValidationError);
  EXPECT_THROW(plus_one_scores(0, NodeSet::single(1), NodeSet::single(0), h), ValidationError);
}

TEST(FunctionScore, CountsEvaluations) {
  FunctionScore s(3, [](int i, const NodeSet& pa) { return i + 0.5 * pa.size(); });
  score_counters() = {};
  const std::vector<int> pa{0, 2};
  EXPECT_EQ(s.score(1, pa), 2.0);
  EXPECT_EQ(score_counters().evaluations, 1u);
}

namespace {

// Skeleton plus v-structures (a -> c <- b with a, b non-adjacent).
std::pair<std::set<std::pair<int, int>>, std::set<std::tuple<int, int, int>>> pattern(const Dag& g) {
  std::set<std::pair<int, int>> skel;
  std::set<std::tuple<int, int, int>> vs;
  for (const Edge& e : g.edges()) skel.insert({std::min(e.src, e.dst), std::max(e.src, e.dst)});
  for (int c = 0; c < g.p(); ++c) {
    const auto pa = g.parents(c).to_vector();
    for (std::size_t x = 0; x < pa.size(); ++x)
      for (std::size_t y = x + 1; y < pa.size(); ++y)
        if (!g.has_edge(pa[x], pa[y]) && !g.has_edge(pa[y], pa[x])) vs.insert({pa[x], pa[y], c});
  }
  return {skel, vs};
}

}  // namespace

TEST(NodeScore, MarkovEquivalentDagsScoreEqually) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (int p = 2; p <= 3; ++p) {
      const DataSet d = fixtures::random_data(30, p, 100 + seed);
      const BgeHyper h = build_hyper(d);
      std::map<decltype(pattern(Dag(p))), std::vector<double>> classes;
      for (const Dag& g : enumerate_dags(p)) {
        double total = 0.0;
        for (int i = 0; i < p; ++i) total += node_score(i, g.parents(i), h);
        classes[pattern(g)].push_back(total);
      }
      for (const auto& [key, totals] : classes)
        for (double t : totals) EXPECT_NEAR(t, totals.front(), 1e-9);
    }
  }
}
