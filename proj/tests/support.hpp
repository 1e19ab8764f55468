#pragma once

// Shared fixtures for the unit and acceptance tests: random data, random
// spaces and an independent dense BGe reference.

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "brood/bge.hpp"
#include "brood/graph.hpp"

namespace brood::fixtures {

/// n x p Gaussian data with a random lower-triangular mixing, so columns are correlated.
inline DataSet random_data(int n, int p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  Matrix mix = Matrix::Zero(p, p);
  for (int r = 0; r < p; ++r)
    for (int c = 0; c <= r; ++c) mix(r, c) = (r == c) ? 1.0 : z(rng);
  Matrix raw(n, p);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < p; ++c) raw(r, c) = z(rng);
  raw = raw * mix.transpose();
  raw.rowwise() += Eigen::RowVectorXd::LinSpaced(p, 1.0, 2.0);
  return DataSet(raw);
}

/// Each ordered pair included independently with probability `density`,
/// then per-node parent lists trimmed at random down to `cap`.
inline SearchSpace random_space(int p, double density, std::optional<int> cap, std::mt19937_64& rng) {
  std::bernoulli_distribution keep(density);
  std::vector<NodeSet> allowed(p);
  for (int i = 0; i < p; ++i) {
    std::vector<int> picks;
    for (int j = 0; j < p; ++j)
      if (j != i && keep(rng)) picks.push_back(j);
    std::shuffle(picks.begin(), picks.end(), rng);
    if (cap && static_cast<int>(picks.size()) > *cap) picks.resize(static_cast<std::size_t>(*cap));
    allowed[i] = NodeSet::from(picks);
  }
  return SearchSpace(p, allowed, cap);
}

inline TopOrder random_order(int p, std::mt19937_64& rng) {
  std::vector<int> perm(p);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  return TopOrder(perm);
}

/// log of the multivariate gamma function Gamma_d(a).
inline double log_multigamma(int d, double a) {
  double v = 0.25 * d * (d - 1) * std::log(std::numbers::pi);
  for (int j = 1; j <= d; ++j) v += std::lgamma(a + (1.0 - j) / 2.0);
  return v;
}

/// Dense marginal likelihood of the columns `ys`, built from the raw
/// observations without any of the library's factor reuse.
inline double dense_log_marginal(const DataSet& d, const std::vector<int>& ys, double alpha_mu = 1.0) {
  const int n = d.n(), p = d.p(), dim = static_cast<int>(ys.size());
  if (dim == 0) return 0.0;
  const double aw = p + 2.0;
  const double t = alpha_mu * (aw - p - 1.0) / (alpha_mu + 1.0);
  Matrix r = Matrix::Identity(dim, dim) * t;
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < dim; ++a)
      for (int b = 0; b < dim; ++b) r(a, b) += d.x()(s, ys[a]) * d.x()(s, ys[b]);
  const double logdet_r = std::log(r.determinant());
  const double logdet_t = dim * std::log(t);
  return -0.5 * n * dim * std::log(std::numbers::pi) + 0.5 * dim * std::log(alpha_mu / (n + alpha_mu)) +
         log_multigamma(dim, (n + aw - p + dim) / 2.0) - log_multigamma(dim, (aw - p + dim) / 2.0) +
         0.5 * (aw - p + dim) * logdet_t - 0.5 * (n + aw - p + dim) * logdet_r;
}

/// Reference local score: ratio of dense marginals of {pa, i} and pa.
inline double dense_node_score(const DataSet& d, int i, const NodeSet& pa) {
  std::vector<int> base = pa.to_vector();
  std::vector<int> fam = base;
  fam.push_back(i);
  return dense_log_marginal(d, fam) - dense_log_marginal(d, base);
}

}  // namespace brood::fixtures
