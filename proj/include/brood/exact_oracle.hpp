#pragma once

// Exhaustive small-p posteriors, total-variation bound quantities and exact
// transition matrices of the samplers.

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "brood/bge.hpp"
#include "brood/brood_kernel.hpp"
#include "brood/graph.hpp"
#include "brood/logspace.hpp"
#include "brood/order_kernel.hpp"

namespace brood {

using Distribution = std::vector<double>;

inline constexpr double kNormalisationTolerance = 1e-9;

namespace detail {

inline void require_distribution(const Distribution& a, const char* what) {
  double s = 0.0;
  for (double v : a) {
    require(v >= 0.0 && std::isfinite(v), std::string(what) + ": negative or non-finite probability");
    s += v;
  }
  require(std::abs(s - 1.0) <= kNormalisationTolerance, std::string(what) + ": input is not normalised");
}

/// exp(logs - LSE(logs)); all zeros if every entry is -inf.
inline Distribution normalise_logs(const std::vector<double>& logs) {
  const double z = log_sum_exp(logs);
  Distribution out(logs.size(), 0.0);
  if (z == kNegInf) return out;
  for (std::size_t k = 0; k < logs.size(); ++k) out[k] = std::exp(logs[k] - z);
  return out;
}

}  // namespace detail

/// Half the L1 distance.
inline double tv_distance(const Distribution& a, const Distribution& b) {
  require(a.size() == b.size(), "tv_distance: support mismatch");
  detail::require_distribution(a, "tv_distance");
  detail::require_distribution(b, "tv_distance");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += std::abs(a[k] - b[k]);
  return 0.5 * s;
}

/// sqrt(sum (sqrt a - sqrt b)^2), in [0, sqrt 2].
inline double hellinger(const Distribution& a, const Distribution& b) {
  require(a.size() == b.size(), "hellinger: support mismatch");
  detail::require_distribution(a, "hellinger");
  detail::require_distribution(b, "hellinger");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = std::sqrt(a[k]) - std::sqrt(b[k]);
    s += d * d;
  }
  return std::sqrt(s);
}

/// Log score of a whole DAG. Need not be decomposable: tests inject
/// arbitrary masses through this hook.
using DagScoreFn = std::function<double(const Dag&)>;

inline DagScoreFn decomposable(std::shared_ptr<const LocalScore> s) {
  return [s](const Dag& g) {
    double total = 0.0;
    for (int i = 0; i < g.p(); ++i) total += s->score(i, g.parents(i));
    return total;
  };
}

/// Every DAG and order on p nodes with their enumerated posteriors.
class ExactPosterior {
 public:
  ExactPosterior(int p, DagScoreFn score) : p_(p), dags_(enumerate_dags(p)), orders_(all_orders(p)) {
    log_scores_.reserve(dags_.size());
    for (const Dag& g : dags_) {
      const double v = score(g);
      require(!std::isnan(v), "ExactPosterior: NaN DAG score");
      log_scores_.push_back(v);
    }
    compat_.assign(orders_.size(), {});
    for (std::size_t o = 0; o < orders_.size(); ++o)
      for (std::size_t g = 0; g < dags_.size(); ++g)
        if (order_compatible(dags_[g], orders_[o])) compat_[o].push_back(g);
    dag_posterior_ = detail::normalise_logs(log_scores_);
    std::vector<double> order_logs;
    for (std::size_t o = 0; o < orders_.size(); ++o) order_logs.push_back(order_log_mass(o, std::nullopt, true));
    order_posterior_ = detail::normalise_logs(order_logs);
  }

  ExactPosterior(std::shared_ptr<const LocalScore> s) : ExactPosterior(s->p(), decomposable(s)) {}

  int p() const { return p_; }
  const std::vector<Dag>& dags() const { return dags_; }
  const std::vector<double>& dag_log_scores() const { return log_scores_; }
  const std::vector<TopOrder>& orders() const { return orders_; }
  const Distribution& dag_posterior() const { return dag_posterior_; }
  const Distribution& order_posterior() const { return order_posterior_; }

  std::size_t order_index(const TopOrder& o) const {
    return static_cast<std::size_t>(std::lower_bound(orders_.begin(), orders_.end(), o) - orders_.begin());
  }

  /// log of the sum of DAG scores over DAGs compatible with order o that lie
  /// inside h (inside = true) or outside it (inside = false); no h means all.
  double order_log_mass(std::size_t o, const std::optional<SearchSpace>& h, bool inside) const {
    std::vector<double> terms;
    for (std::size_t g : compat_[o])
      if (!h || dag_in_space(dags_[g], *h) == inside) terms.push_back(log_scores_[g]);
    return log_sum_exp(terms);
  }

  double restricted_log_mass(const SearchSpace& h, const TopOrder& o) const {
    return order_log_mass(order_index(o), h, true);
  }

  Distribution restricted_order_posterior(const SearchSpace& h) const { return order_split(h, true); }
  Distribution omitted_order_posterior(const SearchSpace& h) const { return order_split(h, false); }

  /// Order-induced mass of DAGs outside h: the share of the order-summed
  /// total carried by excluded DAGs.
  double epsilon(const SearchSpace& h) const {
    std::vector<double> in, out;
    for (std::size_t o = 0; o < orders_.size(); ++o) {
      in.push_back(order_log_mass(o, h, true));
      out.push_back(order_log_mass(o, h, false));
    }
    const double li = log_sum_exp(in), lo = log_sum_exp(out);
    if (lo == kNegInf) return 0.0;
    if (li == kNegInf) return 1.0;
    return 1.0 / (1.0 + std::exp(li - lo));
  }

 private:
  Distribution order_split(const SearchSpace& h, bool inside) const {
    require(h.p() == p_, "ExactPosterior: dimension mismatch");
    std::vector<double> logs;
    for (std::size_t o = 0; o < orders_.size(); ++o) logs.push_back(order_log_mass(o, h, inside));
    return detail::normalise_logs(logs);
  }

  int p_;
  std::vector<Dag> dags_;
  std::vector<TopOrder> orders_;
  std::vector<double> log_scores_;
  std::vector<std::vector<std::size_t>> compat_;
  Distribution dag_posterior_;
  Distribution order_posterior_;
};

inline ExactPosterior exact_posteriors(const BgeHyper& hy) {
  return ExactPosterior(std::make_shared<BgeScore>(hy));
}

struct TvReport {
  double epsilon = 0.0;
  /// Undefined when epsilon is zero.
  std::optional<double> c;
  /// c * epsilon, computed without dividing by epsilon.
  double c_epsilon = 0.0;
  double hellinger = 0.0;
  double tv = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  /// Largest pointwise deviation of the order posterior from the
  /// (1 - eps) restricted + eps omitted mixture.
  double mixture_residual = 0.0;
};

/// c and c * eps from the restricted and omitted order posteriors. With
/// pi = (1 - eps) a + eps b, one minus the affinity A = sum sqrt(a pi) is
/// evaluated from the differences sqrt(pi) - sqrt(a) = eps (b - a) / (sqrt(pi) + sqrt(a))
/// so that tiny eps does not cancel.
inline std::pair<std::optional<double>, double> c_constant(const Distribution& restricted, const Distribution& omitted,
                                                           double eps) {
  require(restricted.size() == omitted.size(), "c_constant: support mismatch");
  if (eps <= 0.0) return {std::nullopt, 0.0};
  double half_sq = 0.0;  // 1 - A = (1/2) sum (sqrt pi - sqrt a)^2
  for (std::size_t k = 0; k < restricted.size(); ++k) {
    const double a = restricted[k], b = omitted[k];
    const double pi = (1.0 - eps) * a + eps * b;
    const double denom = std::sqrt(pi) + std::sqrt(a);
    if (denom == 0.0) continue;
    const double diff = eps * (b - a) / denom;
    half_sq += 0.5 * diff * diff;
  }
  const double one_minus_a = half_sq;
  const double c_eps = one_minus_a * (2.0 - one_minus_a);
  return {c_eps / eps, c_eps};
}

inline std::pair<std::optional<double>, double> c_constant(const ExactPosterior& ep, const SearchSpace& h) {
  const double eps = ep.epsilon(h);
  if (eps >= 1.0) return {1.0, 1.0};
  return c_constant(ep.restricted_order_posterior(h), ep.omitted_order_posterior(h), eps);
}

inline TvReport verify_bounds(const ExactPosterior& ep, const SearchSpace& h) {
  TvReport r;
  r.epsilon = ep.epsilon(h);
  const Distribution full = ep.order_posterior();
  const Distribution in = ep.restricted_order_posterior(h);
  const Distribution out = ep.omitted_order_posterior(h);
  for (std::size_t k = 0; k < full.size(); ++k)
    r.mixture_residual = std::max(r.mixture_residual, std::abs(full[k] - ((1.0 - r.epsilon) * in[k] + r.epsilon * out[k])));
  if (r.epsilon >= 1.0) {
    // Nothing inside the space carries mass: the restricted target does not exist.
    r.c = 1.0;
    r.c_epsilon = 1.0;
    r.tv = 1.0;
    r.hellinger = std::sqrt(2.0);
    r.lower = r.upper = 1.0;
    return r;
  }
  const auto [c, c_eps] = c_constant(in, out, r.epsilon);
  r.c = c;
  r.c_epsilon = c_eps;
  r.tv = tv_distance(full, in);
  r.hellinger = hellinger(full, in);
  if (r.epsilon == 0.0) return r;
  const double root = std::sqrt(std::max(0.0, 1.0 - c_eps));
  // 1 - sqrt(1 - x) = x / (1 + sqrt(1 - x)) avoids cancellation for small x.
  const double one_minus_root = c_eps / (1.0 + root);
  r.lower = one_minus_root;
  r.upper = std::min(std::sqrt(2.0 * one_minus_root), 1.0);
  return r;
}

inline TvReport verify_bounds(const BgeHyper& hy, const SearchSpace& h) { return verify_bounds(exact_posteriors(hy), h); }

// ---------------------------------------------------------------------------
// Exact transition matrices.

using TransitionMatrix = Eigen::MatrixXd;

/// Order-move kernel restricted to h, from enumerated restricted masses.
inline TransitionMatrix exact_q0_kernel(const ExactPosterior& ep, const SearchSpace& h) {
  const auto& orders = ep.orders();
  const std::size_t n = orders.size();
  std::vector<double> mass(n);
  for (std::size_t o = 0; o < n; ++o) mass[o] = ep.order_log_mass(o, h, true);
  TransitionMatrix m = TransitionMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  const auto moves = proposal_distribution(ep.p());
  for (std::size_t o = 0; o < n; ++o) {
    for (const auto& [prob, mv] : moves) {
      TopOrder next = orders[o];
      apply_proposal(next, mv);
      const std::size_t to = ep.order_index(next);
      if (to == o) continue;
      const double ratio = mass_ratio(mass[to], mass[o]);
      m(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(to)) += prob * std::min(1.0, ratio);
    }
    m(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(o)) = 1.0 - m.row(static_cast<Eigen::Index>(o)).sum();
  }
  return m;
}

/// State space of the joint sampler: every space within the cap times every order.
struct JointStates {
  int p = 0;
  std::vector<SearchSpace> spaces;
  std::vector<TopOrder> orders;

  std::size_t size() const { return spaces.size() * orders.size(); }
  std::size_t index(std::size_t space, std::size_t order) const { return space * orders.size() + order; }

  std::size_t space_index(const SearchSpace& h) const {
    for (std::size_t k = 0; k < spaces.size(); ++k)
      if (spaces[k].all_allowed().size() == h.all_allowed().size() &&
          std::equal(spaces[k].all_allowed().begin(), spaces[k].all_allowed().end(), h.all_allowed().begin()))
        return k;
    throw ValidationError("space not in the joint state list");
  }
};

inline JointStates joint_states(int p, std::optional<int> cap) {
  require(p >= 1 && p <= 3, "joint transition matrices are limited to p <= 3");
  JointStates js;
  js.p = p;
  js.orders = all_orders(p);
  std::vector<Edge> slots;
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j)
      if (i != j) slots.push_back({j, i});
  for (std::uint64_t bits = 0; bits < (std::uint64_t{1} << slots.size()); ++bits) {
    std::vector<NodeSet> allowed(p);
    for (std::size_t k = 0; k < slots.size(); ++k)
      if ((bits >> k) & 1u) allowed[slots[k].dst].insert(slots[k].src);
    bool ok = true;
    for (int i = 0; i < p; ++i) ok = ok && (!cap || allowed[i].size() <= *cap);
    if (ok) js.spaces.emplace_back(p, allowed, cap);
  }
  return js;
}

/// The mixture kernel (1 - ell) Q0 + ell Q1 over all (space, order) states,
/// with proposal, edge-selection and acceptance probabilities exactly as the
/// sampler implements them, but with every restricted mass enumerated.
inline TransitionMatrix exact_mixture_kernel(const BroodConfig& cfg, const ExactPosterior& ep, const JointStates& js) {
  const std::size_t n = js.size();
  const std::size_t no = js.orders.size();
  std::vector<double> mass(n);
  for (std::size_t h = 0; h < js.spaces.size(); ++h)
    for (std::size_t o = 0; o < no; ++o) mass[js.index(h, o)] = ep.order_log_mass(o, js.spaces[h], true);

  auto total_rate = [&](std::size_t h, std::size_t o, std::vector<std::pair<std::size_t, double>>* moves) {
    const SearchSpace& sp = js.spaces[h];
    const double here = mass[js.index(h, o)];
    double total = 0.0;
    for (int i = 0; i < js.p; ++i)
      for (int j = 0; j < js.p; ++j) {
        if (i == j) continue;
        const Edge e{j, i};
        double rate = 0.0;
        std::size_t to = 0;
        if (sp.has_edge(e)) {
          to = js.space_index(space_remove_edge(sp, e));
          rate = 2.0 * cfg.c_star * mass_ratio(mass[js.index(to, o)], here);
        } else if (!sp.at_cap(i)) {
          to = js.space_index(space_add_edge(sp, e));
          rate = 0.5 * mass_ratio(mass[js.index(to, o)], here);
        } else {
          continue;
        }
        total += rate;
        if (moves) moves->push_back({to, rate});
      }
    return total;
  };

  TransitionMatrix m = TransitionMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  const auto order_moves = proposal_distribution(js.p);
  for (std::size_t h = 0; h < js.spaces.size(); ++h) {
    for (std::size_t o = 0; o < no; ++o) {
      const auto row = static_cast<Eigen::Index>(js.index(h, o));
      if (cfg.ell < 1.0) {
        for (const auto& [prob, mv] : order_moves) {
          TopOrder next = js.orders[o];
          apply_proposal(next, mv);
          const std::size_t to = static_cast<std::size_t>(
              std::lower_bound(js.orders.begin(), js.orders.end(), next) - js.orders.begin());
          if (to == o) continue;
          const double ratio = mass_ratio(mass[js.index(h, to)], mass[js.index(h, o)]);
          m(row, static_cast<Eigen::Index>(js.index(h, to))) += (1.0 - cfg.ell) * prob * std::min(1.0, ratio);
        }
      }
      if (cfg.ell > 0.0) {
        std::vector<std::pair<std::size_t, double>> moves;
        const double total = total_rate(h, o, &moves);
        if (total > 0.0) {
          for (const auto& [to, rate] : moves) {
            const double next_total = total_rate(to, o, nullptr);
            const double accept = next_total > 0.0 ? std::min(1.0, total / next_total) : 1.0;
            m(row, static_cast<Eigen::Index>(js.index(to, o))) += cfg.ell * rate / total * accept;
          }
        }
      }
      m(row, row) = 0.0;
      m(row, row) = 1.0 - m.row(row).sum();
    }
  }
  return m;
}

struct StationaryResult {
  Distribution pi;
  /// max |pi P - pi|.
  double residual = 0.0;
};

/// Stationary vector of a row-stochastic matrix: a direct solve of
/// pi (P - I) = 0 with sum(pi) = 1, then a few power-iteration sweeps.
inline StationaryResult stationary_distribution(const TransitionMatrix& p, int polish_sweeps = 50) {
  const Eigen::Index n = p.rows();
  require(n == p.cols() && n > 0, "stationary_distribution: matrix must be square");
  Eigen::MatrixXd a = p.transpose() - Eigen::MatrixXd::Identity(n, n);
  a.row(n - 1).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  b(n - 1) = 1.0;
  Eigen::VectorXd pi = a.fullPivLu().solve(b);
  for (Eigen::Index k = 0; k < n; ++k) pi(k) = std::max(0.0, pi(k));
  pi /= pi.sum();
  for (int s = 0; s < polish_sweeps; ++s) {
    Eigen::VectorXd next = p.transpose() * pi;
    next /= next.sum();
    pi = next;
  }
  StationaryResult r;
  r.pi.assign(pi.data(), pi.data() + n);
  r.residual = (p.transpose() * pi - pi).cwiseAbs().maxCoeff();
  return r;
}

/// Space marginal of a joint (space, order) distribution.
inline Distribution space_marginal(const JointStates& js, const Distribution& joint) {
  Distribution out(js.spaces.size(), 0.0);
  for (std::size_t h = 0; h < js.spaces.size(); ++h)
    for (std::size_t o = 0; o < js.orders.size(); ++o) out[h] += joint[js.index(h, o)];
  return out;
}

/// Closed-form space weights (2c*)^{-|E_H|} sum over orders of the
/// order-conditional DAG mass of H, under two readings of that mass: the raw
/// restricted sum, and the restricted sum divided by the order's total.
struct StationaryReference {
  Distribution unnormalised;
  Distribution order_normalised;
};

inline StationaryReference stationary_reference(double c_star, const ExactPosterior& ep, const JointStates& js) {
  require(c_star > 0.0 && c_star <= 1.0, "c* must lie in (0, 1]");
  std::vector<double> raw_logs, norm_logs;
  std::vector<double> order_totals;
  for (std::size_t o = 0; o < js.orders.size(); ++o) order_totals.push_back(ep.order_log_mass(o, std::nullopt, true));
  for (const SearchSpace& h : js.spaces) {
    std::vector<double> raw, norm;
    for (std::size_t o = 0; o < js.orders.size(); ++o) {
      const double m = ep.order_log_mass(o, h, true);
      raw.push_back(m);
      norm.push_back(m - order_totals[o]);
    }
    const double prior = -h.edge_count() * std::log(2.0 * c_star);
    raw_logs.push_back(prior + log_sum_exp(raw));
    norm_logs.push_back(prior + log_sum_exp(norm));
  }
  return {detail::normalise_logs(raw_logs), detail::normalise_logs(norm_logs)};
}

}  // namespace brood
