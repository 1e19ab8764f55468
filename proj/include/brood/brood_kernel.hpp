#pragma once

// Birth-death moves over search spaces, the mixture with order moves, and the
// chain driver.

#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <thread>
#include <vector>

#include "brood/graph.hpp"
#include "brood/order_kernel.hpp"
#include "brood/rng.hpp"
#include "brood/score_tables.hpp"

namespace brood {

struct BroodConfig {
  double ell = 0.1;
  double c_star = 1.0;
  std::optional<int> cap;
  /// Post-warmup steps.
  long steps = 0;
  long warmup = 0;
  long thin = 1;
  std::uint64_t seed = 0;
  bool plus_one = false;
  bool sample_dags = true;

  void validate() const {
    require(ell >= 0.0 && ell <= 1.0, "ell must lie in [0, 1]");
    require(c_star > 0.0 && c_star <= 1.0, "c* must lie in (0, 1]");
    require(!cap || *cap >= 0, "cap must be non-negative");
    require(steps > 0, "steps must be positive");
    require(warmup >= 0, "warmup must be non-negative");
    require(steps > warmup, "steps must exceed warmup");
    require(thin >= 1, "thin must be at least 1");
  }
};

/// B = min(25000, ceil(p^2 ln p)) with warmup floor(B / 10) and thinning to about 2500 kept samples.
inline BroodConfig default_config(int p) {
  BroodConfig c;
  const double raw = p >= 2 ? std::ceil(static_cast<double>(p) * p * std::log(static_cast<double>(p))) : 1.0;
  c.steps = std::max<long>(1, std::min<long>(25000, static_cast<long>(raw)));
  c.warmup = c.steps / 10;
  c.thin = std::max<long>(1, c.steps / 2500);
  return c;
}

/// ratio exp(a - b) of two log masses, with 0/0 read as 1.
inline double mass_ratio(double a, double b) {
  if (a == b) return 1.0;
  if (b == kNegInf) return std::numeric_limits<double>::infinity();
  return std::exp(a - b);
}

/// Rate of adding e (e.src not yet allowed for e.dst). Zero when e.dst is at the cap.
inline double birth_rate(const NodeTables& t, const TopOrder& o, const Edge& e, std::optional<int> cap) {
  require(e.dst == t.node, "birth_rate: edge does not end at this node");
  const int k = t.plus_index(e.src);
  require(k >= 0, "birth_rate: edge already in the space");
  if (cap && t.m() >= *cap) return 0.0;
  if (!o.precedes(e.src, e.dst)) return 0.5;
  const SubsetCode c = banned_code(t, o);
  const double l = t.banned[c];
  return 0.5 * mass_ratio(log_add(l, t.plus_banned_at(c, k)), l);
}

/// Rate of removing e (e.src currently allowed for e.dst).
inline double death_rate(const NodeTables& t, const TopOrder& o, const Edge& e, double c_star) {
  require(e.dst == t.node, "death_rate: edge does not end at this node");
  const int k = t.cand_index(e.src);
  require(k >= 0, "death_rate: edge not in the space");
  const SubsetCode c = banned_code(t, o);
  return 2.0 * c_star * mass_ratio(t.banned[c | (SubsetCode{1} << k)], t.banned[c]);
}

inline double birth_rate(const SearchSpace& h, const TopOrder& o, const Edge& e, const TableSet& t) {
  require(!h.has_edge(e), "birth_rate: edge already in the space");
  return birth_rate(t.node(e.dst), o, e, h.cap());
}

inline double death_rate(const SearchSpace& h, const TopOrder& o, const Edge& e, const TableSet& t, double c_star) {
  require(h.has_edge(e), "death_rate: edge not in the space");
  return death_rate(t.node(e.dst), o, e, c_star);
}

/// Birth and death rates of the edges into one node.
struct NodeRates {
  std::vector<std::pair<int, double>> births;  // (source, rate)
  std::vector<std::pair<int, double>> deaths;
  double beta = 0.0;
  double delta = 0.0;
};

inline NodeRates node_rates(const NodeTables& t, const TopOrder& o, std::optional<int> cap, double c_star) {
  NodeRates r;
  for (int j : t.plus_cands) {
    const double b = birth_rate(t, o, {j, t.node}, cap);
    if (b > 0.0) {
      r.births.emplace_back(j, b);
      r.beta += b;
    }
  }
  for (int j : t.cands) {
    const double d = death_rate(t, o, {j, t.node}, c_star);
    r.deaths.emplace_back(j, d);
    r.delta += d;
  }
  return r;
}

struct RatesSnapshot {
  std::vector<std::pair<Edge, double>> births;
  std::vector<std::pair<Edge, double>> deaths;
  double beta = 0.0;
  double delta = 0.0;
  /// 1 / (beta + delta); +inf when no move is possible.
  double waiting = std::numeric_limits<double>::infinity();
  bool stuck() const { return !(beta + delta > 0.0); }
};

inline RatesSnapshot rates_snapshot(const SearchSpace& h, const TopOrder& o, const TableSet& t, double c_star) {
  require(h == t.space(), "rates_snapshot: tables were built for a different space");
  RatesSnapshot s;
  for (int i = 0; i < t.p(); ++i) {
    const NodeRates r = node_rates(t.node(i), o, h.cap(), c_star);
    for (auto [j, b] : r.births) s.births.push_back({{j, i}, b});
    for (auto [j, d] : r.deaths) s.deaths.push_back({{j, i}, d});
  }
  for (const auto& [e, b] : s.births) s.beta += b;
  for (const auto& [e, d] : s.deaths) s.delta += d;
  if (s.beta + s.delta > 0.0) s.waiting = 1.0 / (s.beta + s.delta);
  return s;
}

/// Full sampler state: space (with its tables), order and cached rates.
struct ChainState {
  TableSet tables;
  OrderState order;
  std::vector<NodeRates> rates;
  std::vector<bool> rates_dirty;

  ChainState(TableSet t, TopOrder o) : tables(std::move(t)), order(std::move(o), tables) {
    rates.resize(static_cast<std::size_t>(tables.p()));
    rates_dirty.assign(static_cast<std::size_t>(tables.p()), true);
  }

  const SearchSpace& space() const { return tables.space(); }

  void mark_dirty(int lo_pos, int hi_pos) {
    for (int k = lo_pos; k <= hi_pos; ++k) rates_dirty[order.order.at(k)] = true;
  }

  void refresh_rates(double c_star) {
    for (int i = 0; i < tables.p(); ++i)
      if (rates_dirty[i]) {
        rates[i] = node_rates(tables.node(i), order.order, space().cap(), c_star);
        rates_dirty[i] = false;
      }
  }

  double beta() const {
    double b = 0.0;
    for (const auto& r : rates) b += r.beta;
    return b;
  }
  double delta() const {
    double d = 0.0;
    for (const auto& r : rates) d += r.delta;
    return d;
  }
};

struct Q1Result {
  bool noop = false;
  bool birth = false;
  bool accepted = false;
  /// The trial tables could not be built; the move was rejected.
  bool failed = false;
  Edge edge;
};

namespace detail {

/// Index drawn proportionally to weights by inverse CDF; weights sum to `total`.
template <typename Weight>
std::size_t draw_weighted(const std::vector<Weight>& items, double total, double u, double (*weight)(const Weight&)) {
  double target = u * total;
  for (std::size_t k = 0; k < items.size(); ++k) {
    const double w = weight(items[k]);
    if (target < w) return k;
    target -= w;
  }
  for (std::size_t k = items.size(); k-- > 0;)
    if (weight(items[k]) > 0.0) return k;
  return 0;
}

}  // namespace detail

/// One Metropolised birth-death step; the order is left unchanged.
inline Q1Result q1_step(ChainState& s, const BroodConfig& cfg, Rng& rng) {
  Q1Result res;
  s.refresh_rates(cfg.c_star);
  const double beta = s.beta(), delta = s.delta();
  if (!(beta + delta > 0.0)) {
    res.noop = true;
    return res;
  }
  res.birth = uniform01(rng) * (beta + delta) < beta;

  // Edge proportional to its rate: node first, then source within the node.
  const int p = s.tables.p();
  const double total = res.birth ? beta : delta;
  std::vector<std::pair<int, double>> nodes;
  for (int i = 0; i < p; ++i) nodes.emplace_back(i, res.birth ? s.rates[i].beta : s.rates[i].delta);
  auto second = +[](const std::pair<int, double>& x) { return x.second; };
  const int i = nodes[detail::draw_weighted(nodes, total, uniform01(rng), second)].first;
  const auto& list = res.birth ? s.rates[i].births : s.rates[i].deaths;
  const double node_total = res.birth ? s.rates[i].beta : s.rates[i].delta;
  const int j = list[detail::draw_weighted(list, node_total, uniform01(rng), second)].first;
  res.edge = {j, i};

  std::shared_ptr<const NodeTables> trial;
  SearchSpace next_space;
  try {
    if (res.birth) {
      next_space = space_add_edge(s.space(), res.edge);
      trial = std::make_shared<const NodeTables>(
          expand_node_tables(s.tables.node(i), res.edge, s.tables.scorer(), s.space().cap()));
    } else {
      next_space = space_remove_edge(s.space(), res.edge);
      trial = std::make_shared<const NodeTables>(contract_node_tables(s.tables.node(i), res.edge));
    }
  } catch (const std::exception&) {
    res.failed = true;
    return res;
  }
  NodeRates trial_rates = node_rates(*trial, s.order.order, next_space.cap(), cfg.c_star);
  const double next_total = beta + delta - s.rates[i].beta - s.rates[i].delta + trial_rates.beta + trial_rates.delta;
  const double accept = next_total > 0.0 ? (beta + delta) / next_total : 1.0;
  if (!(accept >= 1.0 || uniform01(rng) < accept)) return res;

  res.accepted = true;
  s.tables = s.tables.with_node(std::move(next_space), std::move(trial));
  s.rates[i] = std::move(trial_rates);
  s.order.refresh_node(s.tables, i);
  return res;
}

enum class KernelUsed { Q0, Q1 };

struct StepResult {
  KernelUsed kernel = KernelUsed::Q0;
  bool accepted = false;
  Q1Result q1;
};

/// With probability 1 - ell an order move, otherwise a birth-death move.
inline StepResult brood_step(ChainState& s, const BroodConfig& cfg, Rng& rng) {
  StepResult r;
  if (cfg.ell > 0.0 && (cfg.ell >= 1.0 || uniform01(rng) < cfg.ell)) {
    r.kernel = KernelUsed::Q1;
    r.q1 = q1_step(s, cfg, rng);
    r.accepted = r.q1.accepted;
    return r;
  }
  r.kernel = KernelUsed::Q0;
  const Q0Result q0 = q0_step(s.order, s.tables, rng);
  r.accepted = q0.accepted;
  if (q0.accepted) s.mark_dirty(q0.move.lo(), q0.move.hi());
  return r;
}

struct ChainSample {
  long step = 0;
  SearchSpace space;
  TopOrder order;
  std::optional<Dag> dag;
  KernelUsed kernel = KernelUsed::Q0;
  bool accepted = false;
};

struct ChainSummary {
  long q0_proposed = 0;
  long q0_accepted = 0;
  long q1_proposed = 0;
  long q1_accepted = 0;
  long q1_noop = 0;
  long births_proposed = 0;
  long births_accepted = 0;
  long deaths_proposed = 0;
  long deaths_accepted = 0;
  double runtime_seconds = 0.0;

  double q0_acceptance() const { return q0_proposed ? double(q0_accepted) / q0_proposed : 0.0; }
  double q1_acceptance() const { return q1_proposed ? double(q1_accepted) / q1_proposed : 0.0; }
};

struct ChainTrace {
  std::vector<ChainSample> samples;
  ChainSummary summary;
  SearchSpace final_space;
  TopOrder final_order;
};

/// Called after every step (warmup included) with the step index.
using StepObserver = std::function<void(long, const ChainState&, const StepResult&)>;

/// Runs warmup + steps transitions from (h0, o0) and keeps every thin-th
/// post-warmup state, sampling a DAG for each kept state when configured.
inline ChainTrace run_chain(const BroodConfig& cfg, std::shared_ptr<const LocalScore> scorer, const SearchSpace& h0,
                            Rng& rng, std::optional<TopOrder> o0 = std::nullopt, const StepObserver& observe = {}) {
  cfg.validate();
  require(scorer && scorer->p() == h0.p(), "run_chain: score and initial space disagree on p");
  SearchSpace start = h0;
  if (cfg.cap) {
    for (int i = 0; i < h0.p(); ++i)
      require(h0.allowed(i).size() <= *cfg.cap,
              "initial space has node " + std::to_string(i) + " with " + std::to_string(h0.allowed(i).size()) +
                  " parents, above the cap " + std::to_string(*cfg.cap) + "; raise the cap or prune the space");
    start = SearchSpace(h0.p(), std::vector<NodeSet>(h0.all_allowed().begin(), h0.all_allowed().end()), cfg.cap);
  }
  const auto t0 = std::chrono::steady_clock::now();
  ChainState s(TableSet(scorer, start), o0 ? *o0 : degree_order(start));
  ChainTrace trace;
  const long total = cfg.warmup + cfg.steps;
  for (long step = 0; step < total; ++step) {
    const StepResult r = brood_step(s, cfg, rng);
    auto& sm = trace.summary;
    if (r.kernel == KernelUsed::Q0) {
      ++sm.q0_proposed;
      sm.q0_accepted += r.accepted;
    } else {
      ++sm.q1_proposed;
      sm.q1_accepted += r.accepted;
      if (r.q1.noop) {
        ++sm.q1_noop;
      } else if (r.q1.birth) {
        ++sm.births_proposed;
        sm.births_accepted += r.accepted;
      } else {
        ++sm.deaths_proposed;
        sm.deaths_accepted += r.accepted;
      }
    }
    if (observe) observe(step, s, r);
    const long kept = step - cfg.warmup;
    if (kept >= 0 && (kept + 1) % cfg.thin == 0) {
      ChainSample cs{step, s.space(), s.order.order, std::nullopt, r.kernel, r.accepted};
      if (cfg.sample_dags) cs.dag = sample_dag_given(s.order.order, s.tables, rng, cfg.plus_one);
      trace.samples.push_back(std::move(cs));
    }
  }
  trace.final_space = s.space();
  trace.final_order = s.order.order;
  trace.summary.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return trace;
}

/// Independent chains on separate threads, chain k seeded from stream k of cfg.seed.
inline std::vector<ChainTrace> run_chains(const BroodConfig& cfg, std::shared_ptr<const LocalScore> scorer,
                                          const SearchSpace& h0, int chains) {
  require(chains >= 1, "need at least one chain");
  std::vector<ChainTrace> out(static_cast<std::size_t>(chains));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(chains));
  std::vector<std::thread> workers;
  for (int k = 0; k < chains; ++k)
    workers.emplace_back([&, k] {
      try {
        Rng rng = stream_rng(cfg.seed, static_cast<std::uint64_t>(k));
        out[k] = run_chain(cfg, scorer, h0, rng);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    });
  for (auto& w : workers) w.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace brood
