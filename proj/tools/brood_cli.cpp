// brood_cli: synthetic data generation, posterior sampling, exact oracle
// reports, evaluation and score-table dumps.
//
// Exit codes: 0 success, 2 invalid input or configuration, 3 runtime failure.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "brood/brood.hpp"

namespace {

using brood::json;
namespace fs = std::filesystem;

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  json j = json::parse(brood::read_text_file(path));
  brood::require(j.is_object(), "config file " + path + " must hold a JSON object");
  return j;
}

/// Fills `value` from the config file unless the flag was given explicitly.
template <class T>
void merge(const json& cfg, const CLI::Option* opt, const char* key, T& value) {
  if (opt->count() == 0 && cfg.contains(key)) value = cfg.at(key).get<T>();
}

template <class T>
void merge(const json& cfg, const CLI::Option* opt, const char* key, std::optional<T>& value) {
  if (opt->count() == 0 && cfg.contains(key)) value = cfg.at(key).get<T>();
}

void write_json(const fs::path& path, const json& j) { brood::write_text_file(path.string(), j.dump(2) + "\n"); }

fs::path prepare_out(const std::string& out) {
  fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw brood::RuntimeError("cannot create output directory " + out + ": " + ec.message());
  return dir;
}

std::string require_file(const std::string& path, const std::string& what) {
  brood::require(!path.empty(), what + " is required");
  brood::require(fs::exists(path), what + " " + path + " does not exist");
  return path;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string config, out = ".", model, error, mixture_scale;
  std::optional<std::uint64_t> seed;
  std::optional<int> p, n;
};

void cmd_synth(const SynthArgs& a) {
  json spec = load_config(a.config);
  if (a.p) spec["p"] = *a.p;
  if (a.n) spec["n"] = *a.n;
  if (a.seed) spec["seed"] = *a.seed;
  if (!a.error.empty()) spec["error"] = a.error;
  if (!a.mixture_scale.empty()) spec["mixture_scale"] = a.mixture_scale;
  if (!a.model.empty()) spec["graph"] = {{"model", a.model}};
  const brood::SemSpec s = brood::sem_spec_from_json(spec);
  const brood::GroundTruth gt = brood::synthesize(s);

  const fs::path dir = prepare_out(a.out);
  brood::write_text_file((dir / "data.csv").string(), brood::data_csv(gt.samples));
  write_json(dir / "truth.json", brood::to_json(gt.dag));
  brood::write_text_file((dir / "weights.csv").string(), brood::weights_csv(gt.weights));
  write_json(dir / "spec-echo.json", brood::to_json(s));
  std::cout << "wrote " << s.n << "x" << s.p << " data with " << gt.dag.edge_count() << " true edges to " << dir.string()
            << "\n";
}

// ---------------------------------------------------------------------------

struct SpaceArgs {
  std::string init = "pc";
  std::optional<double> alpha;
  int max_cond = 1;
};

/// Builds the initial space from the PC skeleton or a space file.
brood::SearchSpace initial_space(const brood::DataSet& d, const SpaceArgs& a, std::optional<int> cap) {
  if (a.init == "pc") {
    std::vector<std::string> warnings;
    const double alpha = a.alpha.value_or(brood::default_pc_alpha(d.p()));
    brood::SearchSpace h = brood::pc_skeleton(d, alpha, a.max_cond, cap, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
    return h;
  }
  brood::require(a.init.rfind("file:", 0) == 0, "--init must be 'pc' or 'file:<path>', got '" + a.init + "'");
  const std::string path = require_file(a.init.substr(5), "initial space file");
  brood::SearchSpace h = brood::load_space(path);
  brood::require(h.p() == d.p(), "initial space has " + std::to_string(h.p()) + " nodes but the data has " +
                                     std::to_string(d.p()) + " columns");
  return h;
}

struct InferArgs {
  std::string config, out = ".", data;
  std::optional<std::uint64_t> seed;
  std::optional<double> ell, cstar;
  std::optional<int> cap;
  std::optional<long> steps, warmup, thin;
  bool plus_one = false;
  int chains = 1;
  SpaceArgs space;
};

json summary_json(const brood::ChainSummary& s) {
  return {{"q0_proposed", s.q0_proposed},
          {"q0_accepted", s.q0_accepted},
          {"q0_acceptance", s.q0_acceptance()},
          {"q1_proposed", s.q1_proposed},
          {"q1_accepted", s.q1_accepted},
          {"q1_acceptance", s.q1_acceptance()},
          {"q1_noop", s.q1_noop},
          {"births_proposed", s.births_proposed},
          {"births_accepted", s.births_accepted},
          {"deaths_proposed", s.deaths_proposed},
          {"deaths_accepted", s.deaths_accepted},
          {"runtime_seconds", s.runtime_seconds}};
}

void cmd_infer(const InferArgs& a) {
  const brood::DataSet d = brood::read_data_csv(require_file(a.data, "--data"), true);
  const int p = d.p();
  brood::BroodConfig cfg = brood::default_config(p);
  if (a.ell) cfg.ell = *a.ell;
  if (a.cstar) cfg.c_star = *a.cstar;
  if (a.steps) cfg.steps = *a.steps;
  if (a.warmup) cfg.warmup = *a.warmup;
  else if (a.steps) cfg.warmup = cfg.steps / 10;
  if (a.thin) cfg.thin = *a.thin;
  cfg.seed = a.seed.value_or(1);
  cfg.plus_one = a.plus_one;
  cfg.cap = a.cap.value_or(a.plus_one ? brood::plus_one_cap(p) : brood::fixed_cap(p));
  brood::require(a.chains >= 1, "--chains must be at least 1");
  cfg.validate();

  const brood::SearchSpace h0 = initial_space(d, a.space, cfg.cap);
  auto scorer = std::make_shared<brood::BgeScore>(d);
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<brood::ChainTrace> traces = brood::run_chains(cfg, scorer, h0, a.chains);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const fs::path dir = prepare_out(a.out);
  std::string lines;
  json chains = json::array();
  for (std::size_t c = 0; c < traces.size(); ++c) {
    for (const auto& smp : traces[c].samples) {
      json row{{"chain", c},
               {"step", smp.step},
               {"order", brood::to_json(smp.order)},
               {"space_edges", smp.space.edge_count()}};
      if (smp.dag) row["dag"] = brood::to_json(*smp.dag);
      lines += row.dump() + "\n";
    }
    json cj = summary_json(traces[c].summary);
    cj["final_space"] = brood::to_json(traces[c].final_space);
    cj["final_order"] = brood::to_json(traces[c].final_order);
    chains.push_back(std::move(cj));
  }
  brood::write_text_file((dir / "trace.jsonl").string(), lines);
  write_json(dir / "summary.json", {{"chains", chains}, {"runtime_seconds", wall}});
  write_json(dir / "initial_space.json", brood::to_json(h0));
  write_json(dir / "config-echo.json", {{"subcommand", "infer"},
                                        {"data", a.data},
                                        {"init", a.space.init},
                                        {"alpha", a.space.alpha.value_or(brood::default_pc_alpha(p))},
                                        {"max_cond", a.space.max_cond},
                                        {"ell", cfg.ell},
                                        {"cstar", cfg.c_star},
                                        {"cap", *cfg.cap},
                                        {"steps", cfg.steps},
                                        {"warmup", cfg.warmup},
                                        {"thin", cfg.thin},
                                        {"plus_one", cfg.plus_one},
                                        {"chains", a.chains},
                                        {"seed", cfg.seed}});
  std::cout << "ran " << a.chains << " chain(s) of " << cfg.warmup + cfg.steps << " steps in " << wall << " s\n";
}

// ---------------------------------------------------------------------------

struct OracleArgs {
  std::string config, out = ".", data;
  SpaceArgs space;
  std::optional<int> cap;
  bool kernel = false;
  double ell = 0.1, cstar = 1.0;
};

json report_json(const brood::TvReport& r) {
  json j{{"epsilon", r.epsilon},     {"c_epsilon", r.c_epsilon}, {"hellinger", r.hellinger},
         {"tv", r.tv},               {"lower", r.lower},         {"upper", r.upper},
         {"mixture_residual", r.mixture_residual}};
  j["c_const"] = r.c ? json(*r.c) : json(nullptr);
  return j;
}

void cmd_oracle(const OracleArgs& a) {
  const brood::DataSet d = brood::read_data_csv(require_file(a.data, "--data"), true);
  brood::require(d.p() <= 4, "oracle enumerates every DAG and needs p <= 4, got p = " + std::to_string(d.p()));
  brood::require(!a.kernel || d.p() <= 3, "transition-matrix mode needs p <= 3, got p = " + std::to_string(d.p()));
  const brood::SearchSpace h = initial_space(d, a.space, a.cap);
  auto scorer = std::make_shared<brood::BgeScore>(d);
  const brood::ExactPosterior ep(scorer);
  json out = report_json(brood::verify_bounds(ep, h));
  out["space"] = brood::to_json(h);

  if (a.kernel) {
    brood::BroodConfig cfg;
    cfg.ell = a.ell;
    cfg.c_star = a.cstar;
    cfg.cap = a.cap;
    const brood::JointStates js = brood::joint_states(d.p(), a.cap);
    const auto st = brood::stationary_distribution(brood::exact_mixture_kernel(cfg, ep, js));
    const brood::Distribution marginal = brood::space_marginal(js, st.pi);
    const brood::StationaryReference ref = brood::stationary_reference(cfg.c_star, ep, js);
    out["kernel"] = {{"states", js.size()},
                     {"residual", st.residual},
                     {"tv_unnormalised_reference", brood::tv_distance(marginal, ref.unnormalised)},
                     {"tv_order_normalised_reference", brood::tv_distance(marginal, ref.order_normalised)}};
  }
  const fs::path dir = prepare_out(a.out);
  write_json(dir / "oracle.json", out);
  write_json(dir / "config-echo.json", {{"subcommand", "oracle"},
                                        {"data", a.data},
                                        {"init", a.space.init},
                                        {"cap", a.cap ? json(*a.cap) : json(nullptr)},
                                        {"kernel", a.kernel},
                                        {"ell", a.ell},
                                        {"cstar", a.cstar}});
  std::cout << out.dump(2) << "\n";
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string config, out = ".", trace, truth, mode = "directed";
};

void cmd_eval(const EvalArgs& a) {
  const brood::EdgeMode mode = brood::parse_edge_mode(a.mode);
  const brood::Dag truth = brood::dag_from_json(json::parse(brood::read_text_file(require_file(a.truth, "--truth"))));
  std::vector<brood::Dag> dags;
  std::istringstream lines(brood::read_text_file(require_file(a.trace, "--trace")));
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    const json row = json::parse(line);
    brood::require(row.contains("dag"), "trace rows carry no sampled DAGs");
    dags.push_back(brood::dag_from_json(row.at("dag")));
  }
  brood::MetricsReport r = brood::evaluate(brood::edge_probs(dags, mode), truth);
  const fs::path summary = fs::path(a.trace).parent_path() / "summary.json";
  if (fs::exists(summary)) r.runtime_seconds = json::parse(brood::read_text_file(summary.string())).value("runtime_seconds", 0.0);
  if (!r.pr_auc) std::cerr << "warning: the truth graph has no edges; PR AUC and Pr+ are undefined\n";

  const fs::path dir = prepare_out(a.out);
  const std::string csv = brood::metrics_csv_header() + "\n" + brood::metrics_csv_row(r, mode) + "\n";
  brood::write_text_file((dir / "metrics.csv").string(), csv);
  write_json(dir / "config-echo.json", {{"subcommand", "eval"}, {"trace", a.trace}, {"truth", a.truth}, {"mode", a.mode}});
  std::cout << csv;
}

// ---------------------------------------------------------------------------

struct TablesArgs {
  std::string config, out = ".", data;
  SpaceArgs space;
  std::optional<int> cap, node;
};

void cmd_tables(const TablesArgs& a) {
  const brood::DataSet d = brood::read_data_csv(require_file(a.data, "--data"), true);
  const std::optional<int> cap = a.cap ? a.cap : std::optional<int>(brood::fixed_cap(d.p()));
  brood::SearchSpace h = initial_space(d, a.space, cap);
  for (int i = 0; i < h.p(); ++i)
    brood::require(h.allowed(i).size() <= brood::kMaxTableCandidates,
                   "node " + std::to_string(i) + " has more than " + std::to_string(brood::kMaxTableCandidates) +
                       " candidate parents; lower --cap");
  const brood::TableSet t(std::make_shared<brood::BgeScore>(d), h);
  json out;
  if (a.node) {
    brood::require(*a.node >= 0 && *a.node < d.p(), "--node out of range");
    out = brood::to_json(t.node(*a.node));
  } else {
    out = brood::to_json(t);
  }
  const fs::path dir = prepare_out(a.out);
  write_json(dir / "tables.json", out);
  write_json(dir / "config-echo.json", {{"subcommand", "tables"},
                                        {"data", a.data},
                                        {"init", a.space.init},
                                        {"cap", cap ? json(*cap) : json(nullptr)},
                                        {"node", a.node ? json(*a.node) : json(nullptr)}});
  std::cout << "wrote tables for " << (a.node ? 1 : d.p()) << " node(s) to " << (dir / "tables.json").string() << "\n";
}

void add_space_flags(CLI::App* sub, SpaceArgs& s, CLI::Option*& init, CLI::Option*& alpha, CLI::Option*& max_cond) {
  init = sub->add_option("--init", s.init, "initial space: pc or file:<path>");
  alpha = sub->add_option("--alpha", s.alpha, "skeleton test level (default min(0.4, 20/p))");
  max_cond = sub->add_option("--max-cond", s.max_cond, "largest conditioning set in skeleton tests");
}

void merge_space(const json& cfg, SpaceArgs& s, CLI::Option* init, CLI::Option* alpha, CLI::Option* max_cond) {
  merge(cfg, init, "init", s.init);
  merge(cfg, alpha, "alpha", s.alpha);
  merge(cfg, max_cond, "max_cond", s.max_cond);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Posterior sampling of Bayesian network structure over adaptive search spaces"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "generate a ground-truth graph and SEM data");
  synth->add_option("--config", sa.config, "JSON spec file");
  synth->add_option("--out", sa.out, "output directory");
  synth->add_option("--seed", sa.seed);
  synth->add_option("--p", sa.p, "number of variables");
  synth->add_option("--n", sa.n, "number of observations");
  synth->add_option("--model", sa.model, "graph model")->check(CLI::IsMember({"er", "sbm", "hsbm"}));
  synth->add_option("--error", sa.error, "error model")->check(CLI::IsMember({"gaussian", "mixture"}));
  synth->add_option("--mixture-scale", sa.mixture_scale, "read N(0, 2) as variance or sd")
      ->check(CLI::IsMember({"variance", "sd"}));

  InferArgs ia;
  CLI::Option *i_init, *i_alpha, *i_maxc;
  auto* infer = app.add_subcommand("infer", "run the sampler on a data set");
  infer->add_option("--config", ia.config, "JSON config file");
  auto* i_out = infer->add_option("--out", ia.out, "output directory");
  auto* i_data = infer->add_option("--data", ia.data, "data CSV with a header row");
  auto* i_seed = infer->add_option("--seed", ia.seed);
  auto* i_ell = infer->add_option("--ell", ia.ell, "probability of a space move per step");
  auto* i_cstar = infer->add_option("--cstar", ia.cstar, "death-rate calibration in (0, 1]");
  auto* i_cap = infer->add_option("--cap", ia.cap, "maximum allowed parents per node");
  auto* i_steps = infer->add_option("--steps", ia.steps, "post-warmup steps");
  auto* i_warmup = infer->add_option("--warmup", ia.warmup, "warmup steps");
  auto* i_thin = infer->add_option("--thin", ia.thin, "keep every thin-th state");
  auto* i_plus = infer->add_flag("--plus-one", ia.plus_one, "allow one parent outside the space when sampling DAGs");
  auto* i_chains = infer->add_option("--chains", ia.chains, "independent chains");
  add_space_flags(infer, ia.space, i_init, i_alpha, i_maxc);

  OracleArgs oa;
  CLI::Option *o_init, *o_alpha, *o_maxc;
  auto* oracle = app.add_subcommand("oracle", "exact posterior and error bounds for small p");
  oracle->add_option("--config", oa.config, "JSON config file");
  auto* o_out = oracle->add_option("--out", oa.out, "output directory");
  auto* o_data = oracle->add_option("--data", oa.data, "data CSV with a header row");
  auto* o_cap = oracle->add_option("--cap", oa.cap, "maximum allowed parents per node");
  auto* o_kernel = oracle->add_flag("--kernel", oa.kernel, "also solve the exact joint transition matrix (p <= 3)");
  auto* o_ell = oracle->add_option("--ell", oa.ell);
  auto* o_cstar = oracle->add_option("--cstar", oa.cstar);
  oracle->add_option("--seed", ia.seed, "accepted for uniformity; the oracle is deterministic");
  add_space_flags(oracle, oa.space, o_init, o_alpha, o_maxc);

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "score a trace against the true graph");
  eval->add_option("--config", ea.config, "JSON config file");
  auto* e_out = eval->add_option("--out", ea.out, "output directory");
  auto* e_trace = eval->add_option("--trace", ea.trace, "trace.jsonl from infer");
  auto* e_truth = eval->add_option("--truth", ea.truth, "truth.json from synth");
  auto* e_mode = eval->add_option("--mode", ea.mode, "directed or skeleton")->check(CLI::IsMember({"directed", "skeleton"}));
  eval->add_option("--seed", ia.seed, "accepted for uniformity; evaluation is deterministic");

  TablesArgs ta;
  CLI::Option *t_init, *t_alpha, *t_maxc;
  auto* tables = app.add_subcommand("tables", "dump per-node score tables as JSON");
  tables->add_option("--config", ta.config, "JSON config file");
  auto* t_out = tables->add_option("--out", ta.out, "output directory");
  auto* t_data = tables->add_option("--data", ta.data, "data CSV with a header row");
  auto* t_cap = tables->add_option("--cap", ta.cap, "maximum allowed parents per node");
  auto* t_node = tables->add_option("--node", ta.node, "dump a single node");
  tables->add_option("--seed", ia.seed, "accepted for uniformity; tables are deterministic");
  add_space_flags(tables, ta.space, t_init, t_alpha, t_maxc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (synth->parsed()) {
      cmd_synth(sa);
    } else if (infer->parsed()) {
      const json cfg = load_config(ia.config);
      merge(cfg, i_out, "out", ia.out);
      merge(cfg, i_data, "data", ia.data);
      merge(cfg, i_seed, "seed", ia.seed);
      merge(cfg, i_ell, "ell", ia.ell);
      merge(cfg, i_cstar, "cstar", ia.cstar);
      merge(cfg, i_cap, "cap", ia.cap);
      merge(cfg, i_steps, "steps", ia.steps);
      merge(cfg, i_warmup, "warmup", ia.warmup);
      merge(cfg, i_thin, "thin", ia.thin);
      merge(cfg, i_plus, "plus_one", ia.plus_one);
      merge(cfg, i_chains, "chains", ia.chains);
      merge_space(cfg, ia.space, i_init, i_alpha, i_maxc);
      cmd_infer(ia);
    } else if (oracle->parsed()) {
      const json cfg = load_config(oa.config);
      merge(cfg, o_out, "out", oa.out);
      merge(cfg, o_data, "data", oa.data);
      merge(cfg, o_cap, "cap", oa.cap);
      merge(cfg, o_kernel, "kernel", oa.kernel);
      merge(cfg, o_ell, "ell", oa.ell);
      merge(cfg, o_cstar, "cstar", oa.cstar);
      merge_space(cfg, oa.space, o_init, o_alpha, o_maxc);
      cmd_oracle(oa);
    } else if (eval->parsed()) {
      const json cfg = load_config(ea.config);
      merge(cfg, e_out, "out", ea.out);
      merge(cfg, e_trace, "trace", ea.trace);
      merge(cfg, e_truth, "truth", ea.truth);
      merge(cfg, e_mode, "mode", ea.mode);
      cmd_eval(ea);
    } else if (tables->parsed()) {
      const json cfg = load_config(ta.config);
      merge(cfg, t_out, "out", ta.out);
      merge(cfg, t_data, "data", ta.data);
      merge(cfg, t_cap, "cap", ta.cap);
      merge(cfg, t_node, "node", ta.node);
      merge_space(cfg, ta.space, t_init, t_alpha, t_maxc);
      cmd_tables(ta);
    }
  } catch (const brood::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const json::exception& e) {
    std::cerr << "error: malformed JSON input: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
