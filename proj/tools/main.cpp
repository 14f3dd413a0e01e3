// Command-line front end. Exit codes: 10 SAT, 20 UNSAT, 2 shape mismatch,
// 1 any other error, 0 for commands without a verdict.
#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "incremark/abstraction.hpp"
#include "incremark/bench.hpp"
#include "incremark/incremental.hpp"
#include "incremark/model.hpp"
#include "incremark/proof_tree.hpp"
#include "incremark/reluplex.hpp"

namespace {

using namespace incremark;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitShape = 2;
constexpr int kExitSat = 10;
constexpr int kExitUnsat = 20;

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("incremark");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("INCREMARK_LOG")) {
    const auto level = spdlog::level::from_str(env);
    if (level == spdlog::level::off && std::string(env) != "off") {
      spdlog::warn("unknown INCREMARK_LOG level '{}'", env);
    } else {
      spdlog::set_level(level);
    }
  }
}

int print_verdict(const Verdict& v) {
  if (!v.is_sat()) {
    std::cout << "UNSAT\n";
    return kExitUnsat;
  }
  std::cout << "SAT";
  for (double x : v.witness) std::cout << ' ' << format_double(x);
  std::cout << '\n';
  return kExitSat;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
  if (!out) throw Error("write to '" + path + "' failed");
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error("bad number '" + item + "' in list '" + text + "'");
    }
  }
  if (out.empty()) throw Error("empty list");
  return out;
}

SearchParams search_params(std::optional<std::size_t> budget, std::uint64_t seed) {
  SearchParams p;
  p.local_budget = budget;
  p.seed = seed;
  return p;
}

struct Options {
  std::string net, prop, tree, tree_out, report, out, mode = "lazy", scope = "weights";
  std::string gammas = "0.001,0.01,0.03,0.05", fractions = "1.0";
  std::optional<std::size_t> budget;
  std::uint64_t seed = 0;
  std::size_t jobs = 1, trials = 25;
  double gamma = 0.0, fraction = 1.0;
  bool dump_tableau = false, no_oracle = false;
};

int run_verify(const Options& o) {
  const Network net = load_network(o.net);
  const SafetyProperty prop = load_property(o.prop);
  prop.validate(net);
  if (o.dump_tableau) std::cout << initial_configuration(net, prop).dump();
  const SolveResult r = solve(net, prop, search_params(o.budget, o.seed));
  spdlog::info("search: {} nodes, {} splits, {} repair steps", r.stats.nodes, r.stats.splits, r.stats.repair_steps);
  if (!o.tree_out.empty()) save_tree(r.tree, o.tree_out);
  return print_verdict(r.verdict);
}

int run_reverify(const Options& o) {
  const Network net = load_network(o.net);
  const SafetyProperty prop = load_property(o.prop);
  const ProofTree tree = load_tree(o.tree);
  const IncrementalResult r =
      verify_incremental(net, prop, tree, parse_mode(o.mode), search_params(o.budget, o.seed));
  if (!o.tree_out.empty()) save_tree(r.tree, o.tree_out);
  const std::string report = report_json(r.report);
  if (o.report.empty()) {
    std::cerr << report;
  } else {
    write_text(o.report, report);
  }
  return print_verdict(r.verdict);
}

int run_bounds(const Options& o) {
  const Network net = load_network(o.net);
  const SafetyProperty prop = load_property(o.prop);
  prop.validate(net);
  const Analysis a = analyze(net, prop.box);
  if (!a.is_feasible()) throw Error("input box is empty");
  std::cout << format_bounds(a.bounds());
  return kExitOk;
}

PerturbScope parse_scope(const std::string& s) {
  if (s == "weights") return PerturbScope::Weights;
  if (s == "all") return PerturbScope::WeightsAndBiases;
  throw Error("unknown scope '" + s + "' (expected weights or all)");
}

int run_perturb(const Options& o) {
  const Network net = load_network(o.net);
  const Network out = perturb(net, Perturbation{o.gamma, o.fraction, o.seed, parse_scope(o.scope)});
  save_network(out, o.out);
  return kExitOk;
}

int run_bench(const Options& o) {
  SuiteConfig cfg;
  cfg.gammas = parse_list(o.gammas);
  cfg.fractions = parse_list(o.fractions);
  cfg.trials = o.trials;
  cfg.seed = o.seed;
  cfg.scope = parse_scope(o.scope);
  cfg.mode = parse_mode(o.mode);
  cfg.use_oracle = !o.no_oracle;
  cfg.jobs = o.jobs;
  cfg.params = search_params(o.budget, o.seed);

  const std::vector<BenchRow> rows = run_suite(cfg);
  std::string csv = csv_header() + "\n";
  for (const BenchRow& r : rows) csv += csv_row(r) + "\n";
  if (o.out.empty()) {
    std::cout << csv;
  } else {
    write_text(o.out, csv);
  }

  std::size_t disagree = 0;
  for (const BenchRow& r : rows) disagree += r.agree ? 0 : 1;
  for (const ReplaySummary& s : replay_by_gamma(rows)) {
    std::fprintf(stderr, "gamma %s: replay %.1f%% (%zu/%zu unsat leaves, %zu runs)\n", format_double(s.gamma).c_str(),
                 s.pct(), s.replayed, s.visited, s.rows);
  }
  std::fprintf(stderr, "%zu runs, %zu disagreements\n", rows.size(), disagree);
  return disagree == 0 ? kExitOk : kExitError;
}

int run_oracle(const Options& o) {
  const Network net = load_network(o.net);
  const SafetyProperty prop = load_property(o.prop);
  return print_verdict(oracle(net, prop));
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  Options o;
  CLI::App app{"ReLU network verification with proof reuse"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");
  app.add_option("--jobs", o.jobs, "Worker threads for bench runs")->check(CLI::PositiveNumber);

  auto net_prop = [&](CLI::App* sub) {
    sub->add_option("--net", o.net, "Network file")->required()->check(CLI::ExistingFile);
    sub->add_option("--prop", o.prop, "Property file")->required()->check(CLI::ExistingFile);
  };
  auto search_opts = [&](CLI::App* sub) {
    sub->add_option("--budget", o.budget, "Local-search steps per node");
    sub->add_option("--seed", o.seed, "Seed");
  };

  CLI::App* verify = app.add_subcommand("verify", "Solve from scratch");
  net_prop(verify);
  search_opts(verify);
  verify->add_option("--tree-out", o.tree_out, "Write the proof tree here");
  verify->add_flag("--dump-tableau", o.dump_tableau, "Print the initial tableau");

  CLI::App* reverify = app.add_subcommand("reverify", "Re-verify a modified network with a stored proof tree");
  net_prop(reverify);
  search_opts(reverify);
  reverify->add_option("--tree", o.tree, "Stored proof tree")->required()->check(CLI::ExistingFile);
  reverify->add_option("--mode", o.mode, "strict or lazy")->check(CLI::IsMember({"strict", "lazy"}));
  reverify->add_option("--tree-out", o.tree_out, "Write the updated proof tree here");
  reverify->add_option("--report", o.report, "Write the JSON report here (default stderr)");

  CLI::App* bounds = app.add_subcommand("bounds", "Print per-neuron intervals");
  net_prop(bounds);

  CLI::App* perturb_cmd = app.add_subcommand("perturb", "Randomly perturb network weights");
  perturb_cmd->add_option("--net", o.net, "Network file")->required()->check(CLI::ExistingFile);
  perturb_cmd->add_option("--out", o.out, "Output network file")->required();
  perturb_cmd->add_option("--gamma", o.gamma, "Relative change bound")->check(CLI::NonNegativeNumber);
  perturb_cmd->add_option("--fraction", o.fraction, "Share of entries changed")->check(CLI::Range(0.0, 1.0));
  perturb_cmd->add_option("--seed", o.seed, "Seed");
  perturb_cmd->add_option("--scope", o.scope, "weights or all")->check(CLI::IsMember({"weights", "all"}));

  CLI::App* bench = app.add_subcommand("bench", "Scratch vs incremental comparison on random networks");
  bench->add_option("--gammas", o.gammas, "Comma-separated change rates");
  bench->add_option("--fractions", o.fractions, "Comma-separated changed shares");
  bench->add_option("--trials", o.trials, "Random instances per (gamma, fraction)")->check(CLI::PositiveNumber);
  bench->add_option("--seed", o.seed, "Seed");
  bench->add_option("--mode", o.mode, "strict or lazy")->check(CLI::IsMember({"strict", "lazy"}));
  bench->add_option("--scope", o.scope, "weights or all")->check(CLI::IsMember({"weights", "all"}));
  bench->add_option("--budget", o.budget, "Local-search steps per node");
  bench->add_option("--out", o.out, "CSV output file (default stdout)");
  bench->add_flag("--no-oracle", o.no_oracle, "Skip the enumeration oracle");

  CLI::App* oracle_cmd = app.add_subcommand("oracle", "Exact verdict by activation-pattern enumeration");
  net_prop(oracle_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (*verify) return run_verify(o);
    if (*reverify) return run_reverify(o);
    if (*bounds) return run_bounds(o);
    if (*perturb_cmd) return run_perturb(o);
    if (*bench) return run_bench(o);
    if (*oracle_cmd) return run_oracle(o);
  } catch (const ShapeMismatch& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitShape;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
