// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <algorithm>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>

#include "incremark/incremental.hpp"
#include "incremark/lp.hpp"
#include "incremark/reluplex.hpp"
#include "support.hpp"

using namespace incremark;
using namespace testing_support;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome2 {
  bool pass = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      if (pass) detail = what;
      pass = false;
    }
  }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Outcome2 criterion_bounds() {
  Outcome2 o;
  const Network f = small_net();
  const SafetyProperty p = threshold_03();
  const auto t0 = Clock::now();
  const Analysis a = analyze(f, p.box);
  const double secs = seconds_since(t0);
  o.require(a.is_feasible(), "analysis infeasible");
  if (!o.pass) return o;
  const Bounds& b = a.bounds();
  constexpr double tol = 5e-3;
  o.require(near(b[kX3].lo, -1.0, tol) && near(b[kX3].hi, 0.8, tol), "x3 interval");
  o.require(near(b[kX4].lo, -1.6, tol) && near(b[kX4].hi, 1.6, tol), "x4 interval");
  o.require(near(b[kX5].hi, 0.8, tol) && near(b[kX6].hi, 1.6, tol), "ReLU output upper bounds");
  o.require(near(b[kY].lo, 0.0, tol) && near(b[kY].hi, 1.28, tol), "output interval");
  o.require(near(b.relation(0).upper_slope, 0.8 / 1.8, tol) && near(b.relation(0).upper_const, 0.8 / 1.8, tol),
            "x5 upper relation");
  o.require(near(b.relation(1).upper_slope, 0.5, tol) && near(b.relation(1).upper_const, 0.8, tol),
            "x6 upper relation");
  o.require(secs < 0.1, "runtime " + fmt("%.3f s", secs));
  if (o.pass) o.detail = "y in [" + fmt("%g", b[kY].lo) + ", " + fmt("%g", b[kY].hi) + "], " + fmt("%.2g s", secs);
  return o;
}

Outcome2 criterion_small_verify() {
  Outcome2 o;
  const Network f = small_net();
  const SafetyProperty p = threshold_03();
  const auto t0 = Clock::now();
  const SolveResult r = solve(f, p);
  const double secs = seconds_since(t0);
  o.require(r.verdict.is_sat(), "verdict not SAT");
  if (!o.pass) return o;
  const std::vector<double>& x = r.verdict.witness;
  o.require(p.box[0].contains(x[0]) && p.box[1].contains(x[1]), "witness outside box");
  o.require(evaluate(f, x)[0] >= 0.3 - kEpsSat, "witness output below threshold");
  const std::vector<double> known{0.675, 0.05};
  o.require(validate_witness(f, p, known), "known counterexample rejected");
  o.require(near(evaluate(f, known)[0], 0.3, 1e-12), "known counterexample output");

  const Configuration c = initial_configuration(f, p);
  const Tableau& t = c.tableau();
  o.require(t.basis() == std::vector<VarId>{kX3, kX4, kY, kX7, kX8}, "initial basis");
  o.require(t.bounds(kX9).lo == 0.1 && t.bounds(kX9).hi == 0.1, "constant slack bounds");
  o.require(near(t.bounds(kX7).hi, 1.0, 1e-12) && t.bounds(kX7).lo == 0.0, "x7 bounds");
  o.require(near(t.bounds(kX8).hi, 1.6, 1e-12) && t.bounds(kX8).lo == 0.0, "x8 bounds");
  o.require(near(t.bounds(kY).lo, 0.3, 1e-12) && near(t.bounds(kY).hi, 1.28, 1e-9), "y bounds");
  o.require(secs < 1.0, "runtime " + fmt("%.3f s", secs));
  if (o.pass) {
    o.detail = "SAT (" + format_double(x[0]) + ", " + format_double(x[1]) + "), tree of " +
               std::to_string(r.tree.size()) + " nodes, " + fmt("%.2g s", secs);
  }
  return o;
}

Outcome2 criterion_upper_reverify() {
  Outcome2 o;
  const SafetyProperty p = threshold_03();
  const ProofTree tree = solve(small_net(), p).tree;
  const Network g = modified_upper();
  const auto t0 = Clock::now();
  const IncrementalResult r = verify_incremental(g, p, tree);
  const double secs = seconds_since(t0);
  o.require(r.verdict.is_sat(), "verdict not SAT");
  if (!o.pass) return o;
  o.require(validate_witness(g, p, r.verdict.witness), "witness invalid");
  const std::vector<double> v = evaluate_neurons(g, NeuronLayout(g), r.verdict.witness);
  o.require(v[kX4] >= -kEpsBound && v[kX3] <= kEpsBound, "witness signs outside {x4 >= 0, x3 <= 0}");
  o.require(near(evaluate(g, std::vector<double>{0.714, 0.204})[0], 0.3, 1e-3), "reference point output");
  o.require(secs < 1.0, "runtime " + fmt("%.3f s", secs));
  if (o.pass) {
    o.detail = "SAT (" + format_double(r.verdict.witness[0]) + ", " + format_double(r.verdict.witness[1]) + "), " +
               fmt("%.2g s", secs);
  }
  return o;
}

// The lower modified network is often quoted as satisfying the property
// (UNSAT), but a forward pass at (1, -1) gives
// y = 0.4 * 1.63 + 0.6 * 0.52 = 0.964 >= 0.3, a counterexample. The
// enumeration oracle is therefore the arbiter; the pass condition is that
// oracle, scratch search and incremental search agree.
Outcome2 criterion_lower_arbitration() {
  Outcome2 o;
  const SafetyProperty p = threshold_03();
  const Network h = modified_lower();
  const ProofTree tree = solve(small_net(), p).tree;
  const Verdict ov = oracle(h, p);
  const Verdict sv = solve(h, p).verdict;
  const Verdict lv = verify_incremental(h, p, tree, Mode::Lazy).verdict;
  const Verdict tv = verify_incremental(h, p, tree, Mode::Strict).verdict;
  o.require(near(evaluate(h, std::vector<double>{1.0, -1.0})[0], 0.964, 1e-9), "forward pass at (1, -1)");
  o.require(sv.outcome == ov.outcome, "scratch disagrees with oracle");
  o.require(lv.outcome == ov.outcome && tv.outcome == ov.outcome, "incremental disagrees with oracle");
  for (const Verdict* v : {&ov, &sv, &lv, &tv}) {
    if (v->is_sat()) o.require(validate_witness(h, p, v->witness), "invalid witness");
  }
  if (o.pass) o.detail = "all report " + to_string(ov.outcome) + " (y(1,-1) = 0.964)";
  return o;
}

Outcome2 criterion_equivalence() {
  Outcome2 o;
  SuiteConfig cfg;
  cfg.trials = 100;
  cfg.fractions = {0.1, 0.3, 0.5, 1.0};
  cfg.seed = 2024;
  const auto t0 = Clock::now();
  const std::vector<BenchRow> rows = run_suite(cfg);
  const double secs = seconds_since(t0);
  std::size_t bad = 0, unchecked = 0, sat = 0;
  for (const BenchRow& r : rows) {
    bad += r.agree ? 0 : 1;
    unchecked += r.oracle_checked ? 0 : 1;
    sat += r.scratch == Outcome::Sat ? 1 : 0;
  }
  o.require(rows.size() == 1600, "expected 1600 runs");
  o.require(bad == 0, std::to_string(bad) + " disagreements");
  o.require(unchecked == 0, std::to_string(unchecked) + " runs without oracle");
  o.require(secs < 600.0, "runtime " + fmt("%.1f s", secs));
  if (o.pass) {
    o.detail = std::to_string(rows.size()) + " runs agree (" + std::to_string(sat) + " sat), " + fmt("%.1f s", secs);
  }
  return o;
}

Outcome2 criterion_zero_change_replay() {
  Outcome2 o;
  std::mt19937_64 rng(606);
  std::size_t instances = 0, leaves = 0;
  for (int n = 0; n < 200; ++n) {
    const Instance inst = random_instance(rng, n % 2 == 0);
    const SolveResult s = solve(inst.net, inst.prop);
    if (s.verdict.is_sat()) continue;
    ++instances;
    for (Mode m : {Mode::Lazy, Mode::Strict}) {
      const IncrementalResult r = verify_incremental(inst.net, inst.prop, s.tree, m);
      o.require(!r.verdict.is_sat(), "verdict changed");
      o.require(r.report.fallback == 0, "fallback search used");
      o.require(r.report.replay_pct() == 100.0, "replay below 100%");
      leaves += r.report.replayed;
    }
  }
  o.require(instances > 0, "no UNSAT instance generated");
  if (o.pass) {
    o.detail = std::to_string(instances) + " UNSAT instances, " + std::to_string(leaves) +
               " leaf replays, replay 100.0%";
  }
  return o;
}

// Compact re-runs of the randomized property suites.
Outcome2 criterion_properties() {
  Outcome2 o;
  std::mt19937_64 rng(707);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::size_t violations = 0;

  auto random_tableau = [&](std::size_t rows, std::size_t cols) {
    Tableau t(rows + cols);
    for (VarId v = 0; v < rows + cols; ++v) t.set_bounds(v, {-kInf, kInf});
    for (std::size_t r = 0; r < rows; ++r) {
      std::vector<double> c(rows + cols, 0.0);
      for (std::size_t j = 0; j < cols; ++j) c[rows + j] = u(rng);
      t.add_row(r, std::move(c));
    }
    return t;
  };
  auto fill = [&](Tableau& t) {
    for (VarId j = 0; j < t.num_vars(); ++j) {
      if (!t.is_basic(j)) t.set_value(j, u(rng));
    }
  };
  auto residual = [](const Tableau& t, const std::vector<double>& x) {
    double worst = 0.0;
    for (const TableauRow& r : t.rows()) {
      double s = 0.0;
      for (VarId j = 0; j < r.coeffs.size(); ++j) s += r.coeffs[j] * x[j];
      worst = std::max(worst, std::abs(x[r.basic] - s));
    }
    return worst;
  };

  // Pivot preservation.
  for (int n = 0; n < 1000; ++n) {
    const std::size_t rows = 1 + rng() % 4;
    Tableau t = random_tableau(rows, 2 + rng() % 4);
    fill(t);
    const std::vector<double> before = t.values();
    const VarId leaving = t.basis()[rng() % rows];
    VarId entering = kNoVar;
    for (VarId j = 0; j < t.num_vars(); ++j) {
      if (!t.is_basic(j) && std::abs(t.row(t.row_index(leaving)).coeffs[j]) > kEpsPivot) entering = j;
    }
    if (entering == kNoVar) continue;
    t.pivot(leaving, entering);
    violations += residual(t, before) < 1e-7 ? 0 : 1;
  }
  o.require(violations == 0, "pivot preservation");

  // Basis transformation preservation.
  for (int n = 0, done = 0; done < 100 && n < 10000; ++n) {
    const std::size_t rows = 2 + rng() % 3, cols = 3 + rng() % 3;
    const Tableau t = random_tableau(rows, cols);
    std::vector<VarId> all(rows + cols);
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng);
    const std::vector<VarId> target(all.begin(), all.begin() + static_cast<long>(rows));
    Tableau out;
    try {
      out = t.with_basis(target);
    } catch (const SingularBasis&) {
      continue;
    }
    ++done;
    for (int s = 0; s < 100; ++s) {
      Tableau src = t;
      fill(src);
      violations += residual(out, src.values()) < 1e-7 ? 0 : 1;
    }
  }
  o.require(violations == 0, "basis transformation preservation");

  // Row checker against corner enumeration.
  for (int n = 0; n < 1000; ++n) {
    const std::size_t k = 1 + rng() % 5;
    Tableau t(k + 1);
    std::vector<double> c(k + 1, 0.0);
    for (std::size_t j = 1; j <= k; ++j) {
      c[j] = u(rng);
      double a = u(rng), b = u(rng);
      t.set_bounds(j, {std::min(a, b), std::max(a, b)});
    }
    t.add_row(0, c);
    double a = 2 * u(rng), b = 2 * u(rng);
    t.set_bounds(0, {std::min(a, b), std::max(a, b)});
    double lo = kInf, hi = -kInf;
    for (std::size_t mask = 0; mask < (1u << k); ++mask) {
      double s = 0.0;
      for (std::size_t j = 1; j <= k; ++j) s += c[j] * ((mask >> (j - 1)) & 1 ? t.upper(j) : t.lower(j));
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
    const double gap = std::max(t.lower(0) - hi, lo - t.upper(0));
    if (std::abs(gap - kEpsBound) < 1e-9) continue;
    violations += t.first_infeasible_row().has_value() == (gap > kEpsBound) ? 0 : 1;
  }
  o.require(violations == 0, "row checker vs corner enumeration");

  // Abstraction soundness on the small net plus 50 random nets.
  std::vector<Instance> nets{{small_net(), threshold_03()}};
  for (int n = 0; n < 50; ++n) nets.push_back(random_instance(rng, n % 2 == 0));
  for (const Instance& inst : nets) {
    const NeuronLayout layout(inst.net);
    const Bounds b = analyze(inst.net, inst.prop.box).bounds();
    for (int s = 0; s < 1000; ++s) {
      const std::vector<double> v = evaluate_neurons(inst.net, layout, sample_box(inst.prop.box, rng));
      for (VarId id = 0; id < layout.num_network_vars(); ++id) violations += b[id].contains(v[id], 1e-9) ? 0 : 1;
      for (std::size_t k = 0; k < layout.relus().size(); ++k) {
        const ReluRelation& rel = b.relation(k);
        const double pre = v[layout.relus()[k].pre], post = v[layout.relus()[k].post];
        violations += post >= rel.lower_slope * pre + rel.lower_const - 1e-9 ? 0 : 1;
        violations += post <= rel.upper_slope * pre + rel.upper_const + 1e-9 ? 0 : 1;
      }
    }
  }
  o.require(violations == 0, "abstraction soundness");

  // Relaxation soundness: true executions satisfy every LP constraint.
  for (int n = 0; n < 50; ++n) {
    Instance inst = random_instance(rng, n % 2 == 0);
    inst.prop.negated[0].rhs = -10.0;
    const NeuronLayout layout(inst.net);
    const Relaxation relax = build(inst.net, inst.prop, {}, analyze(inst.net, inst.prop.box).bounds());
    const Tableau& t = relax.tableau();
    const std::size_t nv = layout.num_network_vars();
    for (int s = 0; s < 200; ++s) {
      const std::vector<double> v = evaluate_neurons(inst.net, layout, sample_box(inst.prop.box, rng));
      for (VarId j = 0; j < nv; ++j) violations += t.bounds(j).contains(v[j], 1e-7) ? 0 : 1;
      for (const TableauRow& r : t.rows()) {
        double sum = 0.0;
        for (VarId j = 0; j < nv; ++j) sum += r.coeffs[j] * v[j];
        violations += t.bounds(r.basic).contains(sum, 1e-7) ? 0 : 1;
      }
    }
  }
  o.require(violations == 0, "relaxation soundness");

  // Distance axioms on random trees.
  for (int n = 0; n < 50; ++n) {
    const ProofTree t = random_tree(rng, 12, 6);
    const std::vector<NodeId> leaves = t.leaves();
    for (NodeId a : leaves) {
      for (NodeId b : leaves) {
        const std::size_t ab = distance(t, a, b);
        violations += ab == distance(t, b, a) ? 0 : 1;
        violations += (ab == 0) == (asserts_of(t, a) == asserts_of(t, b)) ? 0 : 1;
        for (NodeId c : leaves) violations += distance(t, a, c) <= ab + distance(t, b, c) ? 0 : 1;
      }
    }
  }
  o.require(violations == 0, "distance axioms");
  if (o.pass) o.detail = "zero violations across six suites";
  return o;
}

// Runs the command-line bench when the tool is built, else the library suite.
Outcome2 criterion_harness() {
  Outcome2 o;
  const std::string csv_path = "acceptance_bench.csv", log_path = "acceptance_bench.log";
  std::string replay_line;
#ifdef INCREMARK_CLI
  const std::string cmd = std::string(INCREMARK_CLI) +
                          " bench --gammas 0.001,0.01,0.03,0.05 --fractions 0.1,0.3,0.5 --trials 25 --seed 808 --out " +
                          csv_path + " 2> " + log_path;
  const int rc = std::system(cmd.c_str());
  o.require(rc == 0, "bench exit status " + std::to_string(rc));
  std::ifstream log(log_path);
  for (std::string line; std::getline(log, line);) {
    if (line.rfind("gamma ", 0) != 0) continue;
    const std::size_t colon = line.find(':'), pct = line.find('%');
    o.require(colon != std::string::npos && pct != std::string::npos, "malformed replay line: " + line);
    if (colon != std::string::npos && pct != std::string::npos) {
      replay_line += " " + line.substr(6, colon - 6) + "=" + line.substr(colon + 9, pct - colon - 8);
    }
  }
#else
  SuiteConfig cfg;
  cfg.trials = 25;
  cfg.fractions = {0.1, 0.3, 0.5};
  cfg.seed = 808;
  const std::vector<BenchRow> rows = run_suite(cfg);
  std::ofstream out(csv_path);
  out << csv_header() << '\n';
  for (const BenchRow& r : rows) out << csv_row(r) << '\n';
  out.close();
  for (const ReplaySummary& s : replay_by_gamma(rows)) {
    replay_line += " " + format_double(s.gamma) + "=" + fmt("%.1f%%", s.pct());
  }
#endif

  std::ifstream in(csv_path);
  std::string header;
  std::getline(in, header);
  o.require(header == "gamma,fraction,seed,verdict_scratch,ms_scratch,verdict_inc,ms_inc,replay_pct,agree",
            "CSV header");
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line);) {
    ++lines;
    o.require(line.size() > 5 && line.substr(line.size() - 5) == ",true", "row without agreement: " + line);
  }
  o.require(lines == 4 * 3 * 25, "expected 300 rows, got " + std::to_string(lines));
  o.require(std::count(replay_line.begin(), replay_line.end(), '=') == 4, "replay percentage missing for a gamma");
  if (o.pass) o.detail = std::to_string(lines) + " rows agree; replay by gamma:" + replay_line;
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome2()>>> criteria{
      {"small-network bounds", criterion_bounds},
      {"small-network verification and initial tableau", criterion_small_verify},
      {"incremental re-verification of the upper modification", criterion_upper_reverify},
      {"lower modification: oracle, scratch and incremental agree", criterion_lower_arbitration},
      {"incremental = scratch = oracle on perturbed random networks", criterion_equivalence},
      {"zero-change replay", criterion_zero_change_replay},
      {"randomized property suites", criterion_properties},
      {"comparison harness CSV", criterion_harness},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome2 o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::printf("%s criterion %zu: %s -- %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
