#include "incremark/incremental.hpp"

#include <algorithm>
#include <chrono>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "incremark/abstraction.hpp"
#include "incremark/lp.hpp"

namespace incremark {

std::string to_string(Mode m) { return m == Mode::Strict ? "strict" : "lazy"; }

Mode parse_mode(const std::string& s) {
  if (s == "strict") return Mode::Strict;
  if (s == "lazy") return Mode::Lazy;
  throw Error("unknown mode '" + s + "' (expected strict or lazy)");
}

std::string to_string(LeafOutcome o) {
  switch (o) {
    case LeafOutcome::ProofReplayed:
      return "proof_replayed";
    case LeafOutcome::ProofFailedFellBack:
      return "proof_failed_fell_back";
    case LeafOutcome::ReSolvedSat:
      return "resolved_sat";
    case LeafOutcome::ReSolvedUnsat:
      return "resolved_unsat";
    case LeafOutcome::Pruned:
      return "pruned";
    case LeafOutcome::Skipped:
      return "skipped";
  }
  return "skipped";
}

double IncrementalReport::replay_pct() const {
  const std::size_t visited = visited_unsat();
  return visited == 0 ? 100.0 : 100.0 * static_cast<double>(replayed) / static_cast<double>(visited);
}

std::string report_json(const IncrementalReport& r) {
  nlohmann::json j;
  j["verdict"] = to_string(r.verdict.outcome);
  j["witness"] = r.verdict.is_sat() ? nlohmann::json(r.verdict.witness) : nlohmann::json(nullptr);
  j["mode"] = to_string(r.mode);
  j["unsat_leaves"] = r.unsat_leaves;
  j["visited_unsat"] = r.visited_unsat();
  j["replayed"] = r.replayed;
  j["fallback"] = r.fallback;
  j["replay_pct"] = r.replay_pct();
  j["pruned_nodes"] = r.pruned_nodes;
  j["refuted_by_bounds"] = r.refuted_by_bounds;
  j["witness_reused"] = r.witness_reused;
  j["prop_hash_mismatch"] = r.prop_hash_mismatch;
  j["ms"] = {{"analysis", r.ms_analysis},
             {"sat_phase", r.ms_sat_phase},
             {"unsat_phase", r.ms_unsat_phase},
             {"total", r.ms_total}};
  nlohmann::json leaves = nlohmann::json::array();
  for (const LeafRecord& l : r.leaves) {
    leaves.push_back({{"node", l.node}, {"old_status", to_string(l.old_status)}, {"outcome", to_string(l.outcome)}});
  }
  j["leaves"] = std::move(leaves);
  return j.dump(2) + "\n";
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Initial configuration rewritten to the stored basis, or nullopt when the
// basis does not fit or is singular.
std::optional<Configuration> with_stored_basis(const Configuration& initial, const std::vector<VarId>& basis) {
  if (basis.size() != initial.tableau().num_rows()) return std::nullopt;
  for (VarId v : basis) {
    if (v >= initial.num_vars()) return std::nullopt;
  }
  try {
    Configuration cfg = initial;
    cfg.set_tableau(initial.tableau().with_basis(basis));
    return cfg;
  } catch (const SingularBasis& e) {
    spdlog::debug("stored basis unusable: {}", e.what());
    return std::nullopt;
  }
}

bool strict_replay(const Network& net, const SafetyProperty& prop, const AssertionSet& asserts,
                   const Bounds& bounds, Relaxation& relax, const ProofNode& leaf, const Configuration& initial) {
  if (leaf.key_row_var == kNoVar) return false;
  std::optional<Configuration> cfg = with_stored_basis(initial, leaf.basis);
  if (!cfg) return false;
  cfg->apply_bounds(bounds);
  Tableau& t = cfg->tableau();
  const std::size_t r = t.row_index(leaf.key_row_var);

  std::vector<VarId> vars{leaf.key_row_var};
  for (VarId j = 0; j < t.num_vars(); ++j) {
    if (t.row(r).coeffs[j] != 0.0) vars.push_back(j);
  }
  std::vector<LinearExpr> objectives;
  std::vector<Interval> prior;
  for (VarId v : vars) {
    objectives.push_back(cfg->definition(v));
    prior.push_back(t.bounds(v));
  }
  const std::vector<Interval> tight = tighten(relax, objectives, prior);
  for (std::size_t k = 0; k < vars.size(); ++k) t.set_bounds(vars[k], tight[k]);
  (void)net;
  (void)prop;
  (void)asserts;
  return t.row_infeasible(r);
}

bool lazy_replay(const Network& net, const SafetyProperty& prop, const AssertionSet& asserts,
                 const Configuration& initial) {
  const Analysis tightened = tighten_inputs_then_repropagate(net, prop, asserts);
  if (!tightened.is_feasible() || is_property_refuted(tightened.bounds(), prop)) return true;
  Configuration cfg = initial;
  cfg.apply_bounds(tightened.bounds());
  return !check_unsat_rows(cfg).feasible;
}

}  // namespace

LeafResult solve_leaf(const Network& net, const SafetyProperty& prop, const ProofTree& tree, NodeId leaf,
                      Mode mode, const Configuration& initial, const SearchParams& params) {
  const AssertionSet asserts = asserts_of(tree, leaf);
  LeafResult out;

  const Analysis a = analyze(net, prop.box, asserts);
  if (!a.is_feasible() || is_property_refuted(a.bounds(), prop)) {
    out.replayed = true;
    return out;
  }
  Relaxation relax = build(net, prop, asserts, a.bounds());
  if (!feasible(relax)) {
    out.replayed = true;
    return out;
  }

  bool replayed = false;
  if (mode == Mode::Strict) {
    const ProofNode& n = tree.node(leaf);
    if (n.key_row_var != kNoVar && with_stored_basis(initial, n.basis)) {
      replayed = strict_replay(net, prop, asserts, a.bounds(), relax, n, initial);
    } else {
      replayed = lazy_replay(net, prop, asserts, initial);
    }
  } else {
    replayed = lazy_replay(net, prop, asserts, initial);
  }
  if (replayed) {
    out.replayed = true;
    return out;
  }

  SolveResult s = solve_branch(net, prop, asserts, params, &initial);
  out.verdict = s.verdict;
  out.subtree = std::move(s.tree);
  return out;
}

IncrementalResult verify_incremental(const Network& net, const SafetyProperty& prop, const ProofTree& tree,
                                     Mode mode, const SearchParams& params) {
  const Clock::time_point t_start = Clock::now();
  check_shape(tree, net);
  prop.validate(net);
  if (tree.empty()) throw Error("proof tree has no root");

  IncrementalResult res;
  IncrementalReport& rep = res.report;
  rep.mode = mode;
  const std::string hash = property_hash(prop);
  if (hash != tree.prop_hash()) {
    rep.prop_hash_mismatch = true;
    spdlog::warn("proof tree was recorded for a different property (hash {} vs {})", tree.prop_hash(), hash);
  }

  auto finish = [&](Verdict v, ProofTree t) {
    rep.verdict = v;
    t.set_prop_hash(hash);
    t.set_verdict(v.outcome);
    res.verdict = std::move(v);
    res.tree = std::move(t);
    rep.ms_total = ms_since(t_start);
    return std::move(res);
  };
  auto unsat_root = [&]() {
    ProofTree t(net.dims(), hash);
    t.add_root();
    t.node(0).status = NodeStatus::Unsat;
    return t;
  };

  Clock::time_point t0 = Clock::now();
  const Analysis top = analyze(net, prop.box);
  if (!top.is_feasible() || is_property_refuted(top.bounds(), prop)) {
    rep.refuted_by_bounds = true;
    rep.ms_analysis = ms_since(t0);
    return finish(Verdict::unsat(), unsat_root());
  }
  const Configuration initial = Configuration::initialize(net, prop, top.bounds());

  // Record leaves removed by pruning, by their id in the input tree.
  for (NodeId l : tree.leaves()) {
    for (const Assertion& as : asserts_of(tree, l)) {
      const Interval& iv = top.bounds()[as.neuron];
      if (as.sign == Sign::NonNeg ? iv.hi < -kEpsBound : iv.lo > kEpsBound) {
        rep.leaves.push_back({l, tree.node(l).status, LeafOutcome::Pruned});
        break;
      }
    }
  }
  ProofTree work = prune(tree, top.bounds());
  rep.pruned_nodes = tree.size() - work.size();
  rep.ms_analysis = ms_since(t0);
  const std::vector<NodeId> unsat_leaves = work.leaves_with(NodeStatus::Unsat);
  rep.unsat_leaves = unsat_leaves.size();

  // A stored counterexample that still violates the property settles it.
  const std::optional<NodeId> old_sat = tree.sat_leaf();
  if (old_sat && !tree.node(*old_sat).witness.empty() &&
      validate_witness(net, prop, tree.node(*old_sat).witness)) {
    const std::vector<double>& w = tree.node(*old_sat).witness;
    rep.witness_reused = true;
    if (const std::optional<NodeId> s = work.sat_leaf()) work.node(*s).status = NodeStatus::Unsolved;
    const NodeId at = leaf_for_point(work, evaluate_neurons(net, NeuronLayout(net), w));
    ProofNode& n = work.node(at);
    n.status = NodeStatus::Sat;
    n.witness = w;
    n.key_row_var = kNoVar;
    for (NodeId l : work.leaves()) {
      rep.leaves.push_back({l, work.node(l).status, l == at ? LeafOutcome::ReSolvedSat : LeafOutcome::Skipped});
    }
    return finish(Verdict::sat(w), std::move(work));
  }

  // SAT phase: the Sat leaf first, then unsolved leaves by distance to it.
  t0 = Clock::now();
  std::vector<NodeId> order;
  const std::optional<NodeId> sat = work.sat_leaf();
  std::vector<NodeId> unsolved = work.leaves_with(NodeStatus::Unsolved);
  if (sat) {
    order.push_back(*sat);
    std::stable_sort(unsolved.begin(), unsolved.end(), [&](NodeId a, NodeId b) {
      return distance(work, a, *sat) < distance(work, b, *sat);
    });
  }
  order.insert(order.end(), unsolved.begin(), unsolved.end());

  std::vector<LeafRecord> visited;
  auto mark_rest = [&](std::size_t from, const std::vector<NodeId>& list) {
    for (std::size_t k = from; k < list.size(); ++k) {
      visited.push_back({list[k], work.node(list[k]).status, LeafOutcome::Skipped});
    }
  };

  for (std::size_t k = 0; k < order.size(); ++k) {
    const NodeId v = order[k];
    const NodeStatus old_status = work.node(v).status;
    const AssertionSet asserts = asserts_of(work, v);
    std::optional<Configuration> seeded;
    if (mode == Mode::Strict) seeded = with_stored_basis(initial, work.node(v).basis);
    SolveResult s = solve_branch(net, prop, asserts, params, seeded ? &*seeded : &initial);
    work.node(v).status = NodeStatus::Unsolved;
    work.node(v).witness.clear();
    graft(work, v, s.tree);
    if (s.verdict.is_sat()) {
      visited.push_back({v, old_status, LeafOutcome::ReSolvedSat});
      mark_rest(k + 1, order);
      mark_rest(0, unsat_leaves);
      rep.ms_sat_phase = ms_since(t0);
      rep.leaves.insert(rep.leaves.end(), visited.begin(), visited.end());
      return finish(s.verdict, std::move(work));
    }
    visited.push_back({v, old_status, LeafOutcome::ReSolvedUnsat});
  }
  rep.ms_sat_phase = ms_since(t0);

  // UNSAT phase: replay every stored proof, searching where it fails.
  t0 = Clock::now();
  for (std::size_t k = 0; k < unsat_leaves.size(); ++k) {
    const NodeId v = unsat_leaves[k];
    LeafResult lr = solve_leaf(net, prop, work, v, mode, initial, params);
    if (lr.replayed) {
      ++rep.replayed;
      visited.push_back({v, NodeStatus::Unsat, LeafOutcome::ProofReplayed});
      continue;
    }
    ++rep.fallback;
    visited.push_back({v, NodeStatus::Unsat, LeafOutcome::ProofFailedFellBack});
    work.node(v).status = NodeStatus::Unsolved;
    work.node(v).basis.clear();
    work.node(v).key_row_var = kNoVar;
    graft(work, v, lr.subtree);
    if (lr.verdict.is_sat()) {
      mark_rest(k + 1, unsat_leaves);
      rep.ms_unsat_phase = ms_since(t0);
      rep.leaves.insert(rep.leaves.end(), visited.begin(), visited.end());
      return finish(lr.verdict, std::move(work));
    }
  }
  rep.ms_unsat_phase = ms_since(t0);
  rep.leaves.insert(rep.leaves.end(), visited.begin(), visited.end());
  return finish(Verdict::unsat(), std::move(work));
}

}  // namespace incremark
