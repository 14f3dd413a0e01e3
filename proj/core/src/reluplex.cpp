#include "incremark/reluplex.hpp"

#include <algorithm>
#include <spdlog/spdlog.h>

#include "incremark/lp.hpp"

namespace incremark {

namespace {

constexpr std::size_t kMinBudget = 200;
constexpr std::size_t kBudgetPerRelu = 50;

class Search {
 public:
  Search(const Network& net, const SafetyProperty& prop, const SearchParams& params, Configuration start)
      : net_(net), prop_(prop), params_(params), start_(std::move(start)) {}

  SolveResult run(const AssertionSet& base) {
    SolveResult out;
    out.tree = ProofTree(net_.dims(), property_hash(prop_));
    tree_ = &out.tree;
    const NodeId root = tree_->add_root();
    max_depth_ = params_.max_depth.value_or(net_.relu_count());
    const bool sat = visit(root, base, 0, start_);
    out.verdict = sat ? Verdict::sat(witness_) : Verdict::unsat();
    out.tree.set_verdict(out.verdict.outcome);
    out.stats = stats_;
    return out;
  }

 private:
  void mark_unsat(NodeId id, const Configuration& cfg, VarId key) {
    ProofNode& n = tree_->node(id);
    n.status = NodeStatus::Unsat;
    n.basis = cfg.tableau().basis();
    n.key_row_var = key;
    spdlog::debug("node {}: UNSAT{}", id, key == kNoVar ? "" : " on row " + cfg.name(key));
  }

  bool mark_sat(NodeId id, const Configuration& cfg, std::vector<double> x) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], prop_.box[i].lo, prop_.box[i].hi);
    if (!validate_witness(net_, prop_, x)) return false;
    ProofNode& n = tree_->node(id);
    n.status = NodeStatus::Sat;
    n.basis = cfg.tableau().basis();
    n.witness = x;
    witness_ = std::move(x);
    spdlog::debug("node {}: SAT", id);
    return true;
  }

  // Decides a node with no uncertain ReLU left. The configuration's bounds
  // then encode every ReLU exactly, so Bland repair on the tableau decides
  // it and yields a key row on infeasibility. The LP is the fallback.
  bool decide_linear(NodeId id, Configuration& cfg, const AssertionSet& asserts, const Bounds& bounds) {
    Tableau& t = cfg.tableau();
    VarId conflict = kNoVar;
    const std::size_t cap = 50 * (t.num_rows() + t.num_vars());
    switch (t.make_feasible(cap, &conflict)) {
      case FeasibilityStatus::Feasible:
        if (mark_sat(id, cfg, cfg.input_assignment())) return true;
        break;
      case FeasibilityStatus::Infeasible:
        if (const RowVerdict rv = check_unsat_rows(cfg); !rv.feasible) {
          mark_unsat(id, cfg, rv.row_var);
          return false;
        }
        break;
      case FeasibilityStatus::IterationLimit:
        break;
    }
    ++stats_.lp_calls;
    Relaxation relax = build(net_, prop_, asserts, bounds);
    switch (relax.solve()) {
      case LpStatus::Infeasible:
        mark_unsat(id, cfg, kNoVar);
        return false;
      case LpStatus::Feasible: {
        std::vector<double> p = relax.point();
        p.resize(net_.input_size());
        if (mark_sat(id, cfg, std::move(p))) return true;
        break;
      }
      case LpStatus::Unknown:
        break;
    }
    throw Error("linear sub-problem at node " + std::to_string(id) + " could not be decided");
  }

  bool visit(NodeId id, const AssertionSet& asserts, std::size_t depth, Configuration cfg) {
    ++stats_.nodes;
    const Analysis a = analyze(net_, prop_.box, asserts);
    if (!a.is_feasible() || is_property_refuted(a.bounds(), prop_)) {
      mark_unsat(id, cfg, kNoVar);
      return false;
    }
    const Bounds& bounds = a.bounds();
    cfg.apply_bounds(bounds);
    if (const RowVerdict rv = check_unsat_rows(cfg); !rv.feasible) {
      mark_unsat(id, cfg, rv.row_var);
      return false;
    }

    std::vector<std::size_t> uncertain;
    for (std::size_t i = 0; i < cfg.relus().size(); ++i) {
      if (bounds.phase(i) == ReluPhase::Uncertain) uncertain.push_back(i);
    }
    const std::size_t budget = uncertain.empty()
                                   ? 0
                                   : params_.local_budget.value_or(
                                         std::max(kMinBudget, kBudgetPerRelu * uncertain.size()));

    LocalSearch ls;
    ls.budget = budget;
    ls.greedy_steps = budget;
    for (;;) {
      const RepairResult r = repair_step(cfg, ls);
      if (r.kind == RepairKind::Progress) continue;
      if (r.kind == RepairKind::Satisfied) {
        if (mark_sat(id, cfg, r.witness)) {
          stats_.repair_steps += ls.steps;
          return true;
        }
        break;
      }
      if (r.kind == RepairKind::Conflict) {
        if (const RowVerdict rv = check_unsat_rows(cfg); !rv.feasible) {
          stats_.repair_steps += ls.steps;
          mark_unsat(id, cfg, rv.row_var);
          return false;
        }
      }
      break;
    }
    stats_.repair_steps += ls.steps;

    if (uncertain.empty()) return decide_linear(id, cfg, asserts, bounds);
    if (depth >= max_depth_) throw Error("split depth limit reached at node " + std::to_string(id));

    std::size_t pick = uncertain.front();
    for (std::size_t i : uncertain) {
      if (ls.violations[i] > ls.violations[pick]) pick = i;
    }
    const VarId neuron = cfg.relus()[pick].pre;
    const auto [neg, pos] = tree_->split(id, neuron);
    ++stats_.splits;
    spdlog::debug("node {}: split on {} (violations {})", id, cfg.name(neuron), ls.violations[pick]);

    // Both children start from this node's final configuration.
    for (NodeId child : {neg, pos}) {
      AssertionSet next = asserts;
      next.insert(*tree_->node(child).assertion);
      if (visit(child, next, depth + 1, cfg)) return true;
    }
    return false;
  }

  const Network& net_;
  const SafetyProperty& prop_;
  const SearchParams& params_;
  Configuration start_;
  ProofTree* tree_ = nullptr;
  SearchStats stats_;
  std::size_t max_depth_ = 0;
  std::vector<double> witness_;
};

}  // namespace

Configuration initial_configuration(const Network& net, const SafetyProperty& prop) {
  prop.validate(net);
  const Analysis a = analyze(net, prop.box);
  if (!a.is_feasible()) throw Error("input box is empty");
  return Configuration::initialize(net, prop, a.bounds());
}

SolveResult solve_branch(const Network& net, const SafetyProperty& prop, const AssertionSet& base,
                         const SearchParams& params, const Configuration* start) {
  prop.validate(net);
  if (prop.empty_negation()) {
    SolveResult out;
    out.tree = ProofTree(net.dims(), property_hash(prop));
    out.tree.add_root();
    out.tree.node(0).status = NodeStatus::Unsat;
    out.tree.set_verdict(Outcome::Unsat);
    return out;
  }
  Search search(net, prop, params, start ? *start : initial_configuration(net, prop));
  return search.run(base);
}

SolveResult solve(const Network& net, const SafetyProperty& prop, const SearchParams& params) {
  return solve_branch(net, prop, {}, params);
}

}  // namespace incremark
