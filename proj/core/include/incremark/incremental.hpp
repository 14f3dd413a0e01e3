#pragma once

#include <string>
#include <vector>

#include "incremark/model.hpp"
#include "incremark/proof_tree.hpp"
#include "incremark/reluplex.hpp"
#include "incremark/simplex.hpp"

namespace incremark {

/// Strict: rebuild the stored basis and re-check the stored key row after
/// LP-tightening its variables. Lazy: LP-tighten the inputs, re-run the
/// analysis and check every row of the initial tableau.
enum class Mode { Strict, Lazy };

std::string to_string(Mode m);
Mode parse_mode(const std::string& s);

enum class LeafOutcome { ProofReplayed, ProofFailedFellBack, ReSolvedSat, ReSolvedUnsat, Pruned, Skipped };

std::string to_string(LeafOutcome o);

struct LeafRecord {
  NodeId node = kNoNode;  // id in the pruned input tree
  NodeStatus old_status = NodeStatus::Unsolved;
  LeafOutcome outcome = LeafOutcome::Skipped;
};

struct IncrementalReport {
  Verdict verdict;
  Mode mode = Mode::Lazy;
  std::vector<LeafRecord> leaves;
  std::size_t unsat_leaves = 0;  // Unsat leaves in the pruned tree
  std::size_t replayed = 0;
  std::size_t fallback = 0;
  std::size_t pruned_nodes = 0;
  bool refuted_by_bounds = false;
  bool witness_reused = false;
  bool prop_hash_mismatch = false;
  double ms_analysis = 0.0;
  double ms_sat_phase = 0.0;
  double ms_unsat_phase = 0.0;
  double ms_total = 0.0;

  std::size_t visited_unsat() const { return replayed + fallback; }
  /// Share of visited Unsat leaves whose proof replayed, in percent; 100
  /// when no Unsat leaf was visited.
  double replay_pct() const;
};

std::string report_json(const IncrementalReport& report);

struct IncrementalResult {
  Verdict verdict;
  IncrementalReport report;
  ProofTree tree;
};

/// Re-verifies (net, prop) reusing the proof tree recorded for a network of
/// the same shape. Throws ShapeMismatch when the layer widths differ.
IncrementalResult verify_incremental(const Network& net, const SafetyProperty& prop, const ProofTree& tree,
                                     Mode mode = Mode::Lazy, const SearchParams& params = {});

struct LeafResult {
  Verdict verdict;
  bool replayed = false;  // decided without search
  ProofTree subtree;  // search tree when not replayed
};

/// Re-proves one stored Unsat leaf for the modified network; falls back to a
/// full search of the branch when the old proof no longer applies.
LeafResult solve_leaf(const Network& net, const SafetyProperty& prop, const ProofTree& tree, NodeId leaf,
                      Mode mode, const Configuration& initial, const SearchParams& params = {});

}  // namespace incremark
