#pragma once

#include <cstdint>
#include <optional>

#include "incremark/abstraction.hpp"
#include "incremark/model.hpp"
#include "incremark/proof_tree.hpp"
#include "incremark/simplex.hpp"

namespace incremark {

struct SearchParams {
  /// Repair steps per node; default max(200, 50 * uncertain ReLUs).
  std::optional<std::size_t> local_budget;
  /// Split depth limit; default the ReLU count.
  std::optional<std::size_t> max_depth;
  /// Accepted for interface stability; the search itself is deterministic.
  std::uint64_t seed = 0;
};

struct SearchStats {
  std::size_t nodes = 0;
  std::size_t repair_steps = 0;
  std::size_t splits = 0;
  std::size_t lp_calls = 0;
};

struct SolveResult {
  Verdict verdict;
  ProofTree tree;
  SearchStats stats;
};

/// Initial configuration over the box-level analysis of `prop`.
Configuration initial_configuration(const Network& net, const SafetyProperty& prop);

/// Depth-first Reluplex search with proof-tree recording.
SolveResult solve(const Network& net, const SafetyProperty& prop, const SearchParams& params = {});

/// Same search restricted to `base` assertions. The returned tree's root
/// stands for the branch itself (edge labels are relative to `base`).
/// `start`, when given, seeds the tableau (basis and assignment).
SolveResult solve_branch(const Network& net, const SafetyProperty& prop, const AssertionSet& base,
                         const SearchParams& params, const Configuration* start = nullptr);

}  // namespace incremark
