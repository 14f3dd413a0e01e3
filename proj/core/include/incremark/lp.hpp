#pragma once

#include <span>
#include <vector>

#include "incremark/abstraction.hpp"
#include "incremark/common.hpp"
#include "incremark/model.hpp"
#include "incremark/simplex.hpp"

namespace incremark {

/// How one ReLU enters a linear relaxation.
enum class ReluEncoding {
  Triangle,  // post >= 0, post >= pre, post <= slope * (pre - l)
  Active,    // post = pre, pre >= 0
  Inactive,  // post = 0, pre <= 0
};

enum class LpStatus { Feasible, Infeasible, Unknown };

/// Linear constraints over the network variables (ids < num_network_vars)
/// plus one slack per row. Variable bounds carry the box, the per-neuron
/// intervals and the sign assertions.
class Relaxation {
 public:
  Relaxation(NeuronLayout layout, Tableau tableau, bool empty)
      : layout_(std::move(layout)), tableau_(std::move(tableau)), empty_(empty) {}

  const NeuronLayout& layout() const { return layout_; }
  const Tableau& tableau() const { return tableau_; }
  std::size_t num_rows() const { return tableau_.num_rows(); }
  /// True when some variable's interval is empty before any solving.
  bool trivially_empty() const { return empty_; }

  /// Phase one. Leaves a feasible assignment in the tableau on success.
  LpStatus solve();
  LpStatus status() const { return status_; }
  /// Values of the network variables at the current assignment.
  std::vector<double> point() const;
  std::size_t iteration_cap() const { return 50 * (tableau_.num_rows() + tableau_.num_vars()); }

 private:
  friend std::vector<Interval> tighten(Relaxation&, std::span<const LinearExpr>, std::span<const Interval>);

  NeuronLayout layout_;
  Tableau tableau_;
  bool empty_ = false;
  bool solved_ = false;
  LpStatus status_ = LpStatus::Unknown;
};

/// Builds the relaxation with explicit per-ReLU encodings over the given
/// per-variable intervals (indexed like NeuronLayout).
Relaxation build_relaxation(const Network& net, const SafetyProperty& prop, std::span<const Interval> intervals,
                            std::span<const ReluEncoding> encodings);

/// Relaxation of (net, box, asserts, negated property): uncertain ReLUs under
/// `bounds` use the triangle, decided ones their exact linear form.
Relaxation build(const Network& net, const SafetyProperty& prop, const AssertionSet& asserts,
                 const Bounds& bounds);

/// Feasibility with the iteration-cap fallback: Unknown counts as feasible.
bool feasible(Relaxation& relax);

/// Minimizes and maximizes each objective. Results are intersected with
/// `prior`; a side stays at its prior value when unbounded or capped. An
/// infeasible relaxation returns `prior` unchanged.
std::vector<Interval> tighten(Relaxation& relax, std::span<const LinearExpr> objectives,
                              std::span<const Interval> prior);
/// Convenience overload over network variables, priors taken from the
/// relaxation's own bounds.
std::vector<Interval> tighten(Relaxation& relax, std::span<const VarId> vars);

/// LP-tightens every input over the relaxation, then re-runs the analysis on
/// the shrunken box (intersected with the unshrunk bounds). Infeasible when
/// the analysis or the LP is infeasible.
Analysis tighten_inputs_then_repropagate(const Network& net, const SafetyProperty& prop,
                                         const AssertionSet& asserts);

}  // namespace incremark
