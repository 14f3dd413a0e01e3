#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "incremark/abstraction.hpp"
#include "incremark/common.hpp"
#include "incremark/model.hpp"

namespace incremark {

class PivotError : public Error {
 public:
  using Error::Error;
};

/// gauss_to_basis could not make some target variable basic.
class SingularBasis : public Error {
 public:
  using Error::Error;
};

/// One tableau equation: x_basic = sum_j coeffs[j] * x_j over non-basic j.
struct TableauRow {
  VarId basic = kNoVar;
  std::vector<double> coeffs;  // dense over all variables; zero on basic columns
};

enum class FeasibilityStatus { Feasible, Infeasible, IterationLimit };

/// Pivot selection for bound repair. Bland: lowest-id violated basic and
/// lowest-id entering candidate (terminates). Greedy: largest violation and
/// largest coefficient magnitude, ties to the lowest id; deferred variables
/// enter only when no other candidate exists.
enum class PivotRule { Bland, Greedy };
enum class OptimizeStatus { Optimal, Unbounded, IterationLimit };

/// Dense simplex tableau over bounded variables with an assignment. Non-basic
/// variables are kept inside their bounds by every mutating operation except
/// pivot(), which only rewrites the equations.
class Tableau {
 public:
  Tableau() = default;
  explicit Tableau(std::size_t num_vars);

  std::size_t num_vars() const { return lower_.size(); }
  std::size_t num_rows() const { return rows_.size(); }

  /// Adds x_basic = sum coeffs[j] x_j. Currently-basic variables on the right
  /// are substituted by their rows. `basic` must be a fresh variable.
  void add_row(VarId basic, std::vector<double> coeffs);

  const TableauRow& row(std::size_t r) const { return rows_[r]; }
  const std::vector<TableauRow>& rows() const { return rows_; }
  bool is_basic(VarId v) const { return row_of_[v] != kNoVar; }
  std::size_t row_index(VarId basic) const { return row_of_[basic]; }
  /// Basic variables in ascending id order.
  std::vector<VarId> basis() const;

  Interval bounds(VarId v) const { return {lower_[v], upper_[v]}; }
  double lower(VarId v) const { return lower_[v]; }
  double upper(VarId v) const { return upper_[v]; }
  void set_bounds(VarId v, Interval iv);
  /// Marks variables that the greedy rule picks as entering only as a last
  /// resort.
  void set_deferred(std::vector<bool> deferred) { deferred_ = std::move(deferred); }
  double value(VarId v) const { return value_[v]; }
  const std::vector<double>& values() const { return value_; }

  /// Sets a non-basic variable and propagates to the basic ones.
  void set_value(VarId v, double x);
  /// Clamps every non-basic variable into its bounds, then recomputes basics.
  void clamp_nonbasic();
  void recompute_basic_values();
  /// Moves every non-basic variable to its lower bound (upper if the lower
  /// is infinite, 0 if both are), then recomputes basics.
  void reset_nonbasic_to_lower();

  /// Makes `entering` basic in place of `leaving`. Throws PivotError when the
  /// pivot coefficient is below kEpsPivot.
  void pivot(VarId leaving, VarId entering);
  /// Moves basic `leaving` to `target` by adjusting `entering`, then pivots.
  void pivot_and_update(VarId leaving, VarId entering, double target);

  /// Interval of the right-hand side of row r under current bounds.
  Interval row_range(std::size_t r) const;
  /// True when the row's range misses its basic variable's bounds by more
  /// than kEpsBound.
  bool row_infeasible(std::size_t r) const;
  /// Basic variable of the first infeasible row in basic-id order.
  std::optional<VarId> first_infeasible_row() const;

  double max_row_residual() const;
  bool bounds_satisfied(double eps = kEpsBound) const;
  /// Basic variable outside its bounds by more than kEpsBound, chosen by rule.
  std::optional<VarId> violating_basic(PivotRule rule = PivotRule::Bland) const;
  /// Entering candidate that can move `basic` up (or down), chosen by rule.
  std::optional<VarId> entering_for(VarId basic, bool increase, PivotRule rule = PivotRule::Bland) const;

  enum class FixStep { Done, Progress, Conflict };
  /// One bound-repair step on a violated basic variable. On Conflict,
  /// *conflict receives the basic variable of the stuck row.
  FixStep fix_bound_step(VarId* conflict = nullptr, PivotRule rule = PivotRule::Bland);
  /// Clamps non-basic values into their bounds, then repairs basic ones.
  FeasibilityStatus make_feasible(std::size_t max_iterations, VarId* conflict = nullptr);

  /// Bounded primal simplex minimizing objective . x from a feasible
  /// assignment (Bland's rule on both entering and leaving choice).
  OptimizeStatus minimize(std::span<const double> objective, std::size_t max_iterations);

  /// Copy with exactly `target` as basic set, via sequential pivoting with
  /// partial pivoting on magnitude. Throws SingularBasis.
  Tableau with_basis(std::span<const VarId> target) const;

 private:
  std::vector<double> lower_;
  std::vector<double> upper_;
  std::vector<double> value_;
  std::vector<std::size_t> row_of_;
  std::vector<TableauRow> rows_;
  std::vector<bool> deferred_;
};

enum class VarKind { Input, Pre, Post, Output, ReluSlack, ConstSlack, PropSlack };

/// ReLU pair tracked by the configuration; `slack` = post - pre.
struct ReluPair {
  VarId pre = kNoVar;
  VarId post = kNoVar;
  VarId slack = kNoVar;
};

/// A linear expression over network variables plus a constant.
struct LinearExpr {
  std::vector<std::pair<VarId, double>> terms;
  double constant = 0.0;
};

/// Reluplex configuration (B, T, R, l, u, alpha).
class Configuration {
 public:
  /// Standard encoding: one row per affine neuron and per ReLU, constants
  /// carried by fixed slack variables, single-output negated constraints
  /// folded into output bounds and the rest added as rows with own slacks.
  static Configuration initialize(const Network& net, const SafetyProperty& prop, const Bounds& bounds);

  const NeuronLayout& layout() const { return layout_; }
  Tableau& tableau() { return tableau_; }
  const Tableau& tableau() const { return tableau_; }
  const std::vector<ReluPair>& relus() const { return relus_; }
  std::size_t num_vars() const { return kinds_.size(); }
  VarKind kind(VarId v) const { return kinds_[v]; }

  /// Re-derives every variable bound from `bounds`, clamps non-basic
  /// variables and recomputes the basic ones.
  void apply_bounds(const Bounds& bounds);
  /// Replaces the equations (keeps bounds and non-basic values).
  void set_tableau(Tableau t);

  /// Variable as an expression over network variables (aux slacks expand
  /// to their defining equation).
  LinearExpr definition(VarId v) const;
  std::vector<double> input_assignment() const;
  std::string name(VarId v) const;
  std::string dump() const;

 private:
  Configuration() = default;

  NeuronLayout layout_{std::vector<std::size_t>{1, 1}, false};
  Tableau tableau_;
  std::vector<ReluPair> relus_;
  std::vector<VarKind> kinds_;
  std::vector<double> fixed_value_;  // ConstSlack values
  std::vector<Interval> folded_;  // per output, from single-output constraints
  std::vector<OutputConstraint> prop_rows_;
  VarId prop_base_ = 0;
};

struct RowVerdict {
  bool feasible = true;
  VarId row_var = kNoVar;  // basic variable of the contradicting row
};

RowVerdict check_unsat_rows(const Configuration& cfg);

/// Local-search state across repair steps of one node.
struct LocalSearch {
  std::size_t budget = 200;
  /// Steps that use PivotRule::Greedy before switching to Bland.
  std::size_t greedy_steps = 100;
  std::size_t steps = 0;
  std::vector<std::size_t> violations;  // per ReLU pair
};

enum class RepairKind { Progress, Satisfied, Stuck, Conflict };

struct RepairResult {
  RepairKind kind = RepairKind::Progress;
  std::vector<double> witness;  // Satisfied: assignment of the inputs
  VarId conflict = kNoVar;  // Conflict: row with no repairing candidate
};

/// One local-search step: a bound fix, else one ReLU-pair fix, else
/// Satisfied. Returns Stuck once the step budget is spent.
RepairResult repair_step(Configuration& cfg, LocalSearch& search);

bool relu_satisfied(const Configuration& cfg, const ReluPair& p, double eps = kEpsBound);

}  // namespace incremark
