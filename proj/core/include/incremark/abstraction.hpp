#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "incremark/common.hpp"
#include "incremark/model.hpp"

namespace incremark {

/// Linear bounds of a ReLU output in terms of its own pre-activation value:
///   lower_slope * pre + lower_const <= post <= upper_slope * pre + upper_const.
struct ReluRelation {
  double lower_slope = 0.0;
  double lower_const = 0.0;
  double upper_slope = 0.0;
  double upper_const = 0.0;

  friend bool operator==(const ReluRelation&, const ReluRelation&) = default;
};

enum class ReluPhase { Active, Inactive, Uncertain };

/// Concrete interval for every network variable plus the symbolic relation
/// of every ReLU (indexed like NeuronLayout::relus()).
class Bounds {
 public:
  Bounds() = default;
  Bounds(NeuronLayout layout, std::vector<Interval> intervals, std::vector<ReluRelation> relations);

  const NeuronLayout& layout() const { return layout_; }
  const Interval& operator[](VarId v) const { return intervals_[v]; }
  const std::vector<Interval>& intervals() const { return intervals_; }
  const std::vector<ReluRelation>& relations() const { return relations_; }
  const ReluRelation& relation(std::size_t relu) const { return relations_[relu]; }

  ReluPhase phase(std::size_t relu) const;
  std::vector<Interval> input_box() const;
  friend bool operator==(const Bounds&, const Bounds&) = default;

 private:
  NeuronLayout layout_{std::vector<std::size_t>{1, 1}, false};
  std::vector<Interval> intervals_;
  std::vector<ReluRelation> relations_;
};

/// Result of analyze(): either bounds, or the pre-activation neuron whose
/// assertion contradicts the box-derived interval.
class Analysis {
 public:
  static Analysis feasible(Bounds b) { return Analysis(std::move(b), kNoVar); }
  static Analysis infeasible(VarId conflict) { return Analysis(std::nullopt, conflict); }

  bool is_feasible() const { return bounds_.has_value(); }
  const Bounds& bounds() const { return *bounds_; }
  Bounds& bounds() { return *bounds_; }
  VarId conflict() const { return conflict_; }

 private:
  Analysis(std::optional<Bounds> b, VarId c) : bounds_(std::move(b)), conflict_(c) {}
  std::optional<Bounds> bounds_;
  VarId conflict_;
};

/// Abstract interpretation with full back-substitution to the input layer.
/// Assertions clamp pre-activation intervals before the ReLU case split.
/// When `refine` is given, every computed interval is intersected with it.
Analysis analyze(const Network& net, std::span<const Interval> box, const AssertionSet& asserts = {},
                 const Bounds* refine = nullptr);

/// True iff some negated-output constraint a.y >= c has interval upper bound
/// below c - kEpsBound (so the property cannot be violated). Vacuous for an
/// empty negation.
bool is_property_refuted(const Bounds& bounds, const SafetyProperty& prop);

/// Plain interval propagation (no relational information), indexed like
/// NeuronLayout. nullopt when an assertion contradicts its interval.
std::optional<std::vector<Interval>> interval_propagate(const Network& net, std::span<const Interval> box,
                                         const AssertionSet& asserts = {});

/// Human-readable dump of the bounds, one variable per line.
std::string format_bounds(const Bounds& bounds);

/// Display name of a variable (x1, x2, ..., y), aux variables included.
std::string neuron_name(const NeuronLayout& layout, VarId v);

}  // namespace incremark
