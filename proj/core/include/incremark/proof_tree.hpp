#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "incremark/abstraction.hpp"
#include "incremark/common.hpp"
#include "incremark/model.hpp"

namespace incremark {

using NodeId = std::size_t;
inline constexpr NodeId kNoNode = static_cast<NodeId>(-1);

enum class NodeStatus { Internal, Unsat, Sat, Unsolved };

std::string to_string(NodeStatus s);

struct ProofNode {
  NodeId id = kNoNode;
  NodeId parent = kNoNode;
  std::optional<Assertion> assertion;  // edge label from the parent
  NodeStatus status = NodeStatus::Unsolved;
  std::vector<NodeId> children;  // empty or exactly two
  std::vector<VarId> basis;  // Unsat (and optionally Sat) leaves
  VarId key_row_var = kNoVar;  // Unsat leaves with a row certificate
  std::vector<double> witness;  // Sat leaf

  friend bool operator==(const ProofNode&, const ProofNode&) = default;
};

/// Search tree whose edges carry sign assertions on pre-activation neurons.
/// Node ids are dense indices into nodes().
class ProofTree {
 public:
  ProofTree() = default;
  ProofTree(std::vector<std::size_t> dims, std::string prop_hash);

  NodeId add_root();
  /// Splits a leaf on `neuron`; returns {NonPos child, NonNeg child}.
  std::pair<NodeId, NodeId> split(NodeId leaf, VarId neuron);

  const ProofNode& node(NodeId id) const;
  ProofNode& node(NodeId id);
  const std::vector<ProofNode>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  NodeId root() const { return empty() ? kNoNode : 0; }

  const std::vector<std::size_t>& dims() const { return dims_; }
  const std::string& prop_hash() const { return prop_hash_; }
  void set_prop_hash(std::string h) { prop_hash_ = std::move(h); }
  std::optional<Outcome> verdict() const { return verdict_; }
  void set_verdict(std::optional<Outcome> v) { verdict_ = v; }

  std::vector<NodeId> leaves() const;
  std::vector<NodeId> leaves_with(NodeStatus s) const;
  std::optional<NodeId> sat_leaf() const;

  /// Throws Error when a structural invariant is broken.
  void check_invariants() const;

  /// Raw node storage for builders that maintain the invariants themselves.
  std::vector<ProofNode>& nodes_for_build() { return nodes_; }

  friend bool operator==(const ProofTree&, const ProofTree&) = default;

 private:
  std::vector<std::size_t> dims_;
  std::string prop_hash_;
  std::optional<Outcome> verdict_;
  std::vector<ProofNode> nodes_;
};

/// Assertions on the path from the root to `v` (root excluded).
AssertionSet asserts_of(const ProofTree& tree, NodeId v);

/// Size of the symmetric difference of the two assertion sets.
std::size_t distance(const ProofTree& tree, NodeId a, NodeId b);

/// Removes every edge whose assertion contradicts `bounds` (x >= 0 with
/// u < -eps, or x <= 0 with l > eps) together with its subtree. The parent
/// of a removed edge is replaced by its surviving child, dropping the now
/// redundant assertion. Surviving nodes keep their relative id order, so an
/// untouched tree comes back identical. A removed Sat leaf clears the
/// verdict hint.
ProofTree prune(const ProofTree& tree, const Bounds& bounds);

/// Replaces leaf `leaf` of `tree` by the whole of `sub`: the leaf takes the
/// root's status and payload, and sub's other nodes are appended below it.
void graft(ProofTree& tree, NodeId leaf, const ProofTree& sub);

/// Leaf reached by following, at every split, the child whose assertion
/// holds for the given network-variable values. Values within kEpsBound of
/// zero go to the NonPos child.
NodeId leaf_for_point(const ProofTree& tree, std::span<const double> values);

/// Canonical property text hashed with 64-bit FNV-1a, as 16 hex digits.
std::string property_hash(const SafetyProperty& prop);

std::string serialize(const ProofTree& tree);
ProofTree deserialize(const std::string& text);
void save_tree(const ProofTree& tree, const std::filesystem::path& path);
ProofTree load_tree(const std::filesystem::path& path);

/// Throws ShapeMismatch when the tree was recorded for other layer widths.
void check_shape(const ProofTree& tree, const Network& net);

}  // namespace incremark
