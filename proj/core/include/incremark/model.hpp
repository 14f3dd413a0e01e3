#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "incremark/common.hpp"

namespace incremark {

enum class Activation { Relu, None };

/// One affine layer y = W x + b, optionally followed by ReLU.
struct Layer {
  std::size_t rows = 0;  // output width
  std::size_t cols = 0;  // input width
  std::vector<double> weights;  // row-major, rows * cols
  std::vector<double> bias;
  Activation activation = Activation::Relu;

  double weight(std::size_t r, std::size_t c) const { return weights[r * cols + c]; }
  double& weight(std::size_t r, std::size_t c) { return weights[r * cols + c]; }
};

/// Feed-forward ReLU network. Immutable after construction; invariants are
/// checked by the constructor.
class Network {
 public:
  Network(std::vector<std::size_t> dims, std::vector<Layer> layers);

  const std::vector<std::size_t>& dims() const { return dims_; }
  const std::vector<Layer>& layers() const { return layers_; }
  const Layer& layer(std::size_t i) const { return layers_[i]; }
  std::size_t num_layers() const { return layers_.size(); }
  std::size_t input_size() const { return dims_.front(); }
  std::size_t output_size() const { return dims_.back(); }
  std::size_t relu_count() const;
  bool final_relu() const { return layers_.back().activation == Activation::Relu; }

  /// Copy with the given layers replaced; re-validates.
  Network with_layers(std::vector<Layer> layers) const { return Network(dims_, std::move(layers)); }

 private:
  std::vector<std::size_t> dims_;
  std::vector<Layer> layers_;
};

struct ReluNeuron {
  VarId pre = kNoVar;
  VarId post = kNoVar;
  std::size_t layer = 0;
  std::size_t index = 0;

  friend bool operator==(const ReluNeuron&, const ReluNeuron&) = default;
};

/// Deterministic variable numbering for a network shape. Inputs come first,
/// then per ReLU layer its pre-activation block followed by its
/// post-activation block, then the output neurons. Auxiliary variables are
/// numbered after num_network_vars() by the simplex configuration.
class NeuronLayout {
 public:
  explicit NeuronLayout(const Network& net);
  NeuronLayout(std::span<const std::size_t> dims, bool final_relu);

  std::size_t num_network_vars() const { return total_; }
  std::size_t num_layers() const { return dims_.size() - 1; }
  std::size_t input_size() const { return dims_.front(); }
  std::size_t output_size() const { return dims_.back(); }
  std::size_t width(std::size_t layer) const { return dims_[layer + 1]; }

  VarId input(std::size_t i) const { return i; }
  VarId output(std::size_t j) const { return output_base_ + j; }
  /// Variable holding W x + b of the given layer (pre-activation, or the
  /// output neuron for a final affine-only layer).
  VarId affine(std::size_t layer, std::size_t j) const { return affine_base_[layer] + j; }
  /// Variable holding the activated value of the given layer.
  VarId activated(std::size_t layer, std::size_t j) const { return act_base_[layer] + j; }
  /// Variable feeding column `c` of the given layer.
  VarId layer_input(std::size_t layer, std::size_t c) const {
    return layer == 0 ? input(c) : activated(layer - 1, c);
  }
  bool has_relu(std::size_t layer) const { return relu_layer_[layer]; }

  const std::vector<ReluNeuron>& relus() const { return relus_; }
  /// Index into relus() for a pre-activation variable, or nullopt.
  std::optional<std::size_t> relu_of_pre(VarId pre) const;
  bool is_input(VarId v) const { return v < input_size(); }
  bool is_output(VarId v) const { return v >= output_base_ && v < total_; }

  const std::vector<std::size_t>& dims() const { return dims_; }
  friend bool operator==(const NeuronLayout&, const NeuronLayout&) = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<bool> relu_layer_;
  std::vector<VarId> affine_base_;
  std::vector<VarId> act_base_;
  std::vector<ReluNeuron> relus_;
  VarId output_base_ = 0;
  std::size_t total_ = 0;
};

/// Linear constraint sum_j coeffs[j] * y_j >= rhs over the output neurons.
struct OutputConstraint {
  std::vector<double> coeffs;
  double rhs = 0.0;
};

/// Input box X plus the negation of the safety property as a conjunction of
/// output constraints. An empty conjunction is the explicit "empty negation"
/// marker: nothing violates the property, so every query is UNSAT.
struct SafetyProperty {
  std::vector<Interval> box;
  std::vector<OutputConstraint> negated;

  bool empty_negation() const { return negated.empty(); }
  /// Throws DimensionError / Error if the property does not fit the network.
  void validate(const Network& net) const;
  bool holds_at_output(std::span<const double> y, double eps) const;
};

enum class Outcome { Sat, Unsat };

struct Verdict {
  Outcome outcome = Outcome::Unsat;
  std::vector<double> witness;  // input point, SAT only

  static Verdict unsat() { return {}; }
  static Verdict sat(std::vector<double> x) { return {Outcome::Sat, std::move(x)}; }
  bool is_sat() const { return outcome == Outcome::Sat; }
};

std::string to_string(Outcome o);

std::vector<double> evaluate(const Network& net, std::span<const double> x);

/// Forward pass returning the value of every network variable, indexed by
/// the NeuronLayout numbering.
std::vector<double> evaluate_neurons(const Network& net, const NeuronLayout& layout,
                                     std::span<const double> x);

/// True iff x lies in the box and f(x) satisfies every negated-output
/// constraint, both within eps.
bool validate_witness(const Network& net, const SafetyProperty& prop, std::span<const double> x,
                      double eps = kEpsSat);

/// One query per competing label j != argmax f(x0): box = B_inf(x0, r),
/// optionally clipped to `domain`, negation y_j - y_c >= 0.
std::vector<SafetyProperty> make_robustness_queries(
    const Network& net, std::span<const double> x0, double radius,
    const std::optional<std::vector<Interval>>& domain = std::nullopt);

// relunet / prop text formats.
Network parse_network(std::istream& in);
Network load_network(const std::filesystem::path& path);
std::string format_network(const Network& net);
void save_network(const Network& net, const std::filesystem::path& path);

SafetyProperty parse_property(std::istream& in);
SafetyProperty load_property(const std::filesystem::path& path);
std::string format_property(const SafetyProperty& prop);
void save_property(const SafetyProperty& prop, const std::filesystem::path& path);

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double v);

}  // namespace incremark
