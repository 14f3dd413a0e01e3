#pragma once

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "incremark/abstraction.hpp"
#include "incremark/bench.hpp"
#include "incremark/model.hpp"
#include "incremark/proof_tree.hpp"

namespace testing_support {

using namespace incremark;

inline std::string data_path(const std::string& name) { return std::string(INCREMARK_DATA_DIR) + "/" + name; }

inline Network small_net() { return load_network(data_path("small.rnn")); }
inline Network modified_upper() { return load_network(data_path("small_upper.rnn")); }
inline Network modified_lower() { return load_network(data_path("small_lower.rnn")); }
inline SafetyProperty threshold_03() { return load_property(data_path("y_ge_0.3.prop")); }
inline SafetyProperty threshold_2() { return load_property(data_path("y_ge_2.prop")); }

// Variable ids of the two-input, two-hidden, one-output net.
inline constexpr VarId kX1 = 0, kX2 = 1, kX3 = 2, kX4 = 3, kX5 = 4, kX6 = 5, kY = 6;
inline constexpr VarId kX7 = 7, kX8 = 8, kX9 = 9, kX10 = 10, kX11 = 11, kX12 = 12, kX13 = 13;

struct Instance {
  Network net;
  SafetyProperty prop;
};

inline Instance random_instance(std::mt19937_64& rng, bool wide) {
  static constexpr std::size_t kDeep[] = {2, 5, 5, 1};
  static constexpr std::size_t kWide[] = {3, 8, 1};
  Network net = wide ? random_network(kWide, rng) : random_network(kDeep, rng);
  SafetyProperty prop = random_threshold_property(net, rng);
  return {std::move(net), std::move(prop)};
}

inline std::vector<double> sample_box(std::span<const Interval> box, std::mt19937_64& rng) {
  std::vector<double> x;
  for (const Interval& iv : box) x.push_back(std::uniform_real_distribution<double>(iv.lo, iv.hi)(rng));
  return x;
}

inline bool satisfies(const AssertionSet& asserts, const std::vector<double>& values) {
  return std::all_of(asserts.begin(), asserts.end(), [&](const Assertion& a) {
    return a.sign == Sign::NonNeg ? values[a.neuron] >= 0.0 : values[a.neuron] <= 0.0;
  });
}

// Independent reference forward pass written directly from the layer data.
inline std::vector<double> reference_forward(const Network& net, std::vector<double> x) {
  for (const Layer& l : net.layers()) {
    std::vector<double> next(l.rows);
    for (std::size_t r = 0; r < l.rows; ++r) {
      double s = l.bias[r];
      for (std::size_t c = 0; c < l.cols; ++c) s += l.weights[r * l.cols + c] * x[c];
      next[r] = l.activation == Activation::Relu ? std::max(0.0, s) : s;
    }
    x = std::move(next);
  }
  return x;
}

// Random tree grown by splitting random leaves on neurons not yet used on
// their path.
inline ProofTree random_tree(std::mt19937_64& rng, std::size_t splits, std::size_t neurons) {
  ProofTree t({2, neurons, 1}, "0");
  t.add_root();
  for (std::size_t s = 0; s < splits; ++s) {
    const std::vector<NodeId> leaves = t.leaves();
    const NodeId leaf = leaves[std::uniform_int_distribution<std::size_t>(0, leaves.size() - 1)(rng)];
    const AssertionSet used = asserts_of(t, leaf);
    std::vector<VarId> free;
    for (VarId n = 2; n < 2 + neurons; ++n) {
      if (!used.count({n, Sign::NonNeg}) && !used.count({n, Sign::NonPos})) free.push_back(n);
    }
    if (free.empty()) continue;
    t.split(leaf, free[std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng)]);
  }
  for (NodeId l : t.leaves()) t.node(l).status = NodeStatus::Unsat;
  return t;
}

}  // namespace testing_support
