#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "incremark/incremental.hpp"
#include "incremark/model.hpp"
#include "incremark/reluplex.hpp"

namespace incremark {

enum class PerturbScope { Weights, WeightsAndBiases };

struct Perturbation {
  double gamma = 0.0;     // relative change bound, >= 0
  double fraction = 1.0;  // share of entries modified, in (0, 1]
  std::uint64_t seed = 0;
  PerturbScope scope = PerturbScope::Weights;
};

/// Copy of `net` where ceil(fraction * entries) entries, chosen uniformly
/// without replacement, are resampled uniformly from [(1-g)w, (1+g)w].
/// Untouched entries are bitwise equal to the input.
Network perturb(const Network& net, const Perturbation& p);

inline constexpr std::size_t kOracleMaxRelus = 16;

/// Exact verdict by enumerating activation patterns and solving one LP per
/// pattern, restricted to patterns consistent with `asserts`. Throws Error
/// when the network has more than kOracleMaxRelus ReLUs.
Verdict oracle(const Network& net, const SafetyProperty& prop, const AssertionSet& asserts = {});

/// Random weights in [-1, 1] and biases in [-0.5, 0.5]; the last layer is
/// affine.
Network random_network(std::span<const std::size_t> dims, std::mt19937_64& rng);

/// Random sub-box of [-1, 1]^m with a single threshold y_0 >= t, where t is
/// drawn around the sampled maximum so both verdicts occur.
SafetyProperty random_threshold_property(const Network& net, std::mt19937_64& rng);

struct BenchRow {
  double gamma = 0.0;
  double fraction = 1.0;
  std::uint64_t seed = 0;
  Outcome scratch = Outcome::Unsat;
  double ms_scratch = 0.0;
  Outcome incremental = Outcome::Unsat;
  double ms_incremental = 0.0;
  std::size_t replayed = 0;
  std::size_t visited_unsat = 0;
  double replay_pct = 100.0;
  bool oracle_checked = false;
  Outcome oracle = Outcome::Unsat;
  bool agree = true;
};

std::string csv_header();
std::string csv_row(const BenchRow& row);

/// Solves (net, prop) once from scratch, then for each perturbation compares
/// the scratch and incremental verdicts on the perturbed network, and the
/// oracle's when the ReLU count allows it.
std::vector<BenchRow> compare(const Network& net, const SafetyProperty& prop,
                              std::span<const Perturbation> perturbations, Mode mode,
                              const SearchParams& params = {}, bool use_oracle = true);

struct SuiteConfig {
  std::vector<double> gammas{0.001, 0.01, 0.03, 0.05};
  std::vector<double> fractions{1.0};
  std::size_t trials = 25;  // random (net, property) pairs
  std::uint64_t seed = 1;
  PerturbScope scope = PerturbScope::Weights;
  Mode mode = Mode::Lazy;
  bool use_oracle = true;
  std::size_t jobs = 1;
  SearchParams params;
};

/// One row per (gamma, fraction, trial), ordered in that nesting. Trials
/// alternate between 2-5-5-1 and 3-8-1 networks.
std::vector<BenchRow> run_suite(const SuiteConfig& config);

struct ReplaySummary {
  double gamma = 0.0;
  std::size_t rows = 0;
  std::size_t replayed = 0;
  std::size_t visited = 0;
  double pct() const { return visited == 0 ? 100.0 : 100.0 * static_cast<double>(replayed) / static_cast<double>(visited); }
};

/// Replay rate per gamma, pooled over the Unsat leaves of all rows.
std::vector<ReplaySummary> replay_by_gamma(std::span<const BenchRow> rows);

}  // namespace incremark
