#include <benchmark/benchmark.h>

#include <random>
#include <string>

#include "incremark/abstraction.hpp"
#include "incremark/bench.hpp"
#include "incremark/incremental.hpp"
#include "incremark/model.hpp"
#include "incremark/reluplex.hpp"

namespace {

using namespace incremark;

const std::string kData = INCREMARK_DATA_DIR;

struct Instance {
  Network net;
  SafetyProperty prop;
};

Instance random_instance(std::uint64_t seed, bool wide) {
  static constexpr std::size_t kDeep[] = {2, 5, 5, 1};
  static constexpr std::size_t kWide[] = {3, 8, 1};
  std::mt19937_64 rng(seed);
  Network net = wide ? random_network(kWide, rng) : random_network(kDeep, rng);
  SafetyProperty prop = random_threshold_property(net, rng);
  return {std::move(net), std::move(prop)};
}

void BM_AnalyzeSmall(benchmark::State& state) {
  const Network net = load_network(kData + "/small.rnn");
  const SafetyProperty prop = load_property(kData + "/y_ge_0.3.prop");
  for (auto _ : state) benchmark::DoNotOptimize(analyze(net, prop.box));
}
BENCHMARK(BM_AnalyzeSmall);

void BM_SolveSmall(benchmark::State& state) {
  const Network net = load_network(kData + "/small.rnn");
  const SafetyProperty prop = load_property(kData + "/y_ge_0.3.prop");
  for (auto _ : state) benchmark::DoNotOptimize(solve(net, prop));
}
BENCHMARK(BM_SolveSmall);

void BM_SolveRandom(benchmark::State& state) {
  const Instance inst = random_instance(static_cast<std::uint64_t>(state.range(0)), state.range(1) != 0);
  for (auto _ : state) benchmark::DoNotOptimize(solve(inst.net, inst.prop));
}
BENCHMARK(BM_SolveRandom)->Args({1, 0})->Args({2, 1})->Args({3, 0})->Args({4, 1});

void BM_Reverify(benchmark::State& state) {
  const Instance inst = random_instance(static_cast<std::uint64_t>(state.range(0)), state.range(1) != 0);
  const ProofTree tree = solve(inst.net, inst.prop).tree;
  const Network modified = perturb(inst.net, Perturbation{0.01, 0.3, 7, PerturbScope::Weights});
  const Mode mode = state.range(2) != 0 ? Mode::Strict : Mode::Lazy;
  for (auto _ : state) benchmark::DoNotOptimize(verify_incremental(modified, inst.prop, tree, mode));
}
BENCHMARK(BM_Reverify)->Args({1, 0, 0})->Args({1, 0, 1})->Args({2, 1, 0})->Args({2, 1, 1});

void BM_Oracle(benchmark::State& state) {
  const Instance inst = random_instance(static_cast<std::uint64_t>(state.range(0)), state.range(1) != 0);
  for (auto _ : state) benchmark::DoNotOptimize(oracle(inst.net, inst.prop));
}
BENCHMARK(BM_Oracle)->Args({1, 0})->Args({2, 1});

}  // namespace

BENCHMARK_MAIN();
