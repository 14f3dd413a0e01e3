#include "incremark/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <iterator>
#include <map>
#include <mutex>
#include <thread>

#include <spdlog/spdlog.h>

#include "incremark/abstraction.hpp"
#include "incremark/lp.hpp"

namespace incremark {

Network perturb(const Network& net, const Perturbation& p) {
  if (!(p.gamma >= 0.0)) throw Error("gamma must be non-negative");
  if (!(p.fraction > 0.0 && p.fraction <= 1.0)) throw Error("fraction must lie in (0, 1]");

  std::vector<Layer> layers = net.layers();
  std::vector<double*> entries;
  for (Layer& l : layers) {
    for (double& w : l.weights) entries.push_back(&w);
  }
  if (p.scope == PerturbScope::WeightsAndBiases) {
    for (Layer& l : layers) {
      for (double& b : l.bias) entries.push_back(&b);
    }
  }
  const auto count = static_cast<std::size_t>(std::ceil(p.fraction * static_cast<double>(entries.size()) - 1e-9));
  std::mt19937_64 rng(p.seed);
  std::vector<double*> chosen;
  chosen.reserve(count);
  std::sample(entries.begin(), entries.end(), std::back_inserter(chosen), count, rng);
  for (double* w : chosen) {
    const double a = (1.0 - p.gamma) * *w;
    const double b = (1.0 + p.gamma) * *w;
    const double lo = std::min(a, b);
    const double hi = std::max(a, b);
    std::uniform_real_distribution<double> dist(lo, hi);
    const double v = dist(rng);
    if (lo < hi) *w = std::clamp(v, lo, hi);
  }
  return net.with_layers(std::move(layers));
}

namespace {

bool output_refuted(const NeuronLayout& layout, const std::vector<Interval>& iv, const SafetyProperty& prop) {
  for (const OutputConstraint& c : prop.negated) {
    double hi = 0.0;
    for (std::size_t j = 0; j < c.coeffs.size(); ++j) {
      const Interval& y = iv[layout.output(j)];
      hi += c.coeffs[j] >= 0.0 ? c.coeffs[j] * y.hi : c.coeffs[j] * y.lo;
    }
    if (hi < c.rhs - kEpsBound) return true;
  }
  return false;
}

class PatternOracle {
 public:
  PatternOracle(const Network& net, const SafetyProperty& prop) : net_(net), prop_(prop), layout_(net) {}

  Verdict run(AssertionSet asserts) {
    base_ = asserts;
    if (descend(0, asserts)) return Verdict::sat(witness_);
    return Verdict::unsat();
  }

 private:
  // Depth-first over ReLUs in layout order. Interval propagation under the
  // partial pattern prunes contradictory prefixes and fixes forced phases.
  bool descend(std::size_t i, AssertionSet& asserts) {
    const auto iv = interval_propagate(net_, prop_.box, asserts);
    if (!iv || output_refuted(layout_, *iv, prop_)) return false;
    const auto& relus = layout_.relus();
    if (i == relus.size()) return leaf(*iv, asserts);
    const Interval& pre = (*iv)[relus[i].pre];
    for (Sign s : {Sign::NonPos, Sign::NonNeg}) {
      if (s == Sign::NonPos && pre.lo > 0.0) continue;
      if (s == Sign::NonNeg && pre.hi < 0.0) continue;
      const Assertion a{relus[i].pre, s};
      if (base_.count(a.complement())) continue;
      const bool added = asserts.insert(a).second;
      const bool sat = descend(i + 1, asserts);
      if (added) asserts.erase(a);
      if (sat) return true;
    }
    return false;
  }

  bool leaf(const std::vector<Interval>& iv, const AssertionSet& asserts) {
    std::vector<ReluEncoding> enc;
    enc.reserve(asserts.size());
    for (const ReluNeuron& r : layout_.relus()) {
      const bool active = asserts.count({r.pre, Sign::NonNeg}) > 0;
      enc.push_back(active ? ReluEncoding::Active : ReluEncoding::Inactive);
    }
    Relaxation relax = build_relaxation(net_, prop_, iv, enc);
    if (relax.trivially_empty()) return false;
    const LpStatus st = relax.solve();
    if (st == LpStatus::Unknown) throw Error("oracle LP hit its iteration cap");
    if (st == LpStatus::Infeasible) return false;
    std::vector<double> x = relax.point();
    x.resize(net_.input_size());
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = std::clamp(x[k], prop_.box[k].lo, prop_.box[k].hi);
    if (!validate_witness(net_, prop_, x)) {
      spdlog::warn("oracle: feasible pattern point fails validation");
    }
    witness_ = std::move(x);
    return true;
  }

  const Network& net_;
  const SafetyProperty& prop_;
  NeuronLayout layout_;
  AssertionSet base_;
  std::vector<double> witness_;
};

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& body) {
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(n, 1));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < jobs; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (std::thread& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

BenchRow run_row(const Network& net, const SafetyProperty& prop, const ProofTree& tree, const Perturbation& p,
                 Mode mode, const SearchParams& params, bool use_oracle) {
  BenchRow row;
  row.gamma = p.gamma;
  row.fraction = p.fraction;
  row.seed = p.seed;
  const Network modified = perturb(net, p);

  auto t0 = std::chrono::steady_clock::now();
  const SolveResult scratch = solve(modified, prop, params);
  row.ms_scratch = elapsed_ms(t0);
  row.scratch = scratch.verdict.outcome;

  t0 = std::chrono::steady_clock::now();
  const IncrementalResult inc = verify_incremental(modified, prop, tree, mode, params);
  row.ms_incremental = elapsed_ms(t0);
  row.incremental = inc.verdict.outcome;
  row.replayed = inc.report.replayed;
  row.visited_unsat = inc.report.visited_unsat();
  row.replay_pct = inc.report.replay_pct();

  row.agree = row.scratch == row.incremental;
  if (inc.verdict.is_sat() && !validate_witness(modified, prop, inc.verdict.witness)) row.agree = false;
  if (use_oracle && modified.relu_count() <= kOracleMaxRelus) {
    row.oracle_checked = true;
    row.oracle = oracle(modified, prop).outcome;
    row.agree = row.agree && row.oracle == row.scratch;
  }
  if (!row.agree) {
    spdlog::error("disagreement at gamma {} fraction {} seed {}: scratch {}, incremental {}", p.gamma, p.fraction,
                  p.seed, to_string(row.scratch), to_string(row.incremental));
  }
  return row;
}

}  // namespace

Verdict oracle(const Network& net, const SafetyProperty& prop, const AssertionSet& asserts) {
  prop.validate(net);
  if (net.relu_count() > kOracleMaxRelus) {
    throw Error("oracle supports at most " + std::to_string(kOracleMaxRelus) + " ReLUs, network has " +
                std::to_string(net.relu_count()));
  }
  if (prop.empty_negation()) return Verdict::unsat();
  return PatternOracle(net, prop).run(asserts);
}

Network random_network(std::span<const std::size_t> dims, std::mt19937_64& rng) {
  if (dims.size() < 2) throw Error("a network needs at least two layer widths");
  std::uniform_real_distribution<double> weight(-1.0, 1.0);
  std::uniform_real_distribution<double> bias(-0.5, 0.5);
  std::vector<Layer> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Layer layer;
    layer.rows = dims[l + 1];
    layer.cols = dims[l];
    layer.activation = l + 2 == dims.size() ? Activation::None : Activation::Relu;
    for (std::size_t k = 0; k < layer.rows * layer.cols; ++k) layer.weights.push_back(weight(rng));
    for (std::size_t k = 0; k < layer.rows; ++k) layer.bias.push_back(bias(rng));
    layers.push_back(std::move(layer));
  }
  return Network(std::vector<std::size_t>(dims.begin(), dims.end()), std::move(layers));
}

SafetyProperty random_threshold_property(const Network& net, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  SafetyProperty prop;
  for (std::size_t i = 0; i < net.input_size(); ++i) {
    double a = unit(rng);
    double b = unit(rng);
    if (a > b) std::swap(a, b);
    if (b - a < 0.2) {
      const double mid = std::clamp(0.5 * (a + b), -0.9, 0.9);
      a = mid - 0.1;
      b = mid + 0.1;
    }
    prop.box.push_back({a, b});
  }

  double sampled_max = -kInf;
  std::vector<double> x(net.input_size());
  for (int s = 0; s < 200; ++s) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = std::uniform_real_distribution<double>(prop.box[i].lo, prop.box[i].hi)(rng);
    }
    sampled_max = std::max(sampled_max, evaluate(net, x)[0]);
  }
  const NeuronLayout layout(net);
  const Analysis a = analyze(net, prop.box);
  const double upper = a.bounds()[layout.output(0)].hi;
  const double t = std::uniform_real_distribution<double>(-0.3, 0.7)(rng);
  OutputConstraint c;
  c.coeffs.assign(net.output_size(), 0.0);
  c.coeffs[0] = 1.0;
  c.rhs = sampled_max + t * std::max(upper - sampled_max, 0.05);
  prop.negated.push_back(std::move(c));
  return prop;
}

std::string csv_header() { return "gamma,fraction,seed,verdict_scratch,ms_scratch,verdict_inc,ms_inc,replay_pct,agree"; }

std::string csv_row(const BenchRow& r) {
  auto fixed = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return std::string(buf);
  };
  return format_double(r.gamma) + "," + format_double(r.fraction) + "," + std::to_string(r.seed) + "," +
         to_string(r.scratch) + "," + fixed(r.ms_scratch) + "," + to_string(r.incremental) + "," +
         fixed(r.ms_incremental) + "," + fixed(r.replay_pct) + "," + (r.agree ? "true" : "false");
}

std::vector<BenchRow> compare(const Network& net, const SafetyProperty& prop,
                              std::span<const Perturbation> perturbations, Mode mode, const SearchParams& params,
                              bool use_oracle) {
  const SolveResult original = solve(net, prop, params);
  std::vector<BenchRow> rows;
  rows.reserve(perturbations.size());
  for (const Perturbation& p : perturbations) {
    rows.push_back(run_row(net, prop, original.tree, p, mode, params, use_oracle));
  }
  return rows;
}

std::vector<BenchRow> run_suite(const SuiteConfig& cfg) {
  static constexpr std::size_t kShapeA[] = {2, 5, 5, 1};
  static constexpr std::size_t kShapeB[] = {3, 8, 1};

  struct Trial {
    Network net;
    SafetyProperty prop;
    ProofTree tree;
  };
  std::mt19937_64 rng(cfg.seed);
  std::vector<Trial> trials;
  trials.reserve(cfg.trials);
  for (std::size_t t = 0; t < cfg.trials; ++t) {
    Network net = t % 2 == 0 ? random_network(kShapeA, rng) : random_network(kShapeB, rng);
    SafetyProperty prop = random_threshold_property(net, rng);
    trials.push_back({std::move(net), std::move(prop), ProofTree{}});
  }
  parallel_for(trials.size(), cfg.jobs, [&](std::size_t t) {
    trials[t].tree = solve(trials[t].net, trials[t].prop, cfg.params).tree;
  });

  struct Task {
    std::size_t trial;
    Perturbation p;
  };
  std::vector<Task> tasks;
  for (double g : cfg.gammas) {
    for (double f : cfg.fractions) {
      for (std::size_t t = 0; t < trials.size(); ++t) {
        tasks.push_back({t, Perturbation{g, f, cfg.seed * 1000003ULL + tasks.size(), cfg.scope}});
      }
    }
  }
  std::vector<BenchRow> rows(tasks.size());
  parallel_for(tasks.size(), cfg.jobs, [&](std::size_t i) {
    const Trial& tr = trials[tasks[i].trial];
    rows[i] = run_row(tr.net, tr.prop, tr.tree, tasks[i].p, cfg.mode, cfg.params, cfg.use_oracle);
  });
  return rows;
}

std::vector<ReplaySummary> replay_by_gamma(std::span<const BenchRow> rows) {
  std::map<double, ReplaySummary> by;
  for (const BenchRow& r : rows) {
    ReplaySummary& s = by[r.gamma];
    s.gamma = r.gamma;
    ++s.rows;
    s.replayed += r.replayed;
    s.visited += r.visited_unsat;
  }
  std::vector<ReplaySummary> out;
  for (auto& [g, s] : by) out.push_back(s);
  return out;
}

}  // namespace incremark
