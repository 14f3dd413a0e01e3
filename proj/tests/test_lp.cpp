#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "incremark/lp.hpp"
#include "support.hpp"

using namespace incremark;
using namespace testing_support;

namespace {

Relaxation relax_small(const AssertionSet& asserts) {
  const Analysis a = analyze(small_net(), threshold_03().box, asserts);
  return build(small_net(), threshold_03(), asserts, a.bounds());
}

// Checks every relaxation constraint at the network values `v`. The rows are
// slack definitions over network variables, so slacks are recomputed from v.
bool point_satisfies(const Relaxation& relax, const std::vector<double>& v, double eps) {
  const Tableau& t = relax.tableau();
  const std::size_t n = relax.layout().num_network_vars();
  for (VarId j = 0; j < n; ++j) {
    if (!t.bounds(j).contains(v[j], eps)) return false;
  }
  for (const TableauRow& r : t.rows()) {
    double s = 0.0;
    for (VarId j = 0; j < n; ++j) s += r.coeffs[j] * v[j];
    for (VarId j = n; j < t.num_vars(); ++j) {
      if (r.coeffs[j] != 0.0) return false;  // rows must be over network variables only
    }
    if (!t.bounds(r.basic).contains(s, eps)) return false;
  }
  return true;
}

}  // namespace

TEST(Lp, TriangleConstraintsOfUncertainRelu) {
  Relaxation relax = relax_small({});
  // Points on the upper triangle edge x5 = (0.8 / 1.8)(x3 + 1) are feasible
  // for the x5 constraints; just above it is not.
  const std::vector<LinearExpr> obj{{{{kX5, 1.0}, {kX3, -0.8 / 1.8}}, 0.0}};
  const std::vector<Interval> prior{{-kInf, kInf}};
  const Interval gap = tighten(relax, obj, prior)[0];
  EXPECT_NEAR(gap.hi, 0.8 / 1.8, 1e-7);
  const std::vector<LinearExpr> below{{{{kX5, 1.0}, {kX3, -1.0}}, 0.0}};
  EXPECT_GE(tighten(relax, below, prior)[0].lo, -1e-7);
}

TEST(Lp, DecidedReluUsesExactForm) {
  Relaxation inactive = relax_small({{kX3, Sign::NonPos}});
  const std::vector<VarId> x5{kX5};
  const Interval off = tighten(inactive, x5)[0];
  EXPECT_NEAR(off.lo, 0.0, 1e-9);
  EXPECT_NEAR(off.hi, 0.0, 1e-9);

  Relaxation active = relax_small({{kX3, Sign::NonNeg}});
  const std::vector<LinearExpr> diff{{{{kX5, 1.0}, {kX3, -1.0}}, 0.0}};
  const std::vector<Interval> prior{{-kInf, kInf}};
  const Interval d = tighten(active, diff, prior)[0];
  EXPECT_NEAR(d.lo, 0.0, 1e-9);
  EXPECT_NEAR(d.hi, 0.0, 1e-9);
}

TEST(Lp, Feasibility) {
  Relaxation dead = relax_small({{kX3, Sign::NonPos}, {kX4, Sign::NonPos}});
  EXPECT_FALSE(feasible(dead));
  Relaxation open = relax_small({});
  EXPECT_TRUE(feasible(open));

  Relaxation none(NeuronLayout(small_net()), Tableau(7), false);
  EXPECT_TRUE(feasible(none));
}

TEST(Lp, TightenRespectsAssertionsAndNegation) {
  Relaxation relax = relax_small({{kX4, Sign::NonNeg}});
  const std::vector<VarId> vars{kX4, kY};
  const std::vector<Interval> t = tighten(relax, vars);
  EXPECT_GE(t[0].lo, -kEpsBound);
  EXPECT_GE(t[1].lo, 0.3 - kEpsBound);
  // No execution with x4 >= 0 and y >= 0.3 falls below the tightened bound.
  std::mt19937_64 rng(41);
  const NeuronLayout layout(small_net());
  for (int s = 0; s < 20000; ++s) {
    const std::vector<double> v = evaluate_neurons(small_net(), layout, sample_box(threshold_03().box, rng));
    if (v[kX4] < 0.0 || v[kY] < 0.3) continue;
    ASSERT_GE(v[kX4], t[0].lo - 1e-9);
  }
}

TEST(Lp, InputTighteningNeverWidens) {
  const Network f = small_net();
  const SafetyProperty p = threshold_03();
  const Bounds plain = analyze(f, p.box).bounds();
  const Analysis t = tighten_inputs_then_repropagate(f, p, {});
  ASSERT_TRUE(t.is_feasible());
  for (VarId v = 0; v < NeuronLayout(f).num_network_vars(); ++v) {
    EXPECT_GE(t.bounds()[v].lo, plain[v].lo - 1e-12);
    EXPECT_LE(t.bounds()[v].hi, plain[v].hi + 1e-12);
  }
  EXPECT_FALSE(tighten_inputs_then_repropagate(f, p, {{kX3, Sign::NonPos}, {kX4, Sign::NonPos}}).is_feasible());
}

// Random true executions, filtered by the assertions and the negation,
// satisfy every constraint, and tightened intervals contain their values.
TEST(Lp, RelaxationSoundOnSampledExecutions) {
  std::mt19937_64 rng(41);
  std::size_t checked = 0;
  for (int n = 0; n < 40; ++n) {
    Instance inst = random_instance(rng, n % 2 == 0);
    // A low threshold keeps plenty of sampled points violating the property.
    inst.prop.negated[0].rhs = -1.0;
    const NeuronLayout layout(inst.net);
    AssertionSet asserts;
    if (n % 3 != 0) asserts.insert({layout.relus()[n % layout.relus().size()].pre, n % 3 == 1 ? Sign::NonNeg : Sign::NonPos});
    const Analysis a = analyze(inst.net, inst.prop.box, asserts);
    if (!a.is_feasible()) continue;
    Relaxation relax = build(inst.net, inst.prop, asserts, a.bounds());
    std::vector<VarId> all(layout.num_network_vars());
    std::iota(all.begin(), all.end(), 0);
    Relaxation copy = relax;
    const std::vector<Interval> tight = tighten(copy, all);
    for (int s = 0; s < 1000; ++s) {
      const std::vector<double> x = sample_box(inst.prop.box, rng);
      const std::vector<double> v = evaluate_neurons(inst.net, layout, x);
      if (!satisfies(asserts, v) || !validate_witness(inst.net, inst.prop, x, 0.0)) continue;
      ++checked;
      ASSERT_TRUE(point_satisfies(relax, v, 1e-7));
      for (VarId id : all) ASSERT_TRUE(tight[id].contains(v[id], 1e-7)) << "var " << id;
    }
  }
  EXPECT_GT(checked, 5000u);
}

// The LP maximum of the output lies between the sampled maximum (a lower
// bound on the exact one) and the plain interval bound.
TEST(Lp, OutputBoundBetweenSampledAndInterval) {
  std::mt19937_64 rng(42);
  for (int n = 0; n < 30; ++n) {
    Instance inst = random_instance(rng, n % 2 == 0);
    inst.prop.negated[0].rhs = -100.0;
    const NeuronLayout layout(inst.net);
    const VarId y = layout.output(0);
    Relaxation relax = build(inst.net, inst.prop, {}, analyze(inst.net, inst.prop.box).bounds());
    const std::vector<VarId> vars{y};
    const Interval lp = tighten(relax, vars)[0];
    const Interval box = (*interval_propagate(inst.net, inst.prop.box))[y];
    double sampled = -kInf;
    for (int s = 0; s < 2000; ++s) sampled = std::max(sampled, evaluate(inst.net, sample_box(inst.prop.box, rng))[0]);
    EXPECT_LE(lp.hi, box.hi + 1e-7);
    EXPECT_GE(lp.hi, sampled - 1e-7);
  }
}

// An infeasible relaxation means no counterexample exists in that branch.
TEST(Lp, InfeasibleImpliesOracleUnsat) {
  std::mt19937_64 rng(43);
  std::size_t infeasible = 0;
  for (int n = 0; n < 60; ++n) {
    const Instance inst = random_instance(rng, n % 2 == 1);
    const NeuronLayout layout(inst.net);
    for (const ReluNeuron& r : layout.relus()) {
      for (Sign s : {Sign::NonNeg, Sign::NonPos}) {
        const AssertionSet asserts{{r.pre, s}};
        const Analysis a = analyze(inst.net, inst.prop.box, asserts);
        if (!a.is_feasible()) continue;
        Relaxation relax = build(inst.net, inst.prop, asserts, a.bounds());
        if (feasible(relax)) continue;
        ++infeasible;
        ASSERT_FALSE(oracle(inst.net, inst.prop, asserts).is_sat());
      }
    }
  }
  EXPECT_GT(infeasible, 0u);
}
