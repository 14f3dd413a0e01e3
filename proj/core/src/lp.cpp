#include "incremark/lp.hpp"

#include <algorithm>
#include <cmath>

namespace incremark {

namespace {

// LP optima are widened by this relative amount before being used as bounds.
constexpr double kLpSlack = 1e-9;

double widen_down(double v) { return v - kLpSlack * (1.0 + std::abs(v)); }
double widen_up(double v) { return v + kLpSlack * (1.0 + std::abs(v)); }

}  // namespace

LpStatus Relaxation::solve() {
  if (solved_) return status_;
  solved_ = true;
  if (empty_) return status_ = LpStatus::Infeasible;
  tableau_.reset_nonbasic_to_lower();
  switch (tableau_.make_feasible(iteration_cap())) {
    case FeasibilityStatus::Feasible:
      return status_ = LpStatus::Feasible;
    case FeasibilityStatus::Infeasible:
      return status_ = LpStatus::Infeasible;
    case FeasibilityStatus::IterationLimit:
      break;
  }
  return status_ = LpStatus::Unknown;
}

std::vector<double> Relaxation::point() const {
  const std::vector<double>& v = tableau_.values();
  return {v.begin(), v.begin() + static_cast<std::ptrdiff_t>(layout_.num_network_vars())};
}

Relaxation build_relaxation(const Network& net, const SafetyProperty& prop, std::span<const Interval> intervals,
                            std::span<const ReluEncoding> encodings) {
  NeuronLayout layout(net);
  const std::size_t n = layout.num_network_vars();
  if (intervals.size() != n) throw DimensionError("interval count does not match network variables");
  if (encodings.size() != layout.relus().size()) throw DimensionError("encoding count does not match ReLU count");

  std::vector<Interval> iv(intervals.begin(), intervals.end());
  std::vector<ReluEncoding> enc(encodings.begin(), encodings.end());
  for (std::size_t i = 0; i < enc.size(); ++i) {
    const ReluNeuron& rn = layout.relus()[i];
    Interval& pre = iv[rn.pre];
    Interval& post = iv[rn.post];
    post.lo = std::max(post.lo, 0.0);
    if (enc[i] == ReluEncoding::Triangle) {
      if (pre.lo >= 0.0) enc[i] = ReluEncoding::Active;
      else if (pre.hi <= 0.0) enc[i] = ReluEncoding::Inactive;
    }
    if (enc[i] == ReluEncoding::Active) {
      pre.lo = std::max(pre.lo, 0.0);
    } else if (enc[i] == ReluEncoding::Inactive) {
      pre.hi = std::min(pre.hi, 0.0);
      post.hi = std::min(post.hi, 0.0);
    }
  }

  bool empty = false;
  for (Interval& v : iv) {
    if (v.lo > v.hi + kEpsBound) empty = true;
    else if (v.lo > v.hi) v.hi = v.lo;
  }

  std::size_t rows = prop.negated.size();
  for (std::size_t l = 0; l < layout.num_layers(); ++l) rows += layout.width(l);
  for (ReluEncoding e : enc) rows += e == ReluEncoding::Triangle ? 2 : e == ReluEncoding::Active ? 1 : 0;

  const std::size_t total = n + rows;
  Tableau t(total);
  for (VarId v = 0; v < n; ++v) t.set_bounds(v, iv[v]);

  VarId slack = n;
  auto add = [&](std::vector<double> coeffs, Interval range) {
    t.set_bounds(slack, range);
    t.add_row(slack, std::move(coeffs));
    ++slack;
  };

  for (std::size_t l = 0; l < layout.num_layers(); ++l) {
    const Layer& layer = net.layer(l);
    for (std::size_t r = 0; r < layer.rows; ++r) {
      std::vector<double> coeffs(total, 0.0);
      for (std::size_t c = 0; c < layer.cols; ++c) coeffs[layout.layer_input(l, c)] += layer.weight(r, c);
      coeffs[layout.affine(l, r)] -= 1.0;
      add(std::move(coeffs), {-layer.bias[r], -layer.bias[r]});
    }
  }
  for (std::size_t i = 0; i < enc.size(); ++i) {
    const ReluNeuron& rn = layout.relus()[i];
    if (enc[i] == ReluEncoding::Inactive) continue;
    std::vector<double> coeffs(total, 0.0);
    coeffs[rn.post] = 1.0;
    coeffs[rn.pre] = -1.0;
    if (enc[i] == ReluEncoding::Active) {
      add(std::move(coeffs), {0.0, 0.0});
      continue;
    }
    add(coeffs, {0.0, kInf});
    const Interval& pre = iv[rn.pre];
    const double slope = pre.hi / (pre.hi - pre.lo);
    coeffs[rn.pre] = -slope;
    add(std::move(coeffs), {-kInf, -slope * pre.lo});
  }
  for (const OutputConstraint& c : prop.negated) {
    std::vector<double> coeffs(total, 0.0);
    for (std::size_t j = 0; j < c.coeffs.size(); ++j) coeffs[layout.output(j)] = c.coeffs[j];
    add(std::move(coeffs), {c.rhs, kInf});
  }
  return Relaxation(std::move(layout), std::move(t), empty);
}

Relaxation build(const Network& net, const SafetyProperty& prop, const AssertionSet& asserts,
                 const Bounds& bounds) {
  const NeuronLayout& layout = bounds.layout();
  std::vector<Interval> iv = bounds.intervals();
  for (const Assertion& a : asserts) {
    if (a.sign == Sign::NonNeg) iv[a.neuron].lo = std::max(iv[a.neuron].lo, 0.0);
    else iv[a.neuron].hi = std::min(iv[a.neuron].hi, 0.0);
  }
  std::vector<ReluEncoding> enc(layout.relus().size(), ReluEncoding::Triangle);
  return build_relaxation(net, prop, iv, enc);
}

bool feasible(Relaxation& relax) { return relax.solve() != LpStatus::Infeasible; }

std::vector<Interval> tighten(Relaxation& relax, std::span<const LinearExpr> objectives,
                              std::span<const Interval> prior) {
  if (objectives.size() != prior.size()) throw DimensionError("objective and prior counts differ");
  std::vector<Interval> out(prior.begin(), prior.end());
  if (relax.solve() != LpStatus::Feasible) return out;

  const Tableau& base = relax.tableau_;
  std::vector<double> cost(base.num_vars(), 0.0);
  for (std::size_t k = 0; k < objectives.size(); ++k) {
    const LinearExpr& e = objectives[k];
    for (double sign : {1.0, -1.0}) {
      std::fill(cost.begin(), cost.end(), 0.0);
      for (const auto& [v, a] : e.terms) cost[v] += sign * a;
      Tableau t = base;
      if (t.minimize(cost, relax.iteration_cap()) != OptimizeStatus::Optimal) continue;
      double opt = e.constant;
      for (const auto& [v, a] : e.terms) opt += a * t.value(v);
      if (sign > 0) out[k].lo = std::max(out[k].lo, widen_down(opt));
      else out[k].hi = std::min(out[k].hi, widen_up(opt));
    }
    if (out[k].lo > out[k].hi) out[k].lo = out[k].hi = 0.5 * (out[k].lo + out[k].hi);
  }
  return out;
}

std::vector<Interval> tighten(Relaxation& relax, std::span<const VarId> vars) {
  std::vector<LinearExpr> objectives;
  std::vector<Interval> prior;
  objectives.reserve(vars.size());
  for (VarId v : vars) {
    objectives.push_back({{{v, 1.0}}, 0.0});
    prior.push_back(relax.tableau().bounds(v));
  }
  return tighten(relax, objectives, prior);
}

Analysis tighten_inputs_then_repropagate(const Network& net, const SafetyProperty& prop,
                                         const AssertionSet& asserts) {
  Analysis first = analyze(net, prop.box, asserts);
  if (!first.is_feasible()) return first;
  Relaxation relax = build(net, prop, asserts, first.bounds());
  if (relax.solve() == LpStatus::Infeasible) return Analysis::infeasible(kNoVar);

  std::vector<VarId> inputs(net.input_size());
  for (std::size_t i = 0; i < inputs.size(); ++i) inputs[i] = i;
  const std::vector<Interval> box = tighten(relax, inputs);
  return analyze(net, box, asserts, &first.bounds());
}

}  // namespace incremark
