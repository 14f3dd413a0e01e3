#include "incremark/abstraction.hpp"

#include <algorithm>
#include <cstdio>

namespace incremark {

Bounds::Bounds(NeuronLayout layout, std::vector<Interval> intervals, std::vector<ReluRelation> relations)
    : layout_(std::move(layout)), intervals_(std::move(intervals)), relations_(std::move(relations)) {}

ReluPhase Bounds::phase(std::size_t relu) const {
  const Interval& iv = intervals_[layout_.relus()[relu].pre];
  if (iv.lo >= 0.0) return ReluPhase::Active;
  if (iv.hi <= 0.0) return ReluPhase::Inactive;
  return ReluPhase::Uncertain;
}

std::vector<Interval> Bounds::input_box() const {
  return {intervals_.begin(), intervals_.begin() + static_cast<std::ptrdiff_t>(layout_.input_size())};
}

namespace {

ReluRelation relation_for(const Interval& pre) {
  if (pre.lo >= 0.0) return {1.0, 0.0, 1.0, 0.0};
  if (pre.hi <= 0.0) return {0.0, 0.0, 0.0, 0.0};
  const double slope = pre.hi / (pre.hi - pre.lo);
  return {0.0, 0.0, slope, -slope * pre.lo};
}

// Clamps `iv` by any assertion on `v`. Returns false if the result is empty
// beyond tolerance.
bool apply_assertions(VarId v, const AssertionSet& asserts, Interval& iv) {
  if (asserts.count({v, Sign::NonPos})) iv.hi = std::min(iv.hi, 0.0);
  if (asserts.count({v, Sign::NonNeg})) iv.lo = std::max(iv.lo, 0.0);
  if (iv.lo > iv.hi + kEpsBound) return false;
  if (iv.lo > iv.hi) iv.hi = iv.lo;
  return true;
}

class BackSubstitution {
 public:
  BackSubstitution(const Network& net, const NeuronLayout& layout, std::span<const Interval> intervals,
                   std::span<const ReluRelation> relations)
      : net_(net), layout_(layout), intervals_(intervals), relations_(relations) {
    relu_base_.resize(net.num_layers(), 0);
    std::size_t base = 0;
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      relu_base_[l] = base;
      if (layout.has_relu(l)) base += layout.width(l);
    }
  }

  // Upper (or lower) bound of the affine neuron (layer, row), expressed
  // through every earlier layer down to the input box.
  double bound(std::size_t layer, std::size_t row, bool upper) const {
    const Layer& top = net_.layer(layer);
    std::vector<double> coef(top.weights.begin() + static_cast<std::ptrdiff_t>(row * top.cols),
                             top.weights.begin() + static_cast<std::ptrdiff_t>((row + 1) * top.cols));
    double constant = top.bias[row];

    for (std::size_t m = layer; m-- > 0;) {
      // coef is over activated(m, .); rewrite over affine(m, .).
      for (std::size_t j = 0; j < coef.size(); ++j) {
        const ReluRelation& rel = relations_[relu_base_[m] + j];
        const double a = coef[j];
        if (upper == (a >= 0.0)) {
          coef[j] = a * rel.upper_slope;
          constant += a * rel.upper_const;
        } else {
          coef[j] = a * rel.lower_slope;
          constant += a * rel.lower_const;
        }
      }
      const Layer& l = net_.layer(m);
      std::vector<double> next(l.cols, 0.0);
      for (std::size_t j = 0; j < l.rows; ++j) {
        const double a = coef[j];
        if (a == 0.0) continue;
        constant += a * l.bias[j];
        for (std::size_t c = 0; c < l.cols; ++c) next[c] += a * l.weight(j, c);
      }
      coef = std::move(next);
    }

    for (std::size_t i = 0; i < coef.size(); ++i) {
      const Interval& in = intervals_[layout_.input(i)];
      constant += (upper == (coef[i] >= 0.0)) ? coef[i] * in.hi : coef[i] * in.lo;
    }
    return constant;
  }

 private:
  const Network& net_;
  const NeuronLayout& layout_;
  std::span<const Interval> intervals_;
  std::span<const ReluRelation> relations_;
  std::vector<std::size_t> relu_base_;
};

Interval interval_step(const Layer& layer, std::size_t r, const NeuronLayout& layout, std::size_t l,
                       std::span<const Interval> iv) {
  Interval s{layer.bias[r], layer.bias[r]};
  for (std::size_t c = 0; c < layer.cols; ++c) {
    const double w = layer.weight(r, c);
    const Interval& x = iv[layout.layer_input(l, c)];
    s.lo += std::min(w * x.lo, w * x.hi);
    s.hi += std::max(w * x.lo, w * x.hi);
  }
  return s;
}

void intersect(Interval& iv, const Bounds* refine, VarId v) {
  if (!refine) return;
  iv.lo = std::max(iv.lo, (*refine)[v].lo);
  iv.hi = std::min(iv.hi, (*refine)[v].hi);
}

}  // namespace

Analysis analyze(const Network& net, std::span<const Interval> box, const AssertionSet& asserts,
                 const Bounds* refine) {
  if (box.size() != net.input_size()) throw DimensionError("box arity does not match network input");
  // Back-substitution ignores assertions, so an exact relation for an
  // asserted ReLU can loosen later bounds; clamp to the assertion-free run.
  if (!asserts.empty() && !refine) {
    const Analysis base = analyze(net, box);
    if (!base.is_feasible()) return base;
    return analyze(net, box, asserts, &base.bounds());
  }
  NeuronLayout layout(net);
  std::vector<Interval> intervals(layout.num_network_vars());
  std::vector<ReluRelation> relations(layout.relus().size());

  for (std::size_t i = 0; i < box.size(); ++i) {
    Interval iv = box[i];
    intersect(iv, refine, i);
    if (iv.lo > iv.hi + kEpsBound) return Analysis::infeasible(i);
    if (iv.lo > iv.hi) iv.hi = iv.lo;
    intervals[i] = iv;
  }

  BackSubstitution backsub(net, layout, intervals, relations);
  std::size_t relu = 0;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    for (std::size_t r = 0; r < layout.width(l); ++r) {
      const VarId v = layout.affine(l, r);
      Interval iv{backsub.bound(l, r, false), backsub.bound(l, r, true)};
      // The one-layer interval step sees the clamped post intervals that the
      // symbolic relations alone do not carry.
      const Interval step = interval_step(net.layer(l), r, layout, l, intervals);
      iv.lo = std::max(iv.lo, step.lo);
      iv.hi = std::min(iv.hi, step.hi);
      intersect(iv, refine, v);
      if (layout.has_relu(l)) {
        if (!apply_assertions(v, asserts, iv)) return Analysis::infeasible(v);
      } else if (iv.lo > iv.hi + kEpsBound) {
        return Analysis::infeasible(v);
      } else if (iv.lo > iv.hi) {
        iv.hi = iv.lo;
      }
      intervals[v] = iv;
      if (!layout.has_relu(l)) continue;

      relations[relu] = relation_for(iv);
      const VarId post = layout.activated(l, r);
      Interval piv{std::max(iv.lo, 0.0), std::max(iv.hi, 0.0)};
      intersect(piv, refine, post);
      if (piv.lo > piv.hi + kEpsBound) return Analysis::infeasible(v);
      if (piv.lo > piv.hi) piv.hi = piv.lo;
      intervals[post] = piv;
      ++relu;
    }
  }
  return Analysis::feasible(Bounds(std::move(layout), std::move(intervals), std::move(relations)));
}

bool is_property_refuted(const Bounds& bounds, const SafetyProperty& prop) {
  if (prop.empty_negation()) return true;
  const NeuronLayout& layout = bounds.layout();
  for (const OutputConstraint& c : prop.negated) {
    double upper = 0.0;
    for (std::size_t j = 0; j < c.coeffs.size(); ++j) {
      const Interval& y = bounds[layout.output(j)];
      upper += std::max(c.coeffs[j] * y.lo, c.coeffs[j] * y.hi);
    }
    if (upper < c.rhs - kEpsBound) return true;
  }
  return false;
}

std::optional<std::vector<Interval>> interval_propagate(const Network& net, std::span<const Interval> box,
                                                        const AssertionSet& asserts) {
  if (box.size() != net.input_size()) throw DimensionError("box arity does not match network input");
  const NeuronLayout layout(net);
  std::vector<Interval> iv(layout.num_network_vars());
  std::copy(box.begin(), box.end(), iv.begin());
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const Layer& layer = net.layer(l);
    for (std::size_t r = 0; r < layer.rows; ++r) {
      Interval s = interval_step(layer, r, layout, l, iv);
      const VarId v = layout.affine(l, r);
      if (layout.has_relu(l)) {
        if (!apply_assertions(v, asserts, s)) return std::nullopt;
        iv[layout.activated(l, r)] = {std::max(s.lo, 0.0), std::max(s.hi, 0.0)};
      }
      iv[v] = s;
    }
  }
  return iv;
}

std::string neuron_name(const NeuronLayout& layout, VarId v) {
  if (layout.is_output(v)) {
    if (layout.output_size() == 1) return "y";
    return "y" + std::to_string(v - layout.output(0) + 1);
  }
  if (v >= layout.num_network_vars()) return "x" + std::to_string(v + 1 - layout.output_size());
  return "x" + std::to_string(v + 1);
}

std::string format_bounds(const Bounds& bounds) {
  const NeuronLayout& layout = bounds.layout();
  std::string out;
  char buf[256];
  for (VarId v = 0; v < layout.num_network_vars(); ++v) {
    std::snprintf(buf, sizeof(buf), "%s [%.6g, %.6g]", neuron_name(layout, v).c_str(), bounds[v].lo,
                  bounds[v].hi);
    out += buf;
    for (std::size_t r = 0; r < layout.relus().size(); ++r) {
      const ReluNeuron& rn = layout.relus()[r];
      if (rn.post != v) continue;
      const ReluRelation& rel = bounds.relation(r);
      const std::string pre = neuron_name(layout, rn.pre);
      std::snprintf(buf, sizeof(buf), "  lower %.6g*%s%+.6g  upper %.6g*%s%+.6g", rel.lower_slope, pre.c_str(),
                    rel.lower_const, rel.upper_slope, pre.c_str(), rel.upper_const);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace incremark
