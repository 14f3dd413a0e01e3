#include "incremark/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <spdlog/spdlog.h>

namespace incremark {

namespace {

// Coefficients this small after elimination are treated as exact zeros.
constexpr double kDropTolerance = 1e-13;
// Reduced costs below this magnitude count as optimal.
constexpr double kEpsCost = 1e-9;
// A non-basic variable closer than this to a bound has no room to move.
constexpr double kEpsRoom = 1e-12;

double clamp_to(double x, Interval iv) { return std::min(std::max(x, iv.lo), iv.hi); }

}  // namespace

Tableau::Tableau(std::size_t num_vars)
    : lower_(num_vars, -kInf), upper_(num_vars, kInf), value_(num_vars, 0.0), row_of_(num_vars, kNoVar) {}

void Tableau::add_row(VarId basic, std::vector<double> coeffs) {
  if (coeffs.size() != num_vars()) throw DimensionError("row width does not match tableau");
  if (is_basic(basic)) throw Error("variable is already basic");
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    const VarId b = rows_[r].basic;
    const double c = coeffs[b];
    if (c == 0.0) continue;
    coeffs[b] = 0.0;
    const std::vector<double>& sub = rows_[r].coeffs;
    for (std::size_t j = 0; j < coeffs.size(); ++j) coeffs[j] += c * sub[j];
  }
  coeffs[basic] = 0.0;
  for (double& c : coeffs) {
    if (std::abs(c) < kDropTolerance) c = 0.0;
  }
  row_of_[basic] = rows_.size();
  rows_.push_back({basic, std::move(coeffs)});
  recompute_basic_values();
}

std::vector<VarId> Tableau::basis() const {
  std::vector<VarId> b;
  b.reserve(rows_.size());
  for (const TableauRow& r : rows_) b.push_back(r.basic);
  std::sort(b.begin(), b.end());
  return b;
}

void Tableau::set_bounds(VarId v, Interval iv) {
  lower_[v] = iv.lo;
  upper_[v] = iv.hi;
}

void Tableau::set_value(VarId v, double x) {
  if (is_basic(v)) throw Error("cannot assign a basic variable directly");
  value_[v] = x;
  recompute_basic_values();
}

void Tableau::clamp_nonbasic() {
  for (VarId v = 0; v < num_vars(); ++v) {
    if (!is_basic(v)) value_[v] = clamp_to(value_[v], bounds(v));
  }
  recompute_basic_values();
}

void Tableau::reset_nonbasic_to_lower() {
  for (VarId v = 0; v < num_vars(); ++v) {
    if (is_basic(v)) continue;
    value_[v] = std::isfinite(lower_[v]) ? lower_[v] : std::isfinite(upper_[v]) ? upper_[v] : 0.0;
  }
  recompute_basic_values();
}

void Tableau::recompute_basic_values() {
  for (const TableauRow& row : rows_) {
    double s = 0.0;
    for (std::size_t j = 0; j < row.coeffs.size(); ++j) {
      if (row.coeffs[j] != 0.0) s += row.coeffs[j] * value_[j];
    }
    value_[row.basic] = s;
  }
}

void Tableau::pivot(VarId leaving, VarId entering) {
  if (!is_basic(leaving)) throw PivotError("leaving variable is not basic");
  if (is_basic(entering)) throw PivotError("entering variable is already basic");
  const std::size_t r = row_of_[leaving];
  TableauRow& prow = rows_[r];
  const double a = prow.coeffs[entering];
  if (std::abs(a) <= kEpsPivot) throw PivotError("pivot coefficient below tolerance");

  // x_e = (1/a) x_l - sum_{j != e} (a_j / a) x_j
  std::vector<double> inv(num_vars(), 0.0);
  for (std::size_t j = 0; j < inv.size(); ++j) {
    if (j != entering && prow.coeffs[j] != 0.0) inv[j] = -prow.coeffs[j] / a;
  }
  inv[leaving] = 1.0 / a;

  for (std::size_t k = 0; k < rows_.size(); ++k) {
    if (k == r) continue;
    std::vector<double>& c = rows_[k].coeffs;
    const double f = c[entering];
    if (f == 0.0) continue;
    c[entering] = 0.0;
    for (std::size_t j = 0; j < c.size(); ++j) {
      if (inv[j] == 0.0) continue;
      c[j] += f * inv[j];
      if (std::abs(c[j]) < kDropTolerance) c[j] = 0.0;
    }
  }
  prow.basic = entering;
  prow.coeffs = std::move(inv);
  row_of_[leaving] = kNoVar;
  row_of_[entering] = r;
}

void Tableau::pivot_and_update(VarId leaving, VarId entering, double target) {
  const double a = rows_[row_of_[leaving]].coeffs[entering];
  if (std::abs(a) <= kEpsPivot) throw PivotError("pivot coefficient below tolerance");
  const double theta = (target - value_[leaving]) / a;
  value_[entering] += theta;
  pivot(leaving, entering);
  value_[leaving] = target;
  recompute_basic_values();
}

Interval Tableau::row_range(std::size_t r) const {
  const std::vector<double>& c = rows_[r].coeffs;
  Interval range{0.0, 0.0};
  for (std::size_t j = 0; j < c.size(); ++j) {
    const double a = c[j];
    if (a > 0.0) {
      range.lo += a * lower_[j];
      range.hi += a * upper_[j];
    } else if (a < 0.0) {
      range.lo += a * upper_[j];
      range.hi += a * lower_[j];
    }
  }
  return range;
}

bool Tableau::row_infeasible(std::size_t r) const {
  const Interval range = row_range(r);
  const VarId b = rows_[r].basic;
  return lower_[b] > range.hi + kEpsBound || upper_[b] < range.lo - kEpsBound;
}

std::optional<VarId> Tableau::first_infeasible_row() const {
  for (VarId b : basis()) {
    if (row_infeasible(row_of_[b])) return b;
  }
  return std::nullopt;
}

double Tableau::max_row_residual() const {
  double worst = 0.0;
  for (const TableauRow& row : rows_) {
    double s = 0.0;
    for (std::size_t j = 0; j < row.coeffs.size(); ++j) s += row.coeffs[j] * value_[j];
    worst = std::max(worst, std::abs(s - value_[row.basic]));
  }
  return worst;
}

bool Tableau::bounds_satisfied(double eps) const {
  for (VarId v = 0; v < num_vars(); ++v) {
    if (value_[v] < lower_[v] - eps || value_[v] > upper_[v] + eps) return false;
  }
  return true;
}

std::optional<VarId> Tableau::violating_basic(PivotRule rule) const {
  std::optional<VarId> best;
  double worst = kEpsBound;
  for (VarId b : basis()) {
    const double gap = std::max(lower_[b] - value_[b], value_[b] - upper_[b]);
    if (gap <= kEpsBound) continue;
    if (rule == PivotRule::Bland) return b;
    if (gap > worst) {
      worst = gap;
      best = b;
    }
  }
  return best;
}

std::optional<VarId> Tableau::entering_for(VarId basic, bool increase, PivotRule rule) const {
  const std::vector<double>& c = rows_[row_of_[basic]].coeffs;
  std::optional<VarId> best;
  bool best_deferred = true;
  double best_mag = 0.0;
  for (VarId j = 0; j < c.size(); ++j) {
    const double a = c[j];
    if (std::abs(a) <= kEpsPivot) continue;
    const bool can_rise = value_[j] < upper_[j] - kEpsRoom;
    const bool can_fall = value_[j] > lower_[j] + kEpsRoom;
    const bool up = (a > 0.0) == increase;
    if (!(up ? can_rise : can_fall)) continue;
    if (rule == PivotRule::Bland) return j;
    const bool deferred = j < deferred_.size() && deferred_[j];
    if (!best || (best_deferred && !deferred) || (deferred == best_deferred && std::abs(a) > best_mag)) {
      best_mag = std::abs(a);
      best_deferred = deferred;
      best = j;
    }
  }
  return best;
}

Tableau::FixStep Tableau::fix_bound_step(VarId* conflict, PivotRule rule) {
  const std::optional<VarId> v = violating_basic(rule);
  if (!v) return FixStep::Done;
  const bool increase = value_[*v] < lower_[*v];
  const std::optional<VarId> e = entering_for(*v, increase, rule);
  if (!e) {
    if (conflict) *conflict = *v;
    return FixStep::Conflict;
  }
  pivot_and_update(*v, *e, increase ? lower_[*v] : upper_[*v]);
  return FixStep::Progress;
}

FeasibilityStatus Tableau::make_feasible(std::size_t max_iterations, VarId* conflict) {
  clamp_nonbasic();
  for (std::size_t it = 0; it < max_iterations; ++it) {
    switch (fix_bound_step(conflict)) {
      case FixStep::Done:
        return FeasibilityStatus::Feasible;
      case FixStep::Conflict:
        return FeasibilityStatus::Infeasible;
      case FixStep::Progress:
        break;
    }
  }
  return violating_basic() ? FeasibilityStatus::IterationLimit : FeasibilityStatus::Feasible;
}

OptimizeStatus Tableau::minimize(std::span<const double> objective, std::size_t max_iterations) {
  if (objective.size() != num_vars()) throw DimensionError("objective width does not match tableau");
  for (std::size_t it = 0; it < max_iterations; ++it) {
    // Reduced costs over non-basic variables.
    std::vector<double> d(objective.begin(), objective.end());
    for (const TableauRow& row : rows_) {
      const double cb = objective[row.basic];
      d[row.basic] = 0.0;
      if (cb == 0.0) continue;
      for (std::size_t j = 0; j < row.coeffs.size(); ++j) d[j] += cb * row.coeffs[j];
    }

    VarId entering = kNoVar;
    double dir = 0.0;
    for (VarId j = 0; j < num_vars(); ++j) {
      if (is_basic(j)) continue;
      if (d[j] < -kEpsCost && value_[j] < upper_[j] - kEpsRoom) {
        entering = j;
        dir = 1.0;
        break;
      }
      if (d[j] > kEpsCost && value_[j] > lower_[j] + kEpsRoom) {
        entering = j;
        dir = -1.0;
        break;
      }
    }
    if (entering == kNoVar) return OptimizeStatus::Optimal;

    double step = dir > 0 ? upper_[entering] - value_[entering] : value_[entering] - lower_[entering];
    VarId leaving = entering;
    for (const TableauRow& row : rows_) {
      const double rate = row.coeffs[entering] * dir;
      if (std::abs(rate) <= kEpsPivot) continue;
      const VarId b = row.basic;
      const double room = rate > 0 ? upper_[b] - value_[b] : value_[b] - lower_[b];
      const double t = std::max(room, 0.0) / std::abs(rate);
      if (t < step - kEpsRoom || (t <= step + kEpsRoom && b < leaving)) {
        step = t;
        leaving = b;
      }
    }
    if (std::isinf(step)) return OptimizeStatus::Unbounded;

    value_[entering] += dir * step;
    if (leaving == entering) {
      value_[entering] = dir > 0 ? upper_[entering] : lower_[entering];
      recompute_basic_values();
      continue;
    }
    const double rate = rows_[row_of_[leaving]].coeffs[entering] * dir;
    pivot(leaving, entering);
    value_[leaving] = rate > 0 ? upper_[leaving] : lower_[leaving];
    recompute_basic_values();
  }
  return OptimizeStatus::IterationLimit;
}

Tableau Tableau::with_basis(std::span<const VarId> target) const {
  if (target.size() != rows_.size()) {
    throw SingularBasis("target basis size " + std::to_string(target.size()) + " differs from row count " +
                        std::to_string(rows_.size()));
  }
  std::vector<bool> wanted(num_vars(), false);
  for (VarId v : target) {
    if (v >= num_vars()) throw SingularBasis("target variable out of range");
    wanted[v] = true;
  }
  Tableau t = *this;
  std::vector<VarId> order(target.begin(), target.end());
  std::sort(order.begin(), order.end());
  for (VarId v : order) {
    if (t.is_basic(v)) continue;
    std::size_t best = kNoVar;
    double best_mag = kEpsPivot;
    for (std::size_t r = 0; r < t.rows_.size(); ++r) {
      if (wanted[t.rows_[r].basic]) continue;
      const double mag = std::abs(t.rows_[r].coeffs[v]);
      if (mag > best_mag) {
        best_mag = mag;
        best = r;
      }
    }
    if (best == kNoVar) throw SingularBasis("variable " + std::to_string(v) + " cannot be made basic");
    t.pivot(t.rows_[best].basic, v);
  }
  t.recompute_basic_values();
  return t;
}

// ---------------------------------------------------------------------------

Configuration Configuration::initialize(const Network& net, const SafetyProperty& prop, const Bounds& bounds) {
  prop.validate(net);
  Configuration cfg;
  cfg.layout_ = NeuronLayout(net);
  const NeuronLayout& L = cfg.layout_;
  const std::size_t n_net = L.num_network_vars();
  const std::size_t n_relu = L.relus().size();
  std::size_t n_affine = 0;
  for (std::size_t l = 0; l < L.num_layers(); ++l) n_affine += L.width(l);

  cfg.folded_.assign(L.output_size(), Interval{});
  for (const OutputConstraint& c : prop.negated) {
    std::size_t nonzero = 0;
    std::size_t at = 0;
    for (std::size_t j = 0; j < c.coeffs.size(); ++j) {
      if (c.coeffs[j] != 0.0) {
        ++nonzero;
        at = j;
      }
    }
    if (nonzero == 1) {
      const double bound = c.rhs / c.coeffs[at];
      Interval& f = cfg.folded_[at];
      if (c.coeffs[at] > 0.0) {
        f.lo = std::max(f.lo, bound);
      } else {
        f.hi = std::min(f.hi, bound);
      }
    } else {
      cfg.prop_rows_.push_back(c);
    }
  }

  const VarId relu_slack_base = n_net;
  const VarId affine_const_base = relu_slack_base + n_relu;
  const VarId relu_const_base = affine_const_base + n_affine;
  cfg.prop_base_ = relu_const_base + n_relu;
  const std::size_t total = cfg.prop_base_ + cfg.prop_rows_.size();

  cfg.kinds_.assign(total, VarKind::Input);
  for (std::size_t l = 0; l < L.num_layers(); ++l) {
    for (std::size_t j = 0; j < L.width(l); ++j) {
      cfg.kinds_[L.affine(l, j)] = L.has_relu(l) ? VarKind::Pre : VarKind::Output;
      if (L.has_relu(l)) cfg.kinds_[L.activated(l, j)] = L.is_output(L.activated(l, j)) ? VarKind::Output : VarKind::Post;
    }
  }
  for (VarId v = n_net; v < total; ++v) {
    cfg.kinds_[v] = v < affine_const_base ? VarKind::ReluSlack
                    : v < cfg.prop_base_  ? VarKind::ConstSlack
                                          : VarKind::PropSlack;
  }
  cfg.fixed_value_.assign(total, 0.0);
  cfg.tableau_ = Tableau(total);

  VarId k = affine_const_base;
  for (std::size_t l = 0; l < L.num_layers(); ++l) {
    const Layer& layer = net.layer(l);
    for (std::size_t r = 0; r < layer.rows; ++r, ++k) {
      std::vector<double> coeffs(total, 0.0);
      for (std::size_t c = 0; c < layer.cols; ++c) coeffs[L.layer_input(l, c)] = layer.weight(r, c);
      coeffs[k] = -1.0;
      cfg.fixed_value_[k] = -layer.bias[r] + 0.0;  // no negative zero
      cfg.tableau_.add_row(L.affine(l, r), std::move(coeffs));
    }
  }
  for (std::size_t i = 0; i < n_relu; ++i) {
    const ReluNeuron& rn = L.relus()[i];
    const VarId slack = relu_slack_base + i;
    std::vector<double> coeffs(total, 0.0);
    coeffs[rn.post] = 1.0;
    coeffs[rn.pre] = -1.0;
    coeffs[relu_const_base + i] = -1.0;
    cfg.tableau_.add_row(slack, std::move(coeffs));
    cfg.relus_.push_back({rn.pre, rn.post, slack});
  }
  for (std::size_t p = 0; p < cfg.prop_rows_.size(); ++p) {
    std::vector<double> coeffs(total, 0.0);
    for (std::size_t j = 0; j < L.output_size(); ++j) coeffs[L.output(j)] = cfg.prop_rows_[p].coeffs[j];
    cfg.tableau_.add_row(cfg.prop_base_ + p, std::move(coeffs));
  }

  std::vector<bool> deferred(total, false);
  for (std::size_t i = 0; i < L.input_size(); ++i) deferred[L.input(i)] = true;
  cfg.tableau_.set_deferred(std::move(deferred));
  cfg.apply_bounds(bounds);
  cfg.tableau_.reset_nonbasic_to_lower();
  return cfg;
}

void Configuration::apply_bounds(const Bounds& bounds) {
  const std::size_t n_net = layout_.num_network_vars();
  for (VarId v = 0; v < n_net; ++v) {
    Interval iv = bounds[v];
    if (layout_.is_output(v)) {
      const Interval& f = folded_[v - layout_.output(0)];
      iv.lo = std::max(iv.lo, f.lo);
      iv.hi = std::min(iv.hi, f.hi);
    }
    tableau_.set_bounds(v, iv);
  }
  for (const ReluPair& p : relus_) {
    tableau_.set_bounds(p.slack, {0.0, std::max(0.0, -bounds[p.pre].lo)});
  }
  for (VarId v = n_net; v < num_vars(); ++v) {
    if (kinds_[v] == VarKind::ConstSlack) {
      tableau_.set_bounds(v, {fixed_value_[v], fixed_value_[v]});
    } else if (kinds_[v] == VarKind::PropSlack) {
      tableau_.set_bounds(v, {prop_rows_[v - prop_base_].rhs, kInf});
    }
  }
  tableau_.clamp_nonbasic();
}

void Configuration::set_tableau(Tableau t) {
  for (VarId v = 0; v < num_vars(); ++v) t.set_bounds(v, tableau_.bounds(v));
  tableau_ = std::move(t);
  tableau_.clamp_nonbasic();
}

LinearExpr Configuration::definition(VarId v) const {
  LinearExpr e;
  switch (kinds_[v]) {
    case VarKind::ReluSlack: {
      const ReluPair& p = relus_[v - layout_.num_network_vars()];
      e.terms = {{p.post, 1.0}, {p.pre, -1.0}};
      break;
    }
    case VarKind::ConstSlack:
      e.constant = fixed_value_[v];
      break;
    case VarKind::PropSlack: {
      const OutputConstraint& c = prop_rows_[v - prop_base_];
      for (std::size_t j = 0; j < c.coeffs.size(); ++j) {
        if (c.coeffs[j] != 0.0) e.terms.emplace_back(layout_.output(j), c.coeffs[j]);
      }
      break;
    }
    default:
      e.terms = {{v, 1.0}};
  }
  return e;
}

std::vector<double> Configuration::input_assignment() const {
  std::vector<double> x(layout_.input_size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = clamp_to(tableau_.value(i), tableau_.bounds(i));
  return x;
}

std::string Configuration::name(VarId v) const { return neuron_name(layout_, v); }

std::string Configuration::dump() const {
  std::string out;
  char buf[128];
  const std::vector<VarId> basis = tableau_.basis();
  out += "basis:";
  for (VarId b : basis) out += ' ' + name(b);
  out += '\n';
  for (VarId b : basis) {
    const TableauRow& row = tableau_.row(tableau_.row_index(b));
    out += name(b) + " =";
    bool first = true;
    for (VarId j = 0; j < row.coeffs.size(); ++j) {
      const double a = row.coeffs[j];
      if (a == 0.0) continue;
      std::snprintf(buf, sizeof(buf), first ? " %.6g %s" : " %+.6g %s", a, name(j).c_str());
      out += buf;
      first = false;
    }
    out += '\n';
  }
  out += "var        l          u      alpha\n";
  for (VarId v = 0; v < num_vars(); ++v) {
    std::snprintf(buf, sizeof(buf), "%-5s %10.6g %10.6g %10.6g\n", name(v).c_str(), tableau_.lower(v),
                  tableau_.upper(v), tableau_.value(v));
    out += buf;
  }
  return out;
}

RowVerdict check_unsat_rows(const Configuration& cfg) {
  if (auto v = cfg.tableau().first_infeasible_row()) return {false, *v};
  return {};
}

bool relu_satisfied(const Configuration& cfg, const ReluPair& p, double eps) {
  const Tableau& t = cfg.tableau();
  return std::abs(t.value(p.post) - std::max(0.0, t.value(p.pre))) <= eps;
}

namespace {

// Non-fixed non-basic variable with the largest coefficient in `basic`'s row.
std::optional<VarId> free_pivot_candidate(const Tableau& t, VarId basic) {
  const std::vector<double>& c = t.row(t.row_index(basic)).coeffs;
  std::optional<VarId> best;
  double best_mag = kEpsPivot;
  for (VarId j = 0; j < c.size(); ++j) {
    if (std::abs(c[j]) > best_mag && t.lower(j) < t.upper(j)) {
      best_mag = std::abs(c[j]);
      best = j;
    }
  }
  return best;
}

// Moves the pair towards post = ReLU(pre) by updating one of its variables.
void fix_relu(Tableau& t, const ReluPair& p) {
  auto relu_target = [&] { return clamp_to(std::max(0.0, t.value(p.pre)), t.bounds(p.post)); };
  auto pre_target = [&] {
    const double post = t.value(p.post);
    return clamp_to(post > 0.0 ? post : std::min(t.value(p.pre), 0.0), t.bounds(p.pre));
  };
  if (!t.is_basic(p.post)) {
    t.set_value(p.post, relu_target());
    return;
  }
  if (!t.is_basic(p.pre)) {
    t.set_value(p.pre, pre_target());
    return;
  }
  if (auto e = free_pivot_candidate(t, p.post)) {
    t.pivot(p.post, *e);
    t.set_value(p.post, relu_target());
    return;
  }
  if (auto e = free_pivot_candidate(t, p.pre)) {
    t.pivot(p.pre, *e);
    t.set_value(p.pre, pre_target());
  }
}

}  // namespace

RepairResult repair_step(Configuration& cfg, LocalSearch& search) {
  if (search.violations.size() != cfg.relus().size()) search.violations.assign(cfg.relus().size(), 0);
  if (search.steps >= search.budget) return {RepairKind::Stuck, {}, kNoVar};
  ++search.steps;

  Tableau& t = cfg.tableau();
  const PivotRule rule = search.steps <= search.greedy_steps ? PivotRule::Greedy : PivotRule::Bland;
  if (const std::optional<VarId> v = t.violating_basic(rule)) {
    const bool increase = t.value(*v) < t.lower(*v);
    const std::optional<VarId> e = t.entering_for(*v, increase, rule);
    if (!e) {
      spdlog::trace("repair: no entering candidate for {}", cfg.name(*v));
      return {RepairKind::Conflict, {}, *v};
    }
    spdlog::trace("repair: {} leaves, {} enters", cfg.name(*v), cfg.name(*e));
    t.pivot_and_update(*v, *e, increase ? t.lower(*v) : t.upper(*v));
    return {RepairKind::Progress, {}, kNoVar};
  }
  for (std::size_t i = 0; i < cfg.relus().size(); ++i) {
    const ReluPair& p = cfg.relus()[i];
    if (relu_satisfied(cfg, p)) continue;
    ++search.violations[i];
    spdlog::trace("repair: ReLU {} -> {} violated ({} vs {})", cfg.name(p.pre), cfg.name(p.post),
                  t.value(p.pre), t.value(p.post));
    fix_relu(t, p);
    return {RepairKind::Progress, {}, kNoVar};
  }
  if (!t.bounds_satisfied()) return {RepairKind::Progress, {}, kNoVar};
  return {RepairKind::Satisfied, cfg.input_assignment(), kNoVar};
}

}  // namespace incremark
