#include "incremark/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace incremark {

Network::Network(std::vector<std::size_t> dims, std::vector<Layer> layers)
    : dims_(std::move(dims)), layers_(std::move(layers)) {
  if (dims_.size() < 2 || layers_.empty()) {
    throw DimensionError("network needs at least one affine layer");
  }
  if (layers_.size() != dims_.size() - 1) {
    throw DimensionError("layer count does not match dims");
  }
  for (std::size_t d : dims_) {
    if (d == 0) throw DimensionError("layer width must be positive");
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    if (l.rows != dims_[i + 1] || l.cols != dims_[i] || l.weights.size() != l.rows * l.cols ||
        l.bias.size() != l.rows) {
      throw DimensionError("layer " + std::to_string(i + 1) + " shape disagrees with dims");
    }
    if (l.activation == Activation::None && i + 1 != layers_.size()) {
      throw DimensionError("activation 'none' is only allowed on the final layer");
    }
    auto finite = [](double w) { return std::isfinite(w); };
    if (!std::all_of(l.weights.begin(), l.weights.end(), finite) ||
        !std::all_of(l.bias.begin(), l.bias.end(), finite)) {
      throw DimensionError("layer " + std::to_string(i + 1) + " has a non-finite parameter");
    }
  }
}

std::size_t Network::relu_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers_) {
    if (l.activation == Activation::Relu) n += l.rows;
  }
  return n;
}

NeuronLayout::NeuronLayout(const Network& net) : NeuronLayout(net.dims(), net.final_relu()) {}

NeuronLayout::NeuronLayout(std::span<const std::size_t> dims, bool final_relu)
    : dims_(dims.begin(), dims.end()) {
  const std::size_t k = dims_.size() - 1;
  VarId next = dims_.front();
  relu_layer_.assign(k, true);
  relu_layer_[k - 1] = final_relu;
  affine_base_.resize(k);
  act_base_.resize(k);
  for (std::size_t layer = 0; layer < k; ++layer) {
    const std::size_t w = dims_[layer + 1];
    affine_base_[layer] = next;
    next += w;
    if (relu_layer_[layer]) {
      act_base_[layer] = next;
      next += w;
      for (std::size_t j = 0; j < w; ++j) {
        relus_.push_back({affine_base_[layer] + j, act_base_[layer] + j, layer, j});
      }
    } else {
      act_base_[layer] = affine_base_[layer];
    }
  }
  output_base_ = act_base_[k - 1];
  total_ = next;
}

std::optional<std::size_t> NeuronLayout::relu_of_pre(VarId pre) const {
  auto it = std::lower_bound(relus_.begin(), relus_.end(), pre,
                             [](const ReluNeuron& r, VarId v) { return r.pre < v; });
  if (it == relus_.end() || it->pre != pre) return std::nullopt;
  return static_cast<std::size_t>(it - relus_.begin());
}

void SafetyProperty::validate(const Network& net) const {
  if (box.size() != net.input_size()) {
    throw DimensionError("property box has " + std::to_string(box.size()) +
                         " dimensions, network expects " + std::to_string(net.input_size()));
  }
  for (const Interval& iv : box) {
    if (!(iv.lo <= iv.hi)) throw Error("property box has lo > hi");
  }
  for (const OutputConstraint& c : negated) {
    if (c.coeffs.size() != net.output_size()) {
      throw DimensionError("output constraint arity does not match network outputs");
    }
  }
}

bool SafetyProperty::holds_at_output(std::span<const double> y, double eps) const {
  for (const OutputConstraint& c : negated) {
    double lhs = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) lhs += c.coeffs[j] * y[j];
    if (lhs < c.rhs - eps) return false;
  }
  return true;
}

std::string to_string(Outcome o) { return o == Outcome::Sat ? "sat" : "unsat"; }

std::vector<double> evaluate(const Network& net, std::span<const double> x) {
  if (x.size() != net.input_size()) {
    throw DimensionError("input has " + std::to_string(x.size()) + " entries, network expects " +
                         std::to_string(net.input_size()));
  }
  std::vector<double> cur(x.begin(), x.end());
  for (const Layer& l : net.layers()) {
    std::vector<double> next(l.bias);
    for (std::size_t r = 0; r < l.rows; ++r) {
      for (std::size_t c = 0; c < l.cols; ++c) next[r] += l.weight(r, c) * cur[c];
      if (l.activation == Activation::Relu) next[r] = std::max(0.0, next[r]);
    }
    cur = std::move(next);
  }
  return cur;
}

std::vector<double> evaluate_neurons(const Network& net, const NeuronLayout& layout,
                                     std::span<const double> x) {
  if (x.size() != net.input_size()) throw DimensionError("input dimension mismatch");
  std::vector<double> v(layout.num_network_vars(), 0.0);
  std::copy(x.begin(), x.end(), v.begin());
  for (std::size_t li = 0; li < net.num_layers(); ++li) {
    const Layer& l = net.layer(li);
    for (std::size_t r = 0; r < l.rows; ++r) {
      double s = l.bias[r];
      for (std::size_t c = 0; c < l.cols; ++c) s += l.weight(r, c) * v[layout.layer_input(li, c)];
      v[layout.affine(li, r)] = s;
      if (layout.has_relu(li)) v[layout.activated(li, r)] = std::max(0.0, s);
    }
  }
  return v;
}

bool validate_witness(const Network& net, const SafetyProperty& prop, std::span<const double> x,
                      double eps) {
  if (x.size() != net.input_size() || prop.box.size() != x.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !prop.box[i].contains(x[i], eps)) return false;
  }
  if (prop.empty_negation()) return false;
  const std::vector<double> y = evaluate(net, x);
  return prop.holds_at_output(y, eps);
}

std::vector<SafetyProperty> make_robustness_queries(
    const Network& net, std::span<const double> x0, double radius,
    const std::optional<std::vector<Interval>>& domain) {
  if (!(radius > 0.0)) throw Error("robustness radius must be positive");
  const std::vector<double> y = evaluate(net, x0);
  const auto best = std::max_element(y.begin(), y.end());
  if (std::count(y.begin(), y.end(), *best) > 1) {
    throw Error("classification at x0 is ambiguous (argmax tie)");
  }
  const std::size_t label = static_cast<std::size_t>(best - y.begin());

  std::vector<Interval> box(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) {
    box[i] = {x0[i] - radius, x0[i] + radius};
    if (domain) {
      box[i].lo = std::max(box[i].lo, (*domain)[i].lo);
      box[i].hi = std::min(box[i].hi, (*domain)[i].hi);
      if (box[i].lo > box[i].hi) throw Error("robustness box lies outside the input domain");
    }
  }

  std::vector<SafetyProperty> out;
  for (std::size_t j = 0; j < y.size(); ++j) {
    if (j == label) continue;
    OutputConstraint c;
    c.coeffs.assign(y.size(), 0.0);
    c.coeffs[j] = 1.0;
    c.coeffs[label] = -1.0;
    out.push_back({box, {std::move(c)}});
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

namespace {

struct Line {
  int number = 0;
  std::vector<std::string> tokens;
};

// Tokenized non-empty lines with '#' comments stripped.
std::vector<Line> tokenize(std::istream& in) {
  std::vector<Line> lines;
  std::string raw;
  int n = 0;
  while (std::getline(in, raw)) {
    ++n;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    std::istringstream ss(raw);
    Line line{n, {}};
    for (std::string tok; ss >> tok;) line.tokens.push_back(std::move(tok));
    if (!line.tokens.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

double parse_number(const std::string& tok, int line) {
  double v = 0.0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (!tok.empty() && tok.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw ParseError("expected a number, got '" + tok + "'", line);
  return v;
}

std::size_t parse_count(const std::string& tok, int line) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ParseError("expected a non-negative integer, got '" + tok + "'", line);
  }
  return v;
}

std::vector<double> parse_row(const Line& line, std::size_t first, std::size_t expected) {
  if (line.tokens.size() - first != expected) {
    throw ParseError("expected " + std::to_string(expected) + " values, got " +
                         std::to_string(line.tokens.size() - first),
                     line.number);
  }
  std::vector<double> row;
  row.reserve(expected);
  for (std::size_t i = first; i < line.tokens.size(); ++i) {
    row.push_back(parse_number(line.tokens[i], line.number));
  }
  return row;
}

std::string join(std::span<const double> values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ' ';
    s += format_double(values[i]);
  }
  return s;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  return in;
}

}  // namespace

Network parse_network(std::istream& in) {
  const std::vector<Line> lines = tokenize(in);
  std::size_t pos = 0;
  auto next = [&](const char* what) -> const Line& {
    if (pos >= lines.size()) {
      throw ParseError(std::string("unexpected end of file, expected ") + what,
                       lines.empty() ? 1 : lines.back().number + 1);
    }
    return lines[pos++];
  };

  const Line& header = next("'relunet 1' header");
  if (header.tokens.size() != 2 || header.tokens[0] != "relunet") {
    throw ParseError("expected 'relunet 1' header", header.number);
  }
  if (header.tokens[1] != "1") throw ParseError("unsupported relunet version", header.number);

  const Line& dims_line = next("'dims' line");
  if (dims_line.tokens.front() != "dims" || dims_line.tokens.size() < 3) {
    throw ParseError("expected 'dims n0 n1 ...' with at least two widths", dims_line.number);
  }
  std::vector<std::size_t> dims;
  for (std::size_t i = 1; i < dims_line.tokens.size(); ++i) {
    dims.push_back(parse_count(dims_line.tokens[i], dims_line.number));
    if (dims.back() == 0) throw ParseError("layer width must be positive", dims_line.number);
  }

  std::vector<Layer> layers;
  for (std::size_t i = 1; i < dims.size(); ++i) {
    const Line& lh = next("'layer' line");
    if (lh.tokens.size() != 3 || lh.tokens[0] != "layer") {
      throw ParseError("expected 'layer i relu|none'", lh.number);
    }
    if (parse_count(lh.tokens[1], lh.number) != i) {
      throw ParseError("layers must be numbered consecutively from 1", lh.number);
    }
    Layer layer;
    if (lh.tokens[2] == "relu") {
      layer.activation = Activation::Relu;
    } else if (lh.tokens[2] == "none") {
      if (i + 1 != dims.size()) {
        throw ParseError("activation 'none' is only allowed on the final layer", lh.number);
      }
      layer.activation = Activation::None;
    } else {
      throw ParseError("unknown activation '" + lh.tokens[2] + "'", lh.number);
    }
    layer.rows = dims[i];
    layer.cols = dims[i - 1];
    layer.weights.reserve(layer.rows * layer.cols);
    for (std::size_t r = 0; r < layer.rows; ++r) {
      std::vector<double> row = parse_row(next("weight row"), 0, layer.cols);
      layer.weights.insert(layer.weights.end(), row.begin(), row.end());
    }
    layer.bias = parse_row(next("bias row"), 0, layer.rows);
    layers.push_back(std::move(layer));
  }
  if (pos != lines.size()) throw ParseError("trailing content after last layer", lines[pos].number);

  try {
    return Network(std::move(dims), std::move(layers));
  } catch (const DimensionError& e) {
    throw ParseError(e.what(), dims_line.number);
  }
}

Network load_network(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  return parse_network(in);
}

std::string format_network(const Network& net) {
  std::string s = "relunet 1\ndims";
  for (std::size_t d : net.dims()) s += ' ' + std::to_string(d);
  s += '\n';
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    const Layer& l = net.layer(i);
    s += "layer " + std::to_string(i + 1) + (l.activation == Activation::Relu ? " relu\n" : " none\n");
    for (std::size_t r = 0; r < l.rows; ++r) {
      s += join(std::span(l.weights).subspan(r * l.cols, l.cols));
      s += '\n';
    }
    s += join(l.bias);
    s += '\n';
  }
  return s;
}

void save_network(const Network& net, const std::filesystem::path& path) {
  write_file(path, format_network(net));
}

SafetyProperty parse_property(std::istream& in) {
  const std::vector<Line> lines = tokenize(in);
  if (lines.empty()) throw ParseError("empty property file", 1);
  if (lines[0].tokens.size() != 1 || lines[0].tokens[0] != "box") {
    throw ParseError("expected 'box'", lines[0].number);
  }
  SafetyProperty prop;
  std::size_t pos = 1;
  for (; pos < lines.size() && lines[pos].tokens[0] != "ge"; ++pos) {
    std::vector<double> b = parse_row(lines[pos], 0, 2);
    if (b[0] > b[1]) throw ParseError("box interval has lo > hi", lines[pos].number);
    prop.box.push_back({b[0], b[1]});
  }
  if (prop.box.empty()) throw ParseError("box needs at least one interval", lines[0].number);
  std::size_t arity = 0;
  for (; pos < lines.size(); ++pos) {
    const Line& l = lines[pos];
    if (l.tokens[0] != "ge" || l.tokens.size() < 3) {
      throw ParseError("expected 'ge c a1 ... an'", l.number);
    }
    OutputConstraint c;
    c.rhs = parse_number(l.tokens[1], l.number);
    c.coeffs = parse_row(l, 2, l.tokens.size() - 2);
    if (arity == 0) arity = c.coeffs.size();
    if (c.coeffs.size() != arity) throw ParseError("inconsistent constraint arity", l.number);
    prop.negated.push_back(std::move(c));
  }
  return prop;
}

SafetyProperty load_property(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  return parse_property(in);
}

std::string format_property(const SafetyProperty& prop) {
  std::string s = "box\n";
  for (const Interval& iv : prop.box) s += format_double(iv.lo) + ' ' + format_double(iv.hi) + '\n';
  for (const OutputConstraint& c : prop.negated) {
    s += "ge " + format_double(c.rhs) + ' ' + join(c.coeffs) + '\n';
  }
  return s;
}

void save_property(const SafetyProperty& prop, const std::filesystem::path& path) {
  write_file(path, format_property(prop));
}

}  // namespace incremark
