#include "incremark/proof_tree.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <nlohmann/json.hpp>
#include <sstream>

namespace incremark {

using nlohmann::json;

std::string to_string(NodeStatus s) {
  switch (s) {
    case NodeStatus::Internal:
      return "internal";
    case NodeStatus::Unsat:
      return "unsat";
    case NodeStatus::Sat:
      return "sat";
    case NodeStatus::Unsolved:
      return "unsolved";
  }
  return "unsolved";
}

namespace {

NodeStatus status_from(const std::string& s) {
  if (s == "internal") return NodeStatus::Internal;
  if (s == "unsat") return NodeStatus::Unsat;
  if (s == "sat") return NodeStatus::Sat;
  if (s == "unsolved") return NodeStatus::Unsolved;
  throw Error("unknown node status '" + s + "'");
}

}  // namespace

ProofTree::ProofTree(std::vector<std::size_t> dims, std::string prop_hash)
    : dims_(std::move(dims)), prop_hash_(std::move(prop_hash)) {}

NodeId ProofTree::add_root() {
  if (!nodes_.empty()) throw Error("tree already has a root");
  ProofNode r;
  r.id = 0;
  nodes_.push_back(std::move(r));
  return 0;
}

std::pair<NodeId, NodeId> ProofTree::split(NodeId leaf, VarId neuron) {
  if (!node(leaf).children.empty()) throw Error("split of a non-leaf node");
  const NodeId lo = nodes_.size();
  for (Sign s : {Sign::NonPos, Sign::NonNeg}) {
    ProofNode c;
    c.id = nodes_.size();
    c.parent = leaf;
    c.assertion = Assertion{neuron, s};
    nodes_.push_back(std::move(c));
  }
  ProofNode& p = nodes_[leaf];
  p.status = NodeStatus::Internal;
  p.children = {lo, lo + 1};
  p.basis.clear();
  p.key_row_var = kNoVar;
  p.witness.clear();
  return {lo, lo + 1};
}

const ProofNode& ProofTree::node(NodeId id) const {
  if (id >= nodes_.size()) throw Error("unknown node id " + std::to_string(id));
  return nodes_[id];
}

ProofNode& ProofTree::node(NodeId id) {
  if (id >= nodes_.size()) throw Error("unknown node id " + std::to_string(id));
  return nodes_[id];
}

std::vector<NodeId> ProofTree::leaves() const {
  std::vector<NodeId> out;
  for (const ProofNode& n : nodes_) {
    if (n.children.empty()) out.push_back(n.id);
  }
  return out;
}

std::vector<NodeId> ProofTree::leaves_with(NodeStatus s) const {
  std::vector<NodeId> out;
  for (const ProofNode& n : nodes_) {
    if (n.children.empty() && n.status == s) out.push_back(n.id);
  }
  return out;
}

std::optional<NodeId> ProofTree::sat_leaf() const {
  for (const ProofNode& n : nodes_) {
    if (n.status == NodeStatus::Sat) return n.id;
  }
  return std::nullopt;
}

void ProofTree::check_invariants() const {
  std::size_t sat = 0;
  std::size_t unsolved = 0;
  for (const ProofNode& n : nodes_) {
    if (n.id >= nodes_.size() || &nodes_[n.id] != &n) throw Error("node ids are not dense");
    if (n.id == 0) {
      if (n.parent != kNoNode || n.assertion) throw Error("root has a parent or an assertion");
    } else {
      if (n.parent >= n.id) throw Error("parent id must precede child id");
      if (!n.assertion) throw Error("non-root node without assertion");
      const std::vector<NodeId>& sib = nodes_[n.parent].children;
      if (std::find(sib.begin(), sib.end(), n.id) == sib.end()) throw Error("child missing from parent");
    }
    if (n.children.empty()) {
      if (n.status == NodeStatus::Internal) throw Error("leaf marked internal");
    } else {
      if (n.children.size() != 2) throw Error("internal node without exactly two children");
      if (n.status != NodeStatus::Internal) throw Error("internal node with leaf status");
      const auto& a = node(n.children[0]).assertion;
      const auto& b = node(n.children[1]).assertion;
      if (!a || !b || a->complement() != *b) throw Error("children assertions are not complementary");
      for (NodeId c : n.children) {
        if (node(c).parent != n.id) throw Error("child points to another parent");
      }
    }
    if (n.status == NodeStatus::Sat) ++sat;
    if (n.status == NodeStatus::Unsolved) ++unsolved;
    if (n.status == NodeStatus::Unsat && n.key_row_var != kNoVar &&
        std::find(n.basis.begin(), n.basis.end(), n.key_row_var) == n.basis.end()) {
      throw Error("key row variable is not in the stored basis");
    }
  }
  if (sat > 1) throw Error("more than one Sat leaf");
  if (verdict_ && unsolved > 0 && sat == 0) throw Error("unsolved leaves without a Sat leaf");
}

AssertionSet asserts_of(const ProofTree& tree, NodeId v) {
  AssertionSet out;
  for (NodeId cur = v; tree.node(cur).parent != kNoNode; cur = tree.node(cur).parent) {
    out.insert(*tree.node(cur).assertion);
  }
  return out;
}

std::size_t distance(const ProofTree& tree, NodeId a, NodeId b) {
  const AssertionSet sa = asserts_of(tree, a);
  const AssertionSet sb = asserts_of(tree, b);
  std::vector<Assertion> diff;
  std::set_symmetric_difference(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(diff));
  return diff.size();
}

ProofTree prune(const ProofTree& tree, const Bounds& bounds) {
  if (tree.empty()) return tree;
  const std::vector<ProofNode>& old = tree.nodes();

  auto contradicted = [&](const ProofNode& n) {
    if (!n.assertion) return false;
    const Interval& iv = bounds[n.assertion->neuron];
    return n.assertion->sign == Sign::NonNeg ? iv.hi < -kEpsBound : iv.lo > kEpsBound;
  };

  // Each surviving node is emitted under a sort key: its own id, or the id of
  // the ancestor slot it was spliced into.
  struct Emitted {
    NodeId key;
    NodeId source;
    NodeId parent_key;
    std::optional<Assertion> assertion;
  };
  std::vector<Emitted> out;
  std::function<void(NodeId, NodeId, NodeId, std::optional<Assertion>)> emit =
      [&](NodeId src, NodeId key, NodeId parent_key, std::optional<Assertion> a) {
        const ProofNode& n = old[src];
        if (n.children.size() == 2) {
          const bool drop0 = contradicted(old[n.children[0]]);
          const bool drop1 = contradicted(old[n.children[1]]);
          if (drop0 && drop1) throw Error("both branches of a split contradict the bounds");
          if (drop0 || drop1) {
            emit(n.children[drop0 ? 1 : 0], key, parent_key, a);
            return;
          }
        }
        out.push_back({key, src, parent_key, a});
        for (NodeId c : n.children) emit(c, c, key, old[c].assertion);
      };
  emit(0, 0, kNoNode, std::nullopt);

  std::sort(out.begin(), out.end(), [](const Emitted& x, const Emitted& y) { return x.key < y.key; });
  std::vector<NodeId> new_id(old.size(), kNoNode);
  for (std::size_t i = 0; i < out.size(); ++i) new_id[out[i].key] = i;

  ProofTree result(tree.dims(), tree.prop_hash());
  result.set_verdict(tree.verdict());
  bool sat_kept = false;
  for (std::size_t i = 0; i < out.size(); ++i) {
    ProofNode n = old[out[i].source];
    n.id = i;
    n.parent = out[i].parent_key == kNoNode ? kNoNode : new_id[out[i].parent_key];
    n.assertion = out[i].assertion;
    n.children.clear();
    if (n.status == NodeStatus::Sat) sat_kept = true;
    result.nodes_for_build().push_back(std::move(n));
  }
  for (std::size_t i = 1; i < out.size(); ++i) {
    ProofNode& n = result.node(i);
    result.node(n.parent).children.push_back(i);
  }
  if (tree.sat_leaf() && !sat_kept) result.set_verdict(std::nullopt);
  return result;
}

void graft(ProofTree& tree, NodeId leaf, const ProofTree& sub) {
  if (!tree.node(leaf).children.empty()) throw Error("graft target is not a leaf");
  if (sub.empty()) throw Error("graft of an empty tree");
  std::vector<ProofNode>& nodes = tree.nodes_for_build();
  std::vector<NodeId> map(sub.size(), kNoNode);
  map[0] = leaf;
  for (std::size_t i = 1; i < sub.size(); ++i) map[i] = nodes.size() + i - 1;

  ProofNode& target = nodes[leaf];
  const ProofNode& root = sub.node(0);
  target.status = root.status;
  target.basis = root.basis;
  target.key_row_var = root.key_row_var;
  target.witness = root.witness;
  for (NodeId c : root.children) target.children.push_back(map[c]);
  for (std::size_t i = 1; i < sub.size(); ++i) {
    ProofNode n = sub.node(i);
    n.id = map[i];
    n.parent = map[n.parent];
    for (NodeId& c : n.children) c = map[c];
    nodes.push_back(std::move(n));
  }
}

NodeId leaf_for_point(const ProofTree& tree, std::span<const double> values) {
  NodeId cur = tree.root();
  while (!tree.node(cur).children.empty()) {
    const ProofNode& n = tree.node(cur);
    const ProofNode& first = tree.node(n.children[0]);
    const double x = values[first.assertion->neuron];
    const bool holds = first.assertion->sign == Sign::NonPos ? x <= kEpsBound : x > kEpsBound;
    cur = holds ? n.children[0] : n.children[1];
  }
  return cur;
}

std::string property_hash(const SafetyProperty& prop) {
  const std::string text = format_property(prop);
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string serialize(const ProofTree& tree) {
  json j;
  j["version"] = 1;
  j["dims"] = tree.dims();
  j["prop_hash"] = tree.prop_hash();
  j["verdict"] = tree.verdict() ? json(*tree.verdict() == Outcome::Sat ? "sat" : "unsat") : json(nullptr);
  json nodes = json::array();
  for (const ProofNode& n : tree.nodes()) {
    json o;
    o["id"] = n.id;
    o["parent"] = n.parent == kNoNode ? json(nullptr) : json(n.parent);
    if (n.assertion) {
      o["assert"] = {{"neuron", n.assertion->neuron},
                     {"sign", n.assertion->sign == Sign::NonNeg ? "nonneg" : "nonpos"}};
    } else {
      o["assert"] = nullptr;
    }
    o["status"] = to_string(n.status);
    o["basis"] = n.basis.empty() ? json(nullptr) : json(n.basis);
    o["key_row_var"] = n.key_row_var == kNoVar ? json(nullptr) : json(n.key_row_var);
    o["witness"] = n.witness.empty() ? json(nullptr) : json(n.witness);
    nodes.push_back(std::move(o));
  }
  j["nodes"] = std::move(nodes);
  return j.dump(1) + "\n";
}

ProofTree deserialize(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("proof tree is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("version").get<int>() != 1) {
      throw Error("unsupported proof tree version " + j.at("version").dump());
    }
    ProofTree tree(j.at("dims").get<std::vector<std::size_t>>(), j.at("prop_hash").get<std::string>());
    const json& v = j.at("verdict");
    if (!v.is_null()) {
      const std::string s = v.get<std::string>();
      if (s != "sat" && s != "unsat") throw Error("unknown verdict '" + s + "'");
      tree.set_verdict(s == "sat" ? Outcome::Sat : Outcome::Unsat);
    }
    std::vector<ProofNode>& nodes = tree.nodes_for_build();
    for (const json& o : j.at("nodes")) {
      ProofNode n;
      n.id = o.at("id").get<NodeId>();
      if (n.id != nodes.size()) throw Error("node ids must be dense and ordered");
      if (!o.at("parent").is_null()) n.parent = o.at("parent").get<NodeId>();
      if (!o.at("assert").is_null()) {
        const json& a = o.at("assert");
        const std::string sign = a.at("sign").get<std::string>();
        if (sign != "nonneg" && sign != "nonpos") throw Error("unknown assertion sign '" + sign + "'");
        n.assertion = Assertion{a.at("neuron").get<VarId>(), sign == "nonneg" ? Sign::NonNeg : Sign::NonPos};
      }
      n.status = status_from(o.at("status").get<std::string>());
      if (!o.at("basis").is_null()) n.basis = o.at("basis").get<std::vector<VarId>>();
      if (!o.at("key_row_var").is_null()) n.key_row_var = o.at("key_row_var").get<VarId>();
      if (!o.at("witness").is_null()) n.witness = o.at("witness").get<std::vector<double>>();
      if (n.parent != kNoNode) {
        if (n.parent >= nodes.size()) throw Error("parent id must precede child id");
        nodes[n.parent].children.push_back(n.id);
      }
      nodes.push_back(std::move(n));
    }
    tree.check_invariants();
    return tree;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed proof tree: ") + e.what());
  }
}

void save_tree(const ProofTree& tree, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << serialize(tree);
  if (!out) throw Error("failed writing " + path.string());
}

ProofTree load_tree(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

void check_shape(const ProofTree& tree, const Network& net) {
  if (tree.dims() != net.dims()) {
    auto fmt = [](const std::vector<std::size_t>& d) {
      std::string s;
      for (std::size_t x : d) s += (s.empty() ? "" : "-") + std::to_string(x);
      return s;
    };
    throw ShapeMismatch("proof tree was recorded for shape " + fmt(tree.dims()) + ", network has shape " +
                        fmt(net.dims()));
  }
}

}  // namespace incremark
