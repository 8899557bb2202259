#include "composition.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

namespace bncbf {

BarrierNode BarrierNode::leaf(std::string id, LeafKind kind, int slot) {
  BarrierNode n;
  n.op = Op::Leaf;
  n.id = std::move(id);
  n.kind = kind;
  n.slot = slot;
  return n;
}

BarrierNode BarrierNode::all_of(std::vector<BarrierNode> children) {
  BarrierNode n;
  n.op = Op::And;
  n.children = std::move(children);
  return n;
}

BarrierNode BarrierNode::any_of(std::vector<BarrierNode> children) {
  BarrierNode n;
  n.op = Op::Or;
  n.children = std::move(children);
  return n;
}

BarrierNode BarrierNode::negate(BarrierNode child) {
  BarrierNode n;
  n.op = Op::Not;
  n.children.push_back(std::move(child));
  return n;
}

bool BarrierNode::operator==(const BarrierNode& other) const {
  return op == other.op && id == other.id && kind == other.kind && children == other.children;
}

void check_structure(const BarrierNode& node) {
  switch (node.op) {
    case BarrierNode::Op::Leaf:
      if (node.id.empty()) throw TreeError("leaf with empty id");
      if (!node.children.empty()) throw TreeError("leaf '" + node.id + "' has children");
      return;
    case BarrierNode::Op::Not:
      if (node.children.size() != 1) throw TreeError("not takes exactly one operand");
      break;
    case BarrierNode::Op::And:
    case BarrierNode::Op::Or:
      if (node.children.empty()) throw TreeError("and/or with no operands");
      break;
  }
  for (const auto& c : node.children) check_structure(c);
}

namespace {

void collect_ids(const BarrierNode& node, std::vector<std::string>& out, std::set<std::string>& seen) {
  if (node.is_leaf()) {
    if (seen.insert(node.id).second) out.push_back(node.id);
    return;
  }
  for (const auto& c : node.children) collect_ids(c, out, seen);
}

void bind_tree(BarrierNode& node, const std::unordered_map<std::string, int>& index) {
  if (node.is_leaf()) {
    const auto it = index.find(node.id);
    if (it == index.end()) throw TreeError("unknown leaf '" + node.id + "'");
    node.slot = it->second;
    return;
  }
  for (auto& c : node.children) bind_tree(c, index);
}

template <class Lookup>
double eval(const BarrierNode& node, const Lookup& lookup) {
  switch (node.op) {
    case BarrierNode::Op::Leaf:
      return lookup(node);
    case BarrierNode::Op::Not:
      return -eval(node.children.front(), lookup);
    case BarrierNode::Op::And: {
      double v = eval(node.children.front(), lookup);
      for (std::size_t k = 1; k < node.children.size(); ++k) v = std::min(v, eval(node.children[k], lookup));
      return v;
    }
    case BarrierNode::Op::Or: {
      double v = eval(node.children.front(), lookup);
      for (std::size_t k = 1; k < node.children.size(); ++k) v = std::max(v, eval(node.children[k], lookup));
      return v;
    }
  }
  throw TreeError("corrupt node");
}

BarrierNode push_not(const BarrierNode& node, bool negated) {
  switch (node.op) {
    case BarrierNode::Op::Leaf:
      return negated ? BarrierNode::negate(node) : node;
    case BarrierNode::Op::Not:
      return push_not(node.children.front(), !negated);
    case BarrierNode::Op::And:
    case BarrierNode::Op::Or: {
      std::vector<BarrierNode> kids;
      kids.reserve(node.children.size());
      for (const auto& c : node.children) kids.push_back(push_not(c, negated));
      const bool is_and = (node.op == BarrierNode::Op::And) != negated;
      return is_and ? BarrierNode::all_of(std::move(kids)) : BarrierNode::any_of(std::move(kids));
    }
  }
  throw TreeError("corrupt node");
}

void polarity(const BarrierNode& node, bool negated) {
  if (node.is_leaf()) {
    if (negated && node.kind == LeafKind::Distance) {
      throw TreeError("distance leaf '" + node.id + "' appears under negation");
    }
    return;
  }
  const bool flip = node.op == BarrierNode::Op::Not;
  for (const auto& c : node.children) polarity(c, negated != flip);
}

void gather_active(const BarrierNode& node, const std::vector<double>& values, double sign, double h_g,
                   double eps1, ActiveSets& out, std::set<std::pair<int, int>>& seen) {
  if (node.is_leaf()) {
    const double v = sign * values.at(static_cast<std::size_t>(node.slot));
    if (std::abs(v - h_g) > eps1) return;
    if (!seen.insert({node.slot, sign > 0 ? 1 : -1}).second) return;
    ActiveLeaf a{node.id, node.slot, sign, v};
    (node.kind == LeafKind::Distance ? out.nonsmooth : out.smooth).push_back(std::move(a));
    return;
  }
  const double s = node.op == BarrierNode::Op::Not ? -sign : sign;
  for (const auto& c : node.children) gather_active(c, values, s, h_g, eps1, out, seen);
}

void print(const BarrierNode& node, std::string& out) {
  switch (node.op) {
    case BarrierNode::Op::Leaf:
      out += node.id;
      return;
    case BarrierNode::Op::Not:
      out += "!";
      print(node.children.front(), out);
      return;
    case BarrierNode::Op::And:
    case BarrierNode::Op::Or: {
      const char* sep = node.op == BarrierNode::Op::And ? " & " : " | ";
      out += "(";
      for (std::size_t k = 0; k < node.children.size(); ++k) {
        if (k) out += sep;
        print(node.children[k], out);
      }
      out += ")";
      return;
    }
  }
}

}  // namespace

std::vector<std::string> leaf_ids(const BarrierNode& node) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  collect_ids(node, out, seen);
  return out;
}

void bind_slots(BarrierNode& node, const std::vector<std::string>& ids) {
  std::unordered_map<std::string, int> index;
  for (std::size_t k = 0; k < ids.size(); ++k) index.emplace(ids[k], static_cast<int>(k));
  bind_tree(node, index);
}

double evaluate(const BarrierNode& node, const std::vector<double>& values) {
  return eval(node, [&](const BarrierNode& leaf) {
    if (leaf.slot < 0 || static_cast<std::size_t>(leaf.slot) >= values.size()) {
      throw TreeError("leaf '" + leaf.id + "' is not bound to a value");
    }
    return values[static_cast<std::size_t>(leaf.slot)];
  });
}

double evaluate(const BarrierNode& node, const std::map<std::string, double>& values) {
  return eval(node, [&](const BarrierNode& leaf) {
    const auto it = values.find(leaf.id);
    if (it == values.end()) throw TreeError("no value for leaf '" + leaf.id + "'");
    return it->second;
  });
}

BarrierNode normalize(const BarrierNode& node) { return push_not(node, false); }

void check_distance_polarity(const BarrierNode& node) { polarity(node, false); }

ActiveSets active_sets(const BarrierNode& node, const std::vector<double>& values, double eps1) {
  ActiveSets out;
  out.eps1 = eps1;
  out.h_g = evaluate(node, values);
  std::set<std::pair<int, int>> seen;
  gather_active(node, values, 1.0, out.h_g, eps1, out, seen);
  return out;
}

std::string to_string(const BarrierNode& node) {
  std::string out;
  print(node, out);
  return out;
}

}  // namespace bncbf
