// Glue between the oracle types and the library types.
#pragma once

#include "composition.hpp"
#include "oracles.hpp"

#include <string>

inline bncbf::BarrierNode to_node(const oracle::Tree& t) {
  using bncbf::BarrierNode;
  switch (t.kind) {
    case oracle::Tree::Leaf: return BarrierNode::leaf("h" + std::to_string(t.leaf));
    case oracle::Tree::Not: return BarrierNode::negate(to_node(t.kids[0]));
    case oracle::Tree::And:
    case oracle::Tree::Or: {
      std::vector<BarrierNode> kids;
      for (const auto& c : t.kids) kids.push_back(to_node(c));
      return t.kind == oracle::Tree::And ? BarrierNode::all_of(std::move(kids)) : BarrierNode::any_of(std::move(kids));
    }
  }
  return {};
}

inline std::vector<std::string> slot_names(int n) {
  std::vector<std::string> ids;
  for (int k = 0; k < n; ++k) ids.push_back("h" + std::to_string(k));
  return ids;
}

// True when no Not sits above a non-leaf node.
inline bool nots_on_leaves(const bncbf::BarrierNode& n) {
  if (n.op == bncbf::BarrierNode::Op::Not) return n.children.front().is_leaf();
  for (const auto& c : n.children)
    if (!nots_on_leaves(c)) return false;
  return true;
}
