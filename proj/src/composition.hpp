#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace bncbf {

class TreeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class LeafKind { Smooth, Distance };

/// Boolean expression over barrier leaves. And -> min, Or -> max, Not -> negation.
struct BarrierNode {
  enum class Op { Leaf, And, Or, Not };

  Op op = Op::Leaf;
  std::string id;
  LeafKind kind = LeafKind::Smooth;
  int slot = -1;  ///< index into the leaf value vector, set by bind_slots
  std::vector<BarrierNode> children;

  static BarrierNode leaf(std::string id, LeafKind kind = LeafKind::Smooth, int slot = -1);
  static BarrierNode all_of(std::vector<BarrierNode> children);
  static BarrierNode any_of(std::vector<BarrierNode> children);
  static BarrierNode negate(BarrierNode child);

  bool is_leaf() const { return op == Op::Leaf; }
  bool operator==(const BarrierNode& other) const;
};

/// Throws TreeError on empty And/Or, Not without exactly one child, or an empty leaf id.
void check_structure(const BarrierNode& node);

/// Distinct leaf ids in first-appearance order.
std::vector<std::string> leaf_ids(const BarrierNode& node);

/// Assigns each leaf the position of its id in `ids`; throws TreeError for unknown ids.
void bind_slots(BarrierNode& node, const std::vector<std::string>& ids);

double evaluate(const BarrierNode& node, const std::vector<double>& values);
double evaluate(const BarrierNode& node, const std::map<std::string, double>& values);

/// Pushes every Not down to the leaves; the value is unchanged everywhere.
BarrierNode normalize(const BarrierNode& node);

/// Throws TreeError if a distance leaf sits under an odd number of Nots.
void check_distance_polarity(const BarrierNode& node);

struct ActiveLeaf {
  std::string id;
  int slot = -1;
  double sign = 1.0;  ///< -1 under an odd number of Nots
  double value = 0.0;
};

struct ActiveSets {
  std::vector<ActiveLeaf> smooth;
  std::vector<ActiveLeaf> nonsmooth;
  double eps1 = 0.0;
  double h_g = 0.0;

  std::size_t size() const { return smooth.size() + nonsmooth.size(); }
};

/// Leaves whose signed value lies within eps1 of h_g. A leaf appearing several
/// times with the same sign is listed once.
ActiveSets active_sets(const BarrierNode& node, const std::vector<double>& values, double eps1);

std::string to_string(const BarrierNode& node);

}  // namespace bncbf
