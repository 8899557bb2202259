#pragma once

#include "composition.hpp"
#include "constraints.hpp"
#include "dynamics.hpp"
#include "filter.hpp"

#include <json.hpp>

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace bncbf {

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationFailed : public ScenarioError {
 public:
  using ScenarioError::ScenarioError;
};

enum class Role { Leader, Follower, Obstacle };
const char* to_string(Role role);
Role role_from_string(const std::string& name);

struct AgentSpec {
  int id = 0;
  Role role = Role::Follower;
  Vec5 initial = Vec5::Zero();
  Vec5 goal = Vec5::Zero();
  ActuationMask mask;
  /// Overrides the scenario-wide body template.
  std::optional<PolytopeTemplate> tmpl;
};

struct FovSpec {
  enum class Type { Ellipsoidal, Polyhedral } type = Type::Ellipsoidal;
  double half_angle = 15.0 * std::numbers::pi / 180.0;
  FovFacets facets;
};

struct ScenarioParams {
  FovSpec fov;
  RangeBand range;
  double r_ca = 0.3;
  double r_los = 0.0;
  double mu = 100.0;
  double eps1 = 0.01;
  double eps2 = 0.01;
  double alpha_slope = 0.2;
  double yaw_limit = kDefaultYawLimit;
  double regularity_margin = kDefaultRegularityMargin;
  double input_bound = kDefaultInputBound;
  /// h_g below -violation_tolerance is logged as a violation.
  double violation_tolerance = 0.0;
  /// Extra clearance (beyond eps1) a pruned leaf's lower bound must have over
  /// the previous h_g.
  double broad_phase_margin = 0.5;
};

struct Scenario {
  std::string name = "scenario";
  double dt = 0.1;
  double duration = 20.0;
  std::uint64_t seed = 0;
  double initial_jitter = 0.0;  ///< uniform position jitter half-width, m
  bool broad_phase = false;
  bool filter_bypass = false;
  ScenarioParams params;
  PolytopeTemplate tmpl = PolytopeTemplate::tetrahedron();
  std::vector<AgentSpec> agents;
  /// Nested-array tree; empty means the composed tracking tree.
  nlohmann::json tree;
};

Scenario parse_scenario(const nlohmann::json& j);
Scenario load_scenario(const std::string& path);

/// Keeps the leader, the obstacles and the first n followers in listing order.
Scenario with_follower_count(const Scenario& s, int n);

/// Nested arrays: ["and", ...], ["or", ...], ["not", x], ["leaf", "id"] or a bare "id".
BarrierNode parse_tree(const nlohmann::json& j);
nlohmann::json tree_to_json(const BarrierNode& node);

/// h_D & h_reg & h_ca & (OR over followers of the tracking conjunction).
BarrierNode build_paper_tree(const Scenario& s);

struct LeafSpec {
  enum class Type { Collision, Los, Fov, RangeMin, RangeMax, State, Regularity };
  std::string id;
  Type type = Type::State;
  int i = -1;  ///< agent indices into Scenario::agents
  int j = -1;
  int k = -1;
  int facet = -1;  ///< zero-based polyhedral facet, -1 for the ellipsoidal cone
  LeafKind kind() const {
    return type == Type::Collision || type == Type::Los ? LeafKind::Distance : LeafKind::Smooth;
  }
};

/// Parses "ca:i:j", "los:i:j:k", "fov:i:j[:m]", "rng_min:i:j", "rng_max:i:j",
/// "state:i", "reg:i:j" against the scenario's agent ids.
LeafSpec parse_leaf(const std::string& id, const Scenario& s);

struct LeafEvaluation {
  long step = 0;
  std::vector<double> values;
  std::vector<std::optional<SmoothValue>> smooth;
  std::vector<std::optional<DistanceResult>> distance;
  std::vector<bool> pruned;
  int collision_qps = 0;
  int los_qps = 0;
  int pruned_count = 0;
  double distance_ms = 0.0;
};

struct StepRecord {
  long step = 0;
  double time = 0.0;
  std::vector<Vec5> states;
  std::vector<Vec5> nominal;
  std::vector<Vec5> safe;
  double h_g = 0.0;
  std::vector<double> leaf_values;
  int active_smooth = 0;
  int active_nonsmooth = 0;
  int collision_qps = 0;
  int los_qps = 0;
  int pruned = 0;
  double distance_ms = 0.0;
  double filter_ms = 0.0;
  double total_ms = 0.0;
  std::string filter_status;
  int filter_iterations = 0;
  bool decrease_ok = true;
};

struct Event {
  long step = 0;
  double time = 0.0;
  std::string type;  ///< violation | fault | abort
  double h_g = 0.0;
  std::string detail;
};

struct RunConfig {
  double dt = 0.1;
  double duration = 20.0;
  double eps1 = 0.01;
  double eps2 = 0.01;
  double alpha_slope = 0.2;
  std::uint64_t seed = 0;
  bool filter_bypass = false;
  bool broad_phase = false;
};

struct RunLog {
  std::string scenario;
  RunConfig config;
  std::vector<int> agent_ids;
  std::vector<std::string> roles;
  std::vector<Vec5> goals;
  std::vector<std::string> leaf_ids;
  int collision_leaves = 0;
  int los_leaves = 0;
  std::vector<StepRecord> steps;
  std::vector<Event> events;
  double final_time = 0.0;
  std::vector<Vec5> final_states;
  double final_h_g = 0.0;
  bool aborted = false;
};

struct Summary {
  long steps = 0;
  double min_h_g = 0.0;
  int violations = 0;
  int faults = 0;
  int decrease_failures = 0;
  bool aborted = false;
  int collision_leaves = 0;
  int los_leaves = 0;
  double active_mean = 0.0, active_std = 0.0;
  double collision_qps_mean = 0.0;
  double los_qps_mean = 0.0;
  double distance_qps_mean = 0.0, distance_qps_std = 0.0;
  double distance_ms_mean = 0.0, distance_ms_std = 0.0;
  double filter_ms_mean = 0.0, filter_ms_std = 0.0;
  double total_ms_mean = 0.0, total_ms_std = 0.0;
  double max_goal_error = 0.0;  ///< final position error over non-obstacle agents
  double max_filter_deviation = 0.0;  ///< max |u_safe - u_r| componentwise
};

Summary stats(const RunLog& log);
nlohmann::json to_json(const Summary& s);

struct ValidationReport {
  bool ok = true;
  std::vector<std::string> problems;
  std::vector<std::string> negative_leaves;
  double h_g = std::numeric_limits<double>::quiet_NaN();
};

/// Compiled scenario: leaf registry, bound tree and input layout.
class Simulator {
 public:
  /// Throws ScenarioError / TreeError on structural problems (unknown agents,
  /// malformed tree, distance leaves under negation).
  explicit Simulator(Scenario s, int threads = 1);

  const Scenario& scenario() const { return s_; }
  const BarrierNode& tree() const { return tree_; }
  const std::vector<LeafSpec>& leaves() const { return leaves_; }
  std::vector<std::string> leaf_ids() const;
  /// Stacked input offset of an agent, -1 for obstacles.
  int input_offset(int agent) const { return offsets_[static_cast<std::size_t>(agent)]; }
  int input_dim() const { return input_dim_; }

  std::vector<Vec5> initial_states() const;
  std::vector<Vec5> goals() const;

  /// Leaf values; with prune_above finite, distance leaves whose bounding-sphere
  /// lower bound exceeds it are not solved and report the bound.
  LeafEvaluation evaluate(const std::vector<Vec5>& states, long step,
                          double prune_above = std::numeric_limits<double>::infinity()) const;

  /// Masked and saturated nominal inputs, stacked.
  Eigen::VectorXd nominal(const std::vector<Vec5>& states) const;
  void input_bounds(Eigen::VectorXd& lower, Eigen::VectorXd& upper) const;

  FilterInputs filter_inputs(const std::vector<Vec5>& states, const LeafEvaluation& eval,
                             const ActiveSets& active, const Eigen::VectorXd& nominal) const;

  ValidationReport validate() const;
  RunLog run() const;

 private:
  Polytope body(const std::vector<Vec5>& states, int agent) const;
  PolytopeRate body_rate(const std::vector<Vec5>& states, int agent) const;
  double sphere_bound(const std::vector<Vec5>& states, const LeafSpec& leaf) const;
  void evaluate_distance(const std::vector<Vec5>& states, const LeafSpec& leaf, LeafEvaluation& out,
                         std::size_t slot) const;

  Scenario s_;
  int threads_ = 1;
  BarrierNode tree_;
  std::vector<LeafSpec> leaves_;
  std::vector<int> offsets_;
  int input_dim_ = 0;
  std::vector<PolytopeTemplate> templates_;
  std::vector<double> body_radius_;
};

/// BNCBF_THREADS, clamped to [1, hardware threads]; 1 when unset or invalid.
int threads_from_env();

}  // namespace bncbf
