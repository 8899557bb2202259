#include "scenario.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace bncbf {

using nlohmann::json;

const char* to_string(Role role) {
  switch (role) {
    case Role::Leader: return "leader";
    case Role::Follower: return "follower";
    case Role::Obstacle: return "obstacle";
  }
  return "unknown";
}

Role role_from_string(const std::string& name) {
  if (name == "leader") return Role::Leader;
  if (name == "follower") return Role::Follower;
  if (name == "obstacle") return Role::Obstacle;
  throw ScenarioError("unknown role '" + name + "'");
}

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw ScenarioError(msg);
}

Vec5 read_state(const json& j, const std::string& what) {
  require(j.is_array() && (j.size() == 3 || j.size() == 5), what + ": expected [x, y, z] or [x, y, z, theta, psi]");
  Vec5 eta = Vec5::Zero();
  for (std::size_t k = 0; k < j.size(); ++k) {
    require(j[k].is_number(), what + ": non-numeric entry");
    eta(static_cast<Eigen::Index>(k)) = j[k].get<double>();
  }
  return eta;
}

Vec3 read_vec3(const json& j, const std::string& what) {
  require(j.is_array() && j.size() == 3, what + ": expected 3 numbers");
  Vec3 v;
  for (int k = 0; k < 3; ++k) {
    require(j[static_cast<std::size_t>(k)].is_number(), what + ": non-numeric entry");
    v(k) = j[static_cast<std::size_t>(k)].get<double>();
  }
  return v;
}

template <class T>
void read_opt(const json& obj, const char* key, T& out) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ScenarioError(std::string("'") + key + "' has the wrong type");
  }
}

void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      throw ScenarioError("unknown key '" + key + "' in " + where);
    }
  }
}

FovSpec parse_fov(const json& j) {
  require(j.is_object(), "params.fov must be an object");
  reject_unknown(j, {"type", "half_angle_deg", "preset", "facets"}, "params.fov");
  FovSpec fov;
  const std::string type = j.value("type", "ellipsoidal");
  if (type == "ellipsoidal") {
    fov.type = FovSpec::Type::Ellipsoidal;
    double deg = 15.0;
    read_opt(j, "half_angle_deg", deg);
    require(deg > 0.0 && deg < 90.0, "params.fov.half_angle_deg must lie in (0, 90)");
    fov.half_angle = deg * std::numbers::pi / 180.0;
  } else if (type == "polyhedral") {
    fov.type = FovSpec::Type::Polyhedral;
    if (j.contains("facets")) {
      require(j["facets"].is_array() && !j["facets"].empty(), "params.fov.facets must be a nonempty array");
      for (const auto& f : j["facets"]) {
        require(f.is_object() && f.contains("normal"), "facet needs a normal");
        fov.facets.facets.push_back(FovCone::facet(read_vec3(f["normal"], "facet normal"), f.value("offset", 0.0)));
      }
    } else {
      const std::string preset = j.value("preset", "camera");
      require(preset == "camera", "unknown fov preset '" + preset + "'");
      fov.facets = FovFacets::camera_preset();
    }
  } else {
    throw ScenarioError("unknown fov type '" + type + "'");
  }
  return fov;
}

ScenarioParams parse_params(const json& j) {
  ScenarioParams p;
  if (j.is_null()) return p;
  require(j.is_object(), "params must be an object");
  reject_unknown(j,
                 {"fov", "r_min", "r_max", "r_ca", "r_los", "mu", "eps1", "eps2", "alpha_slope", "yaw_limit",
                  "regularity_margin", "input_bound", "violation_tolerance", "broad_phase_margin"},
                 "params");
  if (j.contains("fov")) p.fov = parse_fov(j["fov"]);
  read_opt(j, "r_min", p.range.r_min);
  read_opt(j, "r_max", p.range.r_max);
  read_opt(j, "r_ca", p.r_ca);
  read_opt(j, "r_los", p.r_los);
  read_opt(j, "mu", p.mu);
  read_opt(j, "eps1", p.eps1);
  read_opt(j, "eps2", p.eps2);
  read_opt(j, "alpha_slope", p.alpha_slope);
  read_opt(j, "yaw_limit", p.yaw_limit);
  read_opt(j, "regularity_margin", p.regularity_margin);
  read_opt(j, "input_bound", p.input_bound);
  read_opt(j, "violation_tolerance", p.violation_tolerance);
  read_opt(j, "broad_phase_margin", p.broad_phase_margin);
  return p;
}

void check_params(const Scenario& s) {
  const ScenarioParams& p = s.params;
  require(s.dt > 0.0 && std::isfinite(s.dt), "dt must be positive");
  require(s.duration >= 0.0 && std::isfinite(s.duration), "duration must be nonnegative");
  require(s.initial_jitter >= 0.0, "initial_jitter must be nonnegative");
  require(p.range.r_min > 0.0 && p.range.r_max >= p.range.r_min, "range band needs r_max >= r_min > 0");
  require(p.r_ca >= 0.0, "r_ca must be nonnegative");
  require(p.r_los >= 0.0, "r_los must be nonnegative");
  require(p.mu > 0.0, "mu must be positive");
  require(p.eps1 >= 0.0, "eps1 must be nonnegative");
  require(p.eps2 > 0.0, "eps2 must be positive");
  require(p.alpha_slope > 0.0, "alpha_slope must be positive");
  require(p.yaw_limit > 0.0 && p.yaw_limit <= std::numbers::pi, "yaw_limit must lie in (0, pi]");
  require(p.regularity_margin >= 0.0, "regularity_margin must be nonnegative");
  require(p.input_bound > 0.0, "input_bound must be positive");
  require(p.violation_tolerance >= 0.0, "violation_tolerance must be nonnegative");
  require(p.broad_phase_margin >= 0.0, "broad_phase_margin must be nonnegative");
}

PolytopeTemplate parse_template(const json& j) {
  if (j.is_null() || (j.is_string() && j.get<std::string>() == "tetrahedron")) return PolytopeTemplate::tetrahedron();
  if (j.is_object() && j.contains("box")) {
    reject_unknown(j, {"box"}, "template");
    const Vec3 size = read_vec3(j["box"], "template box");
    require(size.minCoeff() > 0.0, "template box edges must be positive");
    return PolytopeTemplate::box(size);
  }
  require(j.is_object() && j.contains("A0") && j.contains("b0"),
          "template must be \"tetrahedron\", {box} or {A0, b0}");
  const json& rows = j["A0"];
  const json& b0 = j["b0"];
  require(rows.is_array() && b0.is_array() && rows.size() == b0.size() && rows.size() >= 4,
          "template A0/b0 need the same number (>= 4) of rows");
  PolytopeTemplate t;
  t.A0.resize(static_cast<Eigen::Index>(rows.size()), 3);
  t.b0.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    t.A0.row(static_cast<Eigen::Index>(r)) = read_vec3(rows[r], "template row").transpose();
    require(b0[r].is_number(), "template b0 entry is not a number");
    t.b0(static_cast<Eigen::Index>(r)) = b0[r].get<double>();
  }
  return t;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

int parse_int(const std::string& s, const std::string& leaf) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ScenarioError("leaf '" + leaf + "': '" + s + "' is not an integer");
}

struct Roster {
  int leader = -1;
  std::vector<int> followers;
  std::vector<int> obstacles;
};

Roster roster(const Scenario& s) {
  Roster r;
  for (const auto& a : s.agents) {
    switch (a.role) {
      case Role::Leader:
        if (r.leader != -1) throw ScenarioError("more than one leader");
        r.leader = a.id;
        break;
      case Role::Follower: r.followers.push_back(a.id); break;
      case Role::Obstacle: r.obstacles.push_back(a.id); break;
    }
  }
  return r;
}

template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n);
  if (workers <= 1) {
    for (std::size_t k = 0; k < n; ++k) fn(k);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t k = w; k < n; k += workers) fn(k);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

double segment_point_distance(const Vec3& a, const Vec3& b, const Vec3& p) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (a + t * ab - p).norm();
}

void set_kinds(BarrierNode& node, const std::map<std::string, LeafKind>& kinds) {
  if (node.is_leaf()) {
    node.kind = kinds.at(node.id);
    return;
  }
  for (auto& c : node.children) set_kinds(c, kinds);
}

std::string describe_active(const ActiveSets& act) {
  std::string out;
  int n = 0;
  for (const auto* group : {&act.nonsmooth, &act.smooth}) {
    for (const auto& a : *group) {
      if (n == 5) return out + ", ...";
      if (n++) out += ", ";
      out += a.id;
    }
  }
  return out;
}

}  // namespace

Scenario parse_scenario(const json& j) {
  require(j.is_object(), "scenario must be a JSON object");
  reject_unknown(j,
                 {"name", "dt", "duration", "seed", "initial_jitter", "broad_phase", "filter_bypass", "params",
                  "template", "agents", "tree", "description"},
                 "scenario");
  Scenario s;
  read_opt(j, "name", s.name);
  read_opt(j, "dt", s.dt);
  read_opt(j, "duration", s.duration);
  read_opt(j, "seed", s.seed);
  read_opt(j, "initial_jitter", s.initial_jitter);
  read_opt(j, "broad_phase", s.broad_phase);
  read_opt(j, "filter_bypass", s.filter_bypass);
  s.params = parse_params(j.contains("params") ? j["params"] : json());
  s.tmpl = parse_template(j.contains("template") ? j["template"] : json());
  check_params(s);

  require(j.contains("agents") && j["agents"].is_array() && !j["agents"].empty(), "agents must be a nonempty array");
  std::set<int> ids;
  for (const auto& a : j["agents"]) {
    require(a.is_object(), "agent entries must be objects");
    reject_unknown(a, {"id", "role", "pose", "goal", "mask", "template"}, "agent");
    AgentSpec spec;
    require(a.contains("id") && a["id"].is_number_integer(), "agent needs an integer id");
    spec.id = a["id"].get<int>();
    require(ids.insert(spec.id).second, "duplicate agent id " + std::to_string(spec.id));
    const std::string what = "agent " + std::to_string(spec.id);
    require(a.contains("role") && a["role"].is_string(), what + ": missing role");
    spec.role = role_from_string(a["role"].get<std::string>());
    require(a.contains("pose"), what + ": missing pose");
    spec.initial = read_state(a["pose"], what + " pose");
    spec.goal = a.contains("goal") ? read_state(a["goal"], what + " goal") : spec.initial;
    if (spec.role == Role::Obstacle) {
      require(!a.contains("mask") || a["mask"] == "none", what + ": obstacles cannot be actuated");
      spec.mask = ActuationMask::none();
      spec.goal = spec.initial;
    } else {
      try {
        spec.mask = ActuationMask::from_name(a.value("mask", "full"));
      } catch (const std::invalid_argument& e) {
        throw ScenarioError(what + ": " + e.what());
      }
    }
    if (a.contains("template")) spec.tmpl = parse_template(a["template"]);
    s.agents.push_back(spec);
  }
  if (j.contains("tree") && !(j["tree"].is_string() && j["tree"].get<std::string>() == "paper")) {
    s.tree = j["tree"];
  }
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open scenario file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ScenarioError("scenario '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_scenario(j);
}

Scenario with_follower_count(const Scenario& s, int n) {
  Scenario out = s;
  out.agents.clear();
  int kept = 0;
  for (const auto& a : s.agents) {
    if (a.role == Role::Follower) {
      if (kept == n) continue;
      ++kept;
    }
    out.agents.push_back(a);
  }
  if (kept != n) {
    throw ScenarioError("scenario has " + std::to_string(kept) + " followers, " + std::to_string(n) + " requested");
  }
  out.name = s.name + "_nf" + std::to_string(n);
  return out;
}

BarrierNode parse_tree(const json& j) {
  if (j.is_string()) return BarrierNode::leaf(j.get<std::string>());
  if (!j.is_array() || j.empty() || !j[0].is_string()) {
    throw TreeError("tree node must be a leaf id or [op, ...]: " + j.dump());
  }
  const std::string op = j[0].get<std::string>();
  if (op == "leaf") {
    if (j.size() != 2 || !j[1].is_string()) throw TreeError("leaf node must be [\"leaf\", id]");
    return BarrierNode::leaf(j[1].get<std::string>());
  }
  std::vector<BarrierNode> kids;
  for (std::size_t k = 1; k < j.size(); ++k) kids.push_back(parse_tree(j[k]));
  if (op == "and") {
    if (kids.empty()) throw TreeError("and needs operands");
    return BarrierNode::all_of(std::move(kids));
  }
  if (op == "or") {
    if (kids.empty()) throw TreeError("or needs operands");
    return BarrierNode::any_of(std::move(kids));
  }
  if (op == "not") {
    if (kids.size() != 1) throw TreeError("not takes one operand");
    return BarrierNode::negate(std::move(kids.front()));
  }
  throw TreeError("unknown tree operator '" + op + "'");
}

json tree_to_json(const BarrierNode& node) {
  switch (node.op) {
    case BarrierNode::Op::Leaf: return json::array({"leaf", node.id});
    case BarrierNode::Op::And:
    case BarrierNode::Op::Or:
    case BarrierNode::Op::Not: {
      json out = json::array();
      out.push_back(node.op == BarrierNode::Op::And ? "and" : node.op == BarrierNode::Op::Or ? "or" : "not");
      for (const auto& c : node.children) out.push_back(tree_to_json(c));
      return out;
    }
  }
  return json();
}

BarrierNode build_paper_tree(const Scenario& s) {
  const Roster r = roster(s);
  if (r.leader == -1) throw ScenarioError("the tracking tree needs a leader");
  if (r.followers.empty()) throw ScenarioError("the tracking tree needs at least one follower");
  const std::string L = std::to_string(r.leader);
  auto leaf = [](std::string id, LeafKind kind = LeafKind::Smooth) { return BarrierNode::leaf(std::move(id), kind); };

  std::vector<int> movers{r.leader};
  movers.insert(movers.end(), r.followers.begin(), r.followers.end());

  std::vector<BarrierNode> top;
  for (int i : movers) top.push_back(leaf("state:" + std::to_string(i)));
  for (int i : r.followers) top.push_back(leaf("reg:" + std::to_string(i) + ":" + L));
  for (int i : movers) {
    std::vector<int> others{r.leader};
    others.insert(others.end(), r.obstacles.begin(), r.obstacles.end());
    others.insert(others.end(), r.followers.begin(), r.followers.end());
    for (int j : others) {
      if (j == i) continue;
      top.push_back(leaf("ca:" + std::to_string(i) + ":" + std::to_string(j), LeafKind::Distance));
    }
  }

  std::vector<BarrierNode> tracking;
  for (int i : r.followers) {
    const std::string pre = std::to_string(i) + ":" + L;
    std::vector<BarrierNode> conj;
    if (s.params.fov.type == FovSpec::Type::Ellipsoidal) {
      conj.push_back(leaf("fov:" + pre));
    } else {
      std::vector<BarrierNode> facets;
      for (std::size_t m = 0; m < s.params.fov.facets.facets.size(); ++m) {
        facets.push_back(leaf("fov:" + pre + ":" + std::to_string(m + 1)));
      }
      conj.push_back(BarrierNode::all_of(std::move(facets)));
    }
    conj.push_back(leaf("rng_max:" + pre));
    conj.push_back(leaf("rng_min:" + pre));
    std::vector<int> occluders = r.followers;
    occluders.insert(occluders.end(), r.obstacles.begin(), r.obstacles.end());
    for (int k : occluders) {
      if (k == i) continue;
      conj.push_back(leaf("los:" + pre + ":" + std::to_string(k), LeafKind::Distance));
    }
    tracking.push_back(BarrierNode::all_of(std::move(conj)));
  }
  top.push_back(BarrierNode::any_of(std::move(tracking)));
  return BarrierNode::all_of(std::move(top));
}

LeafSpec parse_leaf(const std::string& id, const Scenario& s) {
  const std::vector<std::string> parts = split(id, ':');
  auto agent = [&](std::size_t pos) {
    const int aid = parse_int(parts.at(pos), id);
    for (std::size_t k = 0; k < s.agents.size(); ++k) {
      if (s.agents[k].id == aid) return static_cast<int>(k);
    }
    throw ScenarioError("leaf '" + id + "' refers to unknown agent " + std::to_string(aid));
  };
  auto arity = [&](std::size_t lo, std::size_t hi) {
    if (parts.size() < lo || parts.size() > hi) throw ScenarioError("leaf '" + id + "' has the wrong number of fields");
  };

  LeafSpec leaf;
  leaf.id = id;
  const std::string& kind = parts.front();
  if (kind == "ca") {
    arity(3, 3);
    leaf.type = LeafSpec::Type::Collision;
  } else if (kind == "los") {
    arity(4, 4);
    leaf.type = LeafSpec::Type::Los;
  } else if (kind == "fov") {
    arity(3, 4);
    leaf.type = LeafSpec::Type::Fov;
  } else if (kind == "rng_min" || kind == "rng_max") {
    arity(3, 3);
    leaf.type = kind == "rng_min" ? LeafSpec::Type::RangeMin : LeafSpec::Type::RangeMax;
  } else if (kind == "state") {
    arity(2, 2);
    leaf.type = LeafSpec::Type::State;
  } else if (kind == "reg") {
    arity(3, 3);
    leaf.type = LeafSpec::Type::Regularity;
  } else {
    throw ScenarioError("leaf '" + id + "' has unknown kind '" + kind + "'");
  }

  leaf.i = agent(1);
  if (leaf.type != LeafSpec::Type::State) {
    leaf.j = agent(2);
    if (leaf.i == leaf.j) throw ScenarioError("leaf '" + id + "' pairs an agent with itself");
  }
  if (leaf.type == LeafSpec::Type::Los) {
    leaf.k = agent(3);
    if (leaf.k == leaf.i || leaf.k == leaf.j) throw ScenarioError("leaf '" + id + "': occluder must be a third body");
  }
  if (leaf.type == LeafSpec::Type::Fov) {
    const bool poly = s.params.fov.type == FovSpec::Type::Polyhedral;
    if (parts.size() == 4) {
      if (!poly) throw ScenarioError("leaf '" + id + "': facet index needs a polyhedral fov");
      leaf.facet = parse_int(parts[3], id) - 1;
      if (leaf.facet < 0 || leaf.facet >= static_cast<int>(s.params.fov.facets.facets.size())) {
        throw ScenarioError("leaf '" + id + "': facet index out of range");
      }
    } else if (poly) {
      throw ScenarioError("leaf '" + id + "': polyhedral fov leaves need a facet index");
    }
  }
  return leaf;
}

int threads_from_env() {
  const char* v = std::getenv("BNCBF_THREADS");
  if (v == nullptr) return 1;
  try {
    const int n = std::stoi(v);
    return std::clamp(n, 1, 64);
  } catch (const std::exception&) {
    return 1;
  }
}

Simulator::Simulator(Scenario s, int threads) : s_(std::move(s)), threads_(std::max(threads, 1)) {
  check_params(s_);
  tree_ = s_.tree.is_null() ? build_paper_tree(s_) : parse_tree(s_.tree);
  check_structure(tree_);
  const std::vector<std::string> ids = bncbf::leaf_ids(tree_);
  std::map<std::string, LeafKind> kinds;
  for (const auto& id : ids) {
    leaves_.push_back(parse_leaf(id, s_));
    kinds.emplace(id, leaves_.back().kind());
  }
  set_kinds(tree_, kinds);
  bind_slots(tree_, ids);
  check_distance_polarity(tree_);

  offsets_.assign(s_.agents.size(), -1);
  for (std::size_t a = 0; a < s_.agents.size(); ++a) {
    if (s_.agents[a].role == Role::Obstacle) continue;
    offsets_[a] = input_dim_;
    input_dim_ += 5;
  }
  for (const auto& a : s_.agents) {
    templates_.push_back(a.tmpl ? *a.tmpl : s_.tmpl);
    body_radius_.push_back(bounding_radius(templates_.back()));
  }
}

std::vector<std::string> Simulator::leaf_ids() const {
  std::vector<std::string> out;
  out.reserve(leaves_.size());
  for (const auto& l : leaves_) out.push_back(l.id);
  return out;
}

std::vector<Vec5> Simulator::initial_states() const {
  std::vector<Vec5> out;
  std::mt19937_64 rng(s_.seed);
  std::uniform_real_distribution<double> jitter(-s_.initial_jitter, s_.initial_jitter);
  for (const auto& a : s_.agents) {
    Vec5 eta = a.initial;
    if (s_.initial_jitter > 0.0 && a.role != Role::Obstacle) {
      for (int c = 0; c < 3; ++c) {
        if (a.mask.enabled[static_cast<std::size_t>(c)] || c < 2) eta(c) += jitter(rng);
      }
    }
    out.push_back(eta);
  }
  return out;
}

std::vector<Vec5> Simulator::goals() const {
  std::vector<Vec5> out;
  for (const auto& a : s_.agents) out.push_back(a.goal);
  return out;
}

Polytope Simulator::body(const std::vector<Vec5>& states, int agent) const {
  return instantiate(templates_[static_cast<std::size_t>(agent)], Pose::from_state(states[static_cast<std::size_t>(agent)]));
}

PolytopeRate Simulator::body_rate(const std::vector<Vec5>& states, int agent) const {
  const int off = offsets_[static_cast<std::size_t>(agent)];
  if (off < 0) return {};
  return agent_polytope_rate(templates_[static_cast<std::size_t>(agent)], Pose::from_state(states[static_cast<std::size_t>(agent)]), off);
}

double Simulator::sphere_bound(const std::vector<Vec5>& states, const LeafSpec& leaf) const {
  auto pos = [&](int a) -> Vec3 { return states[static_cast<std::size_t>(a)].head<3>(); };
  auto radius = [&](int a) { return body_radius_[static_cast<std::size_t>(a)]; };
  if (leaf.type == LeafSpec::Type::Collision) {
    return (pos(leaf.i) - pos(leaf.j)).norm() - radius(leaf.i) - radius(leaf.j) - s_.params.r_ca;
  }
  // Every corridor point lies within 1/mu of the segment.
  return segment_point_distance(pos(leaf.i), pos(leaf.j), pos(leaf.k)) - radius(leaf.k) - 1.0 / s_.params.mu -
         s_.params.r_los;
}

void Simulator::evaluate_distance(const std::vector<Vec5>& states, const LeafSpec& leaf, LeafEvaluation& out,
                                  std::size_t slot) const {
  DistanceResult r;
  try {
    if (leaf.type == LeafSpec::Type::Collision) {
      r = collision_value(body(states, leaf.i), body(states, leaf.j), s_.params.r_ca);
    } else {
      const LosCorridor corridor{s_.params.mu, s_.params.r_los};
      r = los_value(corridor, states[static_cast<std::size_t>(leaf.i)], states[static_cast<std::size_t>(leaf.j)],
                    body(states, leaf.k));
    }
  } catch (const DistanceSolveError& e) {
    throw DistanceSolveError("leaf '" + leaf.id + "': " + e.what(), e.status());
  }
  out.values[slot] = r.h;
  out.distance[slot] = std::move(r);
}

LeafEvaluation Simulator::evaluate(const std::vector<Vec5>& states, long step, double prune_above) const {
  if (states.size() != s_.agents.size()) throw std::invalid_argument("evaluate: wrong number of agent states");
  LeafEvaluation out;
  out.step = step;
  const std::size_t n = leaves_.size();
  out.values.assign(n, 0.0);
  out.smooth.assign(n, std::nullopt);
  out.distance.assign(n, std::nullopt);
  out.pruned.assign(n, false);

  std::vector<std::size_t> exact;
  for (std::size_t k = 0; k < n; ++k) {
    const LeafSpec& leaf = leaves_[k];
    const Vec5& ei = states[static_cast<std::size_t>(leaf.i)];
    const Vec5& ej = leaf.j >= 0 ? states[static_cast<std::size_t>(leaf.j)] : ei;
    SmoothValue v;
    switch (leaf.type) {
      case LeafSpec::Type::Collision:
      case LeafSpec::Type::Los: {
        if (std::isfinite(prune_above)) {
          const double bound = sphere_bound(states, leaf);
          if (bound > prune_above) {
            out.values[k] = bound;
            out.pruned[k] = true;
            ++out.pruned_count;
            continue;
          }
        }
        exact.push_back(k);
        continue;
      }
      case LeafSpec::Type::Fov: {
        const FovCone cone = leaf.facet < 0 ? FovCone::ellipsoidal(s_.params.fov.half_angle)
                                            : s_.params.fov.facets.facets[static_cast<std::size_t>(leaf.facet)];
        v = fov_value(cone, ei, ej);
        break;
      }
      case LeafSpec::Type::RangeMin: v = range_values(s_.params.range, ei, ej).lower; break;
      case LeafSpec::Type::RangeMax: v = range_values(s_.params.range, ei, ej).upper; break;
      case LeafSpec::Type::State: v = state_value(ei, s_.params.yaw_limit); break;
      case LeafSpec::Type::Regularity: v = regularity_value(ei, ej, s_.params.regularity_margin); break;
    }
    out.values[k] = v.value;
    out.smooth[k] = v;
  }

  const auto start = std::chrono::steady_clock::now();
  parallel_for(exact.size(), threads_, [&](std::size_t idx) {
    const std::size_t k = exact[idx];
    evaluate_distance(states, leaves_[k], out, k);
  });
  out.distance_ms = elapsed_ms(start);
  for (std::size_t k : exact) {
    (leaves_[k].type == LeafSpec::Type::Collision ? out.collision_qps : out.los_qps) += 1;
  }
  return out;
}

Eigen::VectorXd Simulator::nominal(const std::vector<Vec5>& states) const {
  Eigen::VectorXd u = Eigen::VectorXd::Zero(input_dim_);
  for (std::size_t a = 0; a < s_.agents.size(); ++a) {
    if (offsets_[a] < 0) continue;
    u.segment<5>(offsets_[a]) = nominal_input(states[a], s_.agents[a].goal, s_.agents[a].mask, s_.params.input_bound);
  }
  return u;
}

void Simulator::input_bounds(Eigen::VectorXd& lower, Eigen::VectorXd& upper) const {
  lower = Eigen::VectorXd::Zero(input_dim_);
  upper = Eigen::VectorXd::Zero(input_dim_);
  for (std::size_t a = 0; a < s_.agents.size(); ++a) {
    if (offsets_[a] < 0) continue;
    for (int c = 0; c < 5; ++c) {
      if (!s_.agents[a].mask.enabled[static_cast<std::size_t>(c)]) continue;
      lower(offsets_[a] + c) = -s_.params.input_bound;
      upper(offsets_[a] + c) = s_.params.input_bound;
    }
  }
}

FilterInputs Simulator::filter_inputs(const std::vector<Vec5>& states, const LeafEvaluation& eval,
                                      const ActiveSets& active, const Eigen::VectorXd& nominal) const {
  FilterInputs fi;
  fi.nominal = nominal;
  input_bounds(fi.lower, fi.upper);
  fi.h_g = active.h_g;
  fi.alpha_slope = s_.params.alpha_slope;
  fi.step = eval.step;

  for (const auto& a : active.smooth) {
    const LeafSpec& leaf = leaves_[static_cast<std::size_t>(a.slot)];
    const auto& sv = eval.smooth[static_cast<std::size_t>(a.slot)];
    if (!sv) throw std::logic_error("smooth leaf '" + leaf.id + "' has no gradient");
    SmoothConstraint c;
    c.id = leaf.id;
    c.sign = a.sign;
    c.lg = Eigen::VectorXd::Zero(input_dim_);
    auto add = [&](int agent, const Vec5& grad) {
      const int off = offsets_[static_cast<std::size_t>(agent)];
      if (off < 0) return;
      c.lg.segment<5>(off) += (grad.transpose() * jacobian(states[static_cast<std::size_t>(agent)])).transpose();
    };
    add(leaf.i, sv->d_eta_i);
    if (leaf.j >= 0) add(leaf.j, sv->d_eta_j);
    fi.smooth.push_back(std::move(c));
  }

  for (const auto& a : active.nonsmooth) {
    const LeafSpec& leaf = leaves_[static_cast<std::size_t>(a.slot)];
    const auto& dr = eval.distance[static_cast<std::size_t>(a.slot)];
    if (!dr) throw std::logic_error("distance leaf '" + leaf.id + "' was not solved");
    NonsmoothConstraint c;
    c.id = leaf.id;
    c.step = eval.step;
    if (leaf.type == LeafSpec::Type::Collision) {
      c.terms = derivative_bound_terms(body(states, leaf.i), body_rate(states, leaf.i), body(states, leaf.j),
                                       body_rate(states, leaf.j), *dr, s_.params.eps2);
    } else {
      const LosCorridor corridor{s_.params.mu, s_.params.r_los};
      const Vec5& ei = states[static_cast<std::size_t>(leaf.i)];
      const Vec5& ej = states[static_cast<std::size_t>(leaf.j)];
      c.terms = derivative_bound_terms(corridor.build(ei, ej),
                                       corridor.rate(ei, offsets_[static_cast<std::size_t>(leaf.i)], ej,
                                                     offsets_[static_cast<std::size_t>(leaf.j)]),
                                       body(states, leaf.k), body_rate(states, leaf.k), *dr, s_.params.eps2);
    }
    fi.nonsmooth.push_back(std::move(c));
  }
  return fi;
}

ValidationReport Simulator::validate() const {
  ValidationReport rep;
  auto problem = [&](std::string msg) {
    rep.ok = false;
    rep.problems.push_back(std::move(msg));
  };
  for (auto& p : check_regularity(s_.tmpl)) problem("template: " + p);
  for (const auto& a : s_.agents) {
    if (!a.tmpl) continue;
    for (auto& p : check_regularity(*a.tmpl)) problem("agent " + std::to_string(a.id) + " template: " + p);
  }

  const double pitch_limit = std::numbers::pi / 2 - 1e-6;
  for (const auto& a : s_.agents) {
    const std::string who = "agent " + std::to_string(a.id);
    if (!(std::abs(a.initial(3)) < pitch_limit)) problem(who + ": initial pitch outside (-pi/2, pi/2)");
    if (!(std::abs(a.goal(3)) < pitch_limit)) problem(who + ": goal pitch outside (-pi/2, pi/2)");
    if (!a.initial.allFinite() || !a.goal.allFinite()) problem(who + ": non-finite pose");
  }

  bool tracking = false;
  for (const auto& l : leaves_) {
    tracking |= l.type == LeafSpec::Type::Fov || l.type == LeafSpec::Type::RangeMin ||
                l.type == LeafSpec::Type::RangeMax || l.type == LeafSpec::Type::Los;
  }
  const auto leaders = std::count_if(s_.agents.begin(), s_.agents.end(), [](const AgentSpec& a) {
    return a.role == Role::Leader;
  });
  if (tracking && leaders != 1) problem("tracking constraints need exactly one leader, found " + std::to_string(leaders));
  if (!rep.ok) return rep;

  const std::vector<Vec5> states = initial_states();
  const LosCorridor corridor{s_.params.mu, s_.params.r_los};
  for (const auto& l : leaves_) {
    if (l.type != LeafSpec::Type::Los) continue;
    const Vec5& ei = states[static_cast<std::size_t>(l.i)];
    const Vec5& ej = states[static_cast<std::size_t>(l.j)];
    try {
      const Polytope p = corridor.build(ei, ej);
      for (int s = 0; s < 50; ++s) {
        const double alpha = s / 49.0;
        const Vec3 q = alpha * ej.head<3>() + (1.0 - alpha) * ei.head<3>();
        if (!p.contains(q)) {
          problem(l.id + ": corridor does not contain the sight line");
          break;
        }
      }
    } catch (const std::exception& e) {
      problem(l.id + ": " + e.what());
    }
  }
  if (!rep.ok) return rep;

  try {
    const LeafEvaluation ev = evaluate(states, 0);
    rep.h_g = bncbf::evaluate(tree_, ev.values);
    for (std::size_t k = 0; k < leaves_.size(); ++k) {
      if (ev.values[k] < 0.0) rep.negative_leaves.push_back(leaves_[k].id);
    }
    if (rep.h_g < 0.0) {
      std::string list;
      for (const auto& id : rep.negative_leaves) list += (list.empty() ? "" : ", ") + id;
      std::ostringstream msg;
      msg << "initial state is unsafe: h_g = " << rep.h_g << "; negative leaves: " << list;
      problem(msg.str());
    }
  } catch (const std::exception& e) {
    problem(std::string("initial state cannot be evaluated: ") + e.what());
  }
  return rep;
}

RunLog Simulator::run() const {
  const ValidationReport rep = validate();
  if (!rep.ok) {
    std::string msg = "scenario '" + s_.name + "' failed validation:";
    for (const auto& p : rep.problems) msg += "\n  " + p;
    throw ValidationFailed(msg);
  }

  RunLog log;
  log.scenario = s_.name;
  log.config = {s_.dt, s_.duration, s_.params.eps1, s_.params.eps2, s_.params.alpha_slope,
                s_.seed, s_.filter_bypass, s_.broad_phase};
  for (const auto& a : s_.agents) {
    log.agent_ids.push_back(a.id);
    log.roles.push_back(to_string(a.role));
    log.goals.push_back(a.goal);
  }
  log.leaf_ids = leaf_ids();
  for (const auto& l : leaves_) {
    log.collision_leaves += l.type == LeafSpec::Type::Collision ? 1 : 0;
    log.los_leaves += l.type == LeafSpec::Type::Los ? 1 : 0;
  }

  const double tol = s_.params.violation_tolerance;
  const long n_steps = std::lround(s_.duration / s_.dt);
  std::vector<Vec5> states = initial_states();
  double h_prev = std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd lower, upper;
  input_bounds(lower, upper);

  auto record_event = [&](long step, double time, std::string type, double h, std::string detail) {
    log.events.push_back({step, time, std::move(type), h, std::move(detail)});
  };

  long k = 0;
  for (; k < n_steps; ++k) {
    const double t = static_cast<double>(k) * s_.dt;
    const auto step_start = std::chrono::steady_clock::now();
    StepRecord rec;
    rec.step = k;
    rec.time = t;
    rec.states = states;

    LeafEvaluation ev;
    ActiveSets act;
    try {
      const double prune = s_.broad_phase && std::isfinite(h_prev)
                               ? h_prev + s_.params.eps1 + s_.params.broad_phase_margin
                               : std::numeric_limits<double>::infinity();
      ev = evaluate(states, k, prune);
      act = active_sets(tree_, ev.values, s_.params.eps1);
      const bool stale = std::any_of(act.nonsmooth.begin(), act.nonsmooth.end(), [&](const ActiveLeaf& a) {
        return ev.pruned[static_cast<std::size_t>(a.slot)];
      });
      if (stale) {
        ev = evaluate(states, k);
        act = active_sets(tree_, ev.values, s_.params.eps1);
      }
    } catch (const std::exception& e) {
      record_event(k, t, "fault", h_prev, std::string("barrier evaluation failed: ") + e.what());
      log.aborted = true;
      break;
    }

    rec.h_g = act.h_g;
    rec.leaf_values = ev.values;
    rec.active_smooth = static_cast<int>(act.smooth.size());
    rec.active_nonsmooth = static_cast<int>(act.nonsmooth.size());
    rec.collision_qps = ev.collision_qps;
    rec.los_qps = ev.los_qps;
    rec.pruned = ev.pruned_count;
    rec.distance_ms = ev.distance_ms;
    if (act.h_g < -tol) record_event(k, t, "violation", act.h_g, "active: " + describe_active(act));
    if (!log.steps.empty()) {
      log.steps.back().decrease_ok = verify_decrease(h_prev, act.h_g, s_.params.alpha_slope, s_.dt).passed;
    }

    const Eigen::VectorXd u_r = nominal(states);
    Eigen::VectorXd u = Eigen::VectorXd::Zero(input_dim_);
    const auto filter_start = std::chrono::steady_clock::now();
    if (s_.filter_bypass) {
      u = u_r;
      rec.filter_status = "bypass";
    } else {
      try {
        const FilterInputs fi = filter_inputs(states, ev, act, u_r);
        const FilterSolution sol = solve(assemble(fi), fi);
        rec.filter_status = to_string(sol.status);
        rec.filter_iterations = sol.iterations;
        if (sol.ok()) {
          u = sol.u.cwiseMax(lower).cwiseMin(upper);
        } else {
          record_event(k, t, "fault", act.h_g, std::string("filter ") + to_string(sol.status) + "; holding zero input");
        }
      } catch (const std::exception& e) {
        rec.filter_status = "error";
        record_event(k, t, "fault", act.h_g, std::string("filter error: ") + e.what() + "; holding zero input");
      }
    }
    rec.filter_ms = elapsed_ms(filter_start);

    rec.nominal.assign(s_.agents.size(), Vec5::Zero());
    rec.safe.assign(s_.agents.size(), Vec5::Zero());
    bool integrated = true;
    for (std::size_t a = 0; a < s_.agents.size(); ++a) {
      if (offsets_[a] < 0) continue;
      rec.nominal[a] = u_r.segment<5>(offsets_[a]);
      rec.safe[a] = u.segment<5>(offsets_[a]);
    }
    std::vector<Vec5> next = states;
    try {
      for (std::size_t a = 0; a < s_.agents.size(); ++a) {
        if (offsets_[a] >= 0) next[a] = step(states[a], rec.safe[a], s_.dt);
      }
    } catch (const std::exception& e) {
      record_event(k, t, "fault", act.h_g, std::string("integration failed: ") + e.what());
      integrated = false;
    }
    rec.total_ms = elapsed_ms(step_start);
    log.steps.push_back(std::move(rec));
    h_prev = act.h_g;
    if (!integrated) {
      log.aborted = true;
      ++k;
      break;
    }
    states = std::move(next);
  }

  log.final_time = log.aborted && !log.steps.empty() ? log.steps.back().time : static_cast<double>(k) * s_.dt;
  log.final_states = states;
  log.final_h_g = std::numeric_limits<double>::quiet_NaN();
  if (!log.aborted) {
    try {
      const LeafEvaluation ev = evaluate(states, k);
      log.final_h_g = bncbf::evaluate(tree_, ev.values);
      if (!log.steps.empty()) {
        log.steps.back().decrease_ok = verify_decrease(h_prev, log.final_h_g, s_.params.alpha_slope, s_.dt).passed;
      }
      if (log.final_h_g < -tol) record_event(k, log.final_time, "violation", log.final_h_g, "final state");
    } catch (const std::exception& e) {
      record_event(k, log.final_time, "fault", h_prev, std::string("final evaluation failed: ") + e.what());
    }
  }
  return log;
}

namespace {

struct Moments {
  double sum = 0.0, sum2 = 0.0;
  long n = 0;
  void add(double v) {
    sum += v;
    sum2 += v * v;
    ++n;
  }
  double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
  double stddev() const {
    if (n < 2) return 0.0;
    const double m = mean();
    return std::sqrt(std::max(0.0, sum2 / static_cast<double>(n) - m * m));
  }
};

}  // namespace

Summary stats(const RunLog& log) {
  Summary s;
  s.steps = static_cast<long>(log.steps.size());
  s.aborted = log.aborted;
  s.collision_leaves = log.collision_leaves;
  s.los_leaves = log.los_leaves;
  Moments active, ca, los, dq, dms, fms, tms;
  s.min_h_g = std::numeric_limits<double>::infinity();
  for (const auto& r : log.steps) {
    active.add(r.active_smooth + r.active_nonsmooth);
    ca.add(r.collision_qps);
    los.add(r.los_qps);
    dq.add(r.collision_qps + r.los_qps);
    dms.add(r.distance_ms);
    fms.add(r.filter_ms);
    tms.add(r.total_ms);
    s.min_h_g = std::min(s.min_h_g, r.h_g);
    s.decrease_failures += r.decrease_ok ? 0 : 1;
    for (std::size_t a = 0; a < r.safe.size(); ++a) {
      s.max_filter_deviation = std::max(s.max_filter_deviation, (r.safe[a] - r.nominal[a]).cwiseAbs().maxCoeff());
    }
  }
  if (std::isfinite(log.final_h_g)) s.min_h_g = std::min(s.min_h_g, log.final_h_g);
  if (!std::isfinite(s.min_h_g)) s.min_h_g = std::numeric_limits<double>::quiet_NaN();
  s.active_mean = active.mean();
  s.active_std = active.stddev();
  s.collision_qps_mean = ca.mean();
  s.los_qps_mean = los.mean();
  s.distance_qps_mean = dq.mean();
  s.distance_qps_std = dq.stddev();
  s.distance_ms_mean = dms.mean();
  s.distance_ms_std = dms.stddev();
  s.filter_ms_mean = fms.mean();
  s.filter_ms_std = fms.stddev();
  s.total_ms_mean = tms.mean();
  s.total_ms_std = tms.stddev();
  for (const auto& e : log.events) {
    if (e.type == "violation") ++s.violations;
    if (e.type == "fault") ++s.faults;
  }
  for (std::size_t a = 0; a < log.final_states.size() && a < log.goals.size(); ++a) {
    if (a < log.roles.size() && log.roles[a] == "obstacle") continue;
    s.max_goal_error = std::max(s.max_goal_error, (log.final_states[a].head<3>() - log.goals[a].head<3>()).norm());
  }
  return s;
}

json to_json(const Summary& s) {
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  return json{
      {"steps", s.steps},
      {"min_h_g", num(s.min_h_g)},
      {"violations", s.violations},
      {"faults", s.faults},
      {"decrease_failures", s.decrease_failures},
      {"aborted", s.aborted},
      {"collision_leaves", s.collision_leaves},
      {"los_leaves", s.los_leaves},
      {"active_mean", s.active_mean},
      {"active_std", s.active_std},
      {"collision_qps_mean", s.collision_qps_mean},
      {"los_qps_mean", s.los_qps_mean},
      {"distance_qps_mean", s.distance_qps_mean},
      {"distance_qps_std", s.distance_qps_std},
      {"distance_ms_mean", s.distance_ms_mean},
      {"distance_ms_std", s.distance_ms_std},
      {"filter_ms_mean", s.filter_ms_mean},
      {"filter_ms_std", s.filter_ms_std},
      {"total_ms_mean", s.total_ms_mean},
      {"total_ms_std", s.total_ms_std},
      {"max_goal_error", s.max_goal_error},
      {"max_filter_deviation", s.max_filter_deviation},
  };
}

}  // namespace bncbf
