// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.
#include "composition.hpp"
#include "constraints.hpp"
#include "distance.hpp"
#include "dynamics.hpp"
#include "filter.hpp"
#include "oracles.hpp"
#include "scenario.hpp"
#include "support.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

using namespace bncbf;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string scenario_path(const char* name) { return std::string(BNCBF_SCENARIO_DIR) + "/" + name; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Vec5 v5(double a, double b, double c, double d, double e) {
  Vec5 v;
  v << a, b, c, d, e;
  return v;
}

// ---- simulation criteria -------------------------------------------------

struct TenAgentRuns {
  Summary filtered, bypassed;
  double filtered_seconds = 0.0;
};

const TenAgentRuns& ten_agent_runs() {
  static const TenAgentRuns runs = [] {
    TenAgentRuns r;
    Scenario s = load_scenario(scenario_path("paper_sim.json"));
    const auto t0 = std::chrono::steady_clock::now();
    r.filtered = stats(Simulator(s).run());
    r.filtered_seconds = seconds_since(t0);
    s.filter_bypass = true;
    r.bypassed = stats(Simulator(s).run());
    return r;
  }();
  return runs;
}

Outcome forward_invariance() {
  const auto& r = ten_agent_runs();
  const auto& f = r.filtered;
  const bool ok = f.min_h_g >= -1e-3 && !f.aborted && f.faults == 0 && r.filtered_seconds < 300.0;
  return {ok, fmt("min h_g %.4g over %ld steps, faults %d, %.1f s wall", f.min_h_g, f.steps, f.faults,
                  r.filtered_seconds)};
}

Outcome goal_convergence() {
  const auto& f = ten_agent_runs().filtered;
  return {f.max_goal_error <= 0.3, fmt("max final position error %.4g m", f.max_goal_error)};
}

Outcome leaf_counts() {
  const Scenario base = load_scenario(scenario_path("paper_sim.json"));
  const int expected[] = {12, 42, 72, 110};
  const int nfs[] = {2, 5, 7, 9};
  bool ok = true;
  double prev_ms = 0.0;
  std::string counts, times;
  for (int k = 0; k < 4; ++k) {
    const Summary s = stats(Simulator(with_follower_count(base, nfs[k])).run());
    ok = ok && s.collision_leaves == expected[k] && s.total_ms_mean > prev_ms && std::isfinite(s.total_ms_mean);
    prev_ms = s.total_ms_mean;
    counts += fmt("%s%d", k ? "/" : "", s.collision_leaves);
    times += fmt("%s%.2f", k ? "/" : "", s.total_ms_mean);
  }
  return {ok, "collision leaves " + counts + ", mean ms/step " + times};
}

Outcome ablation() {
  const auto& r = ten_agent_runs();
  return {r.bypassed.violations >= 1 && r.filtered.violations == 0,
          fmt("violations bypassed %d, filtered %d", r.bypassed.violations, r.filtered.violations)};
}

Outcome experiment() {
  const Scenario s = load_scenario(scenario_path("experiment.json"));
  int usv = 0, uuv = 0, obstacles = 0;
  for (const auto& a : s.agents) {
    usv += a.role == Role::Leader && a.mask.name() == "usv";
    uuv += a.role == Role::Follower && a.mask.name() == "uuv";
    obstacles += a.role == Role::Obstacle;
  }
  const bool shape = usv == 1 && uuv == 2 && obstacles == 1 && s.params.fov.type == FovSpec::Type::Polyhedral;
  const RunLog log = Simulator(s).run();
  const Summary sum = stats(log);
  const bool ok = shape && !sum.aborted && sum.min_h_g >= -1e-3 && sum.max_goal_error <= 0.3 &&
                  log.final_time >= s.duration - 1e-9;
  return {ok, fmt("min h_g %.4g, max goal error %.4g m, faults %d, %.0f s simulated", sum.min_h_g,
                  sum.max_goal_error, sum.faults, log.final_time)};
}

// ---- distance-derivative bound ------------------------------------------

std::set<int> support(const Eigen::VectorXd& l) {
  std::set<int> s;
  for (Eigen::Index k = 0; k < l.size(); ++k)
    if (l(k) > 1e-6) s.insert(static_cast<int>(k));
  return s;
}

Outcome derivative_bound() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> off(-1, 1), vel(-0.2, 0.2), rate(-0.5, 0.5), ang(-0.5, 0.5), yaw(-3, 3);
  const auto tmpl = PolytopeTemplate::tetrahedron();
  const double dt = 1e-3;
  const int steps = 1000;
  int trajectories = 0, samples = 0, skipped = 0, bad = 0;
  double worst = -1e9;
  while (trajectories < 12) {
    Vec5 ea = v5(0, 0, 0, ang(rng), yaw(rng));
    Vec5 eb = v5(off(rng), off(rng), 0.5 * off(rng), ang(rng), yaw(rng));
    eb.head<3>() += 0.7 * eb.head<3>().normalized();
    const Vec5 ua = v5(vel(rng), vel(rng), vel(rng), rate(rng), rate(rng));
    const Vec5 ub = v5(vel(rng), vel(rng), vel(rng), rate(rng), rate(rng));
    Eigen::VectorXd u(10);
    u << ua, ub;
    std::vector<Vec5> A{ea}, B{eb};
    for (int k = 0; k < steps + 1; ++k) {
      A.push_back(step(A.back(), ua, dt));
      B.push_back(step(B.back(), ub, dt));
    }
    std::vector<DistanceResult> res;
    bool contact = false;
    for (std::size_t k = 0; k < A.size(); ++k) {
      res.push_back(min_distance(instantiate(tmpl, Pose::from_state(A[k])), instantiate(tmpl, Pose::from_state(B[k]))));
      contact = contact || !res.back().normalized();
    }
    if (contact) continue;  // the bound is stated for separated bodies
    ++trajectories;
    for (int k = 1; k <= steps; ++k) {
      const auto& r = res[static_cast<std::size_t>(k)];
      const auto& rp = res[static_cast<std::size_t>(k - 1)];
      const auto& rn = res[static_cast<std::size_t>(k + 1)];
      const bool switching = support(r.lambda_a) != support(rp.lambda_a) || support(r.lambda_a) != support(rn.lambda_a) ||
                             support(r.lambda_b) != support(rp.lambda_b) || support(r.lambda_b) != support(rn.lambda_b);
      if (switching) {
        ++skipped;
        continue;
      }
      const Pose pa = Pose::from_state(A[static_cast<std::size_t>(k)]), pb = Pose::from_state(B[static_cast<std::size_t>(k)]);
      const Polytope a = instantiate(tmpl, pa), b = instantiate(tmpl, pb);
      const auto terms = derivative_bound_terms(a, agent_polytope_rate(tmpl, pa, 0), b, agent_polytope_rate(tmpl, pb, 5), r, 0.01);
      const auto g = derivative_lower_bound(terms, u);
      const double fd = (rn.h - rp.h) / (2 * dt);
      ++samples;
      const double excess = g.value - fd - 5e-3 * (1 + std::abs(fd));
      worst = std::max(worst, g.value - fd);
      if (g.status != QpStatus::Optimal || excess > 0) ++bad;
    }
  }
  return {bad == 0 && samples > 0, fmt("%d trajectories, %d samples checked, %d switching skipped, %d above tolerance, max g - dh/dt %.3g",
                                       trajectories, samples, skipped, bad, worst)};
}

// ---- distance oracle -----------------------------------------------------

Outcome distance_oracle() {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> c(-2, 2), size(0.05, 2.0), thin(1e-3, 1e-2), u01(0, 1);
  double box_err = 0.0;
  for (int k = 0; k < 200; ++k) {
    oracle::Box boxes[2];
    for (auto& bx : boxes) {
      Vec3 sz(size(rng), size(rng), size(rng));
      if (u01(rng) < 0.3) {  // segment-like rod along a random axis
        const int axis = static_cast<int>(u01(rng) * 3) % 3;
        for (int a = 0; a < 3; ++a)
          if (a != axis) sz(a) = thin(rng);
      }
      const Vec3 ctr(c(rng), c(rng), c(rng));
      bx = {ctr - sz / 2, ctr + sz / 2};
    }
    Polytope pa, pb;
    oracle::box_halfspaces(boxes[0], pa.A, pa.b);
    oracle::box_halfspaces(boxes[1], pb.A, pb.b);
    box_err = std::max(box_err, std::abs(min_distance(pa, pb).h - oracle::box_box_distance(boxes[0], boxes[1])));
  }

  const auto tmpl = PolytopeTemplate::tetrahedron();
  std::uniform_real_distribution<double> ang(-1.2, 1.2), yaw(-3.1, 3.1), d(-0.6, 0.6);
  double tet_err = 0.0, sample_gap = 0.0;
  bool sample_below = false;
  for (int k = 0; k < 50; ++k) {
    const Polytope a = instantiate(tmpl, Pose{Vec3::Zero(), ang(rng), yaw(rng)});
    const Polytope b = instantiate(tmpl, Pose{Vec3(d(rng), d(rng), d(rng)), ang(rng), yaw(rng)});
    const double h = min_distance(a, b).h;
    const auto ma = oracle::mesh_from_halfspaces(a.A, a.b), mb = oracle::mesh_from_halfspaces(b.A, b.b);
    tet_err = std::max(tet_err, std::abs(h - oracle::mesh_mesh_distance(ma, mb)));
    if (h > 0) {
      const double sampled = oracle::sampled_distance(ma, mb, 24);
      sample_below = sample_below || sampled < h - 1e-9;
      sample_gap = std::max(sample_gap, sampled - h);
    }
  }
  return {box_err <= 1e-6 && tet_err <= 1e-3 && !sample_below,
          fmt("box/rod max error %.2e (200 cases), tetrahedra max error %.2e (50 pairs), coarse sampling gap %.2e",
              box_err, tet_err, sample_gap)};
}

// ---- Boolean composition -------------------------------------------------

Outcome boolean_oracle() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> val(-1, 1);
  std::uniform_int_distribution<int> depth(0, 6), leaves(1, 32);
  int mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    const int n = leaves(rng);
    const auto tree = oracle::random_tree(rng, depth(rng), n);
    const auto ids = slot_names(n);
    BarrierNode node = to_node(tree);
    bind_slots(node, ids);
    BarrierNode norm = normalize(node);
    bind_slots(norm, ids);
    BarrierNode twice = normalize(norm);
    bind_slots(twice, ids);
    if (!nots_on_leaves(norm) || !(twice == norm)) ++mismatches;
    // Double negation and De Morgan at the root.
    BarrierNode dn = normalize(BarrierNode::negate(BarrierNode::negate(node)));
    bind_slots(dn, ids);
    if (!(dn == norm)) ++mismatches;
    BarrierNode dm = normalize(BarrierNode::negate(BarrierNode::all_of({node, BarrierNode::negate(node)})));
    bind_slots(dm, ids);
    BarrierNode neg = normalize(BarrierNode::negate(node));
    bind_slots(neg, ids);
    if (!(dm == BarrierNode::any_of({neg, norm}))) ++mismatches;
    for (int k = 0; k < 20; ++k) {
      std::vector<double> v(static_cast<std::size_t>(n));
      for (auto& x : v) x = val(rng);
      const double ref = oracle::brute_eval(tree, v);
      if (evaluate(node, v) != ref || evaluate(norm, v) != ref || evaluate(dm, v) != std::max(-ref, ref)) ++mismatches;
    }
  }
  return {mismatches == 0, fmt("1000 trees, %d mismatches", mismatches)};
}

// ---- smooth gradients ----------------------------------------------------

Outcome gradients() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> pos(-5, 5), pitch(-0.6, 0.6), yaw(-0.9, 0.9), u01(0, 1);
  const double half = 15.0 * std::numbers::pi / 180.0;
  const FovCone cone = FovCone::ellipsoidal(half);
  const auto facets = FovFacets::camera_preset().facets;
  const RangeBand band{0.5, 8.0};
  using V10 = Eigen::Matrix<double, 10, 1>;
  int states = 0, checks = 0, failures = 0;
  while (states < 200) {
    const Vec5 ei = v5(pos(rng), pos(rng), pos(rng), pitch(rng), yaw(rng));
    const bool camera = states % 2 == 1;
    // Target inside the ellipsoidal cone (or below the camera) at a range inside the band.
    const double r = 0.6 + 7.0 * u01(rng);
    Vec3 dir;
    if (camera) {
      dir = Vec3(0.3 * (u01(rng) - 0.5), 0.3 * (u01(rng) - 0.5), -1).normalized();
    } else {
      const double off = half * (0.05 + 0.9 * u01(rng)), roll = 2 * std::numbers::pi * u01(rng);
      dir = Vec3(std::cos(off), std::sin(off) * std::cos(roll), std::sin(off) * std::sin(roll));
    }
    Vec5 ej = v5(0, 0, 0, pitch(rng), yaw(rng));
    ej.head<3>() = ei.head<3>() + rotation_matrix(ei(3), ei(4)).body_to_world() * (r * dir);
    if (regularity_value(ei, ej).value < 0.01) continue;
    std::vector<std::function<SmoothValue(const Vec5&, const Vec5&)>> enc = {
        [&](const Vec5& p, const Vec5& q) { return range_values(band, p, q).lower; },
        [&](const Vec5& p, const Vec5& q) { return range_values(band, p, q).upper; },
        [&](const Vec5& p, const Vec5&) { return state_value(p); },
        [&](const Vec5& p, const Vec5& q) { return regularity_value(p, q); },
    };
    if (camera) {
      for (const auto& f : facets) enc.push_back([&f](const Vec5& p, const Vec5& q) { return fov_value(f, p, q); });
    } else {
      enc.push_back([&](const Vec5& p, const Vec5& q) { return fov_value(cone, p, q); });
    }
    bool in_set = true;
    for (const auto& e : enc) in_set = in_set && e(ei, ej).value >= 0;
    if (!in_set) continue;
    ++states;
    V10 x;
    x << ei, ej;
    for (const auto& e : enc) {
      const SmoothValue sv = e(ei, ej);
      V10 g;
      g << sv.d_eta_i, sv.d_eta_j;
      const V10 fd = oracle::central_gradient<10>([&](const V10& y) { return e(y.head<5>(), y.tail<5>()).value; }, x);
      for (int c = 0; c < 10; ++c) {
        ++checks;
        failures += oracle::close_rel(g(c), fd(c), 1e-5) ? 0 : 1;
      }
    }
  }
  return {failures == 0, fmt("%d states, %d partials, %d outside 1e-5 relative", states, checks, failures)};
}

// ---- line of sight -------------------------------------------------------

Outcome los_soundness() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> pos(-4, 4), u01(0, 1), ang(-1.0, 1.0), yaw(-3.1, 3.1);
  const auto tmpl = PolytopeTemplate::tetrahedron();
  int accepted = 0, occluded = 0, unsound = 0, uncontained = 0;
  double tightest = 1e9;
  while (accepted < 200) {
    const Vec5 ei = v5(pos(rng), pos(rng), pos(rng), ang(rng), yaw(rng));
    const Vec5 ej = v5(pos(rng), pos(rng), pos(rng), ang(rng), yaw(rng));
    if (regularity_value(ei, ej).value < 0.01) continue;
    const LosCorridor corridor{100.0, 0.3 * u01(rng)};
    const Vec3 on = ei.head<3>() + u01(rng) * (ej - ei).head<3>();
    const Vec3 nudge = Vec3(u01(rng) - 0.5, u01(rng) - 0.5, u01(rng) - 0.5).normalized() * (0.05 + 0.8 * u01(rng));
    const Polytope k = instantiate(tmpl, Pose{on + nudge, ang(rng), yaw(rng)});
    const auto r = los_value(corridor, ei, ej, k);
    if (r.h < 0) {
      ++occluded;
      continue;
    }
    ++accepted;
    const auto mesh = oracle::mesh_from_halfspaces(k.A, k.b);
    const double exact = oracle::segment_mesh_distance(ei.head<3>(), ej.head<3>(), mesh);
    tightest = std::min(tightest, exact - corridor.r_los);
    unsound += exact >= corridor.r_los - 1e-6 ? 0 : 1;
    const Polytope bar = corridor.build(ei, ej);
    for (int s = 0; s < 50; ++s) {
      const double a = u01(rng);
      const Vec3 q = a * ej.head<3>() + (1 - a) * ei.head<3>();
      uncontained += (bar.A * q - bar.b).maxCoeff() <= 1e-9 * (1 + bar.b.cwiseAbs().maxCoeff()) ? 0 : 1;
    }
  }
  return {unsound == 0 && uncontained == 0,
          fmt("200 clear configurations (%d occluded rejected), min segment clearance over r_los %.3g, %d unsound, %d points outside",
              occluded, tightest, unsound, uncontained)};
}

// ---- zero input ----------------------------------------------------------

Outcome zero_input() {
  const Simulator sim(load_scenario(scenario_path("paper_sim.json")));
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> d(-0.25, 0.25), yaw(-0.12, 0.12), u01(0, 1);
  const auto base = sim.initial_states();
  const auto goals = sim.goals();
  int states = 0, rejected = 0, nonzero = 0, failed = 0;
  double largest = 0.0;
  while (states < 100) {
    auto x = base;
    const double t = u01(rng);
    for (std::size_t a = 0; a < x.size(); ++a) {
      if (sim.input_offset(static_cast<int>(a)) < 0) continue;
      x[a].head<3>() = (1 - t) * base[a].head<3>() + t * goals[a].head<3>() + Vec3(d(rng), d(rng), 0.2 * d(rng));
      x[a](4) = yaw(rng);
    }
    const auto ev = sim.evaluate(x, 0);
    if (evaluate(sim.tree(), ev.values) < 0) {
      ++rejected;
      continue;
    }
    ++states;
    const auto act = active_sets(sim.tree(), ev.values, sim.scenario().params.eps1);
    const FilterInputs in = sim.filter_inputs(x, ev, act, Eigen::VectorXd::Zero(sim.input_dim()));
    const auto sol = solve(assemble(in), in);
    if (!sol.ok()) {
      ++failed;
      continue;
    }
    largest = std::max(largest, sol.u.cwiseAbs().maxCoeff());
    nonzero += sol.u.cwiseAbs().maxCoeff() <= 1e-6 ? 0 : 1;
  }
  return {failed == 0 && nonzero == 0, fmt("100 safe states (%d unsafe samples rejected), %d failed, max |u| %.2e",
                                           rejected, failed, largest)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"forward invariance on the 10-agent scenario", forward_invariance},
      {"goal convergence within 0.3 m", goal_convergence},
      {"collision leaf counts 12/42/72/110 with growing step time", leaf_counts},
      {"dual derivative bound below the finite-difference rate", derivative_bound},
      {"distance matches analytic and sampling oracles", distance_oracle},
      {"Boolean evaluation and normalization match recursion", boolean_oracle},
      {"smooth encoder gradients match central differences", gradients},
      {"clear corridor implies a clear sight line", los_soundness},
      {"zero nominal input stays zero on the safe set", zero_input},
      {"filter bypass violates, filtered run does not", ablation},
      {"experiment layout runs safely to its goals", experiment},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s criterion %zu: %s [%s] (%.1f s)\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first,
                o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}
