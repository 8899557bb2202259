#include "distance.hpp"
#include "dynamics.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace bncbf;

namespace {

Polytope box_poly(const Vec3& lo, const Vec3& hi) {
  Polytope p;
  oracle::box_halfspaces({lo, hi}, p.A, p.b);
  return p;
}

Pose random_pose(std::mt19937_64& rng, const Vec3& center, double spread) {
  std::uniform_real_distribution<double> d(-spread, spread), th(-0.6, 0.6), ps(-3.1, 3.1);
  return {center + Vec3(d(rng), d(rng), d(rng)), th(rng), ps(rng)};
}

void check_certificate(const Polytope& a, const Polytope& b, const DistanceResult& r) {
  CHECK(r.lambda_a.minCoeff() >= 0.0);
  CHECK(r.lambda_b.minCoeff() >= 0.0);
  const Vec3 stat = a.A.transpose() * r.lambda_a + b.A.transpose() * r.lambda_b;
  CHECK(stat.norm() <= 1e-6);
  CHECK((a.A * r.witness_a - a.b).maxCoeff() <= 1e-6);
  CHECK((b.A * r.witness_b - b.b).maxCoeff() <= 1e-6);
  CHECK(std::abs((r.witness_a - r.witness_b).norm() - r.offset - r.h) <= 1e-6);
}

}  // namespace

TEST_CASE("axis-aligned cubes two apart") {
  const Polytope a = box_poly(Vec3::Zero(), Vec3::Ones());
  const Polytope b = box_poly(Vec3(3, 0, 0), Vec3(4, 1, 1));
  const auto r = min_distance(a, b);
  CHECK(r.h == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(r.witness_a.x() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(r.witness_b.x() == doctest::Approx(3.0).epsilon(1e-6));
  check_certificate(a, b, r);
}

TEST_CASE("identical cubes report minus the offset") {
  const Polytope a = box_poly(Vec3::Zero(), Vec3::Ones());
  const auto r = min_distance(a, a, 0.3);
  CHECK(r.h == doctest::Approx(-0.3).epsilon(1e-6));
  CHECK(a.contains(r.witness_a, 1e-6));
}

TEST_CASE("tetrahedra two apart agree with the feature oracle") {
  const auto t = PolytopeTemplate::tetrahedron();
  const Polytope a = instantiate(t, Pose{});
  const Polytope b = instantiate(t, Pose{Vec3(2, 0, 0), 0, 0});
  const auto r = min_distance(a, b);
  const auto ma = oracle::mesh_from_halfspaces(a.A, a.b), mb = oracle::mesh_from_halfspaces(b.A, b.b);
  CHECK(std::abs(r.h - oracle::mesh_mesh_distance(ma, mb)) < 1e-6);
  const double sampled = oracle::sampled_distance(ma, mb, 30);
  CHECK(sampled >= r.h - 1e-9);
  CHECK(sampled - r.h < 1e-3);
  check_certificate(a, b, r);
}

TEST_CASE("distance is symmetric and translation invariant") {
  std::mt19937_64 rng(3);
  const auto t = PolytopeTemplate::tetrahedron();
  for (int k = 0; k < 30; ++k) {
    const Pose pa = random_pose(rng, Vec3::Zero(), 0.5), pb = random_pose(rng, Vec3(1, 0, 0), 0.5);
    const Polytope a = instantiate(t, pa), b = instantiate(t, pb);
    const double h = min_distance(a, b).h;
    CHECK(std::abs(h - min_distance(b, a).h) < 1e-7);
    const Vec3 shift(3, -1, 2);
    const Polytope a2 = instantiate(t, Pose{pa.position + shift, pa.pitch, pa.yaw});
    const Polytope b2 = instantiate(t, Pose{pb.position + shift, pb.pitch, pb.yaw});
    CHECK(std::abs(h - min_distance(a2, b2).h) < 1e-7);
  }
}

TEST_CASE("strong duality on random pairs") {
  std::mt19937_64 rng(11);
  const auto t = PolytopeTemplate::tetrahedron();
  int separated = 0;
  for (int k = 0; k < 100; ++k) {
    const Polytope a = instantiate(t, random_pose(rng, Vec3::Zero(), 0.3));
    const Polytope b = instantiate(t, random_pose(rng, Vec3(0.9, 0.3, 0), 0.6));
    const auto r = min_distance(a, b);
    check_certificate(a, b, r);
    if (!r.normalized()) continue;
    ++separated;
    const double dual = -r.lambda_a.dot(a.b) - r.lambda_b.dot(b.b);
    CHECK(std::abs(dual - r.distance) <= 1e-5);
    CHECK(std::abs((a.A.transpose() * r.lambda_a).norm() - 1.0) <= 1e-5);
  }
  CHECK(separated > 50);
}

TEST_CASE("zero normal is rejected") {
  Polytope a = box_poly(Vec3::Zero(), Vec3::Ones());
  a.A.row(0).setZero();
  CHECK_THROWS(min_distance(a, box_poly(Vec3(3, 0, 0), Vec3(4, 1, 1))));
}

TEST_CASE("active_dual_set thresholds both multipliers") {
  DistanceResult r;
  r.lambda_a = Eigen::Vector2d(0, 0.5);
  r.lambda_b = Eigen::Vector2d(0.005, 0.9);
  const auto set = active_dual_set(r, 0.01);
  REQUIRE(set.size() == 1);
  CHECK(set[0] == std::make_pair(0, 0));
  r.lambda_a = Eigen::Vector2d(0.2, 0.5);
  CHECK(active_dual_set(r, 0.01).empty());
}

TEST_CASE("zero multipliers stay almost active under small pose changes") {
  const auto t = PolytopeTemplate::tetrahedron();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(-1e-4, 1e-4);
  const Pose pa{}, pb{Vec3(2, 0, 0), 0, 0};
  const auto r0 = min_distance(instantiate(t, pa), instantiate(t, pb));
  const auto strict = active_dual_set(r0, 1e-7);
  REQUIRE_FALSE(strict.empty());
  for (int k = 0; k < 20; ++k) {
    const Pose qa{pa.position + Vec3(d(rng), d(rng), d(rng)), d(rng), d(rng)};
    const Pose qb{pb.position + Vec3(d(rng), d(rng), d(rng)), d(rng), d(rng)};
    const auto loose = active_dual_set(min_distance(instantiate(t, qa), instantiate(t, qb)), 0.01);
    for (const auto& pr : strict) CHECK(std::find(loose.begin(), loose.end(), pr) != loose.end());
  }
}

TEST_CASE("Lagrangian rate terms") {
  const auto t = PolytopeTemplate::tetrahedron();
  const Pose pa{Vec3::Zero(), 0.1, 0.2}, pb{Vec3(1.5, 0.4, 0.1), -0.1, 0.5};
  const Polytope a = instantiate(t, pa), b = instantiate(t, pb);
  const auto r = min_distance(a, b);
  const auto terms = derivative_bound_terms(a, agent_polytope_rate(t, pa, 0), b, agent_polytope_rate(t, pb, 5), r, 0.01);
  const Eigen::VectorXd za = Eigen::VectorXd::Zero(4), zb = Eigen::VectorXd::Zero(4);

  SUBCASE("static pair") {
    CHECK(terms.evaluate(Eigen::VectorXd::Zero(10), za, zb) == 0.0);
    CHECK(terms.equality_residual(Eigen::VectorXd::Zero(10), za, zb).norm() == 0.0);
  }

  SUBCASE("affine in all decision variables") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n;
    auto rnd = [&](Eigen::Index k) {
      Eigen::VectorXd v(k);
      for (Eigen::Index i = 0; i < k; ++i) v(i) = n(rng);
      return v;
    };
    const Eigen::VectorXd u1 = rnd(10), u2 = rnd(10), a1 = rnd(4), a2 = rnd(4), b1 = rnd(4), b2 = rnd(4);
    const double s = 0.37;
    const double mixed = terms.evaluate(s * u1 + (1 - s) * u2, s * a1 + (1 - s) * a2, s * b1 + (1 - s) * b2);
    CHECK(std::abs(mixed - (s * terms.evaluate(u1, a1, b1) + (1 - s) * terms.evaluate(u2, a2, b2))) < 1e-9);
  }
}

TEST_CASE("joint translation leaves the rate at zero") {
  const auto t = PolytopeTemplate::tetrahedron();
  const Pose pa{}, pb{Vec3(1.2, 0.3, 0.0), 0, 0};
  const Polytope a = instantiate(t, pa), b = instantiate(t, pb);
  const auto r = min_distance(a, b);
  const auto terms = derivative_bound_terms(a, agent_polytope_rate(t, pa, 0), b, agent_polytope_rate(t, pb, 5), r, 0.01);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(10);
  u << 0.1, -0.05, 0.02, 0, 0, 0.1, -0.05, 0.02, 0, 0;
  CHECK(std::abs(terms.evaluate(u, Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(4))) < 1e-9);
  CHECK(terms.equality_residual(u, Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(4)).norm() < 1e-9);
}

TEST_CASE("receding body gives a positive rate bounded by the finite difference") {
  const auto t = PolytopeTemplate::tetrahedron();
  const Pose pa{}, pb{Vec3(1.0, 0.0, 0.0), 0, 0};
  const Polytope a = instantiate(t, pa), b = instantiate(t, pb);
  const auto r = min_distance(a, b);
  const Vec3 axis = (r.witness_b - r.witness_a).normalized();
  const double speed = 0.2;
  Eigen::VectorXd u = Eigen::VectorXd::Zero(10);
  u.segment<3>(5) = speed * axis;
  const auto terms = derivative_bound_terms(a, agent_polytope_rate(t, pa, 0), b, agent_polytope_rate(t, pb, 5), r, 0.01);
  const double rate = terms.evaluate(u, Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(4));
  const double dt = 1e-4;
  auto h_at = [&](double s) { return min_distance(a, instantiate(t, Pose{pb.position + s * speed * axis, 0, 0})).h; };
  const double fd = (h_at(dt) - h_at(-dt)) / (2 * dt);
  CHECK(rate > 0.0);
  CHECK(rate <= fd + 1e-4);
  const auto lb = derivative_lower_bound(terms, u);
  CHECK(lb.status == QpStatus::Optimal);
  CHECK(lb.value >= rate - 1e-9);
  CHECK(lb.value <= fd + 1e-4);
}
