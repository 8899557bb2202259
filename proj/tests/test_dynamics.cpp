#include "dynamics.hpp"

#include <doctest.h>

#include <numbers>
#include <random>

using namespace bncbf;

namespace {

Vec5 v5(double a, double b, double c, double d, double e) {
  Vec5 v;
  v << a, b, c, d, e;
  return v;
}

Vec5 euler_reference(Vec5 eta, const Vec5& nu, double T, int substeps) {
  const double h = T / substeps;
  for (int k = 0; k < substeps; ++k) eta += h * jacobian(eta) * nu;
  eta(4) = wrap_angle(eta(4));
  return eta;
}

Vec5 rk4_rollout(Vec5 eta, const Vec5& nu, double T, double dt) {
  const int n = static_cast<int>(std::lround(T / dt));
  for (int k = 0; k < n; ++k) eta = step(eta, nu, dt);
  return eta;
}

double state_error(const Vec5& a, const Vec5& b) {
  Vec5 d = a - b;
  d(4) = wrap_angle(d(4));
  return d.cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("Jacobian values") {
  CHECK(jacobian(Vec5::Zero()).isApprox(Mat5::Identity(), 1e-15));
  CHECK(jacobian(v5(0, 0, 0, std::numbers::pi / 3, 0))(4, 4) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK_THROWS_AS(jacobian(v5(0, 0, 0, std::numbers::pi / 2, 0)), DomainError);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> th(-1.4, 1.4), ps(-3.1, 3.1);
  for (int k = 0; k < 100; ++k) {
    const Mat5 J = jacobian(v5(1, 2, 3, th(rng), ps(rng)));
    CHECK((J * J.inverse() - Mat5::Identity()).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("step basics") {
  const Vec5 eta = v5(1, -2, 0.5, 0.3, 2.0);
  CHECK(step(eta, Vec5::Zero(), 0.7) == eta);
  CHECK(step(Vec5::Zero(), v5(0.1, 0, 0, 0, 0), 1.0)(0) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK_THROWS(step(eta, Vec5::Zero(), 0.0));
}

TEST_CASE("yaw wraps into (-pi, pi]") {
  const Vec5 next = step(v5(0, 0, 0, 0, 3.1), v5(0, 0, 0, 0, 0.2), 1.0);
  CHECK(next(4) <= std::numbers::pi);
  CHECK(next(4) == doctest::Approx(3.3 - 2 * std::numbers::pi));
}

TEST_CASE("RK4 agrees with a fine Euler reference") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-0.2, 0.2), th(-0.5, 0.5), ps(-3, 3);
  for (int k = 0; k < 10; ++k) {
    const Vec5 eta = v5(u(rng), u(rng), u(rng), th(rng), ps(rng));
    const Vec5 nu = v5(u(rng), u(rng), u(rng), u(rng), u(rng));
    CHECK(state_error(rk4_rollout(eta, nu, 1.0, 0.1), euler_reference(eta, nu, 1.0, 200000)) < 1e-6);
  }
}

TEST_CASE("halving the step cuts the error at least eightfold") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1), th(-0.5, 0.5);
  for (int k = 0; k < 10; ++k) {
    const Vec5 eta = v5(0, 0, 0, th(rng), u(rng));
    const Vec5 nu = v5(u(rng), u(rng), u(rng), 0.5 * u(rng), u(rng));
    const Vec5 ref = rk4_rollout(eta, nu, 2.0, 1e-3);
    const double coarse = state_error(rk4_rollout(eta, nu, 2.0, 0.4), ref);
    const double fine = state_error(rk4_rollout(eta, nu, 2.0, 0.2), ref);
    CHECK(coarse >= 8.0 * fine);
  }
}

TEST_CASE("nominal controller") {
  const Vec5 g = v5(1, 2, 0.5, 0.1, 0.4);
  CHECK(nominal_input(g, g, ActuationMask::full()) == Vec5::Zero());
  CHECK(nominal_input(Vec5::Zero(), v5(1, 0, 0, 0, 0), ActuationMask::full()) == v5(0.2, 0, 0, 0, 0));
  CHECK(nominal_input(Vec5::Zero(), v5(0.05, 0.1, 0, 0, 0), ActuationMask::full()).isApprox(v5(0.05, 0.1, 0, 0, 0)));
  // Facing +y, a goal on +y is straight ahead.
  const Vec5 nu = nominal_input(v5(0, 0, 0, 0, std::numbers::pi / 2), v5(0, 0.1, 0, 0, std::numbers::pi / 2), ActuationMask::full());
  CHECK(nu(0) == doctest::Approx(0.1));
  CHECK(std::abs(nu(1)) < 1e-12);
  // The yaw error takes the short way round.
  CHECK(nominal_input(v5(0, 0, 0, 0, 3.0), v5(0, 0, 0, 0, -3.0), ActuationMask::full())(4) > 0);
  CHECK(nominal_input(Vec5::Zero(), v5(1, 1, 1, 1, 1), ActuationMask::usv()) == v5(0.2, 0, 0, 0, 0.2));
}

TEST_CASE("masked channels stay constant along rollouts") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> d(-5, 5), ps(-1, 1);
  for (const auto& mask : {ActuationMask::usv(), ActuationMask::uuv()}) {
    Vec5 eta = v5(d(rng), d(rng), 0.5, 0.0, ps(rng));
    const Vec5 goal = v5(d(rng), d(rng), 2.0, 0.3, ps(rng));
    for (int k = 0; k < 300; ++k) {
      eta = step(eta, nominal_input(eta, goal, mask), 0.1);
      CHECK(eta(2) == 0.5);
      CHECK(eta(3) == 0.0);
    }
  }
}

TEST_CASE("closed loop without the filter converges") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(-5, 5), th(-0.5, 0.5), ps(-0.9, 0.9);
  for (int k = 0; k < 20; ++k) {
    const Vec5 goal = v5(d(rng), d(rng), d(rng), th(rng), ps(rng));
    Vec5 eta = goal + v5(d(rng), d(rng), d(rng), 0, 0);
    eta(3) = th(rng);
    eta(4) = ps(rng);
    for (int s = 0; s < 600; ++s) eta = step(eta, nominal_input(eta, goal, ActuationMask::full()), 0.1);
    CHECK(state_error(eta, goal) * std::sqrt(5.0) < 0.05);
  }
}

TEST_CASE("polytope rate matches finite differences of the moving body") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> d(-1, 1);
  const auto t = PolytopeTemplate::tetrahedron();
  for (int k = 0; k < 20; ++k) {
    const Vec5 eta = v5(d(rng), d(rng), d(rng), 0.5 * d(rng), 3 * d(rng));
    const Vec5 nu = v5(d(rng), d(rng), d(rng), d(rng), d(rng));
    const PolytopeRate rate = agent_polytope_rate(t, Pose::from_state(eta), 2);
    Eigen::MatrixXd dA = Eigen::MatrixXd::Zero(4, 3);
    Eigen::VectorXd db = Eigen::VectorXd::Zero(4);
    for (const auto& term : rate.terms) {
      dA += term.dA * nu(term.input_index - 2);
      db += term.db * nu(term.input_index - 2);
    }
    const double h = 1e-6;
    const Vec5 ed = jacobian(eta) * nu;
    const Polytope p = instantiate(t, Pose::from_state(eta + h * ed));
    const Polytope m = instantiate(t, Pose::from_state(eta - h * ed));
    CHECK(((p.A - m.A) / (2 * h) - dA).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(((p.b - m.b) / (2 * h) - db).cwiseAbs().maxCoeff() < 1e-6);
  }
}
