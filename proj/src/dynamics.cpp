#include "dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace bncbf {

ActuationMask ActuationMask::from_name(const std::string& name) {
  if (name == "full") return full();
  if (name == "usv") return usv();
  if (name == "uuv") return uuv();
  if (name == "none") return none();
  throw std::invalid_argument("unknown actuation mask '" + name + "'");
}

std::string ActuationMask::name() const {
  if (enabled == full().enabled) return "full";
  if (enabled == usv().enabled) return "usv";
  if (enabled == uuv().enabled) return "uuv";
  if (enabled == none().enabled) return "none";
  return "custom";
}

Vec5 ActuationMask::apply(const Vec5& nu) const {
  Vec5 out = nu;
  for (int i = 0; i < 5; ++i) {
    if (!enabled[static_cast<std::size_t>(i)]) out(i) = 0.0;
  }
  return out;
}

namespace {

void check_pitch(double pitch) {
  if (!std::isfinite(pitch) || std::abs(pitch) >= std::numbers::pi / 2 - 1e-6) {
    throw DomainError("pitch singularity: theta = " + std::to_string(pitch));
  }
}

}  // namespace

Mat5 jacobian(const Vec5& eta) {
  check_pitch(eta(3));
  const Rotation rot(eta(3), eta(4));
  Mat5 J = Mat5::Zero();
  J.topLeftCorner<3, 3>() = rot.body_to_world();
  J(3, 3) = 1.0;
  J(4, 4) = 1.0 / std::cos(eta(3));
  return J;
}

Vec5 step(const Vec5& eta, const Vec5& nu, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("step: dt must be positive");
  if (nu.isZero(0.0)) return eta;
  auto f = [&](const Vec5& e) -> Vec5 { return jacobian(e) * nu; };
  const Vec5 k1 = f(eta);
  const Vec5 k2 = f(eta + 0.5 * dt * k1);
  const Vec5 k3 = f(eta + 0.5 * dt * k2);
  const Vec5 k4 = f(eta + dt * k3);
  Vec5 next = eta + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  next(4) = wrap_angle(next(4));
  return next;
}

Vec5 nominal_input(const Vec5& eta, const Vec5& goal, const ActuationMask& mask, double bound) {
  check_pitch(eta(3));
  Vec5 err = goal - eta;
  err(4) = wrap_angle(err(4));
  const Rotation rot(eta(3), eta(4));
  Vec5 nu;
  nu.head<3>() = rot.matrix() * err.head<3>();
  nu(3) = err(3);
  nu(4) = err(4) / std::cos(eta(3));
  nu = mask.apply(nu);
  return nu.cwiseMax(-bound).cwiseMin(bound);
}

PolytopeRate agent_polytope_rate(const PolytopeTemplate& tmpl, const Pose& pose, int input_offset) {
  const Rotation rot = rotation_matrix(pose.pitch, pose.yaw);
  const Eigen::MatrixXd A = tmpl.A0 * rot.matrix();
  const Mat3 to_world = rot.body_to_world();
  PolytopeRate rate;
  rate.terms.reserve(5);
  for (int c = 0; c < 3; ++c) {
    // Translation only: A is unchanged, b moves with the position.
    const Vec3 p_dot = to_world.col(c);
    rate.terms.push_back({input_offset + c, Eigen::MatrixXd::Zero(A.rows(), 3), A * p_dot});
  }
  const Eigen::MatrixXd dA_pitch = tmpl.A0 * rot.d_pitch();
  rate.terms.push_back({input_offset + 3, dA_pitch, dA_pitch * pose.position});
  const Eigen::MatrixXd dA_yaw = tmpl.A0 * rot.d_yaw() / std::cos(pose.pitch);
  rate.terms.push_back({input_offset + 4, dA_yaw, dA_yaw * pose.position});
  return rate;
}

}  // namespace bncbf
