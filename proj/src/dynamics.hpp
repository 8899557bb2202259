#pragma once

#include "distance.hpp"
#include "geometry.hpp"

#include <array>
#include <string>

namespace bncbf {

/// Which body-velocity channels [u, v, w, q, r] an agent can actuate.
struct ActuationMask {
  std::array<bool, 5> enabled{true, true, true, true, true};

  static ActuationMask full() { return {}; }
  /// Surface vessel: surge and yaw rate only.
  static ActuationMask usv() { return {{true, false, false, false, true}}; }
  /// Underwater vehicle at constant depth and zero pitch.
  static ActuationMask uuv() { return {{true, true, false, false, true}}; }
  static ActuationMask none() { return {{false, false, false, false, false}}; }
  static ActuationMask from_name(const std::string& name);
  std::string name() const;

  Vec5 apply(const Vec5& nu) const;
};

/// Symmetric componentwise input bound; 0.2 in the marine scenarios.
inline constexpr double kDefaultInputBound = 0.2;

/// eta_dot = J(eta) nu with J = blockdiag(body-to-world rotation, 1, 1/cos(pitch)).
Mat5 jacobian(const Vec5& eta);

/// One RK4 step with nu held constant; yaw is wrapped to (-pi, pi].
Vec5 step(const Vec5& eta, const Vec5& nu, double dt);

/// Proportional inverse-kinematics controller blockdiag(R, 1, 1/cos(pitch)) (goal - eta)
/// with the yaw error wrapped, masked channels zeroed and each channel
/// saturated to [-bound, bound].
Vec5 nominal_input(const Vec5& eta, const Vec5& goal, const ActuationMask& mask,
                   double bound = kDefaultInputBound);

/// Rate of an agent polytope A(eta) = A0 R, b = b0 + A p under the kinematic
/// model; input channels map to u[input_offset + 0..4].
PolytopeRate agent_polytope_rate(const PolytopeTemplate& tmpl, const Pose& pose, int input_offset);

}  // namespace bncbf
