#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace bncbf {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec5 = Eigen::Matrix<double, 5, 1>;
using Mat5 = Eigen::Matrix<double, 5, 5>;

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class EmptyPolytopeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Absolute tolerance for half-space membership tests.
inline constexpr double kMembershipTol = 1e-9;

/// Agent pose: position plus pitch and yaw (roll is not modelled).
struct Pose {
  Vec3 position = Vec3::Zero();
  double pitch = 0.0;
  double yaw = 0.0;

  static Pose from_state(const Vec5& eta) { return {eta.head<3>(), eta(3), eta(4)}; }
  Vec5 state() const {
    Vec5 eta;
    eta << position, pitch, yaw;
    return eta;
  }
};

/// Pitch/yaw rotation. matrix() maps world-frame vectors into the body frame;
/// its transpose is the body-to-world map
///
///   [ cψcθ  -sψ  cψsθ ]
///   [ sψcθ   cψ  sψsθ ]
///   [ -sθ    0   cθ   ]
class Rotation {
 public:
  Rotation(double pitch, double yaw);

  const Mat3& matrix() const { return world_to_body_; }
  Mat3 body_to_world() const { return world_to_body_.transpose(); }
  /// Partial derivatives of matrix() with respect to pitch and yaw.
  Mat3 d_pitch() const;
  Mat3 d_yaw() const;

  double pitch() const { return pitch_; }
  double yaw() const { return yaw_; }

 private:
  double pitch_;
  double yaw_;
  Mat3 world_to_body_;
};

/// Throws DomainError when |cos(pitch)| < 1e-9.
Rotation rotation_matrix(double pitch, double yaw);

/// H-polytope {p | A p <= b}; rows of A are outward normals in the world frame.
struct Polytope {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;

  Eigen::Index num_faces() const { return b.size(); }
  bool contains(const Vec3& p, double tol = kMembershipTol) const;
};

/// Body-frame polytope that is rigidly moved by an agent pose.
struct PolytopeTemplate {
  Eigen::MatrixXd A0;
  Eigen::VectorXd b0;

  /// The tetrahedron used for every agent and obstacle in the marine scenarios.
  static PolytopeTemplate tetrahedron();
  /// Axis-aligned box of the given edge lengths centered on the body origin.
  static PolytopeTemplate box(const Vec3& size);
};

/// A = A0 R, b = b0 + A p with R the world-to-body rotation, so that a world
/// point p lies in the result iff R (p - position) lies in the template.
Polytope instantiate(const PolytopeTemplate& tmpl, const Pose& pose);

struct ChebyshevBall {
  Vec3 center;
  double radius;
};

/// Largest inscribed ball. Throws EmptyPolytopeError when the interior is empty.
ChebyshevBall chebyshev_center(const Polytope& poly);

/// Vertices from all 3-subsets of facet planes, filtered for feasibility and
/// deduplicated.
std::vector<Vec3> enumerate_vertices(const Polytope& poly, double tol = 1e-9);

/// Checks bounded, nonempty interior and that exactly three linearly independent
/// facets are active at every vertex. Returns a human-readable problem list,
/// empty when the template is regular.
std::vector<std::string> check_regularity(const PolytopeTemplate& tmpl);

/// Radius of the smallest origin-centred sphere containing the template.
double bounding_radius(const PolytopeTemplate& tmpl);

/// Wraps an angle into (-pi, pi].
double wrap_angle(double a);

}  // namespace bncbf
