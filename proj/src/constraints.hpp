#pragma once

#include "distance.hpp"
#include "geometry.hpp"

#include <numbers>

namespace bncbf {

class DegenerateSeparationError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class RegularityError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Value and gradient of a smooth encoder with respect to the poses of the
/// (at most two) agents it involves.
struct SmoothValue {
  double value = 0.0;
  Vec5 d_eta_i = Vec5::Zero();
  Vec5 d_eta_j = Vec5::Zero();
};

/// Second-order-cone field of view
///   h = -|A p + b| + c'p + d,   p = R(eta_i) (p_j - p_i).
/// A with zero rows gives a single affine facet c'p + d.
struct FovCone {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Vec3 c = Vec3::Zero();
  double d = 0.0;

  /// Circular cone about the body x axis with the given half angle.
  static FovCone ellipsoidal(double half_angle);
  static FovCone facet(const Vec3& normal, double offset);
};

/// Polyhedral cone as a list of affine facets, each a separate barrier leaf.
struct FovFacets {
  std::vector<FovCone> facets;

  /// Upward-looking camera cone with four facet normals.
  static FovFacets camera_preset();
};

struct RangeBand {
  double r_min = 0.5;
  double r_max = 8.0;
};

/// Slim tetrahedron over-bounding the segment between two agents.
struct LosCorridor {
  double mu = 100.0;
  double r_los = 0.0;

  Polytope build(const Vec5& eta_i, const Vec5& eta_j) const;
  /// Rate of the corridor under both agents' translational inputs. A negative
  /// offset marks an agent without inputs.
  PolytopeRate rate(const Vec5& eta_i, int offset_i, const Vec5& eta_j, int offset_j) const;
};

inline constexpr double kDefaultYawLimit = 0.3 * std::numbers::pi;
inline constexpr double kDefaultRegularityMargin = 0.001;

SmoothValue fov_value(const FovCone& cone, const Vec5& eta_i, const Vec5& eta_j);

struct RangeValues {
  SmoothValue lower;  ///< |p_j - p_i| - r_min
  SmoothValue upper;  ///< r_max - |p_j - p_i|
};
RangeValues range_values(const RangeBand& band, const Vec5& eta_i, const Vec5& eta_j);

DistanceResult collision_value(const Polytope& a, const Polytope& b, double r_ca);

/// Distance between the corridor of (i, j) and a third body k, minus r_los.
DistanceResult los_value(const LosCorridor& corridor, const Vec5& eta_i, const Vec5& eta_j, const Polytope& k);

/// yaw_limit^2 - yaw^2
SmoothValue state_value(const Vec5& eta_i, double yaw_limit = kDefaultYawLimit);

/// (x_i - x_j)^2 + (y_i - y_j)^2 - margin
SmoothValue regularity_value(const Vec5& eta_i, const Vec5& eta_j, double margin = kDefaultRegularityMargin);

}  // namespace bncbf
