#include "constraints.hpp"

#include <cmath>

namespace bncbf {

FovCone FovCone::ellipsoidal(double half_angle) {
  FovCone cone;
  cone.A.setZero(2, 3);
  cone.A(0, 1) = 1.0;
  cone.A(1, 2) = 1.0;
  cone.b.setZero(2);
  cone.c = Vec3(std::tan(half_angle), 0.0, 0.0);
  cone.d = 0.0;
  return cone;
}

FovCone FovCone::facet(const Vec3& normal, double offset) {
  FovCone cone;
  cone.A.setZero(0, 3);
  cone.b.setZero(0);
  cone.c = normal;
  cone.d = offset;
  return cone;
}

FovFacets FovFacets::camera_preset() {
  FovFacets f;
  f.facets = {
      FovCone::facet(Vec3(0.0, -0.64, -0.77), 0.0),
      FovCone::facet(Vec3(0.83, 0.0, -0.56), 0.0),
      FovCone::facet(Vec3(-0.83, 0.0, -0.56), 0.0),
      FovCone::facet(Vec3(0.0, 0.64, -0.77), 0.0),
  };
  return f;
}

namespace {

Vec3 separation(const Vec5& eta_i, const Vec5& eta_j) {
  const Vec3 delta = eta_j.head<3>() - eta_i.head<3>();
  if (delta.norm() < 1e-9) throw DegenerateSeparationError("agents are coincident");
  return delta;
}

}  // namespace

SmoothValue fov_value(const FovCone& cone, const Vec5& eta_i, const Vec5& eta_j) {
  const Vec3 delta = separation(eta_i, eta_j);
  const Rotation rot = rotation_matrix(eta_i(3), eta_i(4));
  const Vec3 p = rot.matrix() * delta;

  SmoothValue out;
  Vec3 grad_p = cone.c;
  double norm_term = 0.0;
  if (cone.A.rows() > 0) {
    const Eigen::VectorXd v = cone.A * p + cone.b;
    norm_term = v.norm();
    // On the cone axis the norm is not differentiable; 0 is in its subdifferential.
    if (norm_term > 1e-12) grad_p -= cone.A.transpose() * v / norm_term;
  }
  out.value = -norm_term + cone.c.dot(p) + cone.d;

  const Vec3 grad_delta = rot.matrix().transpose() * grad_p;
  out.d_eta_j.head<3>() = grad_delta;
  out.d_eta_i.head<3>() = -grad_delta;
  out.d_eta_i(3) = grad_p.dot(rot.d_pitch() * delta);
  out.d_eta_i(4) = grad_p.dot(rot.d_yaw() * delta);
  return out;
}

RangeValues range_values(const RangeBand& band, const Vec5& eta_i, const Vec5& eta_j) {
  const Vec3 delta = separation(eta_i, eta_j);
  const double r = delta.norm();
  const Vec3 dir = delta / r;
  RangeValues out;
  out.lower.value = r - band.r_min;
  out.lower.d_eta_j.head<3>() = dir;
  out.lower.d_eta_i.head<3>() = -dir;
  out.upper.value = band.r_max - r;
  out.upper.d_eta_j.head<3>() = -dir;
  out.upper.d_eta_i.head<3>() = dir;
  return out;
}

DistanceResult collision_value(const Polytope& a, const Polytope& b, double r_ca) {
  return min_distance(a, b, r_ca);
}

namespace {

struct CorridorFrame {
  Vec3 d;     // p_i - p_j
  Vec3 mid;   // (p_i + p_j) / 2
  double length;
  double horizontal;
  double heading;    // atan2(dy, dx), used as yaw
  double elevation;  // -atan2(dz, horizontal), used as pitch
};

CorridorFrame corridor_frame(const Vec5& eta_i, const Vec5& eta_j) {
  CorridorFrame f;
  f.d = eta_i.head<3>() - eta_j.head<3>();
  f.mid = 0.5 * (eta_i.head<3>() + eta_j.head<3>());
  const double h2 = f.d.x() * f.d.x() + f.d.y() * f.d.y();
  if (!(h2 > 1e-12)) throw RegularityError("line-of-sight corridor undefined for vertically aligned agents");
  f.horizontal = std::sqrt(h2);
  f.length = f.d.norm();
  f.heading = std::atan2(f.d.y(), f.d.x());
  f.elevation = -std::atan2(f.d.z(), f.horizontal);
  return f;
}

Eigen::Matrix<double, 4, 3> corridor_body_normals(double mu, double length) {
  Eigen::Matrix<double, 4, 3> A0;
  A0 << -1.0, 0.0, mu * length,
        1.0, 0.0, mu * length,
        0.0, -1.0, -1.0,
        0.0, 1.0, -1.0;
  return A0;
}

}  // namespace

Polytope LosCorridor::build(const Vec5& eta_i, const Vec5& eta_j) const {
  const CorridorFrame f = corridor_frame(eta_i, eta_j);
  const Rotation rot = rotation_matrix(f.elevation, f.heading);
  Polytope poly;
  poly.A = corridor_body_normals(mu, f.length) * rot.matrix();
  poly.b = poly.A * f.mid;
  poly.b(0) += 0.5 * f.length;
  poly.b(1) += 0.5 * f.length;
  return poly;
}

PolytopeRate LosCorridor::rate(const Vec5& eta_i, int offset_i, const Vec5& eta_j, int offset_j) const {
  const CorridorFrame f = corridor_frame(eta_i, eta_j);
  const Rotation rot = rotation_matrix(f.elevation, f.heading);
  const Eigen::Matrix<double, 4, 3> A0 = corridor_body_normals(mu, f.length);
  const Eigen::MatrixXd A = A0 * rot.matrix();
  Eigen::Matrix<double, 4, 3> dA0_dlength = Eigen::Matrix<double, 4, 3>::Zero();
  dA0_dlength(0, 2) = mu;
  dA0_dlength(1, 2) = mu;

  const double h = f.horizontal, L = f.length;
  const Vec3 grad_length = f.d / L;
  const Vec3 grad_heading(-f.d.y() / (h * h), f.d.x() / (h * h), 0.0);
  const Vec3 grad_atan = (h * Vec3::UnitZ() - f.d.z() * Vec3(f.d.x(), f.d.y(), 0.0) / h) / (L * L);
  const Vec3 grad_elevation = -grad_atan;

  // Corridor change for a rate of change of d and of the midpoint.
  auto term = [&](int index, const Vec3& d_dot, const Vec3& mid_dot) {
    const double length_dot = grad_length.dot(d_dot);
    const Eigen::MatrixXd dA = dA0_dlength * length_dot * rot.matrix() +
                               A0 * (rot.d_pitch() * grad_elevation.dot(d_dot) +
                                     rot.d_yaw() * grad_heading.dot(d_dot));
    Eigen::VectorXd db = dA * f.mid + A * mid_dot;
    db(0) += 0.5 * length_dot;
    db(1) += 0.5 * length_dot;
    return PolytopeRate::Term{index, dA, db};
  };

  PolytopeRate out;
  if (offset_i >= 0) {
    const Mat3 to_world = Rotation(eta_i(3), eta_i(4)).body_to_world();
    for (int c = 0; c < 3; ++c) out.terms.push_back(term(offset_i + c, to_world.col(c), 0.5 * to_world.col(c)));
  }
  if (offset_j >= 0) {
    const Mat3 to_world = Rotation(eta_j(3), eta_j(4)).body_to_world();
    for (int c = 0; c < 3; ++c) out.terms.push_back(term(offset_j + c, -to_world.col(c), 0.5 * to_world.col(c)));
  }
  return out;
}

DistanceResult los_value(const LosCorridor& corridor, const Vec5& eta_i, const Vec5& eta_j, const Polytope& k) {
  return min_distance(corridor.build(eta_i, eta_j), k, corridor.r_los);
}

SmoothValue state_value(const Vec5& eta_i, double yaw_limit) {
  SmoothValue out;
  out.value = yaw_limit * yaw_limit - eta_i(4) * eta_i(4);
  out.d_eta_i(4) = -2.0 * eta_i(4);
  return out;
}

SmoothValue regularity_value(const Vec5& eta_i, const Vec5& eta_j, double margin) {
  const double dx = eta_i(0) - eta_j(0);
  const double dy = eta_i(1) - eta_j(1);
  SmoothValue out;
  out.value = dx * dx + dy * dy - margin;
  out.d_eta_i(0) = 2.0 * dx;
  out.d_eta_i(1) = 2.0 * dy;
  out.d_eta_j(0) = -2.0 * dx;
  out.d_eta_j(1) = -2.0 * dy;
  return out;
}

}  // namespace bncbf
