#include "geometry.hpp"

#include "qp_solver.hpp"

#include <cmath>
#include <numbers>

namespace bncbf {

Rotation::Rotation(double pitch, double yaw) : pitch_(pitch), yaw_(yaw) {
  const double ct = std::cos(pitch), st = std::sin(pitch);
  const double cp = std::cos(yaw), sp = std::sin(yaw);
  world_to_body_ << cp * ct, sp * ct, -st,
                    -sp, cp, 0.0,
                    cp * st, sp * st, ct;
}

Mat3 Rotation::d_pitch() const {
  const double ct = std::cos(pitch_), st = std::sin(pitch_);
  const double cp = std::cos(yaw_), sp = std::sin(yaw_);
  Mat3 d;
  d << -cp * st, -sp * st, -ct,
       0.0, 0.0, 0.0,
       cp * ct, sp * ct, -st;
  return d;
}

Mat3 Rotation::d_yaw() const {
  const double ct = std::cos(pitch_), st = std::sin(pitch_);
  const double cp = std::cos(yaw_), sp = std::sin(yaw_);
  Mat3 d;
  d << -sp * ct, cp * ct, 0.0,
       -cp, -sp, 0.0,
       -sp * st, cp * st, 0.0;
  return d;
}

Rotation rotation_matrix(double pitch, double yaw) {
  if (!std::isfinite(pitch) || !std::isfinite(yaw) || std::abs(std::cos(pitch)) < 1e-9) {
    throw DomainError("rotation: pitch " + std::to_string(pitch) + " outside (-pi/2, pi/2)");
  }
  return Rotation(pitch, yaw);
}

bool Polytope::contains(const Vec3& p, double tol) const {
  return ((A * p - b).array() <= tol).all();
}

PolytopeTemplate PolytopeTemplate::tetrahedron() {
  PolytopeTemplate t;
  t.A0.resize(4, 3);
  t.A0 << 0.24, 0.84, 0.48,
          0.24, -0.84, 0.48,
          -0.97, 0.00, 0.00,
          0.24, 0.00, -0.97;
  t.b0.resize(4);
  t.b0 << 0.06, 0.06, 0.24, 0.06;
  return t;
}

PolytopeTemplate PolytopeTemplate::box(const Vec3& size) {
  if (!(size.minCoeff() > 0.0) || !size.allFinite()) throw std::invalid_argument("box: edge lengths must be positive");
  PolytopeTemplate t;
  t.A0.resize(6, 3);
  t.A0 << Mat3::Identity(), -Mat3::Identity();
  t.b0.resize(6);
  t.b0 << 0.5 * size, 0.5 * size;
  return t;
}

Polytope instantiate(const PolytopeTemplate& tmpl, const Pose& pose) {
  const Rotation rot = rotation_matrix(pose.pitch, pose.yaw);
  Polytope poly;
  poly.A = tmpl.A0 * rot.matrix();
  poly.b = tmpl.b0 + poly.A * pose.position;
  return poly;
}

ChebyshevBall chebyshev_center(const Polytope& poly) {
  if (poly.A.cols() != 3 || poly.A.rows() < 4) {
    throw std::invalid_argument("chebyshev_center: need at least 4 half-spaces in 3-D");
  }
  const Eigen::Index m = poly.num_faces();
  // Variables (c, r): maximize r s.t. a_i'c + |a_i| r <= b_i, -1e6 <= r <= 1e6.
  QpProblem lp = QpProblem::with_variables(4);
  lp.q(3) = -1.0;
  lp.G.setZero(m + 2, 4);
  lp.h.setZero(m + 2);
  lp.G.topLeftCorner(m, 3) = poly.A;
  lp.G.block(0, 3, m, 1) = poly.A.rowwise().norm();
  lp.h.head(m) = poly.b;
  lp.G(m, 3) = 1.0;
  lp.h(m) = 1e6;
  lp.G(m + 1, 3) = -1.0;
  lp.h(m + 1) = 1e6;
  const QpResult res = solve_qp(lp);
  if (!res.ok()) {
    throw EmptyPolytopeError(std::string("chebyshev_center: LP failed (") + to_string(res.status) + ")");
  }
  const double r = res.x(3);
  if (r >= 1e5) throw EmptyPolytopeError("chebyshev_center: polytope is unbounded");
  if (r <= 1e-12) throw EmptyPolytopeError("chebyshev_center: polytope has empty interior");
  return {res.x.head<3>(), r};
}

std::vector<Vec3> enumerate_vertices(const Polytope& poly, double tol) {
  std::vector<Vec3> out;
  const Eigen::Index m = poly.num_faces();
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i + 1; j < m; ++j) {
      for (Eigen::Index k = j + 1; k < m; ++k) {
        Mat3 M;
        M.row(0) = poly.A.row(i);
        M.row(1) = poly.A.row(j);
        M.row(2) = poly.A.row(k);
        Eigen::FullPivLU<Mat3> lu(M);
        if (lu.rank() < 3) continue;
        const Vec3 v = lu.solve(Vec3(poly.b(i), poly.b(j), poly.b(k)));
        if (!poly.contains(v, tol)) continue;
        bool dup = false;
        for (const auto& w : out) dup = dup || (w - v).norm() < 1e-9;
        if (!dup) out.push_back(v);
      }
    }
  }
  return out;
}

std::vector<std::string> check_regularity(const PolytopeTemplate& tmpl) {
  std::vector<std::string> problems;
  const Polytope body{tmpl.A0, tmpl.b0};
  try {
    (void)chebyshev_center(body);
  } catch (const std::exception& e) {
    problems.emplace_back(e.what());
    return problems;
  }
  for (const Vec3& v : enumerate_vertices(body)) {
    std::vector<Eigen::Index> active;
    for (Eigen::Index i = 0; i < body.num_faces(); ++i) {
      if (std::abs(body.A.row(i).dot(v) - body.b(i)) <= 1e-9) active.push_back(i);
    }
    Eigen::MatrixXd act(static_cast<Eigen::Index>(active.size()), 3);
    for (std::size_t r = 0; r < active.size(); ++r) act.row(static_cast<Eigen::Index>(r)) = body.A.row(active[r]);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(act);
    if (active.size() != 3 || lu.rank() != 3) {
      problems.push_back("vertex (" + std::to_string(v.x()) + ", " + std::to_string(v.y()) + ", " +
                         std::to_string(v.z()) + ") has " + std::to_string(active.size()) +
                         " active facets that are not linearly independent");
    }
  }
  return problems;
}

double bounding_radius(const PolytopeTemplate& tmpl) {
  double r = 0.0;
  for (const Vec3& v : enumerate_vertices(Polytope{tmpl.A0, tmpl.b0})) r = std::max(r, v.norm());
  return r;
}

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

}  // namespace bncbf
