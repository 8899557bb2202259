#include "distance.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>

namespace bncbf {

namespace {

// Deepest common point of two polytopes: maximize t s.t. A p + t <= b for both.
// Returns t* (>= 0 iff the polytopes intersect) and the point.
std::pair<double, Vec3> deepest_common_point(const Polytope& a, const Polytope& b) {
  const Eigen::Index ma = a.num_faces(), mb = b.num_faces();
  QpProblem lp = QpProblem::with_variables(4);
  lp.q(3) = -1.0;
  lp.G.setZero(ma + mb + 1, 4);
  lp.h.setZero(ma + mb + 1);
  lp.G.topLeftCorner(ma, 3) = a.A;
  lp.G.block(ma, 0, mb, 3) = b.A;
  lp.G.block(0, 3, ma + mb, 1).setOnes();
  lp.h.head(ma) = a.b;
  lp.h.segment(ma, mb) = b.b;
  lp.G(ma + mb, 3) = 1.0;
  lp.h(ma + mb) = 1.0;
  const QpResult res = solve_qp(lp);
  if (!res.ok()) return {-std::numeric_limits<double>::infinity(), Vec3::Zero()};
  return {res.x(3), res.x.head<3>()};
}


// Exhaustive active-set search for min 0.5 x'Px s.t. Gx <= h, used when the
// interior-point iterates stall (long slim corridors). Every linearly
// independent row subset of size <= n is tried; the first KKT point with
// feasible x and nonnegative multipliers is optimal.
bool active_set_search(const QpProblem& qp, QpResult& out) {
  const Eigen::Index n = qp.q.size(), m = qp.h.size();
  if (m > 16) return false;
  const double tol = 1e-9 * (1.0 + qp.h.cwiseAbs().maxCoeff());
  std::vector<int> rows;
  bool found = false;
  std::function<void(int)> extend = [&](int next) {
    if (found) return;
    const Eigen::Index k = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd Gs(k, n);
    Eigen::VectorXd hs(k);
    for (Eigen::Index r = 0; r < k; ++r) {
      Gs.row(r) = qp.G.row(rows[static_cast<std::size_t>(r)]);
      hs(r) = qp.h(rows[static_cast<std::size_t>(r)]);
    }
    if (k > 0 && Eigen::FullPivLU<Eigen::MatrixXd>(Gs).rank() < k) return;
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + k, n + k);
    K.topLeftCorner(n, n) = qp.P;
    K.topRightCorner(n, k) = Gs.transpose();
    K.bottomLeftCorner(k, n) = Gs;
    Eigen::VectorXd rhs(n + k);
    rhs << -qp.q, hs;
    const Eigen::VectorXd sol = K.completeOrthogonalDecomposition().solve(rhs);
    if ((K * sol - rhs).cwiseAbs().maxCoeff() <= tol && (qp.G * sol.head(n) - qp.h).maxCoeff() <= tol &&
        (k == 0 || sol.tail(k).minCoeff() >= -tol)) {
      out.x = sol.head(n);
      out.z = Eigen::VectorXd::Zero(m);
      for (Eigen::Index r = 0; r < k; ++r) out.z(rows[static_cast<std::size_t>(r)]) = std::max(0.0, sol(n + r));
      out.y.resize(0);
      out.objective = 0.5 * out.x.dot(qp.P * out.x) + qp.q.dot(out.x);
      out.status = QpStatus::Optimal;
      found = true;
      return;
    }
    if (k == n) return;
    for (int r = next; r < m && !found; ++r) {
      rows.push_back(r);
      extend(r + 1);
      rows.pop_back();
    }
  };
  extend(0);
  return found;
}

}  // namespace

DistanceResult min_distance(const Polytope& a, const Polytope& b, double offset) {
  const Eigen::Index ma = a.num_faces(), mb = b.num_faces();
  QpProblem qp = QpProblem::with_variables(6);
  const Mat3 I = Mat3::Identity();
  qp.P.topLeftCorner<3, 3>() = 2.0 * I;
  qp.P.bottomRightCorner<3, 3>() = 2.0 * I;
  qp.P.topRightCorner<3, 3>() = -2.0 * I;
  qp.P.bottomLeftCorner<3, 3>() = -2.0 * I;
  // Unit-norm rows; slim corridors otherwise leave the KKT system badly scaled.
  Eigen::VectorXd row_norm(ma + mb);
  row_norm << a.A.rowwise().norm(), b.A.rowwise().norm();
  if (!(row_norm.minCoeff() > 0.0)) throw std::invalid_argument("min_distance: zero face normal");
  qp.G.setZero(ma + mb, 6);
  qp.G.topLeftCorner(ma, 3) = a.A;
  qp.G.bottomRightCorner(mb, 3) = b.A;
  qp.h.resize(ma + mb);
  qp.h << a.b, b.b;
  qp.G = row_norm.cwiseInverse().asDiagonal() * qp.G;
  qp.h = qp.h.cwiseQuotient(row_norm);

  QpResult res = solve_qp(qp);
  if (!res.ok() && !active_set_search(qp, res)) {
    throw DistanceSolveError(std::string("min_distance: solver status ") + to_string(res.status), res.status);
  }

  DistanceResult out;
  out.offset = offset;
  out.iterations = res.iterations;
  out.witness_a = res.x.head<3>();
  out.witness_b = res.x.tail<3>();
  out.distance = (out.witness_a - out.witness_b).norm();
  const Eigen::VectorXd z = res.z.cwiseQuotient(row_norm);
  Eigen::VectorXd mu_a = z.head(ma);
  Eigen::VectorXd mu_b = z.tail(mb);

  if (res.objective < 1e-8) {
    // Interior-point iterates stall at O(sqrt(gap)) separation for touching or
    // overlapping bodies; settle contact with an LP.
    const auto [depth, point] = deepest_common_point(a, b);
    if (depth >= -1e-10) {
      out.witness_a = out.witness_b = point;
      out.distance = 0.0;
      mu_a.setZero();
      mu_b.setZero();
    }
  }

  if (out.normalized()) {
    const double scale = 1.0 / (2.0 * out.distance);
    out.lambda_a = mu_a * scale;
    out.lambda_b = mu_b * scale;
  } else {
    out.lambda_a = mu_a;
    out.lambda_b = mu_b;
  }
  out.h = out.distance - offset;
  return out;
}

std::vector<std::pair<int, int>> active_dual_set(const DistanceResult& result, double eps2) {
  std::vector<std::pair<int, int>> pairs;
  for (Eigen::Index i = 0; i < result.lambda_a.size(); ++i) {
    if (result.lambda_a(i) > eps2) continue;
    for (Eigen::Index j = 0; j < result.lambda_b.size(); ++j) {
      if (result.lambda_b(j) <= eps2) pairs.emplace_back(static_cast<int>(i), static_cast<int>(j));
    }
  }
  return pairs;
}

double DerivativeBoundTerms::evaluate(const Eigen::VectorXd& u, const Eigen::VectorXd& lambda_dot_a,
                                      const Eigen::VectorXd& lambda_dot_b) const {
  double v = coef_a.dot(lambda_dot_a) + coef_b.dot(lambda_dot_b);
  for (std::size_t c = 0; c < u_index.size(); ++c) v += u_coef[c] * u(u_index[c]);
  return v;
}

Vec3 DerivativeBoundTerms::equality_residual(const Eigen::VectorXd& u, const Eigen::VectorXd& lambda_dot_a,
                                             const Eigen::VectorXd& lambda_dot_b) const {
  Vec3 r = eq_a * lambda_dot_a + eq_b * lambda_dot_b;
  for (std::size_t c = 0; c < u_index.size(); ++c) r += eq_u[c] * u(u_index[c]);
  return r;
}

DerivativeBoundTerms derivative_bound_terms(const Polytope& a, const PolytopeRate& rate_a,
                                            const Polytope& b, const PolytopeRate& rate_b,
                                            const DistanceResult& result, double eps2) {
  if (!(eps2 > 0.0)) throw std::invalid_argument("derivative_bound_terms: eps2 must be positive");
  const Eigen::VectorXd& la = result.lambda_a;
  const Eigen::VectorXd& lb = result.lambda_b;
  if (la.size() != a.num_faces() || lb.size() != b.num_faces()) {
    throw std::invalid_argument("derivative_bound_terms: multipliers do not match the polytopes");
  }

  DerivativeBoundTerms t;
  for (const auto& [ka, kb] : active_dual_set(result, eps2)) {
    t.nonneg_a.insert(ka);
    t.nonneg_b.insert(kb);
  }

  // Slack form of the Lagrangian rate. Facets with a free multiplier rate are
  // active, so their slack is zero up to solver accuracy; pinning it keeps the
  // rate LP bounded when the duals are not unique.
  auto slack = [](const Polytope& p, const Vec3& x, const std::set<int>& constrained) {
    Eigen::VectorXd r = p.A * x - p.b;
    for (Eigen::Index k = 0; k < r.size(); ++k) {
      r(k) = constrained.count(static_cast<int>(k)) ? std::min(r(k), 0.0) : 0.0;
    }
    return r;
  };
  t.coef_a = slack(a, result.witness_a, t.nonneg_a);
  t.coef_b = slack(b, result.witness_b, t.nonneg_b);
  t.eq_a = a.A.transpose();
  t.eq_b = b.A.transpose();

  std::map<int, std::pair<double, Vec3>> per_input;
  auto add = [&](const PolytopeRate& rate, const Eigen::VectorXd& lambda, const Vec3& x) {
    for (const auto& term : rate.terms) {
      auto& [coef, eq] = per_input.try_emplace(term.input_index, 0.0, Vec3::Zero()).first->second;
      coef += lambda.dot(term.dA * x - term.db);
      eq += term.dA.transpose() * lambda;
    }
  };
  add(rate_a, la, result.witness_a);
  add(rate_b, lb, result.witness_b);
  for (const auto& [idx, ce] : per_input) {
    t.u_index.push_back(idx);
    t.u_coef.push_back(ce.first);
    t.eq_u.push_back(ce.second);
  }
  return t;
}

LowerBound derivative_lower_bound(const DerivativeBoundTerms& t, const Eigen::VectorXd& u) {
  const Eigen::Index ma = t.coef_a.size(), mb = t.coef_b.size();
  QpProblem lp = QpProblem::with_variables(ma + mb);
  lp.q << -t.coef_a, -t.coef_b;
  lp.A.resize(3, ma + mb);
  lp.A << t.eq_a, t.eq_b;
  lp.b = -t.equality_residual(u, Eigen::VectorXd::Zero(ma), Eigen::VectorXd::Zero(mb));
  const Eigen::Index nn = static_cast<Eigen::Index>(t.nonneg_a.size() + t.nonneg_b.size());
  lp.G.setZero(nn, ma + mb);
  lp.h.setZero(nn);
  Eigen::Index row = 0;
  for (int k : t.nonneg_a) lp.G(row++, k) = -1.0;
  for (int k : t.nonneg_b) lp.G(row++, ma + k) = -1.0;

  const QpResult res = solve_qp(lp);
  if (res.status == QpStatus::DualInfeasible) return {res.status, std::numeric_limits<double>::infinity()};
  if (!res.ok()) return {res.status, std::numeric_limits<double>::quiet_NaN()};
  return {res.status, t.evaluate(u, res.x.head(ma), res.x.tail(mb))};
}

}  // namespace bncbf
