#pragma once

#include "geometry.hpp"
#include "qp_solver.hpp"

#include <set>
#include <utility>
#include <vector>

namespace bncbf {

class DistanceSolveError : public std::runtime_error {
 public:
  DistanceSolveError(const std::string& what, QpStatus status)
      : std::runtime_error(what), status_(status) {}
  QpStatus status() const { return status_; }

 private:
  QpStatus status_;
};

/// Below this separation the distance-normalized duals are undefined and the
/// squared-distance duals are reported unscaled.
inline constexpr double kContactDistance = 1e-9;

struct DistanceResult {
  double h = 0.0;         ///< distance - offset
  double distance = 0.0;  ///< |witness_a - witness_b|
  double offset = 0.0;
  Vec3 witness_a = Vec3::Zero();
  Vec3 witness_b = Vec3::Zero();
  /// Multipliers with lambda_a' A_a + lambda_b' A_b = 0. When distance exceeds
  /// kContactDistance they are normalized so that |A_a' lambda_a| = 1 and
  /// -lambda_a'b_a - lambda_b'b_b = distance.
  Eigen::VectorXd lambda_a;
  Eigen::VectorXd lambda_b;
  int iterations = 0;

  bool normalized() const { return distance > kContactDistance; }
};

/// Minimum distance between two polytopes via the squared-distance QP.
DistanceResult min_distance(const Polytope& a, const Polytope& b, double offset = 0.0);

/// Index pairs (k_a, k_b), zero-based, with both multipliers <= eps2.
std::vector<std::pair<int, int>> active_dual_set(const DistanceResult& result, double eps2);

/// Time derivative of a pose-dependent polytope as a linear map of the stacked
/// input vector u: A_dot = sum_c dA[c] u[index[c]], likewise b_dot.
struct PolytopeRate {
  struct Term {
    int input_index;
    Eigen::MatrixXd dA;
    Eigen::VectorXd db;
  };
  std::vector<Term> terms;
};

/// Affine pieces of the dual-Lagrangian derivative for one polytope pair,
///
///   L_dot = sum_c u_coef[c] u[index_c] + lambda_dot_a . coef_a + lambda_dot_b . coef_b
///
/// where u_coef collects lambda' (dA x* - db) at the witness points and coef
/// holds the facet slacks A x* - b,
///
/// with the stationarity-rate equality
///
///   eq_a lambda_dot_a + eq_b lambda_dot_b + sum_c eq_u[c] u[index_c] = 0
///
/// and sign constraints lambda_dot >= 0 on the almost-inactive facet indices.
struct DerivativeBoundTerms {
  Eigen::VectorXd coef_a;
  Eigen::VectorXd coef_b;
  std::vector<int> u_index;
  std::vector<double> u_coef;
  Eigen::MatrixXd eq_a;  ///< 3 x m_a
  Eigen::MatrixXd eq_b;  ///< 3 x m_b
  std::vector<Vec3> eq_u;
  std::set<int> nonneg_a;
  std::set<int> nonneg_b;

  double evaluate(const Eigen::VectorXd& u, const Eigen::VectorXd& lambda_dot_a,
                  const Eigen::VectorXd& lambda_dot_b) const;
  Vec3 equality_residual(const Eigen::VectorXd& u, const Eigen::VectorXd& lambda_dot_a,
                         const Eigen::VectorXd& lambda_dot_b) const;
};

/// Builds the affine derivative-bound terms from a solved distance problem and
/// the rates of both polytopes. Facets whose multipliers are <= eps2 (paired as
/// in active_dual_set) receive the sign constraint.
DerivativeBoundTerms derivative_bound_terms(const Polytope& a, const PolytopeRate& rate_a,
                                            const Polytope& b, const PolytopeRate& rate_b,
                                            const DistanceResult& result, double eps2);

struct LowerBound {
  QpStatus status;
  double value;
};

/// g(x, u): maximum of L_dot over the multiplier rates subject to the equality
/// and sign constraints, for a fixed input u.
LowerBound derivative_lower_bound(const DerivativeBoundTerms& terms, const Eigen::VectorXd& u);

}  // namespace bncbf
