#pragma once

#include <Eigen/Dense>

#include <string>

namespace bncbf {

/// Dense convex QP in the form
///
///   minimize    1/2 x'Px + q'x
///   subject to  Ax  = b
///               Gx <= h
///
/// P must be symmetric positive semidefinite; P = 0 gives an LP.
struct QpProblem {
  Eigen::MatrixXd P;
  Eigen::VectorXd q;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::MatrixXd G;
  Eigen::VectorXd h;

  /// Empty constraint blocks sized for n variables.
  static QpProblem with_variables(Eigen::Index n);
  Eigen::Index num_variables() const { return q.size(); }
};

enum class QpStatus {
  Optimal,
  PrimalInfeasible,
  DualInfeasible,
  MaxIterations,
  NumericalError,
};

const char* to_string(QpStatus status);

struct QpSettings {
  double feasibility_tol = 1e-8;
  double relative_gap_tol = 1e-9;
  double absolute_gap_tol = 1e-12;
  int max_iterations = 80;
  double regularization = 1e-11;
  int refinement_steps = 3;
};

struct QpResult {
  QpStatus status = QpStatus::NumericalError;
  Eigen::VectorXd x;
  Eigen::VectorXd y;  ///< equality multipliers
  Eigen::VectorXd z;  ///< inequality multipliers, >= 0
  double objective = 0.0;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;

  bool ok() const { return status == QpStatus::Optimal; }
};

/// Mehrotra predictor-corrector interior point method on the dense KKT system.
QpResult solve_qp(const QpProblem& problem, const QpSettings& settings = {});

}  // namespace bncbf
