#pragma once

#include "distance.hpp"
#include "qp_solver.hpp"

#include <string>
#include <vector>

namespace bncbf {

class StaleCacheError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Active smooth leaf with d/dt h = lf + lg u (lf = 0 for driftless agents).
struct SmoothConstraint {
  std::string id;
  double sign = 1.0;
  Eigen::VectorXd lg;
  double lf = 0.0;
};

/// Active distance leaf; `step` stamps the control step its duals came from.
struct NonsmoothConstraint {
  std::string id;
  DerivativeBoundTerms terms;
  long step = 0;
};

struct FilterInputs {
  Eigen::VectorXd nominal;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  Eigen::MatrixXd Q;  ///< empty means identity
  double h_g = 0.0;
  double alpha_slope = 0.2;
  long step = 0;
  std::vector<SmoothConstraint> smooth;
  std::vector<NonsmoothConstraint> nonsmooth;
};

/// Row metadata for reporting residuals.
struct FilterRow {
  std::string id;
  enum class Kind { Smooth, Derivative, Stationarity, Sign, Bound, Fixed } kind;
};

struct FilterProblem {
  QpProblem qp;
  Eigen::Index input_dim = 0;
  /// Start of each nonsmooth leaf's (lambda_dot_a, lambda_dot_b) block.
  std::vector<Eigen::Index> block_offset;
  std::vector<Eigen::Index> block_size_a;
  std::vector<Eigen::Index> block_size_b;
  std::vector<FilterRow> inequality_rows;
  std::vector<FilterRow> equality_rows;
};

enum class FilterStatus { Optimal, Relaxed, Infeasible, Failed };
const char* to_string(FilterStatus status);

struct FilterSolution {
  FilterStatus status = FilterStatus::Failed;
  Eigen::VectorXd u;
  std::vector<Eigen::VectorXd> lambda_dot_a;
  std::vector<Eigen::VectorXd> lambda_dot_b;
  double objective = 0.0;  ///< (u - u_r)' Q (u - u_r)
  Eigen::VectorXd inequality_slack;  ///< h - G x, >= 0 when satisfied
  Eigen::VectorXd equality_residual;
  int iterations = 0;

  bool ok() const { return status == FilterStatus::Optimal || status == FilterStatus::Relaxed; }
};

/// Weight on |lambda_dot|^2 that keeps the multiplier-rate block of the KKT
/// system nonsingular; small enough not to move u measurably.
inline constexpr double kLambdaDotWeight = 1e-10;

/// Throws StaleCacheError when a nonsmooth constraint was built in another step,
/// std::invalid_argument on inconsistent dimensions or a Q that is not positive definite.
FilterProblem assemble(const FilterInputs& inputs);

/// Solves, retrying once with relaxed tolerances. Never throws on solver trouble.
FilterSolution solve(const FilterProblem& problem, const FilterInputs& inputs);

struct DecreaseReport {
  bool passed = true;
  double h_now = 0.0;
  double h_next = 0.0;
  double bound = 0.0;  ///< h_now - alpha(h_now) dt - tol
};

/// One-step check h_g(next) >= h_g(now) - alpha(h_g(now)) dt - tol.
DecreaseReport verify_decrease(double h_now, double h_next, double alpha_slope, double dt, double tol = 1e-6);

}  // namespace bncbf
