#include "filter.hpp"

namespace bncbf {

const char* to_string(FilterStatus status) {
  switch (status) {
    case FilterStatus::Optimal: return "optimal";
    case FilterStatus::Relaxed: return "relaxed";
    case FilterStatus::Infeasible: return "infeasible";
    case FilterStatus::Failed: return "failed";
  }
  return "unknown";
}

namespace {

Eigen::MatrixXd weight_matrix(const FilterInputs& in) {
  const Eigen::Index n = in.nominal.size();
  if (in.Q.size() == 0) return Eigen::MatrixXd::Identity(n, n);
  if (in.Q.rows() != n || in.Q.cols() != n) throw std::invalid_argument("filter: Q has the wrong size");
  if (!in.Q.isApprox(in.Q.transpose(), 1e-12)) throw std::invalid_argument("filter: Q is not symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(in.Q);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("filter: Q is not positive definite");
  return in.Q;
}

}  // namespace

FilterProblem assemble(const FilterInputs& in) {
  const Eigen::Index n = in.nominal.size();
  if (in.lower.size() != n || in.upper.size() != n) throw std::invalid_argument("filter: bound size mismatch");
  if ((in.lower.array() > in.upper.array()).any()) throw std::invalid_argument("filter: lower bound above upper bound");
  const Eigen::MatrixXd Q = weight_matrix(in);
  const double alpha = in.alpha_slope * in.h_g;

  FilterProblem fp;
  fp.input_dim = n;
  Eigen::Index nvar = n;
  Eigen::Index n_sign = 0;
  for (const auto& c : in.nonsmooth) {
    if (c.step != in.step) {
      throw StaleCacheError("filter: distance data for '" + c.id + "' is from step " + std::to_string(c.step) +
                            ", expected " + std::to_string(in.step));
    }
    fp.block_offset.push_back(nvar);
    fp.block_size_a.push_back(c.terms.coef_a.size());
    fp.block_size_b.push_back(c.terms.coef_b.size());
    nvar += c.terms.coef_a.size() + c.terms.coef_b.size();
    n_sign += static_cast<Eigen::Index>(c.terms.nonneg_a.size() + c.terms.nonneg_b.size());
  }
  for (const auto& c : in.smooth) {
    if (c.lg.size() != n) throw std::invalid_argument("filter: gradient size mismatch for '" + c.id + "'");
  }

  Eigen::Index n_fixed = 0;
  for (Eigen::Index k = 0; k < n; ++k) n_fixed += in.lower(k) == in.upper(k) ? 1 : 0;
  const Eigen::Index n_box = 2 * (n - n_fixed);
  const Eigen::Index n_ineq = static_cast<Eigen::Index>(in.smooth.size() + in.nonsmooth.size()) + n_sign + n_box;
  const Eigen::Index n_eq = 3 * static_cast<Eigen::Index>(in.nonsmooth.size()) + n_fixed;

  QpProblem& qp = fp.qp;
  qp = QpProblem::with_variables(nvar);
  qp.P.topLeftCorner(n, n) = 2.0 * Q;
  for (Eigen::Index k = n; k < nvar; ++k) qp.P(k, k) = 2.0 * kLambdaDotWeight;
  qp.q.head(n) = -2.0 * Q * in.nominal;
  qp.G.setZero(n_ineq, nvar);
  qp.h.setZero(n_ineq);
  qp.A.setZero(n_eq, nvar);
  qp.b.setZero(n_eq);

  Eigen::Index row = 0;
  for (const auto& c : in.smooth) {
    qp.G.row(row).head(n) = -c.sign * c.lg.transpose();
    qp.h(row) = alpha + c.sign * c.lf;
    fp.inequality_rows.push_back({c.id, FilterRow::Kind::Smooth});
    ++row;
  }
  Eigen::Index eq_row = 0;
  for (std::size_t j = 0; j < in.nonsmooth.size(); ++j) {
    const auto& t = in.nonsmooth[j].terms;
    const std::string& id = in.nonsmooth[j].id;
    const Eigen::Index off = fp.block_offset[j];
    const Eigen::Index ma = t.coef_a.size(), mb = t.coef_b.size();

    for (std::size_t c = 0; c < t.u_index.size(); ++c) {
      const int ui = t.u_index[c];
      if (ui < 0 || ui >= n) throw std::invalid_argument("filter: input index out of range for '" + id + "'");
      qp.G(row, ui) -= t.u_coef[c];
      qp.A.block(eq_row, ui, 3, 1) += t.eq_u[c];
    }
    qp.G.block(row, off, 1, ma) = -t.coef_a.transpose();
    qp.G.block(row, off + ma, 1, mb) = -t.coef_b.transpose();
    qp.h(row) = alpha;
    fp.inequality_rows.push_back({id, FilterRow::Kind::Derivative});
    ++row;

    qp.A.block(eq_row, off, 3, ma) = t.eq_a;
    qp.A.block(eq_row, off + ma, 3, mb) = t.eq_b;
    for (int r = 0; r < 3; ++r) fp.equality_rows.push_back({id, FilterRow::Kind::Stationarity});
    eq_row += 3;

    for (int k : t.nonneg_a) {
      qp.G(row, off + k) = -1.0;
      fp.inequality_rows.push_back({id, FilterRow::Kind::Sign});
      ++row;
    }
    for (int k : t.nonneg_b) {
      qp.G(row, off + ma + k) = -1.0;
      fp.inequality_rows.push_back({id, FilterRow::Kind::Sign});
      ++row;
    }
  }
  for (Eigen::Index k = 0; k < n; ++k) {
    const std::string id = "u[" + std::to_string(k) + "]";
    if (in.lower(k) == in.upper(k)) {
      qp.A(eq_row, k) = 1.0;
      qp.b(eq_row) = in.lower(k);
      fp.equality_rows.push_back({id, FilterRow::Kind::Fixed});
      ++eq_row;
      continue;
    }
    qp.G(row, k) = 1.0;
    qp.h(row) = in.upper(k);
    fp.inequality_rows.push_back({id, FilterRow::Kind::Bound});
    ++row;
    qp.G(row, k) = -1.0;
    qp.h(row) = -in.lower(k);
    fp.inequality_rows.push_back({id, FilterRow::Kind::Bound});
    ++row;
  }
  return fp;
}

FilterSolution solve(const FilterProblem& fp, const FilterInputs& in) {
  FilterSolution sol;
  QpResult res = solve_qp(fp.qp);
  sol.status = FilterStatus::Optimal;
  if (!res.ok()) {
    QpSettings relaxed;
    relaxed.feasibility_tol = 1e-6;
    relaxed.relative_gap_tol = 1e-7;
    relaxed.absolute_gap_tol = 1e-9;
    relaxed.max_iterations = 200;
    relaxed.regularization = 1e-9;
    const int first = res.iterations;
    res = solve_qp(fp.qp, relaxed);
    res.iterations += first;
    if (res.ok()) {
      sol.status = FilterStatus::Relaxed;
    } else {
      sol.status = res.status == QpStatus::PrimalInfeasible ? FilterStatus::Infeasible : FilterStatus::Failed;
    }
  }
  sol.iterations = res.iterations;
  if (!sol.ok()) return sol;

  const Eigen::Index n = fp.input_dim;
  // Interior iterates stop short of a nominal that sits on a bound; when the
  // nominal is feasible with the solved multiplier rates it is the minimizer.
  Eigen::VectorXd snapped = res.x;
  snapped.head(n) = in.nominal;
  const bool nominal_feasible =
      (fp.qp.G.rows() == 0 || (fp.qp.G * snapped - fp.qp.h).maxCoeff() <= 1e-9) &&
      (fp.qp.A.rows() == 0 || (fp.qp.A * snapped - fp.qp.b).cwiseAbs().maxCoeff() <= 1e-9);
  if (nominal_feasible) res.x = snapped;
  sol.u = res.x.head(n);
  for (std::size_t j = 0; j < fp.block_offset.size(); ++j) {
    sol.lambda_dot_a.push_back(res.x.segment(fp.block_offset[j], fp.block_size_a[j]));
    sol.lambda_dot_b.push_back(res.x.segment(fp.block_offset[j] + fp.block_size_a[j], fp.block_size_b[j]));
  }
  const Eigen::VectorXd dev = sol.u - in.nominal;
  sol.objective = in.Q.size() == 0 ? dev.squaredNorm() : dev.dot(in.Q * dev);
  sol.inequality_slack = fp.qp.h - fp.qp.G * res.x;
  sol.equality_residual = fp.qp.A * res.x - fp.qp.b;
  return sol;
}

DecreaseReport verify_decrease(double h_now, double h_next, double alpha_slope, double dt, double tol) {
  DecreaseReport r;
  r.h_now = h_now;
  r.h_next = h_next;
  r.bound = h_now - alpha_slope * h_now * dt - tol;
  r.passed = h_next >= r.bound;
  return r;
}

}  // namespace bncbf
