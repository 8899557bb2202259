#include "qp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bncbf {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

QpProblem QpProblem::with_variables(Index n) {
  QpProblem p;
  p.P = MatrixXd::Zero(n, n);
  p.q = VectorXd::Zero(n);
  p.A = MatrixXd::Zero(0, n);
  p.b = VectorXd::Zero(0);
  p.G = MatrixXd::Zero(0, n);
  p.h = VectorXd::Zero(0);
  return p;
}

const char* to_string(QpStatus status) {
  switch (status) {
    case QpStatus::Optimal: return "optimal";
    case QpStatus::PrimalInfeasible: return "primal_infeasible";
    case QpStatus::DualInfeasible: return "dual_infeasible";
    case QpStatus::MaxIterations: return "max_iterations";
    case QpStatus::NumericalError: return "numerical_error";
  }
  return "unknown";
}

namespace {

double inf_norm(const VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// Largest step in (0, 1] keeping v + step * dv >= 0.
double max_step(const VectorXd& v, const VectorXd& dv) {
  double step = 1.0;
  for (Index i = 0; i < v.size(); ++i) {
    if (dv(i) < 0.0) step = std::min(step, -v(i) / dv(i));
  }
  return step;
}

class KktSystem {
 public:
  KktSystem(const QpProblem& p, const QpSettings& s) : p_(p), s_(s) {}

  // Factor [P + G'WG, A'; A, 0] with static regularization.
  bool factor(const VectorXd& w) {
    const Index n = p_.q.size();
    const Index me = p_.b.size();
    H_ = p_.P;
    if (p_.G.rows() > 0) H_.noalias() += p_.G.transpose() * w.asDiagonal() * p_.G;
    K_.setZero(n + me, n + me);
    K_.topLeftCorner(n, n) = H_;
    K_.topRightCorner(n, me) = p_.A.transpose();
    K_.bottomLeftCorner(me, n) = p_.A;
    Kreg_ = K_;
    Kreg_.topLeftCorner(n, n).diagonal().array() += s_.regularization;
    Kreg_.bottomRightCorner(me, me).diagonal().array() -= s_.regularization;
    lu_.compute(Kreg_);
    if (n + me == 0) return true;
    const VectorXd pivots = lu_.matrixLU().diagonal().cwiseAbs();
    return pivots.allFinite() && pivots.minCoeff() > 0.0;
  }

  // Solve K [dx; dy] = rhs with iterative refinement against the
  // unregularized matrix.
  VectorXd solve(const VectorXd& rhs) const {
    VectorXd sol = lu_.solve(rhs);
    for (int k = 0; k < s_.refinement_steps; ++k) {
      VectorXd r = rhs - K_ * sol;
      sol += lu_.solve(r);
    }
    return sol;
  }

 private:
  const QpProblem& p_;
  const QpSettings& s_;
  MatrixXd H_, K_, Kreg_;
  Eigen::PartialPivLU<MatrixXd> lu_;
};

void validate(const QpProblem& p) {
  const Index n = p.q.size();
  if (p.P.rows() != n || p.P.cols() != n) throw std::invalid_argument("qp: P has wrong shape");
  if (p.A.cols() != n || p.A.rows() != p.b.size()) throw std::invalid_argument("qp: A/b shape mismatch");
  if (p.G.cols() != n || p.G.rows() != p.h.size()) throw std::invalid_argument("qp: G/h shape mismatch");
}

}  // namespace

QpResult solve_qp(const QpProblem& p, const QpSettings& settings) {
  validate(p);
  const Index n = p.q.size();
  const Index me = p.b.size();
  const Index mi = p.h.size();

  QpResult res;
  VectorXd x = VectorXd::Zero(n);
  VectorXd y = VectorXd::Zero(me);
  VectorXd z = VectorXd::Ones(mi);
  VectorXd s = VectorXd::Ones(mi);

  KktSystem kkt(p, settings);

  // Starting point from the equality-constrained problem with unit barrier weights.
  if (kkt.factor(VectorXd::Ones(mi))) {
    VectorXd rhs(n + me);
    rhs.head(n) = -p.q + (mi ? VectorXd(p.G.transpose() * p.h) : VectorXd::Zero(n));
    rhs.tail(me) = p.b;
    VectorXd sol = kkt.solve(rhs);
    if (sol.allFinite()) {
      x = sol.head(n);
      if (mi) {
        VectorXd slack = p.h - p.G * x;
        double alpha_p = -slack.minCoeff();
        s = alpha_p < 0 ? slack : VectorXd(slack.array() + 1.0 + alpha_p);
        z = s.cwiseMax(1.0);
        s = s.cwiseMax(1e-2);
      }
    }
  }

  const double scale_b = 1.0 + inf_norm(p.b);
  const double scale_h = 1.0 + inf_norm(p.h);
  const double scale_q = 1.0 + inf_norm(p.q);

  for (int iter = 0; iter <= settings.max_iterations; ++iter) {
    const VectorXd Px = p.P * x;
    const VectorXd Aty = me ? VectorXd(p.A.transpose() * y) : VectorXd::Zero(n);
    const VectorXd Gtz = mi ? VectorXd(p.G.transpose() * z) : VectorXd::Zero(n);
    const VectorXd rd = Px + p.q + Aty + Gtz;
    const double scale_d = std::max({scale_q, 1.0 + inf_norm(Px), 1.0 + inf_norm(Aty), 1.0 + inf_norm(Gtz)});
    VectorXd rp = me ? VectorXd(p.A * x - p.b) : VectorXd::Zero(0);
    VectorXd ri = mi ? VectorXd(p.G * x + s - p.h) : VectorXd::Zero(0);
    const double gap = mi ? s.dot(z) : 0.0;
    const double pobj = 0.5 * x.dot(Px) + p.q.dot(x);

    res.iterations = iter;
    res.primal_residual = std::max(inf_norm(rp) / scale_b, inf_norm(ri) / scale_h);
    res.dual_residual = inf_norm(rd) / scale_d;
    res.gap = gap;

    if (!x.allFinite() || !z.allFinite() || !s.allFinite()) {
      res.status = QpStatus::NumericalError;
      break;
    }
    const bool feasible = res.primal_residual <= settings.feasibility_tol &&
                          res.dual_residual <= settings.feasibility_tol;
    const bool small_gap = gap <= settings.absolute_gap_tol ||
                           gap <= settings.relative_gap_tol * std::max(1.0, std::abs(pobj));
    if (feasible && small_gap) {
      res.status = QpStatus::Optimal;
      break;
    }

    // Infeasibility certificates, checked once iterates start to diverge.
    if (mi && inf_norm(z) > 1e8) {
      const double nrm = std::max(inf_norm(z), inf_norm(y));
      VectorXd yz_res = p.G.transpose() * (z / nrm);
      if (me) yz_res += p.A.transpose() * (y / nrm);
      const double certificate = (p.h.dot(z) + (me ? p.b.dot(y) : 0.0)) / nrm;
      if (inf_norm(yz_res) < 1e-6 && certificate < -1e-9) {
        res.status = QpStatus::PrimalInfeasible;
        break;
      }
    }
    if (inf_norm(x) > 1e8) {
      VectorXd dir = x / x.norm();
      bool unbounded = p.q.dot(dir) < -1e-9 && inf_norm(p.P * dir) < 1e-6;
      if (unbounded && me) unbounded = inf_norm(p.A * dir) < 1e-6;
      if (unbounded && mi) unbounded = (p.G * dir).maxCoeff() < 1e-6;
      if (unbounded) {
        res.status = QpStatus::DualInfeasible;
        break;
      }
    }
    if (iter == settings.max_iterations) {
      res.status = QpStatus::MaxIterations;
      if (res.primal_residual > 1e3 * settings.feasibility_tol) res.status = QpStatus::PrimalInfeasible;
      break;
    }

    VectorXd w = mi ? VectorXd(z.cwiseQuotient(s)) : VectorXd::Zero(0);
    if (!kkt.factor(w)) {
      res.status = QpStatus::NumericalError;
      break;
    }

    // Solves the Newton system for a complementarity residual rc = s.*z - target.
    auto newton = [&](const VectorXd& rc, VectorXd& dx, VectorXd& dy, VectorXd& dz, VectorXd& ds) {
      VectorXd rhs(n + me);
      VectorXd tmp = mi ? VectorXd((-rc + z.cwiseProduct(ri)).cwiseQuotient(s)) : VectorXd::Zero(0);
      rhs.head(n) = -rd;
      if (mi) rhs.head(n).noalias() -= p.G.transpose() * tmp;
      rhs.tail(me) = -rp;
      VectorXd sol = kkt.solve(rhs);
      dx = sol.head(n);
      dy = sol.tail(me);
      if (mi) {
        dz = tmp + w.cwiseProduct(p.G * dx);
        ds = -ri - p.G * dx;
      } else {
        dz.resize(0);
        ds.resize(0);
      }
    };

    VectorXd dx, dy, dz, ds;
    if (mi == 0) {
      newton(VectorXd::Zero(0), dx, dy, dz, ds);
      x += dx;
      y += dy;
      continue;
    }

    const double mu = gap / static_cast<double>(mi);
    VectorXd rc = s.cwiseProduct(z);
    newton(rc, dx, dy, dz, ds);
    const double a_aff = std::min(max_step(s, ds), max_step(z, dz));
    const double mu_aff = (s + a_aff * ds).dot(z + a_aff * dz) / static_cast<double>(mi);
    const double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);

    // Past the gap tolerance only the residuals need work; pushing s.*z further
    // toward zero makes z./s overflow the KKT matrix.
    const double target = std::max(sigma * mu, 0.1 * settings.absolute_gap_tol / static_cast<double>(mi));
    rc.array() += ds.cwiseProduct(dz).array() - target;
    newton(rc, dx, dy, dz, ds);
    const double step = std::min(1.0, 0.99 * std::min(max_step(s, ds), max_step(z, dz)));
    x += step * dx;
    y += step * dy;
    z += step * dz;
    s += step * ds;
    z = z.cwiseMax(1e-300);
    s = s.cwiseMax(1e-300);
  }

  res.x = x;
  res.y = y;
  res.z = z;
  res.objective = 0.5 * x.dot(p.P * x) + p.q.dot(x);
  return res;
}

}  // namespace bncbf
