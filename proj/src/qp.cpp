#include "deeplcc/qp.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

namespace deeplcc::qp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// Constraint j of the active-set problem reads sign_j * G.row(row_j) w >= bound_j.
struct OneSided {
  Eigen::Index row;
  double sign;
  double bound;
};

enum class GiResult { Optimal, Infeasible, MaxIterations };

// Goldfarb-Idnani dual active-set method for
//   minimize 0.5 w'Hw + c'w  s.t. one-sided constraints on rows of G,
// given H = L L' and J0 = L^{-T}.
class GoldfarbIdnani {
 public:
  GoldfarbIdnani(const Eigen::LLT<Eigen::MatrixXd>& chol, const Eigen::MatrixXd& J0,
                 const Eigen::MatrixXd& G, std::vector<OneSided> cons)
      : chol_(chol), G_(G), cons_(std::move(cons)), J_(J0), n_(J0.rows()) {
    R_ = Eigen::MatrixXd::Zero(n_, n_);
    active_.reserve(static_cast<std::size_t>(n_));
    mult_.reserve(static_cast<std::size_t>(n_));
    is_active_.assign(cons_.size(), false);
  }

  GiResult run(const Eigen::VectorXd& c, int max_iter, Eigen::VectorXd& w, int& iterations) {
    w = -chol_.solve(c);
    const double feas_tol = 1e-11;
    Eigen::VectorXd values;
    for (iterations = 0; iterations < max_iter; ++iterations) {
      // Most violated inactive constraint, measured relative to its scale.
      values.noalias() = G_ * w;
      Eigen::Index p = -1;
      double worst = 0.0;
      for (std::size_t j = 0; j < cons_.size(); ++j) {
        if (is_active_[j]) continue;
        const auto& cj = cons_[j];
        const double s = cj.sign * values(cj.row) - cj.bound;
        const double scale = 1.0 + std::abs(cj.bound) + std::abs(values(cj.row));
        if (s < -feas_tol * scale && s / scale < worst) {
          worst = s / scale;
          p = static_cast<Eigen::Index>(j);
        }
      }
      if (p < 0) return GiResult::Optimal;

      const OneSided& cp = cons_[static_cast<std::size_t>(p)];
      const Eigen::VectorXd np = cp.sign * G_.row(cp.row).transpose();
      double slack = np.dot(w) - cp.bound;
      double u_new = 0.0;

      for (;;) {
        const Eigen::Index q = active_size();
        const Eigen::VectorXd d = J_.transpose() * np;
        Eigen::VectorXd z = J_.rightCols(n_ - q) * d.tail(n_ - q);
        Eigen::VectorXd r;
        if (q > 0)
          r = R_.topLeftCorner(q, q).triangularView<Eigen::Upper>().solve(d.head(q));

        double t1 = kInf;
        Eigen::Index drop = -1;
        for (Eigen::Index k = 0; k < q; ++k) {
          if (r(k) > 0.0 && mult_[static_cast<std::size_t>(k)] / r(k) < t1) {
            t1 = mult_[static_cast<std::size_t>(k)] / r(k);
            drop = k;
          }
        }
        const double curvature = z.dot(np);
        const double t2 = curvature > 1e-14 * np.squaredNorm() ? -slack / curvature : kInf;
        const double t = std::min(t1, t2);
        if (!std::isfinite(t)) return GiResult::Infeasible;

        for (Eigen::Index k = 0; k < q; ++k) mult_[static_cast<std::size_t>(k)] -= t * r(k);
        u_new += t;

        if (!std::isfinite(t2)) {
          remove(drop);
          continue;
        }
        w += t * z;
        if (t == t2) {
          if (!add(d, p, u_new)) return GiResult::Infeasible;
          break;
        }
        remove(drop);
        slack = np.dot(w) - cp.bound;
      }
    }
    return GiResult::MaxIterations;
  }

  // Multipliers in the two-sided convention: y(row) > 0 for an active upper
  // bound, < 0 for an active lower bound.
  Eigen::VectorXd row_multipliers(Eigen::Index rows) const {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(rows);
    for (std::size_t k = 0; k < active_.size(); ++k) {
      const auto& c = cons_[static_cast<std::size_t>(active_[k])];
      y(c.row) -= c.sign * mult_[k];
    }
    return y;
  }

 private:
  Eigen::Index active_size() const { return static_cast<Eigen::Index>(active_.size()); }

  // Append constraint p with normal d = J'np; rotates J so that columns q+1..
  // stay orthogonal to the new normal.
  bool add(Eigen::VectorXd d, Eigen::Index p, double u) {
    const Eigen::Index q = active_size();
    for (Eigen::Index j = n_ - 1; j > q; --j) {
      const double a = d(j - 1), b = d(j);
      if (b == 0.0) continue;
      const double h = std::hypot(a, b);
      const double cc = a / h, ss = b / h;
      d(j - 1) = h;
      d(j) = 0.0;
      for (Eigen::Index k = 0; k < n_; ++k) {
        const double x1 = J_(k, j - 1), x2 = J_(k, j);
        J_(k, j - 1) = cc * x1 + ss * x2;
        J_(k, j) = -ss * x1 + cc * x2;
      }
    }
    if (q >= n_ || std::abs(d(q)) <= 1e-12 * d.head(q + 1).norm()) return false;
    R_.col(q).head(q + 1) = d.head(q + 1);
    active_.push_back(p);
    mult_.push_back(u);
    is_active_[static_cast<std::size_t>(p)] = true;
    return true;
  }

  void remove(Eigen::Index l) {
    const Eigen::Index q = active_size();
    is_active_[static_cast<std::size_t>(active_[static_cast<std::size_t>(l)])] = false;
    active_.erase(active_.begin() + l);
    mult_.erase(mult_.begin() + l);
    for (Eigen::Index j = l; j < q - 1; ++j) R_.col(j).head(q) = R_.col(j + 1).head(q);
    R_.col(q - 1).setZero();
    // Restore triangular form: R is upper Hessenberg from column l on.
    for (Eigen::Index j = l; j < q - 1; ++j) {
      const double a = R_(j, j), b = R_(j + 1, j);
      if (b == 0.0) continue;
      const double h = std::hypot(a, b);
      const double cc = a / h, ss = b / h;
      for (Eigen::Index k = j; k < q - 1; ++k) {
        const double x1 = R_(j, k), x2 = R_(j + 1, k);
        R_(j, k) = cc * x1 + ss * x2;
        R_(j + 1, k) = -ss * x1 + cc * x2;
      }
      R_(j + 1, j) = 0.0;
      for (Eigen::Index k = 0; k < n_; ++k) {
        const double x1 = J_(k, j), x2 = J_(k, j + 1);
        J_(k, j) = cc * x1 + ss * x2;
        J_(k, j + 1) = -ss * x1 + cc * x2;
      }
    }
  }

  const Eigen::LLT<Eigen::MatrixXd>& chol_;
  const Eigen::MatrixXd& G_;
  std::vector<OneSided> cons_;
  Eigen::MatrixXd J_;
  Eigen::MatrixXd R_;
  Eigen::Index n_;
  std::vector<Eigen::Index> active_;
  std::vector<double> mult_;
  std::vector<bool> is_active_;
};

}  // namespace

std::string_view to_string(Status s) {
  switch (s) {
    case Status::Optimal: return "optimal";
    case Status::Infeasible: return "infeasible";
    case Status::MaxIterations: return "max_iterations";
  }
  return "unknown";
}

void QuadProgram::validate() const {
  const Eigen::Index d = P.rows();
  if (P.cols() != d || q.size() != d) throw std::invalid_argument("QuadProgram: P/q shape mismatch");
  if (Aeq.rows() != beq.size() || (Aeq.rows() > 0 && Aeq.cols() != d))
    throw std::invalid_argument("QuadProgram: equality shape mismatch");
  if (Aineq.rows() != lower.size() || Aineq.rows() != upper.size() ||
      (Aineq.rows() > 0 && Aineq.cols() != d))
    throw std::invalid_argument("QuadProgram: inequality shape mismatch");
  const double scale = std::max(1.0, P.cwiseAbs().maxCoeff());
  if (d > 0 && (P - P.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw std::invalid_argument("QuadProgram: P is not symmetric");
  if ((lower.array() > upper.array()).any())
    throw std::invalid_argument("QuadProgram: lower bound exceeds upper bound");
}

DenseQpSolver::DenseQpSolver(Eigen::MatrixXd P, Eigen::MatrixXd Aeq, Eigen::MatrixXd Aineq)
    : P_(std::move(P)), Aeq_(std::move(Aeq)), Aineq_(std::move(Aineq)) {
  const Eigen::Index d = P_.rows();
  if (P_.cols() != d) throw std::invalid_argument("DenseQpSolver: P must be square");
  if (Aeq_.rows() > 0 && Aeq_.cols() != d) throw std::invalid_argument("DenseQpSolver: Aeq width");
  if (Aineq_.rows() > 0 && Aineq_.cols() != d) throw std::invalid_argument("DenseQpSolver: Aineq width");
  if (Aeq_.cols() != d) Aeq_.resize(0, d);
  if (Aineq_.cols() != d) Aineq_.resize(0, d);

  Eigen::MatrixXd PZ;
  if (Aeq_.rows() > 0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Aeq_.transpose());
    qr.setThreshold(1e-12);
    eq_rank_ = qr.rank();
    const Eigen::MatrixXd Q = qr.householderQ();
    Y_ = Q.leftCols(eq_rank_);
    Z_ = Q.rightCols(d - eq_rank_);
    R11_ = qr.matrixR().topLeftCorner(eq_rank_, eq_rank_).triangularView<Eigen::Upper>();
    perm_ = qr.colsPermutation();
    PZ.noalias() = P_ * Z_;
    Hreg_.noalias() = Z_.transpose() * PZ;
    Gr_.noalias() = Aineq_ * Z_;
  } else {
    eq_rank_ = 0;
    Y_.resize(d, 0);
    Z_ = Eigen::MatrixXd::Identity(d, d);
    Hreg_ = P_;
    Gr_ = Aineq_;
  }
  Hreg_ = 0.5 * (Hreg_ + Hreg_.transpose()).eval();

  const Eigen::Index nr = Hreg_.rows();
  if (nr == 0) return;
  chol_.compute(Hreg_);
  bool definite = chol_.info() == Eigen::Success;
  if (definite) {
    const Eigen::VectorXd piv = chol_.matrixLLT().diagonal().array().square();
    definite = piv.minCoeff() > 1e-12 * piv.maxCoeff();
  }
  if (!definite) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Hreg_);
    const Eigen::VectorXd& ev = es.eigenvalues();
    const double floor = 1e-9 * std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
    const Eigen::VectorXd lift = (floor - ev.array()).max(0.0).matrix();
    prox_ = es.eigenvectors() * lift.asDiagonal() * es.eigenvectors().transpose();
    Hreg_ += prox_;
    chol_.compute(Hreg_);
    if (chol_.info() != Eigen::Success)
      throw std::runtime_error("DenseQpSolver: reduced Hessian could not be regularized");
  }
  Jinit_ = chol_.matrixL().solve(Eigen::MatrixXd::Identity(nr, nr)).transpose();
}

QpSolution DenseQpSolver::solve(const Eigen::VectorXd& q, const Eigen::VectorXd& beq,
                                const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                const Settings& settings) const {
  const Eigen::Index d = P_.rows();
  if (q.size() != d || beq.size() != Aeq_.rows() || lower.size() != Aineq_.rows() ||
      upper.size() != Aineq_.rows())
    throw std::invalid_argument("DenseQpSolver::solve: vector size mismatch");
  if ((lower.array() > upper.array()).any())
    throw std::invalid_argument("DenseQpSolver::solve: lower bound exceeds upper bound");

  QpSolution sol;
  sol.eq_multipliers = Eigen::VectorXd::Zero(Aeq_.rows());
  sol.ineq_multipliers = Eigen::VectorXd::Zero(Aineq_.rows());

  // Particular solution of the equalities.
  Eigen::VectorXd xp = Eigen::VectorXd::Zero(d);
  if (eq_rank_ > 0) {
    const Eigen::VectorXd bp = perm_.transpose() * beq;
    const Eigen::VectorXd a =
        R11_.transpose().triangularView<Eigen::Lower>().solve(bp.head(eq_rank_));
    xp = Y_ * a;
  }
  if (Aeq_.rows() > 0) {
    const double eq_err = inf_norm(Aeq_ * xp - beq);
    if (eq_err > settings.tol * std::max(1.0, inf_norm(beq))) {
      sol.x = xp;
      sol.status = Status::Infeasible;
      sol.primal_residual = eq_err / std::max(1.0, inf_norm(beq));
      sol.objective = 0.5 * xp.dot(P_ * xp) + q.dot(xp);
      return sol;
    }
  }

  const Eigen::VectorXd Pxp = P_ * xp;
  const Eigen::VectorXd c = Z_.transpose() * (Pxp + q);
  const Eigen::VectorXd shift = Aineq_ * xp;

  std::vector<OneSided> cons;
  cons.reserve(static_cast<std::size_t>(2 * Aineq_.rows()));
  for (Eigen::Index i = 0; i < Aineq_.rows(); ++i) {
    if (std::isfinite(lower(i))) cons.push_back({i, 1.0, lower(i) - shift(i)});
    if (std::isfinite(upper(i))) cons.push_back({i, -1.0, shift(i) - upper(i)});
  }

  Eigen::VectorXd w = Eigen::VectorXd::Zero(Z_.cols());
  Eigen::VectorXd y_ineq = Eigen::VectorXd::Zero(Aineq_.rows());
  Status status = Status::Optimal;
  int used = 0;
  if (Z_.cols() == 0) {
    for (const auto& cj : cons)
      if (cj.bound > settings.tol * std::max(1.0, std::abs(cj.bound))) status = Status::Infeasible;
  } else {
    Eigen::VectorXd anchor = w;
    const int outer_max = prox_.size() ? settings.max_iter : 1;
    for (int outer = 0; outer < outer_max; ++outer) {
      Eigen::VectorXd ck = c;
      if (prox_.size()) ck.noalias() -= prox_ * anchor;
      GoldfarbIdnani gi(chol_, Jinit_, Gr_, cons);
      int iters = 0;
      const GiResult r = gi.run(ck, settings.max_iter, w, iters);
      used += iters;
      y_ineq = gi.row_multipliers(Aineq_.rows());
      if (r == GiResult::Infeasible) {
        status = Status::Infeasible;
        break;
      }
      if (r == GiResult::MaxIterations) {
        status = Status::MaxIterations;
        break;
      }
      if (!prox_.size()) break;
      const Eigen::VectorXd drift = prox_ * (w - anchor);
      const double grad_scale = std::max({1.0, inf_norm(c), inf_norm(Hreg_ * w)});
      anchor = w;
      if (inf_norm(drift) <= 0.1 * settings.tol * grad_scale) break;
      if (outer + 1 == outer_max) status = Status::MaxIterations;
    }
  }

  sol.x = xp + Z_ * w;
  sol.iterations = used;
  sol.ineq_multipliers = y_ineq;
  const Eigen::VectorXd Px = P_ * sol.x;
  sol.objective = 0.5 * sol.x.dot(Px) + q.dot(sol.x);

  // Equality multipliers from the least-squares stationarity condition.
  Eigen::VectorXd grad = Px + q;
  if (Aineq_.rows() > 0) grad.noalias() += Aineq_.transpose() * y_ineq;
  if (eq_rank_ > 0) {
    Eigen::VectorXd nu_perm = Eigen::VectorXd::Zero(Aeq_.rows());
    nu_perm.head(eq_rank_) =
        R11_.triangularView<Eigen::Upper>().solve(-(Y_.transpose() * grad));
    sol.eq_multipliers = perm_ * nu_perm;
  }

  // Scaled KKT residuals.
  Eigen::VectorXd Aeqx = Aeq_ * sol.x;
  Eigen::VectorXd Ax = Aineq_ * sol.x;
  double primal = Aeq_.rows() ? inf_norm(Aeqx - beq) : 0.0;
  for (Eigen::Index i = 0; i < Ax.size(); ++i)
    primal = std::max({primal, lower(i) - Ax(i), Ax(i) - upper(i)});
  const double primal_scale = std::max({1.0, inf_norm(Aeqx), inf_norm(beq), inf_norm(Ax)});
  sol.primal_residual = primal / primal_scale;

  Eigen::VectorXd Aeq_nu = Aeq_.transpose() * sol.eq_multipliers;
  Eigen::VectorXd Aineq_y = Aineq_.transpose() * y_ineq;
  const double dual = inf_norm(Px + q + Aeq_nu + Aineq_y);
  const double dual_scale =
      std::max({1.0, inf_norm(Px), inf_norm(q), inf_norm(Aeq_nu), inf_norm(Aineq_y)});
  sol.dual_residual = dual / dual_scale;

  if (status == Status::Optimal &&
      (sol.primal_residual > settings.tol || sol.dual_residual > settings.tol))
    status = Status::MaxIterations;
  sol.status = status;
  return sol;
}

QpSolution solve(const QuadProgram& prog, double tol, int max_iter) {
  prog.validate();
  DenseQpSolver solver(prog.P, prog.Aeq, prog.Aineq);
  return solver.solve(prog.q, prog.beq, prog.lower, prog.upper, Settings{tol, max_iter});
}

}  // namespace deeplcc::qp
