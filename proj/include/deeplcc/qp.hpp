#pragma once

#include <string_view>

#include <Eigen/Core>
#include <Eigen/Cholesky>

namespace deeplcc::qp {

/// minimize 0.5 x'Px + q'x  s.t.  Aeq x = beq,  lower <= Aineq x <= upper.
/// Infinite bounds are allowed.
struct QuadProgram {
  Eigen::MatrixXd P;
  Eigen::VectorXd q;
  Eigen::MatrixXd Aeq;
  Eigen::VectorXd beq;
  Eigen::MatrixXd Aineq;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  Eigen::Index dim() const { return P.rows(); }
  /// Throws std::invalid_argument on shape errors, asymmetric P or lower > upper.
  void validate() const;
};

enum class Status { Optimal, Infeasible, MaxIterations };

std::string_view to_string(Status s);

struct QpSolution {
  Eigen::VectorXd x;
  double objective = 0.0;
  Status status = Status::MaxIterations;
  // Scaled KKT residuals (infinity norms relative to the magnitude of the
  // terms they balance, floored at 1).
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int iterations = 0;
  Eigen::VectorXd eq_multipliers;
  Eigen::VectorXd ineq_multipliers; // positive on an active upper bound, negative on a lower one
};

struct Settings {
  double tol = 1e-6;
  int max_iter = 1000;
};

/// Dense solver for a fixed (P, Aeq, Aineq). The equality constraints are
/// eliminated with a null-space basis and the reduced problem is solved by the
/// Goldfarb-Idnani dual active-set method. A semidefinite reduced Hessian is
/// lifted by proximal terms on its near-null eigenspace and refined by
/// proximal-point iterations. All factorizations happen here, so repeated
/// solves with new (q, beq, lower, upper) only pay for the active-set work.
class DenseQpSolver {
 public:
  DenseQpSolver(Eigen::MatrixXd P, Eigen::MatrixXd Aeq, Eigen::MatrixXd Aineq);

  QpSolution solve(const Eigen::VectorXd& q, const Eigen::VectorXd& beq,
                   const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                   const Settings& settings = {}) const;

  Eigen::Index dim() const { return P_.rows(); }
  Eigen::Index reduced_dim() const { return Z_.cols(); }
  bool semidefinite() const { return prox_.size() > 0; }

 private:
  Eigen::MatrixXd P_, Aeq_, Aineq_;
  // Equality elimination: x = Y a + Z w.
  Eigen::MatrixXd Y_, Z_, R11_;
  Eigen::PermutationMatrix<Eigen::Dynamic> perm_;
  Eigen::Index eq_rank_ = 0;
  // Reduced problem.
  Eigen::MatrixXd Hreg_;       // Z'PZ plus proximal lift
  Eigen::MatrixXd prox_;       // proximal lift (empty when Z'PZ is definite)
  Eigen::MatrixXd Jinit_;      // inverse transpose of the Cholesky factor
  Eigen::LLT<Eigen::MatrixXd> chol_;
  Eigen::MatrixXd Gr_;         // Aineq Z
};

/// One-shot convenience wrapper.
QpSolution solve(const QuadProgram& prog, double tol = 1e-6, int max_iter = 1000);

}  // namespace deeplcc::qp
