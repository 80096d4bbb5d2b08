#pragma once

#include <memory>

#include <Eigen/Core>
#include <Eigen/QR>

#include "deeplcc/deepc.hpp"
#include "deeplcc/traffic.hpp"

namespace deeplcc {

struct MpcConfig {
  int T_ini = 20;
  int N = 50;
  double w_v = 1.0;
  double w_s = 0.5;
  double w_u = 0.1;
  double s_min = 5.0;
  double s_max = 40.0;
  double a_min = -5.0;
  double a_max = 2.0;
  double eps_forecast = 0.0;
  double tol = 1e-6;
  int max_iter = 1000;
  DiscreteModel model;

  /// Same horizons, weights and bounds as a DeeP-LCC configuration.
  static MpcConfig matching(const DeepLccConfig& c, DiscreteModel model);
  void validate() const;
};

struct StateEstimate {
  Eigen::VectorXd x_hat; // state at the current step
  double residual = 0.0; // 2-norm of the output-fit residual over the window
};

/// Least-squares fit of the state at the start of the window, rolled forward
/// through the recorded inputs. Throws std::invalid_argument if the window
/// does not observe the state.
StateEstimate estimate_initial_state(const DiscreteModel& model, const PastBuffer& past,
                                     const Equilibrium& eq);

struct MpcPlan {
  Eigen::MatrixXd u_star; // N x m
  Eigen::MatrixXd y_star; // N x (n+m)
  Eigen::VectorXd x_hat;
  double estimate_residual = 0.0;
  double objective = 0.0; // predicted cost J
};

struct MpcStepResult {
  Eigen::VectorXd u_applied;
  MpcPlan plan;
  qp::Status status = qp::Status::Optimal;
  bool feasible = true;
  double solve_seconds = 0.0;
};

/// Condensed output-feedback MPC over the input sequence; prediction
/// matrices and solver factorizations are cached.
class MpcController {
 public:
  explicit MpcController(MpcConfig cfg);

  MpcStepResult step(const PastBuffer& past, const Equilibrium& eq) const;
  /// Plan from a known current state.
  MpcStepResult plan_from(const Eigen::VectorXd& x_hat, const Equilibrium& eq,
                          const Eigen::VectorXd& previous_input) const;

  const MpcConfig& config() const { return cfg_; }

 private:
  MpcConfig cfg_;
  int n_ = 0, m_ = 0, p_ = 0;
  Eigen::MatrixXd Phi_, Gamma_, GammaE_;
  Eigen::VectorXd qdiag_;
  Eigen::MatrixXd spacing_Phi_, spacing_Gamma_, spacing_GammaE_;
  std::shared_ptr<const qp::DenseQpSolver> solver_;
  // Window estimator.
  Eigen::MatrixXd Obs_, Apow_;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> obs_qr_;
};

MpcStepResult mpc_step(const MpcConfig& cfg, const PastBuffer& past, const Equilibrium& eq);

}  // namespace deeplcc
