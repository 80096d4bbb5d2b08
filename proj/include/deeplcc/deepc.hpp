#pragma once

#include <deque>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "deeplcc/data.hpp"
#include "deeplcc/qp.hpp"
#include "deeplcc/traffic.hpp"

namespace deeplcc {

struct DeepLccConfig {
  int T_ini = 20;
  int N = 50;
  double w_v = 1.0;
  double w_s = 0.5;
  double w_u = 0.1;
  double lambda_g = 10.0;
  double lambda_y = 1e4;
  double s_min = 5.0;
  double s_max = 40.0;
  double a_min = -5.0;
  double a_max = 2.0;
  double eps_forecast = 0.0; // assumed future head-velocity error
  double tol = 1e-6;
  int max_iter = 1000;

  bool operator==(const DeepLccConfig&) const = default;

  /// Throws std::invalid_argument on bad values; returns advisory warnings
  /// (T_ini below 2n).
  std::vector<std::string> validate(int n) const;
};

/// Raw measurements of the last T_ini steps. Deviations are formed on read
/// against whatever equilibrium the caller supplies, so the window can be
/// re-based when the equilibrium estimate moves.
class PastBuffer {
 public:
  PastBuffer(int T_ini, int n, std::vector<int> cav_indices);

  /// Appends one sample: the input applied at that step together with the
  /// head velocity, velocities and spacings measured before it was applied.
  void push(const Eigen::VectorXd& u, double head_velocity, const Eigen::VectorXd& velocity,
            const Eigen::VectorXd& spacing);

  bool warmed() const { return static_cast<int>(u_.size()) == T_ini_; }
  int size() const { return static_cast<int>(u_.size()); }
  int T_ini() const { return T_ini_; }
  int n() const { return n_; }
  int m() const { return static_cast<int>(cav_indices_.size()); }
  const std::vector<int>& cav_indices() const { return cav_indices_; }

  // Stacked oldest-first.
  Eigen::VectorXd u_ini() const;
  Eigen::VectorXd eps_ini(double v_star) const;
  /// Per sample: velocity errors of all vehicles, then CAV spacing errors.
  Eigen::VectorXd y_ini(const Equilibrium& eq) const;
  Eigen::VectorXd head_history() const;
  Eigen::VectorXd last_input() const;

 private:
  int T_ini_;
  int n_;
  std::vector<int> cav_indices_;
  std::deque<Eigen::VectorXd> u_, v_, s_;
  std::deque<double> v0_;
};

struct EquilibriumEstimate {
  Equilibrium eq; // s_star holds one entry per CAV
  bool clamped = false;
};

/// Mean head velocity over the history; CAV spacings from the closed form
/// with `nominal` parameters. Out-of-range velocities are clamped to
/// [0.05, 0.95] v_max.
EquilibriumEstimate estimate_equilibrium(const Eigen::VectorXd& head_history, int m,
                                         const HdvParams& nominal = HdvParams::nominal());

struct DeepcDecision {
  Eigen::MatrixXd u_star; // N x m
  Eigen::MatrixXd y_star; // N x (n+m)
  Eigen::VectorXd g_star;
  Eigen::VectorXd sigma_y;
  double objective = 0.0; // realized predicted cost J
};

/// The assembled program over z = (g, sigma_y); ½z'Pz equals half the
/// DeeP-LCC cost, so the weights appear literally in P.
qp::QuadProgram assemble_qp(const HankelSet& h, const PastBuffer& past, const DeepLccConfig& cfg,
                            const Equilibrium& eq);

struct StepResult {
  Eigen::VectorXd u_applied;
  DeepcDecision decision;
  qp::Status status = qp::Status::Optimal;
  bool feasible = true; // false when the fallback input was applied
  double solve_seconds = 0.0;
};

/// Fallback when the program cannot be solved: half the previous input,
/// saturated.
Eigen::VectorXd fallback_input(const Eigen::VectorXd& previous, double a_min, double a_max);

/// Receding-horizon controller with the solver factorizations cached across
/// steps. Construction throws DatasetError if the data are not persistently
/// exciting.
class DeepLccController {
 public:
  DeepLccController(const TrajectoryDataset& ds, DeepLccConfig cfg);
  DeepLccController(HankelSet h, int n, std::vector<int> cav_indices, DeepLccConfig cfg);

  StepResult step(const PastBuffer& past, const Equilibrium& eq) const;

  const HankelSet& hankel_set() const { return h_; }
  const DeepLccConfig& config() const { return cfg_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  int decision_dim() const { return static_cast<int>(solver_->dim()); }

 private:
  void setup();

  HankelSet h_;
  int n_;
  std::vector<int> cav_indices_;
  DeepLccConfig cfg_;
  std::vector<std::string> warnings_;
  std::shared_ptr<const qp::DenseQpSolver> solver_;
  Eigen::MatrixXd spacing_rows_; // CAV spacing rows of Yf
};

/// One-shot form of DeepLccController::step.
StepResult control_step(const HankelSet& h, const PastBuffer& past, const DeepLccConfig& cfg,
                        const Equilibrium& eq);

/// Appends a new sample to a copy of the buffer.
PastBuffer update_past(PastBuffer past, const Eigen::VectorXd& u_applied, double head_velocity,
                       const Eigen::VectorXd& velocity, const Eigen::VectorXd& spacing);

struct DecisionLogRow {
  double t = 0.0;
  Eigen::VectorXd u;
  double objective = 0.0;
  double sigma_y_norm = 0.0;
  bool feasible = true;
};

void write_decision_header(std::ostream& os, int m);
void write_decision_row(std::ostream& os, const DecisionLogRow& row);

}  // namespace deeplcc
