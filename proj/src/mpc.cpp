#include "deeplcc/mpc.hpp"

#include <chrono>

namespace deeplcc {

MpcConfig MpcConfig::matching(const DeepLccConfig& c, DiscreteModel model) {
  MpcConfig m;
  m.T_ini = c.T_ini;
  m.N = c.N;
  m.w_v = c.w_v;
  m.w_s = c.w_s;
  m.w_u = c.w_u;
  m.s_min = c.s_min;
  m.s_max = c.s_max;
  m.a_min = c.a_min;
  m.a_max = c.a_max;
  m.eps_forecast = c.eps_forecast;
  m.tol = c.tol;
  m.max_iter = c.max_iter;
  m.model = std::move(model);
  return m;
}

void MpcConfig::validate() const {
  if (T_ini < 1 || N < 1) throw std::invalid_argument("MpcConfig: T_ini and N must be positive");
  if (w_v < 0 || w_s < 0 || w_u < 0) throw std::invalid_argument("MpcConfig: weights must be nonnegative");
  if (!(s_min < s_max) || !(a_min < a_max)) throw std::invalid_argument("MpcConfig: empty bounds");
  const auto k = model.states();
  if (k == 0 || k % 2 || model.Ad.cols() != k || model.Bd.rows() != k || model.Hd.rows() != k ||
      model.Cd.cols() != k || model.outputs() != k / 2 + model.inputs())
    throw std::invalid_argument("MpcConfig: model matrices are inconsistent");
}

namespace {

// Window outputs with zero initial state, and the state that response reaches.
struct ForcedResponse {
  Eigen::VectorXd y;
  Eigen::VectorXd x_end;
};

ForcedResponse forced_response(const DiscreteModel& model, const PastBuffer& past,
                               const Equilibrium& eq) {
  const int T = past.size(), m = past.m(), p = model.outputs();
  const Eigen::VectorXd u = past.u_ini(), e = past.eps_ini(eq.v_star);
  ForcedResponse r;
  r.y.resize(T * p);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(model.states());
  for (int k = 0; k < T; ++k) {
    r.y.segment(k * p, p) = model.Cd * x;
    x = model.Ad * x + model.Bd * u.segment(k * m, m) + model.Hd * e(k);
  }
  r.x_end = x;
  return r;
}

Eigen::MatrixXd observability_stack(const DiscreteModel& model, int T, Eigen::MatrixXd* Apow) {
  const int p = model.outputs();
  Eigen::MatrixXd O(T * p, model.states());
  Eigen::MatrixXd Ak = Eigen::MatrixXd::Identity(model.states(), model.states());
  for (int k = 0; k < T; ++k) {
    O.middleRows(k * p, p) = model.Cd * Ak;
    Ak = model.Ad * Ak;
  }
  if (Apow) *Apow = Ak;
  return O;
}

StateEstimate estimate_with(const Eigen::ColPivHouseholderQR<Eigen::MatrixXd>& qr,
                            const Eigen::MatrixXd& O, const Eigen::MatrixXd& Apow,
                            const DiscreteModel& model, const PastBuffer& past,
                            const Equilibrium& eq) {
  if (!past.warmed()) throw std::invalid_argument("MPC: past buffer is not warmed up");
  const auto fr = forced_response(model, past, eq);
  const Eigen::VectorXd rhs = past.y_ini(eq) - fr.y;
  const Eigen::VectorXd x0 = qr.solve(rhs);
  StateEstimate est;
  est.residual = (O * x0 - rhs).norm();
  est.x_hat = Apow * x0 + fr.x_end;
  return est;
}

void require_observable(const Eigen::ColPivHouseholderQR<Eigen::MatrixXd>& qr, Eigen::Index states) {
  if (qr.rank() < states)
    throw std::invalid_argument("MPC: the past window does not observe the state");
}

}  // namespace

StateEstimate estimate_initial_state(const DiscreteModel& model, const PastBuffer& past,
                                     const Equilibrium& eq) {
  if (model.outputs() != past.n() + past.m() || model.inputs() != past.m())
    throw std::invalid_argument("estimate_initial_state: model and buffer disagree");
  Eigen::MatrixXd Apow;
  const Eigen::MatrixXd O = observability_stack(model, past.size(), &Apow);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(O);
  qr.setThreshold(1e-10);
  require_observable(qr, O.cols());
  return estimate_with(qr, O, Apow, model, past, eq);
}

MpcController::MpcController(MpcConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const auto& md = cfg_.model;
  n_ = md.states() / 2;
  m_ = md.inputs();
  p_ = md.outputs();
  const int N = cfg_.N;
  const int k = md.states();

  // y(j) = C A^j x + sum_{i<j} C A^{j-1-i} (B u(i) + H eps(i)), j = 0..N-1.
  Phi_ = observability_stack(md, N, nullptr);
  Gamma_ = Eigen::MatrixXd::Zero(N * p_, N * m_);
  GammaE_ = Eigen::MatrixXd::Zero(N * p_, N);
  Eigen::MatrixXd CAB(p_, m_), CAH(p_, 1);
  Eigen::MatrixXd Ak = Eigen::MatrixXd::Identity(k, k);
  for (int lag = 1; lag < N; ++lag) {
    CAB = md.Cd * Ak * md.Bd;
    CAH = md.Cd * Ak * md.Hd;
    for (int i = 0; i + lag < N; ++i) {
      Gamma_.block((i + lag) * p_, i * m_, p_, m_) = CAB;
      GammaE_.block((i + lag) * p_, i, p_, 1) = CAH;
    }
    Ak = md.Ad * Ak;
  }

  qdiag_.resize(N * p_);
  for (int j = 0; j < N; ++j) {
    qdiag_.segment(j * p_, n_).setConstant(cfg_.w_v);
    qdiag_.segment(j * p_ + n_, m_).setConstant(cfg_.w_s);
  }
  Eigen::MatrixXd P = Gamma_.transpose() * qdiag_.asDiagonal() * Gamma_;
  P.diagonal().array() += cfg_.w_u;

  spacing_Phi_.resize(N * m_, k);
  spacing_Gamma_.resize(N * m_, N * m_);
  spacing_GammaE_.resize(N * m_, N);
  for (int j = 0; j < N; ++j)
    for (int c = 0; c < m_; ++c) {
      const int row = j * p_ + n_ + c;
      spacing_Phi_.row(j * m_ + c) = Phi_.row(row);
      spacing_Gamma_.row(j * m_ + c) = Gamma_.row(row);
      spacing_GammaE_.row(j * m_ + c) = GammaE_.row(row);
    }
  Eigen::MatrixXd Aineq(2 * N * m_, N * m_);
  Aineq << spacing_Gamma_, Eigen::MatrixXd::Identity(N * m_, N * m_);
  solver_ = std::make_shared<const qp::DenseQpSolver>(std::move(P), Eigen::MatrixXd(0, N * m_),
                                                      std::move(Aineq));

  Obs_ = observability_stack(md, cfg_.T_ini, &Apow_);
  obs_qr_.setThreshold(1e-10);
  obs_qr_.compute(Obs_);
  require_observable(obs_qr_, Obs_.cols());
}

MpcStepResult MpcController::plan_from(const Eigen::VectorXd& x_hat, const Equilibrium& eq,
                                       const Eigen::VectorXd& previous_input) const {
  if (x_hat.size() != cfg_.model.states() || static_cast<int>(eq.s_star.size()) != m_)
    throw std::invalid_argument("MpcController: state or equilibrium has the wrong size");
  const auto t0 = std::chrono::steady_clock::now();
  const int N = cfg_.N;
  const Eigen::VectorXd eps_f = Eigen::VectorXd::Constant(N, cfg_.eps_forecast);
  const Eigen::VectorXd free = Phi_ * x_hat + GammaE_ * eps_f;
  const Eigen::VectorXd q = Gamma_.transpose() * (qdiag_.asDiagonal() * free);
  const Eigen::VectorXd sfree = spacing_Phi_ * x_hat + spacing_GammaE_ * eps_f;

  Eigen::VectorXd lower(2 * N * m_), upper(2 * N * m_);
  for (int j = 0; j < N; ++j)
    for (int c = 0; c < m_; ++c) {
      lower(j * m_ + c) = cfg_.s_min - eq.s_star[c] - sfree(j * m_ + c);
      upper(j * m_ + c) = cfg_.s_max - eq.s_star[c] - sfree(j * m_ + c);
    }
  lower.tail(N * m_).setConstant(cfg_.a_min);
  upper.tail(N * m_).setConstant(cfg_.a_max);
  const auto sol = solver_->solve(q, Eigen::VectorXd(0), lower, upper,
                                  qp::Settings{cfg_.tol, cfg_.max_iter});

  MpcStepResult r;
  r.status = sol.status;
  r.plan.x_hat = x_hat;
  const Eigen::VectorXd y = free + Gamma_ * sol.x;
  r.plan.u_star.resize(N, m_);
  r.plan.y_star.resize(N, p_);
  for (int j = 0; j < N; ++j) {
    r.plan.u_star.row(j) = sol.x.segment(j * m_, m_).transpose();
    r.plan.y_star.row(j) = y.segment(j * p_, p_).transpose();
  }
  r.plan.objective = y.dot(qdiag_.asDiagonal() * y) + cfg_.w_u * sol.x.squaredNorm();
  if (sol.status == qp::Status::Optimal) {
    r.u_applied = r.plan.u_star.row(0).transpose();
  } else {
    r.feasible = false;
    r.u_applied = fallback_input(previous_input, cfg_.a_min, cfg_.a_max);
  }
  r.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

MpcStepResult MpcController::step(const PastBuffer& past, const Equilibrium& eq) const {
  if (past.T_ini() != cfg_.T_ini || past.n() != n_ || past.m() != m_)
    throw std::invalid_argument("MpcController: buffer does not match the model");
  const auto est = estimate_with(obs_qr_, Obs_, Apow_, cfg_.model, past, eq);
  auto r = plan_from(est.x_hat, eq, past.last_input());
  r.plan.estimate_residual = est.residual;
  return r;
}

MpcStepResult mpc_step(const MpcConfig& cfg, const PastBuffer& past, const Equilibrium& eq) {
  return MpcController(cfg).step(past, eq);
}

}  // namespace deeplcc
