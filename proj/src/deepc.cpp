#include "deeplcc/deepc.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <numeric>

namespace deeplcc {

std::vector<std::string> DeepLccConfig::validate(int n) const {
  if (T_ini < 1 || N < 1) throw std::invalid_argument("DeepLccConfig: T_ini and N must be positive");
  if (w_v < 0 || w_s < 0 || w_u < 0 || lambda_g < 0)
    throw std::invalid_argument("DeepLccConfig: weights must be nonnegative");
  if (!(lambda_y > 0)) throw std::invalid_argument("DeepLccConfig: lambda_y must be positive");
  if (!(s_min < s_max)) throw std::invalid_argument("DeepLccConfig: s_min must be below s_max");
  if (!(a_min < a_max)) throw std::invalid_argument("DeepLccConfig: a_min must be below a_max");
  if (a_min > 0 || a_max < 0) throw std::invalid_argument("DeepLccConfig: zero input must lie in [a_min, a_max]");
  if (!(tol > 0) || max_iter < 1) throw std::invalid_argument("DeepLccConfig: bad solver settings");
  std::vector<std::string> warnings;
  if (T_ini < 2 * n)
    warnings.push_back("T_ini = " + std::to_string(T_ini) + " is below 2n = " +
                       std::to_string(2 * n) + "; the initial condition may not be unique");
  return warnings;
}

PastBuffer::PastBuffer(int T_ini, int n, std::vector<int> cav_indices)
    : T_ini_(T_ini), n_(n), cav_indices_(std::move(cav_indices)) {
  if (T_ini < 1 || n < 1) throw std::invalid_argument("PastBuffer: T_ini and n must be positive");
}

void PastBuffer::push(const Eigen::VectorXd& u, double head_velocity,
                      const Eigen::VectorXd& velocity, const Eigen::VectorXd& spacing) {
  if (u.size() != m() || velocity.size() != n_ || spacing.size() != n_)
    throw std::invalid_argument("PastBuffer::push: dimension mismatch");
  Eigen::VectorXd s(m());
  for (int k = 0; k < m(); ++k) s(k) = spacing(cav_indices_[k] - 1);
  u_.push_back(u);
  v0_.push_back(head_velocity);
  v_.push_back(velocity);
  s_.push_back(s);
  if (static_cast<int>(u_.size()) > T_ini_) {
    u_.pop_front();
    v0_.pop_front();
    v_.pop_front();
    s_.pop_front();
  }
}

Eigen::VectorXd PastBuffer::u_ini() const {
  Eigen::VectorXd out(size() * m());
  for (int t = 0; t < size(); ++t) out.segment(t * m(), m()) = u_[t];
  return out;
}

Eigen::VectorXd PastBuffer::eps_ini(double v_star) const {
  return head_history().array() - v_star;
}

Eigen::VectorXd PastBuffer::y_ini(const Equilibrium& eq) const {
  if (static_cast<int>(eq.s_star.size()) != m())
    throw std::invalid_argument("PastBuffer::y_ini: need one s_star per CAV");
  const int p = n_ + m();
  Eigen::VectorXd out(size() * p);
  for (int t = 0; t < size(); ++t) {
    out.segment(t * p, n_) = v_[t].array() - eq.v_star;
    for (int k = 0; k < m(); ++k) out(t * p + n_ + k) = s_[t](k) - eq.s_star[k];
  }
  return out;
}

Eigen::VectorXd PastBuffer::head_history() const {
  Eigen::VectorXd out(size());
  for (int t = 0; t < size(); ++t) out(t) = v0_[t];
  return out;
}

Eigen::VectorXd PastBuffer::last_input() const {
  return u_.empty() ? Eigen::VectorXd::Zero(m()) : u_.back();
}

EquilibriumEstimate estimate_equilibrium(const Eigen::VectorXd& head_history, int m,
                                         const HdvParams& nominal) {
  if (head_history.size() == 0) throw std::invalid_argument("estimate_equilibrium: empty history");
  EquilibriumEstimate est;
  double v = head_history.mean();
  const double lo = 0.05 * nominal.v_max, hi = 0.95 * nominal.v_max;
  if (!(v > 0.0 && v < nominal.v_max)) {
    v = std::clamp(v, lo, hi);
    est.clamped = true;
  }
  est.eq.v_star = v;
  est.eq.s_star.assign(static_cast<std::size_t>(m), solve_equilibrium_spacing(v, nominal));
  return est;
}

namespace {

void check_dims(const HankelSet& h, int n, int m) {
  const int p = n + m;
  if (h.Up.rows() != h.T_ini * m || h.Uf.rows() != h.N * m || h.Ep.rows() != h.T_ini ||
      h.Ef.rows() != h.N || h.Yp.rows() != h.T_ini * p || h.Yf.rows() != h.N * p)
    throw std::invalid_argument("HankelSet blocks do not match the platoon dimensions");
}

Eigen::MatrixXd spacing_selector(const HankelSet& h, int n, int m) {
  const int p = n + m;
  Eigen::MatrixXd S(h.N * m, h.columns());
  for (int k = 0; k < h.N; ++k)
    for (int j = 0; j < m; ++j) S.row(k * m + j) = h.Yf.row(k * p + n + j);
  return S;
}

struct Structure {
  Eigen::MatrixXd P, Aeq, Aineq;
};

Structure structure(const HankelSet& h, const Eigen::MatrixXd& spacing_rows, int n, int m,
                    const DeepLccConfig& cfg) {
  const int p = n + m;
  const Eigen::Index C = h.columns();
  const Eigen::Index ns = h.T_ini * p;
  const Eigen::Index d = C + ns;

  Eigen::VectorXd qdiag(h.N * p);
  for (int k = 0; k < h.N; ++k) {
    qdiag.segment(k * p, n).setConstant(cfg.w_v);
    qdiag.segment(k * p + n, m).setConstant(cfg.w_s);
  }
  Structure s;
  s.P = Eigen::MatrixXd::Zero(d, d);
  auto Pgg = s.P.topLeftCorner(C, C);
  Pgg.noalias() = h.Yf.transpose() * qdiag.asDiagonal() * h.Yf;
  Pgg.noalias() += cfg.w_u * (h.Uf.transpose() * h.Uf);
  Pgg.diagonal().array() += cfg.lambda_g;
  s.P.bottomRightCorner(ns, ns).diagonal().setConstant(cfg.lambda_y);

  const Eigen::Index nu = h.Up.rows(), ne = h.Ep.rows(), nf = h.Ef.rows();
  s.Aeq = Eigen::MatrixXd::Zero(nu + ne + ns + nf, d);
  s.Aeq.block(0, 0, nu, C) = h.Up;
  s.Aeq.block(nu, 0, ne, C) = h.Ep;
  s.Aeq.block(nu + ne, 0, ns, C) = h.Yp;
  s.Aeq.block(nu + ne, C, ns, ns).diagonal().setConstant(-1.0);
  s.Aeq.block(nu + ne + ns, 0, nf, C) = h.Ef;

  const Eigen::Index r = spacing_rows.rows();
  s.Aineq = Eigen::MatrixXd::Zero(r + h.Uf.rows(), d);
  s.Aineq.block(0, 0, r, C) = spacing_rows;
  s.Aineq.block(r, 0, h.Uf.rows(), C) = h.Uf;
  return s;
}

struct Data {
  Eigen::VectorXd beq, lower, upper;
};

Data step_data(const HankelSet& h, const PastBuffer& past, const DeepLccConfig& cfg,
               const Equilibrium& eq) {
  if (!past.warmed()) throw std::invalid_argument("DeeP-LCC: past buffer is not warmed up");
  if (past.T_ini() != h.T_ini) throw std::invalid_argument("DeeP-LCC: buffer length differs from T_ini");
  const int m = past.m();
  Data d;
  const Eigen::VectorXd u = past.u_ini(), e = past.eps_ini(eq.v_star), y = past.y_ini(eq);
  d.beq.resize(u.size() + e.size() + y.size() + h.N);
  d.beq << u, e, y, Eigen::VectorXd::Constant(h.N, cfg.eps_forecast);
  const Eigen::Index r = static_cast<Eigen::Index>(h.N) * m;
  d.lower.resize(2 * r);
  d.upper.resize(2 * r);
  for (int k = 0; k < h.N; ++k)
    for (int j = 0; j < m; ++j) {
      d.lower(k * m + j) = cfg.s_min - eq.s_star[j];
      d.upper(k * m + j) = cfg.s_max - eq.s_star[j];
    }
  d.lower.tail(r).setConstant(cfg.a_min);
  d.upper.tail(r).setConstant(cfg.a_max);
  return d;
}

Eigen::MatrixXd as_rows(const Eigen::VectorXd& v, int width) {
  Eigen::MatrixXd out(v.size() / width, width);
  for (Eigen::Index k = 0; k < out.rows(); ++k) out.row(k) = v.segment(k * width, width).transpose();
  return out;
}

}  // namespace

qp::QuadProgram assemble_qp(const HankelSet& h, const PastBuffer& past, const DeepLccConfig& cfg,
                            const Equilibrium& eq) {
  check_dims(h, past.n(), past.m());
  auto s = structure(h, spacing_selector(h, past.n(), past.m()), past.n(), past.m(), cfg);
  auto d = step_data(h, past, cfg, eq);
  qp::QuadProgram prog;
  prog.P = std::move(s.P);
  prog.q = Eigen::VectorXd::Zero(prog.P.rows());
  prog.Aeq = std::move(s.Aeq);
  prog.beq = std::move(d.beq);
  prog.Aineq = std::move(s.Aineq);
  prog.lower = std::move(d.lower);
  prog.upper = std::move(d.upper);
  return prog;
}

Eigen::VectorXd fallback_input(const Eigen::VectorXd& previous, double a_min, double a_max) {
  return (0.5 * previous).cwiseMax(a_min).cwiseMin(a_max);
}

DeepLccController::DeepLccController(const TrajectoryDataset& ds, DeepLccConfig cfg)
    : DeepLccController(build_hankel_set(ds, cfg.T_ini, cfg.N), ds.n, ds.cav_indices, cfg) {}

DeepLccController::DeepLccController(HankelSet h, int n, std::vector<int> cav_indices,
                                     DeepLccConfig cfg)
    : h_(std::move(h)), n_(n), cav_indices_(std::move(cav_indices)), cfg_(cfg) {
  setup();
}

void DeepLccController::setup() {
  warnings_ = cfg_.validate(n_);
  if (h_.T_ini != cfg_.T_ini || h_.N != cfg_.N)
    throw std::invalid_argument("DeepLccController: Hankel horizons differ from the config");
  const int m = static_cast<int>(cav_indices_.size());
  check_dims(h_, n_, m);
  if (!h_.persistently_exciting)
    throw DatasetError("DeepLccController: data are not persistently exciting of order T_ini + N + 2n");
  spacing_rows_ = spacing_selector(h_, n_, m);
  auto s = structure(h_, spacing_rows_, n_, m, cfg_);
  solver_ = std::make_shared<const qp::DenseQpSolver>(std::move(s.P), std::move(s.Aeq),
                                                      std::move(s.Aineq));
}

StepResult DeepLccController::step(const PastBuffer& past, const Equilibrium& eq) const {
  if (past.n() != n_ || past.cav_indices() != cav_indices_)
    throw std::invalid_argument("DeepLccController: buffer belongs to a different platoon");
  const auto t0 = std::chrono::steady_clock::now();
  const int m = past.m();
  const int p = n_ + m;
  const auto d = step_data(h_, past, cfg_, eq);
  const Eigen::VectorXd q = Eigen::VectorXd::Zero(solver_->dim());
  const auto sol = solver_->solve(q, d.beq, d.lower, d.upper, qp::Settings{cfg_.tol, cfg_.max_iter});

  StepResult r;
  r.status = sol.status;
  const Eigen::Index C = h_.columns();
  r.decision.g_star = sol.x.head(C);
  r.decision.sigma_y = sol.x.tail(sol.x.size() - C);
  r.decision.u_star = as_rows(h_.Uf * r.decision.g_star, m);
  r.decision.y_star = as_rows(h_.Yf * r.decision.g_star, p);
  r.decision.objective = 2.0 * sol.objective;
  if (sol.status == qp::Status::Optimal) {
    r.u_applied = r.decision.u_star.row(0).transpose();
  } else {
    r.feasible = false;
    r.u_applied = fallback_input(past.last_input(), cfg_.a_min, cfg_.a_max);
  }
  r.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

StepResult control_step(const HankelSet& h, const PastBuffer& past, const DeepLccConfig& cfg,
                        const Equilibrium& eq) {
  return DeepLccController(h, past.n(), past.cav_indices(), cfg).step(past, eq);
}

PastBuffer update_past(PastBuffer past, const Eigen::VectorXd& u_applied, double head_velocity,
                       const Eigen::VectorXd& velocity, const Eigen::VectorXd& spacing) {
  past.push(u_applied, head_velocity, velocity, spacing);
  return past;
}

void write_decision_header(std::ostream& os, int m) {
  os << "t";
  for (int k = 1; k <= m; ++k) os << ",u_" << k;
  os << ",objective,sigma_y_norm,feasible\n";
}

void write_decision_row(std::ostream& os, const DecisionLogRow& row) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", row.t);
  os << buf;
  for (Eigen::Index k = 0; k < row.u.size(); ++k) {
    std::snprintf(buf, sizeof buf, ",%.10g", row.u(k));
    os << buf;
  }
  std::snprintf(buf, sizeof buf, ",%.10g,%.10g,%d\n", row.objective, row.sigma_y_norm,
                row.feasible ? 1 : 0);
  os << buf;
}

}  // namespace deeplcc
