#include "deeplcc/traffic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <unsupported/Eigen/MatrixFunctions>

namespace deeplcc {

void HdvParams::validate() const {
  if (!(alpha > 0.0) || !(beta > 0.0) || !(v_max > 0.0))
    throw std::invalid_argument("HdvParams: alpha, beta and v_max must be positive");
  if (!(s_st > 0.0) || !(s_st < s_go))
    throw std::invalid_argument("HdvParams: require 0 < s_st < s_go");
}

std::vector<HdvParams> heterogeneous_hdv_table() {
  auto make = [](double a, double b, double s_go) {
    HdvParams p;
    p.alpha = a;
    p.beta = b;
    p.s_go = s_go;
    return p;
  };
  return {make(0.45, 0.60, 38), make(0.75, 0.95, 31), make(0.70, 0.95, 33),
          make(0.50, 0.75, 37), make(0.40, 0.80, 39), make(0.80, 1.00, 34)};
}

bool MixedConfig::is_cav(int vehicle) const {
  return std::binary_search(cav_indices.begin(), cav_indices.end(), vehicle);
}

int MixedConfig::hdv_slot(int vehicle) const {
  if (is_cav(vehicle)) return -1;
  const auto before = std::lower_bound(cav_indices.begin(), cav_indices.end(), vehicle) -
                      cav_indices.begin();
  return vehicle - 1 - static_cast<int>(before);
}

const HdvParams& MixedConfig::hdv(int vehicle) const {
  const int slot = hdv_slot(vehicle);
  if (slot < 0) throw std::invalid_argument("vehicle " + std::to_string(vehicle) + " is a CAV");
  return hdv_params.at(static_cast<std::size_t>(slot));
}

void MixedConfig::validate() const {
  if (n < 1) throw std::invalid_argument("MixedConfig: n must be at least 1");
  if (m() < 1 || m() > n) throw std::invalid_argument("MixedConfig: require 1 <= m <= n");
  for (std::size_t k = 0; k < cav_indices.size(); ++k) {
    if (cav_indices[k] < 1 || cav_indices[k] > n)
      throw std::invalid_argument("MixedConfig: CAV index out of range");
    if (k > 0 && cav_indices[k] <= cav_indices[k - 1])
      throw std::invalid_argument("MixedConfig: CAV indices must be strictly increasing");
  }
  if (static_cast<int>(hdv_params.size()) != n - m())
    throw std::invalid_argument("MixedConfig: expected " + std::to_string(n - m()) +
                                " HDV parameter sets, got " + std::to_string(hdv_params.size()));
  for (const auto& p : hdv_params) p.validate();
}

MixedConfig MixedConfig::homogeneous(int n, std::vector<int> cavs, const HdvParams& params) {
  MixedConfig cfg;
  cfg.n = n;
  cfg.cav_indices = std::move(cavs);
  const int hdvs = n - static_cast<int>(cfg.cav_indices.size());
  cfg.hdv_params.assign(static_cast<std::size_t>(std::max(hdvs, 0)), params);
  return cfg;
}

double ovm_desired_velocity(double s, const HdvParams& p) {
  if (s < 0.0) throw std::invalid_argument("ovm_desired_velocity: negative spacing");
  if (s <= p.s_st) return 0.0;
  if (s >= p.s_go) return p.v_max;
  return 0.5 * p.v_max * (1.0 - std::cos(std::numbers::pi * (s - p.s_st) / (p.s_go - p.s_st)));
}

double ovm_desired_velocity_slope(double s, const HdvParams& p) {
  if (s <= p.s_st || s >= p.s_go) return 0.0;
  const double span = p.s_go - p.s_st;
  return 0.5 * p.v_max * std::numbers::pi / span *
         std::sin(std::numbers::pi * (s - p.s_st) / span);
}

double ovm_acceleration(double s, double s_dot, double v, const HdvParams& p) {
  return p.alpha * (ovm_desired_velocity(s, p) - v) + p.beta * s_dot;
}

double solve_equilibrium_spacing(double v_star, const HdvParams& p) {
  if (!(v_star > 0.0) || !(v_star < p.v_max))
    throw std::domain_error("equilibrium velocity must lie strictly inside (0, v_max)");
  return std::acos(1.0 - 2.0 * v_star / p.v_max) * (p.s_go - p.s_st) / std::numbers::pi + p.s_st;
}

Equilibrium platoon_equilibrium(const MixedConfig& cfg, double v_star,
                                const HdvParams& cav_params) {
  Equilibrium eq;
  eq.v_star = v_star;
  eq.s_star.resize(static_cast<std::size_t>(cfg.n));
  for (int i = 1; i <= cfg.n; ++i) {
    const HdvParams& p = cfg.is_cav(i) ? cav_params : cfg.hdv(i);
    eq.s_star[static_cast<std::size_t>(i - 1)] = solve_equilibrium_spacing(v_star, p);
  }
  return eq;
}

LinearCoeffs linearize_hdv(const HdvParams& p, double s_star) {
  return {p.alpha * ovm_desired_velocity_slope(s_star, p), p.alpha + p.beta, p.beta};
}

std::vector<LinearCoeffs> linearize_platoon(const MixedConfig& cfg, double v_star) {
  std::vector<LinearCoeffs> out;
  out.reserve(cfg.hdv_params.size());
  for (const auto& p : cfg.hdv_params)
    out.push_back(linearize_hdv(p, solve_equilibrium_spacing(v_star, p)));
  return out;
}

StateSpaceModel build_continuous_model(const MixedConfig& cfg,
                                       const std::vector<LinearCoeffs>& coeffs) {
  cfg.validate();
  const int n = cfg.n;
  const int m = cfg.m();
  if (static_cast<int>(coeffs.size()) != n - m)
    throw std::invalid_argument("build_continuous_model: need one LinearCoeffs per HDV");

  StateSpaceModel model;
  model.A = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  model.B = Eigen::MatrixXd::Zero(2 * n, m);
  model.H = Eigen::MatrixXd::Zero(2 * n, 1);
  model.C = Eigen::MatrixXd::Zero(n + m, 2 * n);

  for (int i = 1; i <= n; ++i) {
    const int r = 2 * (i - 1);
    // spacing error rate: v_{i-1} - v_i
    model.A(r, r + 1) = -1.0;
    if (i > 1) model.A(r, r - 1) = 1.0;
    const int slot = cfg.hdv_slot(i);
    if (slot >= 0) {
      const LinearCoeffs& c = coeffs[static_cast<std::size_t>(slot)];
      model.A(r + 1, r) = c.alpha1;
      model.A(r + 1, r + 1) = -c.alpha2;
      if (i > 1) model.A(r + 1, r - 1) = c.alpha3;
    }
  }
  for (int k = 0; k < m; ++k) model.B(2 * cfg.cav_indices[k] - 1, k) = 1.0;

  model.H(0, 0) = 1.0;
  if (!cfg.is_cav(1)) model.H(1, 0) = coeffs.front().alpha3;

  for (int i = 0; i < n; ++i) model.C(i, 2 * i + 1) = 1.0;
  for (int k = 0; k < m; ++k) model.C(n + k, 2 * (cfg.cav_indices[k] - 1)) = 1.0;
  return model;
}

DiscreteModel discretize(const StateSpaceModel& model, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("discretize: dt must be positive");
  const Eigen::Index k = model.A.rows();
  const Eigen::Index m = model.B.cols();
  const Eigen::Index h = model.H.cols();

  // exp([A B H; 0 0 0] dt) = [Ad Bd Hd; 0 I 0; 0 0 I]
  Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(k + m + h, k + m + h);
  aug.topLeftCorner(k, k) = model.A;
  aug.block(0, k, k, m) = model.B;
  aug.block(0, k + m, k, h) = model.H;
  const Eigen::MatrixXd phi = (aug * dt).exp();

  DiscreteModel d;
  d.Ad = phi.topLeftCorner(k, k);
  d.Bd = phi.block(0, k, k, m);
  d.Hd = phi.block(0, k + m, k, h);
  d.Cd = model.C;
  d.dt = dt;
  return d;
}

TrafficState equilibrium_state(const Equilibrium& eq) {
  const auto n = static_cast<Eigen::Index>(eq.s_star.size());
  TrafficState st;
  st.spacing = Eigen::Map<const Eigen::VectorXd>(eq.s_star.data(), n);
  st.velocity = Eigen::VectorXd::Constant(n, eq.v_star);
  st.acceleration = Eigen::VectorXd::Zero(n);
  st.head_velocity = eq.v_star;
  return st;
}

TrafficState step_nonlinear(const TrafficState& state, const Eigen::VectorXd& cav_input,
                            double v0_next, const Eigen::VectorXd& hdv_noise,
                            const MixedConfig& cfg, const StepOptions& opts) {
  const int n = cfg.n;
  if (cav_input.size() != cfg.m())
    throw std::invalid_argument("step_nonlinear: expected one input per CAV");
  if (hdv_noise.size() != n - cfg.m())
    throw std::invalid_argument("step_nonlinear: expected one noise sample per HDV");
  if (state.spacing.size() != n || state.velocity.size() != n)
    throw std::invalid_argument("step_nonlinear: state dimension mismatch");
  if (state.collided && !opts.continue_after_collision)
    throw CollisionError("step_nonlinear: state has already collided");

  TrafficState next;
  next.acceleration.resize(n);
  int cav = 0;
  for (int i = 1; i <= n; ++i) {
    const auto idx = static_cast<Eigen::Index>(i - 1);
    const double ahead = i == 1 ? state.head_velocity : state.velocity(idx - 1);
    double a;
    const int slot = cfg.hdv_slot(i);
    if (slot < 0) {
      a = cav_input(cav++);
    } else {
      const double s = std::max(state.spacing(idx), 0.0);
      a = ovm_acceleration(s, ahead - state.velocity(idx), state.velocity(idx),
                           cfg.hdv_params[static_cast<std::size_t>(slot)]) +
          hdv_noise(slot);
    }
    next.acceleration(idx) = std::clamp(a, opts.a_min, opts.a_max);
  }

  next.spacing = state.spacing;
  next.spacing(0) += opts.dt * (state.head_velocity - state.velocity(0));
  for (int i = 1; i < n; ++i)
    next.spacing(i) += opts.dt * (state.velocity(i - 1) - state.velocity(i));
  next.velocity = state.velocity + opts.dt * next.acceleration;
  next.head_velocity = v0_next;
  next.collided = state.collided || (next.spacing.array() <= 0.0).any();
  return next;
}

}  // namespace deeplcc
