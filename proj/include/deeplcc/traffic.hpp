#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace deeplcc {

/// Optimal-velocity-model parameters of one human driver.
struct HdvParams {
  double alpha = 0.6;  // 1/s
  double beta = 0.9;   // 1/s
  double s_st = 5.0;   // m
  double s_go = 35.0;  // m
  double v_max = 30.0; // m/s

  void validate() const;
  bool operator==(const HdvParams&) const = default;

  static HdvParams nominal() { return {}; }
};

/// The six heterogeneous drivers used in the comprehensive and braking
/// scenarios, front to back.
std::vector<HdvParams> heterogeneous_hdv_table();

/// Platoon layout. Vehicle ids are 1-based and count from the vehicle directly
/// behind the head vehicle.
struct MixedConfig {
  int n = 0;
  std::vector<int> cav_indices;      // strictly increasing, 1-based
  std::vector<HdvParams> hdv_params; // one per non-CAV slot, front to back

  int m() const { return static_cast<int>(cav_indices.size()); }
  bool is_cav(int vehicle) const;
  /// Parameters of the HDV at `vehicle`; throws if it is a CAV.
  const HdvParams& hdv(int vehicle) const;
  /// Position of `vehicle` among the HDVs (0-based) or -1 for a CAV.
  int hdv_slot(int vehicle) const;

  void validate() const;

  /// n vehicles, CAVs at `cavs`, every HDV using `params`.
  static MixedConfig homogeneous(int n, std::vector<int> cavs,
                                 const HdvParams& params = HdvParams::nominal());
};

struct TrafficState {
  Eigen::VectorXd spacing;      // s_i, m
  Eigen::VectorXd velocity;     // v_i, m/s
  Eigen::VectorXd acceleration; // applied during the step that produced this state
  double head_velocity = 0.0;   // v_0, m/s
  bool collided = false;        // some spacing reached zero
};

struct Equilibrium {
  double v_star = 0.0;
  std::vector<double> s_star; // per vehicle
};

struct LinearCoeffs {
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  double alpha3 = 0.0;
};

struct StateSpaceModel {
  Eigen::MatrixXd A; // 2n x 2n
  Eigen::MatrixXd B; // 2n x m
  Eigen::MatrixXd H; // 2n x 1
  Eigen::MatrixXd C; // (n+m) x 2n
};

struct DiscreteModel {
  Eigen::MatrixXd Ad;
  Eigen::MatrixXd Bd;
  Eigen::MatrixXd Hd;
  Eigen::MatrixXd Cd;
  double dt = 0.0;

  int states() const { return static_cast<int>(Ad.rows()); }
  int inputs() const { return static_cast<int>(Bd.cols()); }
  int outputs() const { return static_cast<int>(Cd.rows()); }
};

/// Spacing-dependent desired velocity with the cosine-shaped transition.
double ovm_desired_velocity(double s, const HdvParams& p);
/// d v_des / d s.
double ovm_desired_velocity_slope(double s, const HdvParams& p);

double ovm_acceleration(double s, double s_dot, double v, const HdvParams& p);

/// Spacing s* with v_des(s*) = v_star; requires 0 < v_star < v_max.
double solve_equilibrium_spacing(double v_star, const HdvParams& p);

/// Per-vehicle equilibrium. HDVs use their own parameters; CAVs use `cav_params`.
Equilibrium platoon_equilibrium(const MixedConfig& cfg, double v_star,
                                const HdvParams& cav_params = HdvParams::nominal());

LinearCoeffs linearize_hdv(const HdvParams& p, double s_star);
/// Linearized coefficients for every HDV of `cfg` at velocity `v_star`.
std::vector<LinearCoeffs> linearize_platoon(const MixedConfig& cfg, double v_star);

StateSpaceModel build_continuous_model(const MixedConfig& cfg,
                                       const std::vector<LinearCoeffs>& coeffs);

/// Zero-order-hold discretization by the augmented matrix exponential.
DiscreteModel discretize(const StateSpaceModel& model, double dt);

struct StepOptions {
  double dt = 0.05;
  double a_min = -5.0;
  double a_max = 2.0;
  bool continue_after_collision = false;
};

class CollisionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vehicles all at their equilibrium spacing and velocity v_star.
TrafficState equilibrium_state(const Equilibrium& eq);

/// One explicit Euler step. HDVs follow the OVM plus `hdv_noise`, CAVs apply
/// `cav_input`; every acceleration is saturated to [a_min, a_max]. A spacing
/// that reaches zero sets `collided` on the result. Stepping a collided state
/// throws CollisionError unless the options opt in.
TrafficState step_nonlinear(const TrafficState& state, const Eigen::VectorXd& cav_input,
                            double v0_next, const Eigen::VectorXd& hdv_noise,
                            const MixedConfig& cfg, const StepOptions& opts = {});

}  // namespace deeplcc
