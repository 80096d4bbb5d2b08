#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "deeplcc/data.hpp"
#include "deeplcc/deepc.hpp"
#include "deeplcc/mpc.hpp"
#include "deeplcc/traffic.hpp"

namespace deeplcc {

/// Instantaneous fuel consumption in mL/s.
double fuel_rate(double v, double a);

/// Mean squared velocity error of the columns of `velocity` (T x k) relative
/// to `head` (T) over samples with t0 <= t < tf.
double msve(const Eigen::MatrixXd& velocity, const Eigen::VectorXd& head, double dt, double t0,
            double tf);

/// Head-vehicle velocity as a function of time.
struct HeadProfile {
  enum class Kind { Sinusoid, Piecewise };
  Kind kind = Kind::Sinusoid;
  double v_star = 15.0;
  double amplitude = 0.0;
  double period = 10.0;
  std::vector<double> times;  // piecewise-linear breakpoints, increasing
  std::vector<double> speeds;

  double operator()(double t) const;
};

enum class EquilibriumPolicy { Fixed, RollingMean };

struct ScenarioSpec {
  std::string name;
  HeadProfile head;
  double duration = 40.0;
  EquilibriumPolicy policy = EquilibriumPolicy::Fixed;
  double v_star = 15.0; // fixed equilibrium, or the initial cruise velocity

  /// Checks the profile stays within [0, v_max] on [0, duration].
  void validate(double v_max = 30.0, double dt = 0.05) const;
};

ScenarioSpec scenario_sinusoid(double amplitude = 3.0, double period = 10.0, double v_star = 15.0,
                               double duration = 40.0);

ScenarioSpec scenario_brake(double v_high = 15.0, double v_low = 5.0, double a_brake = -5.0,
                            double hold = 5.0, double a_recover = 2.0, double t_start = 2.0,
                            double duration = 30.0);

struct CyclePhase {
  double velocity; // cruise target, m/s
  double cruise;   // time spent at the target, s
};

struct CycleRamps {
  double accel = 1.0;  // used when speeding up
  double decel = -1.5; // used when slowing down
  double a_min = -5.0;
  double a_max = 2.0;
};

/// Cruise segments joined by constant-acceleration ramps. Throws
/// std::invalid_argument if a ramp acceleration lies outside [a_min, a_max].
ScenarioSpec scenario_cycle(const std::string& name, const std::vector<CyclePhase>& phases,
                            const CycleRamps& ramps = {});

// Reconstructed example phase lists, not a published driving cycle.
std::vector<CyclePhase> urban_cycle_phases();
std::vector<CyclePhase> highway_cycle_phases();

enum class ControllerKind { AllHdv, Deepc, Mpc };

std::string to_string(ControllerKind k);
/// Accepts "all-hdv", "deepc" and "mpc".
ControllerKind controller_from_string(const std::string& s);

struct ExperimentConfig {
  MixedConfig platoon = MixedConfig::homogeneous(8, {3, 6});
  DeepLccConfig control;
  HdvParams cav_params = HdvParams::nominal(); // CAV OVM law and equilibrium spacing
  double dt = 0.05;
  double hdv_noise = 0.1;
  int first_metric_vehicle = 3;
  double mpc_v_star = 15.0; // MPC predicts with the nominal model linearized here
  int data_length = 800;
  double data_v_star = 15.0;
  bool keep_trajectory = true;
};

struct RunMetrics {
  double total_fuel = 0.0;        // mL, vehicles first_metric_vehicle..n
  std::vector<double> fuel;       // mL per vehicle
  double msve = 0.0;              // (m/s)^2
  double realized_cost = 0.0;
  double min_cav_spacing = 0.0;   // m
  std::vector<double> peak_velocity_error; // m/s per vehicle
  double max_abs_cav_input = 0.0;
  double max_cav_input = 0.0;
  double min_cav_input = 0.0;
  int infeasible_steps = 0;
  int steps = 0;
  bool collided = false;
  double mean_solve_ms = 0.0;
  double max_solve_ms = 0.0;
};

struct TrajectoryLog {
  int n = 0;
  int m = 0;
  int first_metric_vehicle = 3;
  std::vector<double> t, v0;
  std::vector<Eigen::VectorXd> spacing, velocity, input, fuel_rate;
  std::vector<DecisionLogRow> decisions;
};

struct RunResult {
  RunMetrics metrics;
  TrajectoryLog log;
};

/// Closed-loop run. The platoon idles at equilibrium for T_ini steps first,
/// so the past buffer is filled when the scenario starts. A collision stops
/// the run and is flagged in the metrics. `controller` must be supplied for
/// ControllerKind::Deepc.
RunResult run_experiment(const ScenarioSpec& scenario, ControllerKind kind,
                         const ExperimentConfig& cfg, std::uint64_t seed,
                         const DeepLccController* controller = nullptr);

/// Convenience overload that builds the controller from a dataset.
RunResult run_experiment(const ScenarioSpec& scenario, ControllerKind kind,
                         const ExperimentConfig& cfg, std::uint64_t seed,
                         const TrajectoryDataset& dataset);

/// Mean and n-1 standard deviation.
struct Stat {
  double mean = 0.0;
  double std = 0.0;
};
Stat summarize(const std::vector<double>& xs);

struct BatchResult {
  std::vector<ControllerKind> controllers;
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<RunMetrics>> runs; // [controller][seed]
};

/// One dataset per seed for DeeP-LCC; every controller of a seed sees the same
/// plant noise. Runs are spread over `jobs` threads and merged by seed.
BatchResult batch(const ScenarioSpec& scenario, const std::vector<ControllerKind>& controllers,
                  const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds, int jobs = 1);

void write_trajectory_csv(std::ostream& os, const TrajectoryLog& log);
void write_decision_csv(std::ostream& os, const TrajectoryLog& log);
std::string metrics_json(const RunMetrics& m);
std::string batch_summary_json(const ScenarioSpec& scenario, const BatchResult& b);

/// Recomputes metrics from a trajectory CSV written by write_trajectory_csv.
/// Only fuel, MSVE, min CAV spacing and peak errors (against `v_star`) are
/// recoverable from the log.
RunMetrics metrics_from_csv(std::istream& is, const std::vector<int>& cav_indices, double v_star,
                            int first_metric_vehicle = 3);

}  // namespace deeplcc
