#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "deeplcc/experiments.hpp"

namespace deeplcc {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Everything needed to reproduce a run, stored as one flat JSON object.
struct RunConfig {
  int n = 8;
  std::vector<int> cav_indices{3, 6};
  std::string hdv_profile = "nominal"; // "nominal" or "heterogeneous"
  HdvParams hdv;                       // used by the nominal profile
  HdvParams cav;                       // CAV OVM law for collection and all-hdv runs

  std::string controller = "deepc";
  DeepLccConfig control;

  std::string scenario = "sinusoid"; // sinusoid, brake, urban, highway
  double v_star = 15.0;
  double duration = 40.0;
  double amplitude = 3.0;
  double period = 10.0;
  double brake_v_low = 5.0;
  double brake_accel = -5.0;
  double brake_hold = 5.0;
  double recover_accel = 2.0;
  double brake_start = 2.0;
  double cycle_accel = 1.0;
  double cycle_decel = -1.5;

  double dt = 0.05;
  double hdv_noise = 0.1;
  int first_metric_vehicle = 3;
  double mpc_v_star = 15.0;
  int data_length = 800;
  double data_v_star = 15.0;

  std::string dataset = "dataset.json";
  std::string out = "out";
  std::uint64_t seed = 1;
  int batch_runs = 20; // batch uses seeds seed .. seed + batch_runs - 1
  int jobs = 1;

  bool operator==(const RunConfig&) const = default;

  MixedConfig platoon() const;
  ScenarioSpec scenario_spec() const;
  ExperimentConfig experiment() const;
  ControllerKind controller_kind() const;
  std::vector<std::uint64_t> batch_seeds() const;

  /// Cross-field checks; throws ConfigError. Returns advisory warnings.
  std::vector<std::string> validate() const;
};

std::string config_to_json(const RunConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
RunConfig config_from_json(const std::string& text);
/// Throws std::ios_base::failure if the file cannot be read.
RunConfig load_config(const std::filesystem::path& path);

}  // namespace deeplcc
