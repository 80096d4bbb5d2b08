#include "deeplcc/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <utility>
#include <variant>

#include <json.hpp>

namespace deeplcc {

namespace {

using Field = std::variant<int*, double*, std::string*, std::uint64_t*, std::vector<int>*>;

std::vector<std::pair<const char*, Field>> fields(RunConfig& c) {
  return {
      {"n", &c.n},
      {"cav_indices", &c.cav_indices},
      {"hdv_profile", &c.hdv_profile},
      {"hdv_alpha", &c.hdv.alpha},
      {"hdv_beta", &c.hdv.beta},
      {"hdv_s_st", &c.hdv.s_st},
      {"hdv_s_go", &c.hdv.s_go},
      {"hdv_v_max", &c.hdv.v_max},
      {"cav_alpha", &c.cav.alpha},
      {"cav_beta", &c.cav.beta},
      {"cav_s_st", &c.cav.s_st},
      {"cav_s_go", &c.cav.s_go},
      {"cav_v_max", &c.cav.v_max},
      {"controller", &c.controller},
      {"T_ini", &c.control.T_ini},
      {"N", &c.control.N},
      {"w_v", &c.control.w_v},
      {"w_s", &c.control.w_s},
      {"w_u", &c.control.w_u},
      {"lambda_g", &c.control.lambda_g},
      {"lambda_y", &c.control.lambda_y},
      {"s_min", &c.control.s_min},
      {"s_max", &c.control.s_max},
      {"a_min", &c.control.a_min},
      {"a_max", &c.control.a_max},
      {"eps_forecast", &c.control.eps_forecast},
      {"solver_tol", &c.control.tol},
      {"solver_max_iter", &c.control.max_iter},
      {"scenario", &c.scenario},
      {"v_star", &c.v_star},
      {"duration", &c.duration},
      {"amplitude", &c.amplitude},
      {"period", &c.period},
      {"brake_v_low", &c.brake_v_low},
      {"brake_accel", &c.brake_accel},
      {"brake_hold", &c.brake_hold},
      {"recover_accel", &c.recover_accel},
      {"brake_start", &c.brake_start},
      {"cycle_accel", &c.cycle_accel},
      {"cycle_decel", &c.cycle_decel},
      {"dt", &c.dt},
      {"hdv_noise", &c.hdv_noise},
      {"first_metric_vehicle", &c.first_metric_vehicle},
      {"mpc_v_star", &c.mpc_v_star},
      {"data_length", &c.data_length},
      {"data_v_star", &c.data_v_star},
      {"dataset", &c.dataset},
      {"out", &c.out},
      {"seed", &c.seed},
      {"batch_runs", &c.batch_runs},
      {"jobs", &c.jobs},
  };
}

}  // namespace

MixedConfig RunConfig::platoon() const {
  MixedConfig p = MixedConfig::homogeneous(n, cav_indices, hdv);
  if (hdv_profile == "heterogeneous") p.hdv_params = heterogeneous_hdv_table();
  return p;
}

ScenarioSpec RunConfig::scenario_spec() const {
  ScenarioSpec s;
  if (scenario == "sinusoid") {
    s = scenario_sinusoid(amplitude, period, v_star, duration);
  } else if (scenario == "brake") {
    s = scenario_brake(v_star, brake_v_low, brake_accel, brake_hold, recover_accel, brake_start, duration);
  } else if (scenario == "urban" || scenario == "highway") {
    CycleRamps r;
    r.accel = cycle_accel;
    r.decel = cycle_decel;
    r.a_min = control.a_min;
    r.a_max = control.a_max;
    s = scenario_cycle(scenario, scenario == "urban" ? urban_cycle_phases() : highway_cycle_phases(), r);
  } else {
    throw ConfigError("unknown scenario '" + scenario + "'");
  }
  return s;
}

ExperimentConfig RunConfig::experiment() const {
  ExperimentConfig e;
  e.platoon = platoon();
  e.control = control;
  e.cav_params = cav;
  e.dt = dt;
  e.hdv_noise = hdv_noise;
  e.first_metric_vehicle = first_metric_vehicle;
  e.mpc_v_star = mpc_v_star;
  e.data_length = data_length;
  e.data_v_star = data_v_star;
  return e;
}

ControllerKind RunConfig::controller_kind() const {
  try {
    return controller_from_string(controller);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::vector<std::uint64_t> RunConfig::batch_seeds() const {
  std::vector<std::uint64_t> s;
  for (int k = 0; k < batch_runs; ++k) s.push_back(seed + static_cast<std::uint64_t>(k));
  return s;
}

std::vector<std::string> RunConfig::validate() const {
  if (hdv_profile != "nominal" && hdv_profile != "heterogeneous")
    throw ConfigError("hdv_profile must be 'nominal' or 'heterogeneous'");
  if (!(dt > 0)) throw ConfigError("dt must be positive");
  std::vector<std::string> warnings;
  try {
    controller_kind();
    const MixedConfig p = platoon();
    p.validate();
    if (hdv_profile == "heterogeneous" && n - p.m() != static_cast<int>(heterogeneous_hdv_table().size()))
      throw ConfigError("heterogeneous profile needs exactly " +
                        std::to_string(heterogeneous_hdv_table().size()) + " HDVs");
    cav.validate();
    warnings = control.validate(n);
    scenario_spec().validate(cav.v_max, dt);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (hdv_noise < 0) throw ConfigError("hdv_noise must be nonnegative");
  if (first_metric_vehicle < 1 || first_metric_vehicle > n)
    throw ConfigError("first_metric_vehicle must lie in 1..n");
  if (data_length < 1) throw ConfigError("data_length must be positive");
  if (!(data_v_star > 0 && data_v_star < cav.v_max)) throw ConfigError("data_v_star outside (0, v_max)");
  if (!(mpc_v_star > 0 && mpc_v_star < hdv.v_max)) throw ConfigError("mpc_v_star outside (0, v_max)");
  if (batch_runs < 1) throw ConfigError("batch_runs must be positive");
  if (jobs < 1) throw ConfigError("jobs must be positive");
  if (dataset.empty()) throw ConfigError("dataset path is empty");
  if (out.empty()) throw ConfigError("out path is empty");
  // The combined input (eps, u) has m + 1 channels, and a depth-L Hankel
  // matrix needs at least as many columns as rows to have full row rank.
  const int L = control.T_ini + control.N + 2 * n;
  const int needed = (static_cast<int>(cav_indices.size()) + 2) * L - 1;
  if (data_length < needed)
    warnings.push_back("data_length " + std::to_string(data_length) + " is below " + std::to_string(needed));
  return warnings;
}

std::string config_to_json(const RunConfig& c) {
  RunConfig copy = c;
  nlohmann::ordered_json doc;
  for (auto& [key, field] : fields(copy))
    std::visit([&](auto* p) { doc[key] = *p; }, field);
  return doc.dump(2) + "\n";
}

RunConfig config_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  std::set<std::string> known;
  for (auto& [key, field] : fields(c)) {
    known.insert(key);
    if (!doc.contains(key)) continue;
    try {
      std::visit([&](auto* p) { doc.at(key).get_to(*p); }, field);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    }
  }
  for (const auto& item : doc.items())
    if (!known.count(item.key())) throw ConfigError("unknown config key '" + item.key() + "'");
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return config_from_json(buf.str());
}

}  // namespace deeplcc
