#include "deeplcc/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <istream>
#include <limits>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "deeplcc/random.hpp"

namespace deeplcc {

double fuel_rate(double v, double a) {
  if (v < 0) throw std::invalid_argument("fuel_rate: negative velocity");
  const double R = 0.333 + 0.00108 * v * v + 1.2 * a;
  if (R <= 0) return 0.444;
  return 0.444 + 0.090 * R * v + (a > 0 ? 0.054 * a * a * v : 0.0);
}

double msve(const Eigen::MatrixXd& velocity, const Eigen::VectorXd& head, double dt, double t0,
            double tf) {
  if (velocity.rows() != head.size()) throw std::invalid_argument("msve: length mismatch");
  if (!(t0 < tf) || !(dt > 0)) throw std::invalid_argument("msve: need t0 < tf and dt > 0");
  if (velocity.cols() == 0) return 0.0;
  double sum = 0.0;
  for (Eigen::Index k = 0; k < velocity.rows(); ++k) {
    const double t = static_cast<double>(k) * dt;
    if (t < t0 - 1e-9 * dt || t >= tf - 1e-9 * dt) continue;
    sum += (velocity.row(k).array() - head(k)).square().sum();
  }
  return dt * sum / (static_cast<double>(velocity.cols()) * (tf - t0));
}

double HeadProfile::operator()(double t) const {
  if (kind == Kind::Sinusoid) return v_star + amplitude * std::sin(2.0 * std::numbers::pi * t / period);
  if (times.empty()) throw std::logic_error("HeadProfile: no breakpoints");
  if (t <= times.front()) return speeds.front();
  if (t >= times.back()) return speeds.back();
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  const auto j = static_cast<std::size_t>(it - times.begin());
  const double w = (t - times[j - 1]) / (times[j] - times[j - 1]);
  return speeds[j - 1] + w * (speeds[j] - speeds[j - 1]);
}

void ScenarioSpec::validate(double v_max, double dt) const {
  if (!(duration > 0)) throw std::invalid_argument("scenario: duration must be positive");
  if (head.kind == HeadProfile::Kind::Piecewise) {
    if (head.times.empty() || head.times.size() != head.speeds.size())
      throw std::invalid_argument("scenario: breakpoint lists differ in length");
    for (std::size_t i = 1; i < head.times.size(); ++i)
      if (!(head.times[i] > head.times[i - 1]))
        throw std::invalid_argument("scenario: breakpoint times must increase");
  } else if (!(head.period > 0)) {
    throw std::invalid_argument("scenario: period must be positive");
  }
  for (double t = 0; t <= duration + 0.5 * dt; t += dt) {
    const double v = head(t);
    if (v < 0 || v > v_max) throw std::invalid_argument("scenario: head velocity leaves [0, v_max]");
  }
  if (!(v_star > 0 && v_star < v_max)) throw std::invalid_argument("scenario: v_star outside (0, v_max)");
}

ScenarioSpec scenario_sinusoid(double amplitude, double period, double v_star, double duration) {
  if (!(amplitude < v_star)) throw std::invalid_argument("scenario_sinusoid: amplitude must be below v_star");
  ScenarioSpec s;
  s.name = "sinusoid";
  s.head.kind = HeadProfile::Kind::Sinusoid;
  s.head.v_star = v_star;
  s.head.amplitude = amplitude;
  s.head.period = period;
  s.duration = duration;
  s.policy = EquilibriumPolicy::Fixed;
  s.v_star = v_star;
  return s;
}

ScenarioSpec scenario_brake(double v_high, double v_low, double a_brake, double hold,
                            double a_recover, double t_start, double duration) {
  if (!(v_low < v_high) || !(a_brake < 0) || !(a_recover > 0) || hold < 0 || t_start < 0)
    throw std::invalid_argument("scenario_brake: inconsistent profile");
  ScenarioSpec s;
  s.name = "brake";
  s.head.kind = HeadProfile::Kind::Piecewise;
  const double t1 = t_start + (v_high - v_low) / -a_brake;
  const double t2 = t1 + hold;
  const double t3 = t2 + (v_high - v_low) / a_recover;
  s.head.times = {0.0, t_start, t1, t2, t3};
  s.head.speeds = {v_high, v_high, v_low, v_low, v_high};
  if (t_start == 0.0) {
    s.head.times.erase(s.head.times.begin());
    s.head.speeds.erase(s.head.speeds.begin());
  }
  s.duration = std::max(duration, t3);
  s.policy = EquilibriumPolicy::RollingMean;
  s.v_star = v_high;
  return s;
}

ScenarioSpec scenario_cycle(const std::string& name, const std::vector<CyclePhase>& phases,
                            const CycleRamps& ramps) {
  if (phases.empty()) throw std::invalid_argument("scenario_cycle: no phases");
  if (ramps.accel <= 0 || ramps.decel >= 0 || ramps.accel > ramps.a_max || ramps.decel < ramps.a_min)
    throw std::invalid_argument("scenario_cycle: ramp acceleration outside the admissible range");
  ScenarioSpec s;
  s.name = name;
  s.head.kind = HeadProfile::Kind::Piecewise;
  double t = 0.0;
  s.head.times.push_back(t);
  s.head.speeds.push_back(phases.front().velocity);
  for (std::size_t i = 0; i < phases.size(); ++i) {
    if (i > 0) {
      const double dv = phases[i].velocity - phases[i - 1].velocity;
      if (dv != 0.0) {
        t += dv > 0 ? dv / ramps.accel : dv / ramps.decel;
        s.head.times.push_back(t);
        s.head.speeds.push_back(phases[i].velocity);
      }
    }
    if (phases[i].cruise < 0) throw std::invalid_argument("scenario_cycle: negative cruise time");
    if (phases[i].cruise > 0) {
      t += phases[i].cruise;
      s.head.times.push_back(t);
      s.head.speeds.push_back(phases[i].velocity);
    }
  }
  s.duration = t;
  s.policy = EquilibriumPolicy::RollingMean;
  s.v_star = phases.front().velocity;
  return s;
}

std::vector<CyclePhase> urban_cycle_phases() {
  return {{8.0, 5.0}, {15.0, 8.0}, {10.0, 6.0}, {4.0, 5.0}, {12.0, 8.0}, {8.0, 6.0}};
}

std::vector<CyclePhase> highway_cycle_phases() {
  return {{15.0, 5.0}, {20.0, 10.0}, {25.0, 8.0}, {18.0, 8.0}, {27.0, 6.0}, {15.0, 6.0}};
}

std::string to_string(ControllerKind k) {
  switch (k) {
    case ControllerKind::AllHdv: return "all-hdv";
    case ControllerKind::Deepc: return "deepc";
    case ControllerKind::Mpc: return "mpc";
  }
  return "unknown";
}

ControllerKind controller_from_string(const std::string& s) {
  if (s == "all-hdv") return ControllerKind::AllHdv;
  if (s == "deepc") return ControllerKind::Deepc;
  if (s == "mpc") return ControllerKind::Mpc;
  throw std::invalid_argument("unknown controller '" + s + "'");
}

namespace {

Equilibrium cav_equilibrium(double v_star, int m, const HdvParams& cav) {
  return Equilibrium{v_star, std::vector<double>(static_cast<std::size_t>(m),
                                                 solve_equilibrium_spacing(v_star, cav))};
}

DiscreteModel mpc_model(const ExperimentConfig& cfg) {
  const auto nominal = MixedConfig::homogeneous(cfg.platoon.n, cfg.platoon.cav_indices);
  return discretize(build_continuous_model(nominal, linearize_platoon(nominal, cfg.mpc_v_star)), cfg.dt);
}

}  // namespace

RunResult run_experiment(const ScenarioSpec& scenario, ControllerKind kind,
                         const ExperimentConfig& cfg, std::uint64_t seed,
                         const DeepLccController* controller) {
  const MixedConfig& pl = cfg.platoon;
  pl.validate();
  scenario.validate(cfg.cav_params.v_max, cfg.dt);
  const int n = pl.n, m = pl.m();
  const int first = std::clamp(cfg.first_metric_vehicle, 1, n);
  const auto& cc = cfg.control;
  if (kind == ControllerKind::Deepc && !controller)
    throw std::invalid_argument("run_experiment: DeeP-LCC needs a controller");
  std::optional<MpcController> mpc;
  if (kind == ControllerKind::Mpc) mpc.emplace(MpcConfig::matching(cc, mpc_model(cfg)));

  StepOptions opts;
  opts.dt = cfg.dt;
  opts.a_min = cc.a_min;
  opts.a_max = cc.a_max;

  auto rng = make_stream(seed, Stream::PlantNoise);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Eigen::VectorXd draw(n), noise(n - m);
  auto next_noise = [&] {
    for (int i = 0; i < n; ++i) draw(i) = cfg.hdv_noise * unit(rng);
    for (int i = 1, j = 0; i <= n; ++i)
      if (!pl.is_cav(i)) noise(j++) = draw(i - 1);
  };
  auto ovm_inputs = [&](const TrafficState& st) {
    Eigen::VectorXd u(m);
    for (int k = 0; k < m; ++k) {
      const int idx = pl.cav_indices[k] - 1;
      const double ahead = idx == 0 ? st.head_velocity : st.velocity(idx - 1);
      u(k) = std::clamp(ovm_acceleration(std::max(st.spacing(idx), 0.0), ahead - st.velocity(idx),
                                         st.velocity(idx), cfg.cav_params),
                        cc.a_min, cc.a_max);
    }
    return u;
  };

  const double v_init = scenario.head(0.0);
  TrafficState st = equilibrium_state(platoon_equilibrium(pl, v_init, cfg.cav_params));
  st.head_velocity = v_init;
  PastBuffer past(cc.T_ini, n, pl.cav_indices);

  RunResult res;
  RunMetrics& mt = res.metrics;
  mt.fuel.assign(n, 0.0);
  mt.peak_velocity_error.assign(n, 0.0);
  mt.min_cav_spacing = std::numeric_limits<double>::infinity();
  mt.min_cav_input = std::numeric_limits<double>::infinity();
  mt.max_cav_input = -std::numeric_limits<double>::infinity();
  TrajectoryLog& log = res.log;
  log.n = n;
  log.m = m;
  log.first_metric_vehicle = first;

  // Idle at equilibrium until the past buffer is full.
  for (int k = 0; k < cc.T_ini; ++k) {
    const Eigen::VectorXd u = kind == ControllerKind::AllHdv ? ovm_inputs(st) : Eigen::VectorXd::Zero(m);
    past.push(u, st.head_velocity, st.velocity, st.spacing);
    next_noise();
    st = step_nonlinear(st, u, v_init, noise, pl, opts);
    if (st.collided) {
      mt.collided = true;
      return res;
    }
  }

  const int steps = static_cast<int>(std::lround(scenario.duration / cfg.dt));
  std::vector<double> head_samples;
  std::vector<Eigen::VectorXd> vel_samples;
  double solve_total = 0.0;
  int solves = 0;
  for (int k = 0; k < steps; ++k) {
    const double t = k * cfg.dt;
    const Equilibrium eq = scenario.policy == EquilibriumPolicy::Fixed
                               ? cav_equilibrium(scenario.v_star, m, cfg.cav_params)
                               : estimate_equilibrium(past.head_history(), m, cfg.cav_params).eq;

    Eigen::VectorXd u;
    DecisionLogRow row;
    row.t = t;
    if (kind == ControllerKind::AllHdv) {
      u = ovm_inputs(st);
    } else {
      double secs = 0.0;
      if (kind == ControllerKind::Deepc) {
        const auto r = controller->step(past, eq);
        u = r.u_applied;
        secs = r.solve_seconds;
        row.feasible = r.feasible;
        row.objective = r.decision.objective;
        row.sigma_y_norm = r.decision.sigma_y.size() ? r.decision.sigma_y.norm() : 0.0;
      } else {
        const auto r = mpc->step(past, eq);
        u = r.u_applied;
        secs = r.solve_seconds;
        row.feasible = r.feasible;
        row.objective = r.plan.objective;
      }
      u = u.cwiseMax(cc.a_min).cwiseMin(cc.a_max);
      if (!row.feasible) ++mt.infeasible_steps;
      solve_total += secs;
      ++solves;
      mt.max_solve_ms = std::max(mt.max_solve_ms, 1e3 * secs);
    }
    row.u = u;

    past.push(u, st.head_velocity, st.velocity, st.spacing);
    next_noise();
    const TrafficState next = step_nonlinear(st, u, scenario.head(t + cfg.dt), noise, pl, opts);

    Eigen::VectorXd fr(n);
    for (int i = 0; i < n; ++i) {
      fr(i) = fuel_rate(std::max(st.velocity(i), 0.0), next.acceleration(i));
      mt.fuel[i] += fr(i) * cfg.dt;
      mt.peak_velocity_error[i] = std::max(mt.peak_velocity_error[i], std::abs(st.velocity(i) - eq.v_star));
    }
    double cost = cc.w_v * (st.velocity.array() - eq.v_star).square().sum() + cc.w_u * u.squaredNorm();
    for (int j = 0; j < m; ++j) {
      const double s = st.spacing(pl.cav_indices[j] - 1);
      cost += cc.w_s * (s - eq.s_star[j]) * (s - eq.s_star[j]);
      mt.min_cav_spacing = std::min({mt.min_cav_spacing, s, next.spacing(pl.cav_indices[j] - 1)});
    }
    mt.realized_cost += cost;
    if (m > 0) {
      mt.max_cav_input = std::max(mt.max_cav_input, u.maxCoeff());
      mt.min_cav_input = std::min(mt.min_cav_input, u.minCoeff());
      mt.max_abs_cav_input = std::max(mt.max_abs_cav_input, u.cwiseAbs().maxCoeff());
    }
    head_samples.push_back(st.head_velocity);
    vel_samples.push_back(st.velocity.tail(n - first + 1));

    if (cfg.keep_trajectory) {
      log.t.push_back(t);
      log.v0.push_back(st.head_velocity);
      log.spacing.push_back(st.spacing);
      log.velocity.push_back(st.velocity);
      log.input.push_back(u);
      log.fuel_rate.push_back(fr.tail(n - first + 1));
      if (kind != ControllerKind::AllHdv) log.decisions.push_back(row);
    }
    ++mt.steps;
    st = next;
    if (st.collided) {
      mt.collided = true;
      break;
    }
  }

  for (int i = first; i <= n; ++i) mt.total_fuel += mt.fuel[i - 1];
  if (mt.steps > 0) {
    Eigen::MatrixXd V(mt.steps, n - first + 1);
    Eigen::VectorXd H(mt.steps);
    for (int k = 0; k < mt.steps; ++k) {
      V.row(k) = vel_samples[k].transpose();
      H(k) = head_samples[k];
    }
    mt.msve = msve(V, H, cfg.dt, 0.0, mt.steps * cfg.dt);
  }
  if (solves) mt.mean_solve_ms = 1e3 * solve_total / solves;
  if (m == 0 || mt.steps == 0) mt.min_cav_input = mt.max_cav_input = 0.0;
  return res;
}

RunResult run_experiment(const ScenarioSpec& scenario, ControllerKind kind,
                         const ExperimentConfig& cfg, std::uint64_t seed,
                         const TrajectoryDataset& dataset) {
  if (kind != ControllerKind::Deepc) return run_experiment(scenario, kind, cfg, seed, nullptr);
  const DeepLccController ctrl(dataset, cfg.control);
  return run_experiment(scenario, kind, cfg, seed, &ctrl);
}

Stat summarize(const std::vector<double>& xs) {
  Stat s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

BatchResult batch(const ScenarioSpec& scenario, const std::vector<ControllerKind>& controllers,
                  const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds, int jobs) {
  BatchResult b;
  b.controllers = controllers;
  b.seeds = seeds;
  b.runs.assign(controllers.size(), std::vector<RunMetrics>(seeds.size()));
  ExperimentConfig run_cfg = cfg;
  run_cfg.keep_trajectory = false;
  const bool need_data =
      std::find(controllers.begin(), controllers.end(), ControllerKind::Deepc) != controllers.end();

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t s = next++; s < seeds.size(); s = next++) {
      try {
        std::optional<DeepLccController> ctrl;
        if (need_data) {
          CollectionOptions co;
          co.dt = cfg.dt;
          co.hdv_noise = cfg.hdv_noise;
          co.a_min = cfg.control.a_min;
          co.a_max = cfg.control.a_max;
          co.cav_params = cfg.cav_params;
          ctrl.emplace(collect_offline(cfg.platoon, cfg.data_v_star, cfg.data_length, seeds[s], co),
                       cfg.control);
        }
        for (std::size_t c = 0; c < controllers.size(); ++c)
          b.runs[c][s] = run_experiment(scenario, controllers[c], run_cfg, seeds[s],
                                        ctrl ? &*ctrl : nullptr)
                             .metrics;
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int threads = std::max(1, std::min<int>(jobs, static_cast<int>(seeds.size())));
  std::vector<std::thread> pool;
  for (int i = 1; i < threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return b;
}

namespace {

void put(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, ",%.10g", v);
  os << buf;
}

}  // namespace

void write_trajectory_csv(std::ostream& os, const TrajectoryLog& log) {
  os << "t,v0";
  for (int i = 1; i <= log.n; ++i) os << ",s_" << i;
  for (int i = 1; i <= log.n; ++i) os << ",v_" << i;
  for (int k = 1; k <= log.m; ++k) os << ",u_" << k;
  for (int i = log.first_metric_vehicle; i <= log.n; ++i) os << ",fuel_rate_" << i;
  os << '\n';
  char buf[32];
  for (std::size_t r = 0; r < log.t.size(); ++r) {
    std::snprintf(buf, sizeof buf, "%.4f", log.t[r]);
    os << buf;
    put(os, log.v0[r]);
    for (Eigen::Index i = 0; i < log.spacing[r].size(); ++i) put(os, log.spacing[r](i));
    for (Eigen::Index i = 0; i < log.velocity[r].size(); ++i) put(os, log.velocity[r](i));
    for (Eigen::Index i = 0; i < log.input[r].size(); ++i) put(os, log.input[r](i));
    for (Eigen::Index i = 0; i < log.fuel_rate[r].size(); ++i) put(os, log.fuel_rate[r](i));
    os << '\n';
  }
}

void write_decision_csv(std::ostream& os, const TrajectoryLog& log) {
  write_decision_header(os, log.m);
  for (const auto& row : log.decisions) write_decision_row(os, row);
}

namespace {

nlohmann::json metrics_to_json(const RunMetrics& m) {
  nlohmann::json j;
  j["total_fuel"] = m.total_fuel;
  j["fuel"] = m.fuel;
  j["msve"] = m.msve;
  j["realized_cost"] = m.realized_cost;
  j["min_cav_spacing"] = m.min_cav_spacing;
  j["peak_velocity_error"] = m.peak_velocity_error;
  j["min_cav_input"] = m.min_cav_input;
  j["max_cav_input"] = m.max_cav_input;
  j["infeasible_steps"] = m.infeasible_steps;
  j["steps"] = m.steps;
  j["collided"] = m.collided;
  j["mean_solve_ms"] = m.mean_solve_ms;
  j["max_solve_ms"] = m.max_solve_ms;
  return j;
}

}  // namespace

std::string metrics_json(const RunMetrics& m) { return metrics_to_json(m).dump(2) + "\n"; }

std::string batch_summary_json(const ScenarioSpec& scenario, const BatchResult& b) {
  nlohmann::json j;
  j["scenario"] = scenario.name;
  j["seeds"] = b.seeds;
  nlohmann::json ctrls = nlohmann::json::object();
  for (std::size_t c = 0; c < b.controllers.size(); ++c) {
    std::vector<double> cost, fuel, msv, peak;
    int collisions = 0, infeasible = 0;
    nlohmann::json per_seed = nlohmann::json::array();
    for (const auto& r : b.runs[c]) {
      cost.push_back(r.realized_cost);
      fuel.push_back(r.total_fuel);
      msv.push_back(r.msve);
      peak.push_back(r.peak_velocity_error.empty() ? 0.0 : r.peak_velocity_error.back());
      collisions += r.collided;
      infeasible += r.infeasible_steps;
      per_seed.push_back(metrics_to_json(r));
    }
    auto stat = [](const std::vector<double>& xs) {
      const auto s = summarize(xs);
      return nlohmann::json{{"mean", s.mean}, {"std", s.std}};
    };
    ctrls[to_string(b.controllers[c])] = {
        {"realized_cost", stat(cost)}, {"total_fuel", stat(fuel)},   {"msve", stat(msv)},
        {"peak_velocity_error_last", stat(peak)}, {"collisions", collisions},
        {"infeasible_steps", infeasible},         {"runs", per_seed}};
  }
  j["controllers"] = ctrls;
  return j.dump(2) + "\n";
}

RunMetrics metrics_from_csv(std::istream& is, const std::vector<int>& cav_indices, double v_star,
                            int first_metric_vehicle) {
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("metrics: empty trajectory file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  int n = 0;
  for (const auto& h : header)
    if (h.rfind("v_", 0) == 0) ++n;
  if (n == 0 || header.size() < static_cast<std::size_t>(2 + 2 * n))
    throw std::invalid_argument("metrics: header lacks spacing/velocity columns");
  for (int c : cav_indices)
    if (c < 1 || c > n) throw std::invalid_argument("metrics: CAV index outside the platoon");
  const int first = std::clamp(first_metric_vehicle, 1, n);

  std::vector<int> fuel_cols(static_cast<std::size_t>(n) + 1, -1);
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c].rfind("fuel_rate_", 0) == 0) {
      const int i = std::stoi(header[c].substr(10));
      if (i >= 1 && i <= n) fuel_cols[i] = static_cast<int>(c);
    }

  std::vector<double> t, v0;
  std::vector<Eigen::VectorXd> s, v, f;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(std::stod(cell));
    if (cells.size() != header.size()) throw std::invalid_argument("metrics: ragged row");
    t.push_back(cells[0]);
    v0.push_back(cells[1]);
    s.push_back(Eigen::Map<Eigen::VectorXd>(cells.data() + 2, n));
    v.push_back(Eigen::Map<Eigen::VectorXd>(cells.data() + 2 + n, n));
    Eigen::VectorXd fr = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
    for (int i = 1; i <= n; ++i)
      if (fuel_cols[i] >= 0) fr(i - 1) = cells[fuel_cols[i]];
    f.push_back(fr);
  }
  RunMetrics mt;
  mt.steps = static_cast<int>(t.size());
  mt.fuel.assign(n, 0.0);
  mt.peak_velocity_error.assign(n, 0.0);
  mt.min_cav_spacing = std::numeric_limits<double>::infinity();
  if (t.size() < 2) throw std::invalid_argument("metrics: need at least two samples");
  const double dt = t[1] - t[0];
  // Logged fuel rates are used where present; otherwise accelerations follow
  // from consecutive velocities and the last sample has none.
  for (std::size_t k = 0; k < t.size(); ++k) {
    for (int i = 0; i < n; ++i) {
      mt.peak_velocity_error[i] = std::max(mt.peak_velocity_error[i], std::abs(v[k](i) - v_star));
      if (fuel_cols[i + 1] >= 0) {
        mt.fuel[i] += f[k](i) * dt;
      } else if (k + 1 < t.size()) {
        const double a = (v[k + 1](i) - v[k](i)) / dt;
        mt.fuel[i] += fuel_rate(std::max(v[k](i), 0.0), a) * dt;
      }
    }
    for (int c : cav_indices) mt.min_cav_spacing = std::min(mt.min_cav_spacing, s[k](c - 1));
  }
  for (int i = first; i <= n; ++i) mt.total_fuel += mt.fuel[i - 1];
  Eigen::MatrixXd V(t.size(), n - first + 1);
  Eigen::VectorXd H(t.size());
  for (std::size_t k = 0; k < t.size(); ++k) {
    V.row(k) = v[k].tail(n - first + 1).transpose();
    H(k) = v0[k];
  }
  mt.msve = msve(V, H, dt, 0.0, t.size() * dt);
  return mt;
}

}  // namespace deeplcc
