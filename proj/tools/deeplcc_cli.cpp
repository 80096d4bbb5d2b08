#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "deeplcc/analysis.hpp"
#include "deeplcc/config.hpp"
#include "deeplcc/data.hpp"
#include "deeplcc/experiments.hpp"

namespace fs = std::filesystem;
using namespace deeplcc;

namespace {

enum Exit { kOk = 0, kConfig = 2, kUnsafe = 3, kIo = 4 };

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> out;
  std::string trajectory;
};

RunConfig load(const Options& o) {
  RunConfig c;
  try {
    c = load_config(o.config);
  } catch (const std::ios_base::failure& e) {
    throw IoError(e.what());
  }
  if (o.seed) c.seed = *o.seed;
  if (o.jobs) c.jobs = *o.jobs;
  if (o.out) c.out = *o.out;
  for (const auto& w : c.validate()) std::cerr << "warning: " << w << "\n";
  return c;
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw IoError("cannot write " + path.string());
}

template <class Fn>
void write_stream(const fs::path& path, Fn fn) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  fn(f);
  if (!f) throw IoError("failed writing " + path.string());
}

// A run counts as unsafe when it collided or more than half its steps fell back.
bool unsafe(const RunMetrics& m) { return m.collided || 2 * m.infeasible_steps > m.steps; }

TrajectoryDataset load_checked_dataset(const RunConfig& c) {
  TrajectoryDataset ds;
  try {
    ds = load_dataset(c.dataset);
  } catch (const std::ios_base::failure& e) {
    throw IoError(e.what());
  } catch (const DatasetError& e) {
    throw IoError(c.dataset + ": " + e.what());
  }
  if (ds.n != c.n || ds.cav_indices != c.cav_indices)
    throw ConfigError("dataset " + c.dataset + " was collected for a different platoon");
  if (std::abs(ds.dt - c.dt) > 1e-12) throw ConfigError("dataset sampling interval differs from dt");
  if (!build_hankel_set(ds, c.control.T_ini, c.control.N).persistently_exciting)
    throw ConfigError("dataset " + c.dataset + " is not persistently exciting for T_ini, N");
  return ds;
}

int cmd_collect(const Options& o) {
  const RunConfig c = load(o);
  fs::path path = c.dataset;
  if (o.out) {
    make_dir(*o.out);
    path = fs::path(*o.out) / path.filename();
  } else if (path.has_parent_path()) {
    make_dir(path.parent_path());
  }
  CollectionOptions opts;
  opts.dt = c.dt;
  opts.hdv_noise = c.hdv_noise;
  opts.a_min = c.control.a_min;
  opts.a_max = c.control.a_max;
  opts.cav_params = c.cav;
  TrajectoryDataset ds;
  try {
    ds = collect_offline(c.platoon(), c.data_v_star, c.data_length, c.seed, opts);
  } catch (const CollisionError& e) {
    std::cerr << "collection collided: " << e.what() << "\n";
    return kUnsafe;
  }
  try {
    save_dataset(ds, path);
  } catch (const std::ios_base::failure& e) {
    throw IoError(e.what());
  }
  const int needed = min_data_length(ds.m(), c.control.T_ini, c.control.N, c.n);
  const bool pe = build_hankel_set(ds, c.control.T_ini, c.control.N).persistently_exciting;
  std::cout << "wrote " << path.string() << " (" << ds.length() << " samples)\n";
  std::cout << "persistently exciting: " << (pe ? "yes" : "no") << "\n";
  const int L = c.control.T_ini + c.control.N + 2 * c.n;
  const int full_rank = (ds.m() + 2) * L - 1;
  std::cout << "length " << ds.length() << (ds.length() >= needed ? " >= " : " < ") << needed
            << " (minimum data length)\n";
  std::cout << "length " << ds.length() << (ds.length() >= full_rank ? " >= " : " < ") << full_rank
            << " (square combined-input Hankel of depth " << L << ")\n";
  return kOk;
}

int cmd_check(const Options& o) {
  const RunConfig c = load(o);
  const auto r = analysis::analyze(c.platoon(), c.v_star, c.dt);
  nlohmann::ordered_json doc;
  doc["n"] = c.n;
  doc["cav_indices"] = c.cav_indices;
  doc["v_star"] = c.v_star;
  doc["controllable"] = r.controllable;
  doc["controllability_rank"] = r.controllability_rank;
  doc["uncontrollable_mode_count"] = r.uncontrollable_mode_count;
  doc["stabilizable"] = r.stabilizable;
  doc["observable"] = r.observable;
  doc["combined_input_controllable"] = r.combined_input_controllable;
  doc["sampling_preserves_properties"] = r.sampling_preserves_properties;
  doc["controllability_margins"] = r.controllability_margins;
  std::cout << doc.dump(2) << "\n";
  return kOk;
}

int cmd_run(const Options& o) {
  const RunConfig c = load(o);
  const ControllerKind kind = c.controller_kind();
  const ScenarioSpec sc = c.scenario_spec();
  const ExperimentConfig e = c.experiment();
  std::optional<DeepLccController> ctl;
  if (kind == ControllerKind::Deepc) ctl.emplace(load_checked_dataset(c), c.control);
  make_dir(c.out);
  const RunResult r = run_experiment(sc, kind, e, c.seed, ctl ? &*ctl : nullptr);
  const fs::path out = c.out;
  write_stream(out / "trajectory.csv", [&](std::ostream& os) { write_trajectory_csv(os, r.log); });
  write_stream(out / "decisions.csv", [&](std::ostream& os) { write_decision_csv(os, r.log); });
  write_file(out / "metrics.json", metrics_json(r.metrics) + "\n");
  std::cout << "steps " << r.metrics.steps << ", total fuel " << r.metrics.total_fuel << " mL, msve "
            << r.metrics.msve << ", min CAV spacing " << r.metrics.min_cav_spacing << " m\n";
  if (r.metrics.collided) std::cerr << "collision\n";
  if (r.metrics.infeasible_steps > 0) std::cerr << r.metrics.infeasible_steps << " infeasible steps\n";
  return unsafe(r.metrics) ? kUnsafe : kOk;
}

int cmd_batch(const Options& o) {
  const RunConfig c = load(o);
  std::vector<ControllerKind> kinds{ControllerKind::AllHdv, ControllerKind::Mpc};
  if (c.controller_kind() == ControllerKind::Deepc) kinds.push_back(ControllerKind::Deepc);
  const ScenarioSpec sc = c.scenario_spec();
  make_dir(c.out);
  const BatchResult b = batch(sc, kinds, c.experiment(), c.batch_seeds(), c.jobs);
  const fs::path out = c.out;
  write_file(out / "batch_summary.json", batch_summary_json(sc, b) + "\n");
  bool bad = false;
  write_stream(out / "runs.csv", [&](std::ostream& os) {
    os << "controller,seed,realized_cost,total_fuel,msve,min_cav_spacing,infeasible_steps,collided\n";
    os.precision(10);
    for (std::size_t k = 0; k < b.controllers.size(); ++k)
      for (std::size_t s = 0; s < b.seeds.size(); ++s) {
        const RunMetrics& m = b.runs[k][s];
        os << to_string(b.controllers[k]) << ',' << b.seeds[s] << ',' << m.realized_cost << ','
           << m.total_fuel << ',' << m.msve << ',' << m.min_cav_spacing << ',' << m.infeasible_steps
           << ',' << (m.collided ? 1 : 0) << '\n';
        if (b.controllers[k] != ControllerKind::AllHdv && unsafe(m)) bad = true;
      }
  });
  std::cout << batch_summary_json(sc, b) << "\n";
  return bad ? kUnsafe : kOk;
}

int cmd_metrics(const Options& o) {
  const RunConfig c = load(o);
  std::ifstream in(o.trajectory);
  if (!in) throw IoError("cannot open " + o.trajectory);
  RunMetrics m;
  try {
    m = metrics_from_csv(in, c.cav_indices, c.v_star, c.first_metric_vehicle);
  } catch (const std::invalid_argument& e) {
    throw IoError(o.trajectory + ": " + e.what());
  }
  const std::string text = metrics_json(m) + "\n";
  if (o.out) {
    make_dir(*o.out);
    write_file(fs::path(*o.out) / "metrics.json", text);
  }
  std::cout << text;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DeeP-LCC mixed-traffic control"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "run configuration JSON")->required();
    sub->add_option("--seed", o.seed, "override the configured seed");
    sub->add_option("--out", o.out, "output directory");
  };
  auto* collect = app.add_subcommand("collect", "collect an offline dataset");
  auto* check = app.add_subcommand("check", "controllability and observability report");
  auto* run = app.add_subcommand("run", "one closed-loop run");
  auto* batch_cmd = app.add_subcommand("batch", "seeded runs of all-hdv, mpc and the configured controller");
  auto* metrics = app.add_subcommand("metrics", "recompute metrics from a trajectory CSV");
  for (auto* s : {collect, check, run, batch_cmd, metrics}) add_common(s);
  batch_cmd->add_option("--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber);
  metrics->add_option("trajectory", o.trajectory, "trajectory CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*collect) return cmd_collect(o);
    if (*check) return cmd_check(o);
    if (*run) return cmd_run(o);
    if (*batch_cmd) return cmd_batch(o);
    return cmd_metrics(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const CollisionError& e) {
    std::cerr << "collision: " << e.what() << "\n";
    return kUnsafe;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
