#include "deeplcc/data.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <Eigen/SVD>
#include <json.hpp>

#include "deeplcc/analysis.hpp"
#include "deeplcc/random.hpp"

namespace deeplcc {

void TrajectoryDataset::validate() const {
  const Eigen::Index T = u.rows();
  if (n < 1 || m() < 1 || m() > n) throw DatasetError("dataset: invalid platoon dimensions");
  if (u.cols() != m()) throw DatasetError("dataset: input width does not match m");
  if (eps.size() != T || y.rows() != T) throw DatasetError("dataset: sequences differ in length");
  if (y.cols() != n + m()) throw DatasetError("dataset: output width does not match n + m");
  if (static_cast<int>(s_star.size()) != m()) throw DatasetError("dataset: need one s_star per CAV");
  if (!(dt > 0.0)) throw DatasetError("dataset: dt must be positive");
}

Eigen::MatrixXd hankel(const Eigen::MatrixXd& signal, int depth) {
  const Eigen::Index T = signal.rows();
  const Eigen::Index d = signal.cols();
  if (depth < 1 || depth > T)
    throw std::invalid_argument("hankel: depth must lie in [1, T]");
  const Eigen::Index cols = T - depth + 1;
  Eigen::MatrixXd H(depth * d, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index k = 0; k < depth; ++k)
      H.block(k * d, j, d, 1) = signal.row(j + k).transpose();
  return H;
}

bool is_persistently_exciting(const Eigen::MatrixXd& signal, int order, double tol) {
  const Eigen::Index rows = order * signal.cols();
  if (order < 1 || order > signal.rows() || rows > signal.rows() - order + 1) return false;
  return analysis::numerical_rank(hankel(signal, order), tol) == rows;
}

int min_data_length(int m, int T_ini, int N, int n) {
  if (m < 1 || T_ini < 1 || N < 1 || n < 1)
    throw std::invalid_argument("min_data_length: arguments must be positive");
  return (m + 1) * (T_ini + N + 2 * n) - 1;
}

Eigen::MatrixXd combined_input(const TrajectoryDataset& ds) {
  Eigen::MatrixXd w(ds.length(), 1 + ds.m());
  w << ds.eps, ds.u;
  return w;
}

HankelSet build_hankel_set(const TrajectoryDataset& ds, int T_ini, int N) {
  ds.validate();
  if (T_ini < 1 || N < 1) throw std::invalid_argument("build_hankel_set: T_ini and N must be positive");
  const int L = T_ini + N;
  if (ds.length() < L)
    throw std::invalid_argument("build_hankel_set: dataset shorter than T_ini + N");
  const int m = ds.m();
  const int p = ds.n + m;

  const Eigen::MatrixXd HU = hankel(ds.u, L);
  const Eigen::MatrixXd HE = hankel(ds.eps, L);
  const Eigen::MatrixXd HY = hankel(ds.y, L);

  HankelSet h;
  h.T_ini = T_ini;
  h.N = N;
  h.Up = HU.topRows(T_ini * m);
  h.Uf = HU.bottomRows(N * m);
  h.Ep = HE.topRows(T_ini);
  h.Ef = HE.bottomRows(N);
  h.Yp = HY.topRows(T_ini * p);
  h.Yf = HY.bottomRows(N * p);
  h.persistently_exciting = is_persistently_exciting(combined_input(ds), L + 2 * ds.n);
  return h;
}

TrajectoryDataset collect_offline(const MixedConfig& cfg, double v_star, int T, std::uint64_t seed,
                                  const CollectionOptions& opts) {
  cfg.validate();
  if (T < 1) throw std::invalid_argument("collect_offline: T must be positive");
  if (opts.eps_hold_steps < 1) throw std::invalid_argument("collect_offline: hold must be positive");
  const int n = cfg.n;
  const int m = cfg.m();

  auto input_rng = make_stream(seed, Stream::CollectionInput);
  auto head_rng = make_stream(seed, Stream::CollectionHead);
  auto plant_rng = make_stream(seed, Stream::CollectionPlant);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  TrajectoryDataset ds;
  ds.n = n;
  ds.cav_indices = cfg.cav_indices;
  ds.dt = opts.dt;
  ds.v_star = v_star;
  const double cav_s_star = solve_equilibrium_spacing(v_star, opts.cav_params);
  ds.s_star.assign(static_cast<std::size_t>(m), cav_s_star);
  ds.u.resize(T, m);
  ds.eps.resize(T);
  ds.y.resize(T, n + m);

  // The head perturbation is drawn once per hold window.
  std::vector<double> head(static_cast<std::size_t>(T + 1));
  for (int t = 0; t <= T; ++t) {
    if (t % opts.eps_hold_steps == 0) head[t] = opts.delta_eps * unit(head_rng);
    else head[t] = head[t - 1];
  }

  StepOptions step;
  step.dt = opts.dt;
  step.a_min = opts.a_min;
  step.a_max = opts.a_max;

  TrafficState st = equilibrium_state(platoon_equilibrium(cfg, v_star, opts.cav_params));
  st.head_velocity = v_star + head[0];
  Eigen::VectorXd u(m);
  Eigen::VectorXd noise(n - m);
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < n; ++i) ds.y(t, i) = st.velocity(i) - v_star;
    for (int k = 0; k < m; ++k) {
      const int idx = cfg.cav_indices[k] - 1;
      const double ahead = idx == 0 ? st.head_velocity : st.velocity(idx - 1);
      ds.y(t, n + k) = st.spacing(idx) - cav_s_star;
      const double a = ovm_acceleration(std::max(st.spacing(idx), 0.0), ahead - st.velocity(idx),
                                        st.velocity(idx), opts.cav_params) +
                       opts.delta_u * unit(input_rng);
      u(k) = std::clamp(a, opts.a_min, opts.a_max);
    }
    for (int j = 0; j < n - m; ++j) noise(j) = opts.hdv_noise * unit(plant_rng);
    ds.u.row(t) = u.transpose();
    ds.eps(t) = head[t];

    st = step_nonlinear(st, u, v_star + head[t + 1], noise, cfg, step);
    if (st.collided)
      throw CollisionError("collect_offline: collision at step " + std::to_string(t + 1));
  }
  return ds;
}

namespace {

void write_double(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}

template <typename Row>
void write_row(std::ostream& os, const Row& row) {
  os << '[';
  for (Eigen::Index j = 0; j < row.size(); ++j) {
    if (j) os << ',';
    write_double(os, row(j));
  }
  os << ']';
}

}  // namespace

std::string dataset_to_json(const TrajectoryDataset& ds) {
  ds.validate();
  std::ostringstream os;
  os << "{\"version\":" << kDatasetVersion << ",\"n\":" << ds.n << ",\"m\":" << ds.m()
     << ",\"cav_indices\":[";
  for (std::size_t k = 0; k < ds.cav_indices.size(); ++k) os << (k ? "," : "") << ds.cav_indices[k];
  os << "],\"dt\":";
  write_double(os, ds.dt);
  os << ",\"v_star\":";
  write_double(os, ds.v_star);
  os << ",\"s_star\":[";
  for (std::size_t k = 0; k < ds.s_star.size(); ++k) {
    if (k) os << ',';
    write_double(os, ds.s_star[k]);
  }
  os << "],\"T\":" << ds.length() << ",\n\"u\":[";
  for (Eigen::Index t = 0; t < ds.u.rows(); ++t) {
    if (t) os << ",\n";
    write_row(os, ds.u.row(t));
  }
  os << "],\n\"eps\":";
  write_row(os, ds.eps);
  os << ",\n\"y\":[";
  for (Eigen::Index t = 0; t < ds.y.rows(); ++t) {
    if (t) os << ",\n";
    write_row(os, ds.y.row(t));
  }
  os << "]}\n";
  return os.str();
}

TrajectoryDataset dataset_from_json(const std::string& text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DatasetError(std::string("dataset: parse error: ") + e.what());
  }
  try {
    if (doc.at("version").get<int>() != kDatasetVersion)
      throw DatasetError("dataset: unsupported version " + doc.at("version").dump());
    TrajectoryDataset ds;
    ds.n = doc.at("n").get<int>();
    ds.cav_indices = doc.at("cav_indices").get<std::vector<int>>();
    if (doc.at("m").get<int>() != ds.m()) throw DatasetError("dataset: m disagrees with cav_indices");
    ds.dt = doc.at("dt").get<double>();
    ds.v_star = doc.at("v_star").get<double>();
    ds.s_star = doc.at("s_star").get<std::vector<double>>();
    const int T = doc.at("T").get<int>();
    const auto& u = doc.at("u");
    const auto& eps = doc.at("eps");
    const auto& y = doc.at("y");
    if (static_cast<int>(u.size()) != T || static_cast<int>(eps.size()) != T ||
        static_cast<int>(y.size()) != T)
      throw DatasetError("dataset: sequence length disagrees with T");
    const int m = ds.m();
    const int p = ds.n + m;
    ds.u.resize(T, m);
    ds.eps.resize(T);
    ds.y.resize(T, p);
    for (int t = 0; t < T; ++t) {
      if (static_cast<int>(u[t].size()) != m) throw DatasetError("dataset: u row width is not m");
      if (static_cast<int>(y[t].size()) != p) throw DatasetError("dataset: y row width is not n + m");
      for (int k = 0; k < m; ++k) ds.u(t, k) = u[t][k].get<double>();
      for (int k = 0; k < p; ++k) ds.y(t, k) = y[t][k].get<double>();
      ds.eps(t) = eps[t].get<double>();
    }
    ds.validate();
    return ds;
  } catch (const json::exception& e) {
    throw DatasetError(std::string("dataset: malformed document: ") + e.what());
  }
}

void save_dataset(const TrajectoryDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::ios_base::failure("cannot open " + path.string() + " for writing");
  out << dataset_to_json(ds);
  if (!out) throw std::ios_base::failure("failed writing " + path.string());
}

TrajectoryDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::ios_base::failure("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return dataset_from_json(buf.str());
}

}  // namespace deeplcc
