#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "deeplcc/traffic.hpp"

namespace deeplcc {

/// Pre-collected input/output trajectory, stored as deviations from the
/// collection equilibrium. Rows are time samples.
struct TrajectoryDataset {
  int n = 0;
  std::vector<int> cav_indices;
  double dt = 0.05;
  double v_star = 0.0;        // collection equilibrium velocity
  std::vector<double> s_star; // CAV equilibrium spacings
  Eigen::MatrixXd u;          // T x m
  Eigen::VectorXd eps;        // T
  Eigen::MatrixXd y;          // T x (n+m)

  int m() const { return static_cast<int>(cav_indices.size()); }
  int length() const { return static_cast<int>(u.rows()); }
  /// Throws DatasetError on inconsistent dimensions.
  void validate() const;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct HankelSet {
  int T_ini = 0;
  int N = 0;
  Eigen::MatrixXd Up, Uf, Ep, Ef, Yp, Yf;
  bool persistently_exciting = false; // combined input (eps; u) of order T_ini+N+2n

  Eigen::Index columns() const { return Up.cols(); }
};

/// Block Hankel matrix of depth L. `signal` is T x d; column j stacks samples
/// j..j+L-1.
Eigen::MatrixXd hankel(const Eigen::MatrixXd& signal, int depth);

bool is_persistently_exciting(const Eigen::MatrixXd& signal, int order, double tol = 1e-8);

/// Shortest trajectory whose combined-input Hankel matrix of order
/// T_ini + N + 2n can have full row rank.
int min_data_length(int m, int T_ini, int N, int n);

HankelSet build_hankel_set(const TrajectoryDataset& ds, int T_ini, int N);

/// Combined input (eps; u), T x (1+m).
Eigen::MatrixXd combined_input(const TrajectoryDataset& ds);

struct CollectionOptions {
  double dt = 0.05;
  double delta_u = 1.0;        // CAV input perturbation bound, m/s^2
  double delta_eps = 1.0;      // head velocity perturbation bound, m/s
  int eps_hold_steps = 10;     // head perturbation held this many steps
  double hdv_noise = 0.1;      // HDV acceleration noise bound, m/s^2
  double a_min = -5.0;
  double a_max = 2.0;
  HdvParams cav_params = HdvParams::nominal();
};

/// Simulates the nonlinear platoon around v_star with perturbed OVM-driven
/// CAVs and a randomly stepping head vehicle. Throws CollisionError if the
/// platoon collides.
TrajectoryDataset collect_offline(const MixedConfig& cfg, double v_star, int T, std::uint64_t seed,
                                  const CollectionOptions& opts = {});

inline constexpr int kDatasetVersion = 1;

void save_dataset(const TrajectoryDataset& ds, const std::filesystem::path& path);
TrajectoryDataset load_dataset(const std::filesystem::path& path);
std::string dataset_to_json(const TrajectoryDataset& ds);
TrajectoryDataset dataset_from_json(const std::string& text);

}  // namespace deeplcc
