#pragma once

// Noise-free linearized platoon used as a test plant for the controllers.

#include <random>

#include "deeplcc/data.hpp"
#include "deeplcc/deepc.hpp"
#include "deeplcc/traffic.hpp"

namespace testing_plant {

using namespace deeplcc;

inline DiscreteModel nominal_model(const MixedConfig& cfg, double v_star = 15.0, double dt = 0.05) {
  return discretize(build_continuous_model(cfg, linearize_platoon(cfg, v_star)), dt);
}

// Equilibrium used to turn linear-model deviations into raw measurements.
inline Equilibrium raw_equilibrium(int m) { return Equilibrium{15.0, std::vector<double>(m, 20.0)}; }

inline TrajectoryDataset linear_dataset(const DiscreteModel& dm, const MixedConfig& cfg, int T,
                                        std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  TrajectoryDataset ds;
  ds.n = cfg.n;
  ds.cav_indices = cfg.cav_indices;
  ds.v_star = 15.0;
  ds.s_star.assign(cfg.m(), 20.0);
  ds.u.resize(T, cfg.m());
  ds.eps.resize(T);
  ds.y.resize(T, dm.outputs());
  Eigen::VectorXd x = Eigen::VectorXd::Zero(dm.states());
  for (int t = 0; t < T; ++t) {
    for (int k = 0; k < cfg.m(); ++k) ds.u(t, k) = unit(rng);
    ds.eps(t) = unit(rng);
    ds.y.row(t) = (dm.Cd * x).transpose();
    x = dm.Ad * x + dm.Bd * ds.u.row(t).transpose() + dm.Hd * ds.eps(t);
  }
  return ds;
}

struct Plant {
  DiscreteModel dm;
  Eigen::VectorXd x;
  Equilibrium eq;

  Plant(DiscreteModel model, int m) : dm(std::move(model)), x(Eigen::VectorXd::Zero(dm.states())), eq(raw_equilibrium(m)) {}

  int n() const { return static_cast<int>(x.size() / 2); }

  Eigen::VectorXd spacing() const {
    Eigen::VectorXd s(n());
    for (int i = 0; i < n(); ++i) s(i) = eq.s_star[0] + x(2 * i);
    return s;
  }
  Eigen::VectorXd velocity() const {
    Eigen::VectorXd v(n());
    for (int i = 0; i < n(); ++i) v(i) = eq.v_star + x(2 * i + 1);
    return v;
  }

  // Records the current measurement with input u, then advances the plant.
  void apply(PastBuffer& past, const Eigen::VectorXd& u, double eps) {
    past.push(u, eq.v_star + eps, velocity(), spacing());
    x = dm.Ad * x + dm.Bd * u + dm.Hd * eps;
  }
};

}  // namespace testing_plant
