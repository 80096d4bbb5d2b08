#include "deeplcc/mpc.hpp"

#include <Eigen/LU>
#include <gtest/gtest.h>

#include "deeplcc/random.hpp"
#include "linear_plant.hpp"

using namespace deeplcc;
using testing_plant::Plant;

namespace {

const MixedConfig& base_cfg() {
  static const MixedConfig cfg = MixedConfig::homogeneous(8, {3, 6});
  return cfg;
}

PastBuffer excited_buffer(Plant& plant, int T_ini) {
  PastBuffer past(T_ini, 8, {3, 6});
  for (int t = 0; t < T_ini; ++t)
    plant.apply(past, Eigen::Vector2d(std::sin(0.3 * t), -std::cos(0.2 * t)), 0.5 * std::sin(0.1 * t));
  return past;
}

MpcConfig wide_cfg(int N) {
  MpcConfig c;
  c.N = N;
  c.s_min = -1e6;
  c.s_max = 1e6;
  c.a_min = -1e6;
  c.a_max = 1e6;
  c.model = testing_plant::nominal_model(base_cfg());
  return c;
}

// First input of the finite-horizon LQ problem by backward Riccati recursion;
// the state after the last input is not penalized.
Eigen::VectorXd riccati_first_input(const DiscreteModel& dm, const Eigen::MatrixXd& Qy, double r, int N,
                                    const Eigen::VectorXd& x0) {
  const Eigen::MatrixXd Qx = dm.Cd.transpose() * Qy * dm.Cd;
  const Eigen::MatrixXd R = r * Eigen::MatrixXd::Identity(dm.inputs(), dm.inputs());
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(dm.states(), dm.states());
  Eigen::MatrixXd K;
  for (int k = N - 1; k >= 0; --k) {
    const Eigen::MatrixXd BtS = dm.Bd.transpose() * S;
    K = (R + BtS * dm.Bd).lu().solve(BtS * dm.Ad);
    S = Qx + dm.Ad.transpose() * S * (dm.Ad - dm.Bd * K);
    S = 0.5 * (S + S.transpose()).eval();
  }
  return -K * x0;
}

}  // namespace

TEST(EstimateInitialState, ExactOnNoiseFreePlant) {
  Plant plant(testing_plant::nominal_model(base_cfg()), 2);
  plant.x = Eigen::VectorXd::LinSpaced(16, -1.0, 1.0);
  const PastBuffer past = excited_buffer(plant, 20);
  const auto est = estimate_initial_state(plant.dm, past, plant.eq);
  EXPECT_LT((est.x_hat - plant.x).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT(est.residual, 1e-8);
}

TEST(EstimateInitialState, EquilibriumHistoryGivesZero) {
  Plant plant(testing_plant::nominal_model(base_cfg()), 2);
  PastBuffer past(20, 8, {3, 6});
  for (int t = 0; t < 20; ++t) plant.apply(past, Eigen::Vector2d::Zero(), 0.0);
  const auto est = estimate_initial_state(plant.dm, past, plant.eq);
  EXPECT_LT(est.x_hat.cwiseAbs().maxCoeff(), 1e-12);
  MpcController mpc(MpcConfig::matching(DeepLccConfig{}, plant.dm));
  EXPECT_LT(mpc.step(past, plant.eq).u_applied.cwiseAbs().maxCoeff(), 1e-9);
}

TEST(EstimateInitialState, ProcessNoiseLeavesFiniteResidual) {
  Plant plant(testing_plant::nominal_model(base_cfg()), 2);
  PastBuffer past(20, 8, {3, 6});
  auto rng = make_stream(5, Stream::PlantNoise);
  std::uniform_real_distribution<double> noise(-0.1, 0.1);
  for (int t = 0; t < 20; ++t) {
    plant.apply(past, Eigen::Vector2d::Zero(), 0.0);
    for (int i = 0; i < 8; ++i)
      if (!base_cfg().is_cav(i + 1)) plant.x(2 * i + 1) += 0.05 * noise(rng);
  }
  const auto est = estimate_initial_state(plant.dm, past, plant.eq);
  EXPECT_GT(est.residual, 0.0);
  EXPECT_TRUE(std::isfinite(est.residual));
}

TEST(EstimateInitialState, ShortWindowIsRejected) {
  Plant plant(testing_plant::nominal_model(base_cfg()), 2);
  PastBuffer past(1, 8, {3, 6});
  plant.apply(past, Eigen::Vector2d::Zero(), 0.0);
  EXPECT_THROW(estimate_initial_state(plant.dm, past, plant.eq), std::invalid_argument);
}

TEST(MpcController, WideBoundsMatchRiccatiRecursion) {
  for (int N : {1, 5, 20, 50}) {
    const auto cfg = wide_cfg(N);
    MpcController mpc(cfg);
    Eigen::VectorXd x0 = Eigen::VectorXd::LinSpaced(16, 1.0, -0.5);
    const auto r = mpc.plan_from(x0, testing_plant::raw_equilibrium(2), Eigen::Vector2d::Zero());
    ASSERT_TRUE(r.feasible);
    Eigen::VectorXd qy(10);
    qy << Eigen::VectorXd::Constant(8, 1.0), Eigen::VectorXd::Constant(2, 0.5);
    const Eigen::VectorXd ref = riccati_first_input(cfg.model, qy.asDiagonal(), 0.1, N, x0);
    EXPECT_LT((r.u_applied - ref).cwiseAbs().maxCoeff(), 1e-6) << "N=" << N;
  }
}

TEST(MpcController, SpacingConstraintBinds) {
  MpcConfig cfg = MpcConfig::matching(DeepLccConfig{}, testing_plant::nominal_model(base_cfg()));
  cfg.eps_forecast = -2.0; // head vehicle slowing down
  cfg.w_s = 0.0;           // only the bound keeps the CAV from closing in
  MpcController mpc(cfg);
  const Equilibrium eq = testing_plant::raw_equilibrium(2);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(16);
  x(4) = (5.0 - 20.0) + 0.1; // first CAV 0.1 m above the lower spacing bound
  x(1) = x(3) = -0.5;
  const auto r = mpc.plan_from(x, eq, Eigen::Vector2d::Zero());
  ASSERT_TRUE(r.feasible);
  const Eigen::VectorXd s = r.plan.y_star.col(8);
  EXPECT_GE(s.minCoeff(), -15.0 - 1e-6);
  EXPECT_LT(s.minCoeff(), -15.0 + 1e-6);
  // Without the bound the plan would cut into the margin.
  MpcConfig loose = cfg;
  loose.s_min = -1e6;
  EXPECT_LT(MpcController(loose).plan_from(x, eq, Eigen::Vector2d::Zero()).plan.y_star.col(8).minCoeff(), -15.0 - 1e-3);
}

TEST(MpcController, InfeasibleSpacingFallsBack) {
  MpcController mpc(MpcConfig::matching(DeepLccConfig{}, testing_plant::nominal_model(base_cfg())));
  Eigen::VectorXd x = Eigen::VectorXd::Zero(16);
  x(4) = 3.0 - 20.0;
  const auto r = mpc.plan_from(x, testing_plant::raw_equilibrium(2), Eigen::Vector2d(-8.0, 1.0));
  EXPECT_FALSE(r.feasible);
  EXPECT_EQ(r.u_applied, Eigen::Vector2d(-4.0, 0.5));
}

TEST(MpcController, LongerHorizonNeverRaisesRealizedCost) {
  // Closed-loop cost of a noise-free run from a fixed initial condition.
  auto realized = [](int N) {
    MpcController mpc(wide_cfg(N));
    Plant plant(testing_plant::nominal_model(base_cfg()), 2);
    plant.x = Eigen::VectorXd::LinSpaced(16, 1.0, -1.0);
    PastBuffer past(20, 8, {3, 6});
    for (int t = 0; t < 20; ++t) plant.apply(past, Eigen::Vector2d::Zero(), 0.0);
    double J = 0.0;
    for (int t = 0; t < 300; ++t) {
      const auto r = mpc.step(past, plant.eq);
      const Eigen::VectorXd y = plant.dm.Cd * plant.x;
      J += y.head(8).squaredNorm() + 0.5 * y.tail(2).squaredNorm() + 0.1 * r.u_applied.squaredNorm();
      plant.apply(past, r.u_applied, 0.0);
    }
    return J;
  };
  double prev = realized(2);
  for (int N : {5, 10, 20, 40, 80}) {
    const double J = realized(N);
    EXPECT_LE(J, prev * (1.0 + 1e-9)) << "N=" << N;
    prev = J;
  }
}

TEST(MpcController, OneShotMatchesController) {
  const auto cfg = MpcConfig::matching(DeepLccConfig{}, testing_plant::nominal_model(base_cfg()));
  Plant plant(cfg.model, 2);
  const PastBuffer past = excited_buffer(plant, 20);
  const auto a = MpcController(cfg).step(past, plant.eq);
  const auto b = mpc_step(cfg, past, plant.eq);
  EXPECT_EQ(a.u_applied, b.u_applied);
  EXPECT_GT(a.plan.objective, 0.0);
}
