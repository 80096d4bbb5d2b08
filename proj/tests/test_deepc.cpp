#include "deeplcc/deepc.hpp"

#include <sstream>

#include <gtest/gtest.h>

#include "deeplcc/mpc.hpp"
#include "linear_plant.hpp"

using namespace deeplcc;
using testing_plant::Plant;

namespace {

const MixedConfig& base_cfg() {
  static const MixedConfig cfg = MixedConfig::homogeneous(8, {3, 6});
  return cfg;
}

// Dataset from the noise-free linear plant, shared across tests.
const TrajectoryDataset& linear_data() {
  static const TrajectoryDataset ds = [] {
    std::mt19937_64 rng(42);
    return testing_plant::linear_dataset(testing_plant::nominal_model(base_cfg()), base_cfg(), 800, rng);
  }();
  return ds;
}

DeepLccConfig equivalence_cfg() {
  DeepLccConfig c;
  c.lambda_g = 0.0;
  c.lambda_y = 1e7;
  c.tol = 1e-9;
  return c;
}

// Warms the buffer with T_ini samples of the plant at rest, then applies a
// pulse through the CAV inputs so the window carries a nontrivial state.
PastBuffer excited_buffer(Plant& plant, int T_ini, double amplitude) {
  PastBuffer past(T_ini, 8, {3, 6});
  for (int t = 0; t < T_ini; ++t) {
    Eigen::Vector2d u(amplitude * std::sin(0.3 * t), -amplitude * std::cos(0.2 * t));
    plant.apply(past, u, 0.5 * amplitude * std::sin(0.1 * t));
  }
  return past;
}

}  // namespace

TEST(DeepLccConfig, ValidationAndWarnings) {
  DeepLccConfig c;
  EXPECT_TRUE(c.validate(8).empty());
  c.T_ini = 10;
  EXPECT_EQ(c.validate(8).size(), 1u);
  c.lambda_y = 0.0;
  EXPECT_THROW(c.validate(8), std::invalid_argument);
  c = DeepLccConfig{};
  c.s_min = 50.0;
  EXPECT_THROW(c.validate(8), std::invalid_argument);
}

TEST(PastBuffer, KeepsLastSamplesInOrder) {
  PastBuffer past(4, 2, {2});
  for (int t = 0; t < 7; ++t) {
    EXPECT_EQ(past.warmed(), t >= 4);
    past.push(Eigen::VectorXd::Constant(1, t), 10.0 + t, Eigen::Vector2d(t, -t), Eigen::Vector2d(100 + t, 200 + t));
  }
  ASSERT_TRUE(past.warmed());
  EXPECT_EQ(past.u_ini(), Eigen::Vector4d(3, 4, 5, 6));
  EXPECT_EQ(past.head_history(), Eigen::Vector4d(13, 14, 15, 16));
  EXPECT_EQ(past.eps_ini(10.0), Eigen::Vector4d(3, 4, 5, 6));
  const Equilibrium eq{1.0, {200.0}};
  const Eigen::VectorXd y = past.y_ini(eq);
  ASSERT_EQ(y.size(), 12);
  for (int k = 0; k < 4; ++k) {
    const int t = 3 + k;
    EXPECT_EQ(y(3 * k), t - 1.0);
    EXPECT_EQ(y(3 * k + 1), -t - 1.0);
    EXPECT_EQ(y(3 * k + 2), 200.0 + t - 200.0);
  }
  EXPECT_EQ(past.last_input()(0), 6.0);
}

TEST(PastBuffer, RebasesOnTheCurrentEquilibrium) {
  PastBuffer past(2, 1, {1});
  past = update_past(past, Eigen::VectorXd::Zero(1), 12.0, Eigen::VectorXd::Constant(1, 12.0), Eigen::VectorXd::Constant(1, 15.0));
  past = update_past(past, Eigen::VectorXd::Zero(1), 12.0, Eigen::VectorXd::Constant(1, 12.0), Eigen::VectorXd::Constant(1, 15.0));
  const Eigen::VectorXd at_collection = past.y_ini({15.0, {20.0}});
  const auto now = estimate_equilibrium(past.head_history(), 1);
  const Eigen::VectorXd at_estimate = past.y_ini(now.eq);
  EXPECT_NEAR(at_collection(0), -3.0, 1e-12);
  EXPECT_NEAR(at_estimate(0), 0.0, 1e-12);
  EXPECT_NEAR(at_estimate(1), 15.0 - solve_equilibrium_spacing(12.0, HdvParams::nominal()), 1e-12);
}

TEST(EstimateEquilibrium, Cases) {
  const auto a = estimate_equilibrium(Eigen::VectorXd::Constant(20, 15.0), 2);
  EXPECT_NEAR(a.eq.v_star, 15.0, 1e-12);
  ASSERT_EQ(a.eq.s_star.size(), 2u);
  // Bisection oracle on the desired-velocity curve.
  double lo = 5.0, hi = 35.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (ovm_desired_velocity(mid, HdvParams::nominal()) < 15.0 ? lo : hi) = mid;
  }
  EXPECT_NEAR(a.eq.s_star[0], lo, 1e-9);
  EXPECT_FALSE(a.clamped);

  const auto b = estimate_equilibrium(Eigen::VectorXd::LinSpaced(21, 14.0, 16.0), 2);
  EXPECT_NEAR(b.eq.v_star, 15.0, 1e-12);

  const auto c = estimate_equilibrium(Eigen::VectorXd::Constant(20, 30.0), 2);
  EXPECT_TRUE(c.clamped);
  EXPECT_NEAR(c.eq.v_star, 28.5, 1e-12);
  EXPECT_TRUE(estimate_equilibrium(Eigen::VectorXd::Constant(5, -1.0), 1).clamped);
}

TEST(AssembleQp, DefaultDimensionsAndWeights) {
  const auto h = build_hankel_set(linear_data(), 20, 50);
  Plant plant(testing_plant::nominal_model(base_cfg()), 2);
  PastBuffer past = excited_buffer(plant, 20, 0.5);
  DeepLccConfig cfg;
  const auto prog = assemble_qp(h, past, cfg, plant.eq);
  ASSERT_EQ(prog.dim(), 931);
  EXPECT_EQ(prog.Aeq.rows(), 40 + 20 + 200 + 50);
  EXPECT_EQ(prog.Aineq.rows(), 200);
  for (int i = 731; i < 931; ++i) EXPECT_EQ(prog.P(i, i), 1e4);
  EXPECT_EQ(prog.P.topRightCorner(731, 200).cwiseAbs().maxCoeff(), 0.0);

  // z'Pz against the cost written out term by term.
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  const Eigen::VectorXd z = Eigen::VectorXd::NullaryExpr(931, [&] { return g(rng); });
  const Eigen::VectorXd gv = z.head(731), sig = z.tail(200);
  const Eigen::VectorXd u = h.Uf * gv, y = h.Yf * gv;
  double J = 0.0;
  for (int k = 0; k < 50; ++k) {
    for (int i = 0; i < 8; ++i) J += 1.0 * y(k * 10 + i) * y(k * 10 + i);
    for (int j = 0; j < 2; ++j) J += 0.5 * y(k * 10 + 8 + j) * y(k * 10 + 8 + j);
    for (int j = 0; j < 2; ++j) J += 0.1 * u(k * 2 + j) * u(k * 2 + j);
  }
  J += 10.0 * gv.squaredNorm() + 1e4 * sig.squaredNorm();
  EXPECT_NEAR(z.dot(prog.P * z), J, 1e-9 * J);

  // Bounds are shifted by the CAV equilibrium spacing.
  EXPECT_EQ(prog.lower(0), 5.0 - 20.0);
  EXPECT_EQ(prog.upper(1), 40.0 - 20.0);
  EXPECT_EQ(prog.lower(100), -5.0);
  EXPECT_EQ(prog.upper(199), 2.0);
  EXPECT_EQ(prog.beq.tail(50), Eigen::VectorXd::Zero(50));
}

TEST(DeepLccController, RejectsNonExcitingData) {
  CollectionOptions opts;
  opts.delta_u = opts.delta_eps = opts.hdv_noise = 0.0;
  const auto ds = collect_offline(base_cfg(), 15.0, 800, 1, opts);
  EXPECT_THROW(DeepLccController(ds, DeepLccConfig{}), DatasetError);
}

TEST(DeepLccController, RestingAtEquilibriumAppliesNothing) {
  DeepLccController ctrl(linear_data(), DeepLccConfig{});
  EXPECT_EQ(ctrl.decision_dim(), 931);
  Plant plant(testing_plant::nominal_model(base_cfg()), 2);
  PastBuffer past(20, 8, {3, 6});
  for (int t = 0; t < 20; ++t) plant.apply(past, Eigen::Vector2d::Zero(), 0.0);
  const auto r = ctrl.step(past, plant.eq);
  ASSERT_TRUE(r.feasible);
  EXPECT_LT(r.u_applied.cwiseAbs().maxCoeff(), 1e-3);
}

TEST(DeepLccController, MatchesModelBasedMpcOnLinearPlant) {
  const auto cfg = equivalence_cfg();
  DeepLccController deepc(linear_data(), cfg);
  MpcController mpc(MpcConfig::matching(cfg, testing_plant::nominal_model(base_cfg())));
  Plant plant(testing_plant::nominal_model(base_cfg()), 2);
  PastBuffer past = excited_buffer(plant, 20, 1.0);

  const auto rd = deepc.step(past, plant.eq);
  const auto rm = mpc.step(past, plant.eq);
  ASSERT_TRUE(rd.feasible);
  ASSERT_TRUE(rm.feasible);
  EXPECT_GT(rm.u_applied.cwiseAbs().maxCoeff(), 1e-2);
  EXPECT_LT((rd.u_applied - rm.u_applied).cwiseAbs().maxCoeff(), 1e-3);

  // Predicted outputs follow the model rollout of the planned inputs.
  const auto est = estimate_initial_state(plant.dm, past, plant.eq);
  EXPECT_LT((est.x_hat - plant.x).cwiseAbs().maxCoeff(), 1e-8);
  Eigen::VectorXd x = est.x_hat;
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    worst = std::max(worst, (plant.dm.Cd * x - rd.decision.y_star.row(k).transpose()).cwiseAbs().maxCoeff());
    x = plant.dm.Ad * x + plant.dm.Bd * rd.decision.u_star.row(k).transpose();
  }
  EXPECT_LT(worst, 1e-6);
  // Slack stays inactive on consistent data.
  EXPECT_LT(rd.decision.sigma_y.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(DeepLccController, DecisionRespectsBounds) {
  DeepLccController ctrl(linear_data(), DeepLccConfig{});
  Plant plant(testing_plant::nominal_model(base_cfg()), 2);
  // The first CAV starts 1.5 m above its lower spacing bound, closing in.
  plant.x(4) = 6.5 - 20.0;
  plant.x(5) = 1.0;
  PastBuffer past(20, 8, {3, 6});
  for (int t = 0; t < 20; ++t) plant.apply(past, Eigen::Vector2d::Zero(), 0.0);
  ASSERT_GT(plant.spacing()(2), 5.0);
  const auto r = ctrl.step(past, plant.eq);
  ASSERT_TRUE(r.feasible);
  const double tol = 1e-5;
  for (int k = 0; k < 50; ++k) {
    for (int j = 0; j < 2; ++j) {
      EXPECT_GE(r.decision.y_star(k, 8 + j), 5.0 - 20.0 - tol);
      EXPECT_LE(r.decision.y_star(k, 8 + j), 40.0 - 20.0 + tol);
      EXPECT_GE(r.decision.u_star(k, j), -5.0 - tol);
      EXPECT_LE(r.decision.u_star(k, j), 2.0 + tol);
    }
  }
  const Eigen::VectorXd uf = ctrl.hankel_set().Uf * r.decision.g_star;
  for (int k = 0; k < 50; ++k)
    for (int j = 0; j < 2; ++j) EXPECT_EQ(r.decision.u_star(k, j), uf(2 * k + j));
}

TEST(DeepLccController, InfeasibleStepFallsBack) {
  // Two-column data in which the future input must repeat the past one, so a
  // past input above a_max leaves no admissible plan.
  HankelSet h;
  h.T_ini = 1;
  h.N = 1;
  h.Up = Eigen::RowVector2d(1, 1);
  h.Uf = Eigen::RowVector2d(1, 1);
  h.Ep = Eigen::RowVector2d(1, -1);
  h.Ef = Eigen::RowVector2d(1, -1);
  h.Yp = Eigen::MatrixXd::Zero(2, 2);
  h.Yf = Eigen::MatrixXd::Zero(2, 2);
  h.persistently_exciting = true;
  DeepLccConfig cfg;
  cfg.T_ini = 1;
  cfg.N = 1;
  DeepLccController ctrl(h, 1, {1}, cfg);
  EXPECT_EQ(ctrl.warnings().size(), 1u);
  PastBuffer past(1, 1, {1});
  past.push(Eigen::VectorXd::Constant(1, 3.0), 15.0, Eigen::VectorXd::Constant(1, 15.0),
            Eigen::VectorXd::Constant(1, 20.0));
  const Equilibrium eq{15.0, {20.0}};
  const auto r = ctrl.step(past, eq);
  EXPECT_FALSE(r.feasible);
  EXPECT_EQ(r.status, qp::Status::Infeasible);
  EXPECT_EQ(r.u_applied(0), 1.5);

  past.push(Eigen::VectorXd::Constant(1, 12.0), 15.0, Eigen::VectorXd::Constant(1, 15.0),
            Eigen::VectorXd::Constant(1, 20.0));
  EXPECT_EQ(ctrl.step(past, eq).u_applied(0), 2.0);
}

TEST(DeepLccController, OneShotStepMatchesController) {
  DeepLccController ctrl(linear_data(), DeepLccConfig{});
  Plant plant(testing_plant::nominal_model(base_cfg()), 2);
  PastBuffer past = excited_buffer(plant, 20, 1.0);
  const auto a = ctrl.step(past, plant.eq);
  const auto b = control_step(ctrl.hankel_set(), past, DeepLccConfig{}, plant.eq);
  EXPECT_EQ(a.u_applied, b.u_applied);
  EXPECT_EQ(a.decision.objective, b.decision.objective);
  EXPECT_GT(a.decision.objective, 0.0);
}

TEST(DeepLccController, RecedingHorizonIsDeterministic) {
  DeepLccController ctrl(linear_data(), DeepLccConfig{});
  auto run = [&] {
    Plant plant(testing_plant::nominal_model(base_cfg()), 2);
    PastBuffer past(20, 8, {3, 6});
    for (int t = 0; t < 20; ++t) plant.apply(past, Eigen::Vector2d::Zero(), 0.0);
    std::vector<Eigen::VectorXd> inputs;
    for (int t = 0; t < 30; ++t) {
      const auto r = ctrl.step(past, plant.eq);
      inputs.push_back(r.u_applied);
      plant.apply(past, r.u_applied, 2.0 * std::sin(0.2 * t));
    }
    return inputs;
  };
  EXPECT_EQ(run(), run());
}

TEST(DecisionLog, CsvLayout) {
  std::ostringstream os;
  write_decision_header(os, 2);
  write_decision_row(os, {0.25, Eigen::Vector2d(1.5, -0.5), 12.0, 0.0, true});
  write_decision_row(os, {0.3, Eigen::Vector2d(0.0, 0.0), 0.0, 1e-3, false});
  EXPECT_EQ(os.str(),
            "t,u_1,u_2,objective,sigma_y_norm,feasible\n"
            "0.2500,1.5,-0.5,12,0,1\n"
            "0.3000,0,0,0,0.001,0\n");
}
