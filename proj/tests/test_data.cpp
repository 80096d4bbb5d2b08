#include "deeplcc/data.hpp"

#include <filesystem>
#include <fstream>
#include <random>

#include <Eigen/QR>
#include <gtest/gtest.h>

using namespace deeplcc;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("deeplcc_" + name);
}

// Noise-free simulation of the linearized platoon driven by random inputs.
TrajectoryDataset linear_dataset(const DiscreteModel& dm, const MixedConfig& cfg, int T,
                                 std::mt19937_64& rng, Eigen::VectorXd x0) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  TrajectoryDataset ds;
  ds.n = cfg.n;
  ds.cav_indices = cfg.cav_indices;
  ds.v_star = 15.0;
  ds.s_star.assign(cfg.m(), 20.0);
  ds.u.resize(T, cfg.m());
  ds.eps.resize(T);
  ds.y.resize(T, dm.outputs());
  Eigen::VectorXd x = std::move(x0);
  for (int t = 0; t < T; ++t) {
    for (int k = 0; k < cfg.m(); ++k) ds.u(t, k) = unit(rng);
    ds.eps(t) = unit(rng);
    ds.y.row(t) = (dm.Cd * x).transpose();
    x = dm.Ad * x + dm.Bd * ds.u.row(t).transpose() + dm.Hd * ds.eps(t);
  }
  return ds;
}

DiscreteModel base_model(const MixedConfig& cfg) {
  return discretize(build_continuous_model(cfg, linearize_platoon(cfg, 15.0)), 0.05);
}

// Largest least-squares residual of fresh trajectories against the stacked
// Hankel matrix of `ds`.
double worst_fresh_residual(const TrajectoryDataset& ds, const DiscreteModel& dm,
                            const MixedConfig& cfg, int T_ini, int L, int trials,
                            std::mt19937_64& rng) {
  const auto h = build_hankel_set(ds, T_ini, L - T_ini);
  Eigen::MatrixXd H(h.Up.rows() + h.Uf.rows() + h.Ep.rows() + h.Ef.rows() + h.Yp.rows() + h.Yf.rows(),
                    h.columns());
  H << h.Up, h.Uf, h.Ep, h.Ef, h.Yp, h.Yf;
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(H);
  std::normal_distribution<double> g;
  double worst = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    Eigen::VectorXd x0 = Eigen::VectorXd::NullaryExpr(dm.states(), [&] { return g(rng); });
    const auto fresh = linear_dataset(dm, cfg, L, rng, x0);
    Eigen::VectorXd w(H.rows());
    Eigen::Index r = 0;
    for (int t = 0; t < L; ++t)
      for (int k = 0; k < fresh.m(); ++k) w(r++) = fresh.u(t, k);
    for (int t = 0; t < L; ++t) w(r++) = fresh.eps(t);
    for (int t = 0; t < L; ++t)
      for (Eigen::Index k = 0; k < fresh.y.cols(); ++k) w(r++) = fresh.y(t, k);
    const Eigen::VectorXd gsol = qr.solve(w);
    worst = std::max(worst, (H * gsol - w).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace

TEST(Hankel, ScalarExample) {
  Eigen::MatrixXd s(5, 1);
  s << 1, 2, 3, 4, 5;
  Eigen::MatrixXd expect(2, 4);
  expect << 1, 2, 3, 4, 2, 3, 4, 5;
  EXPECT_EQ(hankel(s, 2), expect);
  EXPECT_EQ(hankel(s, 5), s);
  EXPECT_THROW(hankel(s, 6), std::invalid_argument);
}

TEST(Hankel, WindowPropertyOnRandomSignals) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const int T = std::uniform_int_distribution<int>(1, 40)(rng);
    const int d = std::uniform_int_distribution<int>(1, 4)(rng);
    const int L = std::uniform_int_distribution<int>(1, T)(rng);
    const Eigen::MatrixXd s = Eigen::MatrixXd::Random(T, d);
    const Eigen::MatrixXd H = hankel(s, L);
    ASSERT_EQ(H.rows(), L * d);
    ASSERT_EQ(H.cols(), T - L + 1);
    for (int j = 0; j < H.cols(); ++j)
      for (int k = 0; k < L; ++k)
        for (int c = 0; c < d; ++c) EXPECT_EQ(H(k * d + c, j), s(j + k, c));
  }
}

TEST(PersistentExcitation, Cases) {
  EXPECT_FALSE(is_persistently_exciting(Eigen::MatrixXd::Constant(50, 1, 2.0), 2));
  EXPECT_FALSE(is_persistently_exciting(Eigen::MatrixXd::Zero(50, 1), 1));
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const Eigen::MatrixXd s = Eigen::MatrixXd::NullaryExpr(100, 1, [&] { return unit(rng); });
  EXPECT_TRUE(is_persistently_exciting(s, 5));
  // Too short for full row rank.
  EXPECT_FALSE(is_persistently_exciting(s.topRows(8), 5));
}

TEST(MinDataLength, Values) {
  EXPECT_EQ(min_data_length(2, 20, 50, 8), 257);
  EXPECT_EQ(min_data_length(1, 1, 1, 1), 7);
  EXPECT_LE(min_data_length(2, 20, 50, 8), 800);
  EXPECT_THROW(min_data_length(0, 20, 50, 8), std::invalid_argument);
}

TEST(HankelSet, ColumnCountAndPartition) {
  const auto cfg = MixedConfig::homogeneous(8, {3, 6});
  std::mt19937_64 rng(5);
  const auto ds = linear_dataset(base_model(cfg), cfg, 257, rng, Eigen::VectorXd::Zero(16));
  const auto h = build_hankel_set(ds, 20, 50);
  EXPECT_EQ(h.columns(), 188);
  Eigen::MatrixXd U(h.Up.rows() + h.Uf.rows(), h.columns());
  U << h.Up, h.Uf;
  EXPECT_EQ(U, hankel(ds.u, 70));
  Eigen::MatrixXd E(h.Ep.rows() + h.Ef.rows(), h.columns());
  E << h.Ep, h.Ef;
  EXPECT_EQ(E, hankel(ds.eps, 70));
  Eigen::MatrixXd Y(h.Yp.rows() + h.Yf.rows(), h.columns());
  Y << h.Yp, h.Yf;
  EXPECT_EQ(Y, hankel(ds.y, 70));
  EXPECT_EQ(h.Yp.rows(), 20 * 10);

  auto shortest = ds;
  shortest.u.conservativeResize(70, Eigen::NoChange);
  shortest.eps.conservativeResize(70);
  shortest.y.conservativeResize(70, Eigen::NoChange);
  EXPECT_EQ(build_hankel_set(shortest, 20, 50).columns(), 1);
  shortest.u.conservativeResize(69, Eigen::NoChange);
  shortest.eps.conservativeResize(69);
  shortest.y.conservativeResize(69, Eigen::NoChange);
  EXPECT_THROW(build_hankel_set(shortest, 20, 50), std::invalid_argument);
}

TEST(FundamentalLemma, FreshTrajectoriesLieInColumnSpace) {
  // The combined input (eps; u) has three channels, so PE of order
  // T_ini + N + 2n needs 4 * 86 - 1 = 343 samples.
  const auto cfg = MixedConfig::homogeneous(8, {3, 6});
  const auto dm = base_model(cfg);
  std::mt19937_64 rng(21);
  const auto ds = linear_dataset(dm, cfg, 343, rng, Eigen::VectorXd::Zero(16));
  ASSERT_TRUE(build_hankel_set(ds, 20, 50).persistently_exciting);
  EXPECT_LT(worst_fresh_residual(ds, dm, cfg, 20, 70, 10, rng), 1e-6);
}

TEST(FundamentalLemma, SmallPlant) {
  const auto cfg = MixedConfig::homogeneous(2, {2});
  const auto dm = base_model(cfg);
  std::mt19937_64 rng(8);
  const int L = 12;
  const auto ds = linear_dataset(dm, cfg, 3 * (L + 4) - 1, rng, Eigen::VectorXd::Zero(4));
  EXPECT_TRUE(is_persistently_exciting(combined_input(ds), L + 4));
  EXPECT_LT(worst_fresh_residual(ds, dm, cfg, 4, L, 20, rng), 1e-8);
}

TEST(FundamentalLemma, ShortDatasetLeavesTrajectoriesOutside) {
  // 257 samples give 188 columns, fewer than the 226-dimensional space of
  // length-70 trajectories.
  const auto cfg = MixedConfig::homogeneous(8, {3, 6});
  const auto dm = base_model(cfg);
  std::mt19937_64 rng(21);
  const auto ds = linear_dataset(dm, cfg, 257, rng, Eigen::VectorXd::Zero(16));
  EXPECT_FALSE(build_hankel_set(ds, 20, 50).persistently_exciting);
  EXPECT_GT(worst_fresh_residual(ds, dm, cfg, 20, 70, 3, rng), 1e-3);
}

TEST(Collection, DefaultConfigurationIsPersistentlyExciting) {
  const auto cfg = MixedConfig::homogeneous(8, {3, 6});
  const auto ds = collect_offline(cfg, 15.0, 800, 1);
  EXPECT_EQ(ds.length(), 800);
  EXPECT_EQ(ds.y.cols(), 10);
  EXPECT_EQ(ds.s_star, std::vector<double>(2, 20.0));
  EXPECT_TRUE(is_persistently_exciting(combined_input(ds), 20 + 50 + 16));
  EXPECT_TRUE(build_hankel_set(ds, 20, 50).persistently_exciting);
  // The head perturbation is held for 10 steps.
  for (int t = 0; t < 800; ++t)
    if (t % 10) {
      EXPECT_EQ(ds.eps(t), ds.eps(t - 1));
    }
  EXPECT_LE(ds.eps.cwiseAbs().maxCoeff(), 1.0);
}

TEST(Collection, ZeroPerturbationIsNotExciting) {
  const auto cfg = MixedConfig::homogeneous(8, {3, 6});
  CollectionOptions opts;
  opts.delta_u = 0.0;
  opts.delta_eps = 0.0;
  opts.hdv_noise = 0.0;
  const auto ds = collect_offline(cfg, 15.0, 300, 1, opts);
  EXPECT_LT(ds.y.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_FALSE(is_persistently_exciting(combined_input(ds), 86));
}

TEST(Collection, SeedsGiveDifferentData) {
  const auto cfg = MixedConfig::homogeneous(4, {2});
  const auto a = collect_offline(cfg, 15.0, 100, 1);
  const auto b = collect_offline(cfg, 15.0, 100, 2);
  const auto c = collect_offline(cfg, 15.0, 100, 1);
  EXPECT_TRUE((a.u.array() != b.u.array()).all());
  EXPECT_EQ(a.u, c.u);
  EXPECT_EQ(a.y, c.y);
}

TEST(DatasetFile, RoundTripIsBitwise) {
  const auto cfg = MixedConfig::homogeneous(8, {3, 6});
  const auto ds = collect_offline(cfg, 15.0, 200, 4);
  const auto path = temp_file("roundtrip.json");
  save_dataset(ds, path);
  const auto back = load_dataset(path);
  EXPECT_EQ(back.n, ds.n);
  EXPECT_EQ(back.cav_indices, ds.cav_indices);
  EXPECT_EQ(back.dt, ds.dt);
  EXPECT_EQ(back.v_star, ds.v_star);
  EXPECT_EQ(back.s_star, ds.s_star);
  EXPECT_EQ(back.u, ds.u);
  EXPECT_EQ(back.eps, ds.eps);
  EXPECT_EQ(back.y, ds.y);
  std::filesystem::remove(path);
}

TEST(DatasetFile, TruncatedFileIsParseError) {
  const auto cfg = MixedConfig::homogeneous(3, {2});
  const std::string text = dataset_to_json(collect_offline(cfg, 15.0, 30, 4));
  try {
    dataset_from_json(text.substr(0, text.size() / 2));
    FAIL() << "expected DatasetError";
  } catch (const DatasetError& e) {
    EXPECT_NE(std::string(e.what()).find("parse"), std::string::npos);
  }
}

TEST(DatasetFile, WrongDimensionsRejected) {
  const auto cfg = MixedConfig::homogeneous(3, {2});
  std::string text = dataset_to_json(collect_offline(cfg, 15.0, 30, 4));
  const auto pos = text.find("\"n\":3");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 5, "\"n\":4");
  EXPECT_THROW(dataset_from_json(text), DatasetError);

  std::string versioned = dataset_to_json(collect_offline(cfg, 15.0, 30, 4));
  versioned.replace(versioned.find("\"version\":1"), 11, "\"version\":9");
  EXPECT_THROW(dataset_from_json(versioned), DatasetError);
}

TEST(DatasetFile, MissingFileIsIoError) {
  EXPECT_THROW(load_dataset(temp_file("does_not_exist.json")), std::ios_base::failure);
}
