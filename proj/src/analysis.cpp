#include "deeplcc/analysis.hpp"

#include <cmath>
#include <complex>
#include <numbers>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace deeplcc::analysis {

namespace {

template <typename Matrix>
int rank_from_svd(const Matrix& M, double tol) {
  if (M.size() == 0) return 0;
  Eigen::BDCSVD<Matrix> svd(M);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  const double threshold = tol * sv(0);
  int r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > threshold) ++r;
  return r;
}

}  // namespace

int numerical_rank(const Eigen::MatrixXd& A, double tol) { return rank_from_svd(A, tol); }

int controllability_rank(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double tol) {
  const Eigen::Index k = A.rows();
  if (k == 0 || B.cols() == 0) return 0;
  const double scale = std::max(A.jacobiSvd().singularValues()(0), B.jacobiSvd().singularValues()(0));
  if (scale == 0.0) return 0;
  // Orthogonal staircase: grow an orthonormal basis of the reachable subspace
  // one block at a time, keeping only directions that stand out of the
  // current span by more than tol * scale.
  Eigen::MatrixXd basis(k, 0);
  Eigen::MatrixXd front = B;
  while (basis.cols() < k) {
    if (basis.cols() > 0) front -= basis * (basis.transpose() * front);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(front, Eigen::ComputeThinU);
    const auto& sv = svd.singularValues();
    Eigen::Index r = 0;
    while (r < sv.size() && sv(r) > tol * scale) ++r;
    if (r == 0) break;
    r = std::min(r, k - basis.cols());
    const Eigen::MatrixXd fresh = svd.matrixU().leftCols(r);
    Eigen::MatrixXd grown(k, basis.cols() + r);
    grown << basis, fresh;
    basis = std::move(grown);
    front = A * fresh;
  }
  return static_cast<int>(basis.cols());
}

bool is_stabilizable(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double tol) {
  using CMatrix = Eigen::MatrixXcd;
  const Eigen::Index k = A.rows();
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
  // Eigenvalues of defective blocks are only accurate to about sqrt(eps).
  const double margin = 1e-6 * std::max(1.0, A.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < k; ++i) {
    const std::complex<double> lambda = es.eigenvalues()(i);
    if (lambda.real() < -margin) continue;
    CMatrix pbh(k, k + B.cols());
    pbh.leftCols(k) = A.cast<std::complex<double>>() - lambda * CMatrix::Identity(k, k);
    pbh.rightCols(B.cols()) = B.cast<std::complex<double>>();
    if (rank_from_svd(pbh, tol) < k) return false;
  }
  return true;
}

bool is_observable(const Eigen::MatrixXd& A, const Eigen::MatrixXd& C, double tol) {
  // Duality: observability of (A, C) is controllability of (A^T, C^T).
  return controllability_rank(A.transpose(), C.transpose(), tol) == A.rows();
}

double controllability_margin(const LinearCoeffs& c) {
  return c.alpha1 - c.alpha2 * c.alpha3 + c.alpha3 * c.alpha3;
}

bool combined_input_controllable(const StateSpaceModel& model, double tol) {
  Eigen::MatrixXd HB(model.A.rows(), model.H.cols() + model.B.cols());
  HB << model.H, model.B;
  return controllability_rank(model.A, HB, tol) == model.A.rows();
}

Eigen::MatrixXd virtual_hdv_feedback(const MixedConfig& cfg, const LinearCoeffs& coeffs) {
  const int n = cfg.n;
  const int m = cfg.m();
  // Row i of Kbar reproduces the linearized HDV law of vehicle i.
  Eigen::MatrixXd Kbar = Eigen::MatrixXd::Zero(n, 2 * n);
  for (int i = 2; i <= n; ++i) {
    const int r = i - 1;
    Kbar(r, 2 * r) = coeffs.alpha1;
    Kbar(r, 2 * r + 1) = -coeffs.alpha2;
    Kbar(r, 2 * r - 1) = coeffs.alpha3;
  }
  Eigen::MatrixXd select = Eigen::MatrixXd::Zero(m, n);
  for (int k = 1; k < m; ++k) select(k, cfg.cav_indices[k] - 1) = 1.0;
  return select * Kbar;
}

bool rank_invariant_under_feedback(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                   const Eigen::MatrixXd& K, double tol) {
  return controllability_rank(A, B, tol) == controllability_rank(A + B * K, B, tol);
}

bool feedback_transform_check(const StateSpaceModel& model, const MixedConfig& cfg,
                              const LinearCoeffs& coeffs, double tol) {
  if (cfg.m() < 2) throw std::invalid_argument("feedback_transform_check: needs at least two CAVs");
  return rank_invariant_under_feedback(model.A, model.B, virtual_hdv_feedback(cfg, coeffs), tol);
}

bool sampling_preserves_rank(const Eigen::MatrixXd& A, double dt, double tol) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
  const auto& ev = es.eigenvalues();
  const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
  const double omega = 2.0 * std::numbers::pi / dt;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    for (Eigen::Index j = i + 1; j < ev.size(); ++j) {
      const std::complex<double> diff = ev(i) - ev(j);
      if (std::abs(diff.real()) > tol * scale) continue;
      const double gap = std::abs(diff.imag());
      for (int k = 1; k <= kAliasingHarmonics; ++k)
        if (std::abs(gap - k * omega) <= 1e-6 * k * omega) return false;
    }
  }
  return true;
}

AnalysisReport analyze(const MixedConfig& cfg, double v_star, double dt, double tol) {
  const auto coeffs = linearize_platoon(cfg, v_star);
  const StateSpaceModel model = build_continuous_model(cfg, coeffs);
  AnalysisReport r;
  const auto states = static_cast<int>(model.A.rows());
  r.controllability_rank = controllability_rank(model.A, model.B, tol);
  r.controllable = r.controllability_rank == states;
  r.stabilizable = r.controllable || is_stabilizable(model.A, model.B, tol);
  r.observable = is_observable(model.A, model.C, tol);
  r.combined_input_controllable = combined_input_controllable(model, tol);
  r.sampling_preserves_properties = sampling_preserves_rank(model.A, dt);
  for (const auto& c : coeffs) r.controllability_margins.push_back(controllability_margin(c));
  r.uncontrollable_mode_count = states - r.controllability_rank;
  return r;
}

}  // namespace deeplcc::analysis
