#pragma once

#include <vector>

#include <Eigen/Core>

#include "deeplcc/traffic.hpp"

namespace deeplcc::analysis {

inline constexpr double kRankTol = 1e-8;

/// Numerical rank of A by SVD, counting singular values above tol * sigma_max.
int numerical_rank(const Eigen::MatrixXd& A, double tol = kRankTol);

/// Dimension of the reachable subspace of (A, B), i.e. the rank of
/// [B, AB, ..., A^{k-1}B], found by an orthogonal staircase reduction rather
/// than by forming the Krylov matrix.
int controllability_rank(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                         double tol = kRankTol);

/// PBH test over every eigenvalue with nonnegative real part.
bool is_stabilizable(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double tol = kRankTol);

bool is_observable(const Eigen::MatrixXd& A, const Eigen::MatrixXd& C, double tol = kRankTol);

/// alpha1 - alpha2*alpha3 + alpha3^2; zero breaks the controllability hypothesis.
double controllability_margin(const LinearCoeffs& c);

/// (A, [H B]) controllable.
bool combined_input_controllable(const StateSpaceModel& model, double tol = kRankTol);

/// State-feedback gain K (m x 2n) that turns every CAV except the first into a
/// virtual HDV following `coeffs`.
Eigen::MatrixXd virtual_hdv_feedback(const MixedConfig& cfg, const LinearCoeffs& coeffs);

/// rank(A, B) == rank(A + BK, B).
bool rank_invariant_under_feedback(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                   const Eigen::MatrixXd& K, double tol = kRankTol);

/// Feedback-transform check with the virtual-HDV gain; requires m >= 2.
bool feedback_transform_check(const StateSpaceModel& model, const MixedConfig& cfg,
                              const LinearCoeffs& coeffs, double tol = kRankTol);

inline constexpr int kAliasingHarmonics = 100;

/// Sampling at dt keeps controllability/observability: no eigenvalue pair with
/// equal real parts is separated by 2*pi*k/dt in imaginary part.
bool sampling_preserves_rank(const Eigen::MatrixXd& A, double dt, double tol = 1e-9);

struct AnalysisReport {
  bool controllable = false;
  int controllability_rank = 0;
  bool stabilizable = false;
  bool observable = false;
  bool combined_input_controllable = false;
  bool sampling_preserves_properties = false;
  std::vector<double> controllability_margins; // per HDV
  int uncontrollable_mode_count = 0;
};

AnalysisReport analyze(const MixedConfig& cfg, double v_star, double dt, double tol = kRankTol);

}  // namespace deeplcc::analysis
