#pragma once

#include "gofar/gcure.hpp"
#include "gofar/model.hpp"

#include <Eigen/Dense>

#include <vector>

namespace gofar {

struct GinitConfig {
  double epsilon = 1e-6;
  int max_iter = 500;
};

struct GinitResult {
  /// r components ordered by decreasing d; trailing ones may be null.
  std::vector<UnitRankComponent> components;
  Eigen::MatrixXd C_tilde;
  Eigen::MatrixXd beta_tilde;
  Eigen::VectorXd phi_tilde;
  /// Full negative log-likelihood at the start and after each C/beta/Phi cycle.
  std::vector<double> nll_trace;
  int iterations = 0;
  bool converged = false;
  int backtracks = 0;
};

/// Unpenalized rank-r fit by projected gradient (SVD truncation) from C = 0,
/// beta = 0, Phi = 1, followed by xsvd_decompose.
GinitResult run_ginit(const GlmProblem& problem, Eigen::Index r, const GinitConfig& config = {});

/// X-orthogonal SVD of C: (1/sqrt n) X C = P S Q'. Null components where
/// S_kk < 1e-10 S_11 or k exceeds the available rank.
std::vector<UnitRankComponent> xsvd_decompose(const Eigen::MatrixXd& C, const Eigen::MatrixXd& X,
                                              Eigen::Index r);

/// |.|^-gamma weights from an initial component. With gamma > 0, entries
/// below 1e-12 in magnitude are excluded; a null component excludes everything.
PenaltyWeights adaptive_weights(const UnitRankComponent& component, double gamma);

/// Controls-only fit (C pinned to 0) by the beta/Phi steps.
NullFit fit_null_model(const GlmProblem& problem, double epsilon = 1e-10, int max_iter = 10000);

}  // namespace gofar
