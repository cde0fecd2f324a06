#pragma once

#include "gofar/gcure.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

namespace gofar {

struct TuningConfig {
  int n_lambda = 40;
  double lambda_min_ratio = 1e-6;
  int folds = 5;
  std::uint64_t seed = 0;
  bool use_one_sd = true;
  int threads = 1;
  double alpha = 0.95;
  double gamma = 1.0;
  double epsilon = 1e-6;
  int max_iter = 500;
  /// Skips cross-validation and fits at this lambda.
  std::optional<double> fixed_lambda;

  void validate() const;
};

struct CvCurve {
  std::vector<double> lambdas;
  std::vector<double> mean_nll;
  /// Standard error of mean_nll over folds, sd / sqrt(K), as in glmnet's cvsd.
  std::vector<double> sd_nll;
  /// fold_nll[f][j]: held-out negative log-likelihood of fold f at lambdas[j].
  std::vector<std::vector<double>> fold_nll;
  int chosen_index = 0;
};

/// lambda_max = max_ij |[X' P_Omega(Y - mu0) Phi0^-1]_ij| / (alpha w_ij) over
/// non-excluded cells, followed by n_lambda log-spaced values down to
/// lambda_max * lambda_min_ratio. lambda_max = 0 gives the path {0}.
std::vector<double> lambda_path(const GlmProblem& problem, const NullFit& null_fit,
                                const PenaltyWeights& weights, double alpha, int n_lambda,
                                double lambda_min_ratio);
std::vector<double> lambda_path(const GlmProblem& problem, const NullFit& null_fit,
                                const PenaltyWeights& weights, const TuningConfig& cfg);

/// Entrywise fold labels (-1 for unobserved cells), balanced over the
/// shuffled observed cells. Redraws until every column keeps a training cell.
Eigen::ArrayXXi assign_folds(const MaskArray& mask, int folds, std::uint64_t seed);

/// K-fold CV of the warm-started lambda sweep. `init` supplies the starting
/// component (also used to restart after a null solution).
CvCurve kfold_cv(const GlmProblem& problem, const GcureState& init, const PenaltyWeights& weights,
                 const std::vector<double>& path, const TuningConfig& cfg);

/// One-standard-deviation rule (or the plain minimizer when use_one_sd is false).
int select_one_sd(const CvCurve& curve, bool use_one_sd = true);

/// Warm-started full-data sweep over path[0..last]; returns the fit at path[last].
GcureResult fit_path(const GlmProblem& problem, const GcureState& init, const PenaltyWeights& weights,
                     const std::vector<double>& path, int last, const TuningConfig& cfg,
                     const NullFit& null_fit);

struct TunedFit {
  GcureResult fit;
  double lambda = 0.0;
  std::vector<double> path;
  std::optional<CvCurve> curve;
};

/// Path, CV, selection and refit for one unit-rank extraction step.
TunedFit tune_and_fit(const GlmProblem& problem, const GcureState& init,
                      const PenaltyWeights& weights, const NullFit& null_fit,
                      const TuningConfig& cfg);

}  // namespace gofar
