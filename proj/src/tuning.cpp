#include "gofar/tuning.hpp"

#include "gofar/error.hpp"
#include "gofar/ginit.hpp"
#include "gofar/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace gofar {

namespace {

constexpr int kMaxFoldDraws = 100;

GcureConfig solver_config(const TuningConfig& cfg, const PenaltyWeights& weights, double lambda) {
  GcureConfig gc;
  gc.penalty.lambda = lambda;
  gc.penalty.alpha = cfg.alpha;
  gc.penalty.gamma = cfg.gamma;
  gc.penalty.weights = weights;
  gc.epsilon = cfg.epsilon;
  gc.max_iter = cfg.max_iter;
  return gc;
}

/// Warm start for the next lambda: the previous solution, or `init` again
/// when the previous solution collapsed to the null component (a null start
/// is a fixed point of the u/v steps).
GcureState next_start(const GcureResult& prev, const GcureState& init) {
  if (prev.component.is_null()) return {init.component, prev.beta, prev.phi};
  return {prev.component, prev.beta, prev.phi};
}

}  // namespace

void TuningConfig::validate() const {
  if (n_lambda < 2) throw std::invalid_argument("n_lambda must be >= 2");
  if (folds < 2) throw std::invalid_argument("folds must be >= 2");
  if (!(lambda_min_ratio > 0.0 && lambda_min_ratio < 1.0)) {
    throw std::invalid_argument("lambda_min_ratio must lie in (0, 1)");
  }
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in (0, 1]");
  if (!(gamma >= 0.0)) throw std::invalid_argument("gamma must be >= 0");
  if (!(epsilon > 0.0) || max_iter < 1) throw std::invalid_argument("invalid solver tolerance");
  if (fixed_lambda && !(*fixed_lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
}

std::vector<double> lambda_path(const GlmProblem& problem, const NullFit& null_fit,
                                const PenaltyWeights& weights, double alpha, int n_lambda,
                                double lambda_min_ratio) {
  if (n_lambda < 1) throw std::invalid_argument("n_lambda must be >= 1");
  Eigen::MatrixXd theta = problem.design().O;
  theta.noalias() += problem.design().Z * null_fit.beta;
  const Eigen::MatrixXd R = masked_residual(theta, problem.families(), problem.y());
  const Eigen::MatrixXd G =
      problem.design().X.transpose() * R * null_fit.phi.cwiseInverse().asDiagonal();
  double lmax = 0.0;
  for (Eigen::Index j = 0; j < G.cols(); ++j) {
    for (Eigen::Index i = 0; i < G.rows(); ++i) {
      const double w = weights.weight(i, j);
      if (std::isinf(w)) continue;
      lmax = std::max(lmax, std::abs(G(i, j)) / (alpha * w));
    }
  }
  if (lmax == 0.0) return {0.0};
  std::vector<double> path(static_cast<std::size_t>(n_lambda));
  const double log_ratio = std::log(lambda_min_ratio);
  for (int j = 0; j < n_lambda; ++j) {
    path[j] = n_lambda == 1 ? lmax : lmax * std::exp(log_ratio * j / (n_lambda - 1));
  }
  path[0] = lmax;
  return path;
}

std::vector<double> lambda_path(const GlmProblem& problem, const NullFit& null_fit,
                                const PenaltyWeights& weights, const TuningConfig& cfg) {
  return lambda_path(problem, null_fit, weights, cfg.alpha, cfg.n_lambda, cfg.lambda_min_ratio);
}

Eigen::ArrayXXi assign_folds(const MaskArray& mask, int folds, std::uint64_t seed) {
  if (folds < 2) throw std::invalid_argument("folds must be >= 2");
  const Eigen::Index n = mask.rows(), q = mask.cols();
  std::vector<Eigen::Index> cells;
  for (Eigen::Index k = 0; k < q; ++k) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (mask(i, k)) cells.push_back(k * n + i);
    }
  }
  std::mt19937_64 rng(seed);
  Eigen::ArrayXXi label(n, q);
  for (int attempt = 0; attempt < kMaxFoldDraws; ++attempt) {
    std::shuffle(cells.begin(), cells.end(), rng);
    label.setConstant(-1);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      label(cells[c] % n, cells[c] / n) = static_cast<int>(c % static_cast<std::size_t>(folds));
    }
    bool ok = true;
    for (Eigen::Index k = 0; k < q && ok; ++k) {
      for (int f = 0; f < folds && ok; ++f) {
        const Eigen::Index train = (label.col(k) >= 0 && label.col(k) != f).count();
        ok = train > 0;
      }
    }
    if (ok) return label;
  }
  throw DataError("could not assign CV folds leaving every response column a training cell");
}

CvCurve kfold_cv(const GlmProblem& problem, const GcureState& init, const PenaltyWeights& weights,
                 const std::vector<double>& path, const TuningConfig& cfg) {
  if (path.empty()) throw std::invalid_argument("kfold_cv: empty lambda path");
  const int K = cfg.folds;
  const Eigen::ArrayXXi label = assign_folds(problem.y().mask(), K, cfg.seed);

  CvCurve curve;
  curve.lambdas = path;
  curve.fold_nll.assign(static_cast<std::size_t>(K), std::vector<double>(path.size(), 0.0));

  parallel_for(static_cast<std::size_t>(K), cfg.threads, [&](std::size_t f) {
    const MaskArray train = problem.y().mask() && (label != static_cast<int>(f));
    const MaskArray test = label == static_cast<int>(f);
    const ObservedOutcomes y_train = problem.y().restricted(train);
    const ObservedOutcomes y_test = problem.y().restricted(test);
    const GlmProblem pb = problem.with_outcomes(y_train);
    const NullFit null_fit = fit_null_model(pb);
    GcureState start{init.component, null_fit.beta, null_fit.phi};
    for (std::size_t j = 0; j < path.size(); ++j) {
      // A repeated lambda reuses the solution instead of iterating further.
      if (j > 0 && path[j] == path[j - 1]) {
        curve.fold_nll[f][j] = curve.fold_nll[f][j - 1];
        continue;
      }
      const GcureResult res = run_gcure(pb, start, solver_config(cfg, weights, path[j]), &null_fit);
      const GcureState fitted{res.component, res.beta, res.phi};
      curve.fold_nll[f][j] =
          full_neg_log_likelihood(state_theta(pb, fitted), pb.families(), res.phi, y_test);
      start = next_start(res, init);
    }
  });

  curve.mean_nll.resize(path.size());
  curve.sd_nll.resize(path.size());
  for (std::size_t j = 0; j < path.size(); ++j) {
    double sum = 0.0;
    for (int f = 0; f < K; ++f) sum += curve.fold_nll[f][j];
    const double mean = sum / K;
    double ss = 0.0;
    for (int f = 0; f < K; ++f) ss += (curve.fold_nll[f][j] - mean) * (curve.fold_nll[f][j] - mean);
    curve.mean_nll[j] = mean;
    curve.sd_nll[j] = std::sqrt(ss / (K - 1) / K);
  }
  curve.chosen_index = select_one_sd(curve, cfg.use_one_sd);
  return curve;
}

int select_one_sd(const CvCurve& curve, bool use_one_sd) {
  if (curve.mean_nll.empty() || curve.mean_nll.size() != curve.sd_nll.size()) {
    throw std::invalid_argument("select_one_sd: malformed curve");
  }
  // Path is descending, so the first minimizer is the one with the larger lambda.
  std::size_t best = 0;
  for (std::size_t j = 1; j < curve.mean_nll.size(); ++j) {
    if (curve.mean_nll[j] < curve.mean_nll[best]) best = j;
  }
  if (!use_one_sd) return static_cast<int>(best);
  const double threshold = curve.mean_nll[best] + curve.sd_nll[best];
  for (std::size_t j = 0; j <= best; ++j) {
    if (curve.mean_nll[j] <= threshold) return static_cast<int>(j);
  }
  return static_cast<int>(best);
}

GcureResult fit_path(const GlmProblem& problem, const GcureState& init, const PenaltyWeights& weights,
                     const std::vector<double>& path, int last, const TuningConfig& cfg,
                     const NullFit& null_fit) {
  if (last < 0 || static_cast<std::size_t>(last) >= path.size()) {
    throw std::invalid_argument("fit_path: index out of range");
  }
  GcureState start{init.component, null_fit.beta, null_fit.phi};
  GcureResult res;
  for (int j = 0; j <= last; ++j) {
    if (j > 0 && path[j] == path[j - 1]) continue;
    res = run_gcure(problem, start, solver_config(cfg, weights, path[j]), &null_fit);
    start = next_start(res, init);
  }
  return res;
}

TunedFit tune_and_fit(const GlmProblem& problem, const GcureState& init,
                      const PenaltyWeights& weights, const NullFit& null_fit,
                      const TuningConfig& cfg) {
  cfg.validate();
  TunedFit out;
  if (cfg.fixed_lambda) {
    out.lambda = *cfg.fixed_lambda;
    out.path = {out.lambda};
    out.fit = fit_path(problem, init, weights, out.path, 0, cfg, null_fit);
    return out;
  }
  out.path = lambda_path(problem, null_fit, weights, cfg);
  CvCurve curve = kfold_cv(problem, init, weights, out.path, cfg);
  out.lambda = out.path[curve.chosen_index];
  out.fit = fit_path(problem, init, weights, out.path, curve.chosen_index, cfg, null_fit);
  out.curve = std::move(curve);
  return out;
}

}  // namespace gofar
