#include "gofar/ginit.hpp"
#include "gofar/tuning.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace gofar;
using doctest::Approx;

namespace {

struct Rank1 {
  ObservedOutcomes y;
  DesignMatrices design;
  FamilyList families;
};

Rank1 rank1_instance(int n, int p, int q, double strength, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Rank1 r;
  r.families = FamilyList(q, Family::Gaussian);
  r.design = DesignMatrices::with_intercept(testing::gaussian_matrix(n, p, rng), q);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(p), v = Eigen::VectorXd::Zero(q);
  u.head(2) << 1, -1;
  v.head(2) << 1, 1;
  const Eigen::MatrixXd theta = strength * r.design.X * u * v.transpose();
  r.y = ObservedOutcomes(theta + testing::gaussian_matrix(n, q, rng));
  return r;
}

}  // namespace

TEST_SUITE("tuning") {

TEST_CASE("lambda_max hand example") {
  // Second row is unobserved padding (designs need n >= 2).
  Eigen::MatrixXd X(2, 2);
  X << 1, -2, 0, 0;
  const DesignMatrices design{X, Eigen::MatrixXd::Ones(2, 1), Eigen::MatrixXd::Zero(2, 1)};
  MaskArray mask(2, 1);
  mask << true, false;
  const ObservedOutcomes y(Eigen::Vector2d(3, 0), mask);
  const GlmProblem pb(y, design, FamilyList{Family::Gaussian});
  const NullFit nf{Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Ones(1)};
  const auto path = lambda_path(pb, nf, PenaltyWeights::unit(2, 1), 1.0, 3, 1e-2);
  CHECK(path[0] == Approx(6.0));
  // alpha < 1 rescales the threshold at which the l1 term dominates
  CHECK(lambda_path(pb, nf, PenaltyWeights::unit(2, 1), 0.5, 3, 1e-2)[0] == Approx(12.0));
}

TEST_CASE("lambda path spacing") {
  std::mt19937_64 rng(1);
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(2, 1);
  X(0, 0) = 1.0;
  const DesignMatrices design{X, Eigen::MatrixXd::Ones(2, 1), Eigen::MatrixXd::Zero(2, 1)};
  const ObservedOutcomes y(Eigen::Vector2d(100, 0));
  const GlmProblem pb(y, design, FamilyList{Family::Gaussian});
  const NullFit nf{Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Ones(1)};
  const auto path = lambda_path(pb, nf, PenaltyWeights::unit(1, 1), 1.0, 3, 1e-2);
  REQUIRE(path.size() == 3);
  CHECK(path[0] == Approx(100.0));
  CHECK(path[1] == Approx(10.0));
  CHECK(path[2] == Approx(1.0));
}

TEST_CASE("lambda_max vanishes on a null-explained response") {
  std::mt19937_64 rng(2);
  const DesignMatrices design = DesignMatrices::with_intercept(testing::gaussian_matrix(6, 3, rng), 2);
  const ObservedOutcomes y(Eigen::MatrixXd::Constant(6, 2, 1.5));
  const GlmProblem pb(y, design, FamilyList(2, Family::Gaussian));
  const NullFit nf = fit_null_model(pb);
  const auto path = lambda_path(pb, nf, PenaltyWeights::unit(3, 2), 0.95, 40, 1e-6);
  REQUIRE(path.size() == 1);
  CHECK(path[0] == 0.0);
}

TEST_CASE("select_one_sd") {
  CvCurve c;
  c.lambdas = {10, 1, 0.1};
  c.mean_nll = {5, 3, 4};
  c.sd_nll = {1, 0.5, 1};
  CHECK(select_one_sd(c) == 1);

  c.mean_nll = {2, 2, 2};
  c.sd_nll = {0, 0, 0};
  CHECK(select_one_sd(c) == 0);

  c.lambdas = {100, 10, 1, 0.1};
  c.mean_nll = {10, 6, 4.05, 4};
  c.sd_nll = {0.1, 0.1, 0.1, 0.1};
  CHECK(select_one_sd(c) == 2);
  CHECK(select_one_sd(c, false) == 3);

  c.mean_nll = {10, 4, 6, 4};
  CHECK(select_one_sd(c, false) == 1);
}

TEST_CASE("fold assignment") {
  std::mt19937_64 rng(3);
  const MaskArray mask = testing::random_mask(30, 4, 0.2, rng);
  const Eigen::ArrayXXi f = assign_folds(mask, 5, 42);
  CHECK((f == assign_folds(mask, 5, 42)).all());
  CHECK(!(f == assign_folds(mask, 5, 43)).all());
  std::vector<int> counts(5, 0);
  for (Eigen::Index k = 0; k < 4; ++k) {
    for (Eigen::Index i = 0; i < 30; ++i) {
      if (!mask(i, k)) {
        CHECK(f(i, k) == -1);
      } else {
        REQUIRE(f(i, k) >= 0);
        REQUIRE(f(i, k) < 5);
        ++counts[f(i, k)];
      }
    }
  }
  const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  CHECK(*hi - *lo <= 1);
  CHECK_THROWS(assign_folds(mask, 1, 0));
}

TEST_CASE("fits at lambda_max are null") {
  const Rank1 inst = rank1_instance(40, 6, 4, 1.0, 4);
  const GlmProblem pb(inst.y, inst.design, inst.families);
  const NullFit nf = fit_null_model(pb);
  const GinitResult init = run_ginit(pb, 1);
  const PenaltyWeights w = adaptive_weights(init.components[0], 1.0);
  TuningConfig cfg;
  const auto path = lambda_path(pb, nf, w, cfg);
  REQUIRE(path.size() == 40);
  CHECK(path.back() == Approx(path.front() * 1e-6));
  for (std::size_t j = 1; j < path.size(); ++j) CHECK(path[j] < path[j - 1]);

  GcureState start{init.components[0], init.beta_tilde, init.phi_tilde};
  const GcureResult at_max = fit_path(pb, start, w, path, 0, cfg, nf);
  CHECK(at_max.component.is_null());
  CHECK((at_max.beta - nf.beta).norm() <= 1e-12);

  // Unscreened solve from the same start also reaches zero.
  GcureConfig gc;
  gc.penalty.lambda = path[0] * 1.0001;
  gc.penalty.alpha = cfg.alpha;
  gc.penalty.weights = w;
  CHECK(run_gcure(pb, start, gc).component.is_null());

  const GcureResult below = fit_path(pb, start, w, std::vector<double>{path[0] * 0.5}, 0, cfg, nf);
  CHECK(!below.component.is_null());
}

TEST_CASE("cross-validation curve") {
  const Rank1 inst = rank1_instance(40, 6, 4, 1.0, 5);
  const GlmProblem pb(inst.y, inst.design, inst.families);
  const NullFit nf = fit_null_model(pb);
  const GinitResult init = run_ginit(pb, 1);
  const PenaltyWeights w = adaptive_weights(init.components[0], 1.0);
  TuningConfig cfg;
  cfg.seed = 9;
  const double lmax = lambda_path(pb, nf, w, cfg)[0];
  const GcureState start{init.components[0], init.beta_tilde, init.phi_tilde};

  SUBCASE("strong signal beats the null model on held-out cells") {
    const CvCurve c = kfold_cv(pb, start, w, {lmax, 0.0}, cfg);
    REQUIRE(c.mean_nll.size() == 2);
    CHECK(c.mean_nll[1] < c.mean_nll[0]);
    CHECK(c.fold_nll.size() == 5);
  }
  SUBCASE("mean and standard error over folds") {
    const CvCurve c = kfold_cv(pb, start, w, {lmax, lmax * 0.1}, cfg);
    for (std::size_t j = 0; j < 2; ++j) {
      double m = 0.0, ss = 0.0;
      for (int f = 0; f < 5; ++f) m += c.fold_nll[f][j] / 5.0;
      for (int f = 0; f < 5; ++f) ss += (c.fold_nll[f][j] - m) * (c.fold_nll[f][j] - m);
      CHECK(c.mean_nll[j] == Approx(m).epsilon(1e-12));
      CHECK(c.sd_nll[j] == Approx(std::sqrt(ss / 4.0 / 5.0)).epsilon(1e-12));
    }
  }
  SUBCASE("the lambda_max point equals the held-out null-model likelihood") {
    const CvCurve c = kfold_cv(pb, start, w, {lmax}, cfg);
    const Eigen::ArrayXXi folds = assign_folds(inst.y.mask(), 5, cfg.seed);
    for (int f = 0; f < 5; ++f) {
      const MaskArray train = folds != f && folds >= 0;
      const MaskArray test = folds == f;
      const ObservedOutcomes ytr = inst.y.restricted(train);
      const NullFit nff = fit_null_model(pb.with_outcomes(ytr));
      const Eigen::MatrixXd theta = natural_params(inst.design, Eigen::MatrixXd::Zero(6, 4), nff.beta);
      const double oracle = full_neg_log_likelihood(theta, inst.families, nff.phi, inst.y.restricted(test));
      CHECK(c.fold_nll[f][0] == Approx(oracle).epsilon(1e-9));
    }
  }
  SUBCASE("duplicate lambdas give identical scores") {
    const CvCurve c = kfold_cv(pb, start, w, {lmax, lmax * 0.1, lmax * 0.1}, cfg);
    CHECK(c.mean_nll[1] == c.mean_nll[2]);
  }
  SUBCASE("worker count does not change the curve") {
    const std::vector<double> path{lmax, lmax * 0.3, lmax * 0.1, lmax * 0.01};
    const CvCurve a = kfold_cv(pb, start, w, path, cfg);
    cfg.threads = 3;
    const CvCurve b = kfold_cv(pb, start, w, path, cfg);
    CHECK(a.mean_nll == b.mean_nll);
    CHECK(a.sd_nll == b.sd_nll);
    CHECK(a.chosen_index == b.chosen_index);
  }
}

TEST_CASE("warm and cold starts agree in the large-lambda regime") {
  const Rank1 inst = rank1_instance(40, 6, 4, 1.0, 6);
  const GlmProblem pb(inst.y, inst.design, inst.families);
  const NullFit nf = fit_null_model(pb);
  const GinitResult init = run_ginit(pb, 1);
  const PenaltyWeights w = adaptive_weights(init.components[0], 1.0);
  TuningConfig cfg;
  cfg.epsilon = 1e-9;
  cfg.max_iter = 20000;
  const auto path = lambda_path(pb, nf, w, cfg.alpha, 6, 0.3);
  const GcureState start{init.components[0], init.beta_tilde, init.phi_tilde};
  for (int j = 1; j < 6; ++j) {
    const GcureResult warm = fit_path(pb, start, w, path, j, cfg, nf);
    const GcureResult cold = fit_path(pb, start, w, std::vector<double>{path[j]}, 0, cfg, nf);
    PenaltyConfig pen{path[j], cfg.alpha, cfg.gamma, w};
    const double fw = objective(pb, pen, GcureState{warm.component, warm.beta, warm.phi});
    const double fc = objective(pb, pen, GcureState{cold.component, cold.beta, cold.phi});
    CHECK(fw == Approx(fc).epsilon(1e-4));
  }
}

TEST_CASE("tune_and_fit with a fixed lambda skips CV") {
  const Rank1 inst = rank1_instance(30, 5, 3, 1.0, 7);
  const GlmProblem pb(inst.y, inst.design, inst.families);
  const NullFit nf = fit_null_model(pb);
  const GinitResult init = run_ginit(pb, 1);
  TuningConfig cfg;
  cfg.fixed_lambda = 1e9;
  const TunedFit t = tune_and_fit(pb, GcureState{init.components[0], init.beta_tilde, init.phi_tilde},
                                  adaptive_weights(init.components[0], 1.0), nf, cfg);
  CHECK(!t.curve.has_value());
  CHECK(t.fit.component.is_null());
  CHECK(t.lambda == 1e9);
}

TEST_CASE("config validation") {
  TuningConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.folds = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.lambda_min_ratio = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.n_lambda = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

}  // TEST_SUITE
