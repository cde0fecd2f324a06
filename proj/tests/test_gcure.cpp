#include "gofar/gcure.hpp"
#include "gofar/linalg.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <cmath>

using namespace gofar;
using doctest::Approx;

namespace {

struct Instance {
  ObservedOutcomes y;
  DesignMatrices design;
  FamilyList families;
};

// Rank-1 signal with an intercept, responses sampled from the given layout.
Instance make_instance(const FamilyList& fam, int n, int p, double missing, std::uint64_t seed,
                       double signal = 1.0) {
  std::mt19937_64 rng(seed);
  const int q = static_cast<int>(fam.size());
  Instance inst;
  inst.families = fam;
  inst.design = DesignMatrices::with_intercept(testing::gaussian_matrix(n, p, rng), q);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(p);
  u.head(std::min(p, 3)).setConstant(1.0);
  Eigen::VectorXd v = testing::gaussian_matrix(q, 1, rng);
  const UnitRankComponent c = rescale_component(u, v, inst.design.X);
  const Eigen::MatrixXd theta = inst.design.X * (signal * c.d * c.u * c.v.transpose()) /
                                    std::max(1.0, c.d) +
                                0.1 * Eigen::MatrixXd::Ones(n, q);
  const Eigen::MatrixXd Y = testing::sample_responses(theta, fam, rng);
  inst.y = ObservedOutcomes(Y, testing::random_mask(n, q, missing, rng));
  return inst;
}

GcureState start_state(const GlmProblem& pb, std::mt19937_64& rng) {
  const Eigen::Index p = pb.design().p(), q = pb.design().q(), pz = pb.design().pz();
  GcureState s;
  s.component = rescale_component(testing::gaussian_matrix(p, 1, rng), testing::gaussian_matrix(q, 1, rng),
                                  pb.design().X);
  s.component.d *= 0.3;
  s.beta = 0.1 * testing::gaussian_matrix(pz, q, rng);
  s.phi = Eigen::VectorXd::Ones(q);
  for (Eigen::Index k = 0; k < q; ++k) {
    if (pb.families()[k] == Family::Gaussian) s.phi(k) = 0.5 + std::uniform_real_distribution<double>(0, 1)(rng);
  }
  return s;
}

}  // namespace

TEST_SUITE("gcure") {

TEST_CASE("soft_threshold") {
  CHECK(soft_threshold(Eigen::VectorXd::Constant(1, 3.0), Eigen::VectorXd::Constant(1, 1.0))(0) == 2.0);
  CHECK(soft_threshold(Eigen::VectorXd::Constant(1, -0.5), Eigen::VectorXd::Constant(1, 1.0))(0) == 0.0);
  const Eigen::VectorXd out = soft_threshold(Eigen::Vector3d(-3, 0, 4), Eigen::Vector3d(1, 1, 0.5));
  CHECK(out == Eigen::Vector3d(-2, 0, 3.5));
  CHECK_THROWS(soft_threshold(Eigen::Vector3d(1, 2, 3), Eigen::Vector2d(1, 1)));
}

TEST_CASE("scaling_factors") {
  const Eigen::MatrixXd X = 2.0 * Eigen::MatrixXd::Identity(3, 3);
  const ScalingFactors a = scaling_factors(X, Eigen::MatrixXd::Ones(3, 1), 3, 1.0, Eigen::VectorXd::Ones(2));
  CHECK(a.s_u == Approx(4.0));

  const ScalingFactors b = scaling_factors(Eigen::MatrixXd::Ones(200, 2), Eigen::MatrixXd::Ones(200, 1), 200,
                                           0.25, Eigen::VectorXd::Ones(3));
  CHECK(b.s_v == Approx(50.0));

  const ScalingFactors c = scaling_factors(Eigen::MatrixXd::Ones(100, 2), Eigen::MatrixXd::Ones(100, 1), 100,
                                           1.0, Eigen::Vector2d(2.0, 5.0));
  CHECK(c.s_beta == Approx(50.0));

  CHECK_THROWS(scaling_factors(Eigen::MatrixXd::Zero(3, 2), Eigen::MatrixXd::Ones(3, 1), 3, 1.0,
                               Eigen::VectorXd::Ones(1)));
}

TEST_CASE("spectral norm matches the SVD") {
  std::mt19937_64 rng(2);
  const Eigen::MatrixXd M = testing::gaussian_matrix(17, 6, rng);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  CHECK(spectral_norm(M) == Approx(svd.singularValues()(0)).epsilon(1e-12));
  CHECK(spectral_norm(Eigen::MatrixXd::Zero(3, 3)) == 0.0);
}

TEST_CASE("u_step and v_step hand examples") {
  const FamilyList fam{Family::Gaussian};
  const ObservedOutcomes y(Eigen::Vector2d(2, 2));
  const DesignMatrices design{Eigen::Vector2d(1, 1), Eigen::Vector2d(1, 1), Eigen::MatrixXd::Zero(2, 1)};
  const GlmProblem pb(y, design, fam);
  PenaltyConfig pen;
  pen.weights = PenaltyWeights::unit(1, 1);

  SUBCASE("u-step from zero") {
    GcureState s{UnitRankComponent{0.0, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1)},
                 Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Ones(1)};
    const UnitRankComponent out = u_step(pb, pen, s, 2.0);
    CHECK(out.d * out.u(0) * out.v(0) == Approx(2.0));
    CHECK(out.d == Approx(2.0));
  }
  SUBCASE("v-step from zero") {
    GcureState s{UnitRankComponent{0.0, Eigen::VectorXd::Ones(1), Eigen::VectorXd::Zero(1)},
                 Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Ones(1)};
    const UnitRankComponent out = v_step(pb, pen, s, 2.0);
    CHECK(out.d * out.u(0) * out.v(0) == Approx(2.0));
  }
  SUBCASE("huge lambda kills the component") {
    pen.lambda = 1e6;
    GcureState s{UnitRankComponent{0.0, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1)},
                 Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Ones(1)};
    CHECK(u_step(pb, pen, s, 2.0).is_null());
    s.component = UnitRankComponent{0.0, Eigen::VectorXd::Ones(1), Eigen::VectorXd::Zero(1)};
    CHECK(v_step(pb, pen, s, 2.0).is_null());
  }
}

TEST_CASE("u_step and v_step fixed point at a perfect fit") {
  std::mt19937_64 rng(4);
  const FamilyList fam(3, Family::Gaussian);
  DesignMatrices design = DesignMatrices::with_intercept(testing::gaussian_matrix(10, 4, rng), 3);
  const UnitRankComponent c = rescale_component(testing::gaussian_matrix(4, 1, rng),
                                                testing::gaussian_matrix(3, 1, rng), design.X);
  const Eigen::MatrixXd beta = testing::gaussian_matrix(1, 3, rng);
  const ObservedOutcomes y(natural_params(design, c.matrix(), beta));
  const GlmProblem pb(y, design, fam);
  PenaltyConfig pen;
  pen.weights = PenaltyWeights::unit(4, 3);
  const GcureState s{c, beta, Eigen::VectorXd::Ones(3)};
  const ScalingFactors sf = scaling_factors(pb, s.phi);
  const UnitRankComponent cu = u_step(pb, pen, s, sf.s_u);
  const UnitRankComponent cv = v_step(pb, pen, s, sf.s_v);
  CHECK((cu.matrix() - c.matrix()).norm() <= 1e-12 * c.matrix().norm());
  CHECK((cv.matrix() - c.matrix()).norm() <= 1e-12 * c.matrix().norm());
  CHECK((beta_step(pb, s, sf.s_beta) - beta).norm() <= 1e-13);
}

TEST_CASE("beta_step examples") {
  SUBCASE("one step reaches the column mean") {
    Eigen::MatrixXd Y(4, 2);
    Y << 1, 2, 3, -4, 5, 6, 7, 8;
    const ObservedOutcomes y(Y);
    std::mt19937_64 rng(1);
    const DesignMatrices design = DesignMatrices::with_intercept(testing::gaussian_matrix(4, 2, rng), 2);
    const GlmProblem pb(y, design, FamilyList(2, Family::Gaussian));
    const GcureState s{UnitRankComponent::null(2, 2), Eigen::MatrixXd::Zero(1, 2), Eigen::VectorXd::Ones(2)};
    const Eigen::MatrixXd b = beta_step(pb, s, 4.0);
    CHECK(b(0, 0) == Approx(4.0));
    CHECK(b(0, 1) == Approx(3.0));
  }
  SUBCASE("scalar plug-in") {
    // Second row is unobserved padding (designs need n >= 2); it adds nothing.
    MaskArray mask(2, 1);
    mask << true, false;
    const ObservedOutcomes y(Eigen::Vector2d(3, 0), mask);
    const DesignMatrices design{Eigen::Vector2d(1, 0), Eigen::Vector2d(1, 1), Eigen::MatrixXd::Zero(2, 1)};
    const GlmProblem pb(y, design, FamilyList{Family::Gaussian});
    const GcureState s{UnitRankComponent::null(1, 1), Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Ones(1)};
    CHECK(beta_step(pb, s, 1.0)(0, 0) == Approx(3.0));
  }
}

TEST_CASE("phi_step examples") {
  const FamilyList fam{Family::Gaussian, Family::Gaussian, Family::Bernoulli};
  Eigen::MatrixXd theta(2, 3), Y(2, 3);
  theta << 0, 1, 0.3, 0, 2, -1;
  Y << 1, 1, 1, -1, 2, 0;
  const Eigen::VectorXd phi = phi_step(theta, fam, ObservedOutcomes(Y));
  CHECK(phi(0) == Approx(1.0));
  CHECK(phi(1) == kDispersionFloor);
  CHECK(phi(2) == 1.0);

  MaskArray mask = MaskArray::Constant(2, 3, true);
  mask(1, 0) = false;
  CHECK(phi_step(theta, fam, ObservedOutcomes(Y, mask))(0) == Approx(1.0));
}

TEST_CASE("surrogate majorizes the u-block objective") {
  const std::vector<FamilyList> layouts = {
      FamilyList(4, Family::Gaussian), FamilyList(4, Family::Bernoulli), FamilyList(4, Family::Poisson)};
  std::mt19937_64 rng(77);
  for (const auto& fam : layouts) {
    const Instance inst = make_instance(fam, 30, 6, 0.2, rng());
    const GlmProblem pb(inst.y, inst.design, fam);
    for (int t = 0; t < 20; ++t) {
      const GcureState s = start_state(pb, rng);
      PenaltyConfig pen;
      pen.lambda = std::uniform_real_distribution<double>(0, 2)(rng);
      pen.weights = PenaltyWeights::unit(6, 4);
      const double s_u = scaling_factors(pb, s.phi).s_u;
      const Eigen::VectorXd a =
          s.component.d * s.component.u + 0.3 * testing::gaussian_matrix(6, 1, rng);
      const double F = objective_u(pb, pen, s, a);
      const double G = surrogate_u(pb, pen, s, a, s_u);
      CHECK(G >= F - 1e-9);
      const Eigen::VectorXd here = s.component.d * s.component.u;
      CHECK(surrogate_u(pb, pen, s, here, s_u) == Approx(objective_u(pb, pen, s, here)).epsilon(1e-12));
    }
  }
}

TEST_CASE("run_gcure descends and keeps the constraints") {
  const std::vector<FamilyList> layouts = {
      FamilyList(4, Family::Gaussian),
      FamilyList(4, Family::Bernoulli),
      FamilyList(4, Family::Poisson),
      {Family::Gaussian, Family::Gaussian, Family::Bernoulli, Family::Bernoulli},
      {Family::Gaussian, Family::Gaussian, Family::Poisson, Family::Poisson}};
  std::mt19937_64 rng(101);
  for (const auto& fam : layouts) {
    for (double missing : {0.0, 0.2}) {
      const Instance inst = make_instance(fam, 40, 6, missing, rng(), 2.0);
      const GlmProblem pb(inst.y, inst.design, fam);
      GcureConfig cfg;
      cfg.penalty.lambda = 0.5;
      cfg.penalty.weights = PenaltyWeights::unit(6, 4);
      const GcureResult res = run_gcure(pb, start_state(pb, rng), cfg);
      for (std::size_t i = 1; i < res.objective_trace.size(); ++i) {
        const double prev = res.objective_trace[i - 1];
        CHECK(res.objective_trace[i] <= prev + 1e-8 * std::abs(prev));
      }
      if (!res.component.is_null()) {
        CHECK(std::abs((inst.design.X * res.component.u).squaredNorm() / 40.0 - 1.0) <= 1e-8);
        CHECK(std::abs(res.component.v.norm() - 1.0) <= 1e-8);
      }
    }
  }
}

TEST_CASE("excluded coordinates stay at zero") {
  const Instance inst = make_instance(FamilyList(4, Family::Gaussian), 40, 6, 0.0, 8, 3.0);
  const GlmProblem pb(inst.y, inst.design, inst.families);
  std::mt19937_64 rng(8);
  GcureState s = start_state(pb, rng);
  GcureConfig cfg;
  cfg.penalty.weights = PenaltyWeights::unit(6, 4);
  cfg.penalty.weights.excluded_u(1) = true;
  cfg.penalty.weights.excluded_v(3) = true;
  s.component.u(1) = 0.0;
  s.component.v(3) = 0.0;
  s.component = rescale_component(s.component.d * s.component.u, s.component.v, inst.design.X);
  const ScalingFactors sf = scaling_factors(pb, s.phi);
  CHECK(u_step(pb, cfg.penalty, s, sf.s_u).u(1) == 0.0);
  CHECK(v_step(pb, cfg.penalty, s, sf.s_v).v(3) == 0.0);
  const GcureResult res = run_gcure(pb, s, cfg);
  CHECK(res.component.u(1) == 0.0);
  CHECK(res.component.v(3) == 0.0);
}

TEST_CASE("unpenalized rank-one Gaussian fit equals least squares") {
  std::mt19937_64 rng(12);
  const int n = 50, p = 5;
  const Eigen::MatrixXd X = testing::gaussian_matrix(n, p, rng);
  const Eigen::VectorXd y = (X * Eigen::VectorXd::LinSpaced(p, -1, 1) +
                             0.3 * testing::gaussian_matrix(n, 1, rng)).array() + 1.0;
  Eigen::MatrixXd A(n, p + 1);
  A << Eigen::VectorXd::Ones(n), X;
  const Eigen::VectorXd coef = A.colPivHouseholderQr().solve(y);
  const Eigen::VectorXd fitted = A * coef;

  const ObservedOutcomes obs(y);
  const DesignMatrices design = DesignMatrices::with_intercept(X, 1);
  const GlmProblem pb(obs, design, FamilyList{Family::Gaussian});
  GcureConfig cfg;
  cfg.penalty.weights = PenaltyWeights::unit(p, 1);
  cfg.epsilon = 1e-12;
  cfg.max_iter = 100000;
  GcureState init{rescale_component(Eigen::VectorXd::Ones(p), Eigen::VectorXd::Ones(1), X),
                  Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Ones(1)};
  const GcureResult res = run_gcure(pb, init, cfg);
  const Eigen::MatrixXd pred = natural_params(design, res.component.matrix(), res.beta);
  CHECK(testing::rel_err(pred, fitted) <= 1e-4);
  CHECK(res.phi(0) == Approx((y - fitted).squaredNorm() / n).epsilon(1e-4));
}

TEST_CASE("truth on noiseless data is a fixed point") {
  std::mt19937_64 rng(21);
  DesignMatrices design = DesignMatrices::with_intercept(testing::gaussian_matrix(30, 5, rng), 4);
  const UnitRankComponent c = rescale_component(testing::gaussian_matrix(5, 1, rng),
                                                testing::gaussian_matrix(4, 1, rng), design.X);
  const Eigen::MatrixXd beta = testing::gaussian_matrix(1, 4, rng);
  const ObservedOutcomes y(natural_params(design, c.matrix(), beta));
  const GlmProblem pb(y, design, FamilyList(4, Family::Gaussian));
  GcureConfig cfg;
  cfg.penalty.weights = PenaltyWeights::unit(5, 4);
  const GcureResult res = run_gcure(pb, GcureState{c, beta, Eigen::VectorXd::Ones(4)}, cfg);
  CHECK(res.iterations <= 2);
  CHECK(res.converged);
  CHECK((res.component.matrix() - c.matrix()).norm() <= 1e-10 * c.matrix().norm());
}

}  // TEST_SUITE
