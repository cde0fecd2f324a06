#pragma once

#include "gofar/families.hpp"
#include "gofar/model.hpp"

#include <Eigen/Dense>

#include <vector>

namespace gofar {

using ExclusionMask = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// Adaptive weights W = w_d * w_u w_v'. Excluded coordinates carry an
/// infinite weight: the matching coefficient is pinned to exactly zero.
struct PenaltyWeights {
  double w_d = 1.0;
  Eigen::VectorXd w_u;
  Eigen::VectorXd w_v;
  ExclusionMask excluded_u;
  ExclusionMask excluded_v;

  static PenaltyWeights unit(Eigen::Index p, Eigen::Index q);

  /// w_ij, or +infinity where either index is excluded.
  double weight(Eigen::Index i, Eigen::Index j) const;
};

/// Adaptive elastic net alpha*lambda*||W o C||_1 + (1 - alpha)*lambda*||C||_F^2.
struct PenaltyConfig {
  double lambda = 0.0;
  double alpha = 0.95;
  double gamma = 1.0;
  PenaltyWeights weights;

  void validate(Eigen::Index p, Eigen::Index q) const;
};

struct GcureConfig {
  PenaltyConfig penalty;
  double epsilon = 1e-6;
  int max_iter = 500;
};

/// Responses, design and families for one G-CURE / G-INIT problem, with the
/// spectral norms of X and Z cached. Holds references: the outcome and
/// design objects must outlive the problem.
class GlmProblem {
 public:
  GlmProblem(const ObservedOutcomes& y, const DesignMatrices& design, FamilyList families,
             double alpha_p = kDefaultAlphaP);
  /// Reuses spectral norms computed for the same X and Z.
  GlmProblem(const ObservedOutcomes& y, const DesignMatrices& design, FamilyList families,
             double alpha_p, double x_norm_sq, double z_norm_sq);

  const ObservedOutcomes& y() const { return *y_; }
  const DesignMatrices& design() const { return *design_; }
  const FamilyList& families() const { return families_; }
  double alpha_p() const { return alpha_p_; }
  double kappa0() const { return kappa0_; }
  double x_norm_sq() const { return x_norm_sq_; }
  double z_norm_sq() const { return z_norm_sq_; }

  /// Same design and families, different responses (e.g. a CV training mask).
  GlmProblem with_outcomes(const ObservedOutcomes& y) const;
  /// Same responses and families, different design (e.g. a deflated offset).
  GlmProblem with_design(const DesignMatrices& design) const;

 private:
  const ObservedOutcomes* y_;
  const DesignMatrices* design_;
  FamilyList families_;
  double alpha_p_;
  double kappa0_;
  double x_norm_sq_;
  double z_norm_sq_;
};

/// Parameters G-CURE iterates on.
struct GcureState {
  UnitRankComponent component;
  Eigen::MatrixXd beta;
  Eigen::VectorXd phi;
};

/// Controls-only (C = 0) maximum likelihood fit.
struct NullFit {
  Eigen::MatrixXd beta;
  Eigen::VectorXd phi;
};

struct ScalingFactors {
  double s_u = 0.0;
  double s_v = 0.0;
  double s_beta = 0.0;
};

struct GcureResult {
  UnitRankComponent component;
  Eigen::MatrixXd beta;
  Eigen::VectorXd phi;
  /// F_lambda at the start and after every full u/v/beta/Phi cycle.
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = false;
  /// Times a step's curvature had to be doubled because the formula value
  /// did not majorize (only possible for Poisson columns with b'' > alpha_p).
  int backtracks = 0;
  /// Returned the null fit directly because C = 0 satisfies the optimality
  /// conditions at this lambda.
  bool screened_null = false;
};

/// sign(t) * max(|t| - tau, 0), elementwise.
Eigen::VectorXd soft_threshold(const Eigen::VectorXd& t, const Eigen::VectorXd& tau);

/// s_u = k0 ||X||^2 / phi_min, s_v = n k0 / phi_min, s_beta = k0 ||Z||^2 / phi_min.
ScalingFactors scaling_factors(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z, Eigen::Index n,
                               double kappa0, const Eigen::VectorXd& phi);
ScalingFactors scaling_factors(const GlmProblem& problem, const Eigen::VectorXd& phi);

/// One majorization step in u-check = d u with v, beta, Phi fixed. Returns
/// the rescaled component (d~, u, v); v is unchanged up to a joint sign flip.
UnitRankComponent u_step(const GlmProblem& problem, const PenaltyConfig& penalty,
                         const GcureState& state, double s_u);

/// One majorization step in v-check = d v with u, beta, Phi fixed.
UnitRankComponent v_step(const GlmProblem& problem, const PenaltyConfig& penalty,
                         const GcureState& state, double s_v);

/// beta + Z' P_Omega(Y - B'(Theta)) Phi^-1 / s_beta.
Eigen::MatrixXd beta_step(const GlmProblem& problem, const GcureState& state, double s_beta);

/// beta_step, doubling s_beta until the quadratic bound holds at the new
/// point. Never doubles when every b'' is within kappa0.
Eigen::MatrixXd beta_step_safeguarded(const GlmProblem& problem, const GcureState& state,
                                      double s_beta, int* backtracks = nullptr);

/// Gaussian columns: observed-cell mean squared residual (floored); other
/// families keep dispersion 1.
Eigen::VectorXd phi_step(const Eigen::MatrixXd& theta, std::span<const Family> families,
                         const ObservedOutcomes& y);

Eigen::MatrixXd state_theta(const GlmProblem& problem, const GcureState& state);

/// rho(C; W, lambda, alpha) for C = d u v'.
double penalty_value(const PenaltyConfig& penalty, const UnitRankComponent& component);

/// F_lambda = full negative log-likelihood + penalty.
double objective(const GlmProblem& problem, const PenaltyConfig& penalty, const GcureState& state);

/// F_lambda(a, v, beta, Phi) with the trace-form likelihood (constant terms dropped).
double objective_u(const GlmProblem& problem, const PenaltyConfig& penalty,
                   const GcureState& state, const Eigen::VectorXd& a);

/// Surrogate G_lambda(a; u-check) of the u-step, on the same constant-free scale
/// as objective_u.
double surrogate_u(const GlmProblem& problem, const PenaltyConfig& penalty,
                   const GcureState& state, const Eigen::VectorXd& a, double s_u);

/// True when C = 0 minimizes F_lambda for the controls-only fit: every
/// |[X' P_Omega(Y - mu_0) Phi0^-1]_ij| <= alpha * lambda * w_ij.
bool null_is_optimal(const GlmProblem& problem, const PenaltyConfig& penalty, const NullFit& null_fit);

/// Blockwise MM over (u, v, beta, Phi) at fixed lambda. With `null_fit`
/// given and null_is_optimal true, returns that null fit without iterating.
/// Throws SolverError on a non-finite step or an objective increase beyond
/// 1e-8 relative.
GcureResult run_gcure(const GlmProblem& problem, const GcureState& init, const GcureConfig& config,
                      const NullFit* null_fit = nullptr);

}  // namespace gofar
