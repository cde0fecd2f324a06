#include "gofar/gcure.hpp"

#include "gofar/error.hpp"
#include "gofar/linalg.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace gofar {

namespace {

constexpr double kDescentSlack = 1e-8;
constexpr double kMajorizeSlack = 1e-10;
constexpr int kMaxBacktracks = 60;

double trace_nll(const GlmProblem& pb, const Eigen::MatrixXd& theta, const Eigen::VectorXd& phi,
                 const char* step) {
  try {
    return neg_log_likelihood(theta, pb.families(), phi, pb.y());
  } catch (const std::domain_error& e) {
    throw SolverError(step, e.what());
  }
}

/// O + Z beta.
Eigen::MatrixXd control_part(const GlmProblem& pb, const Eigen::MatrixXd& beta) {
  Eigen::MatrixXd base = pb.design().O;
  base.noalias() += pb.design().Z * beta;
  return base;
}

double weighted_l1(const Eigen::VectorXd& x, const Eigen::VectorXd& w, const ExclusionMask& excl) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!excl(i)) s += w(i) * std::abs(x(i));
  }
  return s;
}

/// Closed-form minimizer of s/2 ||a - t||^2 + alpha lambda w_d (other . w_other)
/// sum_i w_i |a_i| + (1 - alpha) lambda ||other||^2 ||a||^2 with t = current + grad / s.
Eigen::VectorXd penalized_update(const Eigen::VectorXd& current, const Eigen::VectorXd& grad,
                                 const Eigen::VectorXd& other, const Eigen::VectorXd& w_other,
                                 const ExclusionMask& excl_other, const Eigen::VectorXd& w_self,
                                 const ExclusionMask& excl_self, const PenaltyConfig& pen, double s) {
  const double lam = pen.lambda;
  const double cross = weighted_l1(other, w_other, excl_other);
  const double shrink = 1.0 + 2.0 * lam * (1.0 - pen.alpha) * other.squaredNorm() / s;
  Eigen::VectorXd out(current.size());
  for (Eigen::Index i = 0; i < current.size(); ++i) {
    if (excl_self(i)) {
      out(i) = 0.0;
      continue;
    }
    const double t = current(i) + grad(i) / s;
    const double tau = pen.alpha * lam * pen.weights.w_d * cross * w_self(i) / s;
    const double mag = std::abs(t) - tau;
    out(i) = mag > 0.0 ? std::copysign(mag, t) / shrink : 0.0;
  }
  return out;
}

/// Gradient pieces for the u-step at the current state.
struct UGradient {
  Eigen::MatrixXd base;  // O + Z beta
  Eigen::VectorXd check_u;
  Eigen::VectorXd g;  // X' R Phi^-1 v  (minus dL/du-check)
  double loss = 0.0;  // trace-form L at the current state
};

/// `residual`, when given, is P_Omega(Y - B'(Theta)) at the current state.
UGradient u_gradient(const GlmProblem& pb, const GcureState& st, bool with_loss,
                     const Eigen::MatrixXd* residual = nullptr) {
  UGradient out;
  out.base = control_part(pb, st.beta);
  out.check_u = st.component.d * st.component.u;
  Eigen::MatrixXd theta = out.base;
  theta.noalias() += (pb.design().X * out.check_u) * st.component.v.transpose();
  const Eigen::MatrixXd R =
      residual != nullptr ? *residual : masked_residual(theta, pb.families(), pb.y());
  const Eigen::VectorXd rv = R * st.component.v.cwiseQuotient(st.phi);
  out.g = pb.design().X.transpose() * rv;
  if (with_loss) out.loss = trace_nll(pb, theta, st.phi, "u-step");
  return out;
}

Eigen::VectorXd u_candidate(const GlmProblem& /*pb*/, const PenaltyConfig& pen, const GcureState& st,
                            const UGradient& grad, double s) {
  const auto& w = pen.weights;
  return penalized_update(grad.check_u, grad.g, st.component.v, w.w_v, w.excluded_v, w.w_u,
                          w.excluded_u, pen, s);
}

struct VGradient {
  Eigen::MatrixXd base;
  Eigen::VectorXd xu;
  Eigen::VectorXd check_v;
  Eigen::VectorXd g;  // Phi^-1 R' X u
  double loss = 0.0;
};

VGradient v_gradient(const GlmProblem& pb, const GcureState& st, bool with_loss) {
  VGradient out;
  out.base = control_part(pb, st.beta);
  out.xu = pb.design().X * st.component.u;
  out.check_v = st.component.d * st.component.v;
  Eigen::MatrixXd theta = out.base;
  theta.noalias() += out.xu * out.check_v.transpose();
  const Eigen::MatrixXd R = masked_residual(theta, pb.families(), pb.y());
  out.g = (R.transpose() * out.xu).cwiseQuotient(st.phi);
  if (with_loss) out.loss = trace_nll(pb, theta, st.phi, "v-step");
  return out;
}

Eigen::VectorXd v_candidate(const PenaltyConfig& pen, const GcureState& st, const VGradient& grad,
                            double s) {
  const auto& w = pen.weights;
  return penalized_update(grad.check_v, grad.g, st.component.u, w.w_u, w.excluded_u, w.w_v,
                          w.excluded_v, pen, s);
}

struct BetaGradient {
  Eigen::MatrixXd base;  // O + X C
  Eigen::MatrixXd g;     // Z' R Phi^-1
  double loss = 0.0;
};

BetaGradient beta_gradient(const GlmProblem& pb, const GcureState& st, bool with_loss) {
  BetaGradient out;
  out.base = pb.design().O;
  if (!st.component.is_null()) {
    out.base.noalias() +=
        (pb.design().X * st.component.u) * (st.component.d * st.component.v).transpose();
  }
  Eigen::MatrixXd theta = out.base;
  theta.noalias() += pb.design().Z * st.beta;
  const Eigen::MatrixXd R = masked_residual(theta, pb.families(), pb.y());
  out.g = pb.design().Z.transpose() * R * st.phi.cwiseInverse().asDiagonal();
  if (with_loss) out.loss = trace_nll(pb, theta, st.phi, "beta-step");
  return out;
}

bool majorized(double loss_new, double loss_old, double lin, double s, double step_sq) {
  const double bound = loss_old - lin + 0.5 * s * step_sq;
  return loss_new <= bound + kMajorizeSlack * (1.0 + std::abs(loss_old));
}

Eigen::VectorXd stacked(const GcureState& st) {
  const auto& c = st.component;
  const Eigen::Index p = c.u.size(), q = c.v.size();
  Eigen::VectorXd x(p + q + st.beta.size());
  x.head(p) = c.d * c.u;
  x.segment(p, q) = c.d * c.v;
  x.tail(st.beta.size()) = st.beta.reshaped();
  return x;
}

/// b'' <= kappa0 holds everywhere unless a Poisson column is present, so
/// only then can a formula scaling factor fail to majorize.
bool needs_safeguard(const GlmProblem& pb) {
  for (Family f : pb.families()) {
    if (f == Family::Poisson) return true;
  }
  return false;
}

void require_finite(const Eigen::MatrixXd& m, const char* step) {
  if (!m.allFinite()) throw SolverError(step, "produced non-finite parameters");
}

}  // namespace

PenaltyWeights PenaltyWeights::unit(Eigen::Index p, Eigen::Index q) {
  return {1.0, Eigen::VectorXd::Ones(p), Eigen::VectorXd::Ones(q), ExclusionMask::Constant(p, false),
          ExclusionMask::Constant(q, false)};
}

double PenaltyWeights::weight(Eigen::Index i, Eigen::Index j) const {
  if (excluded_u(i) || excluded_v(j)) return std::numeric_limits<double>::infinity();
  return w_d * w_u(i) * w_v(j);
}

void PenaltyConfig::validate(Eigen::Index p, Eigen::Index q) const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("lambda must be >= 0");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in (0, 1]");
  if (!(gamma >= 0.0)) throw std::invalid_argument("gamma must be >= 0");
  if (weights.w_u.size() != p || weights.w_v.size() != q || weights.excluded_u.size() != p ||
      weights.excluded_v.size() != q) {
    throw std::invalid_argument("penalty weight shapes do not match the problem");
  }
  if (!(weights.w_d > 0.0) || !std::isfinite(weights.w_d)) {
    throw std::invalid_argument("w_d must be positive and finite");
  }
}

GlmProblem::GlmProblem(const ObservedOutcomes& y, const DesignMatrices& design, FamilyList families,
                       double alpha_p)
    : GlmProblem(y, design, std::move(families), alpha_p,
                 std::pow(spectral_norm(design.X), 2), std::pow(spectral_norm(design.Z), 2)) {}

GlmProblem::GlmProblem(const ObservedOutcomes& y, const DesignMatrices& design, FamilyList families,
                       double alpha_p, double x_norm_sq, double z_norm_sq)
    : y_(&y),
      design_(&design),
      families_(std::move(families)),
      alpha_p_(alpha_p),
      kappa0_(gofar::kappa0(families_, alpha_p)),
      x_norm_sq_(x_norm_sq),
      z_norm_sq_(z_norm_sq) {
  design.validate();
  if (y.rows() != design.n() || y.cols() != design.q() ||
      static_cast<Eigen::Index>(families_.size()) != y.cols()) {
    throw std::invalid_argument("response, design and family shapes disagree");
  }
  if (!(x_norm_sq_ > 0.0)) throw std::invalid_argument("X is a zero matrix");
  if (!(z_norm_sq_ > 0.0)) throw std::invalid_argument("Z is a zero matrix");
}

GlmProblem GlmProblem::with_outcomes(const ObservedOutcomes& y) const {
  return GlmProblem(y, *design_, families_, alpha_p_, x_norm_sq_, z_norm_sq_);
}

GlmProblem GlmProblem::with_design(const DesignMatrices& design) const {
  return GlmProblem(*y_, design, families_, alpha_p_, x_norm_sq_, z_norm_sq_);
}

Eigen::VectorXd soft_threshold(const Eigen::VectorXd& t, const Eigen::VectorXd& tau) {
  if (t.size() != tau.size()) throw std::invalid_argument("soft_threshold: length mismatch");
  Eigen::VectorXd out(t.size());
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    if (tau(i) < 0.0) throw std::invalid_argument("soft_threshold: negative threshold");
    const double mag = std::abs(t(i)) - tau(i);
    out(i) = mag > 0.0 ? std::copysign(mag, t(i)) : 0.0;
  }
  return out;
}

ScalingFactors scaling_factors(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z, Eigen::Index n,
                               double kappa0, const Eigen::VectorXd& phi) {
  const double xs = std::pow(spectral_norm(X), 2);
  const double zs = std::pow(spectral_norm(Z), 2);
  if (xs == 0.0 || zs == 0.0) throw std::invalid_argument("scaling_factors: zero design matrix");
  if (!(kappa0 > 0.0)) throw std::invalid_argument("scaling_factors: kappa0 must be positive");
  if (phi.size() == 0 || !(phi.minCoeff() > 0.0)) {
    throw std::invalid_argument("scaling_factors: dispersions must be positive");
  }
  const double phi_min = phi.minCoeff();
  return {kappa0 * xs / phi_min, static_cast<double>(n) * kappa0 / phi_min, kappa0 * zs / phi_min};
}

ScalingFactors scaling_factors(const GlmProblem& problem, const Eigen::VectorXd& phi) {
  const double phi_min = phi.minCoeff();
  if (!(phi_min > 0.0)) throw std::invalid_argument("scaling_factors: dispersions must be positive");
  const double k0 = problem.kappa0();
  return {k0 * problem.x_norm_sq() / phi_min,
          static_cast<double>(problem.design().n()) * k0 / phi_min,
          k0 * problem.z_norm_sq() / phi_min};
}

UnitRankComponent u_step(const GlmProblem& problem, const PenaltyConfig& penalty,
                         const GcureState& state, double s_u) {
  const UGradient grad = u_gradient(problem, state, false);
  const Eigen::VectorXd a = u_candidate(problem, penalty, state, grad, s_u);
  require_finite(a, "u-step");
  return rescale_component(a, state.component.v, problem.design().X);
}

UnitRankComponent v_step(const GlmProblem& problem, const PenaltyConfig& penalty,
                         const GcureState& state, double s_v) {
  const VGradient grad = v_gradient(problem, state, false);
  const Eigen::VectorXd b = v_candidate(penalty, state, grad, s_v);
  require_finite(b, "v-step");
  return rescale_component(state.component.u, b, problem.design().X);
}

Eigen::MatrixXd beta_step(const GlmProblem& problem, const GcureState& state, double s_beta) {
  const BetaGradient grad = beta_gradient(problem, state, false);
  Eigen::MatrixXd beta = state.beta + grad.g / s_beta;
  require_finite(beta, "beta-step");
  return beta;
}

Eigen::MatrixXd beta_step_safeguarded(const GlmProblem& problem, const GcureState& state,
                                      double s_beta, int* backtracks) {
  const bool check = needs_safeguard(problem);
  const BetaGradient grad = beta_gradient(problem, state, check);
  double s = s_beta;
  for (int bt = 0;; ++bt) {
    Eigen::MatrixXd beta = state.beta + grad.g / s;
    require_finite(beta, "beta-step");
    if (!check) return beta;
    Eigen::MatrixXd theta = grad.base;
    theta.noalias() += problem.design().Z * beta;
    const double loss = trace_nll(problem, theta, state.phi, "beta-step");
    const Eigen::MatrixXd delta = beta - state.beta;
    if (majorized(loss, grad.loss, (grad.g.array() * delta.array()).sum(), s, delta.squaredNorm())) {
      return beta;
    }
    if (bt == kMaxBacktracks) throw SolverError("beta-step", "no majorizing scaling factor found");
    s *= 2.0;
    if (backtracks != nullptr) ++*backtracks;
  }
}

Eigen::VectorXd phi_step(const Eigen::MatrixXd& theta, std::span<const Family> families,
                         const ObservedOutcomes& y) {
  Eigen::VectorXd phi = Eigen::VectorXd::Ones(theta.cols());
  for (Eigen::Index k = 0; k < theta.cols(); ++k) {
    if (families[k] != Family::Gaussian) continue;
    const Eigen::Index nk = y.observed_count(k);
    if (nk == 0) throw DataError("response column " + std::to_string(k + 1) + " has no observed entries");
    const double ss =
        (y.weights().col(k).array() * (y.values().col(k) - theta.col(k)).array().square()).sum();
    phi(k) = std::max(ss / static_cast<double>(nk), kDispersionFloor);
  }
  return phi;
}

Eigen::MatrixXd state_theta(const GlmProblem& problem, const GcureState& state) {
  Eigen::MatrixXd theta = control_part(problem, state.beta);
  if (!state.component.is_null()) {
    theta.noalias() += (problem.design().X * state.component.u) *
                       (state.component.d * state.component.v).transpose();
  }
  return theta;
}

double penalty_value(const PenaltyConfig& penalty, const UnitRankComponent& c) {
  if (c.is_null() || penalty.lambda == 0.0) return 0.0;
  const auto& w = penalty.weights;
  const double l1 = w.w_d * c.d * weighted_l1(c.u, w.w_u, w.excluded_u) *
                    weighted_l1(c.v, w.w_v, w.excluded_v);
  const double fro2 = c.d * c.d * c.u.squaredNorm() * c.v.squaredNorm();
  return penalty.alpha * penalty.lambda * l1 + (1.0 - penalty.alpha) * penalty.lambda * fro2;
}

double objective(const GlmProblem& problem, const PenaltyConfig& penalty, const GcureState& state) {
  const Eigen::MatrixXd theta = state_theta(problem, state);
  return full_neg_log_likelihood(theta, problem.families(), state.phi, problem.y()) +
         penalty_value(penalty, state.component);
}

namespace {

double penalty_u(const PenaltyConfig& penalty, const Eigen::VectorXd& a, const Eigen::VectorXd& v) {
  if (penalty.lambda == 0.0) return 0.0;
  const auto& w = penalty.weights;
  const double l1 = w.w_d * weighted_l1(a, w.w_u, w.excluded_u) * weighted_l1(v, w.w_v, w.excluded_v);
  return penalty.alpha * penalty.lambda * l1 +
         (1.0 - penalty.alpha) * penalty.lambda * a.squaredNorm() * v.squaredNorm();
}

}  // namespace

double objective_u(const GlmProblem& problem, const PenaltyConfig& penalty, const GcureState& state,
                   const Eigen::VectorXd& a) {
  Eigen::MatrixXd theta = control_part(problem, state.beta);
  theta.noalias() += (problem.design().X * a) * state.component.v.transpose();
  return neg_log_likelihood(theta, problem.families(), state.phi, problem.y()) +
         penalty_u(penalty, a, state.component.v);
}

double surrogate_u(const GlmProblem& problem, const PenaltyConfig& penalty, const GcureState& state,
                   const Eigen::VectorXd& a, double s_u) {
  const UGradient grad = u_gradient(problem, state, true);
  const Eigen::VectorXd delta = a - grad.check_u;
  return grad.loss - grad.g.dot(delta) + 0.5 * s_u * delta.squaredNorm() +
         penalty_u(penalty, a, state.component.v);
}

bool null_is_optimal(const GlmProblem& problem, const PenaltyConfig& penalty, const NullFit& null_fit) {
  const Eigen::MatrixXd theta = control_part(problem, null_fit.beta);
  const Eigen::MatrixXd R = masked_residual(theta, problem.families(), problem.y());
  const Eigen::MatrixXd G =
      problem.design().X.transpose() * R * null_fit.phi.cwiseInverse().asDiagonal();
  const double scale = penalty.alpha * penalty.lambda;
  for (Eigen::Index j = 0; j < G.cols(); ++j) {
    for (Eigen::Index i = 0; i < G.rows(); ++i) {
      const double w = penalty.weights.weight(i, j);
      if (std::isinf(w)) continue;
      if (std::abs(G(i, j)) > scale * w * (1.0 + 1e-12)) return false;
    }
  }
  return true;
}

GcureResult run_gcure(const GlmProblem& problem, const GcureState& init, const GcureConfig& config,
                      const NullFit* null_fit) {
  const auto& design = problem.design();
  const Eigen::Index p = design.p(), q = design.q();
  const PenaltyConfig& pen = config.penalty;
  pen.validate(p, q);
  if (!(config.epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (config.max_iter < 1) throw std::invalid_argument("max_iter must be >= 1");
  if (init.beta.rows() != design.pz() || init.beta.cols() != q || init.phi.size() != q ||
      init.component.u.size() != p || init.component.v.size() != q) {
    throw std::invalid_argument("G-CURE initial state has the wrong shape");
  }

  GcureResult result;
  if (null_fit != nullptr && null_is_optimal(problem, pen, *null_fit)) {
    result.component = UnitRankComponent::null(p, q);
    result.beta = null_fit->beta;
    result.phi = null_fit->phi;
    result.objective_trace.push_back(
        objective(problem, pen, GcureState{result.component, result.beta, result.phi}));
    result.converged = true;
    result.screened_null = true;
    return result;
  }

  const bool check = needs_safeguard(problem);
  GcureState st = init;
  if (st.component.is_null()) st.component = UnitRankComponent::null(p, q);
  // Objective and residual at the current state; the residual feeds the next u-step.
  auto evaluate = [&](const std::string& where) {
    try {
      LikelihoodEvaluation ev =
          evaluate_likelihood(state_theta(problem, st), problem.families(), st.phi, problem.y());
      ev.nll += penalty_value(pen, st.component);
      return ev;
    } catch (const std::domain_error& e) {
      throw SolverError(where, e.what());
    }
  };
  LikelihoodEvaluation current = evaluate("G-CURE start");
  double f_prev = current.nll;
  result.objective_trace.push_back(f_prev);

  for (int it = 1; it <= config.max_iter; ++it) {
    const Eigen::VectorXd x_old = stacked(st);
    const ScalingFactors sf = scaling_factors(problem, st.phi);

    if (!st.component.is_null()) {
      // u-step
      {
        const UGradient grad = u_gradient(problem, st, check, &current.residual);
        double s = sf.s_u;
        Eigen::VectorXd a;
        for (int bt = 0;; ++bt) {
          a = u_candidate(problem, pen, st, grad, s);
          require_finite(a, "u-step");
          if (!check) break;
          Eigen::MatrixXd theta = grad.base;
          theta.noalias() += (design.X * a) * st.component.v.transpose();
          const double loss = trace_nll(problem, theta, st.phi, "u-step");
          const Eigen::VectorXd delta = a - grad.check_u;
          if (majorized(loss, grad.loss, grad.g.dot(delta), s, delta.squaredNorm())) break;
          if (bt == kMaxBacktracks) throw SolverError("u-step", "no majorizing scaling factor found");
          s *= 2.0;
          ++result.backtracks;
        }
        st.component = rescale_component(a, st.component.v, design.X);
      }
      // v-step
      if (!st.component.is_null()) {
        const VGradient grad = v_gradient(problem, st, check);
        double s = sf.s_v;
        Eigen::VectorXd b;
        for (int bt = 0;; ++bt) {
          b = v_candidate(pen, st, grad, s);
          require_finite(b, "v-step");
          if (!check) break;
          Eigen::MatrixXd theta = grad.base;
          theta.noalias() += grad.xu * b.transpose();
          const double loss = trace_nll(problem, theta, st.phi, "v-step");
          const Eigen::VectorXd delta = b - grad.check_v;
          if (majorized(loss, grad.loss, grad.g.dot(delta), s, delta.squaredNorm())) break;
          if (bt == kMaxBacktracks) throw SolverError("v-step", "no majorizing scaling factor found");
          s *= 2.0;
          ++result.backtracks;
        }
        st.component = rescale_component(st.component.u, b, design.X);
      }
      if (st.component.is_null()) st.component = UnitRankComponent::null(p, q);
    }

    st.beta = beta_step_safeguarded(problem, st, sf.s_beta, &result.backtracks);

    // Phi-step
    st.phi = phi_step(state_theta(problem, st), problem.families(), problem.y());

    current = evaluate("G-CURE iteration " + std::to_string(it));
    const double f = current.nll;
    if (f > f_prev + kDescentSlack * std::abs(f_prev)) {
      throw SolverError("G-CURE iteration " + std::to_string(it),
                        "objective increased from " + std::to_string(f_prev) + " to " +
                            std::to_string(f));
    }
    result.objective_trace.push_back(f);
    f_prev = f;
    result.iterations = it;

    const Eigen::VectorXd x_new = stacked(st);
    const double base_norm = x_old.norm();
    const double change = (x_new - x_old).norm();
    const double rel = base_norm > 0.0 ? change / base_norm : change;
    if (rel < config.epsilon) {
      result.converged = true;
      break;
    }
  }

  result.component = st.component;
  result.beta = std::move(st.beta);
  result.phi = std::move(st.phi);
  return result;
}

}  // namespace gofar
