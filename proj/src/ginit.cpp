#include "gofar/ginit.hpp"

#include "gofar/error.hpp"
#include "gofar/linalg.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <stdexcept>

namespace gofar {

namespace {

constexpr double kExcludeBelow = 1e-12;
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

double trace_nll_column(const Eigen::VectorXd& theta, const FamilyList& fam, const Eigen::VectorXd& phi,
                        const ObservedOutcomes& y) {
  try {
    return neg_log_likelihood(theta, fam, phi, y);
  } catch (const std::domain_error& e) {
    throw SolverError("G-INIT beta-step", e.what());
  }
}

double full_nll(const GlmProblem& pb, const Eigen::MatrixXd& theta, const Eigen::VectorXd& phi,
                const char* step) {
  try {
    return full_neg_log_likelihood(theta, pb.families(), phi, pb.y());
  } catch (const std::domain_error& e) {
    throw SolverError(step, e.what());
  }
}

bool has_poisson(const GlmProblem& pb) {
  for (Family f : pb.families()) {
    if (f == Family::Poisson) return true;
  }
  return false;
}

/// Projected gradient step on C. Column k gets its own curvature
/// s_k = kappa0 ||X||^2 / phi_k, and the rank-r truncation is taken in the
/// whitened coordinates C diag(sqrt(s)), where it is the exact minimizer of
/// the surrogate. Poisson columns trigger the doubling safeguard.
Eigen::MatrixXd c_step(const GlmProblem& pb, const Eigen::MatrixXd& C, const Eigen::MatrixXd& beta,
                       const Eigen::VectorXd& phi, Eigen::Index r, int& backtracks) {
  const auto& X = pb.design().X;
  Eigen::MatrixXd base = pb.design().O;
  base.noalias() += pb.design().Z * beta;
  Eigen::MatrixXd theta = base;
  theta.noalias() += X * C;
  const Eigen::MatrixXd G =
      X.transpose() * masked_residual(theta, pb.families(), pb.y()) * phi.cwiseInverse().asDiagonal();
  const bool poisson = has_poisson(pb);
  Eigen::ArrayXd s = pb.kappa0() * pb.x_norm_sq() / phi.array();
  for (int bt = 0;; ++bt) {
    const Eigen::ArrayXd root = s.sqrt();
    const Eigen::MatrixXd target = (C + G * s.inverse().matrix().asDiagonal()) * root.matrix().asDiagonal();
    Eigen::MatrixXd next = svd_truncate(target, r) * root.inverse().matrix().asDiagonal();
    if (!next.allFinite()) throw SolverError("G-INIT C-step", "produced non-finite parameters");
    if (!poisson) return next;
    theta = base;
    theta.noalias() += X * next;
    const double loss = trace_nll(pb, theta, phi, "G-INIT C-step");
    const double loss_old = trace_nll(pb, base + X * C, phi, "G-INIT C-step");
    const Eigen::MatrixXd delta = next - C;
    const double bound = loss_old - (G.array() * delta.array()).sum() +
                         0.5 * (delta.colwise().squaredNorm().transpose().array() * s).sum();
    if (loss <= bound + kMajorizeSlack * (1.0 + std::abs(loss_old))) return next;
    if (bt == kMaxBacktracks) throw SolverError("G-INIT C-step", "no majorizing scaling factor found");
    s *= 2.0;
    ++backtracks;
  }
}

/// Unpenalized beta step with per-column curvature kappa0 ||Z||^2 / phi_k;
/// columns are separable, so Poisson columns are safeguarded one at a time.
Eigen::MatrixXd beta_step_columns(const GlmProblem& pb, const Eigen::MatrixXd& C,
                                  const Eigen::MatrixXd& beta, const Eigen::VectorXd& phi,
                                  int& backtracks) {
  const auto& Z = pb.design().Z;
  Eigen::MatrixXd base = pb.design().O;
  base.noalias() += pb.design().X * C;
  Eigen::MatrixXd theta = base;
  theta.noalias() += Z * beta;
  const Eigen::MatrixXd R = masked_residual(theta, pb.families(), pb.y());
  const Eigen::MatrixXd G = Z.transpose() * R * phi.cwiseInverse().asDiagonal();
  const double s0 = pb.kappa0() * pb.z_norm_sq();
  Eigen::MatrixXd next(beta.rows(), beta.cols());
  for (Eigen::Index k = 0; k < beta.cols(); ++k) {
    double s = s0 / phi(k);
    next.col(k) = beta.col(k) + G.col(k) / s;
    if (pb.families()[k] != Family::Poisson) continue;
    const FamilyList fam{Family::Poisson};
    const Eigen::VectorXd phi_k = Eigen::VectorXd::Constant(1, phi(k));
    const ObservedOutcomes y_k(pb.y().values().col(k), pb.y().mask().col(k));
    const double loss_old = trace_nll_column(theta.col(k), fam, phi_k, y_k);
    for (int bt = 0;; ++bt) {
      const Eigen::VectorXd delta = next.col(k) - beta.col(k);
      const Eigen::VectorXd theta_k = base.col(k) + Z * next.col(k);
      const double loss = trace_nll_column(theta_k, fam, phi_k, y_k);
      const double bound = loss_old - G.col(k).dot(delta) + 0.5 * s * delta.squaredNorm();
      if (loss <= bound + kMajorizeSlack * (1.0 + std::abs(loss_old))) break;
      if (bt == kMaxBacktracks) throw SolverError("G-INIT beta-step", "no majorizing scaling factor found");
      s *= 2.0;
      ++backtracks;
      next.col(k) = beta.col(k) + G.col(k) / s;
    }
  }
  if (!next.allFinite()) throw SolverError("G-INIT beta-step", "produced non-finite parameters");
  return next;
}

}  // namespace

GinitResult run_ginit(const GlmProblem& problem, Eigen::Index r, const GinitConfig& config) {
  const auto& design = problem.design();
  const Eigen::Index p = design.p(), q = design.q();
  if (r < 1 || r > std::min(p, q)) throw std::invalid_argument("G-INIT rank out of range");
  if (!(config.epsilon > 0.0) || config.max_iter < 1) {
    throw std::invalid_argument("invalid G-INIT configuration");
  }

  GinitResult out;
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(p, q);
  Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(design.pz(), q);
  Eigen::VectorXd phi = unit_dispersions(static_cast<std::size_t>(q));
  out.nll_trace.push_back(full_nll(problem, natural_params(design, C, beta), phi, "G-INIT start"));

  for (int it = 1; it <= config.max_iter; ++it) {
    const Eigen::MatrixXd C_old = C, beta_old = beta;
    C = c_step(problem, C, beta, phi, r, out.backtracks);
    beta = beta_step_columns(problem, C, beta, phi, out.backtracks);
    const Eigen::MatrixXd theta = natural_params(design, C, beta);
    phi = phi_step(theta, problem.families(), problem.y());
    out.nll_trace.push_back(full_nll(problem, theta, phi, "G-INIT iteration"));
    out.iterations = it;

    const double change = std::sqrt((C - C_old).squaredNorm() + (beta - beta_old).squaredNorm());
    const double base = std::sqrt(C_old.squaredNorm() + beta_old.squaredNorm());
    if ((base > 0.0 ? change / base : change) < config.epsilon) {
      out.converged = true;
      break;
    }
  }

  out.components = xsvd_decompose(C, design.X, r);
  out.C_tilde = std::move(C);
  out.beta_tilde = std::move(beta);
  out.phi_tilde = std::move(phi);
  return out;
}

std::vector<UnitRankComponent> xsvd_decompose(const Eigen::MatrixXd& C, const Eigen::MatrixXd& X,
                                              Eigen::Index r) {
  const Eigen::Index p = C.rows(), q = C.cols();
  const double sqrt_n = std::sqrt(static_cast<double>(X.rows()));
  std::vector<UnitRankComponent> out;
  out.reserve(static_cast<std::size_t>(std::max<Eigen::Index>(r, 0)));
  const Eigen::MatrixXd M = X * C / sqrt_n;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeThinV);
  const Eigen::VectorXd& S = svd.singularValues();
  const double top = S.size() > 0 ? S(0) : 0.0;
  for (Eigen::Index k = 0; k < r; ++k) {
    if (k >= S.size() || !(top > 0.0) || S(k) < kNullSingularValue * top) {
      out.push_back(UnitRankComponent::null(p, q));
      continue;
    }
    UnitRankComponent c;
    c.d = S(k);
    c.v = svd.matrixV().col(k);
    c.u = C * c.v / S(k);
    canonicalize_sign(c);
    out.push_back(std::move(c));
  }
  return out;
}

PenaltyWeights adaptive_weights(const UnitRankComponent& component, double gamma) {
  if (!(gamma >= 0.0)) throw std::invalid_argument("gamma must be >= 0");
  const Eigen::Index p = component.u.size(), q = component.v.size();
  PenaltyWeights w = PenaltyWeights::unit(p, q);
  if (component.is_null()) {
    w.excluded_u.setConstant(true);
    w.excluded_v.setConstant(true);
    return w;
  }
  if (gamma == 0.0) return w;
  w.w_d = std::pow(std::abs(component.d), -gamma);
  auto fill = [gamma](const Eigen::VectorXd& x, Eigen::VectorXd& wt, ExclusionMask& ex) {
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (std::abs(x(i)) < kExcludeBelow) {
        ex(i) = true;
      } else {
        wt(i) = std::pow(std::abs(x(i)), -gamma);
      }
    }
  };
  fill(component.u, w.w_u, w.excluded_u);
  fill(component.v, w.w_v, w.excluded_v);
  return w;
}

NullFit fit_null_model(const GlmProblem& problem, double epsilon, int max_iter) {
  const auto& design = problem.design();
  const Eigen::Index p = design.p(), q = design.q();
  GcureState st{UnitRankComponent::null(p, q), Eigen::MatrixXd::Zero(design.pz(), q),
                unit_dispersions(static_cast<std::size_t>(q))};
  const Eigen::MatrixXd C0 = Eigen::MatrixXd::Zero(p, q);
  int backtracks = 0;
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::MatrixXd old = st.beta;
    st.beta = beta_step_columns(problem, C0, st.beta, st.phi, backtracks);
    st.phi = phi_step(state_theta(problem, st), problem.families(), problem.y());
    const double base = old.norm();
    const double change = (st.beta - old).norm();
    if ((base > 0.0 ? change / base : change) < epsilon) break;
  }
  return {std::move(st.beta), std::move(st.phi)};
}

}  // namespace gofar
