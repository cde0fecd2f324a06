#include "gofar/model.hpp"

#include <cmath>
#include <stdexcept>

namespace gofar {

DesignMatrices DesignMatrices::with_intercept(Eigen::MatrixXd X, Eigen::Index q) {
  DesignMatrices d;
  const Eigen::Index n = X.rows();
  d.X = std::move(X);
  d.Z = Eigen::MatrixXd::Ones(n, 1);
  d.O = Eigen::MatrixXd::Zero(n, q);
  return d;
}

DesignMatrices DesignMatrices::with_offset(Eigen::MatrixXd offset) const {
  DesignMatrices d{X, Z, std::move(offset)};
  return d;
}

void DesignMatrices::validate() const {
  if (X.rows() < 2) throw std::invalid_argument("design needs at least two rows");
  if (X.cols() < 1) throw std::invalid_argument("design needs at least one predictor");
  if (Z.cols() < 1) throw std::invalid_argument("design needs at least one control column");
  if (Z.rows() != X.rows() || O.rows() != X.rows()) {
    throw std::invalid_argument("X, Z and O must have the same number of rows");
  }
  if (!X.allFinite() || !Z.allFinite() || !O.allFinite()) {
    throw std::invalid_argument("design matrices contain non-finite entries");
  }
}

UnitRankComponent UnitRankComponent::null(Eigen::Index p, Eigen::Index q) {
  return {0.0, Eigen::VectorXd::Zero(p), Eigen::VectorXd::Zero(q)};
}

Eigen::MatrixXd natural_params(const DesignMatrices& design, const Eigen::MatrixXd& C,
                               const Eigen::MatrixXd& beta) {
  if (C.rows() != design.p() || C.cols() != design.q() || beta.rows() != design.pz() ||
      beta.cols() != design.q()) {
    throw std::invalid_argument("coefficient shapes do not match the design");
  }
  Eigen::MatrixXd theta = design.O;
  theta.noalias() += design.Z * beta;
  theta.noalias() += design.X * C;
  return theta;
}

Eigen::MatrixXd compose_coefficient(std::span<const UnitRankComponent> components,
                                    Eigen::Index p, Eigen::Index q) {
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(p, q);
  for (const auto& c : components) {
    if (c.u.size() != p || c.v.size() != q) {
      throw std::invalid_argument("component shapes are inconsistent");
    }
    if (!c.is_null()) C.noalias() += c.d * c.u * c.v.transpose();
  }
  return C;
}

void canonicalize_sign(UnitRankComponent& component) {
  if (component.v.size() == 0) return;
  Eigen::Index arg = 0;
  double best = -1.0;
  for (Eigen::Index j = 0; j < component.v.size(); ++j) {
    const double a = std::abs(component.v(j));
    if (a > best) {
      best = a;
      arg = j;
    }
  }
  if (component.v(arg) < 0.0) {
    component.u = -component.u;
    component.v = -component.v;
  }
}

UnitRankComponent rescale_component(const Eigen::VectorXd& u_raw, const Eigen::VectorXd& v_raw,
                                    const Eigen::MatrixXd& X) {
  if (!u_raw.allFinite() || !v_raw.allFinite()) {
    throw std::domain_error("rescale_component received non-finite input");
  }
  const Eigen::Index p = u_raw.size();
  const Eigen::Index q = v_raw.size();
  const double xu = (X * u_raw).norm();
  const double vn = v_raw.norm();
  const double sqrt_n = std::sqrt(static_cast<double>(X.rows()));
  const double d = xu * vn / sqrt_n;
  if (xu == 0.0 || vn == 0.0 || !(d >= kNullSingularValue)) return UnitRankComponent::null(p, q);
  UnitRankComponent c{d, u_raw * (sqrt_n / xu), v_raw / vn};
  canonicalize_sign(c);
  return c;
}

FitResult assemble_fit(std::vector<UnitRankComponent> components, Eigen::MatrixXd beta,
                       Eigen::VectorXd phi, const Eigen::MatrixXd& X, FitDiagnostics diagnostics) {
  FitResult fit;
  const Eigen::Index p = X.cols();
  const Eigen::Index q = beta.cols();
  fit.C = compose_coefficient(components, p, q);
  int rank = 0;
  for (const auto& c : components) rank += c.is_null() ? 0 : 1;
  fit.rank = rank;

  const auto r = static_cast<Eigen::Index>(components.size());
  Eigen::MatrixXd U(p, r), V(q, r);
  for (Eigen::Index k = 0; k < r; ++k) {
    U.col(k) = components[k].u;
    V.col(k) = components[k].v;
  }
  const Eigen::MatrixXd XU = X * U;
  diagnostics.u_gram = XU.transpose() * XU / static_cast<double>(X.rows());
  diagnostics.v_gram = V.transpose() * V;

  fit.components = std::move(components);
  fit.beta = std::move(beta);
  fit.phi = std::move(phi);
  fit.diagnostics = std::move(diagnostics);
  return fit;
}

}  // namespace gofar
