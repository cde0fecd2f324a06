#pragma once

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

namespace gofar {

/// Singular values below this are treated as zero (null component).
inline constexpr double kNullSingularValue = 1e-10;

/// Predictors X (n x p), controls Z (n x p_z) and offset O (n x q).
struct DesignMatrices {
  Eigen::MatrixXd X;
  Eigen::MatrixXd Z;
  Eigen::MatrixXd O;

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index p() const { return X.cols(); }
  Eigen::Index pz() const { return Z.cols(); }
  Eigen::Index q() const { return O.cols(); }

  /// Builds a design with a zero offset; `Z` defaults to an intercept column.
  static DesignMatrices with_intercept(Eigen::MatrixXd X, Eigen::Index q);

  /// Copy of this design with O replaced.
  DesignMatrices with_offset(Eigen::MatrixXd offset) const;

  /// Throws std::invalid_argument on shape or finiteness violations.
  void validate() const;
};

/// One term d * u * v' of the coefficient matrix, normalized so that
/// ||X u||_2 = sqrt(n) and ||v||_2 = 1. A null component has d = 0 and
/// zero vectors.
struct UnitRankComponent {
  double d = 0.0;
  Eigen::VectorXd u;
  Eigen::VectorXd v;

  bool is_null() const { return d == 0.0; }
  Eigen::MatrixXd matrix() const { return d * u * v.transpose(); }

  static UnitRankComponent null(Eigen::Index p, Eigen::Index q);
};

/// Theta = O + Z beta + X C.
Eigen::MatrixXd natural_params(const DesignMatrices& design, const Eigen::MatrixXd& C,
                               const Eigen::MatrixXd& beta);

/// Sum of d_k u_k v_k'. An empty list yields a p x q zero matrix.
Eigen::MatrixXd compose_coefficient(std::span<const UnitRankComponent> components,
                                    Eigen::Index p, Eigen::Index q);

/// Flips u and v together so the largest-magnitude entry of v is positive
/// (lowest index wins ties).
void canonicalize_sign(UnitRankComponent& component);

/// Splits the product u_raw v_raw' into (d, u, v) under the X-norm constraint.
UnitRankComponent rescale_component(const Eigen::VectorXd& u_raw, const Eigen::VectorXd& v_raw,
                                    const Eigen::MatrixXd& X);

/// Per-extraction-step record kept alongside a fit.
struct ComponentDiagnostics {
  int index = 0;
  double lambda = 0.0;
  std::vector<double> lambda_path;
  std::vector<double> cv_mean;
  std::vector<double> cv_sd;
  int chosen_index = -1;
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = false;
  int backtracks = 0;
  bool screened_null = false;
};

struct FitDiagnostics {
  std::string method;
  std::vector<ComponentDiagnostics> steps;
  /// (X U)'(X U) / n and V'V over the returned components.
  Eigen::MatrixXd u_gram;
  Eigen::MatrixXd v_gram;
  double time_s = 0.0;
};

struct FitResult {
  std::vector<UnitRankComponent> components;
  Eigen::MatrixXd C;
  Eigen::MatrixXd beta;
  Eigen::VectorXd phi;
  int rank = 0;
  FitDiagnostics diagnostics;
};

/// Fills C, rank and the cross-component Gram matrices from `components`.
FitResult assemble_fit(std::vector<UnitRankComponent> components, Eigen::MatrixXd beta,
                       Eigen::VectorXd phi, const Eigen::MatrixXd& X, FitDiagnostics diagnostics);

}  // namespace gofar
