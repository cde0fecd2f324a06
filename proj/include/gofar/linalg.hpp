#pragma once

#include <Eigen/Dense>

namespace gofar {

/// Largest singular value of M (0 for an empty or zero matrix).
double spectral_norm(const Eigen::MatrixXd& M);

/// Best rank-r approximation of M from its top-r singular triplets.
/// Requires 1 <= r <= min(rows, cols).
Eigen::MatrixXd svd_truncate(const Eigen::MatrixXd& M, Eigen::Index r);

/// Symmetric inverse square root of a positive definite matrix.
Eigen::MatrixXd inverse_sqrt_spd(const Eigen::MatrixXd& A);

}  // namespace gofar
