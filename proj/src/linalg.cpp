#include "gofar/linalg.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gofar {

double spectral_norm(const Eigen::MatrixXd& M) {
  if (M.size() == 0) return 0.0;
  // Small side first: the Gram matrix eigenvalue problem is cheap at these sizes.
  const Eigen::MatrixXd G = M.rows() >= M.cols() ? Eigen::MatrixXd(M.transpose() * M)
                                                 : Eigen::MatrixXd(M * M.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G, Eigen::EigenvaluesOnly);
  const double top = eig.eigenvalues().maxCoeff();
  // Round up by a relative 1e-12 so the norm is never underestimated.
  return std::sqrt(std::max(top, 0.0) * (1.0 + 1e-12));
}

Eigen::MatrixXd svd_truncate(const Eigen::MatrixXd& M, Eigen::Index r) {
  const Eigen::Index k = std::min(M.rows(), M.cols());
  if (r < 1 || r > k) throw std::invalid_argument("svd_truncate: rank out of range");
  if (r == k) {
    // Full rank keeps M; avoid the round trip.
    return M;
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return svd.matrixU().leftCols(r) * svd.singularValues().head(r).asDiagonal() *
         svd.matrixV().leftCols(r).transpose();
}

Eigen::MatrixXd inverse_sqrt_spd(const Eigen::MatrixXd& A) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A);
  if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() <= 0.0) {
    throw std::domain_error("matrix is not positive definite");
  }
  return eig.eigenvectors() * eig.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
         eig.eigenvectors().transpose();
}

}  // namespace gofar
