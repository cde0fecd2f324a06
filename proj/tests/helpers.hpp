#pragma once

#include "gofar/families.hpp"
#include "gofar/model.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>

namespace testing {

inline Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd M(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) M(i, j) = normal(rng);
  }
  return M;
}

inline double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double denom = std::max(b.norm(), 1e-300);
  return (a - b).norm() / denom;
}

/// Draws responses of the given families at natural parameters theta.
inline Eigen::MatrixXd sample_responses(const Eigen::MatrixXd& theta, const gofar::FamilyList& fam,
                                        std::mt19937_64& rng, double sd = 1.0) {
  Eigen::MatrixXd Y(theta.rows(), theta.cols());
  std::normal_distribution<double> normal(0.0, sd);
  for (Eigen::Index k = 0; k < theta.cols(); ++k) {
    for (Eigen::Index i = 0; i < theta.rows(); ++i) {
      const double t = theta(i, k);
      switch (fam[k]) {
        case gofar::Family::Gaussian: Y(i, k) = t + normal(rng); break;
        case gofar::Family::Bernoulli:
          Y(i, k) = std::bernoulli_distribution(1.0 / (1.0 + std::exp(-t)))(rng) ? 1.0 : 0.0;
          break;
        case gofar::Family::Poisson:
          Y(i, k) = static_cast<double>(std::poisson_distribution<int>(std::exp(t))(rng));
          break;
      }
    }
  }
  return Y;
}

inline gofar::MaskArray random_mask(Eigen::Index n, Eigen::Index q, double missing,
                                    std::mt19937_64& rng) {
  gofar::MaskArray mask(n, q);
  std::bernoulli_distribution drop(missing);
  for (Eigen::Index k = 0; k < q; ++k) {
    for (Eigen::Index i = 0; i < n; ++i) mask(i, k) = !drop(rng);
    mask(0, k) = true;
  }
  return mask;
}

}  // namespace testing
