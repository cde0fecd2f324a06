#pragma once

#include "gofar/families.hpp"
#include "gofar/model.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gofar {

struct SimSpec {
  int n = 200;
  int p = 100;
  int q_gaussian = 30;
  int q_bernoulli = 0;
  int q_poisson = 0;
  int rank = 3;
  std::array<double, 3> d = {6.0, 5.0, 4.0};
  /// Multiplier on d; <= 0 picks 0.4 when Poisson columns are present, else 1.
  double scale = 0.0;
  double snr = 0.5;
  double missing_fraction = 0.0;
  std::uint64_t seed = 0;

  int q() const { return q_gaussian + q_bernoulli + q_poisson; }
  bool mixed() const;
  double effective_scale() const;
  FamilyList families() const;
  void validate() const;

  /// Setup I (n=200, p=100) or II (p=300) with the given family layout:
  /// "gaussian", "bernoulli", "poisson" (q=30) or "gb", "gp" (15 + 15).
  static SimSpec setup(int which, const std::string& layout);
};

struct SimCoefficients {
  Eigen::MatrixXd U;  // p x r, unit-norm columns
  Eigen::MatrixXd V;  // q x r, unit-norm columns
  Eigen::VectorXd D;  // r
  Eigen::MatrixXd beta;
};

struct SimTruth {
  SimSpec spec;
  FamilyList families;
  Eigen::MatrixXd U, V;
  Eigen::VectorXd D;
  Eigen::MatrixXd C, beta, X, Z, Theta;
  ObservedOutcomes Y;
  double sigma = 0.0;

  /// Truth as unit-rank components under the ||X u|| = sqrt(n) scaling.
  std::vector<UnitRankComponent> components() const;
};

SimCoefficients gen_coef(const SimSpec& spec);

/// Gaussian design with (X U)'(X U) / n = I exactly.
Eigen::MatrixXd gen_design(int n, int p, const Eigen::MatrixXd& U, std::uint64_t seed);

/// Gaussian noise sd for the weakest-component SNR convention.
double noise_sd(const SimCoefficients& coef, const Eigen::MatrixXd& X, int q_gaussian, double snr);

/// Samples Y from the natural parameters; Gaussian columns use sd `sigma`.
ObservedOutcomes gen_responses(const Eigen::MatrixXd& theta, std::span<const Family> families,
                               double sigma, std::uint64_t seed);

/// Marks floor(fraction * n * q) observed cells missing, uniformly.
ObservedOutcomes mask_missing(const ObservedOutcomes& y, double fraction, std::uint64_t seed);

SimTruth simulate(const SimSpec& spec);

struct Metrics {
  double ErC = 0.0;
  double ErTheta = 0.0;
  double FPR = 0.0;
  double FNR = 0.0;
  double Rpct = 0.0;
  int rank = 0;
  double time_s = 0.0;
};

Metrics metrics(const FitResult& fit, const SimTruth& truth);

/// Column-wise mean and sample sd of a batch of metric rows.
struct MetricsSummary {
  Metrics mean;
  Metrics sd;
  double rank_mean = 0.0;
  double rank_sd = 0.0;
  std::size_t count = 0;
};
MetricsSummary aggregate(std::span<const Metrics> rows);

}  // namespace gofar
