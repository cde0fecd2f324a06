#pragma once

#include <Eigen/Dense>

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gofar {

enum class Family { Gaussian, Bernoulli, Poisson };

using FamilyList = std::vector<Family>;
using MaskArray = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Poisson natural parameters are clipped to this value before exponentiation.
inline constexpr double kPoissonThetaClip = 30.0;
/// Lower bound on an estimated Gaussian variance.
inline constexpr double kDispersionFloor = 1e-8;
/// Default curvature bound used for Poisson columns.
inline constexpr double kDefaultAlphaP = 10.0;

std::string to_string(Family family);
Family parse_family(std::string_view name);

/// Parses a compact layout such as "g×15,b×15", "gaussianx30" or "g,g,p".
/// A leading '[' switches to the JSON array form, e.g. ["gaussian","poisson"].
FamilyList parse_family_list(std::string_view text);

// Cumulant function b and its first two derivatives for canonical links.
double b_value(Family family, double theta);
double b_prime(Family family, double theta);
double b_second(Family family, double theta);

/// Upper bound on b'' for one family (Gaussian 1, Bernoulli 1/4, Poisson alpha_p).
double curvature_bound(Family family, double alpha_p = kDefaultAlphaP);

/// Uniform curvature bound over all response columns.
double kappa0(std::span<const Family> families, double alpha_p = kDefaultAlphaP);

/// Fixed dispersion for every family: Gaussian starts at 1 and is re-estimated.
Eigen::VectorXd unit_dispersions(std::size_t q);

/// Response matrix plus the observed-cell mask. Unobserved cells are stored
/// as 0 so that no arithmetic can ever read them.
class ObservedOutcomes {
 public:
  ObservedOutcomes() = default;
  explicit ObservedOutcomes(Eigen::MatrixXd values);
  ObservedOutcomes(Eigen::MatrixXd values, MaskArray mask);

  const Eigen::MatrixXd& values() const { return values_; }
  const MaskArray& mask() const { return mask_; }
  /// The mask as a 0/1 matrix.
  const Eigen::MatrixXd& weights() const { return weights_; }
  Eigen::Index rows() const { return values_.rows(); }
  Eigen::Index cols() const { return values_.cols(); }
  bool observed(Eigen::Index i, Eigen::Index k) const { return mask_(i, k); }
  Eigen::Index observed_count(Eigen::Index k) const;
  Eigen::Index observed_count() const;

  /// Same values restricted to a sub-mask (cells outside `mask` become missing).
  ObservedOutcomes restricted(const MaskArray& mask) const;

 private:
  Eigen::MatrixXd values_;
  MaskArray mask_;
  Eigen::MatrixXd weights_;
};

/// Checks family support (binary / count values) and that every column has at
/// least one observed entry. Throws DataError naming the cell.
void validate_outcomes(const ObservedOutcomes& y, std::span<const Family> families);

/// Columnwise B'(Theta), the mean matrix.
Eigen::MatrixXd mean_matrix(const Eigen::MatrixXd& theta, std::span<const Family> families);

/// P_Omega(Y - B'(Theta)).
Eigen::MatrixXd masked_residual(const Eigen::MatrixXd& theta, std::span<const Family> families,
                                const ObservedOutcomes& y);

/// -Tr(Y~' Theta Phi^-1) + Tr(J~' B(Theta) Phi^-1) over observed cells; omits c(y; phi).
double neg_log_likelihood(const Eigen::MatrixXd& theta, std::span<const Family> families,
                          const Eigen::VectorXd& phi, const ObservedOutcomes& y);

/// Same as neg_log_likelihood plus the c(y; phi) terms, i.e. the exact
/// negative log-likelihood. Differs from the trace form by a quantity that
/// depends on Phi and Y only.
double full_neg_log_likelihood(const Eigen::MatrixXd& theta, std::span<const Family> families,
                               const Eigen::VectorXd& phi, const ObservedOutcomes& y);

/// full_neg_log_likelihood together with masked_residual from one pass over
/// the cumulant evaluations.
struct LikelihoodEvaluation {
  double nll = 0.0;
  Eigen::MatrixXd residual;
};
LikelihoodEvaluation evaluate_likelihood(const Eigen::MatrixXd& theta,
                                         std::span<const Family> families,
                                         const Eigen::VectorXd& phi, const ObservedOutcomes& y);

}  // namespace gofar
