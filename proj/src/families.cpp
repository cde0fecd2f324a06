#include "gofar/families.hpp"

#include "gofar/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace gofar {

namespace {

void require_finite(double theta) {
  if (!std::isfinite(theta)) throw std::domain_error("natural parameter is not finite");
}

double clip_poisson(double theta) { return std::min(theta, kPoissonThetaClip); }

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

void check_shapes(const Eigen::MatrixXd& theta, std::span<const Family> families,
                  const ObservedOutcomes& y) {
  if (theta.rows() != y.rows() || theta.cols() != y.cols() ||
      static_cast<Eigen::Index>(families.size()) != y.cols()) {
    throw std::invalid_argument("natural parameter, family list and response shapes disagree");
  }
}

/// Columnwise b(theta) and b'(theta) for the non-Gaussian families.
Eigen::ArrayXd b_value_col(Family f, const Eigen::ArrayXd& t) {
  // log(1 + e) with e in (0, 1]: absolute error stays at rounding level, and
  // unlike log1p it vectorizes.
  if (f == Family::Bernoulli) return t.max(0.0) + (1.0 + (-t.abs()).exp()).log();
  return t.min(kPoissonThetaClip).exp();
}

Eigen::ArrayXd b_prime_col(Family f, const Eigen::ArrayXd& t) {
  if (f == Family::Bernoulli) {
    const Eigen::ArrayXd e = (-t.abs()).exp();
    return (t >= 0.0).select(1.0 / (1.0 + e), e / (1.0 + e));
  }
  return t.min(kPoissonThetaClip).exp();
}

}  // namespace

std::string to_string(Family family) {
  switch (family) {
    case Family::Gaussian: return "gaussian";
    case Family::Bernoulli: return "bernoulli";
    case Family::Poisson: return "poisson";
  }
  return "unknown";
}

Family parse_family(std::string_view name) {
  const std::string n = lower(trim(name));
  if (n == "g" || n == "gaussian" || n == "normal") return Family::Gaussian;
  if (n == "b" || n == "bernoulli" || n == "binary" || n == "binomial") return Family::Bernoulli;
  if (n == "p" || n == "poisson") return Family::Poisson;
  throw std::invalid_argument("unknown family '" + std::string(name) + "'");
}

FamilyList parse_family_list(std::string_view text) {
  text = trim(text);
  FamilyList out;
  if (!text.empty() && text.front() == '[') {
    const auto arr = nlohmann::json::parse(text.begin(), text.end());
    if (!arr.is_array()) throw std::invalid_argument("family list must be a JSON array");
    for (const auto& item : arr) out.push_back(parse_family(item.get<std::string>()));
  } else {
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const std::size_t comma = std::min(text.find(',', pos), text.size());
      const std::string_view token = trim(text.substr(pos, comma - pos));
      pos = comma + 1;
      if (token.empty()) {
        if (comma == text.size()) break;
        continue;
      }
      std::size_t sep = token.find("\xC3\x97");  // U+00D7 multiplication sign
      std::size_t sep_len = 2;
      if (sep == std::string_view::npos) {
        sep = token.find_first_of("xX*");
        sep_len = 1;
      }
      long count = 1;
      std::string_view name = token;
      if (sep != std::string_view::npos) {
        name = token.substr(0, sep);
        const std::string digits(trim(token.substr(sep + sep_len)));
        std::size_t used = 0;
        try {
          count = std::stol(digits, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != digits.size() || count < 1) {
          throw std::invalid_argument("bad repeat count in family token '" + std::string(token) +
                                      "'");
        }
      }
      const Family f = parse_family(name);
      out.insert(out.end(), static_cast<std::size_t>(count), f);
    }
  }
  if (out.empty()) throw std::invalid_argument("empty family list");
  return out;
}

double b_value(Family family, double theta) {
  require_finite(theta);
  switch (family) {
    case Family::Gaussian: return 0.5 * theta * theta;
    case Family::Bernoulli: return std::max(theta, 0.0) + std::log1p(std::exp(-std::abs(theta)));
    case Family::Poisson: return std::exp(clip_poisson(theta));
  }
  return 0.0;
}

double b_prime(Family family, double theta) {
  require_finite(theta);
  switch (family) {
    case Family::Gaussian: return theta;
    case Family::Bernoulli:
      if (theta >= 0.0) return 1.0 / (1.0 + std::exp(-theta));
      {
        const double e = std::exp(theta);
        return e / (1.0 + e);
      }
    case Family::Poisson: return std::exp(clip_poisson(theta));
  }
  return 0.0;
}

double b_second(Family family, double theta) {
  require_finite(theta);
  switch (family) {
    case Family::Gaussian: return 1.0;
    case Family::Bernoulli: {
      const double e = std::exp(-std::abs(theta));
      return e / ((1.0 + e) * (1.0 + e));
    }
    case Family::Poisson: return std::exp(clip_poisson(theta));
  }
  return 0.0;
}

double curvature_bound(Family family, double alpha_p) {
  switch (family) {
    case Family::Gaussian: return 1.0;
    case Family::Bernoulli: return 0.25;
    case Family::Poisson: return alpha_p;
  }
  return 1.0;
}

double kappa0(std::span<const Family> families, double alpha_p) {
  if (families.empty()) throw std::invalid_argument("kappa0 needs at least one family");
  if (!(alpha_p > 0.0)) throw std::invalid_argument("alpha_p must be positive");
  double k = 0.0;
  for (Family f : families) k = std::max(k, curvature_bound(f, alpha_p));
  return k;
}

Eigen::VectorXd unit_dispersions(std::size_t q) {
  return Eigen::VectorXd::Ones(static_cast<Eigen::Index>(q));
}

ObservedOutcomes::ObservedOutcomes(Eigen::MatrixXd values)
    : values_(std::move(values)),
      mask_(MaskArray::Constant(values_.rows(), values_.cols(), true)),
      weights_(Eigen::MatrixXd::Ones(values_.rows(), values_.cols())) {}

ObservedOutcomes::ObservedOutcomes(Eigen::MatrixXd values, MaskArray mask)
    : values_(std::move(values)), mask_(std::move(mask)) {
  if (values_.rows() != mask_.rows() || values_.cols() != mask_.cols()) {
    throw std::invalid_argument("response and mask shapes disagree");
  }
  values_ = mask_.select(values_, 0.0);
  weights_ = mask_.cast<double>().matrix();
}

Eigen::Index ObservedOutcomes::observed_count(Eigen::Index k) const {
  return mask_.col(k).count();
}

Eigen::Index ObservedOutcomes::observed_count() const { return mask_.count(); }

ObservedOutcomes ObservedOutcomes::restricted(const MaskArray& mask) const {
  return ObservedOutcomes(values_, mask && mask_);
}

void validate_outcomes(const ObservedOutcomes& y, std::span<const Family> families) {
  if (static_cast<Eigen::Index>(families.size()) != y.cols()) {
    throw DataError("family list has " + std::to_string(families.size()) +
                    " entries but the response has " + std::to_string(y.cols()) + " columns");
  }
  for (Eigen::Index k = 0; k < y.cols(); ++k) {
    if (y.observed_count(k) == 0) {
      throw DataError("response column " + std::to_string(k + 1) + " has no observed entries");
    }
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      if (!y.observed(i, k)) continue;
      const double v = y.values()(i, k);
      if (!std::isfinite(v)) throw DataError("non-finite response value", i, k);
      switch (families[k]) {
        case Family::Gaussian: break;
        case Family::Bernoulli:
          if (v != 0.0 && v != 1.0) throw DataError("Bernoulli response must be 0 or 1", i, k);
          break;
        case Family::Poisson:
          if (v < 0.0 || v != std::floor(v)) {
            throw DataError("Poisson response must be a nonnegative integer", i, k);
          }
          break;
      }
    }
  }
}

Eigen::MatrixXd mean_matrix(const Eigen::MatrixXd& theta, std::span<const Family> families) {
  if (!theta.allFinite()) throw std::domain_error("natural parameter is not finite");
  Eigen::MatrixXd mu(theta.rows(), theta.cols());
  for (Eigen::Index k = 0; k < theta.cols(); ++k) {
    const Family f = families[k];
    if (f == Family::Gaussian) {
      mu.col(k) = theta.col(k);
      continue;
    }
    mu.col(k) = b_prime_col(f, theta.col(k).array()).matrix();
  }
  return mu;
}

Eigen::MatrixXd masked_residual(const Eigen::MatrixXd& theta, std::span<const Family> families,
                                const ObservedOutcomes& y) {
  check_shapes(theta, families, y);
  if (!theta.allFinite()) throw std::domain_error("natural parameter is not finite");
  Eigen::MatrixXd r(theta.rows(), theta.cols());
  for (Eigen::Index k = 0; k < theta.cols(); ++k) {
    const auto t = theta.col(k).array();
    const auto v = y.values().col(k).array();
    const auto w = y.weights().col(k).array();
    if (families[k] == Family::Gaussian) {
      r.col(k) = (w * (v - t)).matrix();
    } else {
      r.col(k) = (w * (v - b_prime_col(families[k], t))).matrix();
    }
  }
  return r;
}

double neg_log_likelihood(const Eigen::MatrixXd& theta, std::span<const Family> families,
                          const Eigen::VectorXd& phi, const ObservedOutcomes& y) {
  check_shapes(theta, families, y);
  double total = 0.0;
  for (Eigen::Index k = 0; k < theta.cols(); ++k) {
    const Family f = families[k];
    const auto t = theta.col(k).array();
    const auto w = y.weights().col(k).array();
    double col = -(y.values().col(k).array() * t).sum();
    if (f == Family::Gaussian) {
      col += 0.5 * (w * t * t).sum();
    } else {
      col += (w * b_value_col(f, t)).sum();
    }
    total += col / phi(k);
  }
  if (!std::isfinite(total)) {
    throw std::domain_error("negative log-likelihood is not finite");
  }
  return total;
}

double full_neg_log_likelihood(const Eigen::MatrixXd& theta, std::span<const Family> families,
                               const Eigen::VectorXd& phi, const ObservedOutcomes& y) {
  check_shapes(theta, families, y);
  double total = 0.0;
  for (Eigen::Index k = 0; k < theta.cols(); ++k) {
    const Family f = families[k];
    const auto t = theta.col(k).array();
    const auto v = y.values().col(k).array();
    const auto w = y.weights().col(k).array();
    switch (f) {
      case Family::Gaussian:
        total += 0.5 * (w * (v - t).square()).sum() / phi(k) +
                 0.5 * static_cast<double>(y.observed_count(k)) *
                     std::log(2.0 * std::numbers::pi * phi(k));
        break;
      case Family::Bernoulli:
      case Family::Poisson: {
        double col = -(v * t).sum() + (w * b_value_col(f, t)).sum();
        if (f == Family::Poisson) {
          for (Eigen::Index i = 0; i < theta.rows(); ++i) {
            if (y.observed(i, k)) col += std::lgamma(v(i) + 1.0);
          }
        }
        total += col;
        break;
      }
    }
  }
  if (!std::isfinite(total)) {
    throw std::domain_error("negative log-likelihood is not finite");
  }
  return total;
}

LikelihoodEvaluation evaluate_likelihood(const Eigen::MatrixXd& theta,
                                         std::span<const Family> families,
                                         const Eigen::VectorXd& phi, const ObservedOutcomes& y) {
  check_shapes(theta, families, y);
  LikelihoodEvaluation out;
  out.residual.resize(theta.rows(), theta.cols());
  double total = 0.0;
  for (Eigen::Index k = 0; k < theta.cols(); ++k) {
    const Family f = families[k];
    const auto t = theta.col(k).array();
    const auto v = y.values().col(k).array();
    const auto w = y.weights().col(k).array();
    switch (f) {
      case Family::Gaussian: {
        out.residual.col(k) = (w * (v - t)).matrix();
        total += 0.5 * out.residual.col(k).squaredNorm() / phi(k) +
                 0.5 * static_cast<double>(y.observed_count(k)) *
                     std::log(2.0 * std::numbers::pi * phi(k));
        break;
      }
      case Family::Bernoulli: {
        const Eigen::ArrayXd e = (-t.abs()).exp();
        const Eigen::ArrayXd mu = (t >= 0.0).select(1.0 / (1.0 + e), e / (1.0 + e));
        out.residual.col(k) = (w * (v - mu)).matrix();
        total += -(v * t).sum() + (w * (t.max(0.0) + (1.0 + e).log())).sum();
        break;
      }
      case Family::Poisson: {
        const Eigen::ArrayXd mu = t.min(kPoissonThetaClip).exp();
        out.residual.col(k) = (w * (v - mu)).matrix();
        double col = -(v * t).sum() + (w * mu).sum();
        for (Eigen::Index i = 0; i < theta.rows(); ++i) {
          if (y.observed(i, k)) col += std::lgamma(v(i) + 1.0);
        }
        total += col;
        break;
      }
    }
  }
  if (!std::isfinite(total) || !theta.allFinite()) {
    throw std::domain_error("negative log-likelihood is not finite");
  }
  out.nll = total;
  return out;
}

}  // namespace gofar
