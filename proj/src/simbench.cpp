#include "gofar/simbench.hpp"

#include "gofar/linalg.hpp"
#include "gofar/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace gofar {

namespace {

enum SeedTag : std::uint64_t { kCoefTag = 1, kDesignTag = 2, kResponseTag = 3, kMaskTag = 4 };

constexpr int kMaxDesignDraws = 10;
constexpr int kMaxMaskDraws = 100;

double pm_one(std::mt19937_64& rng) {
  return std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0;
}

/// Uniform on [-1, -0.3] U [0.3, 1].
double split_uniform(std::mt19937_64& rng) {
  const double mag = std::uniform_real_distribution<double>(0.3, 1.0)(rng);
  return pm_one(rng) * mag;
}

}  // namespace

bool SimSpec::mixed() const {
  return (q_gaussian > 0) + (q_bernoulli > 0) + (q_poisson > 0) > 1;
}

double SimSpec::effective_scale() const {
  if (scale > 0.0) return scale;
  return q_poisson > 0 ? 0.4 : 1.0;
}

FamilyList SimSpec::families() const {
  FamilyList f;
  f.insert(f.end(), static_cast<std::size_t>(q_gaussian), Family::Gaussian);
  f.insert(f.end(), static_cast<std::size_t>(q_bernoulli), Family::Bernoulli);
  f.insert(f.end(), static_cast<std::size_t>(q_poisson), Family::Poisson);
  return f;
}

void SimSpec::validate() const {
  if (n < 2 || p < 20) throw std::invalid_argument("simulation needs n >= 2 and p >= 20");
  if (q_gaussian < 0 || q_bernoulli < 0 || q_poisson < 0 || q() < 1) {
    throw std::invalid_argument("simulation needs at least one response column");
  }
  if (rank < 1 || rank > 3) throw std::invalid_argument("simulation rank must be 1, 2 or 3");
  if (mixed()) {
    if (q() % 2 != 0 || q() / 2 < 10) {
      throw std::invalid_argument("mixed-type layout needs an even q with q/2 >= 10");
    }
  } else if (q() < 15) {
    throw std::invalid_argument("single-type layout needs q >= 15");
  }
  if (!(snr > 0.0)) throw std::invalid_argument("snr must be positive");
  if (!(missing_fraction >= 0.0 && missing_fraction < 1.0)) {
    throw std::invalid_argument("missing fraction must lie in [0, 1)");
  }
}

SimSpec SimSpec::setup(int which, const std::string& layout) {
  SimSpec s;
  if (which == 1) {
    s.p = 100;
  } else if (which == 2) {
    s.p = 300;
  } else {
    throw std::invalid_argument("setup must be I or II");
  }
  s.q_gaussian = 0;
  if (layout == "gaussian" || layout == "g") {
    s.q_gaussian = 30;
  } else if (layout == "bernoulli" || layout == "b") {
    s.q_bernoulli = 30;
  } else if (layout == "poisson" || layout == "p") {
    s.q_poisson = 30;
  } else if (layout == "gb") {
    s.q_gaussian = s.q_bernoulli = 15;
  } else if (layout == "gp") {
    s.q_gaussian = s.q_poisson = 15;
  } else {
    throw std::invalid_argument("unknown family layout '" + layout + "'");
  }
  return s;
}

std::vector<UnitRankComponent> SimTruth::components() const {
  std::vector<UnitRankComponent> out;
  const double sqrt_n = std::sqrt(static_cast<double>(X.rows()));
  for (Eigen::Index k = 0; k < D.size(); ++k) {
    UnitRankComponent c;
    const double xu = (X * U.col(k)).norm();
    c.u = U.col(k) * sqrt_n / xu;
    c.v = V.col(k);
    c.d = D(k) * xu / sqrt_n;
    out.push_back(std::move(c));
  }
  return out;
}

SimCoefficients gen_coef(const SimSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(derive_seed(spec.seed, kCoefTag));
  const int p = spec.p, q = spec.q(), r = spec.rank;
  SimCoefficients out;
  out.U = Eigen::MatrixXd::Zero(p, r);
  out.V = Eigen::MatrixXd::Zero(q, r);

  // u supports {1..8}, {6..14}, {12..20} (1-based).
  const int u_start[3] = {0, 5, 11};
  const int u_len[3] = {8, 9, 9};
  for (int k = 0; k < r; ++k) {
    for (int i = 0; i < u_len[k]; ++i) out.U(u_start[k] + i, k) = pm_one(rng);
  }

  if (!spec.mixed()) {
    for (int k = 0; k < r; ++k) {
      for (int j = 0; j < 5; ++j) out.V(5 * k + j, k) = split_uniform(rng);
    }
  } else {
    // Each half of v repeats vbar; vbar_2 and vbar_3 borrow sign-flipped
    // entries of the earlier vectors so the components overlap.
    const int h = q / 2;
    Eigen::MatrixXd vbar = Eigen::MatrixXd::Zero(h, 3);
    for (int j = 0; j < 5; ++j) vbar(j, 0) = pm_one(rng);
    vbar(3, 1) = vbar(3, 0);
    vbar(4, 1) = -vbar(4, 0);
    for (int j = 5; j < 8; ++j) vbar(j, 1) = pm_one(rng);
    vbar(0, 2) = vbar(0, 0);
    vbar(1, 2) = -vbar(1, 0);
    vbar(6, 2) = vbar(6, 1);
    vbar(7, 2) = -vbar(7, 1);
    for (int j = 8; j < 10; ++j) vbar(j, 2) = pm_one(rng);
    for (int k = 0; k < r; ++k) {
      out.V.col(k).head(h) = vbar.col(k);
      out.V.col(k).tail(h) = vbar.col(k);
    }
  }
  for (int k = 0; k < r; ++k) {
    out.U.col(k).normalize();
    out.V.col(k).normalize();
  }
  out.D.resize(r);
  for (int k = 0; k < r; ++k) out.D(k) = spec.effective_scale() * spec.d[k];
  out.beta = Eigen::MatrixXd::Constant(1, q, 0.5);
  return out;
}

Eigen::MatrixXd gen_design(int n, int p, const Eigen::MatrixXd& U, std::uint64_t seed) {
  if (U.rows() != p) throw std::invalid_argument("gen_design: U has the wrong number of rows");
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  const Eigen::MatrixXd UtU = U.transpose() * U;
  Eigen::LDLT<Eigen::MatrixXd> utu(UtU);
  for (int attempt = 0; attempt < kMaxDesignDraws; ++attempt) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd X0(n, p);
    for (Eigen::Index j = 0; j < p; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) X0(i, j) = normal(rng);
    }
    const Eigen::MatrixXd A = X0 * U;
    Eigen::MatrixXd M;
    try {
      M = sqrt_n * inverse_sqrt_spd(A.transpose() * A);
    } catch (const std::domain_error&) {
      continue;
    }
    const Eigen::Index r = U.cols();
    const Eigen::MatrixXd shift = A * (M - Eigen::MatrixXd::Identity(r, r));
    return X0 + shift * utu.solve(U.transpose());
  }
  throw std::runtime_error("gen_design: X0 U stayed singular after repeated draws");
}

double noise_sd(const SimCoefficients& coef, const Eigen::MatrixXd& X, int q_gaussian, double snr) {
  if (q_gaussian <= 0) return 0.0;
  const Eigen::Index r = coef.D.size() - 1;
  const double signal = coef.D(r) * (X * coef.U.col(r)).norm() * coef.V.col(r).norm();
  return signal / (snr * std::sqrt(static_cast<double>(X.rows()) * q_gaussian));
}

ObservedOutcomes gen_responses(const Eigen::MatrixXd& theta, std::span<const Family> families,
                               double sigma, std::uint64_t seed) {
  if (static_cast<Eigen::Index>(families.size()) != theta.cols()) {
    throw std::invalid_argument("gen_responses: family count does not match columns");
  }
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd Y(theta.rows(), theta.cols());
  for (Eigen::Index k = 0; k < theta.cols(); ++k) {
    for (Eigen::Index i = 0; i < theta.rows(); ++i) {
      const double t = theta(i, k);
      switch (families[k]) {
        case Family::Gaussian:
          Y(i, k) = sigma > 0.0 ? t + std::normal_distribution<double>(0.0, sigma)(rng) : t;
          break;
        case Family::Bernoulli:
          Y(i, k) = std::bernoulli_distribution(b_prime(Family::Bernoulli, t))(rng) ? 1.0 : 0.0;
          break;
        case Family::Poisson:
          Y(i, k) = static_cast<double>(
              std::poisson_distribution<long long>(b_prime(Family::Poisson, t))(rng));
          break;
      }
    }
  }
  return ObservedOutcomes(std::move(Y));
}

ObservedOutcomes mask_missing(const ObservedOutcomes& y, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    throw std::invalid_argument("missing fraction must lie in [0, 1)");
  }
  const Eigen::Index n = y.rows(), q = y.cols();
  const auto drop = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n * q)));
  if (drop == 0) return y;
  std::vector<Eigen::Index> cells;
  for (Eigen::Index c = 0; c < n * q; ++c) {
    if (y.mask()(c % n, c / n)) cells.push_back(c);
  }
  if (drop > cells.size()) throw std::invalid_argument("cannot mask more cells than are observed");
  std::mt19937_64 rng(seed);
  for (int attempt = 0; attempt < kMaxMaskDraws; ++attempt) {
    std::shuffle(cells.begin(), cells.end(), rng);
    MaskArray mask = y.mask();
    for (std::size_t c = 0; c < drop; ++c) mask(cells[c] % n, cells[c] / n) = false;
    if ((mask.colwise().count() > 0).all()) return y.restricted(mask);
  }
  throw std::runtime_error("mask_missing: every draw emptied a response column");
}

SimTruth simulate(const SimSpec& spec) {
  spec.validate();
  SimTruth t;
  t.spec = spec;
  t.families = spec.families();
  const SimCoefficients coef = gen_coef(spec);
  t.U = coef.U;
  t.V = coef.V;
  t.D = coef.D;
  t.beta = coef.beta;
  t.C = coef.U * coef.D.asDiagonal() * coef.V.transpose();
  t.X = gen_design(spec.n, spec.p, coef.U, derive_seed(spec.seed, kDesignTag));
  t.Z = Eigen::MatrixXd::Ones(spec.n, 1);
  t.Theta = t.Z * t.beta + t.X * t.C;
  t.sigma = noise_sd(coef, t.X, spec.q_gaussian, spec.snr);
  const ObservedOutcomes full =
      gen_responses(t.Theta, t.families, t.sigma, derive_seed(spec.seed, kResponseTag));
  t.Y = mask_missing(full, spec.missing_fraction, derive_seed(spec.seed, kMaskTag));
  return t;
}

Metrics metrics(const FitResult& fit, const SimTruth& truth) {
  const Eigen::Index n = truth.X.rows(), p = truth.C.rows(), q = truth.C.cols();
  if (fit.C.rows() != p || fit.C.cols() != q || fit.beta.cols() != q) {
    throw std::invalid_argument("fit and truth dimensions disagree");
  }
  Metrics m;
  m.ErC = (fit.C - truth.C).norm() / static_cast<double>(p * q);
  Eigen::MatrixXd theta_hat = truth.X * fit.C;
  if (fit.beta.rows() == truth.Z.cols()) theta_hat += truth.Z * fit.beta;
  m.ErTheta = (theta_hat - truth.Theta).norm() / static_cast<double>(n * q);

  long fp = 0, tn = 0, fn = 0, tp = 0;
  auto tally = [&](const Eigen::VectorXd& est, const Eigen::VectorXd& tru) {
    for (Eigen::Index i = 0; i < tru.size(); ++i) {
      const bool e = est.size() > 0 && est(i) != 0.0;
      const bool t = tru(i) != 0.0;
      if (t) {
        (e ? tp : fn)++;
      } else {
        (e ? fp : tn)++;
      }
    }
  };
  for (Eigen::Index k = 0; k < truth.U.cols(); ++k) {
    const bool have = static_cast<std::size_t>(k) < fit.components.size() &&
                      !fit.components[k].is_null();
    const Eigen::VectorXd none;
    tally(have ? fit.components[k].u : none, truth.U.col(k));
    tally(have ? fit.components[k].v : none, truth.V.col(k));
  }
  m.FPR = fp + tn > 0 ? 100.0 * static_cast<double>(fp) / static_cast<double>(fp + tn) : 0.0;
  m.FNR = fn + tp > 0 ? 100.0 * static_cast<double>(fn) / static_cast<double>(fn + tp) : 0.0;

  double total = 0.0, extra = 0.0;
  int rank = 0;
  for (const auto& c : fit.components) {
    if (c.is_null()) continue;
    ++rank;
    total += c.d * c.d;
    if (rank > truth.U.cols()) extra += c.d * c.d;
  }
  m.Rpct = total > 0.0 ? 100.0 * extra / total : 0.0;
  m.rank = rank;
  m.time_s = fit.diagnostics.time_s;
  return m;
}

MetricsSummary aggregate(std::span<const Metrics> rows) {
  MetricsSummary s;
  s.count = rows.size();
  if (rows.empty()) return s;
  using Field = double Metrics::*;
  const Field fields[] = {&Metrics::ErC, &Metrics::ErTheta, &Metrics::FPR, &Metrics::FNR,
                          &Metrics::Rpct, &Metrics::time_s};
  const double cnt = static_cast<double>(rows.size());
  for (Field f : fields) {
    double sum = 0.0;
    for (const auto& r : rows) sum += r.*f;
    const double mean = sum / cnt;
    double ss = 0.0;
    for (const auto& r : rows) ss += (r.*f - mean) * (r.*f - mean);
    s.mean.*f = mean;
    s.sd.*f = rows.size() > 1 ? std::sqrt(ss / (cnt - 1.0)) : 0.0;
  }
  double sum = 0.0;
  for (const auto& r : rows) sum += r.rank;
  const double mean = sum / cnt;
  double ss = 0.0;
  for (const auto& r : rows) ss += (r.rank - mean) * (r.rank - mean);
  s.rank_mean = mean;
  s.rank_sd = rows.size() > 1 ? std::sqrt(ss / (cnt - 1.0)) : 0.0;
  s.mean.rank = static_cast<int>(std::lround(mean));
  s.sd.rank = static_cast<int>(std::lround(s.rank_sd));
  return s;
}

}  // namespace gofar
