#include "gofar/gofar.hpp"

#include "gofar/error.hpp"
#include "gofar/parallel.hpp"

#include <chrono>
#include <stdexcept>
#include <string>

namespace gofar {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

ComponentDiagnostics diagnostics_for(int index, const TunedFit& tuned) {
  ComponentDiagnostics d;
  d.index = index;
  d.lambda = tuned.lambda;
  d.lambda_path = tuned.path;
  if (tuned.curve) {
    d.cv_mean = tuned.curve->mean_nll;
    d.cv_sd = tuned.curve->sd_nll;
    d.chosen_index = tuned.curve->chosen_index;
  }
  d.objective_trace = tuned.fit.objective_trace;
  d.iterations = tuned.fit.iterations;
  d.converged = tuned.fit.converged;
  d.backtracks = tuned.fit.backtracks;
  d.screened_null = tuned.fit.screened_null;
  return d;
}

/// One tuned unit-rank solve at the problem's current offset.
TunedFit extract_component(const GlmProblem& pb, const UnitRankComponent& initial,
                           const Eigen::MatrixXd& beta0, const Eigen::VectorXd& phi0,
                           const TuningConfig& tuner) {
  const NullFit null_fit = fit_null_model(pb);
  if (initial.is_null()) {
    TunedFit out;
    out.fit.component = UnitRankComponent::null(pb.design().p(), pb.design().q());
    out.fit.beta = null_fit.beta;
    out.fit.phi = null_fit.phi;
    out.fit.converged = true;
    out.fit.screened_null = true;
    return out;
  }
  const PenaltyWeights weights = adaptive_weights(initial, tuner.gamma);
  return tune_and_fit(pb, GcureState{initial, beta0, phi0}, weights, null_fit, tuner);
}

template <class Fn>
auto annotated(const std::string& where, Fn&& fn) {
  try {
    return fn();
  } catch (const SolverError& e) {
    throw SolverError(where + " " + e.step(), std::string(e.what()).substr(e.step().size() + 2));
  }
}

}  // namespace

FitResult fit_sequential(const GlmProblem& problem, int r_max, const TuningConfig& tuner,
                         const GinitConfig& ginit) {
  if (r_max < 1) throw std::invalid_argument("r_max must be >= 1");
  tuner.validate();
  const auto t0 = Clock::now();
  const auto& design = problem.design();

  FitDiagnostics diag;
  diag.method = "gofar-s";
  std::vector<UnitRankComponent> components;
  Eigen::MatrixXd offset = design.O;
  Eigen::MatrixXd beta;
  Eigen::VectorXd phi;

  for (int k = 1; k <= r_max; ++k) {
    const DesignMatrices dk = design.with_offset(offset);
    const GlmProblem pb = problem.with_design(dk);
    TuningConfig tk = tuner;
    tk.seed = derive_seed(tuner.seed, static_cast<std::uint64_t>(k));
    const TunedFit tuned = annotated("step " + std::to_string(k), [&] {
      const GinitResult gi = run_ginit(pb, 1, ginit);
      return extract_component(pb, gi.components.front(), gi.beta_tilde, gi.phi_tilde, tk);
    });
    diag.steps.push_back(diagnostics_for(k, tuned));
    beta = tuned.fit.beta;
    phi = tuned.fit.phi;
    if (tuned.fit.component.is_null()) break;
    components.push_back(tuned.fit.component);
    offset.noalias() += design.X * tuned.fit.component.matrix();
    if (k == r_max) break;
  }
  diag.time_s = seconds_since(t0);
  return assemble_fit(std::move(components), std::move(beta), std::move(phi), design.X,
                      std::move(diag));
}

FitResult fit_parallel(const GlmProblem& problem, int r, const TuningConfig& tuner,
                       const GinitConfig& ginit) {
  if (r < 1) throw std::invalid_argument("rank must be >= 1");
  tuner.validate();
  const auto t0 = Clock::now();
  const auto& design = problem.design();

  const GinitResult gi = annotated("G-INIT", [&] { return run_ginit(problem, r, ginit); });
  std::vector<Eigen::MatrixXd> Xc(static_cast<std::size_t>(r));
  for (int k = 0; k < r; ++k) Xc[k] = design.X * gi.components[k].matrix();

  std::vector<TunedFit> fits(static_cast<std::size_t>(r));
  TuningConfig inner = tuner;
  inner.threads = r > 1 ? 1 : tuner.threads;
  parallel_for(static_cast<std::size_t>(r), tuner.threads, [&](std::size_t k) {
    Eigen::MatrixXd offset = design.O;
    for (std::size_t i = 0; i < Xc.size(); ++i) {
      if (i != k) offset += Xc[i];
    }
    const DesignMatrices dk = design.with_offset(std::move(offset));
    const GlmProblem pb = problem.with_design(dk);
    TuningConfig tk = inner;
    tk.seed = derive_seed(tuner.seed, static_cast<std::uint64_t>(k + 1));
    fits[k] = annotated("component " + std::to_string(k + 1), [&] {
      return extract_component(pb, gi.components[k], gi.beta_tilde, gi.phi_tilde, tk);
    });
  });

  FitDiagnostics diag;
  diag.method = "gofar-p";
  std::vector<UnitRankComponent> components;
  for (int k = 0; k < r; ++k) {
    diag.steps.push_back(diagnostics_for(k + 1, fits[k]));
    if (!fits[k].fit.component.is_null()) components.push_back(fits[k].fit.component);
  }
  diag.time_s = seconds_since(t0);
  return assemble_fit(std::move(components), fits.back().fit.beta, fits.back().fit.phi, design.X,
                      std::move(diag));
}

CvCurve cv_for_step(const GlmProblem& problem, int component, const TuningConfig& tuner,
                    const GinitConfig& ginit) {
  if (component < 1) throw std::invalid_argument("component must be >= 1");
  tuner.validate();
  const auto& design = problem.design();
  Eigen::MatrixXd offset = design.O;
  if (component > 1) {
    TuningConfig earlier = tuner;
    earlier.fixed_lambda.reset();
    const FitResult prev = fit_sequential(problem, component - 1, earlier, ginit);
    if (prev.rank < component - 1) return {};
    offset.noalias() += design.X * prev.C;
  }
  const DesignMatrices dk = design.with_offset(std::move(offset));
  const GlmProblem pb = problem.with_design(dk);
  TuningConfig tk = tuner;
  tk.seed = derive_seed(tuner.seed, static_cast<std::uint64_t>(component));
  return annotated("step " + std::to_string(component), [&] {
    const GinitResult gi = run_ginit(pb, 1, ginit);
    if (gi.components.front().is_null()) return CvCurve{};
    const NullFit null_fit = fit_null_model(pb);
    const PenaltyWeights weights = adaptive_weights(gi.components.front(), tk.gamma);
    const GcureState init{gi.components.front(), gi.beta_tilde, gi.phi_tilde};
    const auto path = lambda_path(pb, null_fit, weights, tk);
    return kfold_cv(pb, init, weights, path, tk);
  });
}

FitResult fit_ginit(const GlmProblem& problem, int r, const GinitConfig& ginit) {
  const auto t0 = Clock::now();
  const GinitResult gi = annotated("G-INIT", [&] { return run_ginit(problem, r, ginit); });
  FitDiagnostics diag;
  diag.method = "ginit";
  ComponentDiagnostics d;
  d.index = 1;
  d.objective_trace = gi.nll_trace;
  d.iterations = gi.iterations;
  d.converged = gi.converged;
  d.backtracks = gi.backtracks;
  diag.steps.push_back(std::move(d));
  std::vector<UnitRankComponent> components;
  for (const auto& c : gi.components) {
    if (!c.is_null()) components.push_back(c);
  }
  diag.time_s = seconds_since(t0);
  return assemble_fit(std::move(components), gi.beta_tilde, gi.phi_tilde, problem.design().X,
                      std::move(diag));
}

}  // namespace gofar
