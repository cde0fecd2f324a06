#pragma once

#include "gofar/ginit.hpp"
#include "gofar/model.hpp"
#include "gofar/tuning.hpp"

namespace gofar {

/// GOFAR(S): sequential extraction with offset deflation. Stops early when a
/// step's tuned component is null.
FitResult fit_sequential(const GlmProblem& problem, int r_max, const TuningConfig& tuner,
                         const GinitConfig& ginit = {});

/// GOFAR(P): G-INIT at rank r, then r tuned solves, each against the offset
/// carrying every other initial component. Components run on up to
/// tuner.threads workers.
FitResult fit_parallel(const GlmProblem& problem, int r, const TuningConfig& tuner,
                       const GinitConfig& ginit = {});

/// CV curve of GOFAR(S) extraction step `component` (1-based): steps before
/// it are fitted and deflated first. Returns an empty curve when an earlier
/// step is already null.
CvCurve cv_for_step(const GlmProblem& problem, int component, const TuningConfig& tuner,
                    const GinitConfig& ginit = {});

/// Unpenalized rank-r G-INIT fit packaged as a FitResult.
FitResult fit_ginit(const GlmProblem& problem, int r, const GinitConfig& ginit = {});

}  // namespace gofar
