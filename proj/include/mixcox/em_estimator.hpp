#pragma once

#include <array>
#include <optional>
#include <utility>
#include <vector>

#include "mixcox/cox_engine.hpp"
#include "mixcox/domain_model.hpp"

namespace mixcox::em {

struct EmConfig {
  double tol_loglik = 1e-8;
  int max_iter = 2000;
  double prevalence_floor = 0.01;
  // Keep the observed log-likelihood of every iterate in FitResult::loglik_trace.
  bool record_trace = false;
  cox::NewtonOptions newton{};
};

// Coefficients held at a fixed value; they enter the weighted Cox model as
// offsets and are excluded from the Newton update.
using FixedEffects = std::array<std::optional<double>, 3>;

struct FitOptions {
  FixedEffects fixed{};
  std::optional<EffectParams> init_theta;
  std::optional<BaselineHazard> init_baseline;
  std::optional<double> init_prevalence;
  // With an unknown prevalence, keep pi at its initial value while still
  // scoring the marginal likelihood (used to profile over pi).
  bool hold_prevalence = false;
};

struct FitResult {
  EffectParams theta_hat;
  BaselineHazard baseline;
  double pi_hat = 0.0;
  std::vector<double> weights;  // posterior P(true positive), dataset order
  double obs_loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  double last_change = 0.0;
  std::vector<double> loglik_trace;
};

// Posterior probabilities of true positive status. The h0(t)^delta factor
// is common to both components and is left out of the ratio.
std::vector<double> e_step(const Dataset& data, const EffectParams& theta,
                           const BaselineHazard& h0, const DiagnosticModel& diag);

// Weighted Cox fit on the two-rows-per-subject expansion, then Breslow.
// Fixed coefficients are read from `fixed`; free ones start from `init`.
std::pair<EffectParams, BaselineHazard> m_step(const Dataset& data, std::span<const double> weights,
                                               const FixedEffects& fixed = {},
                                               const EffectParams& init = {},
                                               const cox::NewtonOptions& newton = {});

double update_prevalence(std::span<const double> weights, double floor = 0.01);

// Conditional likelihood given the observed tests when the prevalence is
// known; the marginal likelihood including P(test | pi) when it is not.
// Subjects with a missing test contribute pi*L+ + (1-pi)*L- in both cases.
double observed_log_likelihood(const Dataset& data, const EffectParams& theta,
                               const BaselineHazard& h0, const DiagnosticModel& diag);

// Starting prevalence: moment inversion of the observed positive fraction.
double initial_prevalence(const Dataset& data, const DiagnosticModel& diag, double floor = 0.01);

FitResult fit(const Dataset& data, const DiagnosticModel& diag, const EmConfig& config = {},
              const FitOptions& options = {});

}  // namespace mixcox::em
