#include "mixcox/em_estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mixcox/error.hpp"
#include "mixcox/kernels.hpp"

namespace mixcox::em {
namespace {

double safe_log(double p) {
  return p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
}

// Per-subject log mixing weights (log P(z=1, .), log P(z=0, .)) for each
// observed test result, in the conditional (pi known) or marginal form.
struct MixingLogWeights {
  std::array<double, 3> log_pos{};
  std::array<double, 3> log_neg{};
};

MixingLogWeights mixing_log_weights(const DiagnosticModel& diag, double pi, bool marginal) {
  const double sens = diag.sensitivity();
  const double spec = diag.specificity();
  MixingLogWeights m;
  const auto pos = static_cast<std::size_t>(TestResult::positive);
  const auto neg = static_cast<std::size_t>(TestResult::negative);
  const auto mis = static_cast<std::size_t>(TestResult::missing);
  const double a_pos = pi * sens;                 // z=1, v=1
  const double b_pos = (1.0 - pi) * (1.0 - spec); // z=0, v=1
  const double a_neg = pi * (1.0 - sens);         // z=1, v=0
  const double b_neg = (1.0 - pi) * spec;         // z=0, v=0
  if (marginal) {
    m.log_pos[pos] = safe_log(a_pos);
    m.log_neg[pos] = safe_log(b_pos);
    m.log_pos[neg] = safe_log(a_neg);
    m.log_neg[neg] = safe_log(b_neg);
  } else {
    m.log_pos[pos] = safe_log(a_pos / (a_pos + b_pos));
    m.log_neg[pos] = safe_log(b_pos / (a_pos + b_pos));
    m.log_pos[neg] = safe_log(a_neg / (a_neg + b_neg));
    m.log_neg[neg] = safe_log(b_neg / (a_neg + b_neg));
  }
  m.log_pos[mis] = safe_log(pi);
  m.log_neg[mis] = safe_log(1.0 - pi);
  return m;
}

// Column-major view of a dataset for the vector kernels.
class Workspace {
 public:
  explicit Workspace(const Dataset& data) : data_(data) {
    const std::size_t n = data.size();
    delta_.resize(n);
    x_.resize(n);
    logp1_.resize(n);
    logp0_.resize(n);
    cumhaz_.resize(n);
    eta1_.resize(n);
    eta0_.resize(n);
    post_.resize(n);
    ll_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      delta_[i] = data[i].event ? 1.0 : 0.0;
      x_[i] = data[i].treatment ? 1.0 : 0.0;
    }
  }

  void set_mixing(const DiagnosticModel& diag, double pi, bool marginal) {
    const MixingLogWeights m = mixing_log_weights(diag, pi, marginal);
    for (std::size_t i = 0; i < data_.size(); ++i) {
      const auto s = static_cast<std::size_t>(data_[i].test);
      logp1_[i] = m.log_pos[s];
      logp0_[i] = m.log_neg[s];
    }
  }

  // Fills the posterior weights and returns the observed log-likelihood.
  double evaluate(const EffectParams& theta, const BaselineHazard& h0) {
    double log_hazard_sum = 0.0;
    for (std::size_t i = 0; i < data_.size(); ++i) {
      const Subject& s = data_[i];
      cumhaz_[i] = h0.cumulative_step(s.time);
      eta0_[i] = theta.beta1 * x_[i];
      eta1_[i] = (theta.beta1 + theta.gamma) * x_[i] + theta.beta2;
      if (s.event) {
        const double h = h0.hazard(s.time);
        if (!(h > 0.0)) throw InvalidStateError("event at a time where the baseline hazard is zero");
        log_hazard_sum += std::log(h);
      }
    }
    kernels::mixture_posterior(logp1_, logp0_, delta_, cumhaz_, eta1_, eta0_, post_, ll_);
    return kernels::sum(ll_) + log_hazard_sum;
  }

  const std::vector<double>& posterior() const { return post_; }

 private:
  const Dataset& data_;
  std::vector<double> delta_, x_;
  std::vector<double> logp1_, logp0_, cumhaz_, eta1_, eta0_, post_, ll_;
};

cox::FreeMask free_mask(const FixedEffects& fixed) {
  return {!fixed[0].has_value(), !fixed[1].has_value(), !fixed[2].has_value()};
}

EffectParams apply_fixed(EffectParams theta, const FixedEffects& fixed) {
  for (int j = 0; j < 3; ++j) {
    if (fixed[j]) theta[static_cast<Coef>(j)] = *fixed[j];
  }
  return theta;
}

// Row 2i is subject i as truly positive, row 2i+1 as truly negative.
std::vector<cox::ExpandedRow> expand_rows(const Dataset& data, const FixedEffects& fixed) {
  const double fb1 = fixed[0].value_or(0.0);
  const double fb2 = fixed[1].value_or(0.0);
  const double fg = fixed[2].value_or(0.0);
  std::vector<cox::ExpandedRow> rows;
  rows.reserve(2 * data.size());
  for (const Subject& s : data.subjects()) {
    const double x = s.treatment ? 1.0 : 0.0;
    rows.push_back({s.time, s.event, 0.5, {x, 1.0, x}, fb1 * x + fb2 + fg * x});
    rows.push_back({s.time, s.event, 0.5, {x, 0.0, 0.0}, fb1 * x});
  }
  return rows;
}

void load_weights(cox::CoxProblem& problem, std::span<const double> w, std::vector<double>& buf) {
  buf.resize(2 * w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    buf[2 * i] = w[i];
    buf[2 * i + 1] = 1.0 - w[i];
  }
  problem.set_weights(buf);
}

cox::Coefficients to_coefficients(const EffectParams& t) { return {t.beta1, t.beta2, t.gamma}; }

EffectParams from_coefficients(const cox::Coefficients& b, const FixedEffects& fixed) {
  return apply_fixed({b[0], b[1], b[2]}, fixed);
}

// Coefficients for the Cox engine: fixed ones are zero (carried by offsets).
cox::Coefficients free_part(const EffectParams& theta, const FixedEffects& fixed) {
  cox::Coefficients b = to_coefficients(theta);
  for (int j = 0; j < 3; ++j) {
    if (fixed[j]) b[j] = 0.0;
  }
  return b;
}

}  // namespace

std::vector<double> e_step(const Dataset& data, const EffectParams& theta,
                           const BaselineHazard& h0, const DiagnosticModel& diag) {
  // No h0(t) lookup here, so events beyond the baseline's support are fine.
  const std::size_t n = data.size();
  std::vector<double> logp1(n), logp0(n), delta(n), cumhaz(n), eta1(n), eta0(n), post(n), ll(n);
  const MixingLogWeights m = mixing_log_weights(diag, diag.prevalence(), false);
  for (std::size_t i = 0; i < n; ++i) {
    const Subject& s = data[i];
    const auto st = static_cast<std::size_t>(s.test);
    const double x = s.treatment ? 1.0 : 0.0;
    logp1[i] = m.log_pos[st];
    logp0[i] = m.log_neg[st];
    delta[i] = s.event ? 1.0 : 0.0;
    cumhaz[i] = h0.cumulative_step(s.time);
    eta0[i] = theta.beta1 * x;
    eta1[i] = (theta.beta1 + theta.gamma) * x + theta.beta2;
  }
  kernels::mixture_posterior(logp1, logp0, delta, cumhaz, eta1, eta0, post, ll);
  return post;
}

std::pair<EffectParams, BaselineHazard> m_step(const Dataset& data, std::span<const double> weights,
                                               const FixedEffects& fixed, const EffectParams& init,
                                               const cox::NewtonOptions& newton) {
  if (weights.size() != data.size()) throw ValidationError("m_step: one weight per subject required");
  cox::CoxProblem problem(expand_rows(data, fixed));
  std::vector<double> buf;
  load_weights(problem, weights, buf);
  const cox::CoxFit fitted = problem.fit(free_part(init, fixed), free_mask(fixed), newton);
  return {from_coefficients(fitted.beta, fixed), problem.breslow(fitted.beta)};
}

double update_prevalence(std::span<const double> weights, double floor) {
  if (weights.empty()) throw ValidationError("update_prevalence: no weights");
  double total = 0.0;
  for (double w : weights) total += w;
  return std::clamp(total / static_cast<double>(weights.size()), floor, 1.0 - floor);
}

double observed_log_likelihood(const Dataset& data, const EffectParams& theta,
                               const BaselineHazard& h0, const DiagnosticModel& diag) {
  Workspace ws(data);
  ws.set_mixing(diag, diag.prevalence(), !diag.prevalence_known());
  return ws.evaluate(theta, h0);
}

double initial_prevalence(const Dataset& data, const DiagnosticModel& diag, double floor) {
  std::size_t pos = 0;
  std::size_t observed = 0;
  for (const Subject& s : data.subjects()) {
    if (s.test == TestResult::missing) continue;
    ++observed;
    if (s.test == TestResult::positive) ++pos;
  }
  if (observed == 0) return 0.5;
  const double frac = static_cast<double>(pos) / static_cast<double>(observed);
  const double pi =
      (frac + diag.specificity() - 1.0) / (diag.sensitivity() + diag.specificity() - 1.0);
  return std::clamp(pi, floor, 1.0 - floor);
}

FitResult fit(const Dataset& data, const DiagnosticModel& diag, const EmConfig& config,
              const FitOptions& options) {
  if (!(config.tol_loglik > 0.0) || config.max_iter < 1) {
    throw ValidationError("EM config: tolerance must be positive and max_iter >= 1");
  }
  const FixedEffects& fixed = options.fixed;
  const bool estimate_pi = !diag.prevalence_known() && !options.hold_prevalence;
  const bool marginal = !diag.prevalence_known();

  double pi = diag.prevalence();
  if (!diag.prevalence_known()) {
    if (options.init_prevalence) {
      pi = *options.init_prevalence;
    } else if (!options.hold_prevalence) {
      pi = initial_prevalence(data, diag, config.prevalence_floor);
    }
    if (!(pi > 0.0 && pi < 1.0)) throw ValidationError("prevalence must lie in (0, 1)");
  }

  EffectParams theta = apply_fixed(options.init_theta.value_or(EffectParams{}), fixed);
  cox::CoxProblem problem(expand_rows(data, fixed));
  std::vector<double> row_weights;

  BaselineHazard h0;
  if (options.init_baseline) {
    h0 = *options.init_baseline;
  } else {
    const DiagnosticModel at_pi = diag.with_prevalence(pi);
    std::vector<double> w0(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) w0[i] = positive_mixing_weight(at_pi, data[i].test);
    load_weights(problem, w0, row_weights);
    h0 = problem.breslow(free_part(theta, fixed));
  }

  Workspace ws(data);
  FitResult result;
  double prev = 0.0;
  for (int it = 0;; ++it) {
    ws.set_mixing(diag, pi, marginal);
    const double ll = ws.evaluate(theta, h0);
    if (!std::isfinite(ll)) throw DegenerateDataError("observed log-likelihood is not finite");
    if (config.record_trace) result.loglik_trace.push_back(ll);
    result.iterations = it;
    result.obs_loglik = ll;
    if (it > 0) {
      result.last_change = ll - prev;
      if (std::fabs(ll - prev) < config.tol_loglik) {
        result.converged = true;
        break;
      }
    }
    if (it == config.max_iter) break;
    prev = ll;

    const std::vector<double>& w = ws.posterior();
    if (estimate_pi) pi = update_prevalence(w, config.prevalence_floor);
    load_weights(problem, w, row_weights);
    const cox::CoxFit fitted =
        problem.fit(free_part(theta, fixed), free_mask(fixed), config.newton);
    theta = from_coefficients(fitted.beta, fixed);
    h0 = problem.breslow(fitted.beta);
  }

  result.theta_hat = theta;
  result.baseline = std::move(h0);
  result.pi_hat = pi;
  result.weights = ws.posterior();
  return result;
}

}  // namespace mixcox::em
