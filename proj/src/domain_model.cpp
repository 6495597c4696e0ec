#include "mixcox/domain_model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mixcox/error.hpp"

namespace mixcox {

Dataset::Dataset(std::vector<Subject> subjects) : subjects_(std::move(subjects)) {
  bool any_event = false;
  bool any_treated = false;
  bool any_control = false;
  for (std::size_t i = 0; i < subjects_.size(); ++i) {
    const Subject& s = subjects_[i];
    if (!(s.time > 0.0) || !std::isfinite(s.time)) {
      throw ValidationError("subject " + std::to_string(i + 1) +
                            ": follow-up time must be positive and finite");
    }
    any_event |= s.event;
    any_treated |= s.treatment;
    any_control |= !s.treatment;
  }
  if (!any_event) throw ValidationError("dataset contains no observed events");
  if (!any_treated || !any_control) {
    throw ValidationError("dataset needs at least one subject in each treatment arm");
  }
}

DiagnosticModel::DiagnosticModel(double sensitivity, double specificity, double prevalence,
                                 bool prevalence_known)
    : sensitivity_(sensitivity),
      specificity_(specificity),
      prevalence_(prevalence),
      prevalence_known_(prevalence_known) {
  if (!(sensitivity > 0.0 && sensitivity <= 1.0)) {
    throw ValidationError("sensitivity must lie in (0, 1]");
  }
  if (!(specificity > 0.0 && specificity <= 1.0)) {
    throw ValidationError("specificity must lie in (0, 1]");
  }
  if (!(sensitivity + specificity > 1.0)) {
    throw ValidationError("sensitivity + specificity must exceed 1 for an informative test");
  }
  if (!(prevalence > 0.0 && prevalence < 1.0)) {
    throw ValidationError("prevalence must lie in (0, 1)");
  }
}

double& EffectParams::operator[](Coef c) {
  switch (c) {
    case Coef::beta1: return beta1;
    case Coef::beta2: return beta2;
    case Coef::gamma: return gamma;
  }
  return gamma;
}

double EffectParams::operator[](Coef c) const {
  switch (c) {
    case Coef::beta1: return beta1;
    case Coef::beta2: return beta2;
    case Coef::gamma: return gamma;
  }
  return gamma;
}

bool EffectParams::finite() const {
  return std::isfinite(beta1) && std::isfinite(beta2) && std::isfinite(gamma);
}

BaselineHazard::BaselineHazard(std::vector<double> event_times, std::vector<double> increments)
    : times_(std::move(event_times)), increments_(std::move(increments)) {
  if (times_.size() != increments_.size()) {
    throw ValidationError("baseline hazard: times and increments differ in length");
  }
  knots_.reserve(times_.size());
  double prev_t = 0.0;
  double acc = 0.0;
  for (std::size_t j = 0; j < times_.size(); ++j) {
    if (!(times_[j] > prev_t)) {
      throw ValidationError("baseline hazard: event times must be positive and strictly increasing");
    }
    if (!(increments_[j] > 0.0) || !std::isfinite(increments_[j])) {
      throw ValidationError("baseline hazard: increments must be positive and finite");
    }
    acc += increments_[j] * (times_[j] - prev_t);
    knots_.push_back(acc);
    prev_t = times_[j];
  }
}

std::size_t BaselineHazard::interval_index(double t) const {
  return static_cast<std::size_t>(std::lower_bound(times_.begin(), times_.end(), t) - times_.begin());
}

double BaselineHazard::hazard(double t) const {
  if (t <= 0.0) return 0.0;
  const std::size_t k = interval_index(t);
  return k < times_.size() ? increments_[k] : 0.0;
}

double BaselineHazard::cumulative(double t) const {
  if (t <= 0.0 || times_.empty()) return 0.0;
  const std::size_t k = interval_index(t);
  if (k == times_.size()) return knots_.back();
  const double start_t = k == 0 ? 0.0 : times_[k - 1];
  const double start_h = k == 0 ? 0.0 : knots_[k - 1];
  return start_h + increments_[k] * (t - start_t);
}

double BaselineHazard::cumulative_step(double t) const {
  const auto k = static_cast<std::size_t>(std::upper_bound(times_.begin(), times_.end(), t) - times_.begin());
  return k == 0 ? 0.0 : knots_[k - 1];
}

double ppv(const DiagnosticModel& diag) {
  const double pi = diag.prevalence();
  const double num = pi * diag.sensitivity();
  return num / (num + (1.0 - pi) * (1.0 - diag.specificity()));
}

double npv(const DiagnosticModel& diag) {
  const double pi = diag.prevalence();
  const double num = (1.0 - pi) * diag.specificity();
  return num / (pi * (1.0 - diag.sensitivity()) + num);
}

double positive_mixing_weight(const DiagnosticModel& diag, TestResult test) {
  switch (test) {
    case TestResult::positive: return ppv(diag);
    case TestResult::negative: return 1.0 - npv(diag);
    case TestResult::missing: return diag.prevalence();
  }
  return diag.prevalence();
}

double linear_predictor(const EffectParams& theta, bool x, bool z) {
  const double xd = x ? 1.0 : 0.0;
  const double zd = z ? 1.0 : 0.0;
  return theta.beta1 * xd + theta.beta2 * zd + theta.gamma * xd * zd;
}

double log_component_likelihood(const Subject& s, const EffectParams& theta,
                                const BaselineHazard& h0, bool z) {
  const double eta = linear_predictor(theta, s.treatment, z);
  const double cum = h0.cumulative_step(s.time);
  if (!s.event) return -cum * std::exp(eta);
  const double h = h0.hazard(s.time);
  if (!(h > 0.0)) {
    throw InvalidStateError("event at a time where the baseline hazard is zero");
  }
  return std::log(h) + eta - cum * std::exp(eta);
}

double mixture_survival(double t, bool x, TestResult group, const EffectParams& theta,
                        const BaselineHazard& h0, const DiagnosticModel& diag) {
  const double p = positive_mixing_weight(diag, group);
  const double cum = h0.cumulative(t);
  const double s1 = std::exp(-cum * std::exp(linear_predictor(theta, x, true)));
  const double s0 = std::exp(-cum * std::exp(linear_predictor(theta, x, false)));
  return p * s1 + (1.0 - p) * s0;
}

}  // namespace mixcox
