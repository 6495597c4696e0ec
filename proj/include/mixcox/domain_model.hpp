#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace mixcox {

enum class TestResult : std::uint8_t { negative = 0, positive = 1, missing = 2 };

// One patient. The latent true biomarker status is never stored; the
// estimator only ever sees its posterior probability.
struct Subject {
  double time = 0.0;
  bool event = false;
  bool treatment = false;
  TestResult test = TestResult::missing;
};

// Ordered, validated collection of subjects. Requires at least one event
// and at least one subject in each treatment arm.
class Dataset {
 public:
  explicit Dataset(std::vector<Subject> subjects);

  std::span<const Subject> subjects() const { return subjects_; }
  std::size_t size() const { return subjects_.size(); }
  const Subject& operator[](std::size_t i) const { return subjects_[i]; }

 private:
  std::vector<Subject> subjects_;
};

// Sensitivity and specificity are known constants of the assay; the
// prevalence may be known or a starting value to be estimated.
class DiagnosticModel {
 public:
  DiagnosticModel(double sensitivity, double specificity, double prevalence,
                  bool prevalence_known);

  double sensitivity() const { return sensitivity_; }
  double specificity() const { return specificity_; }
  double prevalence() const { return prevalence_; }
  bool prevalence_known() const { return prevalence_known_; }

  DiagnosticModel with_prevalence(double prevalence) const {
    return {sensitivity_, specificity_, prevalence, prevalence_known_};
  }

 private:
  double sensitivity_;
  double specificity_;
  double prevalence_;
  bool prevalence_known_;
};

enum class Coef : int { beta1 = 0, beta2 = 1, gamma = 2 };

// Log-hazard coefficients: treatment in the negative group (beta1), positive
// status in the control arm (beta2), treatment x status interaction (gamma).
struct EffectParams {
  double beta1 = 0.0;
  double beta2 = 0.0;
  double gamma = 0.0;

  double& operator[](Coef c);
  double operator[](Coef c) const;
  bool finite() const;
};

// Piecewise-constant hazard on the intervals (t_(j-1), t_(j)] between
// distinct event times, t_(0) = 0. The cumulative hazard is the continuous
// piecewise-linear integral and stays flat after the last event time.
class BaselineHazard {
 public:
  BaselineHazard() = default;
  BaselineHazard(std::vector<double> event_times, std::vector<double> increments);

  std::span<const double> event_times() const { return times_; }
  std::span<const double> increments() const { return increments_; }
  std::size_t size() const { return times_.size(); }
  bool empty() const { return times_.empty(); }

  // h0(t); zero at t <= 0 and beyond the last event time.
  double hazard(double t) const;
  // H0(t); zero for t <= 0.
  double cumulative(double t) const;
  // H0 at the last event time <= t (the Breslow step function).
  double cumulative_step(double t) const;

 private:
  std::size_t interval_index(double t) const;

  std::vector<double> times_;
  std::vector<double> increments_;
  std::vector<double> knots_;  // H0(t_(j)), j = 1..m
};

double ppv(const DiagnosticModel& diag);
double npv(const DiagnosticModel& diag);

// Probability of true positive status given the observed test result:
// PPV, 1 - NPV, or the prevalence when the test is missing.
double positive_mixing_weight(const DiagnosticModel& diag, TestResult test);

double linear_predictor(const EffectParams& theta, bool x, bool z);

// delta * [log h0(t) + eta] - H0(t) * exp(eta), with H0 taken as the
// Breslow step function so that the EM update maximises this exactly.
double log_component_likelihood(const Subject& s, const EffectParams& theta,
                                const BaselineHazard& h0, bool z);

double mixture_survival(double t, bool x, TestResult group, const EffectParams& theta,
                        const BaselineHazard& h0, const DiagnosticModel& diag);

}  // namespace mixcox
