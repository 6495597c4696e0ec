#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mixcox/domain_model.hpp"
#include "mixcox/em_estimator.hpp"

namespace mixcox::inference {

enum class Param { beta1, beta2, gamma, prevalence };

const char* param_name(Param p);

struct InferenceConfig {
  double alpha = 0.05;
  double fd_step = 0.01;
  double ci_tol = 1e-4;
  // First bracket point sits this many profile standard errors from the MLE;
  // the distance doubles until the LR statistic crosses the critical value.
  double bracket_expand = 4.0;
  int max_expansions = 10;
  em::EmConfig em{};
};

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  bool lower_open = false;  // endpoint not bracketed; lower is the last value tried
  bool upper_open = false;

  bool contains(double v) const { return lower <= v && v <= upper; }
};

struct LrTest {
  double lambda = 0.0;
  double p_value = 1.0;
};

struct OverallEffect {
  double log_odds = 0.0;  // beta* = log(P / (1 - P))
  double concordance_prob = 0.5;
  Interval interval;  // on the log-odds scale
  Eigen::Vector3d gradient = Eigen::Vector3d::Zero();  // d beta* / d (beta1, beta2, gamma)
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Zero();  // of (b1+g, b1, beta*)
};

struct SimultaneousReport {
  Interval interval_pos;  // beta1 + gamma
  Interval interval_neg;  // beta1
  double xi_alpha = 0.0;
  Eigen::Matrix2d sigma = Eigen::Matrix2d::Zero();
  double sigma_pos = 0.0;
  double sigma_neg = 0.0;
  double rho = 0.0;
  std::optional<OverallEffect> overall;
};

// Everything the profile computations need: the data, the diagnostic model
// and the unconstrained MLE used as the warm start of every profile fit.
// Warm starts always come from the MLE, so results do not depend on the
// order in which profile points are evaluated.
struct ProfileContext {
  const Dataset& data;
  const DiagnosticModel& diag;
  const em::FitResult& mle;
  InferenceConfig config;
};

double chi2_1_critical(double alpha);
double chi2_1_pvalue(double lambda);

// Maximised observed log-likelihood with the given coefficients held fixed.
double profile_loglik(const ProfileContext& ctx, const em::FixedEffects& fixed);
// Same for the prevalence (marginal likelihood, pi held at `pi`).
double profile_loglik_prevalence(const ProfileContext& ctx, double pi);

LrTest lr_test(const ProfileContext& ctx, Param param, double null_value);

Interval profile_ci(const ProfileContext& ctx, Param param);

// One-sided second-difference stencils around `center` with step h,
// returned symmetrised. Exact for quadratic log-likelihoods.
Eigen::MatrixXd fd_information(const std::function<double(std::span<const double>)>& loglik,
                               std::span<const double> center, double h);

// Profile information over the named coefficients (each evaluation holds
// all of them fixed). Throws ConditioningError if not positive definite.
Eigen::MatrixXd fd_profile_information(const ProfileContext& ctx, std::span<const Coef> params);

// Delta-method covariance of (beta1 + gamma, beta1) from the information
// over (beta1, gamma).
Eigen::Matrix2d subgroup_cov(const Eigen::Matrix2d& information);

SimultaneousReport simultaneous_cis(const EffectParams& theta_hat, const Eigen::Matrix2d& sigma,
                                    double alpha);

// P(T0 > T1) for random patients from the control (T0) and treated (T1) arms.
double concordance_prob(const EffectParams& theta, double pi);
double log_concordance_odds(const EffectParams& theta, double pi);
// Central differences of beta* with respect to (beta1, beta2, gamma).
Eigen::Vector3d log_concordance_gradient(const EffectParams& theta, double pi, double h);

// Three-way simultaneous intervals for (beta1 + gamma, beta1, beta*) with
// the trivariate equicoordinate scale; pi is held at its estimate.
SimultaneousReport overall_concordance_report(const ProfileContext& ctx);

}  // namespace mixcox::inference
