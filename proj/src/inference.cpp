#include "mixcox/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mixcox/error.hpp"
#include "mixcox/mvn.hpp"

namespace mixcox::inference {
namespace {

em::FitOptions warm_start(const ProfileContext& ctx) {
  em::FitOptions opts;
  opts.init_theta = ctx.mle.theta_hat;
  opts.init_baseline = ctx.mle.baseline;
  opts.init_prevalence = ctx.mle.pi_hat;
  return opts;
}

double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double param_value(const em::FitResult& fit, Param p) {
  switch (p) {
    case Param::beta1: return fit.theta_hat.beta1;
    case Param::beta2: return fit.theta_hat.beta2;
    case Param::gamma: return fit.theta_hat.gamma;
    case Param::prevalence: return fit.pi_hat;
  }
  return 0.0;
}

double profile_at(const ProfileContext& ctx, Param p, double value) {
  if (p == Param::prevalence) return profile_loglik_prevalence(ctx, value);
  em::FixedEffects fixed{};
  fixed[static_cast<int>(p)] = value;
  return profile_loglik(ctx, fixed);
}

Eigen::MatrixXd checked_inverse(const Eigen::MatrixXd& info) {
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() != Eigen::Success) {
    throw ConditioningError(
        "profile information matrix is not positive definite; try a different fd step");
  }
  return llt.solve(Eigen::MatrixXd::Identity(info.rows(), info.cols()));
}

}  // namespace

const char* param_name(Param p) {
  switch (p) {
    case Param::beta1: return "beta1";
    case Param::beta2: return "beta2";
    case Param::gamma: return "gamma";
    case Param::prevalence: return "prevalence";
  }
  return "?";
}

double chi2_1_critical(double alpha) {
  const double z = mvn::normal_quantile(1.0 - alpha / 2.0);
  return z * z;
}

double chi2_1_pvalue(double lambda) {
  if (!(lambda > 0.0)) return 1.0;
  return std::erfc(std::sqrt(0.5 * lambda));
}

double profile_loglik(const ProfileContext& ctx, const em::FixedEffects& fixed) {
  em::FitOptions opts = warm_start(ctx);
  opts.fixed = fixed;
  return em::fit(ctx.data, ctx.diag, ctx.config.em, opts).obs_loglik;
}

double profile_loglik_prevalence(const ProfileContext& ctx, double pi) {
  if (ctx.diag.prevalence_known()) {
    throw InvalidStateError("prevalence is known; there is no profile over it");
  }
  em::FitOptions opts = warm_start(ctx);
  opts.init_prevalence = pi;
  opts.hold_prevalence = true;
  return em::fit(ctx.data, ctx.diag, ctx.config.em, opts).obs_loglik;
}

LrTest lr_test(const ProfileContext& ctx, Param param, double null_value) {
  const double lp = profile_at(ctx, param, null_value);
  LrTest t;
  t.lambda = std::max(0.0, 2.0 * (ctx.mle.obs_loglik - lp));
  t.p_value = chi2_1_pvalue(t.lambda);
  return t;
}

Interval profile_ci(const ProfileContext& ctx, Param param) {
  const double crit = chi2_1_critical(ctx.config.alpha);
  const double est = param_value(ctx.mle, param);
  const bool bounded = param == Param::prevalence;
  const double lo_bound = bounded ? 1e-4 : -std::numeric_limits<double>::infinity();
  const double hi_bound = bounded ? 1.0 - 1e-4 : std::numeric_limits<double>::infinity();

  auto lambda = [&](double v) { return 2.0 * (ctx.mle.obs_loglik - profile_at(ctx, param, v)); };

  // Profile standard error from one probe: Lambda(est + s) ~ s^2 / se^2.
  const double probe = bounded ? std::min(0.02, 0.5 * (hi_bound - est)) : 0.1;
  const double lp = lambda(est + probe);
  double se = lp > 1e-12 ? probe / std::sqrt(lp) : 10.0 * probe;
  se = std::clamp(se, 1e-3, 10.0);

  Interval out;
  for (int dir : {-1, +1}) {
    double inner = est;
    double outer = est;
    bool bracketed = false;
    bool failed = false;
    double dist = ctx.config.bracket_expand * se;
    for (int k = 0; k <= ctx.config.max_expansions; ++k) {
      const double v = std::clamp(est + dir * dist, lo_bound, hi_bound);
      double lv = 0.0;
      try {
        lv = lambda(v);
      } catch (const std::runtime_error&) {
        failed = true;
        break;
      }
      if (lv >= crit) {
        outer = v;
        bracketed = true;
        break;
      }
      inner = v;
      if (v == lo_bound || v == hi_bound) break;
      dist *= 2.0;
    }
    double endpoint = inner;
    if (bracketed) {
      while (std::fabs(outer - inner) > ctx.config.ci_tol) {
        const double mid = 0.5 * (inner + outer);
        if (lambda(mid) < crit) {
          inner = mid;
        } else {
          outer = mid;
        }
      }
      endpoint = 0.5 * (inner + outer);
    }
    const bool open = !bracketed || failed;
    if (dir < 0) {
      out.lower = endpoint;
      out.lower_open = open;
    } else {
      out.upper = endpoint;
      out.upper_open = open;
    }
  }
  return out;
}

Eigen::MatrixXd fd_information(const std::function<double(std::span<const double>)>& loglik,
                               std::span<const double> center, double h) {
  if (!(h > 0.0)) throw ValidationError("finite-difference step must be positive");
  const auto p = static_cast<Eigen::Index>(center.size());
  std::vector<double> point(center.begin(), center.end());
  auto eval = [&](Eigen::Index i, double di, Eigen::Index j, double dj) {
    std::copy(center.begin(), center.end(), point.begin());
    if (i >= 0) point[i] += di;
    if (j >= 0) point[j] += dj;
    return loglik(point);
  };

  const double f0 = eval(-1, 0.0, -1, 0.0);
  std::vector<double> f1(p), f2(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    f1[i] = eval(i, h, -1, 0.0);
    f2[i] = eval(i, 2.0 * h, -1, 0.0);
  }
  Eigen::MatrixXd info(p, p);
  const double h2 = h * h;
  for (Eigen::Index i = 0; i < p; ++i) {
    info(i, i) = -(f2[i] - 2.0 * f1[i] + f0) / h2;
    for (Eigen::Index j = i + 1; j < p; ++j) {
      const double fij = eval(i, h, j, h);
      info(i, j) = -(fij - f1[j] - f1[i] + f0) / h2;
      info(j, i) = info(i, j);
    }
  }
  return 0.5 * (info + info.transpose());
}

Eigen::MatrixXd fd_profile_information(const ProfileContext& ctx, std::span<const Coef> params) {
  std::vector<double> center;
  for (Coef c : params) center.push_back(ctx.mle.theta_hat[c]);
  auto loglik = [&](std::span<const double> point) {
    if (std::equal(point.begin(), point.end(), center.begin())) return ctx.mle.obs_loglik;
    em::FixedEffects fixed{};
    for (std::size_t k = 0; k < params.size(); ++k) fixed[static_cast<int>(params[k])] = point[k];
    return profile_loglik(ctx, fixed);
  };
  Eigen::MatrixXd info = fd_information(loglik, center, ctx.config.fd_step);
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() != Eigen::Success) {
    throw ConditioningError(
        "profile information matrix is not positive definite; try a different fd step");
  }
  return info;
}

Eigen::Matrix2d subgroup_cov(const Eigen::Matrix2d& information) {
  Eigen::Matrix2d a;
  a << 1.0, 1.0, 1.0, 0.0;
  const Eigen::Matrix2d inv = checked_inverse(information);
  return a * inv * a.transpose();
}

SimultaneousReport simultaneous_cis(const EffectParams& theta_hat, const Eigen::Matrix2d& sigma,
                                    double alpha) {
  SimultaneousReport r;
  r.sigma = sigma;
  r.sigma_pos = std::sqrt(sigma(0, 0));
  r.sigma_neg = std::sqrt(sigma(1, 1));
  if (!(r.sigma_pos > 0.0) || !(r.sigma_neg > 0.0)) {
    throw ConditioningError("subgroup covariance has a non-positive variance");
  }
  r.rho = std::clamp(sigma(0, 1) / (r.sigma_pos * r.sigma_neg), -1.0, 1.0);
  r.xi_alpha = mvn::simultaneous_scale(r.rho, alpha);
  const double pos = theta_hat.beta1 + theta_hat.gamma;
  r.interval_pos = {pos - r.xi_alpha * r.sigma_pos, pos + r.xi_alpha * r.sigma_pos};
  r.interval_neg = {theta_hat.beta1 - r.xi_alpha * r.sigma_neg,
                    theta_hat.beta1 + r.xi_alpha * r.sigma_neg};
  return r;
}

double concordance_prob(const EffectParams& t, double pi) {
  if (!(pi > 0.0 && pi < 1.0)) throw ValidationError("prevalence must lie in (0, 1)");
  const double q = 1.0 - pi;
  return pi * pi * expit(t.beta1 + t.gamma) + q * q * expit(t.beta1) +
         pi * q * expit(t.beta1 + t.beta2 + t.gamma) + pi * q * expit(t.beta1 - t.beta2);
}

double log_concordance_odds(const EffectParams& theta, double pi) {
  const double p = concordance_prob(theta, pi);
  return std::log(p / (1.0 - p));
}

Eigen::Vector3d log_concordance_gradient(const EffectParams& theta, double pi, double h) {
  Eigen::Vector3d g;
  for (int k = 0; k < 3; ++k) {
    EffectParams up = theta;
    EffectParams down = theta;
    up[static_cast<Coef>(k)] += h;
    down[static_cast<Coef>(k)] -= h;
    g[k] = (log_concordance_odds(up, pi) - log_concordance_odds(down, pi)) / (2.0 * h);
  }
  return g;
}

SimultaneousReport overall_concordance_report(const ProfileContext& ctx) {
  const EffectParams& th = ctx.mle.theta_hat;
  const double pi = ctx.mle.pi_hat;
  const std::array<Coef, 3> all{Coef::beta1, Coef::beta2, Coef::gamma};
  const Eigen::Matrix3d info = fd_profile_information(ctx, all);
  const Eigen::Matrix3d cov_theta = checked_inverse(info);

  OverallEffect overall;
  overall.concordance_prob = concordance_prob(th, pi);
  overall.log_odds = log_concordance_odds(th, pi);
  overall.gradient = log_concordance_gradient(th, pi, ctx.config.fd_step);

  Eigen::Matrix3d jac;
  jac << 1.0, 0.0, 1.0,
         1.0, 0.0, 0.0,
         overall.gradient[0], overall.gradient[1], overall.gradient[2];
  overall.covariance = jac * cov_theta * jac.transpose();

  const Eigen::Vector3d sd = overall.covariance.diagonal().cwiseSqrt();
  if (!(sd.array() > 0.0).all()) {
    throw ConditioningError("three-way covariance has a non-positive variance");
  }
  const Eigen::Matrix3d corr = sd.cwiseInverse().asDiagonal() * overall.covariance *
                               sd.cwiseInverse().asDiagonal();
  const double xi = mvn::simultaneous_scale3(corr, ctx.config.alpha);

  SimultaneousReport r;
  r.sigma = overall.covariance.topLeftCorner<2, 2>();
  r.sigma_pos = sd[0];
  r.sigma_neg = sd[1];
  r.rho = std::clamp(corr(0, 1), -1.0, 1.0);
  r.xi_alpha = xi;
  const double pos = th.beta1 + th.gamma;
  r.interval_pos = {pos - xi * sd[0], pos + xi * sd[0]};
  r.interval_neg = {th.beta1 - xi * sd[1], th.beta1 + xi * sd[1]};
  overall.interval = {overall.log_odds - xi * sd[2], overall.log_odds + xi * sd[2]};
  r.overall = overall;
  return r;
}

}  // namespace mixcox::inference
