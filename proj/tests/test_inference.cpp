#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "mixcox/error.hpp"
#include "mixcox/inference.hpp"
#include "mixcox/mvn.hpp"
#include "mixcox/sim_harness.hpp"

using namespace mixcox;
using namespace mixcox::inference;

namespace {

double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Independent Monte-Carlo estimate of P(|Xk| <= xi for all k) with a
// Cholesky factor built by hand.
double mc_rect(double xi, const std::vector<std::vector<double>>& corr, int draws, std::uint64_t seed) {
  const std::size_t p = corr.size();
  std::vector<std::vector<double>> l(p, std::vector<double>(p, 0.0));
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = corr[i][j];
      for (std::size_t k = 0; k < j; ++k) s -= l[i][k] * l[j][k];
      l[i][j] = (i == j) ? std::sqrt(std::max(0.0, s)) : (l[j][j] > 0 ? s / l[j][j] : 0.0);
    }
  }
  std::mt19937_64 g(seed);
  std::normal_distribution<double> nd;
  std::vector<double> e(p);
  int hit = 0;
  for (int d = 0; d < draws; ++d) {
    for (double& v : e) v = nd(g);
    bool in = true;
    for (std::size_t i = 0; i < p && in; ++i) {
      double x = 0.0;
      for (std::size_t k = 0; k <= i; ++k) x += l[i][k] * e[k];
      in = std::fabs(x) <= xi;
    }
    hit += in ? 1 : 0;
  }
  return static_cast<double>(hit) / draws;
}

double phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

Dataset simulated(double acc, int n_per_arm, std::uint64_t seed, EffectParams theta = {-0.5, 0.1, 0.3}) {
  sim::ScenarioConfig c;
  c.theta_true = theta;
  c.sens = acc;
  c.spec = acc;
  c.n_per_arm = n_per_arm;
  sim::RngStream rng = sim::RngStream::for_replication(seed, 0);
  return sim::generate_trial(c, rng);
}

}  // namespace

TEST_CASE("chi-square helpers") {
  CHECK(chi2_1_critical(0.05) == doctest::Approx(3.841459).epsilon(1e-6));
  CHECK(chi2_1_pvalue(3.8415) == doctest::Approx(0.05).epsilon(1e-4));
  CHECK(chi2_1_pvalue(0.0) == 1.0);
}

TEST_CASE("finite-difference information is exact on quadratics") {
  auto quad = [](std::span<const double> p) { return -(p[0] * p[0] + p[0] * p[1] + p[1] * p[1]); };
  const std::vector<double> c{0.3, -0.7};
  for (double h : {0.5, 0.01, 1e-3}) {
    const Eigen::MatrixXd m = fd_information(quad, c, h);
    CHECK(m(0, 0) == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(m(1, 1) == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(m(0, 1) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(m(1, 0) == m(0, 1));
  }
  auto sep = [](std::span<const double> p) { return -0.5 * p[0] * p[0]; };
  const Eigen::MatrixXd s = fd_information(sep, c, 0.01);
  CHECK(std::fabs(s(0, 1)) < 1e-9);
  CHECK(s(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK_THROWS_AS(fd_information(sep, c, 0.0), ValidationError);
}

TEST_CASE("subgroup covariance by the delta method") {
  const Eigen::Matrix2d s = subgroup_cov(Eigen::Matrix2d::Identity());
  CHECK(s(0, 0) == doctest::Approx(2.0));
  CHECK(s(0, 1) == doctest::Approx(1.0));
  CHECK(s(1, 0) == doctest::Approx(1.0));
  CHECK(s(1, 1) == doctest::Approx(1.0));
  Eigen::Matrix2d d;
  d << 4.0, 0.0, 0.0, 5.0;
  const Eigen::Matrix2d sd = subgroup_cov(d);
  CHECK(sd(0, 0) == doctest::Approx(0.25 + 0.2));
  CHECK(sd(0, 1) == doctest::Approx(0.25));
  CHECK(sd(1, 1) == doctest::Approx(0.25));
  Eigen::Matrix2d info;
  info << 3.0, -1.2, -1.2, 2.0;
  const Eigen::Matrix2d sg = subgroup_cov(info);
  CHECK(std::fabs(sg(0, 1) - sg(1, 0)) < 1e-15);
  CHECK(Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(sg).eigenvalues().minCoeff() > 0.0);
  Eigen::Matrix2d bad;
  bad << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(subgroup_cov(bad), ConditioningError);
}

TEST_CASE("bivariate rectangle probability") {
  for (double xi : {0.5, 1.0, 1.95996, 3.0}) {
    const double u = 2.0 * phi(xi) - 1.0;
    CHECK(std::fabs(mvn::bvn_rect_prob(xi, 0.0) - u * u) < 1e-9);
    CHECK(std::fabs(mvn::bvn_rect_prob(xi, 1.0) - u) < 1e-9);
    CHECK(std::fabs(mvn::bvn_rect_prob(xi, -1.0) - u) < 1e-9);
  }
  // Strictly between the independent and the fully correlated values.
  const double p = mvn::bvn_rect_prob(1.95996, 0.5);
  CHECK(p > 0.95 * 0.95);
  CHECK(p < 0.95);
  CHECK(p == doctest::Approx(0.90925).epsilon(1e-5));
  const int draws = 2'000'000;
  for (double rho : {-0.8, 0.5, 0.9}) {
    const double mc = mc_rect(1.5, {{1.0, rho}, {rho, 1.0}}, draws, 42);
    const double se = std::sqrt(mc * (1 - mc) / draws);
    CHECK(std::fabs(mvn::bvn_rect_prob(1.5, rho) - mc) < 4.0 * se);
  }
}

TEST_CASE("equicoordinate scale") {
  const double z = 1.959963984540054;
  const double sidak = mvn::normal_quantile((1.0 + std::sqrt(0.95)) / 2.0);
  CHECK(std::fabs(mvn::simultaneous_scale(0.0, 0.05) - 2.23649) < 1e-4);
  CHECK(std::fabs(mvn::simultaneous_scale(0.0, 0.05) - sidak) < 1e-6);
  CHECK(std::fabs(mvn::simultaneous_scale(1.0, 0.05) - z) < 1e-6);
  CHECK(std::fabs(mvn::simultaneous_scale(-1.0, 0.05) - z) < 1e-6);
  double last = 10.0;
  for (int k = 0; k <= 20; ++k) {
    const double r = k / 20.0;
    const double xp = mvn::simultaneous_scale(r, 0.05);
    const double xm = mvn::simultaneous_scale(-r, 0.05);
    CHECK(std::fabs(xp - xm) < 1e-7);
    CHECK(xp <= last + 1e-9);
    CHECK(xp >= z - 1e-9);
    CHECK(xp <= sidak + 1e-9);
    last = xp;
  }
  const double x5 = mvn::simultaneous_scale(0.5, 0.05);
  const int draws = 2'000'000;
  const double mc = mc_rect(x5, {{1.0, 0.5}, {0.5, 1.0}}, draws, 7);
  CHECK(std::fabs(mc - 0.95) < 4.0 * std::sqrt(0.95 * 0.05 / draws));
}

TEST_CASE("trivariate rectangle probability and scale") {
  const double u = 2.0 * phi(1.7) - 1.0;
  CHECK(std::fabs(mvn::tvn_rect_prob(1.7, Eigen::Matrix3d::Identity()) - u * u * u) < 1e-7);
  Eigen::Matrix3d c;
  c << 1.0, 0.6, 0.0, 0.6, 1.0, 0.0, 0.0, 0.0, 1.0;
  CHECK(std::fabs(mvn::tvn_rect_prob(1.7, c) - mvn::bvn_rect_prob(1.7, 0.6) * u) < 1e-7);
  c << 1.0, 0.5, 0.3, 0.5, 1.0, -0.4, 0.3, -0.4, 1.0;
  const int draws = 2'000'000;
  const double mc = mc_rect(2.0, {{1.0, 0.5, 0.3}, {0.5, 1.0, -0.4}, {0.3, -0.4, 1.0}}, draws, 99);
  CHECK(std::fabs(mvn::tvn_rect_prob(2.0, c) - mc) < 4.0 * std::sqrt(mc * (1 - mc) / draws));
  Eigen::Matrix3d h;
  h << 1.0, 0.97, 0.9, 0.97, 1.0, 0.95, 0.9, 0.95, 1.0;
  const double mch = mc_rect(1.8, {{1.0, 0.97, 0.9}, {0.97, 1.0, 0.95}, {0.9, 0.95, 1.0}}, draws, 5);
  CHECK(std::fabs(mvn::tvn_rect_prob(1.8, h) - mch) < 4.0 * std::sqrt(mch * (1 - mch) / draws));
  const double x3 = mvn::simultaneous_scale3(Eigen::Matrix3d::Identity(), 0.05);
  CHECK(std::fabs(x3 - mvn::normal_quantile((1.0 + std::cbrt(0.95)) / 2.0)) < 1e-6);
  CHECK(mvn::simultaneous_scale3(c, 0.05) > 1.959963984540054);
}

TEST_CASE("simultaneous intervals") {
  Eigen::Matrix2d sigma;
  sigma << 0.04, 0.0, 0.0, 0.04;
  const SimultaneousReport r = simultaneous_cis({-0.2, 0.1, 0.3}, sigma, 0.05);
  CHECK(r.rho == 0.0);
  CHECK(r.xi_alpha == doctest::Approx(2.23649).epsilon(1e-5));
  const double hw_pos = r.interval_pos.upper - r.interval_pos.lower;
  const double hw_neg = r.interval_neg.upper - r.interval_neg.lower;
  CHECK(hw_pos == doctest::Approx(hw_neg).epsilon(1e-14));
  CHECK(r.interval_pos.contains(0.1));
  CHECK(r.interval_neg.contains(-0.2));
}

TEST_CASE("concordance probability") {
  CHECK(concordance_prob({}, 0.3) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(concordance_prob({-0.4, 0.0, 0.0}, 0.3) == doctest::Approx(expit(-0.4)).epsilon(1e-15));
  const double p = concordance_prob({-0.15, 1.18, -0.53}, 0.47);
  CHECK(p == doctest::Approx(0.4114).epsilon(1e-4));
  CHECK(p / (1.0 - p) == doctest::Approx(0.70).epsilon(0.005));
  CHECK(std::exp(log_concordance_odds({-0.15, 1.18, -0.53}, 0.47)) == doctest::Approx(p / (1 - p)));

  for (double pi : {0.1, 0.47, 0.8}) {
    const Eigen::Vector3d g = log_concordance_gradient({-0.3, 0.0, 0.0}, pi, 1e-4);
    CHECK(g[0] == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(std::fabs(g[1]) < 1e-9);
    CHECK(g[2] == doctest::Approx(pi * pi + pi * (1 - pi)).epsilon(1e-7));
  }

  std::mt19937_64 gen(3);
  std::normal_distribution<double> nd(0.0, 0.8);
  std::uniform_real_distribution<double> up(0.02, 0.98);
  for (int k = 0; k < 200; ++k) {
    const EffectParams t{nd(gen), 0.0, nd(gen)};
    const double pi = up(gen);
    CHECK(concordance_prob({-t.beta1, 0.0, -t.gamma}, pi) ==
          doctest::Approx(1.0 - concordance_prob(t, pi)).epsilon(1e-13));
    const EffectParams u{nd(gen), nd(gen), nd(gen)};
    const bool all_below = expit(u.beta1 + u.gamma) < 0.5 && expit(u.beta1) < 0.5 &&
                           expit(u.beta1 + u.beta2 + u.gamma) < 0.5 && expit(u.beta1 - u.beta2) < 0.5;
    if (all_below) CHECK(concordance_prob(u, pi) < 0.5);
  }
  CHECK_THROWS_AS(concordance_prob({}, 1.0), ValidationError);
}

TEST_CASE("profile likelihood on a simulated trial") {
  const Dataset d = simulated(0.9, 150, 314);
  const DiagnosticModel diag(0.9, 0.9, 0.3, false);
  const InferenceConfig cfg;
  const em::FitResult mle = em::fit(d, diag, cfg.em);
  REQUIRE(mle.converged);
  const ProfileContext ctx{d, diag, mle, cfg};

  em::FixedEffects at_mle{};
  at_mle[2] = mle.theta_hat.gamma;
  CHECK(std::fabs(profile_loglik(ctx, at_mle) - mle.obs_loglik) < 1e-6);
  for (double eps : {-0.05, 0.05}) {
    em::FixedEffects f{};
    f[2] = mle.theta_hat.gamma + eps;
    CHECK(profile_loglik(ctx, f) < mle.obs_loglik);
  }

  const LrTest at = lr_test(ctx, Param::gamma, mle.theta_hat.gamma);
  CHECK(at.lambda < 1e-6);
  CHECK(at.p_value > 0.999);

  const double crit = chi2_1_critical(0.05);
  for (Param p : {Param::beta1, Param::gamma, Param::prevalence}) {
    const Interval ci = profile_ci(ctx, p);
    CHECK_FALSE(ci.lower_open);
    CHECK_FALSE(ci.upper_open);
    const double est = p == Param::prevalence ? mle.pi_hat : mle.theta_hat[static_cast<Coef>(p)];
    CHECK(ci.contains(est));
    auto lam_at = [&](double v) {
      if (p == Param::prevalence) return 2.0 * (mle.obs_loglik - profile_loglik_prevalence(ctx, v));
      em::FixedEffects f{};
      f[static_cast<int>(p)] = v;
      return 2.0 * (mle.obs_loglik - profile_loglik(ctx, f));
    };
    CHECK(std::fabs(lam_at(ci.lower) - crit) < 0.02);
    CHECK(std::fabs(lam_at(ci.upper) - crit) < 0.02);
  }

  const std::array<Coef, 2> pair{Coef::beta1, Coef::gamma};
  const Eigen::Matrix2d info = fd_profile_information(ctx, pair);
  const SimultaneousReport sim = simultaneous_cis(mle.theta_hat, subgroup_cov(info), 0.05);
  CHECK(sim.xi_alpha >= 1.959963984540054);
  const Interval ind = profile_ci(ctx, Param::beta1);
  CHECK(sim.interval_neg.lower <= ind.lower);
  CHECK(sim.interval_neg.upper >= ind.upper);

  // Profile values are independent of the order in which they are requested.
  em::FixedEffects f1{}, f2{};
  f1[0] = mle.theta_hat.beta1 + 0.1;
  f2[2] = mle.theta_hat.gamma - 0.2;
  const double a1 = profile_loglik(ctx, f1);
  const double a2 = profile_loglik(ctx, f2);
  CHECK(profile_loglik(ctx, f2) == a2);
  CHECK(profile_loglik(ctx, f1) == a1);
}

TEST_CASE("overall report with perfect diagnosis") {
  const Dataset d = simulated(1.0, 150, 2718);
  const DiagnosticModel diag(1.0, 1.0, 0.3, false);
  const InferenceConfig cfg;
  const em::FitResult mle = em::fit(d, diag, cfg.em);
  REQUIRE(mle.converged);
  const ProfileContext ctx{d, diag, mle, cfg};
  const SimultaneousReport r = overall_concordance_report(ctx);
  REQUIRE(r.overall.has_value());
  const EffectParams& t = mle.theta_hat;
  CHECK(r.interval_pos.contains(t.beta1 + t.gamma));
  CHECK(r.interval_neg.contains(t.beta1));
  CHECK(r.overall->interval.contains(log_concordance_odds(t, mle.pi_hat)));
  CHECK(r.xi_alpha > mvn::simultaneous_scale(r.rho, 0.05));
  const Eigen::Matrix3d cov = r.overall->covariance;
  CHECK((cov - cov.transpose()).cwiseAbs().maxCoeff() < 1e-12);
}
