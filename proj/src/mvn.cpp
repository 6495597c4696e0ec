#include "mixcox/mvn.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include "mixcox/error.hpp"

namespace mixcox::mvn {
namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

// Interval probability of a standard normal, accurate in both tails.
double normal_interval(double a, double b) {
  if (!(b > a)) return 0.0;
  if (a >= 0.0) return 0.5 * (std::erfc(a * kInvSqrt2) - std::erfc(b * kInvSqrt2));
  if (b <= 0.0) return 0.5 * (std::erfc(-b * kInvSqrt2) - std::erfc(-a * kInvSqrt2));
  return 1.0 - 0.5 * (std::erfc(-a * kInvSqrt2) + std::erfc(b * kInvSqrt2));
}

// f(y) = phi(y) * g(y) with 0 <= g <= 1, so a piece holds at most its
// normal mass; pieces with negligible mass are skipped.
template <class F>
double integrate_pieces(F&& f, std::vector<double> cuts, double tol) {
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    if (!(cuts[k + 1] > cuts[k])) continue;
    const double mass = normal_interval(cuts[k], cuts[k + 1]);
    if (mass < 1e-16) continue;
    // The integrand carries absolute rounding noise near 1e-16; a purely
    // relative target on a light piece would never be met.
    const double piece_tol = std::max(tol, 1e-15 / mass);
    total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, cuts[k], cuts[k + 1],
                                                                          15, piece_tol);
  }
  return total;
}

// Root of the increasing f(x) = target inside [lo, hi].
template <class F>
double solve_increasing(F&& f, double lo, double hi, double target, double tol) {
  auto g = [&](double x) { return f(x) - target; };
  double glo = g(lo), ghi = g(hi);
  if (glo >= 0.0) return lo;
  if (ghi <= 0.0) return hi;
  std::uintmax_t iters = 100;
  auto done = [tol](double a, double b) { return std::fabs(b - a) <= tol; };
  const auto [a, b] = boost::math::tools::toms748_solve(g, lo, hi, glo, ghi, done, iters);
  return 0.5 * (a + b);
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double bvn_box(double a1, double b1, double a2, double b2, double rho) {
  if (!(b1 > a1) || !(b2 > a2)) return 0.0;
  rho = std::clamp(rho, -1.0, 1.0);
  const double q2 = (1.0 - rho) * (1.0 + rho);
  if (q2 < 1e-24) {
    // Y2 = +/- Y1 almost surely.
    if (rho > 0.0) return normal_interval(std::max(a1, a2), std::min(b1, b2));
    return normal_interval(std::max(a1, -b2), std::min(b1, -a2));
  }
  const double q = std::sqrt(q2);
  auto integrand = [&](double y) {
    return normal_pdf(y) * normal_interval((a2 - rho * y) / q, (b2 - rho * y) / q);
  };
  std::vector<double> cuts{a1, b1};
  if (rho != 0.0) {
    for (double c : {a2 / rho, b2 / rho}) {
      if (std::isfinite(c) && c > a1 && c < b1) cuts.push_back(c);
    }
  }
  return std::clamp(integrate_pieces(integrand, cuts, 1e-13), 0.0, 1.0);
}

double bvn_rect_prob(double xi, double rho) {
  if (!(xi > 0.0)) throw ValidationError("bvn_rect_prob: xi must be positive");
  return bvn_box(-xi, xi, -xi, xi, rho);
}

double tvn_rect_prob(double xi, const Eigen::Matrix3d& corr) {
  if (!(xi > 0.0)) throw ValidationError("tvn_rect_prob: xi must be positive");
  // The rectangle is symmetric in the coordinates, so any of them may be the
  // outer variable. The one least correlated with the others keeps the outer
  // integrand smooth; a strongly correlated pair is left to the inner rule,
  // which splits at its kinks.
  int outer = 0;
  double best = 2.0;
  for (int k = 0; k < 3; ++k) {
    const double m = std::max(std::fabs(corr(k, (k + 1) % 3)), std::fabs(corr(k, (k + 2) % 3)));
    if (m < best) {
      best = m;
      outer = k;
    }
  }
  const int i2 = (outer + 1) % 3;
  const int i3 = (outer + 2) % 3;
  const double r12 = std::clamp(corr(outer, i2), -1.0, 1.0);
  const double r13 = std::clamp(corr(outer, i3), -1.0, 1.0);
  const double r23 = std::clamp(corr(i2, i3), -1.0, 1.0);
  const double v2 = std::max((1.0 - r12) * (1.0 + r12), 0.0);
  const double v3 = std::max((1.0 - r13) * (1.0 + r13), 0.0);
  const double s2 = std::sqrt(v2);
  const double s3 = std::sqrt(v3);
  if (s2 < 1e-12 || s3 < 1e-12) {
    // X1 determines X2 or X3; reduce to the remaining bivariate problem.
    if (s2 < 1e-12) return bvn_rect_prob(xi, s3 < 1e-12 ? 1.0 : r13);
    return bvn_rect_prob(xi, r12);
  }
  const double rc = std::clamp((r23 - r12 * r13) / (s2 * s3), -1.0, 1.0);
  auto integrand = [&](double x) {
    const double m2 = r12 * x;
    const double m3 = r13 * x;
    return normal_pdf(x) *
           bvn_box((-xi - m2) / s2, (xi - m2) / s2, (-xi - m3) / s3, (xi - m3) / s3, rc);
  };
  // The outer integrand is analytic on [-xi, xi]; an adaptive rule would only
  // chase the rounding noise of the inner integral, so use fixed panels.
  // Transitions in x have width ~ min(s2, s3); narrow ones get more panels.
  const int panels = static_cast<int>(std::clamp(std::ceil(1.0 / std::min(s2, s3)), 4.0, 256.0));
  double total = 0.0;
  for (int k = 0; k < panels; ++k) {
    const double a = -xi + 2.0 * xi * k / panels;
    const double b = -xi + 2.0 * xi * (k + 1) / panels;
    total += boost::math::quadrature::gauss<double, 30>::integrate(integrand, a, b);
  }
  return std::clamp(total, 0.0, 1.0);
}

double simultaneous_scale(double rho, double alpha, double tol) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
  if (!(std::fabs(rho) <= 1.0)) throw ValidationError("correlation must lie in [-1, 1]");
  const double lo = normal_quantile(1.0 - alpha / 2.0);
  const double hi = normal_quantile(0.5 * (1.0 + std::sqrt(1.0 - alpha)));
  return solve_increasing([&](double xi) { return bvn_rect_prob(xi, rho); }, lo, hi, 1.0 - alpha,
                           tol);
}

double simultaneous_scale3(const Eigen::Matrix3d& corr, double alpha, double tol) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
  const double lo = normal_quantile(1.0 - alpha / 2.0);
  const double hi = normal_quantile(0.5 * (1.0 + std::cbrt(1.0 - alpha)));
  return solve_increasing([&](double xi) { return tvn_rect_prob(xi, corr); }, lo, hi, 1.0 - alpha,
                           tol);
}

}  // namespace mixcox::mvn
