#pragma once

#include <Eigen/Dense>

namespace mixcox::mvn {

double normal_cdf(double x);
double normal_quantile(double p);

// P(a1 <= Y1 <= b1, a2 <= Y2 <= b2) for a standard bivariate normal with
// correlation rho, by adaptive Gauss-Kronrod on the conditional-normal
// single integral.
double bvn_box(double a1, double b1, double a2, double b2, double rho);

// P(|X1| <= xi, |X2| <= xi), absolute error below 1e-9.
double bvn_rect_prob(double xi, double rho);

// P(|Xk| <= xi, k = 1..3) for a standard trivariate normal with the given
// correlation matrix (nested one-dimensional quadrature).
double tvn_rect_prob(double xi, const Eigen::Matrix3d& corr);

// Equicoordinate two-sided quantile: bvn_rect_prob(xi, rho) = 1 - alpha.
double simultaneous_scale(double rho, double alpha, double tol = 1e-9);

// Trivariate analogue of simultaneous_scale.
double simultaneous_scale3(const Eigen::Matrix3d& corr, double alpha, double tol = 1e-8);

}  // namespace mixcox::mvn
