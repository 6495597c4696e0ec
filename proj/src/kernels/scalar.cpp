#include <algorithm>
#include <cmath>

#include "mixcox/kernels.hpp"

namespace mixcox::kernels {
namespace {

void risk_scores_scalar(std::size_t n, const double* c0, const double* c1, const double* c2,
                        const double* offset, const double* weight, const double* beta,
                        double* eta, double* risk) {
  for (std::size_t i = 0; i < n; ++i) {
    const double e = beta[0] * c0[i] + beta[1] * c1[i] + beta[2] * c2[i] + offset[i];
    eta[i] = e;
    risk[i] = weight[i] * std::exp(e);
  }
}

void mixture_posterior_scalar(std::size_t n, const double* logp1, const double* logp0,
                              const double* delta, const double* cumhaz, const double* eta1,
                              const double* eta0, double* post, double* loglik) {
  for (std::size_t i = 0; i < n; ++i) {
    const double a = logp1[i] + delta[i] * eta1[i] - cumhaz[i] * std::exp(eta1[i]);
    const double b = logp0[i] + delta[i] * eta0[i] - cumhaz[i] * std::exp(eta0[i]);
    const double hi = std::max(a, b);
    const double e = std::exp(std::min(a, b) - hi);
    post[i] = a >= b ? 1.0 / (1.0 + e) : e / (1.0 + e);
    loglik[i] = hi + std::log1p(e);
  }
}

void weibull_inverse_scalar(std::size_t n, const double* u, const double* eta, double scale,
                            double shape, double* out) {
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = scale * std::pow(-std::log(u[i]) * std::exp(-eta[i]), 1.0 / shape);
  }
}

// Neumaier-compensated summation: the reference the vector sum is checked against.
double sum_scalar(std::size_t n, const double* x) {
  double s = 0.0;
  double c = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = s + x[i];
    if (std::fabs(s) >= std::fabs(x[i])) {
      c += (s - t) + x[i];
    } else {
      c += (x[i] - t) + s;
    }
    s = t;
  }
  return s + c;
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{"scalar", &risk_scores_scalar, &mixture_posterior_scalar,
                                 &weibull_inverse_scalar, &sum_scalar};
  return table;
}

}  // namespace mixcox::kernels
