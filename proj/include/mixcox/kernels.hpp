#pragma once

// Data-parallel inner loops. Each kernel has a scalar reference version and,
// on x86-64, an AVX2+FMA version; active() picks one at first use. Setting
// the environment variable MIXCOX_KERNELS=scalar forces the reference path.

#include <array>
#include <cassert>
#include <cstddef>
#include <span>

namespace mixcox::kernels {

struct KernelTable {
  const char* name;

  // eta[i] = beta . (c0[i], c1[i], c2[i]) + offset[i];  risk[i] = weight[i] * exp(eta[i])
  void (*risk_scores)(std::size_t n, const double* c0, const double* c1, const double* c2,
                      const double* offset, const double* weight, const double* beta,
                      double* eta, double* risk);

  // Two-component mixture per subject, on the log scale:
  //   a = logp1 + delta*eta1 - cumhaz*exp(eta1),  b = logp0 + delta*eta0 - cumhaz*exp(eta0)
  //   post[i] = e^a / (e^a + e^b),  loglik[i] = log(e^a + e^b)
  // logp1 / logp0 may be -inf (degenerate mixing weight), never both.
  void (*mixture_posterior)(std::size_t n, const double* logp1, const double* logp0,
                            const double* delta, const double* cumhaz, const double* eta1,
                            const double* eta0, double* post, double* loglik);

  // out[i] = scale * (-log(u[i]) * exp(-eta[i]))^(1/shape),  u in (0,1)
  void (*weibull_inverse)(std::size_t n, const double* u, const double* eta, double scale,
                          double shape, double* out);

  double (*sum)(std::size_t n, const double* x);
};

const KernelTable& scalar_table();
// nullptr when the AVX2 variant was not compiled in or the CPU lacks AVX2/FMA.
const KernelTable* avx2_table();
const KernelTable& active();

// Span front-ends over the active table.

inline void risk_scores(std::span<const double> c0, std::span<const double> c1,
                        std::span<const double> c2, std::span<const double> offset,
                        std::span<const double> weight, const std::array<double, 3>& beta,
                        std::span<double> eta, std::span<double> risk) {
  const std::size_t n = c0.size();
  assert(c1.size() == n && c2.size() == n && offset.size() == n && weight.size() == n);
  assert(eta.size() >= n && risk.size() >= n);
  active().risk_scores(n, c0.data(), c1.data(), c2.data(), offset.data(), weight.data(),
                       beta.data(), eta.data(), risk.data());
}

inline void mixture_posterior(std::span<const double> logp1, std::span<const double> logp0,
                              std::span<const double> delta, std::span<const double> cumhaz,
                              std::span<const double> eta1, std::span<const double> eta0,
                              std::span<double> post, std::span<double> loglik) {
  const std::size_t n = logp1.size();
  assert(logp0.size() == n && delta.size() == n && cumhaz.size() == n);
  assert(eta1.size() == n && eta0.size() == n && post.size() >= n && loglik.size() >= n);
  active().mixture_posterior(n, logp1.data(), logp0.data(), delta.data(), cumhaz.data(),
                             eta1.data(), eta0.data(), post.data(), loglik.data());
}

inline void weibull_inverse(std::span<const double> u, std::span<const double> eta, double scale,
                            double shape, std::span<double> out) {
  assert(eta.size() == u.size() && out.size() >= u.size());
  active().weibull_inverse(u.size(), u.data(), eta.data(), scale, shape, out.data());
}

inline double sum(std::span<const double> x) { return active().sum(x.size(), x.data()); }

}  // namespace mixcox::kernels
