#include <immintrin.h>

#include <algorithm>
#include <cstdint>

#include "mixcox/kernels.hpp"

namespace mixcox::kernels {
namespace {

constexpr std::size_t kLanes = 4;

inline __m256d set1(double v) { return _mm256_set1_pd(v); }

// exp(x) via Cephes range reduction and rational approximation. Inputs below
// -708.39 flush to zero; inputs above 709 saturate at exp(709).
inline __m256d exp_pd(__m256d x) {
  const __m256d underflow = _mm256_cmp_pd(x, set1(-708.39), _CMP_LT_OQ);
  x = _mm256_max_pd(_mm256_min_pd(x, set1(709.0)), set1(-708.39));

  const __m256d fx = _mm256_floor_pd(_mm256_fmadd_pd(x, set1(1.4426950408889634073599), set1(0.5)));
  __m256d r = _mm256_fnmadd_pd(fx, set1(6.93145751953125E-1), x);
  r = _mm256_fnmadd_pd(fx, set1(1.42860682030941723212E-6), r);

  const __m256d rr = _mm256_mul_pd(r, r);
  __m256d p = _mm256_fmadd_pd(set1(1.26177193074810590878E-4), rr, set1(3.02994407707441961300E-2));
  p = _mm256_fmadd_pd(p, rr, set1(9.99999999999999999910E-1));
  p = _mm256_mul_pd(p, r);
  __m256d q = _mm256_fmadd_pd(set1(3.00198505138664455042E-6), rr, set1(2.52448340349684104192E-3));
  q = _mm256_fmadd_pd(q, rr, set1(2.27265548208155028766E-1));
  q = _mm256_fmadd_pd(q, rr, set1(2.00000000000000000009E0));
  __m256d e = _mm256_div_pd(p, _mm256_sub_pd(q, p));
  e = _mm256_fmadd_pd(set1(2.0), e, set1(1.0));

  const __m256i n = _mm256_cvtepi32_epi64(_mm256_cvtpd_epi32(fx));
  const __m256i bits = _mm256_slli_epi64(_mm256_add_epi64(n, _mm256_set1_epi64x(1023)), 52);
  e = _mm256_mul_pd(e, _mm256_castsi256_pd(bits));
  return _mm256_blendv_pd(e, _mm256_setzero_pd(), underflow);
}

// Natural log for positive normal inputs (Cephes decomposition).
inline __m256d log_pd(__m256d x) {
  const __m256i bits = _mm256_castpd_si256(x);
  const __m256i exp_bits = _mm256_srli_epi64(bits, 52);
  const __m256d magic = _mm256_castsi256_pd(_mm256_set1_epi64x(0x4330000000000000LL));
  __m256d e = _mm256_sub_pd(_mm256_castsi256_pd(_mm256_or_si256(exp_bits, _mm256_castpd_si256(magic))),
                            magic);
  e = _mm256_sub_pd(e, set1(1022.0));
  __m256d m = _mm256_castsi256_pd(_mm256_or_si256(
      _mm256_and_si256(bits, _mm256_set1_epi64x(0x000FFFFFFFFFFFFFLL)),
      _mm256_set1_epi64x(0x3FE0000000000000LL)));

  const __m256d small = _mm256_cmp_pd(m, set1(0.70710678118654752440), _CMP_LT_OQ);
  e = _mm256_sub_pd(e, _mm256_and_pd(small, set1(1.0)));
  m = _mm256_sub_pd(_mm256_add_pd(m, _mm256_and_pd(small, m)), set1(1.0));

  const __m256d z = _mm256_mul_pd(m, m);
  __m256d p = _mm256_fmadd_pd(set1(1.01875663804580931796E-4), m, set1(4.97494994976747001425E-1));
  p = _mm256_fmadd_pd(p, m, set1(4.70579119878881725854E0));
  p = _mm256_fmadd_pd(p, m, set1(1.44989225341610930846E1));
  p = _mm256_fmadd_pd(p, m, set1(1.79368678507819816313E1));
  p = _mm256_fmadd_pd(p, m, set1(7.70838733755885391666E0));
  __m256d q = _mm256_add_pd(m, set1(1.12873587189167450590E1));
  q = _mm256_fmadd_pd(q, m, set1(4.52279145837532221105E1));
  q = _mm256_fmadd_pd(q, m, set1(8.29875266912776603211E1));
  q = _mm256_fmadd_pd(q, m, set1(7.11544750618953185690E1));
  q = _mm256_fmadd_pd(q, m, set1(2.31251620126765340583E1));

  __m256d y = _mm256_mul_pd(m, _mm256_div_pd(_mm256_mul_pd(z, p), q));
  y = _mm256_fnmadd_pd(e, set1(2.121944400546905827679e-4), y);
  y = _mm256_fnmadd_pd(set1(0.5), z, y);
  __m256d res = _mm256_add_pd(m, y);
  return _mm256_fmadd_pd(e, set1(0.693359375), res);
}

// Copies a partial block into a zero-padded lane buffer so tails run
// through the same vector code as full blocks.
struct Tail {
  alignas(32) double v[kLanes];
  Tail(const double* src, std::size_t count, double fill) {
    std::fill(v, v + kLanes, fill);
    std::copy(src, src + count, v);
  }
  __m256d load() const { return _mm256_load_pd(v); }
};

inline void store_partial(double* dst, __m256d value, std::size_t count) {
  alignas(32) double buf[kLanes];
  _mm256_store_pd(buf, value);
  std::copy(buf, buf + count, dst);
}

void risk_scores_avx2(std::size_t n, const double* c0, const double* c1, const double* c2,
                      const double* offset, const double* weight, const double* beta, double* eta,
                      double* risk) {
  const __m256d b0 = set1(beta[0]);
  const __m256d b1 = set1(beta[1]);
  const __m256d b2 = set1(beta[2]);
  auto block = [&](__m256d v0, __m256d v1, __m256d v2, __m256d off, __m256d w, __m256d& e_out,
                   __m256d& r_out) {
    __m256d e = _mm256_fmadd_pd(b0, v0, off);
    e = _mm256_fmadd_pd(b1, v1, e);
    e = _mm256_fmadd_pd(b2, v2, e);
    e_out = e;
    r_out = _mm256_mul_pd(w, exp_pd(e));
  };
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    __m256d e, r;
    block(_mm256_loadu_pd(c0 + i), _mm256_loadu_pd(c1 + i), _mm256_loadu_pd(c2 + i),
          _mm256_loadu_pd(offset + i), _mm256_loadu_pd(weight + i), e, r);
    _mm256_storeu_pd(eta + i, e);
    _mm256_storeu_pd(risk + i, r);
  }
  if (i < n) {
    const std::size_t k = n - i;
    __m256d e, r;
    block(Tail(c0 + i, k, 0.0).load(), Tail(c1 + i, k, 0.0).load(), Tail(c2 + i, k, 0.0).load(),
          Tail(offset + i, k, 0.0).load(), Tail(weight + i, k, 0.0).load(), e, r);
    store_partial(eta + i, e, k);
    store_partial(risk + i, r, k);
  }
}

void mixture_posterior_avx2(std::size_t n, const double* logp1, const double* logp0,
                            const double* delta, const double* cumhaz, const double* eta1,
                            const double* eta0, double* post, double* loglik) {
  const __m256d one = set1(1.0);
  auto block = [&](__m256d lp1, __m256d lp0, __m256d d, __m256d h, __m256d e1, __m256d e0,
                   __m256d& post_out, __m256d& ll_out) {
    const __m256d a = _mm256_fnmadd_pd(h, exp_pd(e1), _mm256_fmadd_pd(d, e1, lp1));
    const __m256d b = _mm256_fnmadd_pd(h, exp_pd(e0), _mm256_fmadd_pd(d, e0, lp0));
    const __m256d hi = _mm256_max_pd(a, b);
    const __m256d ex = exp_pd(_mm256_sub_pd(_mm256_min_pd(a, b), hi));
    const __m256d denom = _mm256_add_pd(one, ex);
    const __m256d a_wins = _mm256_cmp_pd(a, b, _CMP_GE_OQ);
    post_out = _mm256_div_pd(_mm256_blendv_pd(ex, one, a_wins), denom);
    ll_out = _mm256_add_pd(hi, log_pd(denom));
  };
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    __m256d p, l;
    block(_mm256_loadu_pd(logp1 + i), _mm256_loadu_pd(logp0 + i), _mm256_loadu_pd(delta + i),
          _mm256_loadu_pd(cumhaz + i), _mm256_loadu_pd(eta1 + i), _mm256_loadu_pd(eta0 + i), p, l);
    _mm256_storeu_pd(post + i, p);
    _mm256_storeu_pd(loglik + i, l);
  }
  if (i < n) {
    const std::size_t k = n - i;
    __m256d p, l;
    block(Tail(logp1 + i, k, 0.0).load(), Tail(logp0 + i, k, 0.0).load(),
          Tail(delta + i, k, 0.0).load(), Tail(cumhaz + i, k, 0.0).load(),
          Tail(eta1 + i, k, 0.0).load(), Tail(eta0 + i, k, 0.0).load(), p, l);
    store_partial(post + i, p, k);
    store_partial(loglik + i, l, k);
  }
}

void weibull_inverse_avx2(std::size_t n, const double* u, const double* eta, double scale,
                          double shape, double* out) {
  const __m256d inv_shape = set1(1.0 / shape);
  const __m256d sc = set1(scale);
  const __m256d neg_one = set1(-1.0);
  auto block = [&](__m256d uu, __m256d e) {
    // log(-log u) - eta, then scale * exp(./shape)
    const __m256d ll = log_pd(_mm256_mul_pd(neg_one, log_pd(uu)));
    return _mm256_mul_pd(sc, exp_pd(_mm256_mul_pd(_mm256_sub_pd(ll, e), inv_shape)));
  };
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    _mm256_storeu_pd(out + i, block(_mm256_loadu_pd(u + i), _mm256_loadu_pd(eta + i)));
  }
  if (i < n) {
    const std::size_t k = n - i;
    store_partial(out + i, block(Tail(u + i, k, 0.5).load(), Tail(eta + i, k, 0.0).load()), k);
  }
}

double sum_avx2(std::size_t n, const double* x) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 2 * kLanes <= n; i += 2 * kLanes) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
    acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(x + i + kLanes));
  }
  if (i + kLanes <= n) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
    i += kLanes;
  }
  alignas(32) double lanes[kLanes];
  _mm256_store_pd(lanes, _mm256_add_pd(acc0, acc1));
  double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) s += x[i];
  return s;
}

}  // namespace

const KernelTable& avx2_table_unchecked() {
  static const KernelTable table{"avx2", &risk_scores_avx2, &mixture_posterior_avx2,
                                 &weibull_inverse_avx2, &sum_avx2};
  return table;
}

}  // namespace mixcox::kernels
