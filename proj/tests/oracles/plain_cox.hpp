#pragma once

// Straightforward unweighted Cox regression with Breslow ties: risk sets are
// rebuilt by brute force for every event, and Newton uses Gaussian
// elimination. Deliberately shares nothing with the library's engine.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace oracle {

struct CoxRow {
  double time;
  bool event;
  std::vector<double> x;
};

struct CoxValue {
  double loglik = 0.0;
  std::vector<double> grad;
  std::vector<std::vector<double>> info;  // negative Hessian
};

inline CoxValue plain_cox_value(const std::vector<CoxRow>& rows, const std::vector<double>& beta) {
  const std::size_t p = beta.size();
  CoxValue v;
  v.grad.assign(p, 0.0);
  v.info.assign(p, std::vector<double>(p, 0.0));
  for (const CoxRow& ri : rows) {
    if (!ri.event) continue;
    double s0 = 0.0;
    std::vector<double> s1(p, 0.0);
    std::vector<std::vector<double>> s2(p, std::vector<double>(p, 0.0));
    for (const CoxRow& rl : rows) {
      if (rl.time < ri.time) continue;
      double eta = 0.0;
      for (std::size_t k = 0; k < p; ++k) eta += beta[k] * rl.x[k];
      const double r = std::exp(eta);
      s0 += r;
      for (std::size_t a = 0; a < p; ++a) {
        s1[a] += r * rl.x[a];
        for (std::size_t b = 0; b < p; ++b) s2[a][b] += r * rl.x[a] * rl.x[b];
      }
    }
    double eta_i = 0.0;
    for (std::size_t k = 0; k < p; ++k) eta_i += beta[k] * ri.x[k];
    v.loglik += eta_i - std::log(s0);
    for (std::size_t a = 0; a < p; ++a) {
      v.grad[a] += ri.x[a] - s1[a] / s0;
      for (std::size_t b = 0; b < p; ++b) {
        v.info[a][b] += s2[a][b] / s0 - s1[a] * s1[b] / (s0 * s0);
      }
    }
  }
  return v;
}

inline std::vector<double> solve(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::fabs(a[r][c]) > std::fabs(a[piv][c])) piv = r;
    }
    if (std::fabs(a[piv][c]) < 1e-300) throw std::runtime_error("oracle: singular system");
    std::swap(a[c], a[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t c = n; c-- > 0;) {
    double s = b[c];
    for (std::size_t k = c + 1; k < n; ++k) s -= a[c][k] * x[k];
    x[c] = s / a[c][c];
  }
  return x;
}

inline std::vector<double> plain_cox_fit(const std::vector<CoxRow>& rows, std::size_t p) {
  std::vector<double> beta(p, 0.0);
  for (int it = 0; it < 200; ++it) {
    const CoxValue v = plain_cox_value(rows, beta);
    std::vector<double> step = solve(v.info, v.grad);
    double t = 1.0;
    std::vector<double> next(p);
    for (int h = 0; h < 60; ++h) {
      for (std::size_t k = 0; k < p; ++k) next[k] = beta[k] + t * step[k];
      if (plain_cox_value(rows, next).loglik >= v.loglik - 1e-12) break;
      t *= 0.5;
    }
    double move = 0.0;
    for (std::size_t k = 0; k < p; ++k) move = std::max(move, std::fabs(next[k] - beta[k]));
    beta = next;
    if (move < 1e-13) break;
  }
  return beta;
}

// Breslow cumulative hazard at each distinct event time, ascending.
inline std::vector<std::pair<double, double>> plain_breslow(const std::vector<CoxRow>& rows,
                                                            const std::vector<double>& beta) {
  std::vector<double> times;
  for (const CoxRow& r : rows) {
    if (r.event) times.push_back(r.time);
  }
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  std::vector<std::pair<double, double>> out;
  double acc = 0.0;
  for (double t : times) {
    double d = 0.0;
    double s0 = 0.0;
    for (const CoxRow& r : rows) {
      if (r.event && r.time == t) d += 1.0;
      if (r.time >= t) {
        double eta = 0.0;
        for (std::size_t k = 0; k < beta.size(); ++k) eta += beta[k] * r.x[k];
        s0 += std::exp(eta);
      }
    }
    acc += d / s0;
    out.emplace_back(t, acc);
  }
  return out;
}

}  // namespace oracle
