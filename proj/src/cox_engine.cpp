#include "mixcox/cox_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "mixcox/error.hpp"
#include "mixcox/kernels.hpp"

namespace mixcox::cox {

CoxProblem::CoxProblem(std::span<const ExpandedRow> rows) {
  const std::size_t n = rows.size();
  for (std::size_t i = 0; i < n; ++i) {
    const ExpandedRow& r = rows[i];
    if (!(r.time > 0.0) || !std::isfinite(r.time)) {
      throw ValidationError("cox row " + std::to_string(i) + ": time must be positive");
    }
    if (!(r.weight >= 0.0 && r.weight <= 1.0)) {
      throw ValidationError("cox row " + std::to_string(i) + ": weight outside [0, 1]");
    }
    if (!std::isfinite(r.offset) || !std::isfinite(r.covariates[0]) ||
        !std::isfinite(r.covariates[1]) || !std::isfinite(r.covariates[2])) {
      throw ValidationError("cox row " + std::to_string(i) + ": non-finite covariate or offset");
    }
  }

  order_.resize(n);
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::stable_sort(order_.begin(), order_.end(),
                   [&](std::size_t a, std::size_t b) { return rows[a].time > rows[b].time; });

  time_.resize(n);
  event_.resize(n);
  weight_.resize(n);
  offset_.resize(n);
  for (auto& c : cov_) c.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const ExpandedRow& r = rows[order_[k]];
    time_[k] = r.time;
    event_[k] = r.event ? 1.0 : 0.0;
    weight_[k] = r.weight;
    offset_[k] = r.offset;
    for (int j = 0; j < 3; ++j) cov_[j][k] = r.covariates[j];
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (k + 1 == n || time_[k + 1] != time_[k]) group_end_.push_back(k + 1);
  }
  eta_.resize(n);
  risk_.resize(n);
}

void CoxProblem::set_weights(std::span<const double> weights) {
  if (weights.size() != size()) throw ValidationError("set_weights: size mismatch");
  for (std::size_t k = 0; k < size(); ++k) weight_[k] = weights[order_[k]];
}

void CoxProblem::set_offsets(std::span<const double> offsets) {
  if (offsets.size() != size()) throw ValidationError("set_offsets: size mismatch");
  for (std::size_t k = 0; k < size(); ++k) offset_[k] = offsets[order_[k]];
}

PartialLikelihood CoxProblem::evaluate(const Coefficients& beta) const {
  kernels::risk_scores(cov_[0], cov_[1], cov_[2], offset_, weight_, beta, eta_, risk_);

  PartialLikelihood out;
  double s0 = 0.0;
  Eigen::Vector3d s1 = Eigen::Vector3d::Zero();
  Eigen::Matrix3d s2 = Eigen::Matrix3d::Zero();
  bool any_event = false;

  std::size_t begin = 0;
  for (std::size_t end : group_end_) {
    double dw = 0.0;
    double weta = 0.0;
    Eigen::Vector3d wc = Eigen::Vector3d::Zero();
    for (std::size_t k = begin; k < end; ++k) {
      const double r = risk_[k];
      const Eigen::Vector3d c(cov_[0][k], cov_[1][k], cov_[2][k]);
      s0 += r;
      s1 += r * c;
      s2.noalias() += r * c * c.transpose();
      if (event_[k] != 0.0 && weight_[k] > 0.0) {
        dw += weight_[k];
        weta += weight_[k] * eta_[k];
        wc += weight_[k] * c;
      }
    }
    if (dw > 0.0) {
      if (!(s0 > 0.0)) {
        throw DegenerateDataError("empty weighted risk set at an event time");
      }
      any_event = true;
      const Eigen::Vector3d mean = s1 / s0;
      out.value += weta - dw * std::log(s0);
      out.gradient += wc - dw * mean;
      out.hessian -= dw * (s2 / s0 - mean * mean.transpose());
    }
    begin = end;
  }
  if (!any_event) throw DegenerateDataError("no event with positive weight");
  return out;
}

namespace {

double max_abs(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

}  // namespace

CoxFit CoxProblem::fit(const Coefficients& init, const FreeMask& mask,
                       const NewtonOptions& options) const {
  std::vector<int> free;
  for (int j = 0; j < 3; ++j) {
    if (mask[j]) free.push_back(j);
  }
  const auto nf = static_cast<Eigen::Index>(free.size());

  CoxFit result;
  result.beta = init;
  PartialLikelihood cur = evaluate(result.beta);
  result.loglik = cur.value;
  if (nf == 0) {
    result.converged = true;
    return result;
  }

  auto free_gradient = [&](const PartialLikelihood& pl) {
    Eigen::VectorXd g(nf);
    for (Eigen::Index a = 0; a < nf; ++a) g[a] = pl.gradient[free[a]];
    return g;
  };

  for (int it = 1; it <= options.max_iter; ++it) {
    result.iterations = it;
    const Eigen::VectorXd g = free_gradient(cur);
    Eigen::MatrixXd info(nf, nf);
    for (Eigen::Index a = 0; a < nf; ++a) {
      for (Eigen::Index b = 0; b < nf; ++b) info(a, b) = -cur.hessian(free[a], free[b]);
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        (ldlt.vectorD().array() <= 0.0).any()) {
      throw DegenerateDataError("weighted Cox information matrix is singular");
    }
    Eigen::VectorXd step = ldlt.solve(g);
    result.gradient_norm = max_abs(g);

    if (result.gradient_norm < options.gradient_tol) {
      if (max_abs(step) > 1e-2) {
        throw SeparationError("monotone partial likelihood: coefficients diverge");
      }
      result.converged = true;
      break;
    }

    // Close to the optimum the gain of a Newton step drops below the
    // rounding error of the sum; allow for that instead of halving to zero.
    const double slack = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::fabs(cur.value));
    const bool tiny_step = max_abs(step) < 1e-10;
    Coefficients trial = result.beta;
    PartialLikelihood next;
    bool accepted = false;
    for (int halving = 0; halving <= options.max_halvings; ++halving) {
      for (Eigen::Index a = 0; a < nf; ++a) trial[free[a]] = result.beta[free[a]] + step[a];
      next = evaluate(trial);
      if (std::isfinite(next.value) && next.value >= cur.value - slack) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // No representable ascent left along the Newton direction.
      result.converged = result.gradient_norm < 1e-6;
      break;
    }

    const double change = next.value - cur.value;
    result.beta = trial;
    cur = next;
    result.loglik = cur.value;

    for (int j : free) {
      if (std::fabs(result.beta[j]) > options.divergence_bound) {
        throw SeparationError("monotone partial likelihood: |beta| exceeded " +
                              std::to_string(options.divergence_bound));
      }
    }
    if (tiny_step) {
      result.gradient_norm = max_abs(free_gradient(cur));
      result.converged = true;
      break;
    }
    if (change <= options.relative_tol * std::max(1.0, std::fabs(cur.value)) &&
        max_abs(step) < 1e-6) {
      result.gradient_norm = max_abs(free_gradient(cur));
      result.converged = true;
      break;
    }
  }
  if (!result.converged) result.gradient_norm = max_abs(free_gradient(cur));
  return result;
}

BaselineHazard CoxProblem::breslow(const Coefficients& beta) const {
  kernels::risk_scores(cov_[0], cov_[1], cov_[2], offset_, weight_, beta, eta_, risk_);

  std::vector<double> times;
  std::vector<double> events;
  std::vector<double> risk_sums;
  double s0 = 0.0;
  std::size_t begin = 0;
  for (std::size_t end : group_end_) {
    double d = 0.0;
    for (std::size_t k = begin; k < end; ++k) {
      s0 += risk_[k];
      if (event_[k] != 0.0) d += weight_[k];
    }
    if (d > 0.0) {
      if (!(s0 > 0.0)) throw DegenerateDataError("empty weighted risk set at an event time");
      times.push_back(time_[begin]);
      events.push_back(d);
      risk_sums.push_back(s0);
    }
    begin = end;
  }
  if (times.empty()) throw DegenerateDataError("no event with positive weight");

  std::reverse(times.begin(), times.end());
  std::reverse(events.begin(), events.end());
  std::reverse(risk_sums.begin(), risk_sums.end());
  std::vector<double> increments(times.size());
  double prev = 0.0;
  for (std::size_t j = 0; j < times.size(); ++j) {
    increments[j] = events[j] / ((times[j] - prev) * risk_sums[j]);
    prev = times[j];
  }
  return BaselineHazard(std::move(times), std::move(increments));
}

PartialLikelihood weighted_partial_loglik(std::span<const ExpandedRow> rows,
                                          const Coefficients& beta) {
  return CoxProblem(rows).evaluate(beta);
}

CoxFit fit_weighted_cox(std::span<const ExpandedRow> rows, const Coefficients& init,
                        const FreeMask& mask, const NewtonOptions& options) {
  return CoxProblem(rows).fit(init, mask, options);
}

BaselineHazard breslow_baseline(std::span<const ExpandedRow> rows, const Coefficients& beta) {
  return CoxProblem(rows).breslow(beta);
}

}  // namespace mixcox::cox
