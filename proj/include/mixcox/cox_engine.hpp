#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mixcox/domain_model.hpp"

namespace mixcox::cox {

using Coefficients = std::array<double, 3>;
// Which of the three covariates (x, z, x*z) are estimated; the others enter
// only through the per-row offset.
using FreeMask = std::array<bool, 3>;

inline constexpr FreeMask kAllFree{true, true, true};

struct ExpandedRow {
  double time = 0.0;
  bool event = false;
  double weight = 1.0;
  std::array<double, 3> covariates{};
  double offset = 0.0;
};

struct PartialLikelihood {
  double value = 0.0;
  Eigen::Vector3d gradient = Eigen::Vector3d::Zero();
  Eigen::Matrix3d hessian = Eigen::Matrix3d::Zero();
};

struct NewtonOptions {
  int max_iter = 50;
  int max_halvings = 30;
  double gradient_tol = 1e-10;
  double relative_tol = 1e-12;
  double divergence_bound = 50.0;
};

struct CoxFit {
  Coefficients beta{};
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;  // max |component| over the free coordinates
};

// A weighted Cox problem with its risk-set layout computed once. Weights and
// offsets can be replaced in place without re-sorting, which is how the EM
// loop reuses one layout across iterations.
//
// Evaluation uses internal scratch buffers: one instance must not be used
// from several threads at once. Distinct instances are independent.
class CoxProblem {
 public:
  explicit CoxProblem(std::span<const ExpandedRow> rows);

  std::size_t size() const { return time_.size(); }

  // Both take values in the original row order.
  void set_weights(std::span<const double> weights);
  void set_offsets(std::span<const double> offsets);

  PartialLikelihood evaluate(const Coefficients& beta) const;
  CoxFit fit(const Coefficients& init, const FreeMask& mask,
             const NewtonOptions& options = {}) const;
  BaselineHazard breslow(const Coefficients& beta) const;

 private:
  // Row storage, sorted by time descending (ties contiguous).
  std::vector<double> time_;
  std::vector<double> event_;
  std::vector<double> weight_;
  std::vector<double> offset_;
  std::array<std::vector<double>, 3> cov_;
  std::vector<std::size_t> order_;       // sorted position -> original index
  std::vector<std::size_t> group_end_;   // exclusive end of each tied-time group

  mutable std::vector<double> eta_;
  mutable std::vector<double> risk_;
};

PartialLikelihood weighted_partial_loglik(std::span<const ExpandedRow> rows,
                                          const Coefficients& beta);

CoxFit fit_weighted_cox(std::span<const ExpandedRow> rows, const Coefficients& init,
                        const FreeMask& mask = kAllFree, const NewtonOptions& options = {});

BaselineHazard breslow_baseline(std::span<const ExpandedRow> rows, const Coefficients& beta);

inline double cumulative_hazard(const BaselineHazard& h0, double t) { return h0.cumulative(t); }

}  // namespace mixcox::cox
