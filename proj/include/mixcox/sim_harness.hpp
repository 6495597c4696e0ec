#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mixcox/domain_model.hpp"
#include "mixcox/inference.hpp"

namespace mixcox::sim {

struct ScenarioConfig {
  std::string label;
  EffectParams theta_true;
  double pi_true = 0.3;
  double sens = 1.0;
  double spec = 1.0;
  int n_per_arm = 100;
  int replications = 500;
  std::uint64_t base_seed = 20240101;
  double alpha = 0.05;
  bool prevalence_known = false;
  double censor_low = 5.0;
  double censor_high = 25.0;

  void validate() const;
};

// Counter-based stream: draw k is a SplitMix64 finalisation of
// seed + k * golden-gamma, so a replication's draws depend only on its seed.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed) {}
  static RngStream for_replication(std::uint64_t base_seed, std::uint64_t index);

  std::uint64_t next();
  // Uniform on the open interval (0, 1).
  double uniform();
  bool bernoulli(double p) { return uniform() < p; }
  std::uint64_t below(std::uint64_t bound);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

// Weibull baseline with H0(t) = (0.1 t)^0.8.
inline constexpr double kWeibullScale = 10.0;
inline constexpr double kWeibullShape = 0.8;

// Exact inverse of S(t) = exp(-(0.1 t)^0.8 * e^eta) at S = u.
double draw_survival_time(double u, double eta);

struct SimulatedTrial {
  Dataset data;
  std::vector<bool> true_status;  // kept apart from the Dataset on purpose
};

SimulatedTrial simulate_trial(const ScenarioConfig& config, RngStream& rng);
Dataset generate_trial(const ScenarioConfig& config, RngStream& rng);

struct ReplicationResult {
  bool ok = false;
  EffectParams estimate;
  bool covered = false;   // simultaneous intervals cover both true contrasts
  bool rejected = false;  // LR test of gamma = 0 at level alpha
  double lr_lambda = 0.0;
  std::string error;
};

ReplicationResult run_replication(const ScenarioConfig& config, std::uint64_t index);

struct ScenarioSummary {
  ScenarioConfig config;
  std::array<double, 3> bias{};  // mean(estimate - truth), natural scale
  std::array<double, 3> sd{};    // NaN with fewer than two completed replications
  double coverage_simult = 0.0;
  double reject_rate = 0.0;
  int completed = 0;
  int failures = 0;
};

// Replications are distributed over `threads` workers; results are combined
// in replication order, so the summary does not depend on the thread count.
ScenarioSummary run_scenario(const ScenarioConfig& config, int threads = 1);

ScenarioSummary summarize(const ScenarioConfig& config,
                          const std::vector<ReplicationResult>& results);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string to_delimited(char delim = ',') const;
  std::string to_text() const;
};

// Columns: N, sens, spec, bias x 100 (beta1, beta2, gamma), SD (beta1,
// beta2, gamma), simultaneous coverage, rejection rate.
Table emit_table(const std::vector<ScenarioSummary>& summaries);
std::string summaries_to_json(const std::vector<ScenarioSummary>& summaries);

}  // namespace mixcox::sim
