#include "mixcox/sim_harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "mixcox/em_estimator.hpp"
#include "mixcox/error.hpp"
#include "mixcox/kernels.hpp"

namespace mixcox::sim {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string fixed4(double v) {
  if (!std::isfinite(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string compact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

void ScenarioConfig::validate() const {
  if (replications < 1) throw ValidationError("scenario: replications must be >= 1");
  if (n_per_arm < 1) throw ValidationError("scenario: n_per_arm must be >= 1");
  if (!(censor_low > 0.0 && censor_low < censor_high)) {
    throw ValidationError("scenario: need 0 < censor_low < censor_high");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("scenario: alpha must lie in (0, 1)");
  if (!theta_true.finite()) throw ValidationError("scenario: theta must be finite");
  // Throws on invalid accuracy or prevalence.
  DiagnosticModel(sens, spec, pi_true, prevalence_known);
}

RngStream RngStream::for_replication(std::uint64_t base_seed, std::uint64_t index) {
  return RngStream(mix64(mix64(base_seed) ^ (index * kGolden + 0xD1B54A32D192ED03ULL)));
}

std::uint64_t RngStream::next() {
  ++counter_;
  return mix64(seed_ + counter_ * kGolden);
}

double RngStream::uniform() {
  return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t RngStream::below(std::uint64_t bound) {
  // Lemire's multiply-shift with rejection.
  while (true) {
    const unsigned __int128 m = static_cast<unsigned __int128>(next()) * bound;
    const auto low = static_cast<std::uint64_t>(m);
    if (low >= (-bound) % bound) return static_cast<std::uint64_t>(m >> 64);
  }
}

double draw_survival_time(double u, double eta) {
  if (!(u > 0.0 && u < 1.0)) throw ValidationError("draw_survival_time: u must lie in (0, 1)");
  return kWeibullScale * std::pow(-std::log(u) * std::exp(-eta), 1.0 / kWeibullShape);
}

SimulatedTrial simulate_trial(const ScenarioConfig& config, RngStream& rng) {
  const std::size_t n = 2 * static_cast<std::size_t>(config.n_per_arm);
  std::vector<bool> z(n);
  std::vector<TestResult> v(n);
  std::vector<std::size_t> pos_idx, neg_idx;
  for (std::size_t i = 0; i < n; ++i) {
    z[i] = rng.bernoulli(config.pi_true);
    const bool tests_positive = z[i] ? rng.bernoulli(config.sens) : !rng.bernoulli(config.spec);
    v[i] = tests_positive ? TestResult::positive : TestResult::negative;
    (tests_positive ? pos_idx : neg_idx).push_back(i);
  }

  // 1:1 within each observed stratum; an odd positive stratum starts the
  // negative stratum on the other arm so that arm totals stay equal.
  std::vector<bool> x(n);
  auto assign = [&](const std::vector<std::size_t>& idx, bool first_arm) {
    std::vector<bool> labels(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) labels[k] = (k % 2 == 0) ? first_arm : !first_arm;
    for (std::size_t k = labels.size(); k > 1; --k) {
      const std::size_t j = rng.below(k);
      const bool tmp = labels[k - 1];
      labels[k - 1] = labels[j];
      labels[j] = tmp;
    }
    for (std::size_t k = 0; k < idx.size(); ++k) x[idx[k]] = labels[k];
  };
  assign(pos_idx, false);
  assign(neg_idx, pos_idx.size() % 2 == 1);

  std::vector<double> eta(n), u_event(n), t_event(n);
  const EffectParams& th = config.theta_true;
  for (std::size_t i = 0; i < n; ++i) {
    eta[i] = linear_predictor(th, x[i], z[i]);
    u_event[i] = rng.uniform();
  }
  kernels::weibull_inverse(u_event, eta, kWeibullScale, kWeibullShape, t_event);

  std::vector<Subject> subjects(n);
  const double width = config.censor_high - config.censor_low;
  for (std::size_t i = 0; i < n; ++i) {
    const double c = config.censor_low + width * rng.uniform();
    subjects[i] = {std::min(t_event[i], c), t_event[i] <= c, x[i], v[i]};
  }
  return {Dataset(std::move(subjects)), std::move(z)};
}

Dataset generate_trial(const ScenarioConfig& config, RngStream& rng) {
  return simulate_trial(config, rng).data;
}

ReplicationResult run_replication(const ScenarioConfig& config, std::uint64_t index) {
  ReplicationResult r;
  try {
    RngStream rng = RngStream::for_replication(config.base_seed, index);
    const Dataset data = generate_trial(config, rng);
    const DiagnosticModel diag(config.sens, config.spec,
                               config.prevalence_known ? config.pi_true : 0.5,
                               config.prevalence_known);
    inference::InferenceConfig icfg;
    icfg.alpha = config.alpha;
    const em::FitResult mle = em::fit(data, diag, icfg.em);
    if (!mle.converged) {
      r.error = "EM did not converge";
      return r;
    }
    const inference::ProfileContext ctx{data, diag, mle, icfg};
    const inference::LrTest lr = inference::lr_test(ctx, inference::Param::gamma, 0.0);
    const std::array<Coef, 2> pair{Coef::beta1, Coef::gamma};
    const Eigen::Matrix2d info = inference::fd_profile_information(ctx, pair);
    const inference::SimultaneousReport sim =
        inference::simultaneous_cis(mle.theta_hat, inference::subgroup_cov(info), config.alpha);

    const EffectParams& t = config.theta_true;
    r.estimate = mle.theta_hat;
    r.lr_lambda = lr.lambda;
    r.rejected = lr.p_value < config.alpha;
    r.covered = sim.interval_pos.contains(t.beta1 + t.gamma) && sim.interval_neg.contains(t.beta1);
    r.ok = true;
  } catch (const std::exception& e) {
    r.ok = false;
    r.error = e.what();
  }
  return r;
}

ScenarioSummary summarize(const ScenarioConfig& config,
                          const std::vector<ReplicationResult>& results) {
  ScenarioSummary s;
  s.config = config;
  std::array<double, 3> sum{}, sumsq{};
  int covered = 0;
  int rejected = 0;
  for (const ReplicationResult& r : results) {
    if (!r.ok) {
      ++s.failures;
      continue;
    }
    ++s.completed;
    for (int k = 0; k < 3; ++k) {
      const double d = r.estimate[static_cast<Coef>(k)] - config.theta_true[static_cast<Coef>(k)];
      sum[k] += d;
      sumsq[k] += d * d;
    }
    covered += r.covered ? 1 : 0;
    rejected += r.rejected ? 1 : 0;
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double m = s.completed;
  for (int k = 0; k < 3; ++k) {
    s.bias[k] = s.completed > 0 ? sum[k] / m : nan;
    s.sd[k] = s.completed > 1 ? std::sqrt(std::max(0.0, (sumsq[k] - sum[k] * sum[k] / m) / (m - 1.0)))
                              : nan;
  }
  s.coverage_simult = s.completed > 0 ? covered / m : nan;
  s.reject_rate = s.completed > 0 ? rejected / m : nan;
  return s;
}

ScenarioSummary run_scenario(const ScenarioConfig& config, int threads) {
  config.validate();
  const auto reps = static_cast<std::size_t>(config.replications);
  std::vector<ReplicationResult> results(reps);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < reps; i = next++) results[i] = run_replication(config, i);
  };
  const int nthreads = std::max(1, std::min<int>(threads, static_cast<int>(reps)));
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int k = 0; k < nthreads; ++k) pool.emplace_back(worker);
  }
  return summarize(config, results);
}

std::string Table::to_delimited(char delim) const {
  std::ostringstream os;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (k) os << delim;
      os << cells[k];
    }
    os << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return os.str();
}

std::string Table::to_text() const {
  std::vector<std::size_t> width(header.size());
  for (std::size_t k = 0; k < header.size(); ++k) width[k] = header[k].size();
  for (const auto& r : rows) {
    for (std::size_t k = 0; k < r.size() && k < width.size(); ++k) width[k] = std::max(width[k], r[k].size());
  }
  std::ostringstream os;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (k) os << "  ";
      os << std::string(width[k] - cells[k].size(), ' ') << cells[k];
    }
    os << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return os.str();
}

Table emit_table(const std::vector<ScenarioSummary>& summaries) {
  if (summaries.empty()) throw ValidationError("emit_table: no summaries");
  Table t;
  t.header = {"N",           "sens",     "spec",     "bias_beta1_x100", "bias_beta2_x100",
              "bias_gamma_x100", "sd_beta1", "sd_beta2", "sd_gamma",        "coverage_simult",
              "reject_rate"};
  for (const ScenarioSummary& s : summaries) {
    t.rows.push_back({std::to_string(s.config.n_per_arm), compact(s.config.sens),
                      compact(s.config.spec), fixed4(100.0 * s.bias[0]), fixed4(100.0 * s.bias[1]),
                      fixed4(100.0 * s.bias[2]), fixed4(s.sd[0]), fixed4(s.sd[1]), fixed4(s.sd[2]),
                      fixed4(s.coverage_simult), fixed4(s.reject_rate)});
  }
  return t;
}

std::string summaries_to_json(const std::vector<ScenarioSummary>& summaries) {
  using nlohmann::json;
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json out = json::array();
  for (const ScenarioSummary& s : summaries) {
    const ScenarioConfig& c = s.config;
    json j;
    j["label"] = c.label;
    j["theta"] = {c.theta_true.beta1, c.theta_true.beta2, c.theta_true.gamma};
    j["pi"] = c.pi_true;
    j["sens"] = c.sens;
    j["spec"] = c.spec;
    j["n_per_arm"] = c.n_per_arm;
    j["reps"] = c.replications;
    j["seed"] = c.base_seed;
    j["alpha"] = c.alpha;
    j["prevalence_known"] = c.prevalence_known;
    j["bias"] = {num(s.bias[0]), num(s.bias[1]), num(s.bias[2])};
    j["sd"] = {num(s.sd[0]), num(s.sd[1]), num(s.sd[2])};
    j["coverage_simult"] = num(s.coverage_simult);
    j["reject_rate"] = num(s.reject_rate);
    j["completed"] = s.completed;
    j["failures"] = s.failures;
    out.push_back(std::move(j));
  }
  return out.dump(2) + "\n";
}

}  // namespace mixcox::sim
