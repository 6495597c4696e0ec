#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mixcox/domain_model.hpp"
#include "mixcox/inference.hpp"
#include "mixcox/sim_harness.hpp"

namespace mixcox::io {

// Exit codes of the command-line tool.
enum class ExitCode : int { ok = 0, validation = 1, convergence = 2, io = 3 };

// Delimited text with header time,event,treatment,biomarker_test. The
// biomarker_test column takes 0, 1, NA (any case) or an empty field.
// Errors name the 1-based line and the column.
Dataset parse_dataset(std::istream& in, std::string_view source = "<input>");
Dataset read_dataset(const std::filesystem::path& path);

// Times are written with the shortest representation that round-trips.
void write_dataset(std::ostream& out, const Dataset& data);
void save_dataset(const std::filesystem::path& path, const Dataset& data);

enum class ReportFormat { text, structured };

struct AnalysisRequest {
  std::filesystem::path data;
  double sensitivity = 1.0;
  double specificity = 1.0;
  std::optional<double> prevalence;  // absent: estimated
  double alpha = 0.05;
  double fd_step = 0.01;
  ReportFormat format = ReportFormat::text;

  void validate() const;
};

struct ParameterRow {
  std::string label;
  double estimate = 0.0;
  inference::Interval ci;
  std::optional<double> p_value;  // LR test of a zero coefficient
};

struct GroupRow {
  std::string label;
  double concordance_odds = 1.0;
  inference::Interval ci;  // on the odds scale
};

// One complete analysis: either the original one that takes the observed
// test at face value, or the misclassification-corrected one.
struct Analysis {
  DiagnosticModel diag{1.0, 1.0, 0.5, true};
  em::FitResult fit;
  std::vector<ParameterRow> parameters;  // beta1, beta2, gamma, then pi if estimated
  inference::SimultaneousReport simultaneous;
  std::vector<GroupRow> groups;  // negative, positive, all
};

struct AnalysisReport {
  AnalysisRequest request;
  std::size_t subjects = 0;
  std::size_t events = 0;
  std::size_t missing_tests = 0;
  Analysis original;
  Analysis corrected;
};

// Runs both analyses. Throws on estimation failure; nothing is rendered
// from a partial result.
AnalysisReport run_fit(const AnalysisRequest& request, const Dataset& data);
AnalysisReport run_fit(const AnalysisRequest& request);

std::string render_text(const AnalysisReport& report);
std::string render_json(const AnalysisReport& report);

// Scenario file: "key = value" lines, '#' comments. Keys before the first
// [scenario] header are defaults for every scenario. Keys: label, theta
// (three comma-separated numbers), pi, sens, spec, n_per_arm, reps, seed,
// alpha, prevalence_known, censor_low, censor_high.
std::vector<sim::ScenarioConfig> parse_scenarios(std::istream& in, std::string_view source = "<input>");
std::vector<sim::ScenarioConfig> read_scenarios(const std::filesystem::path& path);

struct SimulationRequest {
  std::filesystem::path config;
  std::optional<int> reps;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out_dir = ".";
  int threads = 1;
};

// Runs every scenario and writes summary.csv, summary.txt and summary.json
// into out_dir. Progress lines go to `log`. Returns the summaries.
std::vector<sim::ScenarioSummary> run_simulation(const SimulationRequest& request, std::ostream& log);

// Maps an exception from the library to the tool's exit code.
ExitCode classify(const std::exception& e);

}  // namespace mixcox::io
