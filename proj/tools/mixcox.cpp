#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "mixcox/cli_io.hpp"
#include "mixcox/error.hpp"

using namespace mixcox;

namespace {

int fail(const std::exception& e, bool structured) {
  const io::ExitCode code = io::classify(e);
  if (structured) {
    nlohmann::json j{{"error", e.what()}, {"exit_code", static_cast<int>(code)}};
    std::cout << j.dump(2) << '\n';
  }
  std::cerr << "mixcox: " << e.what() << '\n';
  return static_cast<int>(code);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Treatment effects under a misclassified biomarker: EM mixture of Cox models"};
  app.require_subcommand(1);

  io::AnalysisRequest fit;
  std::optional<double> prev;
  std::string format = "text";
  std::string out;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a trial dataset and report effects with confidence intervals");
  fit_cmd->add_option("--data", fit.data, "CSV with time,event,treatment,biomarker_test")->required();
  fit_cmd->add_option("--sens", fit.sensitivity, "Assay sensitivity")->required();
  fit_cmd->add_option("--spec", fit.specificity, "Assay specificity")->required();
  fit_cmd->add_option("--prev", prev, "Known prevalence of positive status (estimated if omitted)");
  fit_cmd->add_option("--alpha", fit.alpha, "Significance level")->capture_default_str();
  fit_cmd->add_option("--fd-step", fit.fd_step, "Finite-difference step for the information matrix")
      ->capture_default_str();
  fit_cmd->add_option("--out", out, "Write the report here instead of standard output");
  fit_cmd->add_option("--format", format, "Report format")->check(CLI::IsMember({"text", "structured"}))
      ->capture_default_str();

  io::SimulationRequest simreq;
  std::optional<int> reps;
  std::optional<std::uint64_t> seed;
  simreq.threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  auto* sim_cmd = app.add_subcommand("simulate", "Run a simulation study from a scenario file");
  sim_cmd->add_option("--config", simreq.config, "Scenario file")->required();
  sim_cmd->add_option("--reps", reps, "Override the replication count of every scenario");
  sim_cmd->add_option("--seed", seed, "Override the base seed of every scenario");
  sim_cmd->add_option("--out-dir", simreq.out_dir, "Directory for summary.csv, summary.txt, summary.json")
      ->capture_default_str();
  sim_cmd->add_option("--threads", simreq.threads, "Worker threads")->capture_default_str();

  std::filesystem::path gen_config, gen_out;
  std::size_t gen_scenario = 1;
  std::uint64_t gen_index = 0;
  auto* gen_cmd = app.add_subcommand("generate", "Write one simulated trial as a dataset CSV");
  gen_cmd->add_option("--config", gen_config, "Scenario file")->required();
  gen_cmd->add_option("--scenario", gen_scenario, "1-based scenario number")->capture_default_str();
  gen_cmd->add_option("--index", gen_index, "Replication index")->capture_default_str();
  gen_cmd->add_option("--out", gen_out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(io::ExitCode::validation);
  }

  if (*fit_cmd) {
    const bool structured = format == "structured";
    fit.prevalence = prev;
    fit.format = structured ? io::ReportFormat::structured : io::ReportFormat::text;
    try {
      const io::AnalysisReport report = io::run_fit(fit);
      const std::string text = structured ? io::render_json(report) : io::render_text(report);
      if (out.empty()) {
        std::cout << text;
      } else {
        std::ofstream f(out, std::ios::binary);
        if (!f || !(f << text)) throw IoError("cannot write " + out);
      }
    } catch (const std::exception& e) {
      return fail(e, structured);
    }
    return 0;
  }

  if (*sim_cmd) {
    simreq.reps = reps;
    simreq.seed = seed;
    try {
      const auto summaries = io::run_simulation(simreq, std::cerr);
      std::cout << sim::emit_table(summaries).to_text();
    } catch (const std::exception& e) {
      return fail(e, false);
    }
    return 0;
  }

  try {
    const auto scenarios = io::read_scenarios(gen_config);
    if (gen_scenario < 1 || gen_scenario > scenarios.size()) {
      throw ValidationError("--scenario must lie in 1.." + std::to_string(scenarios.size()));
    }
    const auto& sc = scenarios[gen_scenario - 1];
    sim::RngStream rng = sim::RngStream::for_replication(sc.base_seed, gen_index);
    io::save_dataset(gen_out, sim::generate_trial(sc, rng));
  } catch (const std::exception& e) {
    return fail(e, false);
  }
  return 0;
}
