#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mixcox/cli_io.hpp"
#include "mixcox/error.hpp"
#include "oracles/plain_cox.hpp"

using namespace mixcox;

namespace {

Dataset simulated(double sens, double spec, int n_per_arm, std::uint64_t seed, EffectParams theta = {-0.5, 0.1, 0.5}) {
  sim::ScenarioConfig c;
  c.theta_true = theta;
  c.sens = sens;
  c.spec = spec;
  c.n_per_arm = n_per_arm;
  sim::RngStream rng = sim::RngStream::for_replication(seed, 0);
  return sim::generate_trial(c, rng);
}

Dataset parse(const std::string& text) {
  std::istringstream in(text);
  return io::parse_dataset(in, "t.csv");
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return {};
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "mixcox_test_cli_io";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_CASE("dataset parsing") {
  const Dataset d = parse(
      "time,event,treatment,biomarker_test\n"
      "1.5,1,0,1\n"
      "2,0,1,NA\n"
      "3.25,1,1,\n"
      "4,0,0,na\n"
      "\n"
      "0.5,1,1,0\n");
  REQUIRE(d.size() == 5);
  CHECK(d[0].time == 1.5);
  CHECK(d[0].event);
  CHECK_FALSE(d[0].treatment);
  CHECK(d[0].test == TestResult::positive);
  CHECK(d[1].test == TestResult::missing);
  CHECK(d[2].test == TestResult::missing);
  CHECK(d[3].test == TestResult::missing);
  CHECK(d[4].test == TestResult::negative);

  SUBCASE("columns may come in any order") {
    const Dataset e = parse("biomarker_test,treatment,event,time\n1,0,1,2\n0,1,1,3\n");
    CHECK(e[0].time == 2.0);
    CHECK(e[0].test == TestResult::positive);
    CHECK(e[1].treatment);
  }
}

TEST_CASE("dataset errors name the row and column") {
  const std::string head = "time,event,treatment,biomarker_test\n1,1,0,1\n";
  std::string msg = error_of(head + "2,2,1,0\n");
  CHECK(msg.find("t.csv:3") != std::string::npos);
  CHECK(msg.find("'event'") != std::string::npos);
  msg = error_of(head + "-1,1,1,0\n");
  CHECK(msg.find("'time'") != std::string::npos);
  msg = error_of(head + "1,1,1,maybe\n");
  CHECK(msg.find("'biomarker_test'") != std::string::npos);
  msg = error_of(head + "1,1,yes,0\n");
  CHECK(msg.find("'treatment'") != std::string::npos);
  CHECK(error_of(head + "1,1,1\n").find("fields") != std::string::npos);
  CHECK(error_of("time,event,treatment\n1,1,0\n").find("biomarker_test") != std::string::npos);
  CHECK_FALSE(error_of("").empty());
  // one arm only
  CHECK_FALSE(error_of(head + "2,1,0,0\n").empty());
}

TEST_CASE("write then parse reproduces the data and the fit") {
  const Dataset d = simulated(0.85, 0.8, 80, 5);
  std::ostringstream os;
  io::write_dataset(os, d);
  const Dataset back = parse(os.str());
  REQUIRE(back.size() == d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(back[i].time == d[i].time);
    CHECK(back[i].event == d[i].event);
    CHECK(back[i].treatment == d[i].treatment);
    CHECK(back[i].test == d[i].test);
  }
  const DiagnosticModel diag(0.85, 0.8, 0.3, false);
  const em::FitResult a = em::fit(d, diag);
  const em::FitResult b = em::fit(back, diag);
  CHECK(a.theta_hat.beta1 == b.theta_hat.beta1);
  CHECK(a.theta_hat.beta2 == b.theta_hat.beta2);
  CHECK(a.theta_hat.gamma == b.theta_hat.gamma);
  CHECK(a.pi_hat == b.pi_hat);

  std::vector<Subject> with_na(d.subjects().begin(), d.subjects().end());
  with_na[3].test = TestResult::missing;
  std::ostringstream os2;
  io::write_dataset(os2, Dataset(with_na));
  CHECK(parse(os2.str())[3].test == TestResult::missing);
}

TEST_CASE("original analysis equals the plain Cox fit on the observed status") {
  const Dataset d = simulated(0.8, 0.8, 150, 8);
  io::AnalysisRequest req;
  req.sensitivity = 0.8;
  req.specificity = 0.8;
  const io::AnalysisReport r = io::run_fit(req, d);

  std::vector<oracle::CoxRow> rows;
  for (const Subject& s : d.subjects()) {
    const double x = s.treatment ? 1.0 : 0.0;
    const double v = s.test == TestResult::positive ? 1.0 : 0.0;
    rows.push_back({s.time, s.event, {x, v, x * v}});
  }
  const auto ref = oracle::plain_cox_fit(rows, 3);
  REQUIRE(r.original.parameters.size() == 3);
  for (int k = 0; k < 3; ++k) CHECK(std::fabs(r.original.parameters[k].estimate - ref[k]) < 1e-6);

  // Every reported interval contains its point estimate.
  for (const io::Analysis* a : {&r.original, &r.corrected}) {
    for (const auto& p : a->parameters) CHECK(p.ci.contains(p.estimate));
    for (const auto& g : a->groups) CHECK(g.ci.contains(g.concordance_odds));
    for (const auto& p : a->parameters) {
      if (p.p_value) {
        CHECK(*p.p_value >= 0.0);
        CHECK(*p.p_value <= 1.0);
      }
    }
  }
  CHECK(r.corrected.parameters.size() == 4);
  CHECK(r.corrected.parameters[3].label == "Prevalence (pi)");
  CHECK_FALSE(r.corrected.parameters[3].p_value);
  CHECK(r.subjects == d.size());
}

TEST_CASE("supplied prevalence removes the prevalence row") {
  const Dataset d = simulated(0.9, 0.9, 100, 3);
  io::AnalysisRequest req;
  req.sensitivity = 0.9;
  req.specificity = 0.9;
  req.prevalence = 0.3;
  const io::AnalysisReport r = io::run_fit(req, d);
  CHECK(r.corrected.parameters.size() == 3);
  CHECK(r.corrected.fit.pi_hat == 0.3);
  CHECK(io::render_text(r).find("Prevalence") == std::string::npos);
}

TEST_CASE("report layout") {
  const Dataset d = simulated(0.8, 0.8, 120, 4);
  io::AnalysisRequest req;
  req.sensitivity = 0.8;
  req.specificity = 0.8;
  const io::AnalysisReport r = io::run_fit(req, d);
  const auto text = lines_of(io::render_text(r));
  REQUIRE(text.size() >= 17);
  CHECK(text[0].rfind("Subjects: 240", 0) == 0);
  CHECK(text[3] == "Hazard ratio model (log scale)");
  CHECK(text[4].find("Original analysis") != std::string::npos);
  CHECK(text[4].find("Misclassification corrected") != std::string::npos);
  CHECK(text[5].rfind("Parameter", 0) == 0);
  CHECK(text[5].find("95% CI") != std::string::npos);
  CHECK(text[5].find("p-value") != std::string::npos);
  CHECK(text[6].rfind("Treatment (beta1)", 0) == 0);
  CHECK(text[7].rfind("Biomarker (beta2)", 0) == 0);
  CHECK(text[8].rfind("Interaction (gamma)", 0) == 0);
  CHECK(text[9].rfind("Prevalence (pi)", 0) == 0);
  CHECK(text[11] == "Concordance odds, simultaneous 95% CI");
  CHECK(text[13].rfind("Group", 0) == 0);
  CHECK(text[14].rfind("Biomarker negative", 0) == 0);
  CHECK(text[15].rfind("Biomarker positive", 0) == 0);
  CHECK(text[16].rfind("All", 0) == 0);
  for (const auto& l : text) CHECK((l.empty() || l.back() != ' '));

  // Text rounds to two decimals; the structured form keeps full precision.
  const nlohmann::json j = nlohmann::json::parse(io::render_json(r));
  const double b1 = j["corrected"]["parameters"][0]["estimate"].get<double>();
  CHECK(b1 == r.corrected.parameters[0].estimate);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", b1);
  CHECK(text[6].find(buf) != std::string::npos);
  CHECK(j["corrected"]["parameters"][3]["p_value"].is_null());
  CHECK(j["corrected"]["concordance_odds"].size() == 3);
  CHECK(io::render_json(r) == io::render_json(io::run_fit(req, d)));

  req.alpha = 0.1;
  CHECK(io::render_text(io::run_fit(req, d)).find("90% CI") != std::string::npos);
}

TEST_CASE("request validation") {
  io::AnalysisRequest req;
  req.sensitivity = 0.5;
  req.specificity = 0.5;
  CHECK_THROWS_AS(req.validate(), ValidationError);
  req.sensitivity = 0.9;
  req.alpha = 1.5;
  CHECK_THROWS_AS(req.validate(), ValidationError);
  req.alpha = 0.05;
  req.prevalence = 1.0;
  CHECK_THROWS_AS(req.validate(), ValidationError);
  req.prevalence.reset();
  req.data = scratch("does_not_exist.csv");
  CHECK_THROWS_AS(io::run_fit(req), IoError);
}

TEST_CASE("exit code classification") {
  CHECK(io::classify(ValidationError("x")) == io::ExitCode::validation);
  CHECK(io::classify(IoError("x")) == io::ExitCode::io);
  CHECK(io::classify(SeparationError("x")) == io::ExitCode::convergence);
  CHECK(io::classify(ConditioningError("x")) == io::ExitCode::convergence);
  CHECK(io::classify(DegenerateDataError("x")) == io::ExitCode::convergence);
}

TEST_CASE("scenario files") {
  std::istringstream in(
      "# shared\n"
      "n_per_arm = 50\n"
      "reps = 3\n"
      "[scenario]\n"
      "label = a\n"
      "theta = -1, 0.1, 1   # strong\n"
      "[scenario]\n"
      "sens = 0.8\n"
      "spec = 0.9\n"
      "prevalence_known = true\n"
      "censor_low = 2\n"
      "censor_high = 10\n");
  const auto s = io::parse_scenarios(in, "s.ini");
  REQUIRE(s.size() == 2);
  CHECK(s[0].label == "a");
  CHECK(s[0].theta_true.beta1 == -1.0);
  CHECK(s[0].theta_true.gamma == 1.0);
  CHECK(s[0].n_per_arm == 50);
  CHECK(s[1].label == "scenario2");
  CHECK(s[1].replications == 3);
  CHECK(s[1].sens == 0.8);
  CHECK(s[1].prevalence_known);
  CHECK(s[1].censor_high == 10.0);

  auto err = [](const std::string& text) {
    std::istringstream bad(text);
    try {
      io::parse_scenarios(bad, "s.ini");
    } catch (const ValidationError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(err("[scenario]\nbogus = 1\n").find("s.ini:2") != std::string::npos);
  CHECK(err("[scenario]\ntheta = 1, 2\n").find("theta") != std::string::npos);
  CHECK(err("[scenario]\nreps = x\n").find("reps") != std::string::npos);
  CHECK_FALSE(err("reps = 3\n").empty());
  CHECK(err("[scenario]\nsens = 0.4\nspec = 0.4\n").find("s.ini:1") != std::string::npos);
}

TEST_CASE("simulation outputs") {
  const auto cfg = scratch("sim.ini");
  {
    std::ofstream f(cfg);
    f << "n_per_arm = 60\nseed = 5\n[scenario]\nlabel = one\ntheta = -0.5, 0.1, 0.3\nsens = 0.9\nspec = 0.9\n";
  }
  io::SimulationRequest req;
  req.config = cfg;
  req.reps = 1;
  req.out_dir = scratch("out1");
  std::ostringstream log;
  const auto s = io::run_simulation(req, log);
  REQUIRE(s.size() == 1);
  CHECK(log.str().find("[1/1] one") != std::string::npos);
  const std::string csv = slurp(req.out_dir / "summary.csv");
  CHECK(csv.find("NA") != std::string::npos);
  CHECK(slurp(req.out_dir / "summary.json").find("null") != std::string::npos);

  req.reps = 4;
  req.threads = 1;
  req.out_dir = scratch("out_a");
  io::run_simulation(req, log);
  req.threads = 3;
  req.out_dir = scratch("out_b");
  io::run_simulation(req, log);
  for (const char* name : {"summary.csv", "summary.txt", "summary.json"}) {
    CHECK(slurp(scratch("out_a") / name) == slurp(scratch("out_b") / name));
  }
}
