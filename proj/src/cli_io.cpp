#include "mixcox/cli_io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "mixcox/error.hpp"

namespace mixcox::io {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::vector<std::string> split(std::string_view line, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(delim, start);
    out.push_back(trim(line.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string where(std::string_view source, std::size_t line) {
  return std::string(source) + ":" + std::to_string(line);
}

bool parse_double(const std::string& s, double& v) {
  if (s.empty()) return false;
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  return ec == std::errc() && p == end;
}

bool parse_int(const std::string& s, long long& v) {
  if (s.empty()) return false;
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  return ec == std::errc() && p == end;
}

std::string shortest(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string fixed(double v, int digits) {
  if (!std::isfinite(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  // "-0.00" reads badly in a table
  std::string s = buf;
  if (s.find_first_not_of("-0.") == std::string::npos && s[0] == '-') s.erase(0, 1);
  return s;
}

std::string p_text(std::optional<double> p) {
  if (!p) return "-";
  if (*p < 0.001) return "<0.001";
  return fixed(*p, 3);
}

// Open endpoints were not bracketed by the profile search; they are marked.
std::string ci_text(const inference::Interval& ci, int digits) {
  return "(" + fixed(ci.lower, digits) + (ci.lower_open ? "*" : "") + ", " + fixed(ci.upper, digits) +
         (ci.upper_open ? "*" : "") + ")";
}

inference::Interval exp_interval(const inference::Interval& ci) {
  return {std::exp(ci.lower), std::exp(ci.upper), ci.lower_open, ci.upper_open};
}

std::string percent_label(double alpha) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g%% CI", 100.0 * (1.0 - alpha));
  return buf;
}

Analysis analyse(const Dataset& data, const DiagnosticModel& diag, const AnalysisRequest& req) {
  Analysis a{diag, {}, {}, {}, {}};
  inference::InferenceConfig cfg;
  cfg.alpha = req.alpha;
  cfg.fd_step = req.fd_step;
  a.fit = em::fit(data, diag, cfg.em);
  if (!a.fit.converged) {
    throw ConditioningError("EM did not converge within " + std::to_string(cfg.em.max_iter) +
                            " iterations");
  }
  const inference::ProfileContext ctx{data, a.diag, a.fit, cfg};
  const EffectParams& th = a.fit.theta_hat;
  const std::array<std::pair<const char*, inference::Param>, 3> coefs{{
      {"Treatment (beta1)", inference::Param::beta1},
      {"Biomarker (beta2)", inference::Param::beta2},
      {"Interaction (gamma)", inference::Param::gamma},
  }};
  const std::array<double, 3> est{th.beta1, th.beta2, th.gamma};
  for (std::size_t k = 0; k < coefs.size(); ++k) {
    ParameterRow row;
    row.label = coefs[k].first;
    row.estimate = est[k];
    row.ci = inference::profile_ci(ctx, coefs[k].second);
    row.p_value = inference::lr_test(ctx, coefs[k].second, 0.0).p_value;
    a.parameters.push_back(std::move(row));
  }
  if (!diag.prevalence_known()) {
    ParameterRow row;
    row.label = "Prevalence (pi)";
    row.estimate = a.fit.pi_hat;
    row.ci = inference::profile_ci(ctx, inference::Param::prevalence);
    a.parameters.push_back(std::move(row));
  }

  a.simultaneous = inference::overall_concordance_report(ctx);
  const inference::OverallEffect& all = *a.simultaneous.overall;
  a.groups.push_back({"Biomarker negative", std::exp(th.beta1), exp_interval(a.simultaneous.interval_neg)});
  a.groups.push_back({"Biomarker positive", std::exp(th.beta1 + th.gamma),
                      exp_interval(a.simultaneous.interval_pos)});
  a.groups.push_back({"All", std::exp(all.log_odds), exp_interval(all.interval)});
  return a;
}

nlohmann::json interval_json(const inference::Interval& ci) {
  return {{"lower", ci.lower}, {"upper", ci.upper}, {"lower_open", ci.lower_open}, {"upper_open", ci.upper_open}};
}

nlohmann::json analysis_json(const Analysis& a) {
  using nlohmann::json;
  json j;
  j["sensitivity"] = a.diag.sensitivity();
  j["specificity"] = a.diag.specificity();
  j["prevalence_known"] = a.diag.prevalence_known();
  j["converged"] = a.fit.converged;
  j["iterations"] = a.fit.iterations;
  j["log_likelihood"] = a.fit.obs_loglik;
  j["prevalence"] = a.fit.pi_hat;
  json params = json::array();
  for (const ParameterRow& r : a.parameters) {
    json p{{"parameter", r.label}, {"estimate", r.estimate}, {"ci", interval_json(r.ci)}};
    p["p_value"] = r.p_value ? json(*r.p_value) : json(nullptr);
    params.push_back(std::move(p));
  }
  j["parameters"] = std::move(params);
  const auto& s = a.simultaneous;
  j["simultaneous"] = {{"xi", s.xi_alpha},
                       {"sigma_pos", s.sigma_pos},
                       {"sigma_neg", s.sigma_neg},
                       {"rho", s.rho},
                       {"log_hr_pos", interval_json(s.interval_pos)},
                       {"log_hr_neg", interval_json(s.interval_neg)}};
  if (s.overall) {
    j["simultaneous"]["log_odds_all"] = interval_json(s.overall->interval);
    j["concordance_prob_all"] = s.overall->concordance_prob;
  }
  json groups = json::array();
  for (const GroupRow& g : a.groups) {
    groups.push_back({{"group", g.label}, {"concordance_odds", g.concordance_odds}, {"ci", interval_json(g.ci)}});
  }
  j["concordance_odds"] = std::move(groups);
  return j;
}

void pad(std::ostringstream& os, const std::string& s, std::size_t w, bool left = false) {
  if (left) os << s << std::string(w > s.size() ? w - s.size() : 0, ' ');
  else os << std::string(w > s.size() ? w - s.size() : 0, ' ') << s;
}

sim::ScenarioConfig apply_key(sim::ScenarioConfig c, const std::string& key, const std::string& value,
                              const std::string& at) {
  auto number = [&] {
    double v;
    if (!parse_double(value, v)) throw ValidationError(at + ": key '" + key + "' expects a number, got '" + value + "'");
    return v;
  };
  auto integer = [&] {
    long long v;
    if (!parse_int(value, v)) throw ValidationError(at + ": key '" + key + "' expects an integer, got '" + value + "'");
    return v;
  };
  if (key == "label") {
    c.label = value;
  } else if (key == "theta") {
    const auto parts = split(value, ',');
    std::array<double, 3> v{};
    if (parts.size() != 3 || !parse_double(parts[0], v[0]) || !parse_double(parts[1], v[1]) ||
        !parse_double(parts[2], v[2])) {
      throw ValidationError(at + ": theta expects three comma-separated numbers");
    }
    c.theta_true = {v[0], v[1], v[2]};
  } else if (key == "pi") {
    c.pi_true = number();
  } else if (key == "sens") {
    c.sens = number();
  } else if (key == "spec") {
    c.spec = number();
  } else if (key == "n_per_arm") {
    c.n_per_arm = static_cast<int>(integer());
  } else if (key == "reps") {
    c.replications = static_cast<int>(integer());
  } else if (key == "seed") {
    const long long v = integer();
    if (v < 0) throw ValidationError(at + ": seed must be non-negative");
    c.base_seed = static_cast<std::uint64_t>(v);
  } else if (key == "alpha") {
    c.alpha = number();
  } else if (key == "prevalence_known") {
    const std::string v = lower(value);
    if (v == "true" || v == "1" || v == "yes") c.prevalence_known = true;
    else if (v == "false" || v == "0" || v == "no") c.prevalence_known = false;
    else throw ValidationError(at + ": prevalence_known expects true or false");
  } else if (key == "censor_low") {
    c.censor_low = number();
  } else if (key == "censor_high") {
    c.censor_high = number();
  } else {
    throw ValidationError(at + ": unknown key '" + key + "'");
  }
  return c;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << content;
  if (!f) throw IoError("write failed: " + path.string());
}

}  // namespace

Dataset parse_dataset(std::istream& in, std::string_view source) {
  static const std::array<std::string, 4> kColumns{"time", "event", "treatment", "biomarker_test"};
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (!trim(line).empty()) {
      header = split(line, ',');
      break;
    }
  }
  if (header.empty()) throw ValidationError(std::string(source) + ": empty input");
  std::array<std::size_t, 4> col{};
  for (std::size_t k = 0; k < kColumns.size(); ++k) {
    const auto it = std::find(header.begin(), header.end(), kColumns[k]);
    if (it == header.end()) {
      throw ValidationError(where(source, lineno) + ": missing column '" + kColumns[k] + "'");
    }
    col[k] = static_cast<std::size_t>(it - header.begin());
  }

  std::vector<Subject> subjects;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    const std::string at = where(source, lineno);
    if (cells.size() != header.size()) {
      throw ValidationError(at + ": expected " + std::to_string(header.size()) + " fields, found " +
                            std::to_string(cells.size()));
    }
    auto bad = [&](std::size_t k, const std::string& what) {
      return ValidationError(at + ", column '" + kColumns[k] + "': " + what + " (got '" + cells[col[k]] + "')");
    };
    Subject s;
    if (!parse_double(cells[col[0]], s.time) || !std::isfinite(s.time)) throw bad(0, "not a number");
    if (!(s.time > 0.0)) throw bad(0, "time must be positive");
    long long v;
    if (!parse_int(cells[col[1]], v) || (v != 0 && v != 1)) throw bad(1, "expected 0 or 1");
    s.event = v == 1;
    if (!parse_int(cells[col[2]], v) || (v != 0 && v != 1)) throw bad(2, "expected 0 or 1");
    s.treatment = v == 1;
    const std::string& t = cells[col[3]];
    if (t.empty() || lower(t) == "na") {
      s.test = TestResult::missing;
    } else if (parse_int(t, v) && (v == 0 || v == 1)) {
      s.test = v == 1 ? TestResult::positive : TestResult::negative;
    } else {
      throw bad(3, "expected 0, 1 or NA");
    }
    subjects.push_back(s);
  }
  try {
    return Dataset(std::move(subjects));
  } catch (const ValidationError& e) {
    throw ValidationError(std::string(source) + ": " + e.what());
  }
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  return parse_dataset(f, path.string());
}

void write_dataset(std::ostream& out, const Dataset& data) {
  out << "time,event,treatment,biomarker_test\n";
  for (const Subject& s : data.subjects()) {
    out << shortest(s.time) << ',' << (s.event ? 1 : 0) << ',' << (s.treatment ? 1 : 0) << ',';
    switch (s.test) {
      case TestResult::positive: out << '1'; break;
      case TestResult::negative: out << '0'; break;
      case TestResult::missing: out << "NA"; break;
    }
    out << '\n';
  }
}

void save_dataset(const std::filesystem::path& path, const Dataset& data) {
  std::ostringstream os;
  write_dataset(os, data);
  write_file(path, os.str());
}

void AnalysisRequest::validate() const {
  DiagnosticModel(sensitivity, specificity, prevalence.value_or(0.5), prevalence.has_value());
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
  if (!(fd_step > 0.0 && fd_step < 1.0)) throw ValidationError("fd-step must lie in (0, 1)");
}

AnalysisReport run_fit(const AnalysisRequest& request, const Dataset& data) {
  request.validate();
  AnalysisReport r;
  r.request = request;
  r.subjects = data.size();
  std::size_t positive = 0, tested = 0;
  for (const Subject& s : data.subjects()) {
    r.events += s.event ? 1 : 0;
    if (s.test == TestResult::missing) {
      ++r.missing_tests;
    } else {
      ++tested;
      positive += s.test == TestResult::positive ? 1 : 0;
    }
  }
  // The original analysis trusts the test; its prevalence is the observed
  // positive fraction and is not estimated.
  const double frac = tested ? static_cast<double>(positive) / static_cast<double>(tested) : 0.5;
  const DiagnosticModel face(1.0, 1.0, std::clamp(frac, 0.01, 0.99), true);
  r.original = analyse(data, face, request);

  const double pi0 = request.prevalence.value_or(std::clamp(frac, 0.01, 0.99));
  const DiagnosticModel corrected(request.sensitivity, request.specificity, pi0, request.prevalence.has_value());
  r.corrected = analyse(data, corrected, request);
  return r;
}

AnalysisReport run_fit(const AnalysisRequest& request) {
  request.validate();
  return run_fit(request, read_dataset(request.data));
}

std::string render_text(const AnalysisReport& r) {
  const std::string ci = percent_label(r.request.alpha);
  std::ostringstream os;
  os << "Subjects: " << r.subjects << "  events: " << r.events << "  missing tests: " << r.missing_tests << '\n';
  os << "Assay: sensitivity " << shortest(r.request.sensitivity) << ", specificity "
     << shortest(r.request.specificity) << ", prevalence "
     << (r.request.prevalence ? shortest(*r.request.prevalence) : std::string("estimated")) << "\n\n";

  const std::size_t w0 = 22, we = 9, wc = 17, wp = 8;
  auto block_header = [&](const std::string& first) {
    pad(os, first, w0, true);
    for (const char* name : {"Original analysis", "Misclassification corrected"}) {
      os << "  ";
      pad(os, name, we + wc + wp + 4, true);
    }
    os << '\n';
  };

  os << "Hazard ratio model (log scale)\n";
  block_header("");
  pad(os, "Parameter", w0, true);
  for (int k = 0; k < 2; ++k) {
    os << "  ";
    pad(os, "Estimate", we);
    os << "  ";
    pad(os, ci, wc);
    os << "  ";
    pad(os, "p-value", wp);
  }
  os << '\n';
  for (std::size_t i = 0; i < r.corrected.parameters.size(); ++i) {
    const ParameterRow& c = r.corrected.parameters[i];
    pad(os, c.label, w0, true);
    const ParameterRow* o = i < r.original.parameters.size() ? &r.original.parameters[i] : nullptr;
    for (const ParameterRow* p : {o, &c}) {
      os << "  ";
      pad(os, p ? fixed(p->estimate, 2) : "-", we);
      os << "  ";
      pad(os, p ? ci_text(p->ci, 2) : "-", wc);
      os << "  ";
      pad(os, p ? p_text(p->p_value) : "-", wp);
    }
    os << '\n';
  }

  os << "\nConcordance odds, simultaneous " << ci << '\n';
  block_header("");
  pad(os, "Group", w0, true);
  for (int k = 0; k < 2; ++k) {
    os << "  ";
    pad(os, "CO", we);
    os << "  ";
    pad(os, ci, wc);
    os << "  ";
    pad(os, "", wp);
  }
  os << '\n';
  for (std::size_t i = 0; i < r.corrected.groups.size(); ++i) {
    pad(os, r.corrected.groups[i].label, w0, true);
    for (const GroupRow* g : {&r.original.groups[i], &r.corrected.groups[i]}) {
      os << "  ";
      pad(os, fixed(g->concordance_odds, 2), we);
      os << "  ";
      pad(os, ci_text(g->ci, 2), wc);
      os << "  ";
      pad(os, "", wp);
    }
    os << '\n';
  }

  os << "\nEM iterations: original " << r.original.fit.iterations << ", corrected " << r.corrected.fit.iterations
     << "; log-likelihood " << fixed(r.original.fit.obs_loglik, 4) << ", "
     << fixed(r.corrected.fit.obs_loglik, 4) << '\n';
  bool open = false;
  for (const Analysis* a : {&r.original, &r.corrected}) {
    for (const ParameterRow& p : a->parameters) open |= p.ci.lower_open || p.ci.upper_open;
  }
  if (open) os << "* endpoint not reached by the profile search; the last value tried is shown\n";
  std::string text, line;
  std::istringstream lines(os.str());
  while (std::getline(lines, line)) text += line.substr(0, line.find_last_not_of(' ') + 1) + '\n';
  return text;
}

std::string render_json(const AnalysisReport& r) {
  using nlohmann::json;
  json j;
  j["data"] = r.request.data.string();
  j["alpha"] = r.request.alpha;
  j["fd_step"] = r.request.fd_step;
  j["subjects"] = r.subjects;
  j["events"] = r.events;
  j["missing_tests"] = r.missing_tests;
  j["original"] = analysis_json(r.original);
  j["corrected"] = analysis_json(r.corrected);
  return j.dump(2) + "\n";
}

std::vector<sim::ScenarioConfig> parse_scenarios(std::istream& in, std::string_view source) {
  sim::ScenarioConfig defaults;
  std::vector<sim::ScenarioConfig> out;
  std::vector<std::size_t> started;
  bool in_section = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const std::string at = where(source, lineno);
    if (body.front() == '[') {
      if (lower(body) != "[scenario]") throw ValidationError(at + ": unknown section " + body);
      out.push_back(defaults);
      started.push_back(lineno);
      in_section = true;
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ValidationError(at + ": expected key = value");
    const std::string key = lower(trim(std::string_view(body).substr(0, eq)));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (in_section) out.back() = apply_key(out.back(), key, value, at);
    else defaults = apply_key(defaults, key, value, at);
  }
  if (out.empty()) throw ValidationError(std::string(source) + ": no [scenario] sections");
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (out[k].label.empty()) out[k].label = "scenario" + std::to_string(k + 1);
    try {
      out[k].validate();
    } catch (const ValidationError& e) {
      throw ValidationError(where(source, started[k]) + ": " + e.what());
    }
  }
  return out;
}

std::vector<sim::ScenarioConfig> read_scenarios(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  return parse_scenarios(f, path.string());
}

std::vector<sim::ScenarioSummary> run_simulation(const SimulationRequest& request, std::ostream& log) {
  std::vector<sim::ScenarioConfig> scenarios = read_scenarios(request.config);
  for (auto& s : scenarios) {
    if (request.reps) s.replications = *request.reps;
    if (request.seed) s.base_seed = *request.seed;
    s.validate();
  }
  if (request.threads < 1) throw ValidationError("threads must be at least 1");
  std::error_code ec;
  std::filesystem::create_directories(request.out_dir, ec);
  if (ec) throw IoError("cannot create " + request.out_dir.string() + ": " + ec.message());

  std::vector<sim::ScenarioSummary> summaries;
  for (std::size_t k = 0; k < scenarios.size(); ++k) {
    const auto& s = scenarios[k];
    log << "[" << k + 1 << "/" << scenarios.size() << "] " << s.label << ": N=" << s.n_per_arm
        << " sens=" << shortest(s.sens) << " spec=" << shortest(s.spec) << " reps=" << s.replications << std::flush;
    summaries.push_back(sim::run_scenario(s, request.threads));
    const auto& sum = summaries.back();
    log << " done, " << sum.completed << " completed, " << sum.failures << " failed\n";
    if (sum.failures * 100 > s.replications) {
      log << "warning: " << s.label << ": more than 1% of replications failed\n";
    }
  }
  const sim::Table t = sim::emit_table(summaries);
  write_file(request.out_dir / "summary.csv", t.to_delimited());
  write_file(request.out_dir / "summary.txt", t.to_text());
  write_file(request.out_dir / "summary.json", sim::summaries_to_json(summaries));
  return summaries;
}

ExitCode classify(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e)) return ExitCode::io;
  if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const InvalidStateError*>(&e)) {
    return ExitCode::validation;
  }
  return ExitCode::convergence;
}

}  // namespace mixcox::io
