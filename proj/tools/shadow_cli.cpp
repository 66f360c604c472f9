// Command-line front end: run experiments from a config file, run the
// acceptance suite, list the benchmark systems.

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "shadow/shadow.hpp"

namespace fs = std::filesystem;
using namespace shadow;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

Json diagnostics_json(const ReportArtifacts& art) {
  Json j;
  j["format_version"] = kFormatVersion;
  j["status"] = "ok";
  j["tangent"] = art.sc.pair ? to_json(art.sc.pair->diagnostics) : Json(nullptr);
  j["adjoint"] = art.sc.covector ? to_json(art.sc.covector->diagnostics) : Json(nullptr);
  j["window"] = {art.sc.window.first, art.sc.window.last};
  j["splitting"] = art.splitting ? splitting_json(*art.splitting) : Json(nullptr);
  return j;
}

void write_artifacts(const fs::path& out, const ExperimentConfig& cfg, const ReportArtifacts& art) {
  const Orbit& o = art.orbit;
  write_container((out / "orbit.csv").string(), orbit_container(o));
  if (art.sc.pair) {
    const auto& p = *art.sc.pair;
    write_container((out / "tangent.csv").string(),
                    p.has_eta() ? field_container(o, "tangent", {{"v", &p.v}}, {{"eta", &p.eta}})
                                : field_container(o, "tangent", {{"v", &p.v}}));
  }
  if (art.sc.covector) {
    const auto& c = *art.sc.covector;
    write_container((out / "adjoint.csv").string(),
                    c.center_defect.empty()
                        ? field_container(o, "adjoint", {{"nu", &c.nu}})
                        : field_container(o, "adjoint", {{"nu", &c.nu}}, {{"center_defect", &c.center_defect}}));
  }
  if (art.splitting) {
    write_container((out / "splitting.csv").string(), splitting_container(o, *art.splitting));
    Json s = splitting_json(*art.splitting);
    s["format_version"] = kFormatVersion;
    write_text((out / "splitting.json").string(), dump(s));
  }
  write_text((out / "report.json").string(), dump(to_json(art.report)));
  std::ostringstream csv;
  write_report_csv(csv, art.report);
  write_text((out / "report.csv").string(), csv.str());
  if (art.report.ruelle) {
    std::ostringstream rc;
    write_ruelle_csv(rc, *art.report.ruelle);
    write_text((out / "ruelle.csv").string(), rc.str());
  }
  write_text((out / "diagnostics.json").string(), dump(diagnostics_json(art)));
  write_text((out / "effective_config.ini").string(), effective_config(cfg));
}

int run_command(const std::string& config_path, const std::string& out_override, std::optional<std::uint64_t> seed) {
  ExperimentConfig cfg;
  try {
    cfg = load_config(config_path);
  } catch (const ShadowingError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  if (seed) cfg.report.seed = *seed;
  if (!out_override.empty()) cfg.output_directory = out_override;
  const fs::path out(cfg.output_directory);
  try {
    fs::create_directories(out);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "cannot create " << out << ": " << e.what() << "\n";
    return kExitSolver;
  }
  try {
    const ReportArtifacts art = run_report(cfg.report);
    write_artifacts(out, cfg, art);
    const ResponseReport& r = art.report;
    std::cout << r.system << " (" << r.objective << ", parameter " << r.parameter << ")\n";
    auto line = [](const char* name, const std::optional<Estimate>& e) {
      if (e) std::cout << "  " << std::left << std::setw(12) << name << e->value << " +- " << e->stderr_ << "\n";
    };
    line("SC tangent", r.sc_tangent);
    line("SC adjoint", r.sc_adjoint);
    if (r.fd) line("FD", r.fd->estimate);
    line("UC residual", r.uc_residual);
    for (const Check& c : r.checks) {
      std::cout << "  check " << c.name << ": " << (c.passed ? "pass" : "fail")
                << (c.informational ? " (informational)" : "") << "  " << c.detail << "\n";
    }
    std::cout << "wrote " << out.string() << "\n";
    return kExitOk;
  } catch (const ShadowingError& e) {
    if (e.code() == ErrorCode::configuration) {
      std::cerr << "error: " << config_path << ": " << e.what() << "\n";
      return kExitConfig;
    }
    Json j;
    j["format_version"] = kFormatVersion;
    j["status"] = "error";
    j["error"] = to_string(e.code());
    j["message"] = e.what();
    j["system"] = cfg.report.system;
    j["seed"] = cfg.report.seed;
    try {
      write_text((out / "diagnostics.json").string(), dump(j));
    } catch (const ShadowingError&) {
    }
    std::cerr << "solver error (" << to_string(e.code()) << "): " << e.what() << "\n";
    return kExitSolver;
  }
}

int validate_command(const std::vector<std::string>& only, bool flip, std::uint64_t seed) {
  SuiteContext ctx = flip ? fault_injected_context() : SuiteContext{};
  ctx.seed = seed;
  std::vector<std::string> failed;
  const auto results = run_suite(only, ctx, [&](const CriterionResult& r) {
    std::cout << format_result(r) << std::endl;
    if (!r.passed) failed.push_back(std::to_string(r.id) + " " + r.name);
  });
  if (results.empty()) {
    std::cerr << "no criterion matches the --only filter\n";
    return kExitFailed;
  }
  std::cout << results.size() - failed.size() << "/" << results.size() << " passed\n";
  if (!failed.empty()) {
    std::cout << "failed:";
    for (const auto& f : failed) std::cout << " [" << f << "]";
    std::cout << "\n";
    return kExitFailed;
  }
  return kExitOk;
}

void list_systems() {
  std::cout << std::left << std::setw(13) << "name" << std::setw(6) << "kind" << std::setw(4) << "M" << std::setw(4)
            << "u" << std::setw(11) << "parameter" << std::setw(8) << "dt"
            << "description\n";
  for (const SystemInfo& s : catalog()) {
    std::cout << std::left << std::setw(13) << s.name << std::setw(6) << to_string(s.kind) << std::setw(4)
              << s.dimension << std::setw(4) << s.unstable_dimension << std::setw(11) << s.default_parameter
              << std::setw(8) << s.default_time_step << s.description << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shadowing contributions to linear response of chaotic maps and flows"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> run_seed;
  auto* run = app.add_subcommand("run", "Run an experiment from a config file");
  run->add_option("--config", config_path, "INI experiment config")->required();
  run->add_option("--out", out_dir, "Output directory (overrides [output] directory)");
  run->add_option("--seed", run_seed, "Seed (overrides [orbit] seed)");

  std::vector<std::string> only;
  bool flip = false;
  std::uint64_t validate_seed = 1;
  auto* validate = app.add_subcommand("validate", "Run the acceptance suite");
  validate->add_option("--only", only, "Criterion numbers, names or tags to run")->delimiter(',');
  validate->add_option("--seed", validate_seed, "Seed for the benchmark orbits");
  validate->add_flag("--inject-pullback-sign-flip", flip, "Negate every covector pullback (mutation check)");

  app.add_subcommand("list-systems", "List the benchmark systems");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  if (*run) return run_command(config_path, out_dir, run_seed);
  if (*validate) return validate_command(only, flip, validate_seed);
  list_systems();
  return kExitOk;
}
