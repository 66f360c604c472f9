#include <catch_amalgamated.hpp>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "shadow/config.hpp"
#include "shadow/container.hpp"
#include "shadow/validation.hpp"

using namespace shadow;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string output;
};

Outcome run_cli(const std::string& args) {
  const std::string cmd = std::string(SHADOW_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  std::array<char, 4096> buf{};
  while (fgets(buf.data(), buf.size(), pipe) != nullptr) out += buf.data();
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("shadow_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string config_error(const std::string& text) {
  try {
    (void)parse_config(text, "test.ini");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

const char* kSmallDoubling = R"([system]
name = doubling

[orbit]
steps = 2000
seed = 3

[baseline]
fd_steps = 1000
fd_ensemble = 4
ruelle_ensemble = 8
)";

}  // namespace

TEST_CASE("config: defaults and overrides") {
  const ExperimentConfig cfg = parse_config(R"(
# comment
[system]
name = lorenz63
parameter = 30
time_step = 0.01

[orbit]
steps = 500

[solver]
mode = adjoint
formulation = segmented_least_squares

[baseline]
fd = false
)");
  CHECK(cfg.report.system == "lorenz63");
  CHECK(cfg.report.parameter == 30.0);
  CHECK(cfg.report.time_step == 0.01);
  CHECK(cfg.report.steps == 500);
  CHECK_FALSE(cfg.report.tangent);
  CHECK(cfg.report.adjoint);
  CHECK(cfg.report.formulation == Formulation::segmented_least_squares);
  CHECK_FALSE(cfg.report.fd);
  CHECK(cfg.report.ruelle);
  CHECK(cfg.output_directory == "shadow_out");
}

TEST_CASE("config: errors name the line and the field") {
  CHECK(config_error("[system]\nname = cat\n[solver]\nunstable_dimension = 3\n")
            .find("test.ini:4: solver.unstable_dimension") != std::string::npos);
  CHECK(config_error("[system]\nname = lorenz63\n[solver]\nunstable_dimension = 3\n").find("unstable_dimension") !=
        std::string::npos);
  CHECK(config_error("[system]\nname = cat\nspeed = 3\n").find("test.ini:3: unknown key 'system.speed'") !=
        std::string::npos);
  CHECK(config_error("[system]\nname = cat\n[extra]\na = 1\n").find("test.ini:3: unknown section") !=
        std::string::npos);
  CHECK(config_error("[system]\nname = henon\n").find("unknown system") != std::string::npos);
  CHECK(config_error("[orbit]\nsteps = 10\n").find("system.name is required") != std::string::npos);
  CHECK(config_error("[system]\nname = cat\n[orbit]\nsteps = ten\n").find("test.ini:4: orbit.steps") !=
        std::string::npos);
  CHECK(config_error("[system]\nname = cat\n[orbit]\nsteps = 0\n").find("at least 1") != std::string::npos);
  CHECK(config_error("[system]\nname = cat\ntime_step = 0.1\n").find("only applies to flows") != std::string::npos);
  CHECK(config_error("[system]\nname = cat\n[solver]\nmode = sideways\n").find("solver.mode") != std::string::npos);
  CHECK(config_error("[system]\nname = cat\n[baseline]\nfd_h = -1\n").find("baseline.fd_h") != std::string::npos);
  CHECK(config_error("[system]\nname = cat\n[solver]\nsplitting = maybe\n").find("true or false") !=
        std::string::npos);
  CHECK_THROWS_AS(load_config("/nonexistent/config.ini"), ConfigError);
}

TEST_CASE("config: effective config round-trips") {
  for (const char* name : {"doubling", "cat", "contracting", "lorenz63"}) {
    const ExperimentConfig cfg = load_config(std::string(SHADOW_CONFIG_DIR) + "/" + name + ".ini");
    const std::string text = effective_config(cfg);
    CHECK(text.rfind("# format_version=1", 0) == 0);
    CHECK(effective_config(parse_config(text)) == text);
  }
}

TEST_CASE("container: orbit round-trip is exact") {
  const Orbit o = generate_orbit(make_system("cat"), std::nullopt, 0.05, 50, 10, 7);
  std::stringstream ss;
  write_container(ss, orbit_container(o));
  const Orbit back = orbit_from_container(read_container(ss));
  REQUIRE(back.states.size() == o.states.size());
  for (std::size_t n = 0; n < o.states.size(); ++n) CHECK(back.states[n] == o.states[n]);
  CHECK(back.preimage == o.preimage);
  CHECK(back.parameter == o.parameter);
  CHECK(back.seed == 7);
}

TEST_CASE("container: version and shape are checked") {
  std::stringstream missing("n,x0\n0,0.5\n");
  CHECK_THROWS_AS(read_container(missing), ShadowingError);
  std::stringstream future("# format_version=2\nn,x0\n0,0.5\n");
  CHECK_THROWS_AS(read_container(future), ShadowingError);
  std::stringstream ragged("# format_version=1\nn,x0\n0,0.5,0.7\n");
  CHECK_THROWS_AS(read_container(ragged), ShadowingError);
}

TEST_CASE("report JSON is deterministic and versioned") {
  ExperimentConfig cfg = parse_config(kSmallDoubling);
  const std::string a = to_json(build_report(cfg.report)).dump();
  const std::string b = to_json(build_report(cfg.report)).dump();
  CHECK(a == b);
  const Json j = Json::parse(a);
  CHECK(j["format_version"] == 1);
  CHECK(j["system"] == "doubling");
  CHECK(j["sc_adjoint"]["stderr"].get<double>() > 0.0);
}

TEST_CASE("suite filtering") {
  const auto& all = criteria();
  REQUIRE(all.size() == 11);
  auto count = [&](std::vector<std::string> only) {
    return std::count_if(all.begin(), all.end(), [&](const Criterion& c) { return selected(c, only); });
  };
  CHECK(count({}) == 11);
  CHECK(count({"duality"}) == 1);
  CHECK(count({"4"}) == 1);
  CHECK(count({"stable_exactness", "1"}) == 2);
  CHECK(count({"flow"}) == 3);
  CHECK(count({"nothing"}) == 0);
}

TEST_CASE("fault injection breaks the adjoint pairing") {
  const Criterion& pairing = criteria().front();
  REQUIRE(pairing.name == "adjoint_pairing");
  CHECK(run_criterion(pairing, SuiteContext{}).passed);
  const CriterionResult broken = run_criterion(pairing, fault_injected_context());
  CHECK_FALSE(broken.passed);
  CHECK(broken.detail.find("[FAIL]") != std::string::npos);
}

TEST_CASE("cli: list-systems") {
  const Outcome r = run_cli("list-systems");
  CHECK(r.code == 0);
  CHECK(r.output.find("doubling") != std::string::npos);
  CHECK(r.output.find("lorenz63") != std::string::npos);
  CHECK(std::count(r.output.begin(), r.output.end(), '\n') >= 5);
}

TEST_CASE("cli: run writes every artifact, byte-identically") {
  const fs::path dir = scratch("run");
  std::ofstream(dir / "small.ini") << kSmallDoubling;
  const Outcome a = run_cli("run --config " + (dir / "small.ini").string() + " --out " + (dir / "a").string());
  REQUIRE(a.code == 0);
  for (const char* f : {"orbit.csv", "tangent.csv", "adjoint.csv", "report.json", "report.csv", "ruelle.csv",
                        "diagnostics.json", "effective_config.ini"}) {
    CHECK(fs::exists(dir / "a" / f));
  }
  const Json report = Json::parse(slurp(dir / "a" / "report.json"));
  const double sc = report["sc_adjoint"]["value"].get<double>();
  CHECK(std::abs(sc) <= 3.0 * report["sc_adjoint"]["stderr"].get<double>());
  const Outcome b = run_cli("run --config " + (dir / "small.ini").string() + " --out " + (dir / "b").string());
  REQUIRE(b.code == 0);
  CHECK(slurp(dir / "a" / "report.json") == slurp(dir / "b" / "report.json"));
  CHECK(slurp(dir / "a" / "orbit.csv") == slurp(dir / "b" / "orbit.csv"));
  const Outcome c = run_cli("run --config " + (dir / "a" / "effective_config.ini").string() + " --out " +
                            (dir / "c").string());
  REQUIRE(c.code == 0);
  CHECK(slurp(dir / "a" / "report.json") == slurp(dir / "c" / "report.json"));
  const Outcome d = run_cli("run --config " + (dir / "small.ini").string() + " --seed 4 --out " + (dir / "d").string());
  REQUIRE(d.code == 0);
  CHECK(slurp(dir / "a" / "report.json") != slurp(dir / "d" / "report.json"));
}

TEST_CASE("cli: config and solver errors") {
  const fs::path dir = scratch("errors");
  std::ofstream(dir / "bad.ini") << "[system]\nname = cat\n[solver]\nunstable_dimension = 3\n";
  const Outcome bad = run_cli("run --config " + (dir / "bad.ini").string() + " --out " + (dir / "bad").string());
  CHECK(bad.code == 2);
  CHECK(bad.output.find("bad.ini:4") != std::string::npos);
  CHECK(bad.output.find("solver.unstable_dimension") != std::string::npos);
  std::ofstream(dir / "short.ini") << "[system]\nname = cat\n[orbit]\nsteps = 20\n";
  const Outcome s = run_cli("run --config " + (dir / "short.ini").string() + " --out " + (dir / "short").string());
  CHECK(s.code == 3);
  const Json diag = Json::parse(slurp(dir / "short" / "diagnostics.json"));
  CHECK(diag["status"] == "error");
  CHECK(diag["error"] == "insufficient-orbit");
  CHECK(run_cli("run --config " + (dir / "missing.ini").string()).code == 2);
}

TEST_CASE("cli: validate filtering and mutation check") {
  const Outcome d = run_cli("validate --only duality");
  CHECK(d.code == 0);
  CHECK(d.output.find("PASS  4 duality") != std::string::npos);
  CHECK(d.output.find("closed_form") == std::string::npos);
  const Outcome m = run_cli("validate --inject-pullback-sign-flip --only adjoint_pairing,closed_form");
  CHECK(m.code == 1);
  CHECK(m.output.find("FAIL  0 adjoint_pairing") != std::string::npos);
  CHECK(m.output.find("[0 adjoint_pairing]") != std::string::npos);
  CHECK(run_cli("validate --only nothing").code == 1);
}
