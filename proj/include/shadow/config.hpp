/**
 * @file config.hpp
 * @brief Experiment configuration: an INI file with a strict schema.
 *
 *     [system]     name (required), parameter, time_step
 *     [orbit]      steps, spinup, seed
 *     [solver]     mode = both | tangent | adjoint, unstable_dimension,
 *                  segment_length, formulation = terminal_constraint |
 *                  segmented_least_squares, splitting = true | false
 *     [baseline]   fd, fd_h, fd_steps, fd_ensemble, ruelle, ruelle_terms, ruelle_ensemble
 *     [tolerance]  stderr_multiple, relative
 *     [output]     directory
 *
 * Unknown sections or keys are rejected. Errors carry the file name and line.
 */
#pragma once

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "shadow/container.hpp"

namespace shadow {

struct ExperimentConfig {
  ReportSettings report;
  std::string output_directory = "shadow_out";
};

class ConfigError : public ShadowingError {
 public:
  ConfigError(const std::string& where, std::size_t line, const std::string& what)
      : ShadowingError(ErrorCode::configuration,
                       where + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + what),
        line_(line) {}

  [[nodiscard]] std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

namespace detail {

inline const std::map<std::string, std::set<std::string>>& config_schema() {
  static const std::map<std::string, std::set<std::string>> schema{
      {"system", {"name", "parameter", "time_step"}},
      {"orbit", {"steps", "spinup", "seed"}},
      {"solver", {"mode", "unstable_dimension", "segment_length", "formulation", "splitting"}},
      {"baseline", {"fd", "fd_h", "fd_steps", "fd_ensemble", "ruelle", "ruelle_terms", "ruelle_ensemble"}},
      {"tolerance", {"stderr_multiple", "relative"}},
      {"output", {"directory"}},
  };
  return schema;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Line numbers of sections and "section.key" entries in the raw text.
inline std::map<std::string, std::size_t> config_lines(const std::string& text) {
  std::map<std::string, std::size_t> out;
  std::istringstream is(text);
  std::string line;
  std::string section;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    const std::string t = trim(line);
    if (t.empty() || t[0] == ';' || t[0] == '#') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = trim(t.substr(1, t.size() - 2));
      out.emplace(section, n);
      continue;
    }
    const auto eq = t.find('=');
    if (eq != std::string::npos) out.emplace(section + "." + trim(t.substr(0, eq)), n);
  }
  return out;
}

class ConfigReader {
 public:
  ConfigReader(std::string where, const std::string& text) : where_(std::move(where)), lines_(config_lines(text)) {
    std::istringstream is(text);
    try {
      boost::property_tree::ini_parser::read_ini(is, tree_);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError(where_, e.line(), e.message());
    }
    for (const auto& [section, body] : tree_) {
      const auto it = config_schema().find(section);
      if (body.empty() && !body.data().empty()) {
        throw ConfigError(where_, line_of(section), "key '" + section + "' outside a section");
      }
      if (it == config_schema().end()) {
        throw ConfigError(where_, line_of(section), "unknown section [" + section + "]");
      }
      for (const auto& [key, value] : body) {
        if (it->second.count(key) == 0) {
          throw ConfigError(where_, line_of(section + "." + key), "unknown key '" + section + "." + key + "'");
        }
      }
    }
  }

  [[nodiscard]] std::size_t line_of(const std::string& key) const {
    const auto it = lines_.find(key);
    return it == lines_.end() ? 0 : it->second;
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError(where_, line_of(key), key + ": " + what);
  }

  [[nodiscard]] std::optional<std::string> raw(const std::string& key) const {
    if (auto v = tree_.get_optional<std::string>(boost::property_tree::ptree::path_type(key, '.'))) {
      return trim(*v);
    }
    return std::nullopt;
  }

  [[nodiscard]] std::optional<double> real(const std::string& key) const {
    const auto s = raw(key);
    if (!s) return std::nullopt;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s->data(), s->data() + s->size(), v);
    if (ec != std::errc() || ptr != s->data() + s->size() || !std::isfinite(v)) {
      fail(key, "expected a finite number, got '" + *s + "'");
    }
    return v;
  }

  [[nodiscard]] std::optional<long long> integer(const std::string& key) const {
    const auto s = raw(key);
    if (!s) return std::nullopt;
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s->data(), s->data() + s->size(), v);
    if (ec != std::errc() || ptr != s->data() + s->size()) {
      fail(key, "expected an integer, got '" + *s + "'");
    }
    return v;
  }

  [[nodiscard]] std::optional<bool> boolean(const std::string& key) const {
    const auto s = raw(key);
    if (!s) return std::nullopt;
    if (*s == "true" || *s == "yes" || *s == "1") return true;
    if (*s == "false" || *s == "no" || *s == "0") return false;
    fail(key, "expected true or false, got '" + *s + "'");
  }

 private:
  std::string where_;
  std::map<std::string, std::size_t> lines_;
  boost::property_tree::ptree tree_;
};

}  // namespace detail

/// Parses and validates configuration text; `where` names the source in messages.
[[nodiscard]] inline ExperimentConfig parse_config(const std::string& text, const std::string& where = "config") {
  const detail::ConfigReader in(where, text);
  ExperimentConfig cfg;
  ReportSettings& r = cfg.report;

  const auto name = in.raw("system.name");
  if (!name || name->empty()) {
    throw ConfigError(where, in.line_of("system"), "system.name is required");
  }
  SystemPtr sys;
  try {
    sys = make_system(*name);
  } catch (const ShadowingError&) {
    in.fail("system.name", "unknown system '" + *name + "'");
  }
  r.system = *name;
  const bool flow = sys->kind() == SystemKind::flow;
  r.parameter = in.real("system.parameter");
  if (auto dt = in.real("system.time_step")) {
    if (!flow) in.fail("system.time_step", "only applies to flows");
    if (!(*dt > 0.0)) in.fail("system.time_step", "must be positive");
    r.time_step = *dt;
  }

  auto positive = [&](const std::string& key, long long min) -> std::optional<std::size_t> {
    const auto v = in.integer(key);
    if (!v) return std::nullopt;
    if (*v < min) in.fail(key, "must be at least " + std::to_string(min));
    return static_cast<std::size_t>(*v);
  };
  if (auto v = positive("orbit.steps", 1)) r.steps = *v;
  if (auto v = positive("orbit.spinup", 0)) r.spinup = *v;
  if (auto v = positive("orbit.seed", 0)) r.seed = *v;

  if (auto mode = in.raw("solver.mode")) {
    if (*mode == "both") {
      r.tangent = r.adjoint = true;
    } else if (*mode == "tangent") {
      r.tangent = true;
      r.adjoint = false;
    } else if (*mode == "adjoint") {
      r.tangent = false;
      r.adjoint = true;
    } else {
      in.fail("solver.mode", "expected both, tangent or adjoint, got '" + *mode + "'");
    }
  }
  if (auto u = in.integer("solver.unstable_dimension")) {
    const long long cap = flow ? sys->dimension() - 1 : sys->dimension();
    if (*u < 0 || *u > cap) {
      in.fail("solver.unstable_dimension", "value " + std::to_string(*u) + " outside [0, " + std::to_string(cap) +
                                               "] for " + r.system + " (dimension " +
                                               std::to_string(sys->dimension()) + ")");
    }
    r.unstable_dimension = static_cast<Index>(*u);
  }
  if (auto v = positive("solver.segment_length", 1)) r.segment_length = *v;
  if (auto f = in.raw("solver.formulation")) {
    if (*f == "terminal_constraint") {
      r.formulation = Formulation::terminal_constraint;
    } else if (*f == "segmented_least_squares") {
      r.formulation = Formulation::segmented_least_squares;
    } else {
      in.fail("solver.formulation", "expected terminal_constraint or segmented_least_squares, got '" + *f + "'");
    }
  }
  if (auto b = in.boolean("solver.splitting")) r.splitting = *b;

  if (auto b = in.boolean("baseline.fd")) r.fd = *b;
  if (auto h = in.real("baseline.fd_h")) {
    if (!(*h > 0.0)) in.fail("baseline.fd_h", "must be positive");
    r.fd_h = *h;
  }
  if (auto v = positive("baseline.fd_steps", 1)) r.fd_steps = *v;
  if (auto v = positive("baseline.fd_ensemble", 2)) r.fd_ensemble = *v;
  if (auto b = in.boolean("baseline.ruelle")) r.ruelle = *b;
  if (auto v = positive("baseline.ruelle_terms", 0)) r.ruelle_terms = *v;
  if (auto v = positive("baseline.ruelle_ensemble", 2)) r.ruelle_ensemble = *v;

  if (auto k = in.real("tolerance.stderr_multiple")) {
    if (!(*k > 0.0)) in.fail("tolerance.stderr_multiple", "must be positive");
    r.stderr_multiple = *k;
  }
  if (auto k = in.real("tolerance.relative")) {
    if (!(*k >= 0.0)) in.fail("tolerance.relative", "must be non-negative");
    r.relative_tolerance = *k;
  }
  if (auto d = in.raw("output.directory")) {
    if (d->empty()) in.fail("output.directory", "must not be empty");
    cfg.output_directory = *d;
  }
  return cfg;
}

[[nodiscard]] inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    throw ConfigError(path, 0, "cannot read configuration file");
  }
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), path);
}

/// The configuration with every default resolved, as INI text.
[[nodiscard]] inline std::string effective_config(const ExperimentConfig& cfg) {
  const ReportSettings& r = cfg.report;
  const SystemPtr sys = make_system(r.system);
  const bool flow = sys->kind() == SystemKind::flow;
  const double dt = flow ? (r.time_step > 0.0 ? r.time_step : sys->default_time_step()) : 0.0;
  std::ostringstream os;
  os << "# format_version=" << kFormatVersion << "\n";
  os << "[system]\nname = " << r.system << "\n";
  os << "parameter = " << format_number(r.parameter.value_or(sys->default_parameter())) << "\n";
  if (flow) os << "time_step = " << format_number(dt) << "\n";
  os << "\n[orbit]\nsteps = " << r.steps << "\n";
  os << "spinup = " << (r.spinup > 0 ? r.spinup : default_spinup_steps(*sys, dt)) << "\n";
  os << "seed = " << r.seed << "\n";
  os << "\n[solver]\nmode = " << (r.tangent && r.adjoint ? "both" : (r.tangent ? "tangent" : "adjoint")) << "\n";
  os << "unstable_dimension = " << r.unstable_dimension.value_or(sys->unstable_dimension()) << "\n";
  os << "segment_length = " << (r.segment_length > 0 ? r.segment_length : default_segment_length(*sys, dt)) << "\n";
  os << "formulation = " << to_string(r.formulation) << "\n";
  os << "splitting = " << (r.splitting ? "true" : "false") << "\n";
  os << "\n[baseline]\nfd = " << (r.fd ? "true" : "false") << "\n";
  os << "fd_h = " << format_number(r.fd_h) << "\nfd_steps = " << r.fd_steps << "\nfd_ensemble = " << r.fd_ensemble
     << "\n";
  os << "ruelle = " << (r.ruelle ? "true" : "false") << "\nruelle_terms = " << r.ruelle_terms
     << "\nruelle_ensemble = " << r.ruelle_ensemble << "\n";
  os << "\n[tolerance]\nstderr_multiple = " << format_number(r.stderr_multiple)
     << "\nrelative = " << format_number(r.relative_tolerance) << "\n";
  os << "\n[output]\ndirectory = " << cfg.output_directory << "\n";
  return os.str();
}

}  // namespace shadow
