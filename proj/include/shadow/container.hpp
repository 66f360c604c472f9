/**
 * @file container.hpp
 * @brief CSV containers for orbits and per-step fields, and JSON reports.
 *
 * Container layout (text, one record per line):
 *
 *     # format=shadow-container
 *     # format_version=1
 *     # content=<orbit|tangent|adjoint|splitting|...>
 *     # system=<name>
 *     # parameter=<gamma>
 *     # steps=<N>
 *     # time_step=<dt, 0 for maps>
 *     # seed=<seed>
 *     # spinup=<discarded steps>
 *     # ...further key=value lines
 *     n,<column>,<column>,...
 *     0,<value>,...
 *
 * Numbers are written with 17 significant digits so that reading back is exact.
 */
#pragma once

#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "shadow/response.hpp"
#include "shadow/splitting.hpp"

namespace shadow {

inline constexpr int kFormatVersion = 1;

[[nodiscard]] inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Header metadata plus a numeric table.
struct Container {
  std::map<std::string, std::string> header;
  std::vector<std::string> columns;  // excluding the leading index column
  std::vector<std::vector<double>> rows;
};

inline void write_container(std::ostream& os, const Container& c) {
  os << "# format=shadow-container\n";
  os << "# format_version=" << kFormatVersion << "\n";
  for (const auto& [k, v] : c.header) {
    if (k == "format" || k == "format_version") continue;
    os << "# " << k << "=" << v << "\n";
  }
  os << "n";
  for (const auto& col : c.columns) os << "," << col;
  os << "\n";
  for (std::size_t i = 0; i < c.rows.size(); ++i) {
    os << i;
    for (double v : c.rows[i]) os << "," << format_number(v);
    os << "\n";
  }
}

[[nodiscard]] inline Container read_container(std::istream& is) {
  Container c;
  std::string line;
  bool have_columns = false;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      std::string key = line.substr(1, eq - 1);
      key.erase(0, key.find_first_not_of(' '));
      c.header[key] = line.substr(eq + 1);
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!have_columns) {
      c.columns.assign(cells.begin() + 1, cells.end());
      have_columns = true;
      continue;
    }
    if (cells.size() != c.columns.size() + 1) {
      throw ShadowingError(ErrorCode::io, "line " + std::to_string(line_no) + ": expected " +
                                              std::to_string(c.columns.size() + 1) + " cells");
    }
    std::vector<double> row;
    for (std::size_t i = 1; i < cells.size(); ++i) row.push_back(std::stod(cells[i]));
    c.rows.push_back(std::move(row));
  }
  if (c.header.count("format_version") == 0 || std::stoi(c.header["format_version"]) != kFormatVersion) {
    throw ShadowingError(ErrorCode::io, "missing or unsupported format_version");
  }
  return c;
}

[[nodiscard]] inline std::map<std::string, std::string> orbit_header(const Orbit& o, const std::string& content) {
  std::map<std::string, std::string> h;
  h["content"] = content;
  h["system"] = o.system->name();
  h["parameter"] = format_number(o.parameter);
  h["steps"] = std::to_string(o.steps());
  h["time_step"] = format_number(o.time_step);
  h["seed"] = std::to_string(o.seed);
  h["spinup"] = std::to_string(o.spinup);
  return h;
}

[[nodiscard]] inline Container orbit_container(const Orbit& o) {
  Container c;
  c.header = orbit_header(o, "orbit");
  if (o.preimage) {
    std::string pre;
    for (Index i = 0; i < o.preimage->size(); ++i) pre += (i ? ";" : "") + format_number((*o.preimage)[i]);
    c.header["preimage"] = pre;
  }
  for (Index i = 0; i < o.dimension(); ++i) c.columns.push_back("x" + std::to_string(i));
  for (const Vector& x : o.states) c.rows.emplace_back(x.data(), x.data() + x.size());
  return c;
}

[[nodiscard]] inline Orbit orbit_from_container(const Container& c) {
  auto get = [&](const char* k) {
    auto it = c.header.find(k);
    if (it == c.header.end()) throw ShadowingError(ErrorCode::io, std::string("container lacks ") + k);
    return it->second;
  };
  Orbit o;
  o.system = make_system(get("system"));
  o.parameter = std::stod(get("parameter"));
  o.time_step = std::stod(get("time_step"));
  o.seed = std::stoull(get("seed"));
  o.spinup = std::stoull(get("spinup"));
  if (auto it = c.header.find("preimage"); it != c.header.end()) {
    std::vector<double> v;
    std::stringstream ss(it->second);
    std::string cell;
    while (std::getline(ss, cell, ';')) v.push_back(std::stod(cell));
    o.preimage = Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
  }
  for (const auto& row : c.rows) o.states.emplace_back(Eigen::Map<const Vector>(row.data(), static_cast<Index>(row.size())));
  if (o.states.size() != std::stoull(get("steps")) + 1) {
    throw ShadowingError(ErrorCode::io, "row count does not match steps");
  }
  return o;
}

/// Per-step vector fields (and optional scalar fields) stored alongside an orbit.
[[nodiscard]] inline Container field_container(const Orbit& o, const std::string& content,
                                               const std::vector<std::pair<std::string, const std::vector<Vector>*>>& vectors,
                                               const std::vector<std::pair<std::string, const std::vector<double>*>>& scalars = {}) {
  Container c;
  c.header = orbit_header(o, content);
  for (const auto& [name, field] : vectors) {
    for (Index i = 0; i < o.dimension(); ++i) c.columns.push_back(name + std::to_string(i));
  }
  for (const auto& [name, field] : scalars) c.columns.push_back(name);
  for (std::size_t n = 0; n < o.states.size(); ++n) {
    std::vector<double> row;
    for (const auto& [name, field] : vectors) {
      for (Index i = 0; i < o.dimension(); ++i) row.push_back((*field)[n][i]);
    }
    for (const auto& [name, field] : scalars) row.push_back((*field)[n]);
    c.rows.push_back(std::move(row));
  }
  return c;
}

[[nodiscard]] inline Container bundle_container(const Orbit& o, const SolutionBundle& b, const std::string& content) {
  Container c;
  c.header = orbit_header(o, content);
  c.header["direction"] = b.backward ? "backward" : "forward";
  c.header["homogeneous"] = b.homogeneous ? "true" : "false";
  std::string bounds;
  for (std::size_t i = 0; i < b.boundaries.size(); ++i) bounds += (i ? ";" : "") + std::to_string(b.boundaries[i]);
  c.header["boundaries"] = bounds;
  std::string logs;
  for (std::size_t i = 0; i < b.r.size(); ++i) {
    for (Index j = 0; j < b.r[i].rows(); ++j) {
      logs += (logs.empty() ? "" : ";") + format_number(std::log(b.r[i](j, j)));
    }
  }
  c.header["log_r_diagonal"] = logs;
  const Index k = b.columns.empty() ? 0 : b.columns.front().cols();
  for (Index j = 0; j < k; ++j) {
    for (Index i = 0; i < o.dimension(); ++i) c.columns.push_back("w" + std::to_string(j) + "_" + std::to_string(i));
  }
  for (const Matrix& w : b.columns) {
    std::vector<double> row;
    for (Index j = 0; j < w.cols(); ++j) {
      for (Index i = 0; i < w.rows(); ++i) row.push_back(w(i, j));
    }
    c.rows.push_back(std::move(row));
  }
  return c;
}

[[nodiscard]] inline Container splitting_container(const Orbit& o, const SplittingData& s) {
  Container c;
  c.header = orbit_header(o, "splitting");
  std::string ex;
  for (std::size_t i = 0; i < s.exponents.size(); ++i) ex += (i ? ";" : "") + format_number(s.exponents[i]);
  c.header["exponents"] = ex;
  c.header["interior"] = std::to_string(s.first) + ";" + std::to_string(s.last);
  const Index m = o.dimension();
  for (Index j = 0; j < m; ++j) {
    for (Index i = 0; i < m; ++i) c.columns.push_back("e" + std::to_string(j) + "_" + std::to_string(i));
  }
  for (Index j = 0; j < m; ++j) {
    for (Index i = 0; i < m; ++i) c.columns.push_back("eps" + std::to_string(j) + "_" + std::to_string(i));
  }
  for (std::size_t n = 0; n < s.vectors.size(); ++n) {
    std::vector<double> row;
    for (const Matrix* f : {&s.vectors[n], &s.duals[n]}) {
      for (Index j = 0; j < m; ++j) {
        for (Index i = 0; i < m; ++i) row.push_back((*f)(i, j));
      }
    }
    c.rows.push_back(std::move(row));
  }
  return c;
}

// ---------------------------------------------------------------------------
// JSON

using Json = nlohmann::ordered_json;

[[nodiscard]] inline Json to_json(const Estimate& e) { return Json{{"value", e.value}, {"stderr", e.stderr_}}; }

/// JSON-safe number (NaN and infinities become null).
[[nodiscard]] inline Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

[[nodiscard]] inline Json to_json(const SolveDiagnostics& d) {
  Json logs = Json::array();
  for (const Vector& v : d.log_r_diagonal) logs.push_back(std::vector<double>(v.data(), v.data() + v.size()));
  return Json{{"formulation", to_string(d.formulation)},
              {"segments", d.segments},
              {"segment_length", d.segment_length},
              {"constraint_residual", number(d.constraint_residual)},
              {"sup_norm", number(d.sup_norm)},
              {"log_r_diagonal", logs}};
}

[[nodiscard]] inline Json to_json(const RuelleCurve& r) {
  return Json{{"terms", r.terms}, {"mean", r.mean}, {"stderr", r.stderr_}, {"variance", r.variance},
              {"truncated", r.truncated}, {"note", r.note}};
}

[[nodiscard]] inline Json to_json(const ResponseReport& r) {
  Json j;
  j["format_version"] = kFormatVersion;
  j["system"] = r.system;
  j["objective"] = r.objective;
  j["parameter"] = r.parameter;
  j["steps"] = r.steps;
  j["time_step"] = r.time_step;
  j["unstable_dimension"] = r.unstable_dimension;
  j["segment_length"] = r.segment_length;
  j["seed"] = r.seed;
  j["formulation"] = r.formulation;
  j["sc_tangent"] = r.sc_tangent ? to_json(*r.sc_tangent) : Json(nullptr);
  j["sc_adjoint"] = r.sc_adjoint ? to_json(*r.sc_adjoint) : Json(nullptr);
  if (r.fd) {
    j["fd"] = Json{{"value", r.fd->estimate.value},
                   {"stderr", r.fd->estimate.stderr_},
                   {"h", r.fd->settings.h},
                   {"steps", r.fd->settings.steps},
                   {"time", static_cast<double>(r.fd->settings.steps) *
                                (r.fd->settings.time_step > 0.0 ? r.fd->settings.time_step : 1.0)},
                   {"ensemble", r.fd->settings.ensemble}};
  } else {
    j["fd"] = nullptr;
  }
  j["ruelle"] = r.ruelle ? to_json(*r.ruelle) : Json(nullptr);
  j["uc_residual"] = r.uc_residual ? to_json(*r.uc_residual) : Json(nullptr);
  j["diagnostics"] = Json{{"duality_gap", number(r.duality_gap)},
                          {"boundary_terms", number(r.boundary_terms)},
                          {"summation_by_parts_residual", number(r.sbp_residual)},
                          {"tangent_constraint_residual", number(r.tangent_constraint_residual)},
                          {"adjoint_constraint_residual", number(r.adjoint_constraint_residual)},
                          {"center_defect", number(r.center_defect)}};
  Json checks = Json::array();
  for (const Check& c : r.checks) {
    checks.push_back(Json{{"name", c.name}, {"passed", c.passed}, {"informational", c.informational},
                          {"detail", c.detail}});
  }
  j["checks"] = checks;
  j["notes"] = r.notes;
  j["passed"] = r.passed();
  return j;
}

/// quantity,value,stderr rows for the scalar estimates of a report.
inline void write_report_csv(std::ostream& os, const ResponseReport& r) {
  os << "# format_version=" << kFormatVersion << "\n";
  os << "quantity,value,stderr\n";
  auto row = [&](const char* name, const std::optional<Estimate>& e) {
    if (e) os << name << "," << format_number(e->value) << "," << format_number(e->stderr_) << "\n";
  };
  row("sc_tangent", r.sc_tangent);
  row("sc_adjoint", r.sc_adjoint);
  if (r.fd) row("fd", r.fd->estimate);
  row("uc_residual", r.uc_residual);
}

inline void write_ruelle_csv(std::ostream& os, const RuelleCurve& r) {
  os << "# format_version=" << kFormatVersion << "\n";
  if (r.truncated) os << "# note=" << r.note << "\n";
  os << "W,mean,stderr,variance\n";
  for (std::size_t i = 0; i < r.terms.size(); ++i) {
    os << r.terms[i] << "," << format_number(r.mean[i]) << "," << format_number(r.stderr_[i]) << ","
       << format_number(r.variance[i]) << "\n";
  }
}

[[nodiscard]] inline Json splitting_json(const SplittingData& s) {
  return Json{{"exponents", s.exponents},
              {"exponent_stderr", s.exponent_stderr},
              {"unstable", s.unstable},
              {"center", s.center},
              {"stable", s.stable},
              {"interior", {s.first, s.last}},
              {"hyperbolicity_c", number(s.hyperbolicity_c)},
              {"hyperbolicity_lambda", number(s.hyperbolicity_lambda)},
              {"min_angle", s.min_angle},
              {"warnings", s.warnings}};
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ShadowingError(ErrorCode::io, "cannot write " + path);
  f << text;
  if (!f) throw ShadowingError(ErrorCode::io, "write failed for " + path);
}

inline void write_container(const std::string& path, const Container& c) {
  std::ostringstream os;
  write_container(os, c);
  write_text(path, os.str());
}

}  // namespace shadow
