/**
 * @file response.hpp
 * @brief Shadowing contributions, the pair product, and the finite-difference
 * and Ruelle-series baselines.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "shadow/adjoint.hpp"
#include "shadow/fields.hpp"
#include "shadow/splitting.hpp"
#include "shadow/tangent.hpp"

namespace shadow {

/// Orbit average of Phi: plain mean for maps, trapezoid rule for flows.
[[nodiscard]] inline double orbit_average(const Orbit& orbit, const std::vector<double>& samples) {
  return orbit.is_flow() ? trapezoid_mean(samples).value : batch_mean(samples).value;
}

/// (dPhi, Phi - rho(Phi)) with rho(Phi) estimated from the same orbit. Maps get an empty psi.
[[nodiscard]] inline AdmissiblePair canonical_pair(const Orbit& orbit, const Objective& phi) {
  AdmissiblePair pair;
  pair.omega = CovectorField::from_objective(phi);
  if (orbit.is_flow()) {
    pair.psi = objective_samples(orbit, phi);
    const double mean = orbit_average(orbit, pair.psi);
    for (double& p : pair.psi) {
      p -= mean;
    }
  }
  return pair;
}

inline double combined_stderr(const Estimate& a, const Estimate& b) {
  return std::hypot(a.stderr_, b.stderr_);
}

/// <<v, eta; omega, psi>> = rho(omega v) - rho(eta psi) as an orbit average over
/// the window (trapezoid rule for flows), with a batch-means error.
[[nodiscard]] inline Estimate pair_product(const Orbit& orbit, const ShadowingPair& pair, const AdmissiblePair& adm,
                                           const Window& window) {
  const std::size_t len = orbit.states.size();
  if (pair.v.size() != len || (pair.has_eta() && pair.eta.size() != len) ||
      (orbit.is_flow() && adm.psi.size() != len)) {
    throw ShadowingError(ErrorCode::length_mismatch, "pair, admissible pair and orbit lengths differ");
  }
  if (orbit.is_flow() && !pair.has_eta()) {
    throw ShadowingError(ErrorCode::length_mismatch, "flow pair needs eta");
  }
  std::vector<double> integrand;
  integrand.reserve(window.size());
  for (std::size_t n = window.first; n < window.last; ++n) {
    double value = adm.omega.at(n, orbit.states[n]).dot(pair.v[n]);
    if (orbit.is_flow()) {
      value -= pair.eta[n] * adm.psi[n];
    }
    integrand.push_back(value);
  }
  return orbit.is_flow() ? trapezoid_mean(integrand) : batch_mean(integrand);
}

/// Shifted pair (v - h F, eta + F(h)) for a scalar h with differential dh.
[[nodiscard]] inline ShadowingPair gauge_shift(const Orbit& orbit, const ShadowingPair& pair, const Objective& h) {
  require_kind(*orbit.system, SystemKind::flow);
  ShadowingPair out = pair;
  for (std::size_t n = 0; n < orbit.states.size(); ++n) {
    const Vector f = orbit.system->evaluate(orbit.states[n], orbit.parameter);
    out.v[n] -= h.value(orbit.states[n]) * f;
    out.eta[n] += h.differential(orbit.states[n]).dot(f);
  }
  return out;
}

struct ScOptions {
  std::size_t segment_length = 0;  // 0: system default
  SolveOptions solve;
  bool tangent = true;
  bool adjoint = true;
};

/// Tangent and adjoint shadowing contributions on one orbit.
struct ScResult {
  std::optional<Estimate> tangent;
  std::optional<Estimate> adjoint;
  Window window;
  /// Discrete summation-by-parts identity over the whole orbit: |lhs - rhs|.
  double sbp_residual = std::numeric_limits<double>::quiet_NaN();
  /// |nu_a(v_a) - nu_b(v_b)| / (b - a) over the averaging window.
  double boundary_terms = std::numeric_limits<double>::quiet_NaN();
  std::optional<ShadowingPair> pair;
  std::optional<ShadowingCovector> covector;
  AdmissiblePair admissible;

  [[nodiscard]] double duality_gap() const {
    return tangent && adjoint ? tangent->value - adjoint->value : std::numeric_limits<double>::quiet_NaN();
  }
  [[nodiscard]] double combined_error() const {
    return tangent && adjoint ? combined_stderr(*tangent, *adjoint) : std::numeric_limits<double>::quiet_NaN();
  }
};

/// SC for maps: mean of dPhi_n(v_n) for n in [a, b) and of nu_n(X_n) for n in
/// (a, b], the shifted windows making the gap exactly the boundary term.
[[nodiscard]] inline ScResult sc_discrete(const Orbit& orbit, Index u, const Objective& phi, const Perturbation& p,
                                          const ScOptions& opt = {}) {
  require_kind(*orbit.system, SystemKind::map);
  const std::size_t seg = opt.segment_length > 0 ? opt.segment_length : default_segment_length(*orbit.system);
  ScResult out;
  out.window = interior(orbit);
  if (out.window.size() < 2) {
    throw ShadowingError(ErrorCode::insufficient_orbit, "orbit too short for an interior window");
  }
  out.admissible = canonical_pair(orbit, phi);
  const std::size_t a = out.window.first;
  const std::size_t b = out.window.last - 1;
  if (opt.tangent) {
    out.pair = nilss_solve(orbit, u, seg, p, opt.solve);
    std::vector<double> s;
    for (std::size_t n = a; n < b; ++n) {
      s.push_back(phi.differential(orbit.states[n]).dot(out.pair->v[n]));
    }
    out.tangent = batch_mean(s);
  }
  if (opt.adjoint) {
    out.covector = nilsas_solve(orbit, out.admissible.omega, u, seg, opt.solve);
    std::vector<double> s;
    for (std::size_t n = a + 1; n <= b; ++n) {
      s.push_back(out.covector->nu[n].dot(perturbation_at(orbit, p, n)));
    }
    out.adjoint = batch_mean(s);
  }
  if (out.pair && out.covector) {
    const auto& v = out.pair->v;
    const auto& nu = out.covector->nu;
    const std::size_t n_steps = orbit.steps();
    double lhs = 0.0;
    for (std::size_t n = 0; n < n_steps; ++n) {
      lhs += phi.differential(orbit.states[n]).dot(v[n]);
      lhs -= nu[n + 1].dot(perturbation_at(orbit, p, n + 1));
    }
    const double rhs = nu[0].dot(v[0]) - nu[n_steps].dot(v[n_steps]);
    out.sbp_residual = std::abs(lhs - rhs);
    out.boundary_terms = std::abs(nu[a].dot(v[a]) - nu[b].dot(v[b])) / static_cast<double>(b - a);
  }
  return out;
}

[[nodiscard]] inline ScResult sc_discrete(const Orbit& orbit, Index u, const ScOptions& opt = {}) {
  return sc_discrete(orbit, u, orbit.system->default_objective(), orbit.system->default_perturbation(), opt);
}

/// SC for flows: trapezoid averages of omega(v) - eta psi and of nu(X) over the
/// interior window, with the canonical admissible pair built from the orbit.
[[nodiscard]] inline ScResult sc_continuous(const Orbit& orbit, Index u, const Objective& phi, const Perturbation& p,
                                            const ScOptions& opt = {}) {
  require_kind(*orbit.system, SystemKind::flow);
  const std::size_t seg =
      opt.segment_length > 0 ? opt.segment_length : default_segment_length(*orbit.system, orbit.time_step);
  ScResult out;
  out.window = interior(orbit);
  if (out.window.size() < 2) {
    throw ShadowingError(ErrorCode::insufficient_orbit, "orbit too short for an interior window");
  }
  out.admissible = canonical_pair(orbit, phi);
  if (opt.tangent) {
    out.pair = nilss_flow_solve(orbit, u, seg, p, opt.solve);
    out.tangent = pair_product(orbit, *out.pair, out.admissible, out.window);
  }
  if (opt.adjoint) {
    out.covector = nilsas_flow_solve(orbit, out.admissible, u, seg, opt.solve);
    std::vector<double> s;
    for (std::size_t n = out.window.first; n < out.window.last; ++n) {
      s.push_back(out.covector->nu[n].dot(p.field(orbit.states[n])));
    }
    out.adjoint = trapezoid_mean(s);
  }
  if (out.pair && out.covector) {
    // discrete identity: sum_n [w_n(v_n) - nu_{n+1}(b_n) + tau_n nu_{n+1}(F_{n+1})] = nu_0(v_0) - nu_N(v_N)
    const auto& v = out.pair->v;
    const auto& nu = out.covector->nu;
    const std::vector<Vector> w = adjoint_forcing(orbit, out.admissible.omega);
    const std::vector<Vector> b = tangent_forcing(orbit, p);
    const std::size_t n_steps = orbit.steps();
    double lhs = 0.0;
    for (std::size_t n = 0; n < n_steps; ++n) {
      const Vector f = orbit.system->evaluate(orbit.states[n + 1], orbit.parameter);
      lhs += w[n].dot(v[n]) - nu[n + 1].dot(b[n]) + orbit.time_step * out.pair->eta[n + 1] * nu[n + 1].dot(f);
    }
    out.sbp_residual = std::abs(lhs - (nu[0].dot(v[0]) - nu[n_steps].dot(v[n_steps])));
    const std::size_t a = out.window.first;
    const std::size_t e = out.window.last - 1;
    out.boundary_terms = std::abs(nu[a].dot(v[a]) - nu[e].dot(v[e])) / (static_cast<double>(e - a) * orbit.time_step);
  }
  return out;
}

[[nodiscard]] inline ScResult sc_continuous(const Orbit& orbit, Index u, const ScOptions& opt = {}) {
  return sc_continuous(orbit, u, orbit.system->default_objective(), orbit.system->default_perturbation(), opt);
}

// ---------------------------------------------------------------------------
// Baselines

struct FdSettings {
  double parameter = 0.0;
  double h = 1e-2;
  std::size_t steps = 10000;
  std::size_t spinup = 0;  // 0: system default
  std::size_t ensemble = 8;
  std::uint64_t seed = 1;
  double time_step = 0.0;  // flows
};

struct FdResult {
  Estimate estimate;
  FdSettings settings;
  std::vector<double> members;
};

/// Central difference of orbit-averaged Phi at parameter +- h, averaged over
/// ensemble members that each draw their own initial state and spin-up.
[[nodiscard]] inline FdResult fd_response(const SystemPtr& sys, const Objective& phi, const FdSettings& s) {
  if (!(s.h > 0.0)) {
    throw ShadowingError(ErrorCode::configuration, "finite-difference step must be positive");
  }
  if (s.ensemble < 2) {
    throw ShadowingError(ErrorCode::configuration, "finite-difference ensemble needs at least 2 members");
  }
  const double dt = sys->kind() == SystemKind::flow ? (s.time_step > 0.0 ? s.time_step : sys->default_time_step()) : 0.0;
  const std::size_t spin = s.spinup > 0 ? s.spinup : default_spinup_steps(*sys, dt);
  FdResult out;
  out.settings = s;
  out.settings.time_step = dt;
  out.settings.spinup = spin;
  std::mt19937_64 seeds(s.seed);
  for (std::size_t i = 0; i < s.ensemble; ++i) {
    const std::uint64_t member_seed = seeds();
    std::mt19937_64 rng(member_seed);
    const Vector x0 = sys->random_state(rng);
    double avg[2];
    for (int side = 0; side < 2; ++side) {
      const double gamma = s.parameter + (side == 0 ? s.h : -s.h);
      const Orbit o = generate_orbit(sys, x0, gamma, s.steps, spin, member_seed, dt);
      avg[side] = orbit_average(o, objective_samples(o, phi));
    }
    out.members.push_back((avg[0] - avg[1]) / (2.0 * s.h));
  }
  out.estimate = ensemble_mean(out.members);
  return out;
}

struct RuelleSettings {
  double parameter = 0.0;
  std::size_t max_terms = 20;  // W_max, in steps
  std::size_t ensemble = 256;
  std::uint64_t seed = 1;
  std::size_t spinup = 0;  // 0: system default
  double time_step = 0.0;  // flows
};

/// Partial sums S_W = rho(sum_{n<=W} dPhi(f_*^n X)) per W with ensemble errors.
struct RuelleCurve {
  std::vector<std::size_t> terms;
  std::vector<double> mean;
  std::vector<double> stderr_;
  std::vector<double> variance;
  bool truncated = false;
  std::string note;
};

/// Largest W with exp(lambda_max W) * machine epsilon < 1 (unbounded for non-expanding systems).
[[nodiscard]] inline std::size_t ruelle_guard(const System& sys, double dt) {
  const double lam = sys.nominal_max_exponent() * (sys.kind() == SystemKind::flow ? dt : 1.0);
  if (lam <= 0.0) {
    return std::numeric_limits<std::size_t>::max();
  }
  return static_cast<std::size_t>(std::floor(-std::log(std::numeric_limits<double>::epsilon()) / lam));
}

[[nodiscard]] inline RuelleCurve ruelle_series(const SystemPtr& sys, const Objective& phi, const Perturbation& p,
                                               const RuelleSettings& s) {
  if (s.ensemble < 2) {
    throw ShadowingError(ErrorCode::configuration, "Ruelle ensemble needs at least 2 members");
  }
  const bool flow = sys->kind() == SystemKind::flow;
  const double dt = flow ? (s.time_step > 0.0 ? s.time_step : sys->default_time_step()) : 0.0;
  const std::size_t spin = std::max<std::size_t>(1, s.spinup > 0 ? s.spinup : default_spinup_steps(*sys, dt));
  RuelleCurve out;
  std::size_t w_max = s.max_terms;
  const std::size_t guard = ruelle_guard(*sys, dt);
  if (w_max > guard) {
    w_max = guard;
    out.truncated = true;
    out.note = "truncated at W = " + std::to_string(guard) + " by the explosion guard";
  }
  std::vector<std::vector<double>> partial(w_max + 1, std::vector<double>(s.ensemble, 0.0));
  std::mt19937_64 seeds(s.seed);
  for (std::size_t i = 0; i < s.ensemble; ++i) {
    const std::uint64_t member_seed = seeds();
    const Orbit o = generate_orbit(sys, std::nullopt, s.parameter, std::max<std::size_t>(1, w_max), spin, member_seed, dt);
    Vector w = perturbation_at(o, p, 0);
    double sum = 0.0;
    double prev = 0.0;
    for (std::size_t k = 0; k <= w_max; ++k) {
      const double term = phi.differential(o.states[k]).dot(w);
      if (flow) {
        sum += k == 0 ? 0.0 : 0.5 * dt * (prev + term);
      } else {
        sum += term;
      }
      prev = term;
      partial[k][i] = sum;
      if (k < w_max) {
        w = pushforward(*sys, o.states[k], s.parameter, w, dt);
      }
    }
  }
  for (std::size_t k = 0; k <= w_max; ++k) {
    const Estimate e = ensemble_mean(partial[k]);
    const double var = e.stderr_ * e.stderr_ * static_cast<double>(s.ensemble);
    if (!std::isfinite(e.value) || !std::isfinite(var) || var > kMagnitudeCap) {
      out.truncated = true;
      out.note = "truncated at W = " + std::to_string(k) + ": ensemble variance overflow";
      break;
    }
    out.terms.push_back(k);
    out.mean.push_back(e.value);
    out.stderr_.push_back(e.stderr_);
    out.variance.push_back(var);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report

/// Everything needed to assemble a response report for one system.
struct ReportSettings {
  std::string system;
  std::optional<double> parameter;
  std::size_t steps = 10000;
  std::size_t spinup = 0;
  double time_step = 0.0;
  std::optional<Index> unstable_dimension;
  std::size_t segment_length = 0;
  bool tangent = true;
  bool adjoint = true;
  Formulation formulation = Formulation::terminal_constraint;
  std::uint64_t seed = 1;
  bool splitting = false;
  // baselines
  bool fd = true;
  double fd_h = 1e-2;
  std::size_t fd_steps = 10000;
  std::size_t fd_ensemble = 8;
  bool ruelle = true;
  std::size_t ruelle_terms = 20;
  std::size_t ruelle_ensemble = 256;
  // tolerances
  double stderr_multiple = 3.0;
  double relative_tolerance = 0.1;
};

struct Check {
  std::string name;
  bool passed = false;
  bool informational = false;
  std::string detail;
};

struct ResponseReport {
  std::string system;
  std::string objective;
  double parameter = 0.0;
  std::size_t steps = 0;
  double time_step = 0.0;
  Index unstable_dimension = 0;
  std::size_t segment_length = 0;
  std::uint64_t seed = 0;
  std::string formulation;
  std::optional<Estimate> sc_tangent;
  std::optional<Estimate> sc_adjoint;
  std::optional<FdResult> fd;
  std::optional<RuelleCurve> ruelle;
  std::optional<Estimate> uc_residual;
  double duality_gap = std::numeric_limits<double>::quiet_NaN();
  double boundary_terms = std::numeric_limits<double>::quiet_NaN();
  double sbp_residual = std::numeric_limits<double>::quiet_NaN();
  double tangent_constraint_residual = std::numeric_limits<double>::quiet_NaN();
  double adjoint_constraint_residual = std::numeric_limits<double>::quiet_NaN();
  double center_defect = std::numeric_limits<double>::quiet_NaN();  // flows: sup |nu(F) + psi| on the interior
  std::vector<std::string> notes;
  std::vector<Check> checks;

  [[nodiscard]] bool passed() const {
    for (const Check& c : checks) {
      if (!c.passed && !c.informational) return false;
    }
    return true;
  }
};

/// Products of one report run, kept for serialization.
struct ReportArtifacts {
  Orbit orbit;
  ScResult sc;
  std::optional<SplittingData> splitting;
  ResponseReport report;
};

[[nodiscard]] inline ReportArtifacts run_report(const ReportSettings& cfg) {
  const SystemPtr sys = make_system(cfg.system);
  const bool flow = sys->kind() == SystemKind::flow;
  const double dt = flow ? (cfg.time_step > 0.0 ? cfg.time_step : sys->default_time_step()) : 0.0;
  const double gamma = cfg.parameter.value_or(sys->default_parameter());
  const Index u = cfg.unstable_dimension.value_or(sys->unstable_dimension());
  const std::size_t seg = cfg.segment_length > 0 ? cfg.segment_length : default_segment_length(*sys, dt);
  const std::size_t spin = cfg.spinup > 0 ? cfg.spinup : default_spinup_steps(*sys, dt);
  const Objective phi = sys->default_objective();
  const Perturbation p = sys->default_perturbation();

  ReportArtifacts art;
  art.orbit = generate_orbit(sys, std::nullopt, gamma, cfg.steps, spin, cfg.seed, dt);
  ResponseReport& r = art.report;
  r.system = sys->name();
  r.objective = phi.name;
  r.parameter = gamma;
  r.steps = cfg.steps;
  r.time_step = dt;
  r.unstable_dimension = u;
  r.segment_length = seg;
  r.seed = cfg.seed;
  r.formulation = to_string(cfg.formulation);

  ScOptions opt;
  opt.segment_length = seg;
  opt.solve.formulation = cfg.formulation;
  opt.solve.seed = cfg.seed + 101;
  opt.tangent = cfg.tangent;
  opt.adjoint = cfg.adjoint;
  art.sc = flow ? sc_continuous(art.orbit, u, phi, p, opt) : sc_discrete(art.orbit, u, phi, p, opt);
  r.sc_tangent = art.sc.tangent;
  r.sc_adjoint = art.sc.adjoint;
  r.duality_gap = art.sc.duality_gap();
  r.boundary_terms = art.sc.boundary_terms;
  r.sbp_residual = art.sc.sbp_residual;
  if (art.sc.pair) r.tangent_constraint_residual = art.sc.pair->diagnostics.constraint_residual;
  if (art.sc.covector) {
    r.adjoint_constraint_residual = art.sc.covector->diagnostics.constraint_residual;
    if (flow) {
      double worst = 0.0;
      for (std::size_t n = art.sc.window.first; n < art.sc.window.last; ++n) {
        worst = std::max(worst, std::abs(art.sc.covector->center_defect[n]));
      }
      r.center_defect = worst;
    }
  }
  if (cfg.splitting) {
    art.splitting = compute_splitting(art.orbit);
    for (const auto& w : art.splitting->warnings) r.notes.push_back(w);
  }
  if (cfg.fd) {
    FdSettings fs;
    fs.parameter = gamma;
    fs.h = cfg.fd_h;
    fs.steps = cfg.fd_steps;
    fs.spinup = spin;
    fs.ensemble = cfg.fd_ensemble;
    fs.seed = cfg.seed + 202;
    fs.time_step = dt;
    r.fd = fd_response(sys, phi, fs);
  }
  if (cfg.ruelle) {
    RuelleSettings rs;
    rs.parameter = gamma;
    rs.max_terms = cfg.ruelle_terms;
    rs.ensemble = cfg.ruelle_ensemble;
    rs.seed = cfg.seed + 303;
    rs.spinup = spin;
    rs.time_step = dt;
    r.ruelle = ruelle_series(sys, phi, p, rs);
    if (r.ruelle->truncated) r.notes.push_back(r.ruelle->note);
  }
  const std::optional<Estimate> sc = r.sc_adjoint ? r.sc_adjoint : r.sc_tangent;
  if (r.fd && sc) {
    r.uc_residual = Estimate{r.fd->estimate.value - sc->value, combined_stderr(r.fd->estimate, *sc)};
  }

  // checks
  const double k = cfg.stderr_multiple;
  if (r.sc_tangent && r.sc_adjoint) {
    const double allowed = (std::isfinite(r.boundary_terms) ? r.boundary_terms : 0.0) +
                           k * combined_stderr(*r.sc_tangent, *r.sc_adjoint) + 1e-12;
    r.checks.push_back({"duality", std::abs(r.duality_gap) <= allowed, false,
                        "|SC_tangent - SC_adjoint| = " + std::to_string(std::abs(r.duality_gap)) + ", allowed " +
                            std::to_string(allowed)});
  }
  if (r.fd && sc) {
    const double gap = std::abs(r.uc_residual->value);
    const double allowed = std::max(cfg.relative_tolerance * std::abs(r.fd->estimate.value), k * r.uc_residual->stderr_) + 1e-12;
    r.checks.push_back({"sc_vs_fd", gap <= allowed, flow,
                        "|FD - SC| = " + std::to_string(gap) + ", allowed " + std::to_string(allowed)});
  }
  if (flow && std::isfinite(r.center_defect)) {
    r.notes.push_back("nu(F) = -psi convention; sup |nu(F) + psi| = " + std::to_string(r.center_defect));
  }
  r.notes.push_back("decay-of-correlation assumptions are not checked");
  return art;
}

[[nodiscard]] inline ResponseReport build_report(const ReportSettings& cfg) { return run_report(cfg).report; }

}  // namespace shadow
