/**
 * @file validation.hpp
 * @brief The acceptance suite: named checks over the benchmark catalog.
 */
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "shadow/response.hpp"

namespace shadow {

/// Wraps a system and negates its covector action; used to confirm that the
/// suite notices a broken adjoint.
class PullbackSignFlip final : public System {
 public:
  explicit PullbackSignFlip(SystemPtr inner) : inner_(std::move(inner)) {}

  std::string name() const override { return inner_->name(); }
  SystemKind kind() const override { return inner_->kind(); }
  Index dimension() const override { return inner_->dimension(); }
  Index unstable_dimension() const override { return inner_->unstable_dimension(); }
  double default_parameter() const override { return inner_->default_parameter(); }
  double nominal_max_exponent() const override { return inner_->nominal_max_exponent(); }
  double default_time_step() const override { return inner_->default_time_step(); }
  double default_spinup() const override { return inner_->default_spinup(); }
  std::string description() const override { return inner_->description(); }
  Vector evaluate(const Vector& x, double g) const override { return inner_->evaluate(x, g); }
  Vector jacobian_action(const Vector& x, double g, const Vector& w) const override {
    return inner_->jacobian_action(x, g, w);
  }
  Vector jacobian_transpose_action(const Vector& x, double g, const Vector& e) const override {
    return -inner_->jacobian_transpose_action(x, g, e);
  }
  Vector parameter_derivative(const Vector& x, double g) const override { return inner_->parameter_derivative(x, g); }
  Objective default_objective() const override { return inner_->default_objective(); }
  bool in_bounds(const Vector& x) const override { return inner_->in_bounds(x); }
  Vector random_state(std::mt19937_64& rng) const override { return inner_->random_state(rng); }
  std::vector<Vector> iterate(const Vector& x0, double g, std::size_t count, std::uint64_t seed) const override {
    return inner_->iterate(x0, g, count, seed);
  }

 private:
  SystemPtr inner_;
};

struct SuiteContext {
  std::function<SystemPtr(const std::string&)> make = [](const std::string& n) { return make_system(n); };
  std::uint64_t seed = 1;
};

[[nodiscard]] inline SuiteContext fault_injected_context() {
  SuiteContext ctx;
  ctx.make = [](const std::string& n) -> SystemPtr { return std::make_shared<PullbackSignFlip>(make_system(n)); };
  return ctx;
}

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  double seconds = 0.0;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  std::vector<std::string> tags;
  double time_limit;  // seconds
  std::function<CriterionResult(const SuiteContext&)> run;
};

namespace detail {

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

struct Detail {
  bool ok = true;
  std::string text;
  void add(const std::string& label, bool pass, const std::string& what) {
    ok = ok && pass;
    if (!text.empty()) text += "; ";
    text += label + " " + what + (pass ? "" : " [FAIL]");
  }
};

inline CriterionResult result(const Detail& d) {
  CriterionResult r;
  r.passed = d.ok;
  r.detail = d.text;
  return r;
}

inline double flow_steps(double time, double dt) { return std::round(time / dt); }

inline CovectorField constant_covector(Index m, double c) {
  return CovectorField::from_function([m, c](const Vector&) { return Vector::Constant(m, c); });
}

// ---------------------------------------------------------------------------

inline CriterionResult adjoint_pairing(const SuiteContext& ctx) {
  Detail d;
  std::mt19937_64 rng(ctx.seed);
  for (const auto& name : system_names()) {
    const SystemPtr sys = ctx.make(name);
    const Index m = sys->dimension();
    double worst = 0.0;
    double worst_step = 0.0;
    for (int t = 0; t < 100; ++t) {
      const Vector x = sys->random_state(rng);
      Vector w(m);
      Vector e(m);
      for (Index i = 0; i < m; ++i) {
        w[i] = standard_normal(rng);
        e[i] = standard_normal(rng);
      }
      const double g = sys->default_parameter();
      const double lhs = e.dot(sys->jacobian_action(x, g, w));
      const double rhs = sys->jacobian_transpose_action(x, g, e).dot(w);
      worst = std::max(worst, std::abs(lhs - rhs) / (e.norm() * w.norm()));
      if (sys->kind() == SystemKind::flow) {
        const double l2 = e.dot(pushforward(*sys, x, g, w, 0.01));
        const double r2 = pullback(*sys, x, g, e, 0.01).dot(w);
        worst_step = std::max(worst_step, std::abs(l2 - r2) / (e.norm() * w.norm()));
      }
    }
    d.add(name, worst <= 1e-12, "pairing " + fmt(worst));
    if (sys->kind() == SystemKind::flow) {
      d.add(name + " step", worst_step <= 1e-8, "pairing " + fmt(worst_step));
    }
  }
  return result(d);
}

inline CriterionResult closed_form(const SuiteContext& ctx) {
  Detail d;
  const SystemPtr sys = ctx.make("doubling");
  const Orbit o = generate_orbit(sys, std::nullopt, 0.0, 100, 1000, ctx.seed);
  const ShadowingPair v = nilss_solve(o, 1, default_segment_length(*sys));
  const Window w = interior(o);
  double ev = 0.0;
  for (std::size_t n = w.first; n < w.last; ++n) ev = std::max(ev, std::abs(v.v[n][0] + 1.0));
  d.add("interior |v + 1|", ev <= 1e-6, fmt(ev));
  const ShadowingCovector nu = nilsas_solve(o, constant_covector(1, 1.0), 1, default_segment_length(*sys));
  double en = 0.0;
  for (std::size_t n = 0; n <= o.steps(); ++n) {
    en = std::max(en, std::abs(nu.nu[n][0] - (-1.0 + std::ldexp(1.0, -static_cast<int>(n)))));
  }
  d.add("max |nu_n - (-1 + 2^-n)|", en <= 1e-9, fmt(en));
  return result(d);
}

inline CriterionResult adjoint_recursion(const SuiteContext& ctx) {
  Detail d;
  const SystemPtr sys = ctx.make("cat");
  const Orbit o = generate_orbit(sys, std::nullopt, 0.05, 2000, 1000, ctx.seed);
  const CovectorField omega = CovectorField::from_objective(sys->default_objective());
  const ShadowingCovector nu = nilsas_solve(o, omega, 1, default_segment_length(*sys));
  const double r = adjoint_residual(o, nu.nu, omega, Window{0, o.steps() + 1});
  d.add("max residual", r <= 1e-10, fmt(r));
  return result(d);
}

inline CriterionResult oracle_equivalence(const SuiteContext& ctx) {
  Detail d;
  const SystemPtr sys = ctx.make("cat");
  const Orbit o = generate_orbit(sys, std::nullopt, 0.05, 2000, 1000, ctx.seed);
  const CovectorField omega = CovectorField::from_objective(sys->default_objective());
  const ShadowingCovector nu = nilsas_solve(o, omega, 1, default_segment_length(*sys));
  const SplittingData s = compute_splitting(o);
  const Expansion ex = expand_shadowing_covector(o, s, omega, {}, 40);
  const double diff = sup_relative_difference(ex.field, nu.nu, ex.first, ex.last);
  d.add("sup-relative difference", diff <= 1e-3, fmt(diff) + " (tail bound " + fmt(ex.tail_bound) + ")");
  return result(d);
}

inline CriterionResult duality(const SuiteContext& ctx) {
  Detail d;
  const SystemPtr sys = ctx.make("cat");
  const Orbit o = generate_orbit(sys, std::nullopt, 0.05, 100000, 1000, ctx.seed);
  const ScResult r = sc_discrete(o, 1);
  d.add("summation-by-parts residual", r.sbp_residual <= 1e-8, fmt(r.sbp_residual));
  const double gap = std::abs(r.duality_gap());
  d.add("|SC_tangent - SC_adjoint|", gap <= 3.0 * r.combined_error(),
        fmt(gap) + " vs 3 stderr " + fmt(3.0 * r.combined_error()) + " (SC = " + fmt(r.adjoint->value) + ")");
  return result(d);
}

inline CriterionResult gradient_explosion(const SuiteContext& ctx) {
  Detail d;
  const SystemPtr sys = ctx.make("doubling");
  const Orbit o = generate_orbit(sys, std::nullopt, 0.0, 60, 1000, ctx.seed);
  const CovectorField one = constant_covector(1, 1.0);
  const AdjointBundle conventional = inhomogeneous_adjoint(o, one, Vector::Zero(1));
  const ShadowingCovector nu = nilsas_solve(o, one, 1, default_segment_length(*sys));
  double big = 0.0;
  double small = 0.0;
  for (std::size_t n = 0; n <= o.steps(); ++n) {
    big = std::max(big, conventional.columns[n].lpNorm<Eigen::Infinity>());
    small = std::max(small, nu.nu[n].lpNorm<Eigen::Infinity>());
  }
  const double ratio = big / small;
  d.add("sup|nu'| / sup|nu|", ratio >= 1e15, fmt(ratio));
  return result(d);
}

inline CriterionResult flow_constraint(const SuiteContext& ctx) {
  Detail d;
  const SystemPtr sys = ctx.make("lorenz63");
  const double dt = 0.005;
  const Orbit o = generate_orbit(sys, std::nullopt, sys->default_parameter(),
                                 static_cast<std::size_t>(flow_steps(200.0, dt)), default_spinup_steps(*sys, dt),
                                 ctx.seed, dt);
  const AdmissiblePair pair = canonical_pair(o, sys->default_objective());
  const ShadowingCovector nu = nilsas_flow_solve(o, pair, 1, default_segment_length(*sys, dt));
  const Window w = interior(o);
  double minus = 0.0;
  double plus = 0.0;
  for (std::size_t n = w.first; n < w.last; ++n) {
    const double nf = nu.nu[n].dot(sys->evaluate(o.states[n], o.parameter));
    minus = std::max(minus, std::abs(nf - pair.psi[n]));
    plus = std::max(plus, std::abs(nf + pair.psi[n]));
  }
  d.add("sup |nu(F) - psi|", minus <= 1e-3, fmt(minus) + " (sup |nu(F) + psi| = " + fmt(plus) + ")");

  const Orbit short_orbit = generate_orbit(sys, std::nullopt, sys->default_parameter(),
                                           static_cast<std::size_t>(flow_steps(20.0, dt)),
                                           default_spinup_steps(*sys, dt), ctx.seed + 1, dt);
  const AdjointBundle eps = homogeneous_adjoint(short_orbit, random_matrix(3, 1, ctx.seed), short_orbit.steps());
  const std::vector<Vector> f = drift_samples(short_orbit);
  const double c_end = eps.unscaled(short_orbit.steps()).col(0).dot(f.back());
  double drift = 0.0;
  for (std::size_t n = 0; n <= short_orbit.steps(); ++n) {
    const Vector e = eps.unscaled(n).col(0);
    drift = std::max(drift, std::abs(e.dot(f[n]) - c_end) / (e.norm() * f[n].norm()));
  }
  d.add("homogeneous eps(F) drift", drift <= 1e-6, fmt(drift));
  return result(d);
}

inline CriterionResult pair_gauge(const SuiteContext& ctx) {
  Detail d;
  const SystemPtr sys = ctx.make("lorenz63");
  const double dt = 0.005;
  const Orbit o = generate_orbit(sys, std::nullopt, sys->default_parameter(),
                                 static_cast<std::size_t>(flow_steps(200.0, dt)), default_spinup_steps(*sys, dt),
                                 ctx.seed, dt);
  const ScResult base = sc_continuous(o, 1);
  auto coord = [](int i, double scale, bool sine) {
    return Objective{"h", [=](const Vector& x) { return sine ? std::sin(x[i] / scale) : std::cos(x[i] / scale); },
                     [=](const Vector& x) {
                       Vector g = Vector::Zero(3);
                       g[i] = (sine ? std::cos(x[i] / scale) : -std::sin(x[i] / scale)) / scale;
                       return g;
                     }};
  };
  const std::vector<std::pair<std::string, Objective>> shifts{
      {"sin(x)", coord(0, 1.0, true)}, {"cos(y)", coord(1, 1.0, false)}, {"sin(z/5)", coord(2, 5.0, true)}};
  for (const auto& [label, h] : shifts) {
    const Estimate e = pair_product(o, gauge_shift(o, *base.pair, h), base.admissible, base.window);
    const double gap = std::abs(e.value - base.tangent->value);
    const double allowed = 3.0 * combined_stderr(e, *base.tangent);
    d.add("shift " + label, gap <= allowed, fmt(gap) + " vs " + fmt(allowed));
  }
  const Perturbation along{"F", [sys](const Vector& x) { return sys->evaluate(x, sys->default_parameter()); }};
  const ScResult f = sc_continuous(o, 1, sys->default_objective(), along);
  d.add("X = F tangent", std::abs(f.tangent->value) <= 3.0 * f.tangent->stderr_,
        fmt(f.tangent->value) + " +- " + fmt(f.tangent->stderr_));
  d.add("X = F adjoint", std::abs(f.adjoint->value) <= 3.0 * f.adjoint->stderr_,
        fmt(f.adjoint->value) + " +- " + fmt(f.adjoint->stderr_));
  return result(d);
}

inline CriterionResult exponents(const SuiteContext& ctx) {
  Detail d;
  {
    const SystemPtr sys = ctx.make("doubling");
    const Orbit o = generate_orbit(sys, std::nullopt, 0.0, 10000, 1000, ctx.seed);
    const double l = lyapunov_exponents(o, 1).value[0];
    d.add("doubling", std::abs(l - std::log(2.0)) <= 1e-3, fmt(l));
  }
  {
    const SystemPtr sys = ctx.make("cat");
    const Orbit o = generate_orbit(sys, std::nullopt, 0.0, 10000, 1000, ctx.seed);
    const ExponentEstimate e = lyapunov_exponents(o, 2);
    const double ref = std::log((3.0 + std::sqrt(5.0)) / 2.0);
    d.add("cat", std::abs(e.value[0] - ref) <= 1e-3 && std::abs(e.value[1] + ref) <= 1e-3,
          fmt(e.value[0]) + ", " + fmt(e.value[1]));
  }
  {
    const SystemPtr sys = ctx.make("lorenz63");
    const double dt = 0.005;
    const Orbit o = generate_orbit(sys, std::nullopt, sys->default_parameter(),
                                   static_cast<std::size_t>(flow_steps(200.0, dt)), default_spinup_steps(*sys, dt),
                                   ctx.seed, dt);
    const ExponentEstimate e = lyapunov_exponents(o, 3);
    const double sum = e.value[0] + e.value[1] + e.value[2];
    d.add("lorenz63 sum", std::abs(sum + 41.0 / 3.0) <= 0.05,
          fmt(sum) + " (" + fmt(e.value[0]) + ", " + fmt(e.value[1]) + ", " + fmt(e.value[2]) + ")");
  }
  return result(d);
}

inline CriterionResult end_to_end(const SuiteContext& ctx) {
  Detail d;
  const SystemPtr sys = ctx.make("lorenz63");
  const double dt = 0.005;
  const double rho = sys->default_parameter();
  const Orbit o = generate_orbit(sys, std::nullopt, rho, static_cast<std::size_t>(flow_steps(500.0, dt)),
                                 default_spinup_steps(*sys, dt), ctx.seed, dt);
  ScOptions opt;
  opt.tangent = false;
  const ScResult sc = sc_continuous(o, 1, opt);
  FdSettings fs;
  fs.parameter = rho;
  fs.h = 1.0;
  fs.steps = static_cast<std::size_t>(flow_steps(2000.0, dt));
  fs.ensemble = 16;
  fs.seed = ctx.seed + 1;
  fs.time_step = dt;
  const FdResult fd = fd_response(sys, sys->default_objective(), fs);
  const double gap = std::abs(fd.estimate.value - sc.adjoint->value);
  const double allowed =
      std::max(0.1 * std::abs(fd.estimate.value), 3.0 * combined_stderr(fd.estimate, *sc.adjoint));
  d.add("|FD - SC_adjoint|", gap <= allowed,
        fmt(gap) + " vs " + fmt(allowed) + " (SC " + fmt(sc.adjoint->value) + " +- " + fmt(sc.adjoint->stderr_) +
            ", FD " + fmt(fd.estimate.value) + " +- " + fmt(fd.estimate.stderr_) + ", UC residual " +
            fmt(fd.estimate.value - sc.adjoint->value) + ")");
  return result(d);
}

inline CriterionResult stable_exactness(const SuiteContext& ctx) {
  Detail d;
  const SystemPtr sys = ctx.make("contracting");
  const Orbit o = generate_orbit(sys, std::nullopt, 0.0, 1000, 1000, ctx.seed);
  const ScResult sc = sc_discrete(o, 0);
  d.add("SC", std::abs(sc.tangent->value - 2.0) <= 1e-8 && std::abs(sc.adjoint->value - 2.0) <= 1e-8,
        fmt(sc.tangent->value - 2.0) + ", " + fmt(sc.adjoint->value - 2.0) + " from 2");
  FdSettings fs;
  fs.h = 1e-2;
  fs.steps = 1000;
  fs.ensemble = 4;
  fs.seed = ctx.seed;
  const FdResult fd = fd_response(sys, sys->default_objective(), fs);
  d.add("FD", std::abs(fd.estimate.value - 2.0) <= 1e-8, fmt(fd.estimate.value - 2.0) + " from 2");
  RuelleSettings rs;
  rs.max_terms = 20;
  rs.ensemble = 8;
  rs.seed = ctx.seed;
  const RuelleCurve rc = ruelle_series(sys, sys->default_objective(), sys->default_perturbation(), rs);
  double worst = 0.0;
  for (std::size_t k = 0; k + 1 < rc.mean.size(); ++k) {
    worst = std::max(worst, std::abs((rc.mean[k + 1] - 2.0) / (rc.mean[k] - 2.0) - 0.5));
  }
  const bool geometric = rc.mean.size() == 21 && worst <= 1e-6 && std::abs(rc.mean.back() - 2.0) <= 1e-5;
  d.add("Ruelle ratio", geometric, "max |ratio - 1/2| " + fmt(worst) + ", S_20 - 2 = " + fmt(rc.mean.back() - 2.0));
  return result(d);
}

}  // namespace detail

[[nodiscard]] inline const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> list{
      {0, "adjoint_pairing", {"systems"}, 5.0, detail::adjoint_pairing},
      {1, "closed_form", {"tangent", "adjoint"}, 1.0, detail::closed_form},
      {2, "adjoint_residual", {"adjoint"}, 1.0, detail::adjoint_recursion},
      {3, "oracle_equivalence", {"splitting", "adjoint"}, 10.0, detail::oracle_equivalence},
      {4, "duality", {"response", "duality"}, 30.0, detail::duality},
      {5, "gradient_explosion", {"adjoint", "tangent"}, 1.0, detail::gradient_explosion},
      {6, "flow_constraint", {"adjoint", "flow"}, 60.0, detail::flow_constraint},
      {7, "pair_gauge", {"response", "flow"}, 120.0, detail::pair_gauge},
      {8, "exponents", {"splitting"}, 60.0, detail::exponents},
      {9, "end_to_end", {"response", "flow"}, 600.0, detail::end_to_end},
      {10, "stable_exactness", {"response"}, 1.0, detail::stable_exactness},
  };
  return list;
}

/// True when the criterion matches any token (its number, its name, or one of its tags).
[[nodiscard]] inline bool selected(const Criterion& c, const std::vector<std::string>& only) {
  if (only.empty()) return true;
  for (const auto& t : only) {
    if (t == std::to_string(c.id) || t == c.name) return true;
    if (std::find(c.tags.begin(), c.tags.end(), t) != c.tags.end()) return true;
  }
  return false;
}

/// Runs one criterion, timing it and turning errors into failures.
[[nodiscard]] inline CriterionResult run_criterion(const Criterion& c, const SuiteContext& ctx) {
  const auto start = std::chrono::steady_clock::now();
  CriterionResult r;
  try {
    r = c.run(ctx);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("error: ") + e.what();
  }
  r.id = c.id;
  r.name = c.name;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (r.seconds > c.time_limit) {
    r.passed = false;
    r.detail += "; runtime " + detail::fmt(r.seconds) + " s exceeds " + detail::fmt(c.time_limit) + " s [FAIL]";
  }
  return r;
}

[[nodiscard]] inline std::vector<CriterionResult> run_suite(const std::vector<std::string>& only,
                                                            const SuiteContext& ctx = {},
                                                            const std::function<void(const CriterionResult&)>& each = {}) {
  std::vector<CriterionResult> out;
  for (const Criterion& c : criteria()) {
    if (!selected(c, only)) continue;
    out.push_back(run_criterion(c, ctx));
    if (each) each(out.back());
  }
  return out;
}

[[nodiscard]] inline std::string format_result(const CriterionResult& r) {
  std::ostringstream os;
  os << (r.passed ? "PASS" : "FAIL") << "  " << r.id << " " << r.name << "  (" << detail::fmt(r.seconds) << " s)  "
     << r.detail;
  return os.str();
}

}  // namespace shadow
