/**
 * @file systems.hpp
 * @brief Parameterized maps and flows, their linearizations, and orbits.
 *
 * A System is immutable. Maps are advanced by `evaluate`; flows expose the
 * vector field F + gamma X through `evaluate` and are advanced by a classical
 * fourth-order Runge-Kutta step. The tangent and covector propagators of a
 * flow step are the exact linearization of that step and its transpose, so
 * the pairing eta(f_* w) = (f^* eta)(w) holds to rounding for flows as well.
 */
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "shadow/core.hpp"

namespace shadow {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

enum class SystemKind { map, flow };

inline const char* to_string(SystemKind kind) { return kind == SystemKind::map ? "map" : "flow"; }

/// Scalar objective Phi with its differential dPhi.
struct Objective {
  std::string name;
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> differential;
};

/// Parameter perturbation. For maps `field(x)` is d f / d gamma at x, which
/// lives at f(x); for flows it is the perturbing vector field X(x).
struct Perturbation {
  std::string name;
  std::function<Vector(const Vector&)> field;
};

class System {
 public:
  virtual ~System() = default;

  [[nodiscard]] virtual std::string name() const = 0;
  [[nodiscard]] virtual SystemKind kind() const = 0;
  [[nodiscard]] virtual Index dimension() const = 0;
  /// Number of positive Lyapunov exponents (the center direction of a flow excluded).
  [[nodiscard]] virtual Index unstable_dimension() const = 0;
  [[nodiscard]] virtual double default_parameter() const = 0;
  /// Largest Lyapunov exponent per step (maps) or per unit time (flows); used for segment lengths.
  [[nodiscard]] virtual double nominal_max_exponent() const = 0;
  [[nodiscard]] virtual double default_time_step() const { return 0.0; }
  /// Spin-up in steps for maps, in time units for flows.
  [[nodiscard]] virtual double default_spinup() const { return 1000.0; }
  [[nodiscard]] virtual std::string description() const { return {}; }

  /// Map: f(x). Flow: the vector field F(x) + gamma X(x).
  [[nodiscard]] virtual Vector evaluate(const Vector& x, double gamma) const = 0;
  /// Map: f_* w. Flow: the vector-field Jacobian applied to w.
  [[nodiscard]] virtual Vector jacobian_action(const Vector& x, double gamma, const Vector& w) const = 0;
  /// Map: f^* eta. Flow: the transposed vector-field Jacobian applied to eta.
  [[nodiscard]] virtual Vector jacobian_transpose_action(const Vector& x, double gamma,
                                                         const Vector& eta) const = 0;
  /// Map: d f / d gamma at x. Flow: X(x).
  [[nodiscard]] virtual Vector parameter_derivative(const Vector& x, double gamma) const = 0;

  [[nodiscard]] virtual Objective default_objective() const = 0;
  [[nodiscard]] virtual bool in_bounds(const Vector& x) const = 0;
  [[nodiscard]] virtual Vector random_state(std::mt19937_64& rng) const = 0;

  /// States x0, f(x0), ... (count + 1 entries). Maps only.
  [[nodiscard]] virtual std::vector<Vector> iterate(const Vector& x0, double gamma, std::size_t count,
                                                    std::uint64_t /*seed*/) const {
    std::vector<Vector> out;
    out.reserve(count + 1);
    out.push_back(x0);
    for (std::size_t n = 0; n < count; ++n) {
      out.push_back(evaluate(out.back(), gamma));
    }
    return out;
  }

  [[nodiscard]] Perturbation default_perturbation() const {
    return {"d/dgamma", [this, g = default_parameter()](const Vector& x) { return parameter_derivative(x, g); }};
  }
};

using SystemPtr = std::shared_ptr<const System>;

namespace detail {

[[nodiscard]] inline double wrap_unit(double v) {
  double r = v - std::floor(v);
  if (r >= 1.0) {
    r = 0.0;
  }
  return r;
}

[[nodiscard]] inline bool in_unit_cube(const Vector& x) {
  return x.allFinite() && (x.array() >= 0.0).all() && (x.array() < 1.0).all();
}

}  // namespace detail

/// f(x) = 2x + gamma mod 1.
class DoublingMap final : public System {
 public:
  std::string name() const override { return "doubling"; }
  SystemKind kind() const override { return SystemKind::map; }
  Index dimension() const override { return 1; }
  Index unstable_dimension() const override { return 1; }
  double default_parameter() const override { return 0.0; }
  double nominal_max_exponent() const override { return std::log(2.0); }
  std::string description() const override { return "x -> 2x + gamma mod 1"; }

  Vector evaluate(const Vector& x, double gamma) const override {
    return Vector::Constant(1, detail::wrap_unit(2.0 * x[0] + gamma));
  }
  Vector jacobian_action(const Vector&, double, const Vector& w) const override { return 2.0 * w; }
  Vector jacobian_transpose_action(const Vector&, double, const Vector& eta) const override { return 2.0 * eta; }
  Vector parameter_derivative(const Vector&, double) const override { return Vector::Ones(1); }

  Objective default_objective() const override {
    return {"sin(2 pi x)", [](const Vector& x) { return std::sin(kTwoPi * x[0]); },
            [](const Vector& x) { return Vector::Constant(1, kTwoPi * std::cos(kTwoPi * x[0])); }};
  }
  bool in_bounds(const Vector& x) const override { return detail::in_unit_cube(x); }
  Vector random_state(std::mt19937_64& rng) const override { return Vector::Constant(1, uniform01(rng)); }

  // Iterating 2x mod 1 in binary floating point collapses onto 0 within 53
  // steps. The orbit is instead read off a binary expansion y = x + gamma whose
  // trailing digits are drawn from `seed`, which is a true orbit rounded to double.
  std::vector<Vector> iterate(const Vector& x0, double gamma, std::size_t count,
                              std::uint64_t seed) const override {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    const double y0 = detail::wrap_unit(x0[0] + gamma);
    std::uint64_t hi = static_cast<std::uint64_t>(std::ldexp(y0, 64));
    std::uint64_t lo = rng();
    std::uint64_t pool = rng();
    int pool_bits = 64;
    std::vector<Vector> out;
    out.reserve(count + 1);
    out.push_back(x0);
    for (std::size_t n = 0; n < count; ++n) {
      if (pool_bits == 0) {
        pool = rng();
        pool_bits = 64;
      }
      hi = (hi << 1) | (lo >> 63);
      lo = (lo << 1) | (pool & 1ULL);
      pool >>= 1;
      --pool_bits;
      const double y = std::ldexp(static_cast<double>(hi >> 11), -53);
      out.push_back(Vector::Constant(1, detail::wrap_unit(y - gamma)));
    }
    return out;
  }
};

/// f(x, y) = (2x + y + gamma sin(2 pi x), x + y) mod 1.
class PerturbedCatMap final : public System {
 public:
  std::string name() const override { return "cat"; }
  SystemKind kind() const override { return SystemKind::map; }
  Index dimension() const override { return 2; }
  Index unstable_dimension() const override { return 1; }
  double default_parameter() const override { return 0.0; }
  double nominal_max_exponent() const override { return std::log((3.0 + std::sqrt(5.0)) / 2.0); }
  std::string description() const override { return "(2x + y + gamma sin(2 pi x), x + y) mod 1"; }

  Vector evaluate(const Vector& x, double gamma) const override {
    Vector out(2);
    out[0] = detail::wrap_unit(2.0 * x[0] + x[1] + gamma * std::sin(kTwoPi * x[0]));
    out[1] = detail::wrap_unit(x[0] + x[1]);
    return out;
  }
  Vector jacobian_action(const Vector& x, double gamma, const Vector& w) const override {
    const double a = 2.0 + kTwoPi * gamma * std::cos(kTwoPi * x[0]);
    Vector out(2);
    out[0] = a * w[0] + w[1];
    out[1] = w[0] + w[1];
    return out;
  }
  Vector jacobian_transpose_action(const Vector& x, double gamma, const Vector& eta) const override {
    const double a = 2.0 + kTwoPi * gamma * std::cos(kTwoPi * x[0]);
    Vector out(2);
    out[0] = a * eta[0] + eta[1];
    out[1] = eta[0] + eta[1];
    return out;
  }
  Vector parameter_derivative(const Vector& x, double) const override {
    Vector out(2);
    out << std::sin(kTwoPi * x[0]), 0.0;
    return out;
  }

  Objective default_objective() const override {
    return {"sin(2 pi (x + y))", [](const Vector& x) { return std::sin(kTwoPi * (x[0] + x[1])); },
            [](const Vector& x) { return Vector::Constant(2, kTwoPi * std::cos(kTwoPi * (x[0] + x[1]))); }};
  }
  bool in_bounds(const Vector& x) const override { return detail::in_unit_cube(x); }
  Vector random_state(std::mt19937_64& rng) const override {
    Vector x(2);
    x[0] = uniform01(rng);
    x[1] = uniform01(rng);
    return x;
  }
};

/// f(x) = x / 2 + gamma; globally stable, fixed point 2 gamma.
class ContractingMap final : public System {
 public:
  std::string name() const override { return "contracting"; }
  SystemKind kind() const override { return SystemKind::map; }
  Index dimension() const override { return 1; }
  Index unstable_dimension() const override { return 0; }
  double default_parameter() const override { return 0.0; }
  double nominal_max_exponent() const override { return std::log(0.5); }
  std::string description() const override { return "x -> x/2 + gamma"; }

  Vector evaluate(const Vector& x, double gamma) const override { return Vector::Constant(1, 0.5 * x[0] + gamma); }
  Vector jacobian_action(const Vector&, double, const Vector& w) const override { return 0.5 * w; }
  Vector jacobian_transpose_action(const Vector&, double, const Vector& eta) const override { return 0.5 * eta; }
  Vector parameter_derivative(const Vector&, double) const override { return Vector::Ones(1); }

  Objective default_objective() const override {
    return {"x", [](const Vector& x) { return x[0]; }, [](const Vector&) { return Vector::Ones(1); }};
  }
  bool in_bounds(const Vector& x) const override { return x.allFinite() && std::abs(x[0]) < 1e6; }
  Vector random_state(std::mt19937_64& rng) const override {
    return Vector::Constant(1, 2.0 * uniform01(rng) - 1.0);
  }
};

/// Lorenz-63 with the parameter gamma standing for rho, so that the field is
/// F + gamma X with X = (0, x, 0).
class Lorenz63 final : public System {
 public:
  static constexpr double sigma = 10.0;
  static constexpr double beta = 8.0 / 3.0;

  std::string name() const override { return "lorenz63"; }
  SystemKind kind() const override { return SystemKind::flow; }
  Index dimension() const override { return 3; }
  Index unstable_dimension() const override { return 1; }
  double default_parameter() const override { return 28.0; }
  double nominal_max_exponent() const override { return 0.906; }
  double default_time_step() const override { return 0.005; }
  double default_spinup() const override { return 50.0; }
  std::string description() const override { return "sigma=10, beta=8/3, gamma=rho, X=(0,x,0)"; }

  Vector evaluate(const Vector& s, double rho) const override {
    Vector out(3);
    out << sigma * (s[1] - s[0]), s[0] * (rho - s[2]) - s[1], s[0] * s[1] - beta * s[2];
    return out;
  }
  Vector jacobian_action(const Vector& s, double rho, const Vector& w) const override {
    Vector out(3);
    out << sigma * (w[1] - w[0]), (rho - s[2]) * w[0] - w[1] - s[0] * w[2], s[1] * w[0] + s[0] * w[1] - beta * w[2];
    return out;
  }
  Vector jacobian_transpose_action(const Vector& s, double rho, const Vector& e) const override {
    Vector out(3);
    out << -sigma * e[0] + (rho - s[2]) * e[1] + s[1] * e[2], sigma * e[0] - e[1] + s[0] * e[2],
        -s[0] * e[1] - beta * e[2];
    return out;
  }
  Vector parameter_derivative(const Vector& s, double) const override {
    Vector out(3);
    out << 0.0, s[0], 0.0;
    return out;
  }

  Objective default_objective() const override {
    return {"z", [](const Vector& s) { return s[2]; },
            [](const Vector&) {
              Vector d = Vector::Zero(3);
              d[2] = 1.0;
              return d;
            }};
  }
  bool in_bounds(const Vector& s) const override {
    return s.allFinite() && std::abs(s[0]) < 100.0 && std::abs(s[1]) < 150.0 && std::abs(s[2]) < 250.0;
  }
  Vector random_state(std::mt19937_64& rng) const override {
    Vector s(3);
    s << 5.0 * standard_normal(rng), 5.0 * standard_normal(rng), 25.0 + 5.0 * standard_normal(rng);
    return s;
  }
};

// ---------------------------------------------------------------------------
// Runge-Kutta machinery

/// Stage states and slopes of one classical RK4 step.
struct Rk4Stages {
  std::array<Vector, 4> y;
  std::array<Vector, 4> k;
};

inline constexpr std::array<double, 4> kRk4Weights{1.0 / 6.0, 2.0 / 6.0, 2.0 / 6.0, 1.0 / 6.0};
inline constexpr std::array<double, 4> kRk4Nodes{0.0, 0.5, 0.5, 1.0};

[[nodiscard]] inline Rk4Stages rk4_stages(const System& sys, const Vector& x, double gamma, double h) {
  Rk4Stages s;
  s.y[0] = x;
  s.k[0] = sys.evaluate(s.y[0], gamma);
  s.y[1] = x + 0.5 * h * s.k[0];
  s.k[1] = sys.evaluate(s.y[1], gamma);
  s.y[2] = x + 0.5 * h * s.k[1];
  s.k[2] = sys.evaluate(s.y[2], gamma);
  s.y[3] = x + h * s.k[2];
  s.k[3] = sys.evaluate(s.y[3], gamma);
  return s;
}

[[nodiscard]] inline Vector rk4_advance(const Vector& x, const Rk4Stages& s, double h) {
  return x + h * (kRk4Weights[0] * s.k[0] + kRk4Weights[1] * s.k[1] + kRk4Weights[2] * s.k[2] +
                  kRk4Weights[3] * s.k[3]);
}

/// Forward-mode derivative of one RK4 step: tangent w plus an optional
/// parameter-direction field `source` (evaluated at the stage states).
[[nodiscard]] inline Vector rk4_tangent(const System& sys, const Rk4Stages& s, double gamma, double h,
                                        const Vector& w, const Perturbation* source = nullptr) {
  std::array<Vector, 4> dk;
  Vector dy = w;
  for (int i = 0; i < 4; ++i) {
    if (i == 1 || i == 2) {
      dy = w + 0.5 * h * dk[i - 1];
    } else if (i == 3) {
      dy = w + h * dk[2];
    }
    dk[i] = sys.jacobian_action(s.y[i], gamma, dy);
    if (source != nullptr) {
      dk[i] += source->field(s.y[i]);
    }
  }
  return w + h * (kRk4Weights[0] * dk[0] + kRk4Weights[1] * dk[1] + kRk4Weights[2] * dk[2] +
                  kRk4Weights[3] * dk[3]);
}

/// Reverse-mode derivative of one RK4 step: the exact transpose of
/// rk4_tangent, plus the pulled-back quadrature of a stage covector forcing.
template <class StageForcing>
[[nodiscard]] Vector rk4_adjoint(const System& sys, const Rk4Stages& s, double gamma, double h, const Vector& eta,
                                 StageForcing&& forcing) {
  std::array<Vector, 4> kbar;
  for (int i = 0; i < 4; ++i) {
    kbar[i] = h * kRk4Weights[i] * eta;
  }
  Vector xbar = eta;
  for (int i = 3; i >= 0; --i) {
    Vector ybar = sys.jacobian_transpose_action(s.y[i], gamma, kbar[i]);
    forcing(i, s.y[i], h * kRk4Weights[i], ybar);
    xbar += ybar;
    if (i == 3) {
      kbar[2] += h * ybar;
    } else if (i >= 1) {
      kbar[i - 1] += 0.5 * h * ybar;
    }
  }
  return xbar;
}

[[nodiscard]] inline Vector rk4_adjoint(const System& sys, const Rk4Stages& s, double gamma, double h,
                                        const Vector& eta) {
  return rk4_adjoint(sys, s, gamma, h, eta, [](int, const Vector&, double, Vector&) {});
}

// ---------------------------------------------------------------------------
// Single-step operations

inline void require_kind(const System& sys, SystemKind kind) {
  if (sys.kind() != kind) {
    throw ShadowingError(ErrorCode::kind_mismatch,
                         sys.name() + " is a " + to_string(sys.kind()) + ", expected a " + to_string(kind));
  }
}

inline void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) {
    throw ShadowingError(ErrorCode::divergence, std::string("non-finite ") + what);
  }
}

[[nodiscard]] inline Vector map_step(const System& sys, const Vector& x, double gamma) {
  require_kind(sys, SystemKind::map);
  return sys.evaluate(x, gamma);
}

[[nodiscard]] inline Vector flow_step(const System& sys, const Vector& x, double gamma, double dt) {
  require_kind(sys, SystemKind::flow);
  if (!(dt > 0.0)) {
    throw ShadowingError(ErrorCode::configuration, "time step must be positive");
  }
  require_finite(x, "state");
  Vector out = rk4_advance(x, rk4_stages(sys, x, gamma, dt), dt);
  require_finite(out, "state after flow step");
  return out;
}

/// f_* w for maps; the tangent of one RK4 step of length dt for flows.
[[nodiscard]] inline Vector pushforward(const System& sys, const Vector& x, double gamma, const Vector& w,
                                       double dt = 0.0) {
  require_finite(w, "tangent vector");
  if (sys.kind() == SystemKind::map) {
    return sys.jacobian_action(x, gamma, w);
  }
  return rk4_tangent(sys, rk4_stages(sys, x, gamma, dt), gamma, dt, w);
}

/// f^* eta for maps; the transpose of the RK4 step tangent for flows.
[[nodiscard]] inline Vector pullback(const System& sys, const Vector& x, double gamma, const Vector& eta,
                                    double dt = 0.0) {
  require_finite(eta, "covector");
  if (sys.kind() == SystemKind::map) {
    return sys.jacobian_transpose_action(x, gamma, eta);
  }
  return rk4_adjoint(sys, rk4_stages(sys, x, gamma, dt), gamma, dt, eta);
}

// ---------------------------------------------------------------------------
// Orbits

struct Orbit {
  SystemPtr system;
  double parameter = 0.0;
  double time_step = 0.0;  // zero for maps
  std::vector<Vector> states;  // x_0 .. x_N
  std::optional<Vector> preimage;  // x_{-1}, the last spin-up state (maps)
  std::size_t spinup = 0;  // discarded steps
  std::uint64_t seed = 0;

  [[nodiscard]] std::size_t steps() const { return states.empty() ? 0 : states.size() - 1; }
  [[nodiscard]] bool is_flow() const { return system->kind() == SystemKind::flow; }
  /// Physical time per step: dt for flows, one for maps.
  [[nodiscard]] double step_weight() const { return is_flow() ? time_step : 1.0; }
  [[nodiscard]] double duration() const { return static_cast<double>(steps()) * step_weight(); }
  [[nodiscard]] Index dimension() const { return system->dimension(); }
};

/// Spin-up length in steps for a system: the catalog default for maps, time/dt for flows.
[[nodiscard]] inline std::size_t default_spinup_steps(const System& sys, double dt) {
  if (sys.kind() == SystemKind::map) {
    return static_cast<std::size_t>(sys.default_spinup());
  }
  return static_cast<std::size_t>(std::llround(sys.default_spinup() / dt));
}

/// Deterministic orbit of `steps` steps after discarding `spinup` steps.
/// The initial state is `x0` when given, otherwise drawn from `seed`.
[[nodiscard]] inline Orbit generate_orbit(SystemPtr sys, const std::optional<Vector>& x0, double gamma,
                                          std::size_t steps, std::size_t spinup, std::uint64_t seed,
                                          double dt = 0.0) {
  if (steps == 0) {
    throw ShadowingError(ErrorCode::configuration, "orbit length must be positive");
  }
  std::mt19937_64 rng(seed);
  Vector start = x0 ? *x0 : sys->random_state(rng);
  if (start.size() != sys->dimension()) {
    throw ShadowingError(ErrorCode::configuration, "initial state has wrong dimension");
  }
  Orbit orbit;
  orbit.system = sys;
  orbit.parameter = gamma;
  orbit.spinup = spinup;
  orbit.seed = seed;
  orbit.states.reserve(steps + 1);

  if (sys->kind() == SystemKind::map) {
    std::vector<Vector> all = sys->iterate(start, gamma, spinup + steps, rng());
    for (std::size_t n = 0; n < all.size(); ++n) {
      if (!sys->in_bounds(all[n])) {
        throw ShadowingError(ErrorCode::divergence,
                             sys->name() + " orbit left its bounded region at step " + std::to_string(n));
      }
    }
    if (spinup > 0) {
      orbit.preimage = all[spinup - 1];
    }
    orbit.states.assign(all.begin() + static_cast<std::ptrdiff_t>(spinup), all.end());
    return orbit;
  }

  if (!(dt > 0.0)) {
    throw ShadowingError(ErrorCode::configuration, "flows need a positive time step");
  }
  orbit.time_step = dt;
  Vector x = std::move(start);
  for (std::size_t n = 0; n < spinup + steps; ++n) {
    if (n >= spinup) {
      orbit.states.push_back(x);
    }
    x = rk4_advance(x, rk4_stages(*sys, x, gamma, dt), dt);
    if (!sys->in_bounds(x)) {
      throw ShadowingError(ErrorCode::divergence,
                           sys->name() + " orbit left its bounded region at step " + std::to_string(n + 1));
    }
  }
  orbit.states.push_back(x);
  return orbit;
}

/// X at orbit index n: d f / d gamma at x_{n-1} for maps, X(x_n) for flows.
[[nodiscard]] inline Vector perturbation_at(const Orbit& orbit, const Perturbation& p, std::size_t n) {
  if (n > orbit.steps()) {
    throw ShadowingError(ErrorCode::index_out_of_range, "orbit index " + std::to_string(n));
  }
  if (orbit.is_flow()) {
    return p.field(orbit.states[n]);
  }
  if (n == 0) {
    if (!orbit.preimage) {
      throw ShadowingError(ErrorCode::index_out_of_range, "X_0 needs the preimage of x_0 (spin-up of zero)");
    }
    return p.field(*orbit.preimage);
  }
  return p.field(orbit.states[n - 1]);
}

[[nodiscard]] inline Vector perturbation_at(const Orbit& orbit, std::size_t n) {
  return perturbation_at(orbit, orbit.system->default_perturbation(), n);
}

// ---------------------------------------------------------------------------
// Linearization along an orbit

/// Step matrices D_n with x_{n+1} ~ D_n x_n, n = 0 .. N-1, assembled from pushforward.
[[nodiscard]] inline std::vector<Matrix> tangent_matrices(const Orbit& orbit) {
  const System& sys = *orbit.system;
  const Index m = sys.dimension();
  std::vector<Matrix> out(orbit.steps());
  const Matrix eye = Matrix::Identity(m, m);
  for (std::size_t n = 0; n < orbit.steps(); ++n) {
    Matrix d(m, m);
    if (orbit.is_flow()) {
      const Rk4Stages s = rk4_stages(sys, orbit.states[n], orbit.parameter, orbit.time_step);
      for (Index j = 0; j < m; ++j) {
        d.col(j) = rk4_tangent(sys, s, orbit.parameter, orbit.time_step, eye.col(j));
      }
    } else {
      for (Index j = 0; j < m; ++j) {
        d.col(j) = sys.jacobian_action(orbit.states[n], orbit.parameter, eye.col(j));
      }
    }
    out[n] = std::move(d);
  }
  return out;
}

/// Pullback matrices A_n with nu_n = A_n nu_{n+1}, assembled from pullback.
[[nodiscard]] inline std::vector<Matrix> adjoint_matrices(const Orbit& orbit) {
  const System& sys = *orbit.system;
  const Index m = sys.dimension();
  std::vector<Matrix> out(orbit.steps());
  const Matrix eye = Matrix::Identity(m, m);
  for (std::size_t n = 0; n < orbit.steps(); ++n) {
    Matrix a(m, m);
    if (orbit.is_flow()) {
      const Rk4Stages s = rk4_stages(sys, orbit.states[n], orbit.parameter, orbit.time_step);
      for (Index j = 0; j < m; ++j) {
        a.col(j) = rk4_adjoint(sys, s, orbit.parameter, orbit.time_step, eye.col(j));
      }
    } else {
      for (Index j = 0; j < m; ++j) {
        a.col(j) = sys.jacobian_transpose_action(orbit.states[n], orbit.parameter, eye.col(j));
      }
    }
    out[n] = std::move(a);
  }
  return out;
}

/// Inhomogeneous term added on step n -> n+1 (n = 0 .. N-1): X_{n+1} for
/// maps, the parameter derivative of the RK4 step along `p` for flows.
[[nodiscard]] inline std::vector<Vector> tangent_forcing(const Orbit& orbit, const Perturbation& p) {
  const System& sys = *orbit.system;
  std::vector<Vector> out(orbit.steps());
  for (std::size_t n = 0; n < orbit.steps(); ++n) {
    if (orbit.is_flow()) {
      const Rk4Stages s = rk4_stages(sys, orbit.states[n], orbit.parameter, orbit.time_step);
      out[n] = rk4_tangent(sys, s, orbit.parameter, orbit.time_step, Vector::Zero(sys.dimension()), &p);
    } else {
      out[n] = p.field(orbit.states[n]);
    }
  }
  return out;
}

/// X_n sampled at every orbit index n = 0 .. N.
[[nodiscard]] inline std::vector<Vector> perturbation_samples(const Orbit& orbit, const Perturbation& p) {
  std::vector<Vector> out(orbit.steps() + 1);
  for (std::size_t n = 0; n <= orbit.steps(); ++n) {
    if (n == 0 && !orbit.is_flow() && !orbit.preimage) {
      out[0] = Vector::Constant(orbit.dimension(), std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    out[n] = perturbation_at(orbit, p, n);
  }
  return out;
}

/// Flow vector field F (at the orbit parameter) at every orbit index.
[[nodiscard]] inline std::vector<Vector> drift_samples(const Orbit& orbit) {
  require_kind(*orbit.system, SystemKind::flow);
  std::vector<Vector> out(orbit.steps() + 1);
  for (std::size_t n = 0; n <= orbit.steps(); ++n) {
    out[n] = orbit.system->evaluate(orbit.states[n], orbit.parameter);
  }
  return out;
}

[[nodiscard]] inline std::vector<double> objective_samples(const Orbit& orbit, const Objective& phi) {
  std::vector<double> out(orbit.states.size());
  for (std::size_t n = 0; n < out.size(); ++n) {
    out[n] = phi.value(orbit.states[n]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Catalog

struct SystemInfo {
  std::string name;
  SystemKind kind;
  Index dimension;
  Index unstable_dimension;
  double default_parameter;
  double default_time_step;
  std::string description;
};

[[nodiscard]] inline std::vector<std::string> system_names() { return {"doubling", "cat", "contracting", "lorenz63"}; }

[[nodiscard]] inline SystemPtr make_system(std::string_view name) {
  if (name == "doubling") return std::make_shared<DoublingMap>();
  if (name == "cat") return std::make_shared<PerturbedCatMap>();
  if (name == "contracting") return std::make_shared<ContractingMap>();
  if (name == "lorenz63") return std::make_shared<Lorenz63>();
  throw ShadowingError(ErrorCode::configuration, "unknown system '" + std::string(name) + "'");
}

[[nodiscard]] inline std::vector<SystemInfo> catalog() {
  std::vector<SystemInfo> out;
  for (const auto& n : system_names()) {
    const SystemPtr s = make_system(n);
    out.push_back({s->name(), s->kind(), s->dimension(), s->unstable_dimension(), s->default_parameter(),
                   s->default_time_step(), s->description()});
  }
  return out;
}

/// Segment length (steps) keeping the largest exponent times segment length at or below 5.
[[nodiscard]] inline std::size_t default_segment_length(const System& sys, double dt = 0.0) {
  const double lambda = std::abs(sys.nominal_max_exponent());
  const double per_step = sys.kind() == SystemKind::flow ? lambda * dt : lambda;
  if (per_step <= 0.0) {
    return 1000;
  }
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(5.0 / per_step)));
}

}  // namespace shadow
