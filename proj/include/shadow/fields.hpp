/**
 * @file fields.hpp
 * @brief Covector forcings along an orbit and their per-step discretization.
 */
#pragma once

#include <functional>
#include <utility>
#include <variant>
#include <vector>

#include "shadow/systems.hpp"

namespace shadow {

/// A covector field omega, given in closed form or by samples at orbit points.
/// Samples are interpolated linearly in time at Runge-Kutta stage nodes.
class CovectorField {
 public:
  using Function = std::function<Vector(const Vector&)>;

  CovectorField() = default;

  static CovectorField from_function(Function f) {
    CovectorField c;
    c.source_ = std::move(f);
    return c;
  }
  static CovectorField from_samples(std::vector<Vector> samples) {
    CovectorField c;
    c.source_ = std::move(samples);
    return c;
  }
  static CovectorField from_objective(const Objective& phi) { return from_function(phi.differential); }
  static CovectorField zero(Index dimension) {
    return from_function([dimension](const Vector&) { return Vector::Zero(dimension); });
  }

  [[nodiscard]] bool sampled() const { return std::holds_alternative<std::vector<Vector>>(source_); }

  /// omega at orbit index n (state x = x_n).
  [[nodiscard]] Vector at(std::size_t n, const Vector& x) const {
    if (const auto* f = std::get_if<Function>(&source_)) {
      return (*f)(x);
    }
    const auto& s = std::get<std::vector<Vector>>(source_);
    if (n >= s.size()) {
      throw ShadowingError(ErrorCode::length_mismatch, "covector samples shorter than orbit");
    }
    return s[n];
  }

  /// omega at fraction c in [0, 1] of step n -> n+1, at stage state y.
  [[nodiscard]] Vector at_stage(std::size_t n, double c, const Vector& y) const {
    if (const auto* f = std::get_if<Function>(&source_)) {
      return (*f)(y);
    }
    const auto& s = std::get<std::vector<Vector>>(source_);
    if (n + 1 >= s.size()) {
      throw ShadowingError(ErrorCode::length_mismatch, "covector samples shorter than orbit");
    }
    return (1.0 - c) * s[n] + c * s[n + 1];
  }

 private:
  std::variant<Function, std::vector<Vector>> source_;
};

/// omega sampled at every orbit index.
[[nodiscard]] inline std::vector<Vector> covector_samples(const Orbit& orbit, const CovectorField& omega) {
  std::vector<Vector> out(orbit.states.size());
  for (std::size_t n = 0; n < out.size(); ++n) {
    out[n] = omega.at(n, orbit.states[n]);
  }
  return out;
}

/// Term added on the backward step n+1 -> n (n = 0 .. N-1). For maps this
/// is omega_n. For flows it is the reverse-mode image of the RK4 stage
/// quadrature of omega, i.e. the one-step integral of the pulled-back forcing.
[[nodiscard]] inline std::vector<Vector> adjoint_forcing(const Orbit& orbit, const CovectorField& omega) {
  const System& sys = *orbit.system;
  std::vector<Vector> out(orbit.steps());
  for (std::size_t n = 0; n < orbit.steps(); ++n) {
    if (!orbit.is_flow()) {
      out[n] = omega.at(n, orbit.states[n]);
      continue;
    }
    const Rk4Stages s = rk4_stages(sys, orbit.states[n], orbit.parameter, orbit.time_step);
    out[n] = rk4_adjoint(sys, s, orbit.parameter, orbit.time_step, Vector::Zero(sys.dimension()),
                         [&](int i, const Vector& y, double weight, Vector& ybar) {
                           ybar += weight * omega.at_stage(n, kRk4Nodes[static_cast<std::size_t>(i)], y);
                         });
  }
  return out;
}

/// Covector field omega with scalar psi sampled on the orbit; for flows the
/// pair must satisfy F(psi) = omega(F). Maps leave psi empty.
struct AdmissiblePair {
  CovectorField omega;
  std::vector<double> psi;
};

/// Largest per-step defect |psi_{n+1} - psi_n - int omega(F) dt|, the integral
/// taken with the RK4 stage quadrature of the step, divided by max(1, sup|psi|).
[[nodiscard]] inline double admissibility_defect(const Orbit& orbit, const AdmissiblePair& pair) {
  require_kind(*orbit.system, SystemKind::flow);
  if (pair.psi.size() != orbit.states.size()) {
    throw ShadowingError(ErrorCode::length_mismatch, "psi has " + std::to_string(pair.psi.size()) +
                                                         " samples, orbit has " + std::to_string(orbit.states.size()));
  }
  const System& sys = *orbit.system;
  const double h = orbit.time_step;
  double scale = 1.0;
  for (double p : pair.psi) {
    scale = std::max(scale, std::abs(p));
  }
  double worst = 0.0;
  for (std::size_t n = 0; n < orbit.steps(); ++n) {
    const Rk4Stages s = rk4_stages(sys, orbit.states[n], orbit.parameter, h);
    double q = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      q += h * kRk4Weights[i] * pair.omega.at_stage(n, kRk4Nodes[i], s.y[i]).dot(s.k[i]);
    }
    worst = std::max(worst, std::abs(pair.psi[n + 1] - pair.psi[n] - q));
  }
  return worst / scale;
}

}  // namespace shadow
