/**
 * @file adjoint.hpp
 * @brief Backward covector solutions and the nonintrusive adjoint shadowing solve.
 *
 * Covectors are propagated from x_N toward x_0 with nu_n = f^* nu_{n+1} + w_n,
 * where w_n is omega_n for maps and the one-step pulled-back quadrature of
 * omega for flows. Internally this runs the shared segmented recursion on
 * reversed indices; every returned field is indexed in orbit time.
 *
 * Flows: with L_F nu = -omega and F(psi) = omega(F), the quantity nu(F) + psi
 * is conserved, so the bounded solution carries nu(F) = -psi.
 */
#pragma once

#include <string>
#include <vector>

#include "shadow/fields.hpp"
#include "shadow/tangent.hpp"

namespace shadow {

using AdjointBundle = SolutionBundle;

/// Shadowing covector nu along the orbit.
struct ShadowingCovector {
  std::vector<Vector> nu;
  SolveDiagnostics diagnostics;
  /// Flows: nu_n(F_n) + psi_n at every n (zero for the exact bounded solution).
  std::vector<double> center_defect;
};

namespace detail {

inline RecursionSpec backward_spec(const Orbit& orbit, const std::vector<Matrix>& a) {
  RecursionSpec spec;
  const std::size_t n = orbit.steps();
  spec.steps = n;
  spec.dim = orbit.dimension();
  spec.step_matrix = [&a, n](std::size_t j) -> const Matrix& { return a[n - 1 - j]; };
  spec.orbit_index = [n](std::size_t j) { return n - j; };
  return spec;
}

inline std::vector<Vector> to_orbit_time(std::vector<Vector> y) {
  std::reverse(y.begin(), y.end());
  return y;
}

}  // namespace detail

/// Pulls back k terminal covectors (M x k) from x_N to x_0 with QR renormalization.
[[nodiscard]] inline AdjointBundle homogeneous_adjoint(const Orbit& orbit, const Matrix& terminal,
                                                       std::size_t segment_length) {
  const Index m = orbit.dimension();
  if (terminal.rows() != m || terminal.cols() < 1 || terminal.cols() > m) {
    throw ShadowingError(ErrorCode::configuration, "terminal covector basis must be M x k with 1 <= k <= M");
  }
  if (segment_length < 1) {
    throw ShadowingError(ErrorCode::configuration, "segment length must be at least 1");
  }
  const std::vector<Matrix> a = adjoint_matrices(orbit);
  detail::RecursionSpec spec = detail::backward_spec(orbit, a);
  spec.segment_length = segment_length;
  spec.initial_homogeneous = terminal;
  const detail::SegmentedRecursion rec = detail::run_segmented(spec);
  return detail::bundle_from(rec, true, true);
}

/// Conventional backward solution from the terminal covector, without renormalization.
[[nodiscard]] inline AdjointBundle inhomogeneous_adjoint(const Orbit& orbit, const CovectorField& omega,
                                                         const Vector& terminal) {
  if (terminal.size() != orbit.dimension()) {
    throw ShadowingError(ErrorCode::configuration, "terminal covector has wrong dimension");
  }
  const std::vector<Matrix> a = adjoint_matrices(orbit);
  const std::vector<Vector> w = adjoint_forcing(orbit, omega);
  const std::size_t n = orbit.steps();
  detail::RecursionSpec spec = detail::backward_spec(orbit, a);
  spec.rescale = false;
  spec.initial_homogeneous = Matrix(orbit.dimension(), 0);
  spec.initial_particular = terminal;
  spec.forcing = [&w, n](std::size_t j) -> const Vector& { return w[n - 1 - j]; };
  const detail::SegmentedRecursion rec = detail::run_segmented(spec);
  AdjointBundle out;
  for (const Vector& v : detail::to_orbit_time(rec.particular)) {
    out.columns.emplace_back(v);
  }
  out.boundaries = rec.boundaries;
  out.r = {Matrix::Identity(1, 1)};
  out.homogeneous = false;
  out.backward = true;
  return out;
}

/// Flow version started from the minimal-norm terminal covector with nu'_T(F_T) = -psi_T.
[[nodiscard]] inline AdjointBundle inhomogeneous_adjoint(const Orbit& orbit, const AdmissiblePair& pair) {
  require_kind(*orbit.system, SystemKind::flow);
  if (pair.psi.size() != orbit.states.size()) {
    throw ShadowingError(ErrorCode::length_mismatch, "psi and orbit lengths differ");
  }
  const Vector f = orbit.system->evaluate(orbit.states.back(), orbit.parameter);
  AdjointBundle out = inhomogeneous_adjoint(orbit, pair.omega, Vector(-pair.psi.back() * f / f.squaredNorm()));
  out.psi = pair.psi;
  return out;
}

/// Nonintrusive adjoint shadowing for maps: nu = nu' + eps a with nu'_N = 0
/// and the coefficients fixed at x_0.
[[nodiscard]] inline ShadowingCovector nilsas_solve(const Orbit& orbit, const CovectorField& omega, Index u,
                                                    std::size_t segment_length, const SolveOptions& opt = {}) {
  require_kind(*orbit.system, SystemKind::map);
  detail::check_unstable_dimension(orbit, u, opt, false);
  if (segment_length < 1) {
    throw ShadowingError(ErrorCode::configuration, "segment length must be at least 1");
  }
  const std::vector<Matrix> a = adjoint_matrices(orbit);
  const std::vector<Vector> w = adjoint_forcing(orbit, omega);
  const std::size_t n = orbit.steps();
  detail::RecursionSpec spec = detail::backward_spec(orbit, a);
  spec.segment_length = segment_length;
  spec.initial_homogeneous = u > 0 ? detail::initial_basis(orbit, u, opt) : Matrix(orbit.dimension(), 0);
  spec.initial_particular = Vector::Zero(orbit.dimension());
  spec.forcing = [&w, n](std::size_t j) -> const Vector& { return w[n - 1 - j]; };
  const detail::SegmentedRecursion rec = detail::run_segmented(spec);
  const std::vector<Vector> coef = detail::solve_coefficients(rec, opt.formulation);
  const std::vector<Vector> y = detail::assemble(rec, coef);
  ShadowingCovector out;
  out.diagnostics = detail::diagnose(rec, y, opt.formulation, segment_length, n);
  out.nu = detail::to_orbit_time(y);
  return out;
}

/// Largest tolerated admissibility defect of (omega, psi), relative to max(1, sup|psi|).
inline constexpr double kAdmissibilityTolerance = 1e-6;

/// Nonintrusive adjoint shadowing for flows. Homogeneous columns are kept in
/// {eps(F) = 0} and the particular solution in {nu(F) = -psi} at every
/// segment boundary; constraints act at x_0.
[[nodiscard]] inline ShadowingCovector nilsas_flow_solve(const Orbit& orbit, const AdmissiblePair& pair, Index u,
                                                         std::size_t segment_length, const SolveOptions& opt = {}) {
  require_kind(*orbit.system, SystemKind::flow);
  detail::check_unstable_dimension(orbit, u, opt, true);
  if (segment_length < 1) {
    throw ShadowingError(ErrorCode::configuration, "segment length must be at least 1");
  }
  const double defect = admissibility_defect(orbit, pair);
  if (!(defect <= kAdmissibilityTolerance)) {
    throw ShadowingError(ErrorCode::invalid_pair, "F(psi) - omega(F) defect " + std::to_string(defect) +
                                                      " exceeds " + std::to_string(kAdmissibilityTolerance));
  }
  const std::vector<Vector> f = detail::checked_drift(orbit);
  const std::vector<Matrix> a = adjoint_matrices(orbit);
  const std::vector<Vector> w = adjoint_forcing(orbit, pair.omega);
  const std::size_t n = orbit.steps();
  detail::RecursionSpec spec = detail::backward_spec(orbit, a);
  spec.segment_length = segment_length;
  spec.initial_homogeneous = u > 0 ? detail::initial_basis(orbit, u, opt) : Matrix(orbit.dimension(), 0);
  spec.initial_particular = Vector::Zero(orbit.dimension());
  spec.forcing = [&w, n](std::size_t j) -> const Vector& { return w[n - 1 - j]; };
  spec.boundary_homogeneous = [&f, n](std::size_t j, Matrix& h) {
    const Vector& fn = f[n - j];
    h -= fn * ((fn.transpose() * h) / fn.squaredNorm());
  };
  spec.boundary_particular = [&f, &pair, n](std::size_t j, Vector& p) {
    const Vector& fn = f[n - j];
    p -= fn * ((fn.dot(p) + pair.psi[n - j]) / fn.squaredNorm());
  };
  const detail::SegmentedRecursion rec = detail::run_segmented(spec);
  const std::vector<Vector> coef = detail::solve_coefficients(rec, opt.formulation);
  const std::vector<Vector> y = detail::assemble(rec, coef);
  ShadowingCovector out;
  out.diagnostics = detail::diagnose(rec, y, opt.formulation, segment_length, n);
  out.nu = detail::to_orbit_time(y);
  out.center_defect.resize(out.nu.size());
  for (std::size_t k = 0; k < out.nu.size(); ++k) {
    out.center_defect[k] = out.nu[k].dot(f[k]) + pair.psi[k];
  }
  return out;
}

/// Sup over the window of |nu_n - f^* nu_{n+1} - w_n| with w_n the discrete adjoint forcing.
[[nodiscard]] inline double adjoint_residual(const Orbit& orbit, const std::vector<Vector>& nu,
                                             const CovectorField& omega, const Window& window) {
  if (nu.size() != orbit.states.size()) {
    throw ShadowingError(ErrorCode::length_mismatch, "covector field and orbit lengths differ");
  }
  const std::vector<Matrix> a = adjoint_matrices(orbit);
  const std::vector<Vector> w = adjoint_forcing(orbit, omega);
  double worst = 0.0;
  for (std::size_t n = window.first; n + 1 < window.last; ++n) {
    worst = std::max(worst, (nu[n] - a[n] * nu[n + 1] - w[n]).lpNorm<Eigen::Infinity>());
  }
  return worst;
}

}  // namespace shadow
