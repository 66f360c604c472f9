/**
 * @file tangent.hpp
 * @brief Tangent solutions along an orbit and the nonintrusive shadowing solve.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "shadow/nonintrusive.hpp"
#include "shadow/systems.hpp"

namespace shadow {

/// Interior window [first, last) used for comparisons: 30 steps (maps) or
/// time 5 (flows) are dropped at each end.
struct Window {
  std::size_t first = 0;
  std::size_t last = 0;

  [[nodiscard]] std::size_t size() const { return last > first ? last - first : 0; }
  [[nodiscard]] bool contains(std::size_t n) const { return n >= first && n < last; }
};

inline constexpr std::size_t kMapInteriorSteps = 30;
inline constexpr double kFlowInteriorTime = 5.0;

[[nodiscard]] inline Window interior(const Orbit& orbit) {
  const std::size_t drop = orbit.is_flow()
                               ? static_cast<std::size_t>(std::llround(kFlowInteriorTime / orbit.time_step))
                               : kMapInteriorSteps;
  Window w;
  if (orbit.steps() + 1 > 2 * drop) {
    w.first = drop;
    w.last = orbit.steps() + 1 - drop;
  }
  return w;
}

using TangentBundle = SolutionBundle;

/// Propagates W0 (M x k) forward, re-orthonormalizing at segment boundaries.
/// With a segment at least the orbit length the stored columns are the raw
/// solution (after the initial normalization recorded in r[0]).
[[nodiscard]] inline TangentBundle homogeneous_tangent(const Orbit& orbit, const Matrix& w0,
                                                       std::size_t segment_length) {
  const Index m = orbit.dimension();
  if (w0.rows() != m || w0.cols() < 1 || w0.cols() > m) {
    throw ShadowingError(ErrorCode::configuration, "initial tangent basis must be M x k with 1 <= k <= M");
  }
  if (segment_length < 1) {
    throw ShadowingError(ErrorCode::configuration, "segment length must be at least 1");
  }
  const std::vector<Matrix> d = tangent_matrices(orbit);
  detail::RecursionSpec spec;
  spec.steps = orbit.steps();
  spec.dim = m;
  spec.segment_length = segment_length;
  spec.initial_homogeneous = w0;
  spec.step_matrix = [&](std::size_t j) -> const Matrix& { return d[j]; };
  const detail::SegmentedRecursion rec = detail::run_segmented(spec);
  return detail::bundle_from(rec, true, false);
}

/// Conventional solution v'_0 = 0, v'_{n+1} = f_* v'_n + X_{n+1}, without renormalization.
[[nodiscard]] inline TangentBundle inhomogeneous_tangent(const Orbit& orbit, const Perturbation& p) {
  const std::vector<Matrix> d = tangent_matrices(orbit);
  const std::vector<Vector> g = tangent_forcing(orbit, p);
  detail::RecursionSpec spec;
  spec.steps = orbit.steps();
  spec.dim = orbit.dimension();
  spec.rescale = false;
  spec.initial_homogeneous = Matrix(orbit.dimension(), 0);
  spec.initial_particular = Vector::Zero(orbit.dimension());
  spec.step_matrix = [&](std::size_t j) -> const Matrix& { return d[j]; };
  spec.forcing = [&](std::size_t j) -> const Vector& { return g[j]; };
  const detail::SegmentedRecursion rec = detail::run_segmented(spec);
  TangentBundle out;
  out.columns.reserve(rec.particular.size());
  for (const Vector& v : rec.particular) {
    out.columns.emplace_back(v);
  }
  out.boundaries = rec.boundaries;
  out.r = {Matrix::Identity(1, 1)};
  out.homogeneous = false;
  return out;
}

[[nodiscard]] inline TangentBundle inhomogeneous_tangent(const Orbit& orbit) {
  return inhomogeneous_tangent(orbit, orbit.system->default_perturbation());
}

struct SolveOptions {
  Formulation formulation = Formulation::terminal_constraint;
  std::uint64_t seed = 7;
  /// Exponents used to check u when available (descending).
  std::optional<std::vector<double>> exponents;
  std::optional<Matrix> initial_basis;
};

struct SolveDiagnostics {
  Formulation formulation = Formulation::segmented_least_squares;
  std::size_t segments = 0;
  std::size_t segment_length = 0;
  double constraint_residual = 0.0;   // |Q_end^T y_end| (tangent) or |Q_0^T y_0| (adjoint)
  std::vector<Vector> log_r_diagonal; // per boundary
  double sup_norm = 0.0;
};

/// Shadowing vector v along the orbit and, for flows, the time dilation eta.
struct ShadowingPair {
  std::vector<Vector> v;
  std::vector<double> eta;  // empty for maps
  SolveDiagnostics diagnostics;

  [[nodiscard]] bool has_eta() const { return !eta.empty(); }
};

namespace detail {

inline void check_unstable_dimension(const Orbit& orbit, Index u, const SolveOptions& opt, bool flow) {
  const Index m = orbit.dimension();
  const Index cap = flow ? m - 1 : m;
  if (u < 0 || u > cap) {
    throw ShadowingError(ErrorCode::configuration,
                         "u = " + std::to_string(u) + " outside [0, " + std::to_string(cap) + "]");
  }
  if (opt.exponents) {
    Index positive = 0;
    for (double l : *opt.exponents) {
      if (l > (flow ? 0.05 : 0.0)) ++positive;
    }
    if (positive != u) {
      throw ShadowingError(ErrorCode::configuration, "u = " + std::to_string(u) + " but " +
                                                         std::to_string(positive) + " computed exponents are positive");
    }
  }
}

inline Matrix initial_basis(const Orbit& orbit, Index u, const SolveOptions& opt) {
  if (opt.initial_basis) {
    if (opt.initial_basis->rows() != orbit.dimension() || opt.initial_basis->cols() != u) {
      throw ShadowingError(ErrorCode::configuration, "initial basis must be M x u");
    }
    return *opt.initial_basis;
  }
  return random_matrix(orbit.dimension(), u, opt.seed);
}

inline SolveDiagnostics diagnose(const SegmentedRecursion& rec, const std::vector<Vector>& y, Formulation f,
                                 std::size_t seg, std::size_t constraint_index) {
  SolveDiagnostics d;
  d.formulation = f;
  d.segments = rec.segments();
  d.segment_length = seg;
  if (rec.k > 0) {
    d.constraint_residual = (rec.q_end.transpose() * y[constraint_index]).lpNorm<Eigen::Infinity>();
  }
  for (std::size_t i = 1; i < rec.r.size(); ++i) {
    if (rec.r[i].size() > 0) d.log_r_diagonal.push_back(rec.r[i].diagonal().array().log().matrix());
  }
  for (const Vector& v : y) {
    d.sup_norm = std::max(d.sup_norm, v.lpNorm<Eigen::Infinity>());
  }
  return d;
}

}  // namespace detail

/// Nonintrusive shadowing for maps: v = v' + W a with u homogeneous columns,
/// the coefficients fixed by the selected formulation.
[[nodiscard]] inline ShadowingPair nilss_solve(const Orbit& orbit, Index u, std::size_t segment_length,
                                               const Perturbation& p, const SolveOptions& opt = {}) {
  require_kind(*orbit.system, SystemKind::map);
  detail::check_unstable_dimension(orbit, u, opt, false);
  if (segment_length < 1) {
    throw ShadowingError(ErrorCode::configuration, "segment length must be at least 1");
  }
  const std::vector<Matrix> d = tangent_matrices(orbit);
  const std::vector<Vector> g = tangent_forcing(orbit, p);
  detail::RecursionSpec spec;
  spec.steps = orbit.steps();
  spec.dim = orbit.dimension();
  spec.segment_length = segment_length;
  spec.initial_homogeneous = u > 0 ? detail::initial_basis(orbit, u, opt) : Matrix(orbit.dimension(), 0);
  spec.initial_particular = Vector::Zero(orbit.dimension());
  spec.step_matrix = [&](std::size_t j) -> const Matrix& { return d[j]; };
  spec.forcing = [&](std::size_t j) -> const Vector& { return g[j]; };
  const detail::SegmentedRecursion rec = detail::run_segmented(spec);
  const std::vector<Vector> a = detail::solve_coefficients(rec, opt.formulation);
  ShadowingPair out;
  out.v = detail::assemble(rec, a);
  out.diagnostics = detail::diagnose(rec, out.v, opt.formulation, segment_length, orbit.steps());
  return out;
}

[[nodiscard]] inline ShadowingPair nilss_solve(const Orbit& orbit, Index u, std::size_t segment_length,
                                               const SolveOptions& opt = {}) {
  return nilss_solve(orbit, u, segment_length, orbit.system->default_perturbation(), opt);
}

/// Smallest |F| tolerated along a flow orbit.
inline constexpr double kCenterThreshold = 1e-6;

namespace detail {

inline std::vector<Vector> checked_drift(const Orbit& orbit) {
  std::vector<Vector> f = drift_samples(orbit);
  for (std::size_t n = 0; n < f.size(); ++n) {
    if (!(f[n].norm() > kCenterThreshold)) {
      throw ShadowingError(ErrorCode::center_degeneracy,
                           "|F| = " + std::to_string(f[n].norm()) + " at step " + std::to_string(n));
    }
  }
  return f;
}

}  // namespace detail

/// Nonintrusive shadowing for flows. Every step removes the component along
/// F_{n+1}; the removed amount tau_n defines eta_{n+1} = tau_n / dt, so the
/// returned pair satisfies v_{n+1} = D_n v_n + b_n - dt eta_{n+1} F_{n+1}.
/// Constraints act on the F-perpendicular homogeneous span.
[[nodiscard]] inline ShadowingPair nilss_flow_solve(const Orbit& orbit, Index u, std::size_t segment_length,
                                                    const Perturbation& p, const SolveOptions& opt = {}) {
  require_kind(*orbit.system, SystemKind::flow);
  detail::check_unstable_dimension(orbit, u, opt, true);
  if (segment_length < 1) {
    throw ShadowingError(ErrorCode::configuration, "segment length must be at least 1");
  }
  const std::vector<Vector> f = detail::checked_drift(orbit);
  const std::vector<Matrix> d = tangent_matrices(orbit);
  const std::vector<Vector> g = tangent_forcing(orbit, p);
  auto project_h = [&](std::size_t n, Matrix& h) {
    h -= f[n] * ((f[n].transpose() * h) / f[n].squaredNorm());
  };
  detail::RecursionSpec spec;
  spec.steps = orbit.steps();
  spec.dim = orbit.dimension();
  spec.segment_length = segment_length;
  spec.initial_homogeneous = u > 0 ? detail::initial_basis(orbit, u, opt) : Matrix(orbit.dimension(), 0);
  spec.initial_particular = Vector::Zero(orbit.dimension());
  spec.step_matrix = [&](std::size_t j) -> const Matrix& { return d[j]; };
  spec.forcing = [&](std::size_t j) -> const Vector& { return g[j]; };
  spec.per_step = [&](std::size_t n, Vector& pv, Matrix& h, double& tp, Eigen::RowVectorXd& th) {
    const double ff = f[n].squaredNorm();
    tp = f[n].dot(pv) / ff;
    pv -= tp * f[n];
    if (h.cols() > 0) {
      th = (f[n].transpose() * h) / ff;
      h -= f[n] * th;
    }
  };
  spec.boundary_homogeneous = project_h;
  const detail::SegmentedRecursion rec = detail::run_segmented(spec);
  const std::vector<Vector> a = detail::solve_coefficients(rec, opt.formulation);
  ShadowingPair out;
  out.v = detail::assemble(rec, a);
  const std::vector<double> tau = detail::assemble_tau(rec, a);
  out.eta.assign(orbit.steps() + 1, 0.0);
  for (std::size_t j = 0; j < tau.size(); ++j) {
    out.eta[j + 1] = tau[j] / orbit.time_step;
  }
  if (out.eta.size() > 1) out.eta[0] = out.eta[1];
  out.diagnostics = detail::diagnose(rec, out.v, opt.formulation, segment_length, orbit.steps());
  return out;
}

[[nodiscard]] inline ShadowingPair nilss_flow_solve(const Orbit& orbit, Index u, std::size_t segment_length,
                                                    const SolveOptions& opt = {}) {
  return nilss_flow_solve(orbit, u, segment_length, orbit.system->default_perturbation(), opt);
}

/// Sup over the interior of |v_{n+1} - D_n v_n - b_n + dt eta_{n+1} F_{n+1}|,
/// the discrete defining equation of a shadowing pair (maps: eta absent).
[[nodiscard]] inline double tangent_residual(const Orbit& orbit, const ShadowingPair& pair, const Perturbation& p,
                                             const Window& window) {
  if (pair.v.size() != orbit.states.size() || (pair.has_eta() && pair.eta.size() != orbit.states.size())) {
    throw ShadowingError(ErrorCode::length_mismatch, "pair and orbit lengths differ");
  }
  const std::vector<Matrix> d = tangent_matrices(orbit);
  const std::vector<Vector> g = tangent_forcing(orbit, p);
  double worst = 0.0;
  for (std::size_t n = window.first; n + 1 < window.last; ++n) {
    Vector r = pair.v[n + 1] - d[n] * pair.v[n] - g[n];
    if (pair.has_eta()) {
      r += orbit.time_step * pair.eta[n + 1] * orbit.system->evaluate(orbit.states[n + 1], orbit.parameter);
    }
    worst = std::max(worst, r.lpNorm<Eigen::Infinity>());
  }
  return worst;
}

}  // namespace shadow
