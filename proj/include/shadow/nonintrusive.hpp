/**
 * @file nonintrusive.hpp
 * @brief Segmented linear recursions and the two nonintrusive constraint solves.
 *
 * Both the tangent and the adjoint solvers reduce to a recursion
 *   y_{j+1} = D_j y_j + g_j,   j = 0 .. L-1
 * run forward in "solver time" (the adjoint runs it on reversed indices).
 * A particular solution p and k homogeneous columns H are propagated in
 * segments; at each interior boundary H is re-orthonormalized, H = Q R, and the
 * component of p along Q is moved into the coefficient bookkeeping, so that
 * the global solution on segment i is p + H a_i with a_i = R_i a_{i-1} + b_i.
 */
#pragma once

#include <algorithm>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "shadow/core.hpp"

namespace shadow {

/// How the homogeneous coefficients are fixed.
enum class Formulation {
  /// Orthogonality to the homogeneous span at the last solver step, solved
  /// exactly through the segment recursion.
  terminal_constraint,
  /// Minimum sum of squared norms over all steps subject to continuity.
  segmented_least_squares,
};

inline const char* to_string(Formulation f) {
  return f == Formulation::terminal_constraint ? "terminal_constraint" : "segmented_least_squares";
}

/// Solution columns along an orbit with the QR factors of each segment
/// boundary. Forward bundles are indexed in orbit time; backward bundles are
/// propagated from x_N toward x_0, and `boundaries`/`r` then count solver
/// steps from the end of the orbit.
struct SolutionBundle {
  std::vector<Matrix> columns;            // by orbit index n = 0 .. N
  std::vector<std::size_t> boundaries;    // segment starts in solver steps, then N
  std::vector<Matrix> r;                  // r[0]: initial factor, r[i]: boundary i
  bool homogeneous = true;
  bool backward = false;
  std::vector<double> psi;                // flows: the scalar of the terminal condition

  [[nodiscard]] std::size_t steps() const { return columns.empty() ? 0 : columns.size() - 1; }

  [[nodiscard]] std::size_t solver_index(std::size_t n) const { return backward ? steps() - n : n; }

  [[nodiscard]] std::size_t segment_of_solver(std::size_t j) const {
    if (j >= steps()) {
      return boundaries.size() - 2;
    }
    auto it = std::upper_bound(boundaries.begin(), boundaries.end(), j);
    return static_cast<std::size_t>(it - boundaries.begin()) - 1;
  }

  /// Columns without renormalization: W R_i ... R_0 (may overflow for long orbits).
  [[nodiscard]] Matrix unscaled(std::size_t n) const {
    if (n > steps()) {
      throw ShadowingError(ErrorCode::index_out_of_range, "bundle index " + std::to_string(n));
    }
    const std::size_t seg = segment_of_solver(solver_index(n));
    Matrix acc = r[0];
    for (std::size_t i = 1; i <= seg; ++i) {
      acc = r[i] * acc;
    }
    return columns[n] * acc;
  }

  /// Mean log growth of each column per solver step, from the R diagonals.
  [[nodiscard]] Vector log_growth_per_step() const {
    const Index k = columns.empty() ? 0 : columns.front().cols();
    Vector sum = Vector::Zero(k);
    for (std::size_t i = 1; i < r.size(); ++i) {
      sum += r[i].diagonal().array().log().matrix();
    }
    return steps() > 0 ? Vector(sum / static_cast<double>(steps())) : sum;
  }
};

namespace detail {

struct RecursionSpec {
  std::size_t steps = 0;
  Index dim = 0;
  std::size_t segment_length = 1;
  bool rescale = true;
  Matrix initial_homogeneous;  // dim x k (k may be 0)
  Vector initial_particular;   // dim, or empty for homogeneous-only runs
  std::function<const Matrix&(std::size_t)> step_matrix;
  std::function<const Vector&(std::size_t)> forcing;  // empty: homogeneous particular
  /// Called after every step with the new solver index; may project and
  /// report the removed coefficient along a fixed direction.
  std::function<void(std::size_t, Vector&, Matrix&, double&, Eigen::RowVectorXd&)> per_step;
  /// Called at every boundary (including both ends) before orthonormalization.
  std::function<void(std::size_t, Matrix&)> boundary_homogeneous;
  std::function<void(std::size_t, Vector&)> boundary_particular;
  /// Names the steps in error messages (maps solver index to orbit index).
  std::function<std::size_t(std::size_t)> orbit_index = [](std::size_t j) { return j; };
};

struct SegmentedRecursion {
  std::size_t steps = 0;
  Index dim = 0;
  Index k = 0;
  std::vector<std::size_t> boundaries;  // b_0 = 0 < ... < b_K = steps
  std::vector<Vector> particular;       // steps + 1 stored values
  std::vector<Matrix> homogeneous;      // steps + 1 stored values
  std::vector<Matrix> r;                // r[i]: factor at boundary i (r[0]: initial)
  std::vector<Vector> b;                // b[i]: particular component moved at boundary i
  Matrix q_end;                         // orthonormal basis of the final homogeneous span
  std::vector<double> tau_particular;   // per transition (optional)
  std::vector<Eigen::RowVectorXd> tau_homogeneous;

  [[nodiscard]] std::size_t segments() const { return boundaries.size() - 1; }

  /// Segment owning stored index j (boundaries belong to the later segment, the end to the last).
  [[nodiscard]] std::size_t segment_of(std::size_t j) const {
    if (j >= steps) {
      return segments() - 1;
    }
    auto it = std::upper_bound(boundaries.begin(), boundaries.end(), j);
    return static_cast<std::size_t>(it - boundaries.begin()) - 1;
  }
};

inline void check_rank(const Matrix& r, std::size_t where) {
  for (Index i = 0; i < r.rows(); ++i) {
    if (!(r(i, i) > kRankCollapse)) {
      throw ShadowingError(ErrorCode::degenerate_basis,
                           "rescaling factor diagonal " + std::to_string(r(i, i)) + " at step " + std::to_string(where));
    }
  }
}

[[nodiscard]] inline SegmentedRecursion run_segmented(const RecursionSpec& spec) {
  SegmentedRecursion out;
  out.steps = spec.steps;
  out.dim = spec.dim;
  out.k = spec.initial_homogeneous.cols();
  const bool has_particular = spec.initial_particular.size() > 0;
  const std::size_t seg = spec.rescale ? std::max<std::size_t>(1, spec.segment_length) : spec.steps;
  for (std::size_t j = 0; j < spec.steps; j += seg) {
    out.boundaries.push_back(j);
  }
  out.boundaries.push_back(spec.steps);
  out.particular.resize(spec.steps + 1);
  out.homogeneous.resize(spec.steps + 1);
  if (spec.per_step) {
    out.tau_particular.assign(spec.steps, 0.0);
    out.tau_homogeneous.assign(spec.steps, Eigen::RowVectorXd::Zero(out.k));
  }

  Matrix h = spec.initial_homogeneous;
  Vector p = has_particular ? spec.initial_particular : Vector::Zero(spec.dim);
  if (spec.boundary_homogeneous && out.k > 0) spec.boundary_homogeneous(0, h);
  if (spec.boundary_particular && has_particular) spec.boundary_particular(0, p);
  if (spec.rescale && out.k > 0) {
    ThinQR qr = qr_positive(h);
    check_rank(qr.r, spec.orbit_index(0));
    h = std::move(qr.q);
    out.r.push_back(std::move(qr.r));
  } else {
    out.r.push_back(Matrix::Identity(out.k, out.k));
  }
  out.b.push_back(Vector::Zero(out.k));

  for (std::size_t i = 0; i + 1 < out.boundaries.size(); ++i) {
    const std::size_t begin = out.boundaries[i];
    const std::size_t end = out.boundaries[i + 1];
    for (std::size_t j = begin; j < end; ++j) {
      out.particular[j] = p;
      out.homogeneous[j] = h;
      const Matrix& d = spec.step_matrix(j);
      if (out.k > 0) h = d * h;
      p = d * p;
      if (spec.forcing) p += spec.forcing(j);
      if (spec.per_step) spec.per_step(j + 1, p, h, out.tau_particular[j], out.tau_homogeneous[j]);
      {
        const double mag = std::max(p.lpNorm<Eigen::Infinity>(), out.k > 0 ? h.lpNorm<Eigen::Infinity>() : 0.0);
        if (!(mag < kMagnitudeCap)) {
          throw ShadowingError(ErrorCode::overflow, "magnitude exceeded cap at step " +
                                                        std::to_string(spec.orbit_index(j + 1)) +
                                                        "; use a shorter segment length");
        }
      }
    }
    if (spec.boundary_homogeneous && out.k > 0) spec.boundary_homogeneous(end, h);
    const bool last = (end == spec.steps);
    if (last) {
      if (spec.boundary_particular && has_particular) spec.boundary_particular(end, p);
      out.particular[end] = p;
      out.homogeneous[end] = h;
      if (out.k > 0) {
        ThinQR qr = qr_positive(h);
        check_rank(qr.r, spec.orbit_index(end));
        out.b.push_back(qr.q.transpose() * p);
        out.q_end = std::move(qr.q);
        out.r.push_back(std::move(qr.r));
      }
      break;
    }
    if (out.k > 0) {
      ThinQR qr = qr_positive(h);
      check_rank(qr.r, spec.orbit_index(end));
      Vector bi = qr.q.transpose() * p;
      p -= qr.q * bi;
      h = std::move(qr.q);
      out.r.push_back(std::move(qr.r));
      out.b.push_back(std::move(bi));
    } else {
      out.r.push_back(Matrix(0, 0));
      out.b.push_back(Vector(0));
    }
    if (spec.boundary_particular && has_particular) spec.boundary_particular(end, p);
  }
  return out;
}

/// Coefficients a_i enforcing Q_end^T y_L = 0, solved backward through the
/// segment recursion with triangular (contracting) inverses.
[[nodiscard]] inline std::vector<Vector> solve_terminal_constraint(const SegmentedRecursion& rec) {
  const std::size_t segs = rec.segments();
  std::vector<Vector> a(segs, Vector::Zero(rec.k));
  if (rec.k == 0) {
    return a;
  }
  auto solve_r = [&](const Matrix& r, const Vector& rhs, std::size_t where) -> Vector {
    Eigen::ColPivHouseholderQR<Matrix> qr(r);
    qr.setThreshold(1e-14);
    if (qr.rank() < r.cols()) {
      throw ShadowingError(ErrorCode::conditioning,
                           "constraint system rank " + std::to_string(qr.rank()) + " < " + std::to_string(r.cols()) +
                               " at boundary " + std::to_string(where) +
                               "; diag(R) = " + std::to_string(r.diagonal().minCoeff()) + ".." +
                               std::to_string(r.diagonal().maxCoeff()));
    }
    return qr.solve(rhs);
  };
  // boundary K: R_K a_{K-1} + b_K = 0
  a[segs - 1] = solve_r(rec.r[segs], -rec.b[segs], segs);
  for (std::size_t i = segs - 1; i >= 1; --i) {
    a[i - 1] = solve_r(rec.r[i], a[i] - rec.b[i], i);
  }
  return a;
}

/// Coefficients minimizing sum_j |p_j + H_j a_seg(j)|^2 subject to continuity.
[[nodiscard]] inline std::vector<Vector> solve_least_squares(const SegmentedRecursion& rec) {
  const std::size_t segs = rec.segments();
  const Index k = rec.k;
  std::vector<Vector> a(segs, Vector::Zero(k));
  if (k == 0) {
    return a;
  }
  const Index na = static_cast<Index>(segs) * k;
  const Index nc = static_cast<Index>(segs - 1) * k;
  std::vector<Eigen::Triplet<double>> trip;
  Vector rhs = Vector::Zero(na + nc);
  for (std::size_t i = 0; i < segs; ++i) {
    const std::size_t begin = rec.boundaries[i];
    const std::size_t end = (i + 1 == segs) ? rec.steps + 1 : rec.boundaries[i + 1];
    Matrix c = Matrix::Zero(k, k);
    Vector d = Vector::Zero(k);
    for (std::size_t j = begin; j < end; ++j) {
      c.noalias() += rec.homogeneous[j].transpose() * rec.homogeneous[j];
      d.noalias() += rec.homogeneous[j].transpose() * rec.particular[j];
    }
    const Index off = static_cast<Index>(i) * k;
    for (Index r = 0; r < k; ++r) {
      for (Index s = 0; s < k; ++s) {
        trip.emplace_back(off + r, off + s, c(r, s));
      }
      rhs[off + r] = -d[r];
    }
  }
  // constraint i (boundary i = 1 .. segs-1): a_i - R_i a_{i-1} = b_i
  for (std::size_t i = 1; i < segs; ++i) {
    const Index row = na + static_cast<Index>(i - 1) * k;
    const Index col_prev = static_cast<Index>(i - 1) * k;
    const Index col_cur = static_cast<Index>(i) * k;
    for (Index r = 0; r < k; ++r) {
      trip.emplace_back(row + r, col_cur + r, 1.0);
      trip.emplace_back(col_cur + r, row + r, 1.0);
      for (Index s = 0; s < k; ++s) {
        trip.emplace_back(row + r, col_prev + s, -rec.r[i](r, s));
        trip.emplace_back(col_prev + s, row + r, -rec.r[i](r, s));
      }
      rhs[row + r] = rec.b[i][r];
    }
  }
  Eigen::SparseMatrix<double> kkt(na + nc, na + nc);
  kkt.setFromTriplets(trip.begin(), trip.end());
  kkt.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(kkt);
  if (lu.info() != Eigen::Success) {
    throw ShadowingError(ErrorCode::conditioning, "segmented least-squares system is singular: " + lu.lastErrorMessage());
  }
  const Vector sol = lu.solve(rhs);
  if (lu.info() != Eigen::Success || !sol.allFinite()) {
    throw ShadowingError(ErrorCode::conditioning, "segmented least-squares solve failed");
  }
  for (std::size_t i = 0; i < segs; ++i) {
    a[i] = sol.segment(static_cast<Index>(i) * k, k);
  }
  return a;
}

/// y_j = p_j + H_j a_seg(j) at every stored index.
[[nodiscard]] inline std::vector<Vector> assemble(const SegmentedRecursion& rec, const std::vector<Vector>& a) {
  std::vector<Vector> y(rec.steps + 1);
  for (std::size_t j = 0; j <= rec.steps; ++j) {
    y[j] = rec.particular[j];
    if (rec.k > 0) {
      y[j].noalias() += rec.homogeneous[j] * a[rec.segment_of(j)];
    }
  }
  return y;
}

/// Per-transition projection coefficient tau_j = tau'_j + tau^H_j a_seg(j).
[[nodiscard]] inline std::vector<double> assemble_tau(const SegmentedRecursion& rec, const std::vector<Vector>& a) {
  std::vector<double> tau(rec.tau_particular.size());
  for (std::size_t j = 0; j < tau.size(); ++j) {
    tau[j] = rec.tau_particular[j];
    if (rec.k > 0) {
      tau[j] += rec.tau_homogeneous[j].dot(a[rec.segment_of(j)]);
    }
  }
  return tau;
}

[[nodiscard]] inline SolutionBundle bundle_from(const SegmentedRecursion& rec, bool homogeneous, bool backward) {
  SolutionBundle out;
  out.columns = rec.homogeneous;
  if (backward) {
    std::reverse(out.columns.begin(), out.columns.end());
  }
  out.boundaries = rec.boundaries;
  out.r = rec.r;
  out.homogeneous = homogeneous;
  out.backward = backward;
  return out;
}

[[nodiscard]] inline std::vector<Vector> solve_coefficients(const SegmentedRecursion& rec, Formulation f) {
  return f == Formulation::terminal_constraint ? solve_terminal_constraint(rec) : solve_least_squares(rec);
}

}  // namespace detail
}  // namespace shadow
