/**
 * @file splitting.hpp
 * @brief Lyapunov exponents, covariant Lyapunov vectors, their dual covectors,
 * oblique projections, and the split-propagate expansion oracles.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "shadow/adjoint.hpp"
#include "shadow/fields.hpp"
#include "shadow/tangent.hpp"

namespace shadow {

enum class Subspace { unstable, center, stable };

inline const char* to_string(Subspace s) {
  switch (s) {
    case Subspace::unstable: return "unstable";
    case Subspace::center: return "center";
    case Subspace::stable: return "stable";
  }
  return "unknown";
}

struct ExponentEstimate {
  std::vector<double> value;   // descending, per step (maps) or per unit time (flows)
  std::vector<double> stderr_;
  std::vector<std::string> warnings;
};

inline constexpr std::size_t kMapBuffer = 50;
inline constexpr double kFlowBuffer = 25.0;
inline constexpr double kCenterExponentBand = 0.05;
inline constexpr double kTangencyAngle = 1e-3;

/// QR (Benettin) exponents of the leading k directions with batch-means errors.
[[nodiscard]] inline ExponentEstimate lyapunov_exponents(const Orbit& orbit, Index k, std::uint64_t seed = 11) {
  const Index m = orbit.dimension();
  if (k < 1 || k > m) {
    throw ShadowingError(ErrorCode::configuration, "exponent count must be in [1, M]");
  }
  ExponentEstimate out;
  if (orbit.steps() < 1000) {
    out.warnings.push_back("orbit shorter than 1000 steps; exponents are rough");
  }
  const std::vector<Matrix> d = tangent_matrices(orbit);
  Matrix q = qr_positive(random_matrix(m, k, seed)).q;
  std::vector<std::vector<double>> logs(static_cast<std::size_t>(k), std::vector<double>(orbit.steps()));
  for (std::size_t n = 0; n < orbit.steps(); ++n) {
    ThinQR qr = qr_positive(d[n] * q);
    for (Index i = 0; i < k; ++i) {
      if (!(qr.r(i, i) > kRankCollapse)) {
        throw ShadowingError(ErrorCode::degenerate_basis, "QR diagonal collapsed at step " + std::to_string(n));
      }
      logs[static_cast<std::size_t>(i)][n] = std::log(qr.r(i, i)) / orbit.step_weight();
    }
    q = std::move(qr.q);
  }
  for (const auto& l : logs) {
    const Estimate e = batch_mean(l);
    out.value.push_back(e.value);
    out.stderr_.push_back(e.stderr_);
  }
  return out;
}

/// Exponents of backward pullback of k covectors (per step or unit time, descending).
[[nodiscard]] inline ExponentEstimate adjoint_exponents(const Orbit& orbit, Index k, std::uint64_t seed = 13) {
  const Index m = orbit.dimension();
  if (k < 1 || k > m) {
    throw ShadowingError(ErrorCode::configuration, "exponent count must be in [1, M]");
  }
  const std::vector<Matrix> a = adjoint_matrices(orbit);
  Matrix q = qr_positive(random_matrix(m, k, seed)).q;
  std::vector<std::vector<double>> logs(static_cast<std::size_t>(k), std::vector<double>(orbit.steps()));
  for (std::size_t j = 0; j < orbit.steps(); ++j) {
    ThinQR qr = qr_positive(a[orbit.steps() - 1 - j] * q);
    for (Index i = 0; i < k; ++i) {
      logs[static_cast<std::size_t>(i)][j] = std::log(qr.r(i, i)) / orbit.step_weight();
    }
    q = std::move(qr.q);
  }
  ExponentEstimate out;
  for (const auto& l : logs) {
    const Estimate e = batch_mean(l);
    out.value.push_back(e.value);
    out.stderr_.push_back(e.stderr_);
  }
  return out;
}

/// Covariant frames along an orbit. Column i of `vectors[n]` is the unit CLV
/// e^i_n; column i of `duals[n]` is the covector eps^i_n with eps^i(e^j) = delta_ij.
/// growth[n](i) is d^i_n with f_* e^i_n = d^i_n e^i_{n+1} and f^* eps^i_{n+1} = d^i_n eps^i_n.
struct SplittingData {
  std::vector<double> exponents;
  std::vector<double> exponent_stderr;
  std::vector<Matrix> vectors;
  std::vector<Matrix> duals;
  std::vector<Vector> growth;
  std::vector<Index> unstable;
  std::vector<Index> center;
  std::vector<Index> stable;
  std::size_t first = 0;  // first interior index
  std::size_t last = 0;   // one past the last interior index
  std::size_t buffer = 0;
  double hyperbolicity_c = 1.0;
  double hyperbolicity_lambda = 0.0;  // per step
  double min_angle = 0.0;
  std::vector<std::string> warnings;
  bool is_flow = false;

  [[nodiscard]] bool has_duals() const { return !duals.empty(); }
  [[nodiscard]] bool interior(std::size_t n) const { return n >= first && n < last; }

  void require_interior(std::size_t n) const {
    if (!interior(n)) {
      throw ShadowingError(ErrorCode::buffer, "step " + std::to_string(n) + " lies in a convergence buffer [" +
                                                  std::to_string(first) + ", " + std::to_string(last) + ")");
    }
  }

  [[nodiscard]] const std::vector<Index>& indices(Subspace s) const {
    return s == Subspace::unstable ? unstable : (s == Subspace::center ? center : stable);
  }
};

namespace detail {

inline std::size_t buffer_steps(const Orbit& orbit) {
  return orbit.is_flow() ? static_cast<std::size_t>(std::llround(kFlowBuffer / orbit.time_step)) : kMapBuffer;
}

inline double min_pair_angle(const Matrix& v) {
  double best = M_PI / 2;
  for (Index i = 0; i < v.cols(); ++i) {
    for (Index j = i + 1; j < v.cols(); ++j) {
      const double c = std::min(1.0, std::abs(v.col(i).dot(v.col(j))));
      best = std::min(best, std::acos(c));
    }
  }
  return best;
}

}  // namespace detail

/// Ginelli forward-backward CLVs with a full (k = M) frame. Frames are kept
/// on every index; only [first, last) is converged.
[[nodiscard]] inline SplittingData clv(const Orbit& orbit, std::size_t buffer = 0, std::uint64_t seed = 17) {
  const Index m = orbit.dimension();
  const std::size_t n_steps = orbit.steps();
  if (buffer == 0) {
    buffer = detail::buffer_steps(orbit);
  }
  if (n_steps <= 2 * buffer) {
    throw ShadowingError(ErrorCode::insufficient_orbit, "orbit of " + std::to_string(n_steps) +
                                                            " steps has no interior beyond buffers of " +
                                                            std::to_string(buffer));
  }
  const std::vector<Matrix> d = tangent_matrices(orbit);
  std::vector<Matrix> q(n_steps + 1);
  std::vector<Matrix> r(n_steps + 1);
  q[0] = qr_positive(random_matrix(m, m, seed)).q;
  for (std::size_t n = 0; n < n_steps; ++n) {
    ThinQR qr = qr_positive(d[n] * q[n]);
    for (Index i = 0; i < m; ++i) {
      if (!(qr.r(i, i) > kRankCollapse)) {
        throw ShadowingError(ErrorCode::degenerate_basis, "QR diagonal collapsed at step " + std::to_string(n));
      }
    }
    q[n + 1] = std::move(qr.q);
    r[n + 1] = std::move(qr.r);
  }

  SplittingData s;
  s.is_flow = orbit.is_flow();
  s.buffer = buffer;
  s.first = buffer;
  s.last = n_steps + 1 - buffer;
  s.vectors.resize(n_steps + 1);
  s.growth.resize(n_steps);
  Matrix c = Matrix::Identity(m, m);
  s.vectors[n_steps] = q[n_steps] * c;
  for (std::size_t n = n_steps; n-- > 0;) {
    Matrix next = r[n + 1].triangularView<Eigen::Upper>().solve(c);
    Vector g(m);
    for (Index i = 0; i < m; ++i) {
      const double len = next.col(i).norm();
      next.col(i) /= len;
      g[i] = 1.0 / len;
    }
    c = std::move(next);
    s.vectors[n] = q[n] * c;
    s.growth[n] = std::move(g);
  }

  // exponents of each CLV over the interior
  const double w = orbit.step_weight();
  s.exponents.assign(static_cast<std::size_t>(m), 0.0);
  s.exponent_stderr.assign(static_cast<std::size_t>(m), 0.0);
  for (Index i = 0; i < m; ++i) {
    std::vector<double> l;
    for (std::size_t n = s.first; n + 1 < s.last; ++n) {
      l.push_back(std::log(std::abs(s.growth[n][i])) / w);
    }
    const Estimate e = batch_mean(l);
    s.exponents[static_cast<std::size_t>(i)] = e.value;
    s.exponent_stderr[static_cast<std::size_t>(i)] = e.stderr_;
  }

  // classify
  Index center = -1;
  if (s.is_flow) {
    double best = -1.0;
    for (Index i = 0; i < m; ++i) {
      if (std::abs(s.exponents[static_cast<std::size_t>(i)]) >= kCenterExponentBand) continue;
      double align = 0.0;
      for (std::size_t n = s.first; n < s.last; ++n) {
        const Vector f = orbit.system->evaluate(orbit.states[n], orbit.parameter);
        align += std::abs(s.vectors[n].col(i).dot(f)) / f.norm();
      }
      if (align > best) {
        best = align;
        center = i;
      }
    }
    if (center < 0) {
      throw ShadowingError(ErrorCode::center_degeneracy, "no covariant vector with |exponent| < 0.05");
    }
    s.center.push_back(center);
  }
  for (Index i = 0; i < m; ++i) {
    if (i == center) continue;
    (s.exponents[static_cast<std::size_t>(i)] > 0.0 ? s.unstable : s.stable).push_back(i);
  }

  // hyperbolicity constants: lambda from the weakest non-center exponent,
  // C from the worst finite-time excess over lambda^m along the interior
  double weakest = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < m; ++i) {
    if (i != center) weakest = std::min(weakest, std::abs(s.exponents[static_cast<std::size_t>(i)]) * w);
  }
  s.hyperbolicity_lambda = std::isfinite(weakest) ? std::exp(-weakest) : 0.0;
  if (std::isfinite(weakest) && weakest > 0.0) {
    const std::size_t span = std::min<std::size_t>(50, (s.last - s.first) / 2);
    double worst = 0.0;
    for (Index i = 0; i < m; ++i) {
      if (i == center) continue;
      const bool expanding = s.exponents[static_cast<std::size_t>(i)] > 0.0;
      for (std::size_t n = s.first; n + span < s.last; n += span) {
        double acc = 0.0;
        for (std::size_t k = 0; k < span; ++k) {
          const double lg = std::log(std::abs(s.growth[n + k][i]));
          acc += expanding ? -lg : lg;
          worst = std::max(worst, acc + static_cast<double>(k + 1) * weakest);
        }
      }
    }
    s.hyperbolicity_c = std::exp(worst);
  }

  s.min_angle = M_PI / 2;
  for (std::size_t n = s.first; n < s.last; ++n) {
    s.min_angle = std::min(s.min_angle, detail::min_pair_angle(s.vectors[n]));
  }
  if (s.min_angle < kTangencyAngle) {
    s.warnings.push_back("near tangency: minimum angle between covariant vectors " + std::to_string(s.min_angle));
  }
  return s;
}

/// Dual frames eps^i = rows of the inverse CLV matrix, one per orbit index.
/// The center dual of a flow is normalized on demand by `center_dual`.
inline SplittingData& adjoint_clvs(SplittingData& s) {
  s.duals.resize(s.vectors.size());
  for (std::size_t n = 0; n < s.vectors.size(); ++n) {
    Eigen::FullPivLU<Matrix> lu(s.vectors[n]);
    if (!lu.isInvertible() || (s.interior(n) && detail::min_pair_angle(s.vectors[n]) < 1e-12)) {
      throw ShadowingError(ErrorCode::near_tangency, "singular covariant frame at step " + std::to_string(n));
    }
    s.duals[n] = lu.inverse().transpose();
  }
  return s;
}

[[nodiscard]] inline SplittingData compute_splitting(const Orbit& orbit, std::size_t buffer = 0, std::uint64_t seed = 17) {
  SplittingData s = clv(orbit, buffer, seed);
  adjoint_clvs(s);
  return s;
}

/// Center dual normalized to eps^c(F) = 1 at index n.
[[nodiscard]] inline Vector center_dual(const SplittingData& s, const Orbit& orbit, std::size_t n) {
  if (s.center.empty()) {
    throw ShadowingError(ErrorCode::kind_mismatch, "splitting has no center direction");
  }
  const Vector eps = s.duals[n].col(s.center.front());
  const Vector f = orbit.system->evaluate(orbit.states[n], orbit.parameter);
  return eps / eps.dot(f);
}

/// Oblique projection of a vector onto the selected subspace at interior index n.
[[nodiscard]] inline Vector project(const SplittingData& s, std::size_t n, const Vector& w, Subspace sel) {
  s.require_interior(n);
  Vector out = Vector::Zero(w.size());
  for (Index i : s.indices(sel)) {
    out += s.vectors[n].col(i) * s.duals[n].col(i).dot(w);
  }
  return out;
}

/// Adjoint oblique projection of a covector at interior index n.
[[nodiscard]] inline Vector project_covector(const SplittingData& s, std::size_t n, const Vector& eta, Subspace sel) {
  s.require_interior(n);
  Vector out = Vector::Zero(eta.size());
  for (Index i : s.indices(sel)) {
    out += s.duals[n].col(i) * eta.dot(s.vectors[n].col(i));
  }
  return out;
}

/// Truncated split-propagate sum and its error bound C lambda^{n_max} |g|/(1 - lambda).
struct Expansion {
  std::vector<Vector> field;  // NaN outside [first, last)
  std::vector<double> eta;    // flows (tangent): time dilation; empty otherwise
  std::size_t first = 0;
  std::size_t last = 0;
  double tail_bound = 0.0;
};

namespace detail {

inline void require_window(const SplittingData& s, std::size_t n_max, std::size_t& first, std::size_t& last) {
  first = s.first + n_max + 1;
  last = s.last > n_max + 1 ? s.last - n_max - 1 : 0;
  if (last <= first) {
    throw ShadowingError(ErrorCode::insufficient_orbit,
                         "orbit too short for expansion windows of " + std::to_string(n_max) + " steps");
  }
}

inline double tail_bound(const SplittingData& s, std::size_t n_max, double forcing_scale) {
  const double lam = s.hyperbolicity_lambda;
  if (!(lam < 1.0)) return std::numeric_limits<double>::infinity();
  return s.hyperbolicity_c * std::pow(lam, static_cast<double>(n_max + 1)) * forcing_scale / (1.0 - lam);
}

}  // namespace detail

/// v_n = sum_{m>=0} f_*^m P^s g_{n-m} - sum_{m>=1} f_*^{-m} P^u g_{n+m}, truncated at n_max,
/// where g_k is the forcing landing at x_k (X_k for maps, the one-step
/// forcing b_{k-1} for flows). Flows also return eta_k = epsc_k(b_{k-1}) / dt.
[[nodiscard]] inline Expansion expand_shadowing_vector(const Orbit& orbit, const SplittingData& s,
                                                       std::size_t n_max, const Perturbation& p) {
  const std::size_t n_steps = orbit.steps();
  const std::vector<Vector> b = tangent_forcing(orbit, p);
  const Index m = orbit.dimension();
  // forcing landing at index k = 1 .. N, in CLV coordinates
  std::vector<Vector> coef(n_steps + 1, Vector::Zero(m));
  double scale = 0.0;
  for (std::size_t k = 1; k <= n_steps; ++k) {
    coef[k] = s.duals[k].transpose() * b[k - 1];
    scale = std::max(scale, b[k - 1].norm());
  }
  Expansion out;
  detail::require_window(s, n_max, out.first, out.last);
  out.field.assign(n_steps + 1, Vector::Constant(m, std::numeric_limits<double>::quiet_NaN()));
  for (std::size_t n = out.first; n < out.last; ++n) {
    Vector v = Vector::Zero(m);
    for (Index i : s.stable) {
      double sum = coef[n][i];
      double g = 1.0;
      for (std::size_t k = 1; k <= n_max; ++k) {
        g *= s.growth[n - k][i];
        sum += g * coef[n - k][i];
      }
      v += sum * s.vectors[n].col(i);
    }
    for (Index i : s.unstable) {
      double sum = 0.0;
      double g = 1.0;
      for (std::size_t k = 1; k <= n_max; ++k) {
        g *= s.growth[n + k - 1][i];
        sum += coef[n + k][i] / g;
      }
      v -= sum * s.vectors[n].col(i);
    }
    out.field[n] = std::move(v);
  }
  if (orbit.is_flow()) {
    out.eta.assign(n_steps + 1, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t n = out.first; n < out.last; ++n) {
      out.eta[n] = center_dual(s, orbit, n).dot(b[n - 1]) / orbit.time_step;
    }
  }
  out.tail_bound = detail::tail_bound(s, n_max, scale);
  return out;
}

/// nu_n = sum_{m>=0} f^{*m} P^s w_{n+m} - sum_{m>=1} f^{*-m} P^u w_{n-m} - psi_n epsc_n,
/// truncated at n_max, with w_k the discrete adjoint forcing at x_k. psi is
/// ignored for maps and may be empty.
[[nodiscard]] inline Expansion expand_shadowing_covector(const Orbit& orbit, const SplittingData& s,
                                                         const CovectorField& omega, const std::vector<double>& psi,
                                                         std::size_t n_max) {
  if (!s.has_duals()) {
    throw ShadowingError(ErrorCode::configuration, "splitting needs dual frames");
  }
  if (orbit.is_flow() && psi.size() != orbit.states.size()) {
    throw ShadowingError(ErrorCode::length_mismatch, "psi and orbit lengths differ");
  }
  const std::size_t n_steps = orbit.steps();
  const Index m = orbit.dimension();
  const std::vector<Vector> w = adjoint_forcing(orbit, omega);
  std::vector<Vector> coef(n_steps, Vector::Zero(m));
  double scale = 0.0;
  for (std::size_t k = 0; k < n_steps; ++k) {
    coef[k] = s.vectors[k].transpose() * w[k];
    scale = std::max(scale, w[k].norm());
  }
  Expansion out;
  detail::require_window(s, n_max, out.first, out.last);
  out.field.assign(n_steps + 1, Vector::Constant(m, std::numeric_limits<double>::quiet_NaN()));
  for (std::size_t n = out.first; n < out.last; ++n) {
    Vector nu = Vector::Zero(m);
    for (Index i : s.stable) {
      double sum = coef[n][i];
      double g = 1.0;
      for (std::size_t k = 1; k <= n_max; ++k) {
        g *= s.growth[n + k - 1][i];
        sum += g * coef[n + k][i];
      }
      nu += sum * s.duals[n].col(i);
    }
    for (Index i : s.unstable) {
      double sum = 0.0;
      double g = 1.0;
      for (std::size_t k = 1; k <= n_max; ++k) {
        g *= s.growth[n - k][i];
        sum += coef[n - k][i] / g;
      }
      nu -= sum * s.duals[n].col(i);
    }
    if (orbit.is_flow()) {
      nu -= psi[n] * center_dual(s, orbit, n);
    }
    out.field[n] = std::move(nu);
  }
  out.tail_bound = detail::tail_bound(s, n_max, scale);
  return out;
}

/// Relative covariance residual max |f_* e^i_n - d^i_n e^i_{n+1}| over the interior.
[[nodiscard]] inline double covariance_residual(const Orbit& orbit, const SplittingData& s) {
  const std::vector<Matrix> d = tangent_matrices(orbit);
  double worst = 0.0;
  for (std::size_t n = s.first; n + 1 < s.last; ++n) {
    const Matrix img = d[n] * s.vectors[n];
    for (Index i = 0; i < img.cols(); ++i) {
      const Vector r = img.col(i) - s.growth[n][i] * s.vectors[n + 1].col(i);
      worst = std::max(worst, r.norm() / img.col(i).norm());
    }
  }
  return worst;
}

/// Relative adjoint covariance residual max |f^* eps^i_{n+1} - d^i_n eps^i_n| over the interior.
[[nodiscard]] inline double adjoint_covariance_residual(const Orbit& orbit, const SplittingData& s) {
  const std::vector<Matrix> a = adjoint_matrices(orbit);
  double worst = 0.0;
  for (std::size_t n = s.first; n + 1 < s.last; ++n) {
    const Matrix img = a[n] * s.duals[n + 1];
    for (Index i = 0; i < img.cols(); ++i) {
      const Vector r = img.col(i) - s.growth[n][i] * s.duals[n].col(i);
      worst = std::max(worst, r.norm() / img.col(i).norm());
    }
  }
  return worst;
}

/// max |eps^i(e^j) - delta_ij| over the interior.
[[nodiscard]] inline double biorthogonality_defect(const SplittingData& s) {
  double worst = 0.0;
  for (std::size_t n = s.first; n < s.last; ++n) {
    const Matrix g = s.duals[n].transpose() * s.vectors[n];
    worst = std::max(worst, (g - Matrix::Identity(g.rows(), g.cols())).lpNorm<Eigen::Infinity>());
  }
  return worst;
}

/// Flows: max over the interior of the distance between the unit center CLV and +-F/|F|.
[[nodiscard]] inline double center_alignment(const Orbit& orbit, const SplittingData& s) {
  if (s.center.empty()) {
    throw ShadowingError(ErrorCode::kind_mismatch, "splitting has no center direction");
  }
  double worst = 0.0;
  for (std::size_t n = s.first; n < s.last; ++n) {
    const Vector f = orbit.system->evaluate(orbit.states[n], orbit.parameter).normalized();
    const Vector e = s.vectors[n].col(s.center.front());
    worst = std::max(worst, std::min((e - f).norm(), (e + f).norm()));
  }
  return worst;
}

}  // namespace shadow
