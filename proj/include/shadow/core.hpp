/**
 * @file core.hpp
 * @brief Shared types, error reporting and small numerical helpers.
 */
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace shadow {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

enum class ErrorCode {
  kind_mismatch,
  divergence,
  degenerate_basis,
  overflow,
  configuration,
  conditioning,
  center_degeneracy,
  invalid_pair,
  insufficient_orbit,
  buffer,
  index_out_of_range,
  length_mismatch,
  near_tangency,
  io,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kind_mismatch: return "kind-mismatch";
    case ErrorCode::divergence: return "divergence";
    case ErrorCode::degenerate_basis: return "degenerate-basis";
    case ErrorCode::overflow: return "overflow";
    case ErrorCode::configuration: return "configuration";
    case ErrorCode::conditioning: return "conditioning";
    case ErrorCode::center_degeneracy: return "center-degeneracy";
    case ErrorCode::invalid_pair: return "invalid-pair";
    case ErrorCode::insufficient_orbit: return "insufficient-orbit";
    case ErrorCode::buffer: return "buffer";
    case ErrorCode::index_out_of_range: return "index-out-of-range";
    case ErrorCode::length_mismatch: return "length-mismatch";
    case ErrorCode::near_tangency: return "near-tangency";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

class ShadowingError : public std::runtime_error {
 public:
  ShadowingError(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Magnitude above which unsegmented recursions are reported as overflowing.
inline constexpr double kMagnitudeCap = 1e300;
/// Smallest admissible diagonal entry of a QR rescaling factor.
inline constexpr double kRankCollapse = 1e-300;

[[nodiscard]] inline bool all_finite(const Matrix& m) { return m.allFinite(); }

/// Thin QR with a non-negative diagonal in R, so that log R_ii tracks growth.
struct ThinQR {
  Matrix q;
  Matrix r;
};

[[nodiscard]] inline ThinQR qr_positive(const Matrix& a) {
  const Index rows = a.rows();
  const Index cols = a.cols();
  Eigen::HouseholderQR<Matrix> qr(a);
  ThinQR out;
  out.q = qr.householderQ() * Matrix::Identity(rows, cols);
  out.r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
  for (Index i = 0; i < cols; ++i) {
    if (out.r(i, i) < 0.0) {
      out.r.row(i) *= -1.0;
      out.q.col(i) *= -1.0;
    }
  }
  return out;
}

/// Deterministic uniform draw in [0, 1) from 53 random bits.
[[nodiscard]] inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Standard normal via Box-Muller over uniform01, so streams are portable.
[[nodiscard]] inline double standard_normal(std::mt19937_64& rng) {
  constexpr double two_pi = 6.283185307179586476925286766559;
  double u1 = uniform01(rng);
  while (u1 <= 0.0) {
    u1 = uniform01(rng);
  }
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

[[nodiscard]] inline Matrix random_matrix(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) {
      m(i, j) = standard_normal(rng);
    }
  }
  return m;
}

/// Mean with a batch-means standard error for autocorrelated samples.
struct Estimate {
  double value = 0.0;
  double stderr_ = 0.0;
};

inline constexpr std::size_t kDefaultBatches = 20;

[[nodiscard]] inline Estimate batch_mean(std::span<const double> samples,
                                         std::size_t batches = kDefaultBatches) {
  Estimate e;
  const std::size_t n = samples.size();
  if (n == 0) {
    return e;
  }
  e.value = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(n);
  if (batches < 2 || n < 2 * batches) {
    // too short for batching; fall back to the iid formula
    double ss = 0.0;
    for (double s : samples) {
      ss += (s - e.value) * (s - e.value);
    }
    e.stderr_ = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
    return e;
  }
  const std::size_t len = n / batches;
  std::vector<double> means(batches, 0.0);
  for (std::size_t b = 0; b < batches; ++b) {
    double s = 0.0;
    for (std::size_t i = b * len; i < (b + 1) * len; ++i) {
      s += samples[i];
    }
    means[b] = s / static_cast<double>(len);
  }
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(batches);
  double ss = 0.0;
  for (double m : means) {
    ss += (m - grand) * (m - grand);
  }
  e.stderr_ = std::sqrt(ss / static_cast<double>(batches - 1) / static_cast<double>(batches));
  return e;
}

/// Mean and standard error across independent samples (ensemble members).
[[nodiscard]] inline Estimate ensemble_mean(std::span<const double> samples) {
  return batch_mean(samples, 0);
}

/// Trapezoid-weighted time average of samples on a uniform grid, with a
/// batch-means standard error on the per-interval averages.
[[nodiscard]] inline Estimate trapezoid_mean(std::span<const double> samples,
                                             std::size_t batches = kDefaultBatches) {
  if (samples.size() < 2) {
    return batch_mean(samples, batches);
  }
  std::vector<double> mids(samples.size() - 1);
  for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
    mids[i] = 0.5 * (samples[i] + samples[i + 1]);
  }
  return batch_mean(mids, batches);
}

/// max_n |a_n - b_n| / max_n |b_n|, the sup-relative difference of two fields.
template <class Seq>
[[nodiscard]] double sup_relative_difference(const Seq& a, const Seq& b, std::size_t first,
                                             std::size_t last) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t n = first; n < last; ++n) {
    num = std::max(num, (a[n] - b[n]).template lpNorm<Eigen::Infinity>());
    den = std::max(den, b[n].template lpNorm<Eigen::Infinity>());
  }
  return den > 0.0 ? num / den : num;
}

}  // namespace shadow
