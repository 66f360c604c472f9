// Reference solutions for the linear cat map (gamma = 0), built from the
// eigen-decomposition of [[2, 1], [1, 1]] rather than from computed splittings.
#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Vec = Eigen::VectorXd;

struct CatEigen {
  double expanding;  // golden ratio squared
  Vec unstable;      // unit eigenvector
  Vec stable;
};

inline CatEigen cat_eigen() {
  Eigen::Matrix2d a;
  a << 2.0, 1.0, 1.0, 1.0;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(a);
  return {es.eigenvalues()[1], es.eigenvectors().col(1), es.eigenvectors().col(0)};
}

/// Bounded solution of v_{n+1} = A v_n + g_n, with g_n the forcing landing at n + 1.
inline std::vector<Vec> cat_shadowing_vector(const std::vector<Vec>& g, std::size_t first, std::size_t last,
                                            int terms = 60) {
  const CatEigen e = cat_eigen();
  std::vector<Vec> out(g.size() + 1);
  auto landing = [&](long k) { return g[static_cast<std::size_t>(k - 1)]; };
  for (std::size_t n = first; n < last; ++n) {
    Vec v = Vec::Zero(2);
    for (int m = 0; m < terms; ++m) {
      v += std::pow(e.expanding, -m) * e.stable.dot(landing(static_cast<long>(n) - m)) * e.stable;
    }
    for (int m = 1; m <= terms; ++m) {
      v -= std::pow(e.expanding, -m) * e.unstable.dot(landing(static_cast<long>(n) + m)) * e.unstable;
    }
    out[n] = v;
  }
  return out;
}

/// Bounded solution of nu_n = A nu_{n+1} + w_n.
inline std::vector<Vec> cat_shadowing_covector(const std::vector<Vec>& w, std::size_t first, std::size_t last,
                                              int terms = 60) {
  const CatEigen e = cat_eigen();
  std::vector<Vec> out(w.size() + 1);
  for (std::size_t n = first; n < last; ++n) {
    Vec nu = Vec::Zero(2);
    for (int m = 0; m < terms; ++m) {
      nu += std::pow(e.expanding, -m) * e.stable.dot(w[n + static_cast<std::size_t>(m)]) * e.stable;
    }
    for (int m = 1; m <= terms; ++m) {
      nu -= std::pow(e.expanding, -m) * e.unstable.dot(w[n - static_cast<std::size_t>(m)]) * e.unstable;
    }
    out[n] = nu;
  }
  return out;
}

}  // namespace oracle
