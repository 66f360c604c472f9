#include <catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "shadow/adjoint.hpp"
#include "shadow/response.hpp"

using namespace shadow;
using Catch::Matchers::WithinAbs;

namespace {

CovectorField ones(Index m) {
  return CovectorField::from_function([m](const Vector&) { return Vector::Ones(m); });
}

double sup_diff(const std::vector<Vector>& a, const std::vector<Vector>& b, std::size_t first, std::size_t last) {
  double worst = 0.0;
  for (std::size_t n = first; n < last; ++n) worst = std::max(worst, (a[n] - b[n]).lpNorm<Eigen::Infinity>());
  return worst;
}

Orbit lorenz_orbit(double time, std::uint64_t seed) {
  const SystemPtr sys = make_system("lorenz63");
  const double dt = 0.005;
  return generate_orbit(sys, std::nullopt, 28.0, static_cast<std::size_t>(std::llround(time / dt)),
                        default_spinup_steps(*sys, dt), seed, dt);
}

}  // namespace

TEST_CASE("doubling map: nu_n = -1 + 2^-n at every n") {
  const Orbit o = generate_orbit(make_system("doubling"), std::nullopt, 0.0, 100, 1000, 2);
  const ShadowingCovector c = nilsas_solve(o, ones(1), 1, 7);
  for (std::size_t n = 0; n <= o.steps(); ++n) {
    CHECK_THAT(c.nu[n][0], WithinAbs(-1.0 + std::ldexp(1.0, -static_cast<int>(n)), 1e-9));
  }
}

TEST_CASE("doubling map: least squares nu is -1 away from the ends") {
  const Orbit o = generate_orbit(make_system("doubling"), std::nullopt, 0.0, 100, 1000, 2);
  SolveOptions opt;
  opt.formulation = Formulation::segmented_least_squares;
  const ShadowingCovector c = nilsas_solve(o, ones(1), 1, 7, opt);
  for (std::size_t n = 30; n <= 70; ++n) CHECK_THAT(c.nu[n][0], WithinAbs(-1.0, 1e-6));
}

TEST_CASE("contracting map: nu_n = 2 - 2^(n-N) for omega = 1") {
  const Orbit o = generate_orbit(make_system("contracting"), std::nullopt, 0.0, 60, 10, 2);
  const ShadowingCovector c = nilsas_solve(o, ones(1), 0, 7);
  for (std::size_t n = 0; n <= o.steps(); ++n) {
    CHECK_THAT(c.nu[n][0], WithinAbs(2.0 - std::ldexp(2.0, static_cast<int>(n) - 60), 1e-14));
  }
}

TEST_CASE("cat map: adjoint residual and formulations agree") {
  const SystemPtr sys = make_system("cat");
  const Orbit o = generate_orbit(sys, std::nullopt, 0.05, 2000, 1000, 3);
  const CovectorField omega = CovectorField::from_objective(sys->default_objective());
  SolveOptions ls;
  ls.formulation = Formulation::segmented_least_squares;
  const ShadowingCovector a = nilsas_solve(o, omega, 1, 5);
  const ShadowingCovector b = nilsas_solve(o, omega, 1, 5, ls);
  CHECK(adjoint_residual(o, a.nu, omega, Window{0, o.steps() + 1}) <= 1e-10);
  CHECK(sup_diff(a.nu, b.nu, 30, 1970) <= 1e-10);
  CHECK(a.diagnostics.constraint_residual <= 1e-10);
}

TEST_CASE("linear cat map: matches the eigenvector expansion") {
  const SystemPtr sys = make_system("cat");
  const Orbit o = generate_orbit(sys, std::nullopt, 0.0, 1000, 100, 5);
  const CovectorField omega = CovectorField::from_objective(sys->default_objective());
  const ShadowingCovector c = nilsas_solve(o, omega, 1, 5);
  const auto ref = oracle::cat_shadowing_covector(adjoint_forcing(o, omega), 100, 900);
  CHECK(sup_diff(c.nu, ref, 100, 900) <= 1e-12);
  // Oracle output for seed 5 at n = 500.
  CHECK_THAT(c.nu[500][0], WithinAbs(-1.1154872032631142, 1e-10));
  CHECK_THAT(c.nu[500][1], WithinAbs(1.7054451573583436, 1e-10));
}

TEST_CASE("conventional adjoint explodes, shadowing adjoint stays bounded") {
  const Orbit o = generate_orbit(make_system("doubling"), std::nullopt, 0.0, 60, 1000, 1);
  const AdjointBundle conventional = inhomogeneous_adjoint(o, ones(1), Vector::Zero(1));
  CHECK_THAT(conventional.columns[0](0, 0), WithinAbs(std::ldexp(1.0, 60) - 1.0, 1.0));
  const ShadowingCovector c = nilsas_solve(o, ones(1), 1, 7);
  double sup = 0.0;
  for (const Vector& v : c.nu) sup = std::max(sup, v.lpNorm<Eigen::Infinity>());
  CHECK(sup <= 1.0);
  CHECK(std::abs(conventional.columns[0](0, 0)) / sup >= 1e15);
}

TEST_CASE("homogeneous tangent and adjoint pair to a constant") {
  const SystemPtr sys = make_system("cat");
  const Orbit o = generate_orbit(sys, std::nullopt, 0.05, 30, 100, 8);
  const TangentBundle w = homogeneous_tangent(o, random_matrix(2, 2, 1), 7);
  const AdjointBundle e = homogeneous_adjoint(o, random_matrix(2, 2, 2), 7);
  const Matrix ref = e.unscaled(0).transpose() * w.unscaled(0);
  for (std::size_t n = 1; n <= o.steps(); ++n) {
    const Matrix p = e.unscaled(n).transpose() * w.unscaled(n);
    CHECK((p - ref).norm() <= 1e-9 * ref.norm());
  }
}

TEST_CASE("homogeneous adjoint columns are orthonormal and grow backward") {
  const SystemPtr sys = make_system("cat");
  const Orbit o = generate_orbit(sys, std::nullopt, 0.0, 1000, 100, 9);
  const AdjointBundle e = homogeneous_adjoint(o, random_matrix(2, 1, 3), 10);
  CHECK(e.backward);
  CHECK_THAT(e.columns[o.steps()].norm(), WithinAbs(1.0, 1e-12));
  CHECK_THAT(e.columns[o.steps() - 10].norm(), WithinAbs(1.0, 1e-12));
  CHECK_THAT(e.log_growth_per_step()[0], WithinAbs(std::log((3.0 + std::sqrt(5.0)) / 2.0), 1e-2));
  CHECK_THROWS_AS(homogeneous_adjoint(o, random_matrix(2, 3, 3), 10), ShadowingError);
}

TEST_CASE("lorenz63: canonical pair is admissible") {
  const Orbit o = lorenz_orbit(20.0, 3);
  const AdmissiblePair pair = canonical_pair(o, o.system->default_objective());
  CHECK(admissibility_defect(o, pair) <= 1e-12);
  AdmissiblePair bad = pair;
  for (double& p : bad.psi) p = 0.0;
  CHECK(admissibility_defect(o, bad) > 1e-3);
  try {
    (void)nilsas_flow_solve(o, bad, 1, 1103);
    FAIL("expected invalid pair");
  } catch (const ShadowingError& e) {
    CHECK(e.code() == ErrorCode::invalid_pair);
  }
  bad.psi.pop_back();
  CHECK_THROWS_AS(admissibility_defect(o, bad), ShadowingError);
}

TEST_CASE("lorenz63: shadowing covector") {
  const Orbit o = lorenz_orbit(100.0, 4);
  const AdmissiblePair pair = canonical_pair(o, o.system->default_objective());
  const ShadowingCovector c = nilsas_flow_solve(o, pair, 1, 1103);
  CHECK(adjoint_residual(o, c.nu, pair.omega, Window{0, o.steps() + 1}) <= 1e-6);
  const Window w = interior(o);
  double defect = 0.0;
  double sup = 0.0;
  for (std::size_t n = w.first; n < w.last; ++n) {
    defect = std::max(defect, std::abs(c.center_defect[n]));
    sup = std::max(sup, c.nu[n].norm());
  }
  CHECK(defect <= 1e-3);
  CHECK(sup < 10.0);
}

TEST_CASE("lorenz63: homogeneous adjoint conserves eps(F)") {
  const Orbit o = lorenz_orbit(20.0, 5);
  const AdjointBundle e = homogeneous_adjoint(o, random_matrix(3, 1, 4), o.steps());
  const std::vector<Vector> f = drift_samples(o);
  const double end = e.unscaled(o.steps()).col(0).dot(f.back());
  for (std::size_t n = 0; n <= o.steps(); n += 50) {
    const Vector col = e.unscaled(n).col(0);
    CHECK(std::abs(col.dot(f[n]) - end) <= 1e-6 * col.norm() * f[n].norm());
  }
}

TEST_CASE("adjoint argument errors") {
  const Orbit cat = generate_orbit(make_system("cat"), std::nullopt, 0.05, 50, 10, 1);
  const CovectorField omega = CovectorField::zero(2);
  CHECK_THROWS_AS(nilsas_solve(cat, omega, 3, 5), ShadowingError);
  CHECK_THROWS_AS(nilsas_solve(cat, omega, 1, 0), ShadowingError);
  CHECK_THROWS_AS(inhomogeneous_adjoint(cat, omega, Vector::Zero(3)), ShadowingError);
  CHECK_THROWS_AS(adjoint_residual(cat, std::vector<Vector>(4, Vector::Zero(2)), omega, interior(cat)), ShadowingError);
  const CovectorField short_samples = CovectorField::from_samples(std::vector<Vector>(10, Vector::Zero(2)));
  CHECK_THROWS_AS(adjoint_forcing(cat, short_samples), ShadowingError);
}
