#include <catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "shadow/adjoint.hpp"
#include "shadow/response.hpp"
#include "shadow/splitting.hpp"

using namespace shadow;
using Catch::Matchers::WithinAbs;

namespace {

const double kCatExponent = std::log((3.0 + std::sqrt(5.0)) / 2.0);

Orbit lorenz_orbit(double time, std::uint64_t seed) {
  const SystemPtr sys = make_system("lorenz63");
  const double dt = 0.005;
  return generate_orbit(sys, std::nullopt, 28.0, static_cast<std::size_t>(std::llround(time / dt)),
                        default_spinup_steps(*sys, dt), seed, dt);
}

}  // namespace

TEST_CASE("lyapunov exponents of the maps") {
  const Orbit d = generate_orbit(make_system("doubling"), std::nullopt, 0.0, 5000, 100, 1);
  CHECK_THAT(lyapunov_exponents(d, 1).value[0], WithinAbs(std::log(2.0), 1e-12));
  const Orbit c = generate_orbit(make_system("cat"), std::nullopt, 0.0, 5000, 100, 1);
  const ExponentEstimate e = lyapunov_exponents(c, 2);
  CHECK_THAT(e.value[0], WithinAbs(kCatExponent, 1e-3));
  CHECK_THAT(e.value[1], WithinAbs(-kCatExponent, 1e-3));
  const ExponentEstimate a = adjoint_exponents(c, 2);
  CHECK_THAT(a.value[0], WithinAbs(kCatExponent, 1e-3));
  CHECK_THAT(a.value[1], WithinAbs(-kCatExponent, 1e-3));
  const Orbit k = generate_orbit(make_system("contracting"), std::nullopt, 0.0, 100, 10, 1);
  const ExponentEstimate s = lyapunov_exponents(k, 1);
  CHECK_THAT(s.value[0], WithinAbs(std::log(0.5), 1e-14));
  CHECK_FALSE(s.warnings.empty());
  CHECK_THROWS_AS(lyapunov_exponents(k, 2), ShadowingError);
}

TEST_CASE("cat map splitting is covariant and biorthogonal") {
  const Orbit o = generate_orbit(make_system("cat"), std::nullopt, 0.05, 2000, 1000, 3);
  const SplittingData s = compute_splitting(o);
  CHECK(s.unstable == std::vector<Index>{0});
  CHECK(s.stable == std::vector<Index>{1});
  CHECK(s.center.empty());
  CHECK(covariance_residual(o, s) <= 1e-10);
  CHECK(adjoint_covariance_residual(o, s) <= 1e-10);
  CHECK(biorthogonality_defect(s) <= 1e-10);
  CHECK(s.hyperbolicity_lambda < 1.0);
  CHECK(s.min_angle > 0.1);
  for (std::size_t n = s.first; n < s.last; n += 97) {
    const Vector w = Vector::Random(2);
    const Vector sum = project(s, n, w, Subspace::unstable) + project(s, n, w, Subspace::stable);
    CHECK((sum - w).norm() <= 1e-12);
    const Vector csum = project_covector(s, n, w, Subspace::unstable) + project_covector(s, n, w, Subspace::stable);
    CHECK((csum - w).norm() <= 1e-12);
  }
  CHECK_THROWS_AS(s.require_interior(0), ShadowingError);
  CHECK_THROWS_AS(project(s, o.steps(), Vector::Ones(2), Subspace::stable), ShadowingError);
}

TEST_CASE("linear cat map: covariant vectors are the eigenvectors") {
  const Orbit o = generate_orbit(make_system("cat"), std::nullopt, 0.0, 500, 100, 4);
  const SplittingData s = compute_splitting(o);
  const oracle::CatEigen e = oracle::cat_eigen();
  for (std::size_t n = s.first; n < s.last; ++n) {
    CHECK(std::abs(std::abs(s.vectors[n].col(0).dot(e.unstable)) - 1.0) <= 1e-12);
    CHECK(std::abs(std::abs(s.vectors[n].col(1).dot(e.stable)) - 1.0) <= 1e-12);
    CHECK_THAT(s.growth[n][0], WithinAbs(e.expanding, 1e-12));
  }
}

TEST_CASE("cat map: expansions reproduce the nonintrusive solutions") {
  const SystemPtr sys = make_system("cat");
  const Orbit o = generate_orbit(sys, std::nullopt, 0.05, 2000, 1000, 3);
  const SplittingData s = compute_splitting(o);
  const CovectorField omega = CovectorField::from_objective(sys->default_objective());
  const Expansion ev = expand_shadowing_vector(o, s, 40, sys->default_perturbation());
  const ShadowingPair v = nilss_solve(o, 1, 5);
  CHECK(sup_relative_difference(ev.field, v.v, ev.first, ev.last) <= 1e-3);
  const Expansion ec = expand_shadowing_covector(o, s, omega, {}, 40);
  const ShadowingCovector nu = nilsas_solve(o, omega, 1, 5);
  CHECK(sup_relative_difference(ec.field, nu.nu, ec.first, ec.last) <= 1e-3);
  CHECK(ec.tail_bound < 1e-3);
  CHECK(std::isnan(ec.field[0][0]));
}

TEST_CASE("expansion windows must fit the orbit") {
  const SystemPtr sys = make_system("cat");
  const Orbit o = generate_orbit(sys, std::nullopt, 0.05, 200, 100, 3);
  const SplittingData s = compute_splitting(o);
  try {
    (void)expand_shadowing_vector(o, s, 80, sys->default_perturbation());
    FAIL("expected insufficient orbit");
  } catch (const ShadowingError& e) {
    CHECK(e.code() == ErrorCode::insufficient_orbit);
  }
}

TEST_CASE("lorenz63 splitting") {
  const Orbit o = lorenz_orbit(200.0, 5);
  const SplittingData s = compute_splitting(o);
  REQUIRE(s.is_flow);
  REQUIRE(s.center.size() == 1);
  CHECK(s.unstable.size() == 1);
  CHECK(s.stable.size() == 1);
  CHECK(center_alignment(o, s) <= 1e-5);
  CHECK(covariance_residual(o, s) <= 1e-8);
  CHECK(biorthogonality_defect(s) <= 1e-8);
  CHECK_THAT(s.exponents[s.unstable[0]], WithinAbs(0.906, 0.05));
  CHECK(std::abs(s.exponents[s.center[0]]) <= kCenterExponentBand);
  const double sum = s.exponents[0] + s.exponents[1] + s.exponents[2];
  CHECK_THAT(sum, WithinAbs(-41.0 / 3.0, 0.05));
  const std::size_t mid = (s.first + s.last) / 2;
  CHECK_THAT(center_dual(s, o, mid).dot(o.system->evaluate(o.states[mid], 28.0)), WithinAbs(1.0, 1e-12));
}

TEST_CASE("lorenz63: covector expansion matches the flow adjoint") {
  const Orbit o = lorenz_orbit(200.0, 6);
  const SplittingData s = compute_splitting(o);
  const AdmissiblePair pair = canonical_pair(o, o.system->default_objective());
  const ShadowingCovector nu = nilsas_flow_solve(o, pair, 1, 1103);
  const Expansion ex = expand_shadowing_covector(o, s, pair.omega, pair.psi, static_cast<std::size_t>(16.0 / 0.005));
  CHECK(sup_relative_difference(ex.field, nu.nu, ex.first, ex.last) <= 1e-3);
}

TEST_CASE("maps have no center direction") {
  const Orbit o = generate_orbit(make_system("cat"), std::nullopt, 0.05, 300, 100, 3);
  const SplittingData s = compute_splitting(o);
  CHECK_THROWS_AS(center_dual(s, o, s.first), ShadowingError);
  CHECK_THROWS_AS(center_alignment(o, s), ShadowingError);
}
