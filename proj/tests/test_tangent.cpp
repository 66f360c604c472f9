#include <catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "shadow/tangent.hpp"

using namespace shadow;
using Catch::Matchers::WithinAbs;

namespace {

double sup_diff(const std::vector<Vector>& a, const std::vector<Vector>& b, const Window& w) {
  double worst = 0.0;
  for (std::size_t n = w.first; n < w.last; ++n) worst = std::max(worst, (a[n] - b[n]).lpNorm<Eigen::Infinity>());
  return worst;
}

}  // namespace

TEST_CASE("doubling map: interior shadowing vector is -1") {
  const SystemPtr sys = make_system("doubling");
  const Orbit o = generate_orbit(sys, std::nullopt, 0.0, 100, 1000, 1);
  for (Formulation f : {Formulation::terminal_constraint, Formulation::segmented_least_squares}) {
    SolveOptions opt;
    opt.formulation = f;
    const ShadowingPair p = nilss_solve(o, 1, 7, opt);
    const Window w = interior(o);
    for (std::size_t n = w.first; n < w.last; ++n) CHECK_THAT(p.v[n][0], WithinAbs(-1.0, 1e-6));
    CHECK_FALSE(p.has_eta());
  }
}

TEST_CASE("contracting map: no homogeneous part, v_n = 2 - 2^(1-n)") {
  const SystemPtr sys = make_system("contracting");
  const Orbit o = generate_orbit(sys, std::nullopt, 0.0, 80, 10, 1);
  const ShadowingPair p = nilss_solve(o, 0, 7);
  for (std::size_t n = 0; n <= o.steps(); ++n) {
    CHECK_THAT(p.v[n][0], WithinAbs(2.0 - std::ldexp(2.0, -static_cast<int>(n)), 1e-14));
  }
}

TEST_CASE("cat map: tangent residual and formulations agree") {
  const SystemPtr sys = make_system("cat");
  const Orbit o = generate_orbit(sys, std::nullopt, 0.05, 2000, 1000, 3);
  SolveOptions ls;
  ls.formulation = Formulation::segmented_least_squares;
  const ShadowingPair a = nilss_solve(o, 1, 5);
  const ShadowingPair b = nilss_solve(o, 1, 5, ls);
  const Window all{0, o.steps() + 1};
  CHECK(tangent_residual(o, a, sys->default_perturbation(), all) <= 1e-10);
  CHECK(sup_diff(a.v, b.v, interior(o)) <= 1e-10);
  CHECK(a.diagnostics.segments == 400);
  CHECK(a.diagnostics.constraint_residual <= 1e-10);
  CHECK(a.diagnostics.sup_norm < 10.0);
}

TEST_CASE("cat map: segment length does not change the solution") {
  const SystemPtr sys = make_system("cat");
  const Orbit o = generate_orbit(sys, std::nullopt, 0.05, 600, 1000, 4);
  const ShadowingPair a = nilss_solve(o, 1, 5);
  const ShadowingPair b = nilss_solve(o, 1, 13);
  CHECK(sup_diff(a.v, b.v, interior(o)) <= 1e-9);
}

TEST_CASE("linear cat map: matches the eigenvector expansion") {
  const SystemPtr sys = make_system("cat");
  const Orbit o = generate_orbit(sys, std::nullopt, 0.0, 1000, 100, 5);
  const ShadowingPair p = nilss_solve(o, 1, 5);
  const std::vector<Vector> g = tangent_forcing(o, sys->default_perturbation());
  const Window w{100, 900};
  const auto ref = oracle::cat_shadowing_vector(g, w.first, w.last);
  CHECK(sup_diff(p.v, ref, w) <= 1e-12);
}

TEST_CASE("linear cat map: frozen shadowing vector") {
  // Oracle output for seed 5, N = 1000, spin-up 100, at n = 500.
  const SystemPtr sys = make_system("cat");
  const Orbit o = generate_orbit(sys, std::nullopt, 0.0, 1000, 100, 5);
  const ShadowingPair p = nilss_solve(o, 1, 5);
  CHECK_THAT(p.v[500][0], WithinAbs(0.26760345297739824, 1e-10));
  CHECK_THAT(p.v[500][1], WithinAbs(0.43960109804093855, 1e-10));
}

TEST_CASE("homogeneous tangent grows at the leading exponent") {
  const SystemPtr sys = make_system("cat");
  const Orbit o = generate_orbit(sys, std::nullopt, 0.0, 2000, 100, 6);
  const TangentBundle b = homogeneous_tangent(o, random_matrix(2, 1, 1), 10);
  CHECK_THAT(b.log_growth_per_step()[0], WithinAbs(std::log((3.0 + std::sqrt(5.0)) / 2.0), 1e-3));
  const Matrix w = b.unscaled(37);
  const Matrix w1 = b.unscaled(38);
  const Vector pushed = sys->jacobian_action(o.states[37], 0.0, w.col(0));
  CHECK((pushed - w1.col(0)).norm() <= 1e-12 * w1.norm());
}

TEST_CASE("inhomogeneous tangent satisfies the recursion from zero") {
  const SystemPtr sys = make_system("cat");
  const Orbit o = generate_orbit(sys, std::nullopt, 0.05, 40, 100, 7);
  const TangentBundle b = inhomogeneous_tangent(o);
  REQUIRE(b.columns.size() == 41);
  CHECK(b.columns[0].norm() == 0.0);
  for (std::size_t n = 0; n < 40; ++n) {
    const Vector next = sys->jacobian_action(o.states[n], 0.05, b.columns[n].col(0)) + perturbation_at(o, n + 1);
    CHECK((next - b.columns[n + 1].col(0)).norm() <= 1e-9 * std::max(1.0, next.norm()));
  }
}

TEST_CASE("lorenz63: flow shadowing pair") {
  const SystemPtr sys = make_system("lorenz63");
  const double dt = 0.005;
  const Orbit o = generate_orbit(sys, std::nullopt, 28.0, 10000, 10000, 2, dt);
  const ShadowingPair p = nilss_flow_solve(o, 1, default_segment_length(*sys, dt));
  REQUIRE(p.has_eta());
  REQUIRE(p.eta.size() == o.states.size());
  CHECK(tangent_residual(o, p, sys->default_perturbation(), Window{0, o.steps() + 1}) <= 1e-9);
  const Window w = interior(o);
  double worst = 0.0;
  double sup = 0.0;
  for (std::size_t n = w.first; n < w.last; ++n) {
    const Vector f = sys->evaluate(o.states[n], 28.0);
    worst = std::max(worst, std::abs(f.dot(p.v[n])) / f.norm());
    sup = std::max(sup, p.v[n].norm());
  }
  CHECK(worst <= 1e-10 * std::max(1.0, sup));
  CHECK(sup < 1e3);
}

TEST_CASE("solver argument errors") {
  const Orbit cat = generate_orbit(make_system("cat"), std::nullopt, 0.05, 50, 10, 1);
  const Orbit lor = generate_orbit(make_system("lorenz63"), std::nullopt, 28.0, 100, 100, 1, 0.01);
  auto code = [](auto&& f) {
    try {
      f();
    } catch (const ShadowingError& e) {
      return e.code();
    }
    return ErrorCode::io;
  };
  CHECK(code([&] { (void)nilss_solve(cat, 3, 5); }) == ErrorCode::configuration);
  CHECK(code([&] { (void)nilss_solve(cat, 1, 0); }) == ErrorCode::configuration);
  CHECK(code([&] { (void)nilss_solve(lor, 1, 5); }) == ErrorCode::kind_mismatch);
  CHECK(code([&] { (void)nilss_flow_solve(lor, 3, 50); }) == ErrorCode::configuration);
  CHECK(code([&] { (void)nilss_flow_solve(cat, 1, 5); }) == ErrorCode::kind_mismatch);
  SolveOptions opt;
  opt.exponents = std::vector<double>{0.96, -0.96};
  CHECK(code([&] { (void)nilss_solve(cat, 2, 5, opt); }) == ErrorCode::configuration);
  ShadowingPair short_pair;
  short_pair.v.resize(3);
  CHECK(code([&] { (void)tangent_residual(cat, short_pair, cat.system->default_perturbation(), interior(cat)); }) ==
        ErrorCode::length_mismatch);
}

TEST_CASE("flow at a fixed point is center-degenerate") {
  const SystemPtr sys = make_system("lorenz63");
  Vector origin = Vector::Zero(3);
  const Orbit o = generate_orbit(sys, origin, 28.0, 100, 0, 1, 0.01);
  try {
    (void)nilss_flow_solve(o, 1, 50);
    FAIL("expected center degeneracy");
  } catch (const ShadowingError& e) {
    CHECK(e.code() == ErrorCode::center_degeneracy);
  }
}
