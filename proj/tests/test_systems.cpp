#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "shadow/systems.hpp"

using namespace shadow;
using Catch::Matchers::WithinAbs;

namespace {

Vector random_vector(Index m, std::mt19937_64& rng) {
  Vector v(m);
  for (Index i = 0; i < m; ++i) v[i] = standard_normal(rng);
  return v;
}

// Central difference of the vector field (or map, away from the wrap) along w.
Vector fd_jacobian(const System& sys, const Vector& x, double g, const Vector& w, double h) {
  return (sys.evaluate(x + h * w, g) - sys.evaluate(x - h * w, g)) / (2.0 * h);
}

// Textbook RK4, written out independently of the library stages.
Vector rk4_reference(const System& sys, const Vector& x, double g, double h) {
  const Vector k1 = sys.evaluate(x, g);
  const Vector k2 = sys.evaluate(x + 0.5 * h * k1, g);
  const Vector k3 = sys.evaluate(x + 0.5 * h * k2, g);
  const Vector k4 = sys.evaluate(x + h * k3, g);
  return x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

TEST_CASE("catalog lists the four benchmarks") {
  const auto rows = catalog();
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].name == "doubling");
  CHECK(rows[3].name == "lorenz63");
  CHECK(rows[3].kind == SystemKind::flow);
  CHECK(rows[1].dimension == 2);
  CHECK(rows[2].unstable_dimension == 0);
  CHECK_THROWS_AS(make_system("henon"), ShadowingError);
}

TEST_CASE("jacobians match central differences") {
  std::mt19937_64 rng(3);
  for (const char* name : {"cat", "lorenz63", "contracting"}) {
    const SystemPtr sys = make_system(name);
    const double g = name == std::string("cat") ? 0.05 : sys->default_parameter();
    for (int t = 0; t < 20; ++t) {
      Vector x = sys->random_state(rng);
      if (sys->kind() == SystemKind::map && sys->dimension() == 2) x = 0.1 + 0.1 * x.array();
      const Vector w = random_vector(sys->dimension(), rng);
      const Vector exact = sys->jacobian_action(x, g, w);
      const Vector approx = fd_jacobian(*sys, x, g, w, 1e-6);
      CHECK((exact - approx).norm() <= 1e-6 * std::max(1.0, exact.norm()));
    }
  }
}

TEST_CASE("transpose action pairs with the jacobian") {
  std::mt19937_64 rng(5);
  for (const auto& name : system_names()) {
    const SystemPtr sys = make_system(name);
    for (int t = 0; t < 50; ++t) {
      const Vector x = sys->random_state(rng);
      const Vector w = random_vector(sys->dimension(), rng);
      const Vector e = random_vector(sys->dimension(), rng);
      const double g = sys->default_parameter() + 0.03;
      const double lhs = e.dot(sys->jacobian_action(x, g, w));
      const double rhs = sys->jacobian_transpose_action(x, g, e).dot(w);
      CHECK(std::abs(lhs - rhs) <= 1e-12 * e.norm() * w.norm() * std::max(1.0, std::abs(lhs)));
    }
  }
}

TEST_CASE("rk4 step agrees with an independent integrator") {
  const SystemPtr sys = make_system("lorenz63");
  Vector x(3);
  x << 1.0, 2.0, 20.0;
  for (double h : {0.001, 0.005, 0.01}) {
    const Vector a = flow_step(*sys, x, 28.0, h);
    const Vector b = rk4_reference(*sys, x, 28.0, h);
    CHECK((a - b).norm() <= 1e-13 * b.norm());
  }
}

TEST_CASE("discrete tangent is the derivative of the rk4 step") {
  const SystemPtr sys = make_system("lorenz63");
  std::mt19937_64 rng(9);
  for (int t = 0; t < 10; ++t) {
    const Vector x = sys->random_state(rng);
    const Vector w = random_vector(3, rng);
    const double h = 0.005;
    const double eps = 1e-6;
    const Vector fd = (rk4_reference(*sys, x + eps * w, 28.0, h) - rk4_reference(*sys, x - eps * w, 28.0, h)) / (2 * eps);
    CHECK((pushforward(*sys, x, 28.0, w, h) - fd).norm() <= 1e-7 * fd.norm());
  }
}

TEST_CASE("discrete adjoint pairs exactly with the discrete tangent") {
  const SystemPtr sys = make_system("lorenz63");
  std::mt19937_64 rng(10);
  for (int t = 0; t < 50; ++t) {
    const Vector x = sys->random_state(rng);
    const Vector w = random_vector(3, rng);
    const Vector e = random_vector(3, rng);
    const double lhs = e.dot(pushforward(*sys, x, 28.0, w, 0.005));
    const double rhs = pullback(*sys, x, 28.0, e, 0.005).dot(w);
    CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(lhs)));
  }
}

TEST_CASE("doubling orbit is a true orbit rounded to double") {
  const SystemPtr sys = make_system("doubling");
  const Orbit o = generate_orbit(sys, std::nullopt, 0.0, 2000, 100, 4);
  std::size_t zeros = 0;
  for (std::size_t n = 0; n < o.steps(); ++n) {
    const double next = std::fmod(2.0 * o.states[n][0], 1.0);
    double d = std::abs(o.states[n + 1][0] - next);
    d = std::min(d, 1.0 - d);
    CHECK(d <= 4.0 * std::numeric_limits<double>::epsilon());
    zeros += o.states[n][0] == 0.0;
  }
  CHECK(zeros == 0);
}

TEST_CASE("doubling orbit with a shift") {
  const SystemPtr sys = make_system("doubling");
  const double g = 0.137;
  const Orbit o = generate_orbit(sys, std::nullopt, g, 500, 10, 8);
  for (std::size_t n = 0; n < o.steps(); ++n) {
    double d = std::abs(o.states[n + 1][0] - std::fmod(2.0 * o.states[n][0] + g, 1.0));
    d = std::min(d, 1.0 - d);
    CHECK(d <= 1e-14);
  }
}

TEST_CASE("orbits are deterministic in the seed") {
  const SystemPtr sys = make_system("cat");
  const Orbit a = generate_orbit(sys, std::nullopt, 0.05, 100, 10, 42);
  const Orbit b = generate_orbit(sys, std::nullopt, 0.05, 100, 10, 42);
  const Orbit c = generate_orbit(sys, std::nullopt, 0.05, 100, 10, 43);
  CHECK(a.states.back() == b.states.back());
  CHECK(a.states.back() != c.states.back());
  REQUIRE(a.preimage);
  CHECK((sys->evaluate(*a.preimage, 0.05) - a.states[0]).norm() <= 1e-15);
}

TEST_CASE("orbit generation errors") {
  const SystemPtr lorenz = make_system("lorenz63");
  CHECK_THROWS_AS(generate_orbit(lorenz, std::nullopt, 28.0, 0, 0, 1, 0.01), ShadowingError);
  CHECK_THROWS_AS(generate_orbit(lorenz, std::nullopt, 28.0, 10, 0, 1, 0.0), ShadowingError);
  Vector wrong = Vector::Zero(2);
  CHECK_THROWS_AS(generate_orbit(lorenz, wrong, 28.0, 10, 0, 1, 0.01), ShadowingError);
  Vector far(3);
  far << 90.0, 140.0, 240.0;
  try {
    (void)generate_orbit(lorenz, far, 28.0, 1000, 0, 1, 0.05);
    FAIL("expected divergence");
  } catch (const ShadowingError& e) {
    CHECK(e.code() == ErrorCode::divergence);
  }
}

TEST_CASE("perturbation lookup") {
  const SystemPtr cat = make_system("cat");
  const Orbit o = generate_orbit(cat, std::nullopt, 0.05, 10, 0, 2);
  CHECK_THROWS_AS(perturbation_at(o, 0), ShadowingError);
  CHECK_THROWS_AS(perturbation_at(o, 11), ShadowingError);
  CHECK_THAT(perturbation_at(o, 3)[0], WithinAbs(std::sin(kTwoPi * o.states[2][0]), 1e-15));
  const auto samples = perturbation_samples(o, cat->default_perturbation());
  CHECK(std::isnan(samples[0][0]));
}

TEST_CASE("default segment lengths") {
  CHECK(default_segment_length(*make_system("doubling")) == 7);
  CHECK(default_segment_length(*make_system("cat")) == 5);
  CHECK(default_segment_length(*make_system("contracting")) == 7);
  CHECK(default_segment_length(*make_system("lorenz63"), 0.005) == 1103);
}

TEST_CASE("step matrices match pushforward and pullback") {
  const SystemPtr sys = make_system("lorenz63");
  const Orbit o = generate_orbit(sys, std::nullopt, 28.0, 20, 100, 3, 0.01);
  const auto d = tangent_matrices(o);
  const auto a = adjoint_matrices(o);
  REQUIRE(d.size() == 20);
  for (std::size_t n = 0; n < d.size(); ++n) {
    CHECK((d[n].transpose() - a[n]).norm() <= 1e-12 * d[n].norm());
  }
}
