#include <random>
#include <sstream>

#include "doctest.h"
#include "geolab/loop_action.hpp"

using namespace geolab;

namespace {

TorusMetric bump_model(double eps, double beta) {
  return TorusMetric::flat().conformal(build_conformal_bump({eps, beta}), "bump");
}

CohomologyClass dx(double c) { return {{c, 0.0}, {}}; }

Loop constant_loop() { return Loop(std::vector<Vec2>(16, Vec2{0.3, 0.4}), 1.0, {0, 0}); }

// Straight geometric loop with non-uniform speed s(t) = t + a sin(2 pi t) / (2 pi), tau = 1.
Loop wobbly(std::size_t n, double a) {
  std::vector<Vec2> nodes(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = double(i) / n;
    nodes[i] = {t + a * std::sin(kTwoPi * t) / kTwoPi, 0.0};
  }
  return Loop(std::move(nodes), 1.0, {1, 0});
}

}  // namespace

TEST_CASE("loop_action examples") {
  const auto flat = TorusMetric::flat();
  CHECK(loop_action(flat, dx(0.5), Loop::straight({0, 0}, {1, 0}, 2.0, 32)) == doctest::Approx(-0.125).epsilon(1e-14));
  CHECK(loop_action(flat, dx(0.5), Loop::straight({0, 0}, {-1, 0}, 2.0, 32)) == doctest::Approx(0.375).epsilon(1e-14));
  CHECK(loop_action(flat, {{0.2, -0.7}, TrigPoly2::cos_sin(1, 2, 0.3, 0.1)}, constant_loop()) == 0.0);

  // Exact part integrates to zero around closed loops.
  const CohomologyClass exact{{0.5, 0.0}, TrigPoly2::cos_sin(1, 1, 0.2, -0.4)};
  const Loop l = Loop::straight({0.1, 0.2}, {1, 0}, 2.0, 64);
  CHECK(loop_action(flat, exact, l) == doctest::Approx(-0.125).epsilon(1e-12));

  CHECK_THROWS_AS(Loop(std::vector<Vec2>(8), 1.0, {1, 0}), std::invalid_argument);
}

TEST_CASE("loop_action second-order convergence") {
  const double a = 0.5;
  const double exact = 0.5 * (1 + a * a / 2);  // (1/tau) int (1/2) s'^2, sigma = 0
  double prev = 0.0;
  for (std::size_t n : {32, 64, 128, 256}) {
    const double err = std::abs(loop_action(TorusMetric::flat(), dx(0.0), wobbly(n, a)) - exact);
    if (prev > 0.0) CHECK(prev / err >= 3.5);
    prev = err;
  }
}

TEST_CASE("rotation_vector") {
  const Loop l = Loop::straight({0, 0}, {1, 0}, 2.0, 32);
  CHECK(rotation_vector(l).x == 0.5);
  CHECK(rotation_vector(constant_loop()).x == 0.0);
  const Loop k3 = Loop::straight({0, 0}, {3, 0}, 6.0, 96);
  CHECK(rotation_vector(k3).x == doctest::Approx(rotation_vector(l).x));
}

TEST_CASE("minimize_in_class") {
  const auto flat = TorusMetric::flat();
  Loop init = Loop::straight({0.2, 0.3}, {1, 0}, 1.0, 64);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd(0.0, 0.05);
  for (Vec2& p : init.mutable_nodes()) p += Vec2{nd(rng), nd(rng)};

  const MinimizeResult r = minimize_in_class(flat, dx(0.5), {1, 0}, init);
  CHECK(r.converged);
  CHECK(r.action == doctest::Approx(-0.125).epsilon(1e-6));
  CHECK(r.tau_star == doctest::Approx(2.0).epsilon(1e-6));
  for (std::size_t i = 1; i < r.history.size(); ++i) CHECK(r.history[i] <= r.history[i - 1]);
  // A straight line: constant y.
  for (const Vec2& p : r.loop.nodes()) CHECK(p.y == doctest::Approx(r.loop.nodes()[0].y).epsilon(1e-6));
  CHECK(loop_action(flat, dx(0.5), r.loop) == doctest::Approx(r.action).epsilon(1e-9));

  CHECK(minimize_in_class(flat, dx(0.25), {1, 0}, init).action == doctest::Approx(-0.03125).epsilon(1e-6));
  CHECK_THROWS_AS(minimize_in_class(flat, dx(0.5), {0, 1}, Loop::straight({0, 0}, {0, 1}, 1.0, 32)),
                  std::invalid_argument);

  // Constant-speed reparametrization never increases the action of a minimizer.
  const auto bump = bump_model(0.01, 0.3);
  Loop tilted = Loop::straight({0, 0.1}, {1, 1}, 1.0, 96);
  const MinimizeResult b = minimize_in_class(bump, {{0.4, 0.3}, {}}, {1, 1}, tilted);
  const Loop rep = reparametrize_constant_speed(bump, b.loop);
  CHECK(loop_action(bump, {{0.4, 0.3}, {}}, rep) <= loop_action(bump, {{0.4, 0.3}, {}}, b.loop) + 1e-10);
}

TEST_CASE("alpha on the flat torus") {
  const auto flat = TorusMetric::flat();
  const AlphaResult a = alpha(flat, dx(0.5), 3);
  CHECK(a.alpha == doctest::Approx(0.125).epsilon(1e-9));
  CHECK(a.best_winding == Winding{1, 0});
  CHECK(a.speed == doctest::Approx(0.5));
  const CarneiroReport c = carneiro_check(flat, a, 1e-4);
  CHECK(c.pass);
  CHECK(c.speed_error < 1e-6);

  const AlphaResult b = alpha(flat, {{0.3, 0.4}, {}}, 4);
  CHECK(b.alpha == doctest::Approx(0.125).epsilon(1e-9));
  CHECK(b.best_winding == Winding{3, 4});
  CHECK(b.budget_boundary_active);
  CHECK(carneiro_check(flat, b, 1e-4).pass);

  const AlphaResult z = alpha(flat, dx(0.0), 3);
  CHECK(z.alpha == 0.0);
  CHECK_FALSE(z.minimal_loop);
  CHECK_THROWS_AS(carneiro_check(flat, z, 1e-4), std::invalid_argument);

  for (double s : {0.5, 2.0}) {
    const CohomologyClass sig{{0.3 * s, -0.2 * s}, {}};
    const double as = alpha(flat, sig, 3).alpha;
    const double a1 = alpha(flat, {{0.3, -0.2}, {}}, 3).alpha;
    CHECK(std::abs(as / (s * s * a1) - 1) < 1e-6);
  }

  // Seeded jitter and parallel batches do not change the converged value.
  AlphaOptions o;
  o.jitter = 0.02;
  o.seed = 5;
  o.jobs = 3;
  CHECK(alpha(flat, {{0.3, 0.4}, {}}, 4, o).alpha == doctest::Approx(0.125).epsilon(1e-7));
}

TEST_CASE("alpha on the bump") {
  const auto bump = bump_model(0.01, 0.3);
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 5; ++i) {
    const CohomologyClass s{{u(rng), u(rng)}, {}};
    CHECK(alpha(bump, s, 2).alpha > 0.0);
  }
  const AlphaResult a = alpha(bump, dx(0.5), 2);
  CHECK(a.alpha == doctest::Approx(0.125).epsilon(1e-9));
  CHECK(a.best_winding == Winding{1, 0});
  CHECK(carneiro_check(bump, a, 1e-4).pass);
}

TEST_CASE("is_simple") {
  CHECK(is_simple(Loop::straight({0, 0}, {2, 3}, 1.0, 64)));
  std::vector<Vec2> fig8;
  for (int i = 0; i < 64; ++i) {
    const double t = kTwoPi * i / 64;
    fig8.push_back({0.5 + 0.2 * std::sin(t), 0.5 + 0.2 * std::sin(2 * t)});
  }
  CHECK_FALSE(is_simple(Loop(fig8, 1.0, {0, 0})));
  for (Vec2& p : fig8) p += Vec2{1e-3 * p.y, 0.0};  // crossing off the nodes
  CHECK_FALSE(is_simple(Loop(fig8, 1.0, {0, 0})));
}

TEST_CASE("mane closing") {
  const auto flat = TorusMetric::flat();
  FlowOptions fo;
  fo.sample_dt = 0.01;
  const Trajectory orbit = integrate(flat, {{0, 0}, {0.5, 0}}, 6.5, fo);
  const ManeReport r = mane_closing(flat, dx(0.5), orbit);
  REQUIRE(r.closings.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(r.closings[i].ok);
    CHECK(r.closings[i].tau == doctest::Approx(2.0 * (i + 1)).epsilon(1e-9));
    CHECK(r.closings[i].connector_length == doctest::Approx(0.025).epsilon(1e-6));
    CHECK(r.closings[i].seed_action == doctest::Approx(-0.125).epsilon(1e-9));
    CHECK(r.closings[i].minimized_action == doctest::Approx(-0.125).epsilon(1e-9));
  }

  const auto bump = bump_model(0.01, 0.3);
  const Trajectory b = integrate(bump, {{0, 1e-3}, {0.5, 0}}, 6.5, fo);
  const double a = alpha(bump, dx(0.5), 2).alpha;
  const ManeReport rb = mane_closing(bump, dx(0.5), b);
  REQUIRE(rb.closings.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(rb.closings[i].ok);
    CHECK(rb.closings[i].minimized_action >= -a - 1e-5);
    if (i > 0) CHECK(rb.closings[i].minimized_action <= rb.closings[i - 1].minimized_action + 1e-9);
  }
  CHECK(std::abs(rb.closings.back().minimized_action + a) < 1e-3);

  // A non-recurrent short orbit.
  const Trajectory shortorb = integrate(flat, {{0, 0}, {0.5, 0}}, 1.0, fo);
  CHECK_FALSE(mane_closing(flat, dx(0.5), shortorb).diagnostic.empty());
}

TEST_CASE("loop csv round trip") {
  const Loop l = Loop::straight({0.1, 0.2}, {2, -1}, 3.5, 20);
  std::stringstream ss;
  write_loop_csv(ss, l);
  const Loop back = read_loop_csv(ss);
  CHECK(back.period() == 3.5);
  CHECK(back.winding() == Winding{2, -1});
  CHECK(back.nodes() == l.nodes());
}
