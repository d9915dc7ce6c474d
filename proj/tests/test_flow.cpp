#include <random>
#include <sstream>

#include "doctest.h"
#include "geolab/flow.hpp"

using namespace geolab;

namespace {

TorusMetric bump_model(double eps, double beta) {
  return TorusMetric::flat().conformal(build_conformal_bump({eps, beta}), "bump");
}

const double kBumpRate = kPi * std::sqrt(0.02);  // sqrt(2 pi^2 eps) for eps = 0.01

}  // namespace

TEST_CASE("integrate closed forms") {
  const auto flat = TorusMetric::flat();
  const Trajectory a = integrate(flat, {{0, 0}, {1, 0}}, 2.0);
  CHECK(a.back().state.position.x == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(std::abs(a.back().state.position.y) < 1e-14);
  CHECK(a.back().state.velocity.x == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(a.energy_drift < 1e-14);

  const Trajectory b = integrate(flat, {{0.3, 0.8}, {0.7, -0.2}}, 1.0);
  const Mat2 m = b.back().transfer;
  CHECK(m.a11 == doctest::Approx(1.0));
  CHECK(m.a12 == doctest::Approx(1.0));
  CHECK(std::abs(m.a21) < 1e-14);
  CHECK(m.a22 == doctest::Approx(1.0));

  const Trajectory c = integrate(bump_model(0.01, 0.0), {{0, 0}, {1, 0}}, 1.0);
  CHECK(c.back().state.position.x == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(c.back().state.position.y == 0.0);
  CHECK(c.back().state.velocity.y == 0.0);

  CHECK_THROWS_AS(integrate(flat, {{0, 0}, {1, 0}}, 0.0), std::invalid_argument);
  StepControl hard;
  hard.rtol = hard.atol = 1e-30;
  hard.min_step = 1e-3;
  CHECK_THROWS_AS(integrate(bump_model(0.01, 0.3), {{0, 0.2}, {1, 0.3}}, 1.0, {hard}), IntegrationError);
}

TEST_CASE("flat oracle: positions are affine in t") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  FlowOptions o;
  o.sample_dt = 0.5;
  for (int i = 0; i < 10; ++i) {
    const PhaseState s{{u(rng), u(rng)}, {u(rng), u(rng)}};
    const Trajectory tr = integrate(TorusMetric::flat(), s, 10.0, o);
    for (const auto& q : tr.samples) {
      const Vec2 e = s.position + q.t * s.velocity - q.state.position;
      CHECK(norm(e) < 1e-10);
    }
  }
}

TEST_CASE("energy conservation over T = 100 on the bump") {
  const auto m = bump_model(0.01, 0.3);
  const Trajectory tr = integrate(m, {{0.1, 0.05}, {0.9, 0.2}}, 100.0);
  CHECK(tr.energy_drift < 1e-8);
  CHECK(tr.energy_drift <= tr.drift_bound);
  for (const auto& s : tr.samples) CHECK(std::abs(s.transfer.det() - 1.0) < 1e-8);
}

TEST_CASE("transfer composition and reversibility") {
  const auto m = bump_model(0.01, 0.3);
  const PhaseState s{{0.2, 0.1}, {0.6, 0.3}};
  FlowOptions o;
  o.sample_times = {3.0, 7.0};
  const Trajectory full = integrate(m, s, 7.0, o);
  const Mat2 m3 = full.samples[1].transfer;
  const Trajectory tail = integrate(m, full.samples[1].state, 4.0);
  const Mat2 composed = tail.back().transfer * m3;
  const Mat2 direct = full.back().transfer;
  CHECK(std::abs(composed.a11 - direct.a11) < 1e-6);
  CHECK(std::abs(composed.a12 - direct.a12) < 1e-6);
  CHECK(std::abs(composed.a21 - direct.a21) < 1e-6);
  CHECK(std::abs(composed.a22 - direct.a22) < 1e-6);

  const PhaseState fwd = flow_to(m, s, 10.0);
  const PhaseState back = flow_to(m, fwd, -10.0);
  CHECK(norm(back.position - s.position) < 1e-8);
  CHECK(norm(back.velocity - s.velocity) < 1e-8);
}

TEST_CASE("find_closed_geodesic") {
  const auto flat = TorusMetric::flat();
  const ClosedGeodesic a = find_closed_geodesic(flat, Loop::straight({0, 0}, {1, 0}, 2.0, 32), 1e-10);
  CHECK(a.period == doctest::Approx(2.0));
  CHECK(a.residual < 1e-10);
  CHECK(a.winding == Winding{1, 0});
  CHECK(a.speed == doctest::Approx(0.5));

  const auto bump = bump_model(0.01, 0.3);
  const ClosedGeodesic b = find_closed_geodesic(bump, Loop::straight({0, 0}, {1, 0}, 1.0, 32), 1e-10);
  CHECK(b.period == doctest::Approx(1.0));
  CHECK(b.residual < 1e-10);
  CHECK(std::abs(b.floquet[0] * b.floquet[1] - 1.0) < 1e-6);

  const double phi = 0.5 * (1 + std::sqrt(5.0));
  CHECK_THROWS_AS(find_closed_geodesic(flat, PhaseState{{0, 0}, {1, phi}}, 1.0, 1e-10), ShootingError);

  // Newton from a perturbed seed recovers the exact geodesic y = 0.
  const ClosedGeodesic c = find_closed_geodesic(bump, PhaseState{{0, 0.002}, {1, 0.003}}, 1.01, 1e-10);
  CHECK(c.residual < 1e-10);
  CHECK(std::abs(c.initial.position.y) < 1e-8);
  CHECK(c.length() == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("monodromy") {
  const auto flat = TorusMetric::flat();
  const ClosedGeodesic a = find_closed_geodesic(flat, PhaseState{{0, 0}, {1, 0}}, 1.0, 1e-10);
  const MonodromyReport ra = monodromy(flat, a);
  CHECK(ra.multipliers[0].real() == doctest::Approx(1.0));
  CHECK(ra.multipliers[1].real() == doctest::Approx(1.0));
  CHECK(ra.verdict == FloquetVerdict::parabolic);

  const auto bump = bump_model(0.01, 0.0);
  for (double speed : {1.0, 0.5}) {
    const ClosedGeodesic g = find_closed_geodesic(bump, PhaseState{{0, 0}, {speed, 0}}, 1.0 / speed, 1e-10);
    const MonodromyReport r = monodromy(bump, g);
    CHECK(r.verdict == FloquetVerdict::hyperbolic);
    CHECK(std::abs(r.multipliers[0].real() / 1.55938 - 1) < 1e-3);
    CHECK(std::abs(r.multipliers[1].real() / 0.641280 - 1) < 1e-3);
    CHECK(std::abs(r.multipliers[0].real() - std::exp(kBumpRate)) < 1e-9);
    CHECK(std::abs((r.multipliers[0] * r.multipliers[1]).real() - 1) < 1e-6);
  }
  CHECK(to_string(FloquetVerdict::elliptic) == "elliptic");
}

TEST_CASE("jacobi_solve") {
  const auto flat = TorusMetric::flat();
  const JacobiRecord a = jacobi_solve(flat, {{0, 0}, {1, 0}}, 2.0, 1.0);
  CHECK(a.initial_derivative == doctest::Approx(-0.5));
  CHECK(a.boundary_error < 1e-8);
  for (const auto& s : a.samples) CHECK(s.value == doctest::Approx(1 - s.s / 2));

  const JacobiRecord b = jacobi_solve(bump_model(0.01, 0.0), {{0, 0}, {0.5, 0}}, 1.0, 1.0);
  CHECK(b.initial_derivative == doctest::Approx(-1.064947).epsilon(1e-6));
  CHECK(b.initial_derivative == doctest::Approx(-kBumpRate / std::tanh(kBumpRate)).epsilon(1e-10));
  CHECK(b.boundary_error < 1e-8);

  for (double tau : {1e-1, 1e-2, 1e-3}) {
    CHECK(jacobi_solve(flat, {{0, 0}, {1, 0}}, tau, 1.0).initial_derivative == doctest::Approx(-1 / tau));
  }

  // Positive curvature: the round-sphere-like bump pi^2 K has conjugate point at 1/sqrt(K).
  const TorusMetric pos{2, build_conformal_bump({0.05, 0.0}) * -1.0, "dimple"};
  try {
    jacobi_solve(pos, {{0, 0}, {1, 0}}, 10.0, 1.0);
    FAIL("expected a conjugate point");
  } catch (const ConjugatePointError& e) {
    const double k = std::sqrt(2 * kPi * kPi * 0.05);
    CHECK(e.conjugate_time == doctest::Approx(kPi / k).epsilon(0.1));
  }
}

TEST_CASE("trajectory CSV") {
  std::ostringstream os;
  write_trajectory_csv(os, integrate(TorusMetric::flat(), {{0, 0}, {1, 0}}, 1.0, {{}, 0.5}));
  const std::string s = os.str();
  CHECK(s.rfind("t,x,y,vx,vy,speed,m11,m12,m21,m22\n", 0) == 0);
  CHECK(std::count(s.begin(), s.end(), '\n') == 4);
}
