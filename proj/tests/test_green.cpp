#include <random>
#include <sstream>

#include "doctest.h"
#include "geolab/green.hpp"

using namespace geolab;

namespace {

const double kRate = kPi * std::sqrt(0.02);

TorusMetric bump_model(double eps, double beta) {
  return TorusMetric::flat().conformal(build_conformal_bump({eps, beta}), "bump");
}

ClosedGeodesic horizontal(const TorusMetric& m, double speed = 1.0) {
  return find_closed_geodesic(m, PhaseState{{0, 0}, {speed, 0}}, 1.0 / speed, 1e-10);
}

}  // namespace

TEST_CASE("green_endomorphism closed forms") {
  const auto flat = TorusMetric::flat();
  const ClosedGeodesic g = horizontal(flat);
  CHECK(green_endomorphism(flat, g, 2.0) == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(green_endomorphism(flat, g, -2.0) == doctest::Approx(0.5).epsilon(1e-12));
  for (double t : {1.0, -1.0, 5.0, -5.0}) CHECK(std::abs(green_endomorphism(flat, g, t) + 1 / t) < 1e-10);
  CHECK_THROWS_AS(green_endomorphism(flat, g, 1e-4), std::invalid_argument);

  const auto bump = bump_model(0.01, 0.0);
  const ClosedGeodesic b = horizontal(bump, 0.5);
  // Unit-speed convention: independent of the stored speed.
  CHECK(green_endomorphism(bump, b, 5.0) == doctest::Approx(-kRate / std::tanh(5 * kRate)).epsilon(1e-10));
  CHECK(green_endomorphism(bump, b, 5.0) == doctest::Approx(-0.454864).epsilon(1e-6));

  const TorusMetric dimple{2, build_conformal_bump({0.05, 0.0}) * -1.0, "dimple"};
  CHECK_THROWS_AS(green_endomorphism(dimple, horizontal(dimple), 10.0), ConjugatePointError);
}

TEST_CASE("green_limits and eberlein") {
  const auto flat = TorusMetric::flat();
  const GreenRecord f = green_limits(flat, horizontal(flat), 64.0, 1e-9);
  CHECK(f.converged);
  CHECK(std::abs(f.A_plus) < 1e-9);
  CHECK(std::abs(f.A_minus) < 1e-9);
  CHECK(std::abs(f.eberlein_gap) < 1e-9);
  CHECK(monotonicity_violation(f) <= 1e-8);
  const EberleinResult ef = eberlein_test(f, 1e-3);
  CHECK_FALSE(ef.hyperbolic);
  CHECK(ef.agrees_with_floquet);

  for (double beta : {0.0, 0.3}) {
    const auto bump = bump_model(0.01, beta);
    const GreenRecord r = green_limits(bump, horizontal(bump, 0.5), 64.0, 1e-9);
    CHECK(r.converged);
    CHECK(monotonicity_violation(r) <= 1e-8);
    CHECK(r.bracket_lo <= r.A_plus);
    CHECK(r.A_minus <= r.bracket_hi);
    const EberleinResult e = eberlein_test(r, 1e-3);
    CHECK(e.hyperbolic);
    CHECK(e.agrees_with_floquet);
    if (beta == 0.0) {
      CHECK(r.A_plus == doctest::Approx(-0.444288).epsilon(1e-5));
      CHECK(r.A_minus == doctest::Approx(0.444288).epsilon(1e-5));
      CHECK(r.eberlein_gap == doctest::Approx(0.888577).epsilon(1e-5));
    }
  }

  GreenRecord unconverged = f;
  unconverged.converged = false;
  CHECK_THROWS_AS(eberlein_test(unconverged, 1e-3), std::invalid_argument);

  std::ostringstream os;
  write_green_json(os, f);
  CHECK(os.str().find("\"eberlein_gap\"") != std::string::npos);
}

TEST_CASE("index form examples") {
  const auto flat = TorusMetric::flat();
  const PhaseState s{{0, 0}, {1, 0}};
  const IndexFormReport a = index_form(flat, s, OrthogonalField::jacobi_field(0.0, 1.0), 1.0);
  CHECK(a.value == doctest::Approx(1.0).epsilon(1e-12));
  REQUIRE(a.boundary_term);
  CHECK(*a.boundary_term == doctest::Approx(1.0).epsilon(1e-12));

  const auto sine = OrthogonalField::explicit_field(
      "sin(pi s)", [](double t) { return std::sin(kPi * t); }, [](double t) { return kPi * std::cos(kPi * t); });
  CHECK(index_form(flat, s, sine, 1.0).value == doctest::Approx(kPi * kPi / 2).epsilon(1e-12));
  CHECK(index_form(flat, s, sine, 1.0).value == doctest::Approx(4.934802).epsilon(1e-6));

  OrthogonalField sum = sine;
  sum.jacobi = Vec2{0.0, 1.0};
  CHECK(index_form(flat, s, sum, 1.0).value == doctest::Approx(1 + kPi * kPi / 2).epsilon(1e-12));

  OrthogonalField skew = sine;
  skew.tangential = [](double t) { return 0.1 * t; };
  CHECK_THROWS_AS(index_form(flat, s, skew, 1.0), std::invalid_argument);
}

TEST_CASE("index form properties on random fields") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1, 1);
  for (const auto& m : {TorusMetric::flat(), bump_model(0.01, 0.3)}) {
    for (int i = 0; i < 20; ++i) {
      const PhaseState s{{0, 0}, {1, 0}};
      const double tau = 0.5 + 2.5 * (u(rng) + 1);
      // (i) for Jacobi fields.
      const IndexFormReport j = index_form(m, s, OrthogonalField::jacobi_field(u(rng), u(rng)), tau);
      CHECK(std::abs(j.value - *j.boundary_term) < 1e-6);

      // (ii) same endpoints: J + eta with eta(0) = eta(tau) = 0.
      const double j0 = u(rng), j1 = u(rng);
      FlowOptions o;
      o.sample_times = {tau};
      const Mat2 mt = integrate(m, s, tau, o).back().transfer;
      const double dj0 = (j1 - mt.a11 * j0) / mt.a12;
      const OrthogonalField jac = OrthogonalField::jacobi_field(j0, dj0);
      const double c1 = u(rng), c2 = u(rng), c3 = u(rng);
      OrthogonalField y = OrthogonalField::explicit_field(
          "perturbation",
          [=](double t) {
            const double w = kPi * t / tau;
            return c1 * std::sin(w) + c2 * std::sin(2 * w) + c3 * t * std::sin(3 * w);
          },
          [=](double t) {
            const double w = kPi * t / tau, dw = kPi / tau;
            return c1 * dw * std::cos(w) + 2 * c2 * dw * std::cos(2 * w) + c3 * std::sin(3 * w) +
                   3 * c3 * t * dw * std::cos(3 * w);
          });
      y.jacobi = Vec2{j0, dj0};
      CHECK(index_form(m, s, jac, tau).value <= index_form(m, s, y, tau).value + 1e-8);
    }
  }
}

TEST_CASE("conformal comparison") {
  const auto flat = TorusMetric::flat();
  const auto bump = bump_model(0.01, 0.0);
  const ClosedGeodesic g = horizontal(flat, 0.5);
  for (double tau : {1.0, 2.0, 5.0}) {
    const ComparisonReport r = conformal_comparison(flat, bump, g, tau, 1.0);
    CHECK(r.delta == doctest::Approx(0.197392).epsilon(1e-5));
    CHECK(r.A_tau == doctest::Approx(-1 / tau).epsilon(1e-10));
    CHECK(r.A_tilde_tau == doctest::Approx(-kRate / std::tanh(kRate * tau)).epsilon(1e-10));
    CHECK(r.jacobi_l2 == doctest::Approx(1 - 1 / tau + 1 / (3 * tau * tau)).epsilon(1e-12));
    CHECK(r.margin > 0);
    CHECK(r.pass);
    CHECK(r.eps_prime == doctest::Approx(kRate).epsilon(1e-6));
    CHECK(r.eps_prime > 0.4);
    CHECK(r.eps_prime >= r.eps_prime_bound);
    CHECK(r.minus_margin == doctest::Approx(kRate).epsilon(1e-6));
  }
  // The untilded form fails at tau = 1.
  CHECK(conformal_comparison(flat, bump, g, 1.0, 1.0).margin_untilded < 0);
  CHECK(conformal_comparison(flat, bump, g, 5.0, 1.0).jacobi_l2 == doctest::Approx(0.813333).epsilon(1e-6));

  CHECK_THROWS_AS(conformal_comparison(flat, flat, g, 2.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(conformal_comparison(flat, bump, g, 0.5, 1.0), std::invalid_argument);
}
