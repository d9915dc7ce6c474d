#include <cmath>
#include <sstream>

#include "doctest.h"
#include "geolab/homoclinic.hpp"
#include "json.hpp"

using namespace geolab;

namespace {

const double kRate = kPi * std::sqrt(0.02);  // Lyapunov exponent per unit length, epsilon = 0.01

TorusMetric bump_model(double eps, double beta) {
  return TorusMetric::flat().conformal(build_conformal_bump({eps, beta}), "bump");
}

CohomologyClass dx(double c) { return {{c, 0.0}, {}}; }

ClosedGeodesic axis(const TorusMetric& m) { return find_closed_geodesic(m, PhaseState{{0, 0}, {0.5, 0}}, 2.0, 1e-12); }

struct Lab {
  TorusMetric model;
  ClosedGeodesic gamma;
  PoincareSection section;
  std::array<ManifoldCurve, 4> curves;
  HomoclinicSearch search;
};

Lab run_lab(double beta, double scale = 1.0) {
  Lab lab{bump_model(0.01, beta), {}, {}, {}, {}};
  lab.gamma = axis(lab.model);
  lab.section.control.rtol *= scale;
  lab.section.control.atol *= scale;
  GrowOptions go;
  go.spacing *= scale;
  go.seed_distance *= scale;
  lab.curves = grow_manifolds(lab.model, lab.gamma, lab.section, go);
  HomoclinicOptions ho;
  ho.refine_tol *= scale;
  lab.search = find_homoclinic(lab.curves[1], lab.curves[2], ho);
  return lab;
}

const Lab& integrable() {
  static const Lab lab = run_lab(0.0);
  return lab;
}

const Lab& broken() {
  static const Lab lab = run_lab(0.3);
  return lab;
}

}  // namespace

TEST_CASE("section charts") {
  const auto m = bump_model(0.01, 0.3);
  PoincareSection s;
  const Vec2 p{0.3, 0.2};
  const PhaseState st = s.lift(m, p);
  CHECK(g_speed(m, st) == doctest::Approx(0.5).epsilon(1e-14));
  const Vec2 back = PoincareSection::coordinates(st);
  CHECK(std::abs(back.x - p.x) < 1e-15);
  CHECK(std::abs(back.y - p.y) < 1e-15);
  const Vec2 q = s.from_momentum(m, s.to_momentum(m, p));
  CHECK(std::abs(q.y - p.y) < 1e-14);
}

TEST_CASE("return map on the flat torus") {
  const auto flat = TorusMetric::flat();
  PoincareSection s;
  const ReturnResult r = return_map(flat, s, Vec2{0.1, 0.3}, 1);
  CHECK_FALSE(r.escaped);
  CHECK(r.section_error < 1e-10);
  CHECK(r.point.x == doctest::Approx(0.1 + std::tan(0.3)).epsilon(1e-12));
  CHECK(r.point.y == doctest::Approx(0.3).epsilon(1e-12));
  const ReturnResult b = return_map(flat, s, r.point, -1);
  CHECK(std::abs(b.point.x - 0.1) < 1e-12);
  // Too steep to return within the length budget, and pointing backwards.
  CHECK(return_map(flat, s, Vec2{0.1, 1.5}, 1).escaped);
  CHECK(return_map(flat, s, Vec2{0.1, 2.0}, 1).escaped);
  CHECK_THROWS_AS(return_map(flat, s, Vec2{0.1, 0.3}, 0), std::invalid_argument);
}

TEST_CASE("return map preserves the section area") {
  const auto m = bump_model(0.01, 0.3);
  PoincareSection s;
  for (int i = 0; i < 10; ++i) {
    const Vec2 p{0.1 * i, 0.05 * std::sin(1.0 + i)};
    const Mat2 J = return_jacobian(m, s, p, 1e-6, SectionChart::momentum);
    CHECK(std::abs(J.det() - 1.0) < 1e-4);
  }
}

TEST_CASE("hyperbolize") {
  const auto flat = TorusMetric::flat();
  const ClosedGeodesic line = axis(flat);

  const HyperbolizeReport r = hyperbolize(flat, dx(0.5), line, {0.01, 0.0});
  CHECK(r.pass());
  CHECK(r.monodromy.multipliers[0].real() == doctest::Approx(std::exp(kRate)).epsilon(1e-3));
  CHECK(r.monodromy.multipliers[1].real() == doctest::Approx(std::exp(-kRate)).epsilon(1e-3));
  CHECK(r.alpha_after == doctest::Approx(0.125).epsilon(1e-8));
  CHECK(r.action_after == doctest::Approx(-0.125).epsilon(1e-10));
  CHECK(r.eberlein->agrees_with_floquet);

  // A zero bump leaves gamma parabolic.
  try {
    hyperbolize(flat, dx(0.5), line, {0.0, 0.0});
    FAIL("expected HyperbolizeError");
  } catch (const HyperbolizeError& e) {
    CHECK_FALSE(e.report.hyperbolic_ok);
    CHECK(std::string(e.what()).find("(c)") != std::string::npos);
    CHECK(e.report.geodesic_ok);
  }

  // Non-constant curvature: multipliers inside the curvature bracket.
  const HyperbolizeReport b = hyperbolize(flat, dx(0.5), line, {0.01, 0.3});
  CHECK(b.pass());
  const double lo = std::exp(kPi * std::sqrt(0.02 * 0.7)), hi = std::exp(kPi * std::sqrt(0.02 * 1.3));
  CHECK(b.monodromy.multipliers[0].real() > lo);
  CHECK(b.monodromy.multipliers[0].real() < hi);

  CHECK_THROWS_AS(hyperbolize(flat, dx(0.5), line, {0.01, 0.0, 0.25}), std::invalid_argument);
  ClosedGeodesic slow = line;
  slow.speed = 0.3;
  CHECK_THROWS_AS(hyperbolize(flat, dx(0.5), slow, {0.01, 0.0}), std::invalid_argument);
}

TEST_CASE("manifolds of the integrable bump") {
  const Lab& lab = integrable();
  const ManifoldCurve& wu = lab.curves[2];
  const ManifoldCurve& ws = lab.curves[1];
  CHECK(to_string(wu.branch) == "unstable+");
  CHECK(wu.eigenvalue == doctest::Approx(std::exp(kRate)).epsilon(1e-3));
  CHECK(ws.eigenvalue == doctest::Approx(std::exp(-kRate)).epsilon(1e-3));
  for (const auto& c : lab.curves) {
    CHECK_FALSE(c.truncated);
    CHECK(norm(c.points[0] - c.fixed_point) <= c.seed_distance * (1 + 1e-12));
    const Vec2 first = c.points[1] - c.points[0];
    CHECK(std::abs(cross(first / norm(first), c.eigenvector)) < 1e-4);
    for (std::size_t k = 0; k + 1 < c.points.size(); ++k)
      if (std::abs(c.points[k + 1].x) <= 0.6) CHECK(norm(c.points[k + 1] - c.points[k]) <= c.spacing);
  }
  // Clairaut: asymptotic orbits carry p_x = e^{rho/2} r cos(theta) = r.
  double clairaut = 0.0;
  for (const Vec2& p : wu.points)
    clairaut = std::max(clairaut, std::abs(std::exp(0.5 * lab.model.exponent({0, p.x})) * std::cos(p.y) - 1.0));
  CHECK(clairaut < 1e-8);
  const auto th = theta_at(wu, 0.5);
  REQUIRE(th);
  CHECK(std::abs(std::tan(*th) - std::sqrt(std::exp(0.02) - 1.0)) < 1e-4);
  CHECK(hausdorff_on_overlap(wu, ws, 1.0, 0.4, 0.6) < 1e-6);
  CHECK(hausdorff_on_overlap(lab.curves[3], lab.curves[0], -1.0, -0.6, -0.4) < 1e-6);
}

TEST_CASE("homoclinic search, integrable bump") {
  const Lab& lab = integrable();
  REQUIRE_FALSE(lab.search.candidates.empty());
  CHECK(lab.search.shift == 1);
  for (const auto& c : lab.search.candidates) {
    CHECK(c.splitting_angle < 1e-5);
    CHECK(c.residual < 1e-11);
    CHECK(c.asymptotic_forward);
    CHECK(c.asymptotic_backward);
    CHECK(clairaut_drift(lab.model, c.orbit) < 1e-8);
  }
  // The upper and lower branches of the same side never meet.
  CHECK(find_homoclinic(lab.curves[0], lab.curves[2]).candidates.empty());

  const Lab& other = broken();
  CHECK_THROWS_AS(find_homoclinic(other.curves[1], lab.curves[2]), std::invalid_argument);
  CHECK_THROWS_AS(find_homoclinic(lab.curves[2], lab.curves[3]), std::invalid_argument);
}

TEST_CASE("homoclinic search, broken integrability") {
  const Lab& lab = broken();
  REQUIRE_FALSE(lab.search.candidates.empty());
  const HomoclinicCandidate& c = lab.search.candidates.front();
  CHECK(c.splitting_angle > 1e-8);
  CHECK(c.residual < 1e-11);
  CHECK(c.asymptotic_forward);
  CHECK(c.asymptotic_backward);

  const Lab fine = run_lab(0.3, 0.5);
  REQUIRE_FALSE(fine.search.candidates.empty());
  const HomoclinicCandidate& f = fine.search.candidates.front();
  CHECK(norm(f.section_point - c.section_point) < 1e-5);
  CHECK(std::abs(f.splitting_angle / c.splitting_angle - 1.0) < 0.1);
}

TEST_CASE("homoclinic diagnostics") {
  const Lab& lab = integrable();
  const Subsolution u = solve_subsolution(lab.model, dx(0.5), 0.125, 64, 1e-10, 5000);
  FReport rep;
  const NonnegLagrangian F = build_F(lab.model, dx(0.5), u, 0.125, &lab.gamma, rep);

  const HomoclinicDiagnostics d = homoclinic_diagnostics(lab.search.candidates.front(), F, 0.0, {0.05, 0.02});
  CHECK(std::isfinite(d.action_total));
  CHECK(d.action_total > 0);
  CHECK(d.symmetric_monotone);
  CHECK(d.forward_decay_run >= 3);
  CHECK(d.backward_decay_run >= 3);
  CHECK(d.forward_ratio == doctest::Approx(std::exp(-2 * kRate)).epsilon(0.5));
  CHECK(d.backward_ratio == doctest::Approx(std::exp(-2 * kRate)).epsilon(0.5));
  CHECK(d.tubes_pass);
  CHECK(d.aligned);

  const HomoclinicDiagnostics g = homoclinic_diagnostics(degenerate_candidate(lab.model, lab.gamma, 20.0), F, 0.0,
                                                         {0.05, 0.02});
  CHECK(std::abs(g.action_total) < 1e-12);
  for (double w : g.forward_windows) CHECK(std::abs(w) < 1e-12);

  OrbitOptions oo;
  oo.max_length = 30;
  const HomoclinicCandidate generic = candidate_from_state(lab.model, lab.section.lift(lab.model, {0.3, 0.2}), 0.0, oo);
  CHECK_FALSE(homoclinic_diagnostics(generic, F, 0.0, {0.05, 0.02}).tubes_pass);

  // F paired with the wrong alpha goes negative on the orbit.
  NonnegLagrangian bad = F;
  bad.alpha = 0.1;
  CHECK_THROWS_AS(homoclinic_diagnostics(lab.search.candidates.front(), bad, 0.0, {0.05}), std::runtime_error);
}

TEST_CASE("manifold and orbit export") {
  const Lab& lab = integrable();
  std::stringstream js;
  write_manifolds_json(js, lab.curves, lab.search.candidates);
  const auto j = nlohmann::json::parse(js.str());
  CHECK(j["curves"].size() == 4);
  CHECK(j["candidates"].size() == lab.search.candidates.size());
  std::stringstream cs;
  write_orbit_csv(cs, lab.search.candidates.front().orbit);
  std::string header;
  std::getline(cs, header);
  CHECK(header == "t,x,y,vx,vy");
}
