#include "geolab/homoclinic.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <ostream>

#include "geolab/geodesic_rhs.hpp"
#include "json.hpp"

namespace geolab {

namespace {

using Dopri4 = DormandPrince<4, detail::GeodesicRhs>;

PhaseState unpack(const OdeState<4>& y) { return {{y[0], y[1]}, {y[2], y[3]}}; }

double theta_of(const PhaseState& s) { return std::atan2(s.velocity.y, s.velocity.x); }

// Samples a closed geodesic as lifted nodes over one period.
std::vector<Vec2> geodesic_nodes(const TorusMetric& model, const ClosedGeodesic& gamma, int n,
                                 const StepControl& control) {
  FlowOptions fo;
  fo.control = control;
  for (int i = 0; i < n; ++i) fo.sample_times.push_back(gamma.period * i / n);
  fo.sample_times.push_back(gamma.period);
  const Trajectory traj = integrate(model, gamma.initial, gamma.period, fo);
  std::vector<Vec2> nodes;
  for (int i = 0; i < n; ++i) nodes.push_back(traj.samples[std::size_t(i)].state.position);
  return nodes;
}

double relative_gap(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

}  // namespace

// ---------------------------------------------------------------------------

std::string HyperbolizeReport::failures() const {
  std::string out;
  auto add = [&out](const std::string& s) { out += (out.empty() ? "" : "; ") + s; };
  if (!geodesic_ok) add("(a) gamma is not a geodesic of the new metric, residual " + std::to_string(geodesic_residual));
  if (!minimal_ok)
    add("(b) minimality changed: alpha " + std::to_string(alpha_before) + " -> " + std::to_string(alpha_after) +
        ", action " + std::to_string(action_before) + " -> " + std::to_string(action_after));
  if (!hyperbolic_ok) add("(c) monodromy verdict " + to_string(monodromy.verdict));
  if (!eberlein_ok)
    add(eberlein ? "(d) Green bundles not transverse, gap " + std::to_string(eberlein->gap)
                 : "(d) Green limits did not converge: " + green.diagnostic);
  return out;
}

HyperbolizeReport hyperbolize(const TorusMetric& g0, const CohomologyClass& sigma, const ClosedGeodesic& minimal,
                              const BumpSpec& spec, const HyperbolizeOptions& opts) {
  HyperbolizeReport r;
  const AlphaResult a0 = alpha(g0, sigma, opts.alpha_budget, opts.alpha);
  r.alpha_before = a0.alpha;
  if (!(a0.alpha > 0) || std::abs(minimal.speed - std::sqrt(2.0 * a0.alpha)) > opts.carneiro_tol) {
    throw std::invalid_argument("hyperbolize: geodesic speed " + std::to_string(minimal.speed) +
                                " violates the Carneiro law for alpha " + std::to_string(a0.alpha));
  }

  const TrigPoly2 rho = bump_exponent(spec);
  const std::vector<Vec2> nodes = geodesic_nodes(g0, minimal, opts.action_nodes, opts.control);
  r.hypotheses = verify_bump_hypotheses(g0, rho, CurveSample{nodes, minimal.winding}, 256);
  if (r.hypotheses.max_abs_rho_on_curve > 1e-10 || r.hypotheses.max_grad_on_curve > 1e-8) {
    throw std::invalid_argument("hyperbolize: bump does not vanish to second order on gamma (" +
                                r.hypotheses.violated + ")");
  }
  r.model = g0.conformal(rho, g0.label + "+bump");

  // (a)
  r.geodesic_residual = closure_residual(r.model, minimal.initial, minimal.period, nullptr, opts.control);
  r.geodesic_ok = r.geodesic_residual < opts.geodesic_tol;

  // (b)
  r.alpha_after = alpha(r.model, sigma, opts.alpha_budget, opts.alpha).alpha;
  const Loop loop(nodes, minimal.period, minimal.winding);
  r.action_before = loop_action(g0, sigma, loop);
  r.action_after = loop_action(r.model, sigma, loop);
  r.minimal_ok = relative_gap(r.alpha_before, r.alpha_after) <= opts.action_tol &&
                 relative_gap(r.action_before, r.action_after) <= opts.action_tol;

  // (c)
  r.gamma = minimal;
  r.monodromy = monodromy(r.model, r.gamma, opts.floquet_margin, opts.control);
  r.gamma.monodromy = r.monodromy.matrix;
  r.gamma.floquet = r.monodromy.multipliers;
  r.gamma.residual = r.geodesic_residual;
  r.hyperbolic_ok = r.monodromy.verdict == FloquetVerdict::hyperbolic;

  // (d)
  try {
    GreenOptions go;
    go.control = opts.control;
    r.green = green_limits(r.model, r.gamma, opts.green_t_max, opts.green_tol, go);
    if (r.green.converged) {
      r.eberlein = eberlein_test(r.green, opts.eberlein_margin);
      r.eberlein_ok = r.eberlein->hyperbolic;
    }
  } catch (const ConjugatePointError& e) {
    r.green.diagnostic = e.what();
  }

  if (!r.pass()) throw HyperbolizeError(r);
  return r;
}

// ---------------------------------------------------------------------------

PhaseState PoincareSection::lift(const TorusMetric& model, const Vec2& p, double x) const {
  const Vec2 pos{x, p.x};
  const double v = speed * std::exp(-0.5 * model.exponent(pos));
  return {pos, {v * std::cos(p.y), v * std::sin(p.y)}};
}

Vec2 PoincareSection::coordinates(const PhaseState& s) { return {s.position.y, theta_of(s)}; }

Vec2 PoincareSection::to_momentum(const TorusMetric& model, const Vec2& p) const {
  return {p.x, speed * std::exp(0.5 * model.exponent({0.0, p.x})) * std::sin(p.y)};
}

Vec2 PoincareSection::from_momentum(const TorusMetric& model, const Vec2& q) const {
  return {q.x, std::asin(q.y / (speed * std::exp(0.5 * model.exponent({0.0, q.x}))))};
}

ReturnResult return_map(const TorusMetric& model, const PoincareSection& section, const PhaseState& start,
                        int direction) {
  if (direction != 1 && direction != -1) throw std::invalid_argument("return_map: direction must be +1 or -1");
  const double x0 = std::round(start.position.x);
  const double target = x0 + direction;
  const Dopri4 dp(detail::GeodesicRhs{&model.conformal_exponent}, section.control);
  OdeOptions<4> oo;
  oo.event = [target](double, const OdeState<4>& y) { return y[0] - target; };
  oo.event_direction = direction;
  const double T = direction * section.max_return_length / section.speed;
  const OdeRun<4> run = dp.run(0.0, detail::pack(start.position, start.velocity), T, oo);

  ReturnResult r;
  r.state = unpack(run.y);
  r.time = run.t;
  r.section_error = std::abs(run.y[0] - target);
  r.escaped = !run.event_hit || !(run.y[2] > 0.0);
  r.state.position.x -= target;
  r.point = PoincareSection::coordinates(r.state);
  return r;
}

ReturnResult return_map(const TorusMetric& model, const PoincareSection& section, const Vec2& p, int direction) {
  return return_map(model, section, section.lift(model, p), direction);
}

Mat2 return_jacobian(const TorusMetric& model, const PoincareSection& section, const Vec2& p, double h,
                     SectionChart chart) {
  const bool mom = chart == SectionChart::momentum;
  const Vec2 q = mom ? section.to_momentum(model, p) : p;
  Vec2 col[2];
  for (int i = 0; i < 2; ++i) {
    Vec2 e;
    e[i] = h;
    Vec2 img[2];
    for (int s = 0; s < 2; ++s) {
      const Vec2 qs = s == 0 ? q + e : q - e;
      const ReturnResult r = return_map(model, section, mom ? section.from_momentum(model, qs) : qs, 1);
      if (r.escaped) throw std::runtime_error("return_jacobian: return map escaped");
      img[s] = mom ? section.to_momentum(model, r.point) : r.point;
    }
    col[i] = (img[0] - img[1]) / (2 * h);
  }
  return {col[0].x, col[1].x, col[0].y, col[1].y};
}

Vec2 section_fixed_point(const TorusMetric& model, const PoincareSection& section, const ClosedGeodesic& gamma) {
  PhaseState s = with_speed(model, gamma.initial, section.speed);
  const double x0 = s.position.x;
  if (std::abs(x0 - std::round(x0)) < 1e-12) {
    s.position.x = 0.0;
    return PoincareSection::coordinates(s);
  }
  // Flow to the next integer x and reduce.
  const Dopri4 dp(detail::GeodesicRhs{&model.conformal_exponent}, section.control);
  const double target = std::ceil(x0);
  OdeOptions<4> oo;
  oo.event = [target](double, const OdeState<4>& y) { return y[0] - target; };
  oo.event_direction = 1;
  const OdeRun<4> run = dp.run(0.0, detail::pack(s.position, s.velocity), section.max_return_length / section.speed, oo);
  if (!run.event_hit) throw std::invalid_argument("section_fixed_point: gamma does not cross the section");
  return PoincareSection::coordinates(unpack(run.y));
}

// ---------------------------------------------------------------------------

std::string to_string(Branch b) {
  switch (b) {
    case Branch::stable_plus: return "stable+";
    case Branch::stable_minus: return "stable-";
    case Branch::unstable_plus: return "unstable+";
    case Branch::unstable_minus: return "unstable-";
  }
  return "?";
}

Vec2 ManifoldCurve::seed(double f) const {
  return fixed_point + (side() * seed_distance * std::pow(mu(), f)) * eigenvector;
}

PhaseState ManifoldCurve::evaluate_state(int n, double f) const {
  PhaseState s = section.lift(model, seed(f));
  const int dir = unstable() ? 1 : -1;
  for (int k = 0; k < n; ++k) {
    const ReturnResult r = return_map(model, section, s, dir);
    if (r.escaped) throw std::runtime_error("ManifoldCurve: return map escaped at iterate " + std::to_string(k));
    s = r.state;
  }
  return s;
}

LinearizedReturn linearize_return(const TorusMetric& model, const PoincareSection& section, const Vec2& fixed,
                                  double h) {
  LinearizedReturn lin;
  lin.jacobian = return_jacobian(model, section, fixed, h);
  const auto ev = eigenvalues(lin.jacobian);
  if (std::abs(ev[0].imag()) > 0 || std::abs(ev[1].imag()) > 0 || !(ev[0].real() > 1.0) || !(ev[1].real() > 0.0) ||
      !(ev[1].real() < 1.0)) {
    throw std::invalid_argument("linearize_return: fixed point is not hyperbolic with positive multipliers");
  }
  lin.lambda_u = ev[0].real();
  lin.lambda_s = ev[1].real();
  const Mat2& m = lin.jacobian;
  auto eigvec = [&m](double l) {
    Vec2 a{m.a12, l - m.a11}, b{l - m.a22, m.a21};
    Vec2 v = norm(a) >= norm(b) ? a : b;
    v = v / norm(v);
    // Section coordinates are (y, theta): orient toward increasing y.
    if (v.x < 0 || (v.x == 0 && v.y < 0)) v = -v;
    return v;
  };
  lin.e_u = eigvec(lin.lambda_u);
  lin.e_s = eigvec(lin.lambda_s);
  return lin;
}

ManifoldCurve grow_branch(const TorusMetric& model, const PoincareSection& section, const Vec2& fixed,
                          const LinearizedReturn& lin, Branch branch, const GrowOptions& opts) {
  ManifoldCurve c;
  c.branch = branch;
  c.model = model;
  c.section = section;
  c.fixed_point = fixed;
  c.eigenvalue = c.unstable() ? lin.lambda_u : lin.lambda_s;
  c.eigenvector = c.unstable() ? lin.e_u : lin.e_s;
  c.seed_distance = opts.seed_distance;
  c.spacing = opts.spacing;
  c.arclength_budget = opts.arclength_budget;
  const int dir = c.unstable() ? 1 : -1;
  const int m = std::max(1, opts.per_domain);
  auto inside = [&](const Vec2& p) { return std::abs(p.x - fixed.x) <= opts.y_extent; };

  std::vector<std::pair<double, Vec2>> pts;
  std::vector<PhaseState> states(static_cast<std::size_t>(m));
  double arc = 0.0;
  bool done = false;
  for (int n = 0; n < opts.max_iterations && !done; ++n) {
    for (int j = 0; j < m; ++j) {
      const double f = double(j) / m;
      if (n == 0) {
        states[std::size_t(j)] = section.lift(model, c.seed(f));
      } else {
        const ReturnResult r = return_map(model, section, states[std::size_t(j)], dir);
        if (r.escaped) {
          c.truncated = true;
          c.note = "return map escaped at iterate " + std::to_string(n);
          done = true;
          break;
        }
        states[std::size_t(j)] = r.state;
      }
      const Vec2 p = PoincareSection::coordinates(states[std::size_t(j)]);
      if (!pts.empty()) arc += norm(p - pts.back().second);
      pts.push_back({n + f, p});
      if (!inside(p)) done = true;
    }
    if (arc >= opts.arclength_budget) done = true;
  }

  // Insert seed-parameter midpoints until the spacing bound holds inside the extent.
  for (int pass = 0; pass < 64; ++pass) {
    std::vector<std::pair<double, Vec2>> next;
    bool inserted = false;
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
      next.push_back(pts[k]);
      const auto& [ua, pa] = pts[k];
      const auto& [ub, pb] = pts[k + 1];
      if (norm(pb - pa) > opts.spacing && (inside(pa) || inside(pb)) &&
          int(pts.size() + next.size()) < 2 * opts.max_points) {
        const double um = 0.5 * (ua + ub);
        const int n = int(std::floor(ua));
        try {
          next.push_back({um, c.evaluate(n, um - n)});
          inserted = true;
        } catch (const std::runtime_error&) {
          c.truncated = true;
          c.note = "return map escaped during refinement";
        }
      }
    }
    if (!pts.empty()) next.push_back(pts.back());
    pts.swap(next);
    if (!inserted || int(pts.size()) >= opts.max_points) break;
  }

  // Keep the curve up to its first sample beyond the extent.
  std::size_t end = pts.size();
  for (std::size_t k = 0; k < pts.size(); ++k)
    if (!inside(pts[k].second)) {
      end = k + 1;
      break;
    }
  pts.resize(end);
  c.arclength = 0.0;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    c.params.push_back(pts[k].first);
    c.points.push_back(pts[k].second);
    if (k > 0) c.arclength += norm(pts[k].second - pts[k - 1].second);
  }
  return c;
}

std::array<ManifoldCurve, 4> grow_manifolds(const TorusMetric& model, const ClosedGeodesic& gamma,
                                            const PoincareSection& section, const GrowOptions& opts) {
  const Vec2 fixed = section_fixed_point(model, section, gamma);
  const LinearizedReturn lin = linearize_return(model, section, fixed, opts.fd_step);
  const std::array<Branch, 4> order{Branch::stable_plus, Branch::stable_minus, Branch::unstable_plus,
                                    Branch::unstable_minus};
  std::array<ManifoldCurve, 4> out;
  if (opts.concurrent) {
    std::array<std::future<ManifoldCurve>, 4> jobs;
    for (std::size_t i = 0; i < 4; ++i)
      jobs[i] = std::async(std::launch::async, [&, i] { return grow_branch(model, section, fixed, lin, order[i], opts); });
    for (std::size_t i = 0; i < 4; ++i) out[i] = jobs[i].get();
  } else {
    for (std::size_t i = 0; i < 4; ++i) out[i] = grow_branch(model, section, fixed, lin, order[i], opts);
  }
  return out;
}

namespace {

// Index k such that y lies between points k and k+1 (after the shift).
std::optional<std::size_t> bracket_y(const ManifoldCurve& c, double y, double shift) {
  for (std::size_t k = 0; k + 1 < c.points.size(); ++k) {
    const double a = c.points[k].x + shift - y, b = c.points[k + 1].x + shift - y;
    if ((a <= 0 && b >= 0) || (a >= 0 && b <= 0)) {
      if (a == b) continue;
      return k;
    }
  }
  return std::nullopt;
}

}  // namespace

std::optional<double> theta_at(const ManifoldCurve& c, double y, double shift) {
  const auto k = bracket_y(c, y, shift);
  if (!k) return std::nullopt;
  const std::size_t n = c.points.size();
  // Four-point Lagrange stencil around the bracket, clamped to the curve.
  std::size_t lo = *k >= 1 ? *k - 1 : 0;
  if (lo + 4 > n) lo = n >= 4 ? n - 4 : 0;
  const std::size_t hi = std::min(n, lo + 4);
  double acc = 0.0;
  for (std::size_t i = lo; i < hi; ++i) {
    double w = 1.0;
    for (std::size_t j = lo; j < hi; ++j)
      if (j != i) w *= (y - (c.points[j].x + shift)) / (c.points[i].x - c.points[j].x);
    acc += w * c.points[i].y;
  }
  // Non-monotone stencils fall back to linear interpolation.
  bool monotone = true;
  for (std::size_t i = lo + 1; i < hi; ++i)
    if ((c.points[i].x - c.points[i - 1].x) * (c.points[*k + 1].x - c.points[*k].x) <= 0) monotone = false;
  if (!monotone) {
    const Vec2 a = c.points[*k], b = c.points[*k + 1];
    const double t = (y - shift - a.x) / (b.x - a.x);
    return a.y + t * (b.y - a.y);
  }
  return acc;
}

double hausdorff_on_overlap(const ManifoldCurve& a, const ManifoldCurve& b, double shift, double y_lo, double y_hi) {
  double h = 0.0;
  for (const Vec2& p : a.points)
    if (p.x >= y_lo && p.x <= y_hi)
      if (auto t = theta_at(b, p.x, shift)) h = std::max(h, std::abs(p.y - *t));
  for (const Vec2& p : b.points) {
    const double y = p.x + shift;
    if (y >= y_lo && y <= y_hi)
      if (auto t = theta_at(a, y, 0.0)) h = std::max(h, std::abs(p.y - *t));
  }
  return h;
}

// ---------------------------------------------------------------------------

double distance_to_gamma(const PhaseState& s, double y0) {
  const double dy = s.position.y - y0;
  return std::hypot(dy - std::round(dy), theta_of(s));
}

namespace {

Trajectory one_side(const TorusMetric& model, const PhaseState& s, double gamma_y, int dir, const OrbitOptions& opts,
                    double& horizon, bool& hit) {
  const double r = g_speed(model, s);
  const double T = dir * opts.max_length / r;
  const Dopri4 dp(detail::GeodesicRhs{&model.conformal_exponent}, opts.control);
  OdeOptions<4> oo;
  const long n = long(std::floor(std::abs(T) / opts.sample_dt));
  for (long i = 0; i <= n; ++i) oo.output_times.push_back(dir * i * opts.sample_dt);
  const double radius = opts.linearization_radius;
  oo.event = [gamma_y, radius](double, const OdeState<4>& y) { return distance_to_gamma(unpack(y), gamma_y) - radius; };
  oo.event_direction = -1;
  const OdeRun<4> run = dp.run(0.0, detail::pack(s.position, s.velocity), T, oo);
  hit = run.event_hit;
  horizon = std::abs(run.t);
  Trajectory traj;
  for (const auto& smp : run.samples)
    traj.samples.push_back({smp.t, unpack(smp.y), Mat2::identity(), g_speed(model, unpack(smp.y))});
  if (traj.samples.empty() || traj.samples.back().t != run.t)
    traj.samples.push_back({run.t, unpack(run.y), Mat2::identity(), g_speed(model, unpack(run.y))});
  return traj;
}

Trajectory join(const Trajectory& backward, const Trajectory& forward) {
  Trajectory out;
  for (auto it = backward.samples.rbegin(); it != backward.samples.rend(); ++it)
    if (it->t < 0) out.samples.push_back(*it);
  for (const auto& s : forward.samples) out.samples.push_back(s);
  const double r0 = out.samples.front().speed;
  for (const auto& s : out.samples) out.energy_drift = std::max(out.energy_drift, std::abs(s.speed - r0));
  return out;
}

}  // namespace

HomoclinicCandidate candidate_from_state(const TorusMetric& model, const PhaseState& s, double gamma_y,
                                         const OrbitOptions& opts) {
  HomoclinicCandidate c;
  c.section_point = PoincareSection::coordinates(s);
  const Trajectory fw = one_side(model, s, gamma_y, 1, opts, c.horizon_forward, c.asymptotic_forward);
  const Trajectory bw = one_side(model, s, gamma_y, -1, opts, c.horizon_backward, c.asymptotic_backward);
  c.orbit = join(bw, fw);
  return c;
}

HomoclinicCandidate degenerate_candidate(const TorusMetric& model, const ClosedGeodesic& gamma, double T,
                                         const OrbitOptions& opts) {
  HomoclinicCandidate c;
  c.section_point = PoincareSection::coordinates(gamma.initial);
  FlowOptions fo;
  fo.control = opts.control;
  fo.sample_dt = opts.sample_dt;
  c.orbit = join(integrate(model, gamma.initial, -T, fo), integrate(model, gamma.initial, T, fo));
  c.horizon_forward = c.horizon_backward = T;
  c.asymptotic_forward = c.asymptotic_backward = true;
  return c;
}

namespace {

// Point of the stable curve (shifted) at height y, recomputed from its seed.
struct StablePoint {
  int n = 0;
  double f = 0.0;
  Vec2 p;
};

std::optional<StablePoint> stable_at(const ManifoldCurve& ws, double y, int shift) {
  const auto k = bracket_y(ws, y, shift);
  if (!k) return std::nullopt;
  const int n = int(std::floor(ws.params[*k]));
  double a = ws.params[*k] - n, b = ws.params[*k + 1] - n;
  double ga = ws.points[*k].x + shift - y, gb = ws.points[*k + 1].x + shift - y;
  StablePoint best{n, a, ws.points[*k]};
  if (std::abs(gb) < std::abs(ga)) best = {n, b, ws.points[*k + 1]};
  int side = 0;
  for (int it = 0; it < 80; ++it) {
    if (ga == 0 || gb == 0) break;
    double f = (a * gb - b * ga) / (gb - ga);
    if (!(std::min(a, b) < f && f < std::max(a, b))) f = 0.5 * (a + b);
    const Vec2 p = ws.evaluate(n, f);
    const double g = p.x + shift - y;
    best = {n, f, p};
    if (std::abs(g) < 1e-15 || std::abs(b - a) < 1e-15) break;
    if ((g < 0) == (ga < 0)) {
      a = f;
      ga = g;
      if (side == -1) gb *= 0.5;
      side = -1;
    } else {
      b = f;
      gb = g;
      if (side == 1) ga *= 0.5;
      side = 1;
    }
  }
  best.p.x += shift;
  return best;
}

Vec2 tangent(const ManifoldCurve& c, int n, double f, double h) {
  const Vec2 p1 = c.evaluate(n, f + h), m1 = c.evaluate(n, f - h);
  const Vec2 p2 = c.evaluate(n, f + 2 * h), m2 = c.evaluate(n, f - 2 * h);
  return (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
}

bool segments_cross(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  const double d1 = cross(b - a, c - a), d2 = cross(b - a, d - a);
  const double d3 = cross(d - c, a - c), d4 = cross(d - c, b - c);
  return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

}  // namespace

HomoclinicSearch find_homoclinic(const ManifoldCurve& ws, const ManifoldCurve& wu, const HomoclinicOptions& opts) {
  if (ws.unstable() || !wu.unstable()) throw std::invalid_argument("find_homoclinic: need one stable and one unstable curve");
  if (!(ws.model.conformal_exponent == wu.model.conformal_exponent) || ws.section.speed != wu.section.speed ||
      !(ws.fixed_point == wu.fixed_point)) {
    throw std::invalid_argument("find_homoclinic: curves come from different models or sections");
  }
  HomoclinicSearch out;
  if (ws.points.size() < 2 || wu.points.size() < 2) return out;
  const double y0 = wu.fixed_point.x;
  auto range = [](const ManifoldCurve& c) {
    double lo = c.points.front().x, hi = lo;
    for (const Vec2& p : c.points) lo = std::min(lo, p.x), hi = std::max(hi, p.x);
    return std::pair{lo, hi};
  };
  const auto [ulo, uhi] = range(wu);
  const auto [slo, shi] = range(ws);
  double best_len = 0.0;
  for (int k = -1; k <= 1; ++k) {
    const double lo = std::max(ulo, slo + k), hi = std::min(uhi, shi + k);
    // Largest piece of [lo, hi] away from the fixed-point images y0 + j.
    for (int j = int(std::floor(lo - y0)) - 1; j <= int(std::ceil(hi - y0)) + 1; ++j) {
      const double a = std::max(lo, y0 + j + opts.exclusion_radius);
      const double b = std::min(hi, y0 + j + 1 - opts.exclusion_radius);
      if (b - a > best_len) {
        best_len = b - a;
        out.shift = k;
        out.overlap_lo = a;
        out.overlap_hi = b;
      }
    }
  }
  if (best_len <= 0) return out;
  const double lo = out.overlap_lo, hi = out.overlap_hi;
  const int shift = out.shift;
  auto in_window = [&](const Vec2& p) { return p.x >= lo && p.x <= hi; };

  for (std::size_t i = 0; i + 1 < wu.points.size(); ++i) {
    if (!in_window(wu.points[i]) && !in_window(wu.points[i + 1])) continue;
    for (std::size_t j = 0; j + 1 < ws.points.size(); ++j) {
      const Vec2 c = ws.points[j] + Vec2{double(shift), 0}, d = ws.points[j + 1] + Vec2{double(shift), 0};
      if (segments_cross(wu.points[i], wu.points[i + 1], c, d)) ++out.polyline_crossings;
    }
  }

  // Splitting function on the unstable samples.
  std::vector<std::pair<std::size_t, double>> D;
  for (std::size_t i = 0; i < wu.points.size(); ++i) {
    if (!in_window(wu.points[i])) continue;
    if (auto t = theta_at(ws, wu.points[i].x, shift)) {
      D.push_back({i, wu.points[i].y - *t});
      out.max_abs_splitting = std::max(out.max_abs_splitting, std::abs(D.back().second));
    }
  }
  std::vector<std::pair<std::size_t, std::size_t>> brackets;
  for (std::size_t k = 0; k + 1 < D.size(); ++k) {
    if (D[k + 1].first != D[k].first + 1) continue;
    if ((D[k].second <= 0) != (D[k + 1].second <= 0)) {
      ++out.sign_changes;
      brackets.push_back({D[k].first, D[k + 1].first});
    }
  }

  for (const auto& [ia, ib] : brackets) {
    if (int(out.candidates.size()) >= opts.max_candidates) break;
    const int n = int(std::floor(wu.params[ia]));
    double a = wu.params[ia] - n, b = wu.params[ib] - n;
    auto split = [&](double f, StablePoint& sp, Vec2& q) {
      q = wu.evaluate(n, f);
      const auto s = stable_at(ws, q.x, shift);
      if (!s) return std::numeric_limits<double>::quiet_NaN();
      sp = *s;
      return q.y - s->p.y;
    };
    StablePoint sa, sb, sm;
    Vec2 qa, qb, qm;
    double da = split(a, sa, qa), db = split(b, sb, qb);
    if (!std::isfinite(da) || !std::isfinite(db)) continue;
    double fm = std::abs(da) < std::abs(db) ? a : b;
    double dm = std::abs(da) < std::abs(db) ? da : db;
    sm = std::abs(da) < std::abs(db) ? sa : sb;
    qm = std::abs(da) < std::abs(db) ? qa : qb;
    if ((da <= 0) != (db <= 0)) {
      int side = 0;
      for (int it = 0; it < 100 && std::abs(dm) > 0.1 * opts.refine_tol && std::abs(b - a) > 1e-15; ++it) {
        double f = (a * db - b * da) / (db - da);
        if (!(std::min(a, b) < f && f < std::max(a, b))) f = 0.5 * (a + b);
        const double d = split(f, sm, qm);
        if (!std::isfinite(d)) break;
        fm = f;
        dm = d;
        if ((d < 0) == (da < 0)) {
          a = f;
          da = d;
          if (side == -1) db *= 0.5;
          side = -1;
        } else {
          b = f;
          db = d;
          if (side == 1) da *= 0.5;
          side = 1;
        }
      }
    }
    if (!(std::abs(dm) < opts.refine_tol)) continue;

    HomoclinicCandidate c;
    c.shift = shift;
    c.unstable_param = n + fm;
    c.stable_param = sm.n + sm.f;
    c.residual = std::abs(dm);
    c.unstable_tangent = tangent(wu, n, fm, opts.tangent_step);
    c.stable_tangent = tangent(ws, sm.n, sm.f, opts.tangent_step);
    c.splitting_angle = std::atan2(std::abs(cross(c.unstable_tangent, c.stable_tangent)),
                                   std::abs(dot(c.unstable_tangent, c.stable_tangent)));
    const HomoclinicCandidate orbit = candidate_from_state(wu.model, wu.evaluate_state(n, fm), y0, opts.orbit);
    c.section_point = qm;
    c.orbit = orbit.orbit;
    c.horizon_forward = orbit.horizon_forward;
    c.horizon_backward = orbit.horizon_backward;
    c.asymptotic_forward = orbit.asymptotic_forward;
    c.asymptotic_backward = orbit.asymptotic_backward;
    out.candidates.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// Integral of the piecewise-linear interpolant of (t, f) over [a, b].
double integrate_pl(const std::vector<double>& t, const std::vector<double>& f, double a, double b) {
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    const double lo = std::max(a, t[i]), hi = std::min(b, t[i + 1]);
    if (hi <= lo) continue;
    auto at = [&](double s) { return f[i] + (f[i + 1] - f[i]) * (s - t[i]) / (t[i + 1] - t[i]); };
    acc += 0.5 * (at(lo) + at(hi)) * (hi - lo);
  }
  return acc;
}

int longest_run_below_one(const std::vector<double>& ratios) {
  int best = 0, run = 0;
  for (double r : ratios) {
    run = (std::isfinite(r) && r < 1.0) ? run + 1 : 0;
    best = std::max(best, run);
  }
  return best;
}

double median(std::vector<double> v) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return !std::isfinite(x); }), v.end());
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
}

}  // namespace

HomoclinicDiagnostics homoclinic_diagnostics(const HomoclinicCandidate& c, const NonnegLagrangian& F, double gamma_y,
                                             const std::vector<double>& eps_list, const DiagnosticsOptions& opts) {
  HomoclinicDiagnostics d;
  const auto& S = c.orbit.samples;
  if (S.size() < 2) throw std::invalid_argument("homoclinic_diagnostics: orbit has fewer than two samples");
  std::vector<double> t, f, dist;
  for (const auto& s : S) {
    t.push_back(s.t);
    f.push_back(F(s.state.position, s.state.velocity));
    dist.push_back(distance_to_gamma(s.state, gamma_y));
  }
  d.min_F = *std::min_element(f.begin(), f.end());
  if (d.min_F < -opts.f_tolerance) {
    throw std::runtime_error("homoclinic_diagnostics: F = " + std::to_string(d.min_F) +
                             " along the orbit; F does not pair with this orbit");
  }
  const double r = S.front().speed;
  const double w = opts.window / r;  // window length in time
  const double t_lo = t.front(), t_hi = t.back();
  d.action_total = integrate_pl(t, f, t_lo, t_hi);

  for (int k = 0; (k + 1) * w <= t_hi + 1e-12; ++k) d.forward_windows.push_back(integrate_pl(t, f, k * w, (k + 1) * w));
  for (int k = 0; -(k + 1) * w >= t_lo - 1e-12; ++k)
    d.backward_windows.push_back(integrate_pl(t, f, -(k + 1) * w, -k * w));
  d.symmetric_monotone = true;
  for (int k = 1; k * w <= std::min(t_hi, -t_lo) + 1e-12; ++k) {
    d.symmetric_action.push_back(integrate_pl(t, f, -k * w, k * w));
    const std::size_t m = d.symmetric_action.size();
    if (m > 1 && d.symmetric_action[m - 1] < d.symmetric_action[m - 2] - 1e-14) d.symmetric_monotone = false;
  }

  auto ratios = [](const std::vector<double>& W) {
    std::vector<double> out;
    for (std::size_t k = 0; k + 1 < W.size(); ++k)
      out.push_back(W[k] > 0 ? W[k + 1] / W[k] : std::numeric_limits<double>::quiet_NaN());
    return out;
  };
  d.forward_ratios = ratios(d.forward_windows);
  d.backward_ratios = ratios(d.backward_windows);
  d.forward_decay_run = longest_run_below_one(d.forward_ratios);
  d.backward_decay_run = longest_run_below_one(d.backward_ratios);

  auto dist_at = [&](double time) {
    const auto it = std::lower_bound(t.begin(), t.end(), time);
    return dist[std::size_t(std::min<std::ptrdiff_t>(it - t.begin(), std::ptrdiff_t(t.size()) - 1))];
  };
  auto asymptotic_median = [&](const std::vector<double>& R, double sign) {
    std::vector<double> sel;
    for (std::size_t k = 0; k < R.size(); ++k)
      if (dist_at(sign * k * w) < opts.asymptotic_radius) sel.push_back(R[k]);
    return median(sel);
  };
  d.forward_ratio = asymptotic_median(d.forward_ratios, 1.0);
  d.backward_ratio = asymptotic_median(d.backward_ratios, -1.0);

  // Index of t = 0.
  const std::size_t i0 = std::size_t(std::lower_bound(t.begin(), t.end(), 0.0) - t.begin());
  d.tubes_pass = !eps_list.empty();
  for (double eps : eps_list) {
    TubeReport tr;
    tr.eps = eps;
    bool entered_f = false, entered_b = false, conf = true;
    for (std::size_t i = i0; i < t.size(); ++i) {
      if (!entered_f && dist[i] < eps) entered_f = true;
      if (entered_f && dist[i] >= 2 * eps) conf = false;
    }
    for (std::size_t i = i0 + 1; i-- > 0;) {
      if (!entered_b && dist[i] < eps) entered_b = true;
      if (entered_b && dist[i] >= 2 * eps) conf = false;
    }
    tr.entered = entered_f && entered_b;
    tr.confined = tr.entered && conf;
    tr.delta = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < t.size(); ++i)
      if (dist[i] >= eps && dist[i] < 2 * eps) tr.delta = std::min(tr.delta, f[i]);
    if (!std::isfinite(tr.delta)) tr.delta = std::numeric_limits<double>::quiet_NaN();
    tr.rho = eps * tr.delta / r;
    d.tubes_pass = d.tubes_pass && tr.confined;
    d.tubes.push_back(tr);
  }

  d.forward_alignment = std::abs(theta_of(S.back().state));
  d.backward_alignment = std::abs(theta_of(S.front().state));
  d.aligned = d.forward_alignment < opts.alignment_tol && d.backward_alignment < opts.alignment_tol &&
              S.back().state.velocity.x > 0 && S.front().state.velocity.x > 0;

  // Distance to gamma is nonincreasing away from t = 0 once inside the asymptotic radius.
  d.distance_monotone = true;
  bool in = false;
  for (std::size_t i = i0; i + 1 < t.size(); ++i) {
    if (dist[i] < opts.asymptotic_radius) in = true;
    if (in && dist[i + 1] > dist[i] * (1 + 1e-6) + 1e-12) d.distance_monotone = false;
  }
  in = false;
  for (std::size_t i = i0; i > 0; --i) {
    if (dist[i] < opts.asymptotic_radius) in = true;
    if (in && dist[i - 1] > dist[i] * (1 + 1e-6) + 1e-12) d.distance_monotone = false;
  }
  return d;
}

double clairaut_drift(const TorusMetric& model, const Trajectory& orbit) {
  if (orbit.samples.empty()) return 0.0;
  auto px = [&model](const PhaseState& s) { return model.factor(s.position) * s.velocity.x; };
  const double p0 = px(orbit.samples.front().state);
  double m = 0.0;
  for (const auto& s : orbit.samples) m = std::max(m, std::abs(px(s.state) - p0));
  return m;
}

void write_manifolds_json(std::ostream& out, const std::array<ManifoldCurve, 4>& curves,
                          const std::vector<HomoclinicCandidate>& candidates) {
  nlohmann::json j;
  j["coordinates"] = {"y", "theta"};
  for (const auto& c : curves) {
    nlohmann::json cj;
    cj["branch"] = to_string(c.branch);
    cj["eigenvalue"] = c.eigenvalue;
    cj["eigenvector"] = {c.eigenvector.x, c.eigenvector.y};
    cj["fixed_point"] = {c.fixed_point.x, c.fixed_point.y};
    cj["seed_distance"] = c.seed_distance;
    cj["spacing"] = c.spacing;
    cj["arclength"] = c.arclength;
    cj["truncated"] = c.truncated;
    cj["note"] = c.note;
    cj["params"] = c.params;
    nlohmann::json pts = nlohmann::json::array();
    for (const Vec2& p : c.points) pts.push_back({p.x, p.y});
    cj["points"] = pts;
    j["curves"].push_back(cj);
  }
  j["candidates"] = nlohmann::json::array();
  for (const auto& c : candidates) {
    j["candidates"].push_back({{"section_point", {c.section_point.x, c.section_point.y}},
                               {"shift", c.shift},
                               {"unstable_param", c.unstable_param},
                               {"stable_param", c.stable_param},
                               {"residual", c.residual},
                               {"splitting_angle", c.splitting_angle},
                               {"horizon_forward", c.horizon_forward},
                               {"horizon_backward", c.horizon_backward},
                               {"asymptotic_forward", c.asymptotic_forward},
                               {"asymptotic_backward", c.asymptotic_backward}});
  }
  out << j.dump(1) << '\n';
}

void write_orbit_csv(std::ostream& out, const Trajectory& orbit) {
  out.precision(17);
  out << "t,x,y,vx,vy\n";
  for (const auto& s : orbit.samples)
    out << s.t << ',' << s.state.position.x << ',' << s.state.position.y << ',' << s.state.velocity.x << ','
        << s.state.velocity.y << '\n';
}

}  // namespace geolab
