#include "geolab/green.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "geolab/quadrature.hpp"
#include "json.hpp"

namespace geolab {

namespace {

void check_no_conjugate(const Trajectory& tr, double sign) {
  for (const auto& s : tr.samples) {
    if (s.t != 0.0 && !(sign * s.transfer.a12 > 0.0)) {
      throw ConjugatePointError(s.t, "conjugate point near t=" + std::to_string(s.t));
    }
  }
}

double A_from(const Mat2& m) { return -m.a11 / m.a12; }

// Aitken delta^2 on the last three entries; the raw value when the
// second difference is at rounding level.
double aitken(const std::vector<double>& a) {
  const std::size_t n = a.size();
  if (n < 3) return a.back();
  const double d1 = a[n - 1] - a[n - 2];
  const double d2 = a[n - 1] - 2 * a[n - 2] + a[n - 3];
  const double scale = std::max({1.0, std::abs(a[n - 1]), std::abs(a[n - 2])});
  if (std::abs(d2) <= 1e-13 * scale || std::abs(d1) <= 1e-15 * scale) return a.back();
  return a[n - 1] - d1 * d1 / d2;
}

}  // namespace

double green_endomorphism(const TorusMetric& model, const ClosedGeodesic& gamma, double t,
                          const StepControl& control) {
  if (!(std::abs(t) >= 1e-3)) throw std::invalid_argument("green_endomorphism: |t| below 1e-3 is numerically singular");
  FlowOptions o;
  o.control = control;
  const Trajectory tr = integrate(model, with_speed(model, gamma.initial, 1.0), t, o);
  check_no_conjugate(tr, t > 0 ? 1.0 : -1.0);
  return A_from(tr.back().transfer);
}

GreenRecord green_limits(const TorusMetric& model, const ClosedGeodesic& gamma, double t_max, double tol,
                         const GreenOptions& opts) {
  if (!(t_max > opts.t_min) || !(opts.ratio > 1.0)) throw std::invalid_argument("green_limits: bad t grid");
  std::vector<double> grid;
  for (double t = opts.t_min; t < t_max * (1 - 1e-12); t *= opts.ratio) grid.push_back(t);
  grid.push_back(t_max);

  GreenRecord rec;
  rec.geodesic = gamma;
  rec.t_max = t_max;
  rec.tol = tol;
  const PhaseState unit = with_speed(model, gamma.initial, 1.0);
  std::vector<double> seq[2];
  for (int side = 0; side < 2; ++side) {
    const double sign = side == 0 ? 1.0 : -1.0;
    FlowOptions o;
    o.control = opts.control;
    o.record_steps = true;
    for (double t : grid) o.sample_times.push_back(sign * t);
    const Trajectory tr = integrate(model, unit, sign * t_max, o);
    check_no_conjugate(tr, sign);
    std::size_t k = 0;
    for (const auto& s : tr.samples) {
      if (k < grid.size() && s.t == sign * grid[k]) {
        seq[side].push_back(A_from(s.transfer));
        rec.samples.push_back({s.t, seq[side].back()});
        ++k;
      }
    }
    if (k != grid.size()) throw std::logic_error("green_limits: grid sample missing");
  }
  std::sort(rec.samples.begin(), rec.samples.end(), [](const auto& a, const auto& b) { return a.t < b.t; });

  double ext[2], tail[2];
  for (int side = 0; side < 2; ++side) {
    std::vector<double> head;
    double prev = std::numeric_limits<double>::quiet_NaN();
    tail[side] = std::numeric_limits<double>::infinity();
    for (double a : seq[side]) {
      head.push_back(a);
      const double e = aitken(head);
      if (head.size() >= 3) tail[side] = std::abs(e - prev);
      prev = e;
    }
    ext[side] = prev;
  }
  rec.bracket_lo = seq[0].back();
  rec.bracket_hi = seq[1].back();
  // Monotone squeeze: A_{t_max} <= A_+ <= A_- <= A_{-t_max}.
  rec.A_plus = std::clamp(ext[0], rec.bracket_lo, rec.bracket_hi);
  rec.A_minus = std::clamp(ext[1], rec.A_plus, rec.bracket_hi);
  rec.eberlein_gap = rec.A_minus - rec.A_plus;
  rec.tail_plus = tail[0];
  rec.tail_minus = tail[1];
  rec.discrepancy_plus = std::abs(rec.A_plus - seq[0].back());
  rec.discrepancy_minus = std::abs(rec.A_minus - seq[1].back());
  rec.converged = tail[0] < tol && tail[1] < tol;
  if (!rec.converged) {
    rec.diagnostic = "limits not converged at t_max=" + std::to_string(t_max) + "; bracket [" +
                     std::to_string(rec.bracket_lo) + ", " + std::to_string(rec.bracket_hi) + "]";
  }
  return rec;
}

double monotonicity_violation(const GreenRecord& record) {
  double worst = -std::numeric_limits<double>::infinity();
  double max_pos = -std::numeric_limits<double>::infinity();
  double min_neg = std::numeric_limits<double>::infinity();
  const auto& s = record.samples;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    if ((s[i].t > 0) == (s[i + 1].t > 0)) worst = std::max(worst, s[i].A - s[i + 1].A);
  }
  for (const auto& x : s) (x.t > 0 ? max_pos : min_neg) = x.t > 0 ? std::max(max_pos, x.A) : std::min(min_neg, x.A);
  return std::max(worst, max_pos - min_neg);
}

EberleinResult eberlein_test(const GreenRecord& record, double margin) {
  if (!record.converged) throw std::invalid_argument("eberlein_test: record not converged (" + record.diagnostic + ")");
  EberleinResult r;
  r.gap = record.eberlein_gap;
  r.margin = margin;
  r.hyperbolic = record.eberlein_gap > margin;
  const auto& l = record.geodesic.floquet;
  const bool real = l[0].imag() == 0.0 && l[1].imag() == 0.0;
  if (real && std::abs(std::log(std::abs(l[0].real()))) > margin &&
      std::abs(std::log(std::abs(l[1].real()))) > margin) {
    r.floquet = FloquetVerdict::hyperbolic;
  } else if (!real && std::abs(l[0].imag()) > margin) {
    r.floquet = FloquetVerdict::elliptic;
  } else {
    r.floquet = FloquetVerdict::parabolic;
  }
  r.agrees_with_floquet = r.hyperbolic == (r.floquet == FloquetVerdict::hyperbolic);
  return r;
}

OrthogonalField OrthogonalField::jacobi_field(double j0, double dj0) {
  OrthogonalField f;
  f.description = "jacobi(J0=" + std::to_string(j0) + ", J0'=" + std::to_string(dj0) + ")";
  f.jacobi = Vec2{j0, dj0};
  return f;
}

OrthogonalField OrthogonalField::explicit_field(std::string description, std::function<double(double)> value,
                                                std::function<double(double)> derivative) {
  OrthogonalField f;
  f.description = std::move(description);
  f.value = std::move(value);
  f.derivative = std::move(derivative);
  return f;
}

IndexFormReport index_form(const TorusMetric& model, const PhaseState& start, const OrthogonalField& field,
                           double tau, const IndexFormOptions& opts) {
  if (!(tau > 0.0)) throw std::invalid_argument("index_form: tau must be positive");
  if (!field.jacobi && !(field.value && field.derivative)) throw std::invalid_argument("index_form: empty field");
  const auto rule = composite_gauss(0.0, tau, opts.panels, opts.order);
  if (field.tangential) {
    for (double s : {0.0, tau}) {
      if (std::abs(field.tangential(s)) > opts.orthogonality_tol) throw std::invalid_argument("index_form: field not orthogonal to the geodesic");
    }
    for (const auto& [s, w] : rule) {
      if (std::abs(field.tangential(s)) > opts.orthogonality_tol) throw std::invalid_argument("index_form: field not orthogonal to the geodesic");
    }
  }
  FlowOptions o;
  o.control = opts.control;
  for (const auto& [s, w] : rule) o.sample_times.push_back(s);
  o.sample_times.push_back(tau);
  const Trajectory tr = integrate(model, with_speed(model, start, 1.0), tau, o);
  if (tr.samples.size() != rule.size() + 2) throw std::logic_error("index_form: sample mismatch");

  auto eval = [&](const TrajectorySample& q, double& y, double& dy) {
    y = 0.0;
    dy = 0.0;
    if (field.jacobi) {
      const Vec2 j = q.transfer * *field.jacobi;
      y += j.x;
      dy += j.y;
    }
    if (field.value) {
      y += field.value(q.t);
      dy += field.derivative(q.t);
    }
  };
  IndexFormReport rep;
  rep.tau = tau;
  rep.field_description = field.description;
  double acc = 0.0;
  for (std::size_t i = 0; i < rule.size(); ++i) {
    const TrajectorySample& q = tr.samples[i + 1];
    double y, dy;
    eval(q, y, dy);
    const double kappa = gauss_curvature(model, q.state.position) * q.speed * q.speed;
    acc += rule[i].second * (dy * dy - kappa * y * y);
  }
  rep.value = acc;
  if (field.jacobi && !field.value) {
    double y0, dy0, y1, dy1;
    eval(tr.front(), y0, dy0);
    eval(tr.back(), y1, dy1);
    rep.boundary_term = y1 * dy1 - y0 * dy0;
  }
  return rep;
}

namespace {

// int_0^1 (m11 w + m12 a w)^2 ds along the unit-speed geodesic.
double jacobi_l2_unit(const TorusMetric& model, const PhaseState& start, double a, double w,
                      const StepControl& control) {
  const auto rule = composite_gauss(0.0, 1.0, 8);
  FlowOptions o;
  o.control = control;
  for (const auto& [s, wt] : rule) o.sample_times.push_back(s);
  const Trajectory tr = integrate(model, with_speed(model, start, 1.0), 1.0, o);
  double acc = 0.0;
  for (std::size_t i = 0; i < rule.size(); ++i) {
    const double j = tr.samples[i + 1].transfer.a11 * w + tr.samples[i + 1].transfer.a12 * a * w;
    acc += rule[i].second * j * j;
  }
  return acc;
}

}  // namespace

ComparisonReport conformal_comparison(const TorusMetric& g, const TorusMetric& g_tilde, const ClosedGeodesic& gamma,
                                      double tau, double w, const ComparisonOptions& opts) {
  if (!(tau >= 1.0)) throw std::invalid_argument("conformal_comparison: tau must be >= 1");
  if (w == 0.0) throw std::invalid_argument("conformal_comparison: w must be nonzero");
  const TrigPoly2 rho = g_tilde.conformal_exponent - g.conformal_exponent;

  const int n = 256;
  FlowOptions fo;
  fo.control = opts.control;
  fo.sample_dt = gamma.period / n;
  const Trajectory loop = integrate(g, gamma.initial, gamma.period, fo);
  CurveSample curve;
  curve.winding = gamma.winding;
  for (int i = 0; i < n; ++i) curve.nodes.push_back(loop.samples[i].state.position);
  const BumpReport hyp = verify_bump_hypotheses(g, rho, curve, 2 * n);
  if (!hyp.pass) throw std::invalid_argument("conformal_comparison: hypothesis failed: " + hyp.violated);

  ComparisonReport r;
  r.tau = tau;
  r.w = w;
  r.delta = std::numeric_limits<double>::infinity();
  for (const auto& s : loop.samples) {
    const Vec2 v = s.state.velocity / norm(s.state.velocity);
    const Vec2 nrm{-v.y, v.x};
    const Jet2 j = rho.jet(s.state.position);
    const double hnn = dot(nrm, j.hess * nrm);
    r.delta = std::min(r.delta, 0.5 * hnn / g.factor(s.state.position));
  }

  r.A_tau = green_endomorphism(g, gamma, tau, opts.control);
  r.A_tilde_tau = green_endomorphism(g_tilde, gamma, tau, opts.control);
  r.tilde_jacobi_l2 = jacobi_l2_unit(g_tilde, gamma.initial, r.A_tilde_tau, w, opts.control);
  r.jacobi_l2 = jacobi_l2_unit(g, gamma.initial, r.A_tau, w, opts.control);
  r.margin = (r.A_tau - r.A_tilde_tau) * w * w - r.delta * r.tilde_jacobi_l2;
  r.margin_untilded = (r.A_tau - r.A_tilde_tau) * w * w - r.delta * r.jacobi_l2;

  const GreenRecord base = green_limits(g, gamma, opts.t_max, opts.limit_tol, {opts.control});
  const GreenRecord pert = green_limits(g_tilde, gamma, opts.t_max, opts.limit_tol, {opts.control});
  r.A_plus = base.A_plus;
  r.A_minus = base.A_minus;
  r.A_tilde_plus = pert.A_plus;
  r.A_tilde_minus = pert.A_minus;
  r.eps_prime = r.A_plus - r.A_tilde_plus;
  r.eps_prime_bound = r.delta * jacobi_l2_unit(g_tilde, gamma.initial, r.A_tilde_plus, 1.0, opts.control);
  r.minus_margin = r.A_tilde_minus - r.A_minus;
  r.pass = r.margin > 0.0 && r.eps_prime > 0.0 && r.minus_margin >= 0.0;
  return r;
}

void write_green_json(std::ostream& out, const GreenRecord& record) {
  nlohmann::json j;
  j["t"] = nlohmann::json::array();
  j["A"] = nlohmann::json::array();
  for (const auto& s : record.samples) {
    j["t"].push_back(s.t);
    j["A"].push_back(s.A);
  }
  j["A_plus"] = record.A_plus;
  j["A_minus"] = record.A_minus;
  j["eberlein_gap"] = record.eberlein_gap;
  j["bracket"] = {record.bracket_lo, record.bracket_hi};
  j["tail"] = {record.tail_plus, record.tail_minus};
  j["discrepancy"] = {record.discrepancy_plus, record.discrepancy_minus};
  j["t_max"] = record.t_max;
  j["tol"] = record.tol;
  j["converged"] = record.converged;
  if (!record.diagnostic.empty()) j["diagnostic"] = record.diagnostic;
  out << j.dump(2) << '\n';
}

}  // namespace geolab
