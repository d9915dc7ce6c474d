#include "geolab/flow.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "geolab/geodesic_rhs.hpp"

namespace geolab {

using detail::GeodesicJacobiRhs;
using detail::GeodesicRhs;

double g_speed(const TorusMetric& model, const PhaseState& s) { return model.norm(s.position, s.velocity); }

PhaseState with_speed(const TorusMetric& model, const PhaseState& s, double r) {
  const double cur = g_speed(model, s);
  if (!(cur > 0.0)) throw std::invalid_argument("with_speed: zero velocity");
  return {s.position, s.velocity * (r / cur)};
}

namespace {

TrajectorySample unpack(const TorusMetric& model, double t, const OdeState<8>& y) {
  TrajectorySample s;
  s.t = t;
  s.state = {{y[0], y[1]}, {y[2], y[3]}};
  s.transfer = {y[4], y[6], y[5], y[7]};
  s.speed = g_speed(model, s.state);
  return s;
}

}  // namespace

Trajectory integrate(const TorusMetric& model, const PhaseState& start, double T, const FlowOptions& opts) {
  if (T == 0.0) throw std::invalid_argument("integrate: T must be nonzero");
  const auto dp = make_dopri<8>(GeodesicJacobiRhs{&model.conformal_exponent}, opts.control);
  OdeOptions<8> o;
  if (!opts.sample_times.empty()) {
    o.output_times = opts.sample_times;
  } else if (opts.sample_dt > 0.0) {
    const long n = long(std::floor(std::abs(T) / opts.sample_dt + 1e-9));
    const double dir = T > 0 ? 1.0 : -1.0;
    for (long i = 1; i <= n; ++i) o.output_times.push_back(dir * i * opts.sample_dt);
  } else {
    o.record_steps = true;
  }
  o.record_steps = o.record_steps || opts.record_steps;
  const OdeState<8> y0{start.position.x, start.position.y, start.velocity.x, start.velocity.y, 1, 0, 0, 1};
  const OdeRun<8> run = dp.run(0.0, y0, T, o);

  Trajectory traj;
  traj.steps = run.accepted;
  traj.samples.reserve(run.samples.size() + 2);
  traj.samples.push_back(unpack(model, 0.0, y0));
  for (const auto& s : run.samples) {
    if (s.t == 0.0) continue;
    traj.samples.push_back(unpack(model, s.t, s.y));
  }
  if (traj.samples.back().t != run.t) traj.samples.push_back(unpack(model, run.t, run.y));
  const double r0 = traj.samples.front().speed;
  for (const auto& s : traj.samples) traj.energy_drift = std::max(traj.energy_drift, std::abs(s.speed - r0));
  traj.drift_bound = std::max(1e-14, double(run.accepted) * (opts.control.rtol * r0 + opts.control.atol));
  return traj;
}

PhaseState flow_to(const TorusMetric& model, const PhaseState& start, double T, const StepControl& control) {
  if (T == 0.0) return start;
  const auto dp = make_dopri<4>(GeodesicRhs{&model.conformal_exponent}, control);
  const auto run = dp.run(0.0, detail::pack(start.position, start.velocity), T);
  return {{run.y[0], run.y[1]}, {run.y[2], run.y[3]}};
}

double closure_residual(const TorusMetric& model, const PhaseState& start, double period, Winding* winding,
                        const StepControl& control) {
  const PhaseState end = flow_to(model, start, period, control);
  const Vec2 disp = end.position - start.position;
  const Winding m{int(std::lround(disp.x)), int(std::lround(disp.y))};
  if (winding) *winding = m;
  const Vec2 dp = disp - m.vec();
  const Vec2 dv = end.velocity - start.velocity;
  return std::sqrt(norm2(dp) + norm2(dv));
}

namespace {

// Solves a 3x3 system by partially pivoted elimination; false when a pivot
// is negligible relative to the matrix scale.
bool solve3(std::array<std::array<double, 3>, 3> a, std::array<double, 3> b, std::array<double, 3>& x) {
  double scale = 0.0;
  for (const auto& r : a)
    for (double v : r) scale = std::max(scale, std::abs(v));
  if (scale == 0.0) return false;
  for (int c = 0; c < 3; ++c) {
    int piv = c;
    for (int r = c + 1; r < 3; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    if (std::abs(a[piv][c]) < 1e-9 * scale) return false;
    std::swap(a[c], a[piv]);
    std::swap(b[c], b[piv]);
    for (int r = c + 1; r < 3; ++r) {
      const double f = a[r][c] / a[c][c];
      for (int k = c; k < 3; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  for (int c = 2; c >= 0; --c) {
    double s = b[c];
    for (int k = c + 1; k < 3; ++k) s -= a[c][k] * x[k];
    x[c] = s / a[c][c];
  }
  return true;
}

double wrap_angle(double a) { return std::remainder(a, kTwoPi); }

// Shooting coordinates: the dominant velocity coordinate is pinned (phase
// gauge) and the g-speed is fixed (energy gauge). Unknowns are the free
// coordinate, the heading angle, and the period.
struct ShootingFrame {
  const TorusMetric* model;
  int pinned;  // 0: x fixed, 1: y fixed
  Vec2 base;
  double speed;
  Winding winding;
  StepControl control;

  PhaseState state(double free_coord, double heading) const {
    Vec2 p = base;
    p[1 - pinned] = free_coord;
    const double scale = speed * std::exp(-0.5 * model->exponent(p));
    return {p, {scale * std::cos(heading), scale * std::sin(heading)}};
  }

  std::array<double, 3> residual(const std::array<double, 3>& z) const {
    const PhaseState s = state(z[0], z[1]);
    const PhaseState e = flow_to(*model, s, z[2], control);
    const Vec2 d = e.position - s.position - winding.vec();
    return {d.x, d.y, wrap_angle(std::atan2(e.velocity.y, e.velocity.x) - z[1])};
  }
};

}  // namespace

ClosedGeodesic find_closed_geodesic(const TorusMetric& model, const PhaseState& seed, double period, double tol,
                                    const ShootingOptions& opts) {
  if (!(period > 0.0)) throw std::invalid_argument("find_closed_geodesic: period must be positive");
  const double r = g_speed(model, seed);
  if (!(r > 0.0)) throw std::invalid_argument("find_closed_geodesic: seed velocity is zero");

  ShootingFrame frame{&model, std::abs(seed.velocity.x) >= std::abs(seed.velocity.y) ? 0 : 1, seed.position, r,
                      {}, opts.control};
  closure_residual(model, seed, period, &frame.winding, opts.control);

  std::array<double, 3> z{seed.position[1 - frame.pinned], std::atan2(seed.velocity.y, seed.velocity.x), period};
  ClosedGeodesic out;
  auto finish = [&](const std::array<double, 3>& zz, int iters) {
    out.initial = frame.state(zz[0], zz[1]);
    out.period = zz[2];
    out.speed = r;
    out.residual = closure_residual(model, out.initial, out.period, &out.winding, opts.control);
    out.newton_iterations = iters;
    const MonodromyReport m = monodromy(model, out, 1e-4, opts.control);
    out.monodromy = m.matrix;
    out.floquet = m.multipliers;
    return out;
  };

  // The seed itself may already close (exact geodesics, flat continua).
  if (closure_residual(model, seed, period, nullptr, opts.control) < tol) {
    out.initial = seed;
    out.period = period;
    out.speed = r;
    out.residual = closure_residual(model, seed, period, &out.winding, opts.control);
    const MonodromyReport m = monodromy(model, out, 1e-4, opts.control);
    out.monodromy = m.matrix;
    out.floquet = m.multipliers;
    return out;
  }

  for (int it = 1; it <= opts.max_iterations; ++it) {
    const auto f = frame.residual(z);
    std::array<std::array<double, 3>, 3> jac;
    for (int k = 0; k < 3; ++k) {
      auto zp = z, zm = z;
      const double h = opts.fd_step * std::max(1.0, std::abs(z[k]));
      zp[k] += h;
      zm[k] -= h;
      const auto fp = frame.residual(zp);
      const auto fm = frame.residual(zm);
      for (int i = 0; i < 3; ++i) jac[i][k] = (fp[i] - fm[i]) / (2 * h);
    }
    std::array<double, 3> dz;
    if (!solve3(jac, {-f[0], -f[1], -f[2]}, dz)) {
      throw ShootingError("find_closed_geodesic: singular shooting Jacobian and seed mismatch " +
                          std::to_string(std::sqrt(f[0] * f[0] + f[1] * f[1] + f[2] * f[2])) + " above tol");
    }
    // Damped update: halve until the mismatch decreases.
    const double f0 = std::sqrt(f[0] * f[0] + f[1] * f[1] + f[2] * f[2]);
    double lam = 1.0;
    std::array<double, 3> zn = z;
    for (int k = 0; k < 20; ++k) {
      for (int i = 0; i < 3; ++i) zn[i] = z[i] + lam * dz[i];
      if (zn[2] > 0) {
        const auto fn = frame.residual(zn);
        if (std::sqrt(fn[0] * fn[0] + fn[1] * fn[1] + fn[2] * fn[2]) < f0) break;
      }
      lam *= 0.5;
    }
    z = zn;
    const PhaseState s = frame.state(z[0], z[1]);
    Winding w;
    if (closure_residual(model, s, z[2], &w, opts.control) < tol && w == frame.winding) return finish(z, it);
  }
  throw ShootingError("find_closed_geodesic: Newton shooting did not converge in " +
                      std::to_string(opts.max_iterations) + " iterations");
}

ClosedGeodesic find_closed_geodesic(const TorusMetric& model, const Loop& seed, double tol,
                                    const ShootingOptions& opts) {
  const Vec2 v = (seed.node(1) - seed.node(0)) / seed.dt();
  return find_closed_geodesic(model, PhaseState{seed.node(0), v}, seed.period(), tol, opts);
}

std::string to_string(FloquetVerdict v) {
  switch (v) {
    case FloquetVerdict::hyperbolic: return "hyperbolic";
    case FloquetVerdict::parabolic: return "parabolic";
    case FloquetVerdict::elliptic: return "elliptic";
  }
  return "unknown";
}

MonodromyReport monodromy(const TorusMetric& model, const ClosedGeodesic& gamma, double margin,
                          const StepControl& control) {
  FlowOptions o;
  o.control = control;
  o.sample_times = {gamma.period};
  const Trajectory tr = integrate(model, gamma.initial, gamma.period, o);
  MonodromyReport rep;
  rep.matrix = tr.back().transfer;
  rep.multipliers = eigenvalues(rep.matrix);
  const auto& l = rep.multipliers;
  const bool real = l[0].imag() == 0.0 && l[1].imag() == 0.0;
  if (real && std::abs(std::log(std::abs(l[0].real()))) > margin &&
      std::abs(std::log(std::abs(l[1].real()))) > margin) {
    rep.verdict = FloquetVerdict::hyperbolic;
  } else if (!real && std::abs(l[0].imag()) > margin) {
    rep.verdict = FloquetVerdict::elliptic;
  } else {
    rep.verdict = FloquetVerdict::parabolic;
  }
  return rep;
}

JacobiRecord jacobi_solve(const TorusMetric& model, const PhaseState& start, double tau, double w, int n_samples,
                          const StepControl& control) {
  if (tau == 0.0) throw std::invalid_argument("jacobi_solve: tau must be nonzero");
  const PhaseState unit = with_speed(model, start, 1.0);
  FlowOptions o;
  o.control = control;
  for (int i = 1; i <= n_samples; ++i) o.sample_times.push_back(tau * double(i) / n_samples);
  const Trajectory tr = integrate(model, unit, tau, o);

  // Vertical data (0, 1) must not return to J = 0 before tau.
  const double sgn = tau > 0 ? 1.0 : -1.0;
  for (const auto& s : tr.samples) {
    if (s.t != 0.0 && !(sgn * s.transfer.a12 > 0.0)) {
      throw ConjugatePointError(s.t, "jacobi_solve: conjugate point near t=" + std::to_string(s.t));
    }
  }
  const Mat2& end = tr.back().transfer;
  JacobiRecord rec;
  rec.tau = tau;
  rec.w = w;
  rec.initial_derivative = -end.a11 / end.a12 * w;
  for (const auto& s : tr.samples) {
    const Vec2 jd = s.transfer * Vec2{w, rec.initial_derivative};
    rec.samples.push_back({s.t, jd.x, jd.y});
  }
  rec.boundary_error = std::abs(rec.samples.back().value);
  return rec;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  out << "t,x,y,vx,vy,speed,m11,m12,m21,m22\n";
  out << std::setprecision(17);
  for (const auto& s : traj.samples) {
    out << s.t << ',' << s.state.position.x << ',' << s.state.position.y << ',' << s.state.velocity.x << ','
        << s.state.velocity.y << ',' << s.speed << ',' << s.transfer.a11 << ',' << s.transfer.a12 << ','
        << s.transfer.a21 << ',' << s.transfer.a22 << '\n';
  }
}

}  // namespace geolab
