#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace geolab {

class IntegrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StepControl {
  double rtol = 1e-12;
  double atol = 1e-12;
  double initial_step = 1e-3;
  double max_step = 0.25;
  double min_step = 1e-14;
  long max_steps = 50'000'000;
};

template <std::size_t N>
using OdeState = std::array<double, N>;

template <std::size_t N>
struct OdeSample {
  double t;
  OdeState<N> y;
};

template <std::size_t N>
struct OdeRun {
  double t = 0.0;
  OdeState<N> y{};
  long accepted = 0;
  long rejected = 0;
  bool event_hit = false;
  std::vector<OdeSample<N>> samples;
};

template <std::size_t N>
struct OdeOptions {
  /// Monotone (in the integration direction) times at which the state is
  /// recorded exactly; steps are clipped to land on them.
  std::vector<double> output_times;
  /// Record every accepted step as well.
  bool record_steps = false;
  /// Terminal event g(t, y) = 0, approached with the sign of
  /// event_direction (+1: g increasing, -1: decreasing, 0: any).
  std::function<double(double, const OdeState<N>&)> event;
  int event_direction = 0;
  double event_tol = 1e-14;
};

/// Adaptive Dormand-Prince 5(4) integrator. Output times and terminal
/// events are hit exactly by re-stepping from the last accepted state, so
/// every reported state carries full one-step accuracy.
template <std::size_t N, class Rhs>
class DormandPrince {
 public:
  using State = OdeState<N>;

  DormandPrince(Rhs rhs, StepControl control) : rhs_(std::move(rhs)), ctl_(control) {}

  OdeRun<N> run(double t0, const State& y0, double t1, const OdeOptions<N>& opts = {}) const {
    OdeRun<N> out;
    out.t = t0;
    out.y = y0;
    if (t1 == t0) {
      for (double to : opts.output_times)
        if (to == t0) out.samples.push_back({t0, y0});
      return out;
    }
    const double dir = t1 > t0 ? 1.0 : -1.0;
    double t = t0;
    State y = y0;
    State f;
    rhs_(t, y, f);
    double h_next = std::min(ctl_.initial_step, std::abs(t1 - t0));
    std::size_t next_out = 0;
    while (next_out < opts.output_times.size() && dir * (opts.output_times[next_out] - t0) < 0) ++next_out;
    if (next_out < opts.output_times.size() && opts.output_times[next_out] == t0) {
      out.samples.push_back({t0, y0});
      ++next_out;
    }
    double g_prev = opts.event ? opts.event(t, y) : 0.0;

    State y_new, f_new;
    while (dir * (t1 - t) > 0) {
      if (out.accepted + out.rejected > ctl_.max_steps) {
        throw IntegrationError("integrator: step budget exhausted at t=" + std::to_string(t));
      }
      double target = t1;
      bool to_output = false;
      if (next_out < opts.output_times.size() && dir * (opts.output_times[next_out] - t1) < 0) {
        target = opts.output_times[next_out];
        to_output = true;
      }
      double h = std::min({h_next, ctl_.max_step, std::abs(target - t)});
      bool lands = std::abs(target - t) - h <= 1e-14 * std::max(1.0, std::abs(t));
      if (lands) h = std::abs(target - t);

      const double err = step(t, y, f, dir * h, y_new, f_new);
      if (!(err <= 1.0)) {
        ++out.rejected;
        const double fac = std::isfinite(err) ? std::max(0.2, 0.9 * std::pow(err, -0.2)) : 0.2;
        h_next = h * fac;
        if (h_next < ctl_.min_step) {
          throw IntegrationError("integrator: step size underflow at t=" + std::to_string(t) +
                                 " (tolerance unreachable)");
        }
        continue;
      }
      ++out.accepted;
      const double t_new = lands ? target : t + dir * h;

      if (opts.event) {
        const double g_new = opts.event(t_new, y_new);
        const bool crossed = (g_prev < 0 && g_new >= 0 && opts.event_direction >= 0) ||
                             (g_prev > 0 && g_new <= 0 && opts.event_direction <= 0);
        if (crossed) {
          locate_event(t, y, f, dir * h, g_prev, g_new, opts, out);
          return out;
        }
        g_prev = g_new;
      }

      t = t_new;
      y = y_new;
      f = f_new;
      if (lands && to_output) {
        out.samples.push_back({t, y});
        ++next_out;
      } else if (opts.record_steps) {
        out.samples.push_back({t, y});
      }
      const double fac = err > 0 ? std::min(5.0, std::max(0.2, 0.9 * std::pow(err, -0.2))) : 5.0;
      // A clipped landing step says nothing about the attainable size.
      if (!lands || h >= h_next) h_next = h * fac;
    }
    out.t = t;
    out.y = y;
    return out;
  }

  /// One explicit step of size h from (t, y) with f = rhs(t, y); returns the
  /// scaled error norm.
  double step(double t, const State& y, const State& f, double h, State& y_new, State& f_new) const {
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                            a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                            b6 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                            e6 = 22.0 / 525, e7 = -1.0 / 40;
    State k2, k3, k4, k5, k6, tmp;
    for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + h * a21 * f[i];
    rhs_(t + c2 * h, tmp, k2);
    for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + h * (a31 * f[i] + a32 * k2[i]);
    rhs_(t + c3 * h, tmp, k3);
    for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + h * (a41 * f[i] + a42 * k2[i] + a43 * k3[i]);
    rhs_(t + c4 * h, tmp, k4);
    for (std::size_t i = 0; i < N; ++i)
      tmp[i] = y[i] + h * (a51 * f[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
    rhs_(t + c5 * h, tmp, k5);
    for (std::size_t i = 0; i < N; ++i)
      tmp[i] = y[i] + h * (a61 * f[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
    rhs_(t + h, tmp, k6);
    for (std::size_t i = 0; i < N; ++i)
      y_new[i] = y[i] + h * (b1 * f[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
    rhs_(t + h, y_new, f_new);
    double acc = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      const double e = h * (e1 * f[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * f_new[i]);
      const double sc = ctl_.atol + ctl_.rtol * std::max(std::abs(y[i]), std::abs(y_new[i]));
      acc += (e / sc) * (e / sc);
    }
    return std::sqrt(acc / N);
  }

  const Rhs& rhs() const { return rhs_; }

 private:
  // Illinois iteration on the step size h' in (0, h]; each trial re-steps
  // from the accepted state (t, y).
  void locate_event(double t, const State& y, const State& f, double h, double g_lo, double g_hi,
                    const OdeOptions<N>& opts, OdeRun<N>& out) const {
    double a = 0.0, b = h;
    double ga = g_lo, gb = g_hi;
    State ys, fs;
    double hs = b;
    int side = 0;
    for (int it = 0; it < 200; ++it) {
      hs = (a * gb - b * ga) / (gb - ga);
      if (!(std::min(a, b) < hs && hs < std::max(a, b))) hs = 0.5 * (a + b);
      step(t, y, f, hs, ys, fs);
      const double gs = opts.event(t + hs, ys);
      if (std::abs(gs) <= opts.event_tol || std::abs(b - a) <= 1e-15 * std::max(1.0, std::abs(t))) break;
      if ((gs < 0) == (ga < 0)) {
        a = hs;
        ga = gs;
        if (side == -1) gb *= 0.5;
        side = -1;
      } else {
        b = hs;
        gb = gs;
        if (side == +1) ga *= 0.5;
        side = +1;
      }
    }
    out.t = t + hs;
    out.y = ys;
    out.event_hit = true;
    if (opts.record_steps) out.samples.push_back({out.t, out.y});
  }

  Rhs rhs_;
  StepControl ctl_;
};

template <std::size_t N, class Rhs>
DormandPrince<N, Rhs> make_dopri(Rhs rhs, StepControl control) {
  return DormandPrince<N, Rhs>(std::move(rhs), control);
}

}  // namespace geolab
