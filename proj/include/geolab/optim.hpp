#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>
#include <vector>

namespace geolab {

struct LbfgsOptions {
  int memory = 12;
  int max_iterations = 20000;
  /// Stop when the max-norm of the gradient falls below this.
  double grad_tol = 1e-7;
  /// Stop (unconverged) when the objective has not decreased by more than
  /// stall_rel * |f| over stall_window accepted steps.
  int stall_window = 50;
  double stall_rel = 1e-15;
  double armijo = 1e-4;
  int max_backtracks = 60;
};

struct LbfgsResult {
  std::vector<double> x;
  double f = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string status;
  /// Objective after every accepted step; nonincreasing by construction.
  std::vector<double> history;
};

/// Limited-memory BFGS with a monotone Armijo backtracking line search.
/// fg(x, grad) returns f(x) and fills grad.
template <class FG>
LbfgsResult lbfgs(FG&& fg, std::vector<double> x, const LbfgsOptions& opts = {}) {
  const std::size_t n = x.size();
  auto dot = [n](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
  };
  auto inf_norm = [](const std::vector<double>& a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
  };
  struct Pair {
    std::vector<double> s, y;
    double rho;
  };
  std::deque<Pair> mem;
  std::vector<double> g(n), d(n), xn(n), gn(n), alpha_buf;

  LbfgsResult res;
  double f = fg(x, g);
  res.history.push_back(f);
  for (int it = 0; it < opts.max_iterations; ++it) {
    res.iterations = it;
    const double gnorm = inf_norm(g);
    if (gnorm < opts.grad_tol) {
      res.converged = true;
      res.status = "converged";
      break;
    }
    // Two-loop recursion.
    d = g;
    alpha_buf.assign(mem.size(), 0.0);
    for (std::size_t k = mem.size(); k-- > 0;) {
      alpha_buf[k] = mem[k].rho * dot(mem[k].s, d);
      for (std::size_t i = 0; i < n; ++i) d[i] -= alpha_buf[k] * mem[k].y[i];
    }
    double h0 = 1.0;
    if (!mem.empty()) h0 = dot(mem.back().s, mem.back().y) / dot(mem.back().y, mem.back().y);
    for (double& v : d) v *= h0;
    for (std::size_t k = 0; k < mem.size(); ++k) {
      const double beta = mem[k].rho * dot(mem[k].y, d);
      for (std::size_t i = 0; i < n; ++i) d[i] += (alpha_buf[k] - beta) * mem[k].s[i];
    }
    for (double& v : d) v = -v;
    double slope = dot(g, d);
    if (!(slope < 0.0)) {
      mem.clear();
      for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
      slope = dot(g, d);
    }
    double step = mem.empty() ? std::min(1.0, 1.0 / std::max(gnorm, 1e-300)) : 1.0;
    bool accepted = false;
    double fn = f;
    for (int b = 0; b < opts.max_backtracks; ++b) {
      for (std::size_t i = 0; i < n; ++i) xn[i] = x[i] + step * d[i];
      fn = fg(xn, gn);
      if (std::isfinite(fn) && fn <= f + opts.armijo * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (!mem.empty()) {
        mem.clear();
        continue;
      }
      res.status = "line search stagnation";
      break;
    }
    Pair p{std::vector<double>(n), std::vector<double>(n), 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      p.s[i] = xn[i] - x[i];
      p.y[i] = gn[i] - g[i];
    }
    const double sy = dot(p.s, p.y);
    if (sy > 1e-300) {
      p.rho = 1.0 / sy;
      mem.push_back(std::move(p));
      if (int(mem.size()) > opts.memory) mem.pop_front();
    }
    x.swap(xn);
    g.swap(gn);
    f = fn;
    res.history.push_back(f);
    const std::size_t h = res.history.size();
    if (int(h) > opts.stall_window &&
        res.history[h - 1 - opts.stall_window] - f <= opts.stall_rel * std::abs(f)) {
      res.status = "stalled at rounding level";
      break;
    }
  }
  if (res.status.empty()) res.status = "iteration limit";
  res.x = std::move(x);
  res.f = f;
  res.grad_norm = inf_norm(g);
  return res;
}

}  // namespace geolab
