#include "geolab/loop_action.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace geolab {

namespace {

std::vector<double> flatten(const Loop& loop) {
  std::vector<double> x;
  x.reserve(2 * loop.size());
  for (const Vec2& p : loop.nodes()) {
    x.push_back(p.x);
    x.push_back(p.y);
  }
  return x;
}

std::vector<Vec2> unflatten(const std::vector<double>& x) {
  std::vector<Vec2> nodes(x.size() / 2);
  for (std::size_t i = 0; i < nodes.size(); ++i) nodes[i] = {x[2 * i], x[2 * i + 1]};
  return nodes;
}

// E = N sum_i exp(rho(mid_i)) |d_i|^2 and its gradient in the node coordinates.
double energy_and_gradient(const TrigPoly2& rho, const std::vector<double>& x, const Vec2& wind,
                           std::vector<double>& g) {
  const std::size_t n = x.size() / 2;
  std::fill(g.begin(), g.end(), 0.0);
  double e = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + 1 < n ? i + 1 : 0;
    const Vec2 a{x[2 * i], x[2 * i + 1]};
    const Vec2 b = Vec2{x[2 * j], x[2 * j + 1]} + (j == 0 ? wind : Vec2{});
    const Vec2 d = b - a;
    Vec2 grad;
    const double f = std::exp(rho.value_grad(0.5 * (a + b), grad));
    const double d2 = norm2(d);
    e += f * d2;
    const Vec2 common = (0.5 * f * d2) * grad;
    const Vec2 stretch = (2.0 * f) * d;
    g[2 * i] += common.x - stretch.x;
    g[2 * i + 1] += common.y - stretch.y;
    g[2 * j] += common.x + stretch.x;
    g[2 * j + 1] += common.y + stretch.y;
  }
  const double scale = double(n);
  for (double& v : g) v *= scale;
  return scale * e;
}

double circulation(const CohomologyClass& sigma, const Loop& loop) {
  // The exact part telescopes around a closed loop.
  return sigma.pair(loop.winding());
}

}  // namespace

double loop_energy(const TorusMetric& model, const Loop& loop) {
  double e = 0.0;
  for (std::size_t i = 0; i < loop.size(); ++i) {
    const Vec2 a = loop.node(i), b = loop.node(i + 1);
    e += model.factor(0.5 * (a + b)) * norm2(b - a);
  }
  return double(loop.size()) * e;
}

double loop_length(const TorusMetric& model, const Loop& loop) {
  double l = 0.0;
  for (std::size_t i = 0; i < loop.size(); ++i) {
    const Vec2 a = loop.node(i), b = loop.node(i + 1);
    l += model.norm(0.5 * (a + b), b - a);
  }
  return l;
}

double loop_action(const TorusMetric& model, const CohomologyClass& sigma, const Loop& loop) {
  const double dt = loop.dt();
  double acc = 0.0;
  for (std::size_t i = 0; i < loop.size(); ++i) {
    const Vec2 a = loop.node(i), b = loop.node(i + 1);
    acc += 0.5 * model.factor(0.5 * (a + b)) * norm2(b - a) / dt - sigma.integrate_segment(a, b);
  }
  return acc / loop.period();
}

Loop reparametrize_constant_speed(const TorusMetric& model, const Loop& loop) {
  const std::size_t n = loop.size();
  std::vector<double> cum(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = loop.node(i), b = loop.node(i + 1);
    cum[i + 1] = cum[i] + model.norm(0.5 * (a + b), b - a);
  }
  const double total = cum[n];
  if (!(total > 0.0)) return loop;
  std::vector<Vec2> nodes(n);
  std::size_t seg = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double target = total * double(k) / double(n);
    while (seg + 1 < n && cum[seg + 1] <= target) ++seg;
    const double span = cum[seg + 1] - cum[seg];
    const double u = span > 0.0 ? (target - cum[seg]) / span : 0.0;
    nodes[k] = loop.node(seg) + u * (loop.node(seg + 1) - loop.node(seg));
  }
  return Loop(std::move(nodes), loop.period(), loop.winding());
}

Vec2 rotation_vector(const Loop& loop) { return loop.winding().vec() / loop.period(); }

namespace {

struct EnergyMin {
  std::vector<Vec2> nodes;
  double energy;
  LbfgsResult raw;
};

EnergyMin minimize_energy(const TorusMetric& model, const Loop& init, const MinimizeOptions& opts) {
  const Vec2 wind = init.winding().vec();
  const TrigPoly2& rho = model.conformal_exponent;
  LbfgsResult r = lbfgs(
      [&](const std::vector<double>& x, std::vector<double>& g) { return energy_and_gradient(rho, x, wind, g); },
      flatten(init), opts.lbfgs);
  EnergyMin out{unflatten(r.x), r.f, std::move(r)};
  return out;
}

}  // namespace

MinimizeResult minimize_in_class(const TorusMetric& model, const CohomologyClass& sigma, Winding winding,
                                 const Loop& init, const MinimizeOptions& opts) {
  if (!(init.winding() == winding)) throw std::invalid_argument("minimize_in_class: init has a different winding");
  const double s = sigma.pair(winding);
  if (!(s > 0.0)) throw std::invalid_argument("minimize_in_class: c . winding <= 0, class contributes 0 to alpha");
  EnergyMin em = minimize_energy(model, init, opts);
  const double tau = em.energy / s;
  MinimizeResult res(Loop(std::move(em.nodes), tau, winding));
  res.energy = em.energy;
  res.circulation = s;
  res.tau_star = tau;
  res.action = -s * s / (2 * em.energy);
  res.length = loop_length(model, res.loop);
  res.iterations = em.raw.iterations;
  res.grad_norm = em.raw.grad_norm;
  res.converged = em.raw.converged;
  if (!res.converged) res.diagnostic = "descent stopped: " + em.raw.status;
  for (double e : em.raw.history) res.history.push_back(-s * s / (2 * e));
  return res;
}

MinimizeResult minimize_fixed_period(const TorusMetric& model, const CohomologyClass& sigma, const Loop& init,
                                     const MinimizeOptions& opts) {
  const double tau = init.period();
  const double s = circulation(sigma, init);
  EnergyMin em = minimize_energy(model, init, opts);
  MinimizeResult res(Loop(std::move(em.nodes), tau, init.winding()));
  res.energy = em.energy;
  res.circulation = s;
  res.tau_star = s > 0 ? em.energy / s : std::numeric_limits<double>::infinity();
  res.action = em.energy / (2 * tau * tau) - s / tau;
  res.length = loop_length(model, res.loop);
  res.iterations = em.raw.iterations;
  res.grad_norm = em.raw.grad_norm;
  res.converged = em.raw.converged;
  if (!res.converged) res.diagnostic = "descent stopped: " + em.raw.status;
  for (double e : em.raw.history) res.history.push_back(e / (2 * tau * tau) - s / tau);
  return res;
}

double trig_lower_bound(const TrigPoly2& p) {
  double c0 = 0.0, rest = 0.0;
  for (const auto& [k, c] : p.coeffs()) {
    if (k.first == 0 && k.second == 0) {
      c0 += c;
    } else {
      rest += std::abs(c);
    }
  }
  return c0 - std::sqrt(2.0) * rest;
}

namespace {

struct ClassRun {
  double energy = std::numeric_limits<double>::infinity();
  std::optional<MinimizeResult> best;
};

ClassRun run_class(const TorusMetric& model, const CohomologyClass& sigma, Winding m, std::size_t class_index,
                   const AlphaOptions& opts) {
  const double len = norm(m.vec());
  const std::size_t n = std::max<std::size_t>(Loop::kMinNodes, std::size_t(std::ceil(opts.nodes_per_unit * len)));
  ClassRun out;
  for (int j = 0; j < std::max(1, opts.starts); ++j) {
    const double off = double(j) / std::max(1, opts.starts);
    const Vec2 origin = m.m1 != 0 ? Vec2{0.0, off} : Vec2{off, 0.0};
    Loop init = Loop::straight(origin, m, 1.0, n);
    if (opts.jitter > 0.0) {
      std::seed_seq seq{opts.seed, (unsigned long)class_index, (unsigned long)j};
      std::mt19937_64 rng(seq);
      std::normal_distribution<double> nd(0.0, opts.jitter);
      for (Vec2& p : init.mutable_nodes()) p += Vec2{nd(rng), nd(rng)};
    }
    MinimizeResult r = minimize_in_class(model, sigma, m, init, opts.minimize);
    if (r.energy < out.energy) {
      out.energy = r.energy;
      out.best = std::move(r);
    }
  }
  return out;
}

}  // namespace

AlphaResult alpha(const TorusMetric& model, const CohomologyClass& sigma, int winding_budget,
                  const AlphaOptions& opts) {
  if (winding_budget < 1) throw std::invalid_argument("alpha: winding budget must be >= 1");
  AlphaResult res;
  res.sigma = sigma;
  res.budget = winding_budget;
  const double shrink = std::exp(-trig_lower_bound(model.conformal_exponent));
  const Vec2 c = sigma.constant_part;

  for (int a = -winding_budget; a <= winding_budget; ++a) {
    for (int b = -winding_budget; b <= winding_budget; ++b) {
      if (std::gcd(a, b) != 1) continue;
      const Winding m{a, b};
      const double s = sigma.pair(m);
      if (!(s > 0.0)) continue;
      res.classes.push_back({m, s * s / (2 * norm2(m.vec())) * shrink, std::numeric_limits<double>::quiet_NaN(),
                             false});
    }
  }
  std::stable_sort(res.classes.begin(), res.classes.end(),
                   [](const ClassValue& x, const ClassValue& y) { return x.bound > y.bound; });

  const int jobs = std::max(1, opts.jobs);
  for (std::size_t i = 0; i < res.classes.size();) {
    // Batch of up to `jobs` unpruned classes, run concurrently.
    std::vector<std::size_t> batch;
    for (; i < res.classes.size() && int(batch.size()) < jobs; ++i) {
      if (res.classes[i].bound <= res.alpha) {
        res.classes[i].pruned = true;
        continue;
      }
      batch.push_back(i);
    }
    std::vector<std::future<ClassRun>> futs;
    std::vector<ClassRun> runs(batch.size());
    if (jobs > 1 && batch.size() > 1) {
      for (std::size_t k : batch)
        futs.push_back(std::async(std::launch::async, run_class, std::cref(model), std::cref(sigma),
                                  res.classes[k].winding, k, std::cref(opts)));
      for (std::size_t q = 0; q < batch.size(); ++q) runs[q] = futs[q].get();
    } else {
      for (std::size_t q = 0; q < batch.size(); ++q)
        runs[q] = run_class(model, sigma, res.classes[batch[q]].winding, batch[q], opts);
    }
    for (std::size_t q = 0; q < batch.size(); ++q) {
      ClassValue& cv = res.classes[batch[q]];
      const double s = sigma.pair(cv.winding);
      cv.value = s * s / (2 * runs[q].energy);
      if (cv.value > res.alpha) {
        res.alpha = cv.value;
        res.best_winding = cv.winding;
        res.minimal_loop = runs[q].best->loop;
      }
    }
  }
  if (res.minimal_loop) {
    res.speed = std::sqrt(2 * res.alpha);
    const bool best_on_boundary =
        std::max(std::abs(res.best_winding.m1), std::abs(res.best_winding.m2)) == winding_budget;
    // Classes outside the budget are bounded by |c|^2 / 2 times the shrink factor.
    const double outside = 0.5 * norm2(c) * shrink;
    res.budget_boundary_active = best_on_boundary || outside > res.alpha * (1 + 1e-9);
  }
  return res;
}

bool is_simple(const Loop& loop) {
  const std::size_t n = loop.size();
  struct Seg {
    Vec2 a, b;
  };
  std::vector<Seg> segs(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = loop.node(i), b = loop.node(i + 1);
    const Vec2 base{std::floor(a.x), std::floor(a.y)};
    segs[i] = {a - base, b - base};
  }
  auto orient = [](const Vec2& p, const Vec2& q, const Vec2& r) { return cross(q - p, r - p); };
  // Any contact between non-adjacent segments, with orientations at
  // rounding level treated as zero.
  auto touches = [&](const Seg& s, const Seg& t) {
    // Orientations are |u| times a perpendicular distance; resolve 1e-12.
    const double eps = 1e-12 * std::max(norm(s.b - s.a), norm(t.b - t.a));
    const double d1 = orient(s.a, s.b, t.a), d2 = orient(s.a, s.b, t.b);
    const double d3 = orient(t.a, t.b, s.a), d4 = orient(t.a, t.b, s.b);
    if (std::abs(d1) <= eps && std::abs(d2) <= eps) {
      const Vec2 u = s.b - s.a;
      const double l2 = norm2(u);
      const double p0 = dot(t.a - s.a, u) / l2, p1 = dot(t.b - s.a, u) / l2;
      return std::min(1.0, std::max(p0, p1)) - std::max(0.0, std::min(p0, p1)) >= -1e-12;
    }
    auto sgn = [eps](double d) { return std::abs(d) <= eps ? 0 : (d > 0 ? 1 : -1); };
    return sgn(d1) * sgn(d2) <= 0 && sgn(d3) * sgn(d4) <= 0;
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      for (int sx = -1; sx <= 1; ++sx) {
        for (int sy = -1; sy <= 1; ++sy) {
          const Vec2 sh{double(sx), double(sy)};
          if (touches(segs[i], {segs[j].a + sh, segs[j].b + sh})) return false;
        }
      }
    }
  }
  return true;
}

CarneiroReport carneiro_check(const TorusMetric& model, const AlphaResult& result, double tol) {
  if (!(result.alpha > 0.0) || !result.minimal_loop) throw std::invalid_argument("carneiro_check: alpha = 0, no minimal loop");
  const Loop& loop = *result.minimal_loop;
  CarneiroReport rep;
  rep.expected_speed = std::sqrt(2 * result.alpha);
  const double dt = loop.dt();
  for (std::size_t i = 0; i < loop.size(); ++i) {
    const Vec2 a = loop.node(i), b = loop.node(i + 1);
    const double sp = model.norm(0.5 * (a + b), b - a) / dt;
    rep.speed_error = std::max(rep.speed_error, std::abs(sp - rep.expected_speed));
  }
  rep.simple = is_simple(loop);
  rep.pass = rep.simple && rep.speed_error < tol;
  return rep;
}

namespace {

// Connecting geodesic from a to target in time dt by 2D Newton shooting.
bool shoot(const TorusMetric& model, const Vec2& a, const Vec2& target, double dt, const StepControl& ctl, Vec2& v) {
  v = (target - a) / dt;
  for (int it = 0; it < 30; ++it) {
    const Vec2 f = flow_to(model, {a, v}, dt, ctl).position - target;
    if (norm(f) < 1e-12) return true;
    const double h = 1e-7 * std::max(1.0, norm(v));
    Mat2 jac;
    for (int k = 0; k < 2; ++k) {
      Vec2 vp = v, vm = v;
      vp[k] += h;
      vm[k] -= h;
      const Vec2 col = (flow_to(model, {a, vp}, dt, ctl).position - flow_to(model, {a, vm}, dt, ctl).position) / (2 * h);
      if (k == 0) {
        jac.a11 = col.x;
        jac.a21 = col.y;
      } else {
        jac.a12 = col.x;
        jac.a22 = col.y;
      }
    }
    const double det = jac.det();
    if (std::abs(det) < 1e-300) return false;
    v -= Vec2{(jac.a22 * f.x - jac.a12 * f.y) / det, (-jac.a21 * f.x + jac.a11 * f.y) / det};
  }
  return norm(flow_to(model, {a, v}, dt, ctl).position - target) < 1e-10;
}

}  // namespace

ManeReport mane_closing(const TorusMetric& model, const CohomologyClass& sigma, const Trajectory& orbit,
                        const ManeOptions& opts) {
  ManeReport rep;
  rep.injectivity_proxy = 0.5 * std::exp(0.5 * trig_lower_bound(model.conformal_exponent));
  const auto& smp = orbit.samples;
  if (smp.size() < 3) {
    rep.diagnostic = "orbit too short";
    return rep;
  }
  const PhaseState start = smp.front().state;
  auto d2 = [&](const PhaseState& s) {
    return norm2(torus_delta(start.position, s.position)) + norm2(s.velocity - start.velocity);
  };
  const double tol2 = opts.recurrence_tol * opts.recurrence_tol;

  std::vector<std::pair<double, double>> recurrences;  // (time, distance)
  bool armed = false;
  for (std::size_t i = 1; i + 1 < smp.size(); ++i) {
    const double cur = d2(smp[i].state);
    if (cur > tol2) armed = true;
    if (!armed || cur >= tol2) continue;
    const double prev = d2(smp[i - 1].state), next = d2(smp[i + 1].state);
    if (!(cur <= prev && cur < next)) continue;
    // Parabolic refinement of the squared distance.
    const double t0 = smp[i - 1].t, t1 = smp[i].t, t2 = smp[i + 1].t;
    const double den = (t0 - t1) * (t0 - t2) * (t1 - t2);
    double t = t1;
    if (den != 0.0) {
      const double A = (t2 * (cur - prev) + t1 * (prev - next) + t0 * (next - cur)) / den;
      const double B = (t2 * t2 * (prev - cur) + t1 * t1 * (next - prev) + t0 * t0 * (cur - next)) / den;
      if (A > 0) t = std::clamp(-B / (2 * A), t0, t2);
    }
    recurrences.emplace_back(t, std::sqrt(cur));
    armed = false;
    if (int(recurrences.size()) >= opts.max_closings) break;
  }
  if (recurrences.empty()) {
    rep.diagnostic = "no recurrence within tolerance " + std::to_string(opts.recurrence_tol);
    return rep;
  }

  for (const auto& [tau, dist] : recurrences) {
    ManeClosing cl;
    cl.tau = tau;
    cl.phase_distance = dist;
    const double t_split = tau - opts.delta;
    if (!(t_split > 0.0)) {
      cl.note = "recurrence time below delta";
      rep.closings.push_back(cl);
      continue;
    }
    const PhaseState end = flow_to(model, start, tau, opts.control);
    const Vec2 disp = end.position - start.position;
    cl.winding = {int(std::lround(disp.x)), int(std::lround(disp.y))};
    const PhaseState split = flow_to(model, start, t_split, opts.control);
    const Vec2 target = start.position + cl.winding.vec();
    Vec2 v;
    if (!shoot(model, split.position, target, opts.delta, opts.control, v)) {
      cl.note = "connecting geodesic shooting failed";
      rep.closings.push_back(cl);
      continue;
    }
    cl.connector_length = opts.delta * model.norm(split.position, v);
    if (!(cl.connector_length < rep.injectivity_proxy)) {
      cl.note = "connecting geodesic longer than the injectivity proxy";
      rep.closings.push_back(cl);
      continue;
    }
    const std::size_t n =
        std::max<std::size_t>(Loop::kMinNodes, std::size_t(std::ceil(opts.nodes_per_unit_time * tau)));
    const double dt = tau / double(n);
    std::vector<Vec2> nodes(n);
    FlowOptions fa, fb;
    fa.control = fb.control = opts.control;
    std::vector<std::size_t> ia, ib;
    for (std::size_t k = 1; k < n; ++k) {
      const double t = k * dt;
      if (t <= t_split) {
        fa.sample_times.push_back(t);
        ia.push_back(k);
      } else {
        fb.sample_times.push_back(t - t_split);
        ib.push_back(k);
      }
    }
    nodes[0] = start.position;
    if (!ia.empty()) {
      const Trajectory ta = integrate(model, start, fa.sample_times.back(), fa);
      for (std::size_t q = 0; q < ia.size(); ++q) nodes[ia[q]] = ta.samples[q + 1].state.position;
    }
    if (!ib.empty()) {
      const Trajectory tb = integrate(model, {split.position, v}, fb.sample_times.back(), fb);
      for (std::size_t q = 0; q < ib.size(); ++q) nodes[ib[q]] = tb.samples[q + 1].state.position;
    }
    const Loop seed(std::move(nodes), tau, cl.winding);
    cl.seed_action = loop_action(model, sigma, seed);
    const MinimizeResult m = minimize_fixed_period(model, sigma, seed, opts.minimize);
    cl.minimized_action = m.action;
    cl.ok = true;
    if (!m.converged) cl.note = m.diagnostic;
    rep.closings.push_back(cl);
  }
  return rep;
}

void write_loop_csv(std::ostream& out, const Loop& loop) {
  char buf[96];
  out << "tau,m1,m2\n";
  std::snprintf(buf, sizeof buf, "%.17g,%d,%d\n", loop.period(), loop.winding().m1, loop.winding().m2);
  out << buf << "x,y\n";
  for (const Vec2& p : loop.nodes()) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", p.x, p.y);
    out << buf;
  }
}

Loop read_loop_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "tau,m1,m2") throw std::runtime_error("loop csv: bad header");
  double tau;
  int m1, m2;
  char c1, c2;
  if (!std::getline(in, line)) throw std::runtime_error("loop csv: missing period line");
  std::istringstream hs(line);
  if (!(hs >> tau >> c1 >> m1 >> c2 >> m2) || c1 != ',' || c2 != ',') throw std::runtime_error("loop csv: bad period line");
  if (!std::getline(in, line) || line != "x,y") throw std::runtime_error("loop csv: missing node header");
  std::vector<Vec2> nodes;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    Vec2 p;
    char c;
    if (!(ls >> p.x >> c >> p.y) || c != ',') throw std::runtime_error("loop csv: bad node line '" + line + "'");
    nodes.push_back(p);
  }
  return Loop(std::move(nodes), tau, {m1, m2});
}

void write_alpha_json(std::ostream& out, const AlphaResult& result) {
  nlohmann::json j;
  j["sigma"] = {result.sigma.constant_part.x, result.sigma.constant_part.y};
  j["alpha"] = result.alpha;
  j["best_winding"] = {result.best_winding.m1, result.best_winding.m2};
  j["speed"] = result.speed;
  j["budget"] = result.budget;
  j["budget_boundary_active"] = result.budget_boundary_active;
  if (result.minimal_loop) j["period"] = result.minimal_loop->period();
  auto& cls = j["classes"] = nlohmann::json::array();
  for (const auto& c : result.classes) {
    nlohmann::json e{{"winding", {c.winding.m1, c.winding.m2}}, {"bound", c.bound}, {"pruned", c.pruned}};
    if (!c.pruned && std::isfinite(c.value)) e["value"] = c.value;
    cls.push_back(e);
  }
  out << j.dump(2) << '\n';
}

}  // namespace geolab
