#include "geolab/weak_kam.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>

namespace geolab {

namespace {

double wrap01(double s) { return s - std::floor(s); }

struct Cell {
  int i0, j0;
  double fx, fy;
};

Cell locate(int G, const Vec2& x) {
  const double sx = wrap01(x.x) * G, sy = wrap01(x.y) * G;
  int i0 = int(std::floor(sx)), j0 = int(std::floor(sy));
  const double fx = sx - i0, fy = sy - j0;
  return {i0 % G, j0 % G, fx, fy};
}

template <class F>
double bilinear(const Cell& c, F&& at) {
  return (1 - c.fx) * (1 - c.fy) * at(c.i0, c.j0) + c.fx * (1 - c.fy) * at(c.i0 + 1, c.j0) +
         (1 - c.fx) * c.fy * at(c.i0, c.j0 + 1) + c.fx * c.fy * at(c.i0 + 1, c.j0 + 1);
}

Vec2 node_gradient(const Subsolution& u, int i, int j) {
  const double s = 0.5 * u.G;
  return {s * (u.at(i + 1, j) - u.at(i - 1, j)), s * (u.at(i, j + 1) - u.at(i, j - 1))};
}

template <class Body>
void parallel_rows(int rows, int jobs, Body&& body) {
  jobs = std::max(1, std::min(jobs, rows));
  if (jobs == 1) {
    body(0, rows);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(std::size_t(jobs));
  for (int k = 0; k < jobs; ++k) {
    const int lo = rows * k / jobs, hi = rows * (k + 1) / jobs;
    pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  for (auto& t : pool) t.join();
}

double sup_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

Subsolution upsample(const Subsolution& coarse, int G) {
  Subsolution u;
  u.G = G;
  u.values.resize(std::size_t(G) * G);
  for (int j = 0; j < G; ++j)
    for (int i = 0; i < G; ++i) u.values[std::size_t(j) * G + i] = coarse.value({double(i) / G, double(j) / G});
  return u;
}

// Fine-sample data for the residual: exp(-rho), sigma_x and du at each point.
struct ResidualSample {
  std::vector<double> inv_factor;
  std::vector<Vec2> sigma;
  std::vector<Vec2> grad;
};

ResidualSample residual_sample(const TorusMetric& model, const CohomologyClass& sigma, const Subsolution& u,
                               int refine) {
  const int n = u.G * std::max(1, refine);
  ResidualSample s;
  s.inv_factor.reserve(std::size_t(n) * n);
  s.sigma.reserve(std::size_t(n) * n);
  s.grad.reserve(std::size_t(n) * n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const Vec2 x{double(i) / n, double(j) / n};
      s.inv_factor.push_back(std::exp(-model.exponent(x)));
      s.sigma.push_back({sigma.apply(x, {1, 0}), sigma.apply(x, {0, 1})});
      s.grad.push_back(u.gradient(x));
    }
  return s;
}

double max_residual(const ResidualSample& s, double lambda, double alpha) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < s.grad.size(); ++k)
    m = std::max(m, 0.5 * s.inv_factor[k] * norm2(lambda * s.grad[k] + s.sigma[k]) - alpha);
  return m;
}

}  // namespace

double Subsolution::value(const Vec2& x) const {
  return bilinear(locate(G, x), [this](int i, int j) { return at(i, j); });
}

Vec2 Subsolution::gradient(const Vec2& x) const {
  const Cell c = locate(G, x);
  return {bilinear(c, [this](int i, int j) { return node_gradient(*this, i, j).x; }),
          bilinear(c, [this](int i, int j) { return node_gradient(*this, i, j).y; })};
}

double hamiltonian(const TorusMetric& model, const CohomologyClass& sigma, const Vec2& x, const Vec2& p) {
  const Vec2 q = p + Vec2{sigma.apply(x, {1, 0}), sigma.apply(x, {0, 1})};
  return 0.5 * std::exp(-model.exponent(x)) * norm2(q);
}

double lagrangian(const TorusMetric& model, const CohomologyClass& sigma, const Vec2& x, const Vec2& v) {
  return 0.5 * model.factor(x) * norm2(v) - sigma.apply(x, v);
}

double lax_oleinik_time_step(int G, double alpha, int radius) {
  const double r = alpha > 0 ? std::sqrt(2.0 * alpha) : 0.5;
  return radius / (2.0 * r * G);
}

namespace {

// Stencil data for one grid: exp(rho) and sigma on the half-step lattice,
// padded by the radius so the sweep needs no wrapping.
class LaxOleinikKernel {
 public:
  LaxOleinikKernel(const TorusMetric& model, const CohomologyClass& sigma, int G, double alpha, double time_step,
                   const LaxOleinikOptions& opts)
      : G_(G), R_(opts.radius), jobs_(opts.jobs), alpha_(alpha), dt_(time_step) {
    if (!(time_step > 0)) throw std::invalid_argument("lax_oleinik_step: time step must be positive");
    if (R_ < 1) throw std::invalid_argument("lax_oleinik_step: stencil radius must be >= 1");
    const int G2 = 2 * G, W = G2 + 2 * R_;
    factor_.resize(std::size_t(W) * W);
    fx_.resize(factor_.size());
    fy_.resize(factor_.size());
    for (int j = 0; j < W; ++j)
      for (int i = 0; i < W; ++i) {
        const Vec2 x{double(i - R_) / G2, double(j - R_) / G2};
        const std::size_t k = std::size_t(j) * W + i;
        factor_[k] = model.factor(x);
        fx_[k] = sigma.apply(x, {1, 0});
        fy_[k] = sigma.apply(x, {0, 1});
      }
    for (int dy = -R_; dy <= R_; ++dy)
      for (int dx = -R_; dx <= R_; ++dx)
        if (dx * dx + dy * dy <= R_ * R_) stencil_.push_back({dx, dy});
  }

  void apply(const std::vector<double>& u, std::vector<double>& out) const {
    const int G = G_, R = R_, P = G + 2 * R, W = 2 * G + 2 * R;
    std::vector<double> pad(std::size_t(P) * P);
    for (int j = 0; j < P; ++j)
      for (int i = 0; i < P; ++i)
        pad[std::size_t(j) * P + i] = u[std::size_t(((j - R) % G + G) % G) * G + std::size_t(((i - R) % G + G) % G)];
    const double h = 1.0 / G;
    const double kinetic = 0.5 * h * h / dt_;
    out.assign(std::size_t(G) * G, std::numeric_limits<double>::infinity());
    parallel_rows(G, jobs_, [&](int j_lo, int j_hi) {
      for (const auto& [dx, dy] : stencil_) {
        const double k2 = kinetic * double(dx * dx + dy * dy);
        const double hx = h * dx, hy = h * dy;
        for (int j = j_lo; j < j_hi; ++j) {
          const double* up = &pad[std::size_t(j - dy + R) * P + std::size_t(R - dx)];
          const std::size_t m0 = std::size_t(2 * j - dy + R) * W + std::size_t(R - dx);
          const double* f = &factor_[m0];
          const double* sx = &fx_[m0];
          const double* sy = &fy_[m0];
          double* o = &out[std::size_t(j) * G];
          for (int i = 0; i < G; ++i) {
            const double c = up[i] + k2 * f[2 * i] - hx * sx[2 * i] - hy * sy[2 * i];
            o[i] = c < o[i] ? c : o[i];
          }
        }
      }
    });
    const double rest = alpha_ * dt_;
    for (double& v : out) v += rest;
  }

 private:
  int G_, R_, jobs_;
  double alpha_, dt_;
  std::vector<double> factor_, fx_, fy_;
  std::vector<std::pair<int, int>> stencil_;
};

}  // namespace

Subsolution lax_oleinik_step(const TorusMetric& model, const CohomologyClass& sigma, const Subsolution& u,
                             double alpha, double time_step, const LaxOleinikOptions& opts) {
  const LaxOleinikKernel kernel(model, sigma, u.G, alpha, time_step, opts);
  Subsolution out = u;
  kernel.apply(u.values, out.values);
  return out;
}

double subsolution_residual(const TorusMetric& model, const CohomologyClass& sigma, const Subsolution& u,
                            double alpha, int refine) {
  return max_residual(residual_sample(model, sigma, u, refine), 1.0, alpha);
}

namespace {

// Normalized value iteration on one grid, warm-started from u.
Subsolution iterate(const TorusMetric& model, const CohomologyClass& sigma, double alpha, Subsolution u, double tol,
                    int max_iters, const LaxOleinikOptions& stencil) {
  const LaxOleinikKernel kernel(model, sigma, u.G, alpha, lax_oleinik_time_step(u.G, alpha, stencil.radius),
                                stencil);
  u.converged = false;
  std::vector<double> next;
  for (int it = 1; it <= max_iters; ++it) {
    kernel.apply(u.values, next);
    const double pin = next[0];
    for (double& v : next) v -= pin;
    const double change = sup_diff(next, u.values);
    std::swap(u.values, next);
    u.iterations = it;
    u.last_change = change;
    if (change < tol) {
      u.converged = true;
      break;
    }
  }
  return u;
}

}  // namespace

Subsolution solve_subsolution(const TorusMetric& model, const CohomologyClass& sigma, double alpha, int grid_size,
                              double tol, int max_iters, const SubsolutionOptions& opts) {
  if (grid_size < 4) throw std::invalid_argument("solve_subsolution: grid size must be >= 4");
  if (alpha < 0) throw std::invalid_argument("solve_subsolution: alpha must be nonnegative");

  std::vector<int> grids{grid_size};
  for (int k = 0; k < opts.coarse_levels; ++k) {
    const int g = grids.back();
    if (g % 2 != 0 || g / 2 < 2 * opts.stencil.radius) break;
    grids.push_back(g / 2);
  }
  std::reverse(grids.begin(), grids.end());

  Subsolution u;
  u.G = grids.front();
  u.values.assign(std::size_t(u.G) * u.G, 0.0);
  int total = 0;
  for (std::size_t level = 0; level < grids.size(); ++level) {
    if (level > 0) u = upsample(u, grids[level]);
    u = iterate(model, sigma, alpha, std::move(u), tol, max_iters, opts.stencil);
    total += u.iterations;
  }
  u.iterations = total;
  u.alpha_used = alpha;
  if (!u.converged) u.note = "max_iters reached; sup change " + std::to_string(u.last_change);

  const ResidualSample sample = residual_sample(model, sigma, u, opts.refine);
  u.raw_residual = max_residual(sample, 1.0, alpha);
  u.C = std::max(0.0, u.raw_residual) / u.h();
  u.lambda = 1.0;
  u.residual = u.raw_residual;
  if (u.raw_residual > opts.residual_tol) {
    if (max_residual(sample, 0.0, alpha) <= opts.residual_tol) {
      // lambda -> residual is convex and passes at 0: bisect the crossing.
      double lo = 0.0, hi = 1.0;
      for (int k = 0; k < 60; ++k) {
        const double mid = 0.5 * (lo + hi);
        (max_residual(sample, mid, alpha) <= opts.residual_tol ? lo : hi) = mid;
      }
      u.lambda = lo;
      for (double& v : u.values) v *= lo;
      u.residual = max_residual(sample, lo, alpha);
    } else if (u.note.empty()) {
      u.note = "zero function is not a subsolution; residual left unscaled";
    }
  }
  return u;
}

double NonnegLagrangian::operator()(const Vec2& x, const Vec2& v) const {
  return lagrangian(model, sigma, x, v) - dot(u->gradient(x), v) + alpha;
}

double NonnegLagrangian::min_over_fiber(const Vec2& x) const {
  return alpha - hamiltonian(model, sigma, x, u->gradient(x));
}

NonnegLagrangian build_F(const TorusMetric& model, const CohomologyClass& sigma, const Subsolution& u, double alpha,
                         const ClosedGeodesic* minimal, FReport& report, const BuildFOptions& opts) {
  NonnegLagrangian F{model, sigma, std::make_shared<const Subsolution>(u), alpha};
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double vmax = 2.0 * std::sqrt(2.0 * std::max(alpha, 1e-3)) + 1.0;
  std::uniform_real_distribution<double> vel(-vmax, vmax);

  report = {};
  report.min_sampled = std::numeric_limits<double>::infinity();
  for (long k = 0; k < opts.samples; ++k) {
    const Vec2 x{unit(rng), unit(rng)};
    const Vec2 v{vel(rng), vel(rng)};
    report.min_sampled = std::min({report.min_sampled, F(x, v), F.min_over_fiber(x)});
    report.zero_section_error = std::max(report.zero_section_error, std::abs(F(x, {}) - alpha));
    report.samples += 2;
  }

  report.max_on_geodesic = std::numeric_limits<double>::quiet_NaN();
  if (minimal) {
    FlowOptions fo;
    fo.sample_dt = minimal->period / 512;
    const Trajectory traj = integrate(model, minimal->initial, minimal->period, fo);
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& s : traj.samples) m = std::max(m, F(s.state.position, s.state.velocity));
    report.max_on_geodesic = m;
  }

  if (report.min_sampled < -opts.tolerance) {
    throw std::runtime_error("build_F: min F = " + std::to_string(report.min_sampled) +
                             " below tolerance; u is not a subsolution at this resolution");
  }
  return F;
}

void write_subsolution(std::ostream& out, const Subsolution& u) {
  out.precision(17);
  out << u.G << '\n';
  for (int j = 0; j < u.G; ++j) {
    for (int i = 0; i < u.G; ++i) out << (i ? " " : "") << u.values[std::size_t(j) * u.G + i];
    out << '\n';
  }
}

Subsolution read_subsolution(std::istream& in) {
  Subsolution u;
  if (!(in >> u.G) || u.G < 1) throw std::runtime_error("read_subsolution: bad grid size");
  u.values.resize(std::size_t(u.G) * u.G);
  for (double& v : u.values)
    if (!(in >> v)) throw std::runtime_error("read_subsolution: truncated grid");
  return u;
}

}  // namespace geolab
