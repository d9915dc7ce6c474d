#include "geolab/metric.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace geolab {

MetricJet metric_eval(const TorusMetric& model, const Vec2& p) {
  const Jet2 r = model.conformal_exponent.jet(p);
  const double f = std::exp(r.value);
  MetricJet j;
  j.factor = f;
  j.dfactor = f * r.grad;
  j.d2factor = {f * (r.hess.a11 + r.grad.x * r.grad.x), f * (r.hess.a12 + r.grad.x * r.grad.y),
                f * (r.hess.a21 + r.grad.y * r.grad.x), f * (r.hess.a22 + r.grad.y * r.grad.y)};
  return j;
}

Christoffel christoffel_eval(const TorusMetric& model, const Vec2& p) {
  const Vec2 d = model.conformal_exponent.gradient(p);
  Christoffel g;
  for (int k = 0; k < 2; ++k) {
    double s[2][2];
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        s[i][j] = 0.5 * ((k == i ? d[j] : 0.0) + (k == j ? d[i] : 0.0) - (i == j ? d[k] : 0.0));
      }
    }
    g[k] = {s[0][0], s[0][1], s[1][0], s[1][1]};
  }
  return g;
}

double gauss_curvature(const TorusMetric& model, const Vec2& p) {
  if (model.dim != 2) throw std::invalid_argument("gauss_curvature: only dimension 2 is supported");
  const Jet2 r = model.conformal_exponent.jet(p);
  return -std::exp(-r.value) * 0.5 * r.hess.trace();
}

TrigPoly2 bump_exponent(const BumpSpec& spec) {
  // (1 - cos 2 pi (y - y0)) (1 + beta cos 2 pi x), expanded exactly.
  const double c0 = std::cos(kTwoPi * spec.axis_offset);
  const double s0 = std::sin(kTwoPi * spec.axis_offset);
  const TrigPoly2 transverse = TrigPoly2::constant(1.0) - TrigPoly2::cos_sin(0, 1, c0, s0);
  const TrigPoly2 longitudinal = TrigPoly2::constant(1.0) + TrigPoly2::cos_sin(1, 0, spec.beta, 0.0);
  return (transverse * longitudinal) * spec.epsilon;
}

TrigPoly2 build_conformal_bump(const BumpSpec& spec) {
  if (!(spec.epsilon > 0.0)) throw std::invalid_argument("bump: epsilon must be positive");
  if (!(std::abs(spec.beta) < 1.0)) {
    throw std::invalid_argument("bump: |beta| must be < 1, otherwise rho vanishes off the geodesic");
  }
  return bump_exponent(spec);
}

CurveSample straight_curve(const Vec2& origin, Winding winding, int n_nodes) {
  CurveSample c;
  c.winding = winding;
  c.nodes.reserve(n_nodes);
  for (int i = 0; i < n_nodes; ++i) c.nodes.push_back(origin + (double(i) / n_nodes) * winding.vec());
  return c;
}

BumpReport verify_bump_hypotheses(const TorusMetric& model, const TrigPoly2& rho, const CurveSample& gamma,
                                  int n_samples, const BumpCheckOptions& opts) {
  if (gamma.nodes.size() < 2) throw std::invalid_argument("verify_bump_hypotheses: curve needs >= 2 nodes");
  BumpReport rep;
  rep.tube_radius = opts.tube_radius;
  rep.min_transverse_hessian = std::numeric_limits<double>::infinity();
  rep.max_transverse_hessian = -std::numeric_limits<double>::infinity();

  const std::size_t n = gamma.nodes.size();
  auto node = [&](std::size_t i) {
    return i < n ? gamma.nodes[i] : gamma.nodes[i - n] + gamma.winding.vec();
  };
  // Dense samples along the piecewise linear curve.
  const int per_seg = std::max(1, n_samples / int(n));
  std::vector<Vec2> on_curve;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = node(i), b = node(i + 1);
    const Vec2 tangent = b - a;
    const double len = geolab::norm(tangent);
    if (len == 0.0) throw std::invalid_argument("verify_bump_hypotheses: repeated node");
    const Vec2 normal{-tangent.y / len, tangent.x / len};
    for (int s = 0; s < per_seg; ++s) {
      const Vec2 p = a + (double(s) / per_seg) * tangent;
      on_curve.push_back(p);
      const Jet2 j = rho.jet(p);
      // g-unit normal of the unperturbed metric.
      const Vec2 nu = normal * std::exp(-0.5 * model.exponent(p));
      const double h = dot(nu, j.hess * nu);
      rep.max_abs_rho_on_curve = std::max(rep.max_abs_rho_on_curve, std::abs(j.value));
      rep.max_grad_on_curve = std::max(rep.max_grad_on_curve, geolab::norm(j.grad));
      rep.min_transverse_hessian = std::min(rep.min_transverse_hessian, h);
      rep.max_transverse_hessian = std::max(rep.max_transverse_hessian, h);
    }
  }

  // Complement: grid points farther than the tube radius from every curve sample.
  rep.min_rho_off_tube = std::numeric_limits<double>::infinity();
  double min_rho_everywhere = std::numeric_limits<double>::infinity();
  const double r2 = opts.tube_radius * opts.tube_radius;
  for (int i = 0; i < opts.grid; ++i) {
    for (int j = 0; j < opts.grid; ++j) {
      const Vec2 p{(i + 0.5) / opts.grid, (j + 0.5) / opts.grid};
      const double v = rho.value(p);
      min_rho_everywhere = std::min(min_rho_everywhere, v);
      bool inside = false;
      for (const Vec2& q : on_curve) {
        if (norm2(torus_delta(q, p)) < r2) {
          inside = true;
          break;
        }
      }
      if (!inside) rep.min_rho_off_tube = std::min(rep.min_rho_off_tube, v);
    }
  }

  const double tol = opts.zero_tol;
  if (rep.max_abs_rho_on_curve > tol) {
    rep.violated = "rho not zero on gamma";
  } else if (rep.max_grad_on_curve > tol) {
    rep.violated = "d rho not zero on gamma";
  } else if (!(rep.min_transverse_hessian > tol)) {
    rep.violated = "transverse Hessian not positive on gamma";
  } else if (min_rho_everywhere < -tol) {
    rep.violated = "rho negative somewhere";
  } else if (!(rep.min_rho_off_tube > tol)) {
    rep.violated = "rho not positive off gamma";
  }
  rep.pass = rep.violated.empty();
  return rep;
}

void write_model(std::ostream& out, const TorusMetric& model) {
  out << "geolab-metric 1\n";
  out << "dim " << model.dim << "\n";
  out << "basis cas\n";
  out << "label " << model.label << "\n";
  const auto& c = model.conformal_exponent.coeffs();
  out << "terms " << c.size() << "\n";
  for (const auto& [k, v] : c) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << k.first << ' ' << k.second << ' ' << buf << "\n";
  }
}

namespace {

std::string expect_key(std::istream& in, const std::string& key) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string k;
    ls >> k;
    if (k != key) throw std::runtime_error("model file: expected '" + key + "', got '" + k + "'");
    std::string rest;
    std::getline(ls >> std::ws, rest);
    return rest;
  }
  throw std::runtime_error("model file: missing '" + key + "'");
}

}  // namespace

TorusMetric read_model(std::istream& in) {
  if (expect_key(in, "geolab-metric") != "1") throw std::runtime_error("model file: unsupported version");
  TorusMetric m;
  m.dim = std::stoi(expect_key(in, "dim"));
  if (m.dim != 2) throw std::runtime_error("model file: only dim 2 is supported");
  if (expect_key(in, "basis") != "cas") throw std::runtime_error("model file: unsupported basis convention");
  m.label = expect_key(in, "label");
  const int n = std::stoi(expect_key(in, "terms"));
  std::map<TrigPoly2::Frequency, double> coeffs;
  for (int i = 0; i < n; ++i) {
    int k1, k2;
    std::string value;
    if (!(in >> k1 >> k2 >> value)) throw std::runtime_error("model file: truncated term list");
    coeffs[{k1, k2}] = std::strtod(value.c_str(), nullptr);
  }
  m.conformal_exponent = TrigPoly2(std::move(coeffs));
  return m;
}

TorusMetric load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model file " + path);
  return read_model(in);
}

void save_model(const std::string& path, const TorusMetric& model) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model file " + path);
  write_model(out, model);
}

}  // namespace geolab
