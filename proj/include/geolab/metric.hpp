#pragma once

#include <array>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "geolab/trig_poly.hpp"
#include "geolab/vec2.hpp"

namespace geolab {

/// Conformally flat metric g = exp(rho) * delta on [0,1)^2.
struct TorusMetric {
  int dim = 2;
  TrigPoly2 conformal_exponent;
  std::string label;

  static TorusMetric flat() { return {2, {}, "flat"}; }
  /// exp(extra) times this metric.
  TorusMetric conformal(const TrigPoly2& extra, std::string new_label) const {
    return {dim, conformal_exponent + extra, std::move(new_label)};
  }

  double exponent(const Vec2& p) const { return conformal_exponent.value(p); }
  double factor(const Vec2& p) const { return std::exp(exponent(p)); }
  double norm(const Vec2& p, const Vec2& v) const { return std::exp(0.5 * exponent(p)) * geolab::norm(v); }
};

/// g(x) together with its coordinate derivatives. Since g = f * I, the
/// derivatives of the scalar factor f = exp(rho) carry everything.
struct MetricJet {
  double factor = 1.0;
  Vec2 dfactor;
  Mat2 d2factor;

  Mat2 matrix() const { return Mat2::identity() * factor; }
  /// d g / d x^i.
  Mat2 derivative(int i) const { return Mat2::identity() * dfactor[i]; }
  /// d^2 g / d x^i d x^j.
  Mat2 second_derivative(int i, int j) const { return Mat2::identity() * d2factor(i, j); }
};

MetricJet metric_eval(const TorusMetric& model, const Vec2& p);

/// Gamma^k_ij, indexed as symbols[k](i, j).
using Christoffel = std::array<Mat2, 2>;
Christoffel christoffel_eval(const TorusMetric& model, const Vec2& p);

/// Gauss curvature K = -exp(-rho) * Laplacian(rho / 2).
double gauss_curvature(const TorusMetric& model, const Vec2& p);

/// Conformal bump rho(x,y) = epsilon (1 - cos 2 pi y)(1 + beta cos 2 pi x),
/// vanishing to second order on the horizontal geodesic y = 0.
struct BumpSpec {
  double epsilon = 0.01;
  double beta = 0.0;
  /// The target geodesic is the horizontal line y = axis_offset, winding (1,0).
  double axis_offset = 0.0;
};

/// The bump exponent without the positivity checks.
TrigPoly2 bump_exponent(const BumpSpec& spec);
/// Validated bump; rejects epsilon <= 0 or |beta| >= 1.
TrigPoly2 build_conformal_bump(const BumpSpec& spec);

/// Closed curve sampled as lifted nodes, used when checking the bump
/// hypotheses; node n = node 0 + winding is implied.
struct CurveSample {
  std::vector<Vec2> nodes;
  Winding winding;
};

struct BumpReport {
  bool pass = false;
  std::string violated;  // empty when pass
  double max_abs_rho_on_curve = 0.0;
  double max_grad_on_curve = 0.0;
  /// min over the curve of d^2 rho[n, n] for the unit Euclidean normal n.
  double min_transverse_hessian = 0.0;
  double max_transverse_hessian = 0.0;
  /// min of rho over samples at Euclidean distance >= tube_radius from the curve.
  double min_rho_off_tube = 0.0;
  double tube_radius = 0.0;
};

struct BumpCheckOptions {
  double zero_tol = 1e-10;
  double tube_radius = 0.05;
  int grid = 64;
};

BumpReport verify_bump_hypotheses(const TorusMetric& model, const TrigPoly2& rho, const CurveSample& gamma,
                                  int n_samples, const BumpCheckOptions& opts = {});

/// Straight horizontal or vertical test curves.
CurveSample straight_curve(const Vec2& origin, Winding winding, int n_nodes);

/// Model file I/O. Format:
///
///   geolab-metric 1
///   dim 2
///   basis cas
///   label <text>
///   terms <n>
///   <k1> <k2> <coefficient>      (n lines, coefficients as %.17g)
void write_model(std::ostream& out, const TorusMetric& model);
TorusMetric read_model(std::istream& in);
TorusMetric load_model(const std::string& path);
void save_model(const std::string& path, const TorusMetric& model);

}  // namespace geolab
