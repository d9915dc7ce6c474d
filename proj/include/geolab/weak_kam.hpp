#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "geolab/flow.hpp"
#include "geolab/loop_action.hpp"

namespace geolab {

/// Function on the regular G x G lattice x_ij = (i/G, j/G), row-major in j.
struct Subsolution {
  int G = 0;
  std::vector<double> values;
  double alpha_used = 0.0;
  /// max over the verification sample of H(x, du) - alpha for the stored values.
  double residual = 0.0;
  /// Same quantity before the scaling u -> lambda u.
  double raw_residual = 0.0;
  double lambda = 1.0;
  /// raw_residual / h: the constant in residual <= C h.
  double C = 0.0;
  bool converged = false;
  int iterations = 0;
  double last_change = 0.0;
  std::string note;

  double h() const { return 1.0 / G; }
  double at(int i, int j) const { return values[std::size_t(((j % G + G) % G) * G + ((i % G + G) % G))]; }
  /// Bilinear interpolation of the table.
  double value(const Vec2& x) const;
  /// Centered-difference gradient at the nodes, bilinearly interpolated.
  Vec2 gradient(const Vec2& x) const;
};

/// H(x, p) = (1/2) exp(-rho) |p + sigma_x|^2.
double hamiltonian(const TorusMetric& model, const CohomologyClass& sigma, const Vec2& x, const Vec2& p);
/// L(x, v) = (1/2) |v|_g^2 - sigma_x(v).
double lagrangian(const TorusMetric& model, const CohomologyClass& sigma, const Vec2& x, const Vec2& v);

struct LaxOleinikOptions {
  /// Stencil radius in grid cells; the time step is R h / (2 sqrt(2 alpha)).
  int radius = 8;
  int jobs = 1;
};

/// Time step for a given grid and alpha (alpha = 0 uses sqrt(2 alpha) -> 1/2).
double lax_oleinik_time_step(int G, double alpha, int radius);

/// u'(x) = min_y [u(y) + dt L(mid, (x - y)/dt) + alpha dt] over stencil nodes y.
Subsolution lax_oleinik_step(const TorusMetric& model, const CohomologyClass& sigma, const Subsolution& u,
                             double alpha, double time_step, const LaxOleinikOptions& opts = {});

struct SubsolutionOptions {
  LaxOleinikOptions stencil{};
  /// Coarse grids solved first and upsampled as warm starts.
  int coarse_levels = 2;
  /// Verification sample is refine x refine points per cell.
  int refine = 2;
  /// Accept residual <= this after scaling.
  double residual_tol = 0.0;
};

/// Iterates the normalized Lax-Oleinik map until the sup change is below
/// tol, then checks H(du) - alpha on the refined sample. When the raw
/// residual is positive and the zero function is a subsolution, the table is
/// scaled by the largest lambda in [0, 1] with nonpositive sampled residual
/// (the subsolution set is convex).
Subsolution solve_subsolution(const TorusMetric& model, const CohomologyClass& sigma, double alpha, int grid_size,
                              double tol, int max_iters, const SubsolutionOptions& opts = {});

/// Sampled max of H(x, du) - alpha.
double subsolution_residual(const TorusMetric& model, const CohomologyClass& sigma, const Subsolution& u,
                            double alpha, int refine);

struct NonnegLagrangian {
  TorusMetric model;
  CohomologyClass sigma;
  std::shared_ptr<const Subsolution> u;
  double alpha = 0.0;

  /// F(x, v) = (1/2)|v|_g^2 - sigma_x(v) - du(x) v + alpha.
  double operator()(const Vec2& x, const Vec2& v) const;
  /// min_v F(x, v) = alpha - H(x, du(x)).
  double min_over_fiber(const Vec2& x) const;
};

struct FReport {
  double min_sampled = 0.0;       // over random (x, v) and fiber minimizers
  double zero_section_error = 0.0;  // max |F(x, 0) - alpha|
  double max_on_geodesic = 0.0;   // max F(gamma'(t)); NaN without a geodesic
  long samples = 0;
};

struct BuildFOptions {
  long samples = 10000;
  unsigned long seed = 1;
  double tolerance = 1e-6;
};

/// Throws std::runtime_error when the sampled minimum is below -tolerance.
NonnegLagrangian build_F(const TorusMetric& model, const CohomologyClass& sigma, const Subsolution& u, double alpha,
                         const ClosedGeodesic* minimal, FReport& report, const BuildFOptions& opts = {});

/// Text export: G, then G^2 values row-major.
void write_subsolution(std::ostream& out, const Subsolution& u);
Subsolution read_subsolution(std::istream& in);

}  // namespace geolab
