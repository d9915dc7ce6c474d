#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "geolab/flow.hpp"

namespace geolab {

/// In dimension 2 the orthogonal complement of the velocity is a line, so
/// every endomorphism of it is the scalar A in the parallel unit normal.
struct GreenSample {
  double t;
  double A;
};

struct GreenOptions {
  StepControl control{};
  /// Grid t_i = t_min * ratio^i (and its negative) up to t_max.
  double t_min = 0.125;
  double ratio = 2.0;
};

struct GreenRecord {
  ClosedGeodesic geodesic;
  /// Sorted by t; both signs.
  std::vector<GreenSample> samples;
  double A_plus = 0.0;
  double A_minus = 0.0;
  double eberlein_gap = 0.0;  // A_minus - A_plus
  /// Certified squeeze A_{t_max} <= A_+ <= A_- <= A_{-t_max}.
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
  /// Last change of the extrapolated limits along the grid.
  double tail_plus = 0.0;
  double tail_minus = 0.0;
  /// |extrapolated - last raw value|.
  double discrepancy_plus = 0.0;
  double discrepancy_minus = 0.0;
  double t_max = 0.0;
  double tol = 0.0;
  bool converged = false;
  std::string diagnostic;
};

/// A_t = J'(0) for the unit-speed Jacobi field with J(0) = 1, J(t) = 0.
/// Throws ConjugatePointError, and std::invalid_argument for |t| < 1e-3.
double green_endomorphism(const TorusMetric& model, const ClosedGeodesic& gamma, double t,
                          const StepControl& control = {});

/// Throws ConjugatePointError when the vertical solution vanishes on
/// [-t_max, t_max]. Non-convergence is reported in the record.
GreenRecord green_limits(const TorusMetric& model, const ClosedGeodesic& gamma, double t_max, double tol,
                         const GreenOptions& opts = {});

/// Sampled monotonicity: A_t nondecreasing on t > 0 and on t < 0, and
/// A_t <= A_{-s} for s, t > 0. Returns the worst violation (<= 0 when holds).
double monotonicity_violation(const GreenRecord& record);

struct EberleinResult {
  bool hyperbolic = false;
  double gap = 0.0;
  double margin = 0.0;
  FloquetVerdict floquet = FloquetVerdict::parabolic;
  bool agrees_with_floquet = false;
};

/// Rejects unconverged records. The Floquet cross-check applies the same
/// margin to |log|lambda||.
EberleinResult eberlein_test(const GreenRecord& record, double margin);

/// Orthogonal field along a unit-speed arc, in the parallel unit normal:
/// Y = jacobi part (if any) + explicit part.
struct OrthogonalField {
  std::string description;
  std::function<double(double)> value;       // explicit normal component (empty: 0)
  std::function<double(double)> derivative;  // its s-derivative
  std::function<double(double)> tangential;  // component along the velocity (empty: 0)
  std::optional<Vec2> jacobi;                // (J(0), J'(0)) of a Jacobi summand

  static OrthogonalField jacobi_field(double j0, double dj0);
  static OrthogonalField explicit_field(std::string description, std::function<double(double)> value,
                                        std::function<double(double)> derivative);
};

struct IndexFormReport {
  double tau = 0.0;
  std::string field_description;
  double value = 0.0;
  /// J(tau) J'(tau) - J(0) J'(0); set only for pure Jacobi fields.
  std::optional<double> boundary_term;
};

struct IndexFormOptions {
  int panels = 32;
  int order = 8;
  StepControl control{};
  double orthogonality_tol = 1e-12;
};

/// h_tau(Y) = int_0^tau (Y'^2 - K Y^2) ds along the unit-speed geodesic
/// from start. Rejects fields with a tangential component.
IndexFormReport index_form(const TorusMetric& model, const PhaseState& start, const OrthogonalField& field,
                           double tau, const IndexFormOptions& opts = {});

struct ComparisonReport {
  double tau = 0.0;
  double w = 0.0;
  double delta = 0.0;  // min over gamma of (1/2) d^2 rho[n, n] / |n|_g^2
  double A_tau = 0.0;
  double A_tilde_tau = 0.0;
  /// int_0^1 of the squared tilde-Jacobi field ~J_{tau,w}.
  double tilde_jacobi_l2 = 0.0;
  /// Same integral for the g-Jacobi field J_{tau,w}.
  double jacobi_l2 = 0.0;
  /// (A_tau - ~A_tau) w^2 - delta * tilde_jacobi_l2; certified >= 0.
  double margin = 0.0;
  /// The same with jacobi_l2 in place of tilde_jacobi_l2; not implied by
  /// the index-form argument and may be negative.
  double margin_untilded = 0.0;

  double A_plus = 0.0, A_tilde_plus = 0.0, A_minus = 0.0, A_tilde_minus = 0.0;
  /// Measured A_+ - ~A_+.
  double eps_prime = 0.0;
  /// delta * int_0^1 ~J_w^2 with ~J_w(0) = 1, ~J_w'(0) = ~A_+.
  double eps_prime_bound = 0.0;
  /// ~A_- - A_-.
  double minus_margin = 0.0;
  bool pass = false;
};

struct ComparisonOptions {
  double t_max = 64.0;
  double limit_tol = 1e-9;
  StepControl control{};
};

/// g_tilde must equal exp(rho) g with rho, d rho vanishing on gamma (checked).
ComparisonReport conformal_comparison(const TorusMetric& g, const TorusMetric& g_tilde, const ClosedGeodesic& gamma,
                                      double tau, double w, const ComparisonOptions& opts = {});

void write_green_json(std::ostream& out, const GreenRecord& record);

}  // namespace geolab
