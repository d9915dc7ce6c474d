#pragma once

#include <array>
#include <complex>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "geolab/loop.hpp"
#include "geolab/metric.hpp"
#include "geolab/ode.hpp"

namespace geolab {

/// Point of the tangent bundle. Positions stay lifted to the plane so that
/// windings can be read off displacements; reduce mod 1 for display only.
struct PhaseState {
  Vec2 position;
  Vec2 velocity;
};

struct TrajectorySample {
  double t = 0.0;
  PhaseState state;
  /// Linearized flow on orthogonal Jacobi fields in the parallel unit-normal
  /// frame: (J(t), J'(t)) = transfer * (J(0), J'(0)).
  Mat2 transfer = Mat2::identity();
  double speed = 0.0;  // g-speed
};

struct Trajectory {
  std::vector<TrajectorySample> samples;
  /// max |speed(t) - speed(0)| over the samples.
  double energy_drift = 0.0;
  /// Drift the step control can account for: accepted steps times the
  /// local tolerance on the speed.
  double drift_bound = 0.0;
  long steps = 0;

  const TrajectorySample& front() const { return samples.front(); }
  const TrajectorySample& back() const { return samples.back(); }
};

struct FlowOptions {
  StepControl control{};
  /// Sample spacing; 0 records every accepted step.
  double sample_dt = 0.0;
  /// Explicit sample times (overrides sample_dt when non-empty).
  std::vector<double> sample_times;
  /// Also record every accepted step alongside the requested times.
  bool record_steps = false;
};

double g_speed(const TorusMetric& model, const PhaseState& s);
/// Same point, velocity rescaled to g-speed r.
PhaseState with_speed(const TorusMetric& model, const PhaseState& s, double r);

/// Geodesic flow with the scalar Jacobi equation J'' + K |v|_g^2 J = 0
/// carried alongside. Negative T integrates backward.
Trajectory integrate(const TorusMetric& model, const PhaseState& start, double T, const FlowOptions& opts = {});

/// Geodesic flow only, to a fixed time.
PhaseState flow_to(const TorusMetric& model, const PhaseState& start, double T, const StepControl& control = {});

struct ClosedGeodesic {
  PhaseState initial;
  double period = 0.0;
  Winding winding;
  double speed = 0.0;
  Mat2 monodromy = Mat2::identity();
  std::array<std::complex<double>, 2> floquet{};
  /// Euclidean norm of (lifted position mismatch, velocity mismatch).
  double residual = 0.0;
  int newton_iterations = 0;

  double length() const { return period * speed; }
};

class ShootingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ShootingOptions {
  int max_iterations = 30;
  StepControl control{};
  double fd_step = 1e-7;
};

ClosedGeodesic find_closed_geodesic(const TorusMetric& model, const PhaseState& seed, double period, double tol,
                                    const ShootingOptions& opts = {});
/// Seeds from nodes 0 and 1 of the loop.
ClosedGeodesic find_closed_geodesic(const TorusMetric& model, const Loop& seed, double tol,
                                    const ShootingOptions& opts = {});

/// Closing mismatch of a candidate periodic orbit (winding read from the
/// unreduced displacement).
double closure_residual(const TorusMetric& model, const PhaseState& start, double period, Winding* winding = nullptr,
                        const StepControl& control = {});

enum class FloquetVerdict { hyperbolic, parabolic, elliptic };
std::string to_string(FloquetVerdict v);

struct MonodromyReport {
  Mat2 matrix;
  std::array<std::complex<double>, 2> multipliers;
  FloquetVerdict verdict = FloquetVerdict::parabolic;
};

/// margin: hyperbolic iff both multipliers are real and |log|lambda|| > margin.
MonodromyReport monodromy(const TorusMetric& model, const ClosedGeodesic& gamma, double margin = 1e-4,
                          const StepControl& control = {});

class ConjugatePointError : public std::runtime_error {
 public:
  ConjugatePointError(double time, const std::string& what)
      : std::runtime_error(what), conjugate_time(time) {}
  double conjugate_time;
};

struct JacobiSample {
  double s;
  double value;
  double derivative;
};

/// Orthogonal Jacobi field J along a unit-speed geodesic arc with J(0) = w,
/// J(tau) = 0, in the parallel unit-normal frame.
struct JacobiRecord {
  double tau = 0.0;
  double w = 0.0;
  double initial_derivative = 0.0;  // J'(0)
  std::vector<JacobiSample> samples;
  double boundary_error = 0.0;  // |J(tau)|
};

/// Arc-length parametrization: start is rescaled to unit g-speed. tau may be
/// negative. Throws ConjugatePointError when the vertical solution vanishes
/// in (0, tau].
JacobiRecord jacobi_solve(const TorusMetric& model, const PhaseState& start, double tau, double w,
                          int n_samples = 64, const StepControl& control = {});

/// CSV with columns t,x,y,vx,vy,speed,m11,m12,m21,m22.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);

}  // namespace geolab
