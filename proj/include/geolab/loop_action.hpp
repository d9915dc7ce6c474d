#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "geolab/flow.hpp"
#include "geolab/loop.hpp"
#include "geolab/metric.hpp"
#include "geolab/optim.hpp"

namespace geolab {

/// sigma = c1 dx + c2 dy + df.
struct CohomologyClass {
  Vec2 constant_part;
  TrigPoly2 exact_part;

  /// sigma over the lifted segment a -> b (the exact part contributes f(b) - f(a)).
  double integrate_segment(const Vec2& a, const Vec2& b) const {
    return dot(constant_part, b - a) + (exact_part.is_zero() ? 0.0 : exact_part.value(b) - exact_part.value(a));
  }
  double pair(Winding m) const { return dot(constant_part, m.vec()); }
  /// sigma_x(v).
  double apply(const Vec2& x, const Vec2& v) const {
    return dot(constant_part + (exact_part.is_zero() ? Vec2{} : exact_part.gradient(x)), v);
  }
};

/// (1/tau) sum_i [ (1/2) exp(rho(mid_i)) |d_i|^2 / dt - sigma(d_i) ].
double loop_action(const TorusMetric& model, const CohomologyClass& sigma, const Loop& loop);

/// N sum_i exp(rho(mid_i)) |d_i|^2: the kinetic integral int_0^1 |gamma'|_g^2
/// of the loop parametrized on [0, 1]. Equals L^2 at constant speed.
double loop_energy(const TorusMetric& model, const Loop& loop);
double loop_length(const TorusMetric& model, const Loop& loop);

/// Same polygon, nodes redistributed to equal g-length (node 0 fixed).
Loop reparametrize_constant_speed(const TorusMetric& model, const Loop& loop);

Vec2 rotation_vector(const Loop& loop);

struct MinimizeOptions {
  LbfgsOptions lbfgs{};
};

struct MinimizeResult {
  explicit MinimizeResult(Loop l) : loop(std::move(l)) {}

  Loop loop;  // at period tau* = E / S for minimize_in_class
  double action = 0.0;
  double energy = 0.0;
  double length = 0.0;
  double tau_star = 0.0;
  double circulation = 0.0;  // S
  int iterations = 0;
  double grad_norm = 0.0;
  bool converged = false;
  std::string diagnostic;
  /// Reduced action -S^2 / (2E) after every accepted step.
  std::vector<double> history;
};

/// Minimizes the period-reduced action over loops in the class of init.
/// Rejects c . winding <= 0.
MinimizeResult minimize_in_class(const TorusMetric& model, const CohomologyClass& sigma, Winding winding,
                                 const Loop& init, const MinimizeOptions& opts = {});

/// Minimizes the action at the fixed period of init.
MinimizeResult minimize_fixed_period(const TorusMetric& model, const CohomologyClass& sigma, const Loop& init,
                                     const MinimizeOptions& opts = {});

struct AlphaOptions {
  int nodes_per_unit = 64;
  /// Transverse offsets tried as straight initial loops in each class.
  int starts = 4;
  unsigned long seed = 0;
  /// Amplitude of the seeded random perturbation of initial nodes.
  double jitter = 0.0;
  int jobs = 1;
  MinimizeOptions minimize{};
};

struct ClassValue {
  Winding winding;
  double bound = 0.0;  // upper bound on S^2 / (2 L^2) before minimization
  double value = 0.0;  // measured S^2 / (2 E_min); NaN when pruned
  bool pruned = false;
};

struct AlphaResult {
  CohomologyClass sigma;
  double alpha = 0.0;
  Winding best_winding;
  std::optional<Loop> minimal_loop;
  double speed = 0.0;
  int budget = 0;
  /// True when the best class or an unpruned bound sits on the budget boundary.
  bool budget_boundary_active = false;
  std::vector<ClassValue> classes;
};

/// Certified lower bound of a trig polynomial: c_0 - sqrt(2) sum_{k != 0} |c_k|.
double trig_lower_bound(const TrigPoly2& p);

AlphaResult alpha(const TorusMetric& model, const CohomologyClass& sigma, int winding_budget,
                  const AlphaOptions& opts = {});

struct CarneiroReport {
  bool pass = false;
  double expected_speed = 0.0;
  /// max_i | segment g-speed - sqrt(2 alpha) |
  double speed_error = 0.0;
  bool simple = false;
};

/// Rejects alpha = 0.
CarneiroReport carneiro_check(const TorusMetric& model, const AlphaResult& result, double tol);

/// Self-intersection test of the projected polygon on the torus.
bool is_simple(const Loop& loop);

struct ManeOptions {
  double delta = 0.05;
  double recurrence_tol = 1e-2;
  int max_closings = 3;
  int nodes_per_unit_time = 32;
  StepControl control{};
  MinimizeOptions minimize{};
};

struct ManeClosing {
  double tau = 0.0;  // recurrence time
  Winding winding;
  double phase_distance = 0.0;
  double connector_length = 0.0;
  double seed_action = 0.0;
  double minimized_action = 0.0;
  bool ok = false;
  std::string note;
};

struct ManeReport {
  std::vector<ManeClosing> closings;
  double injectivity_proxy = 0.0;
  std::string diagnostic;
};

/// orbit must be sampled densely (a few samples per unit time at least).
ManeReport mane_closing(const TorusMetric& model, const CohomologyClass& sigma, const Trajectory& orbit,
                        const ManeOptions& opts = {});

/// CSV: "tau,m1,m2" / values / "x,y" / nodes.
void write_loop_csv(std::ostream& out, const Loop& loop);
Loop read_loop_csv(std::istream& in);
void write_alpha_json(std::ostream& out, const AlphaResult& result);

}  // namespace geolab
