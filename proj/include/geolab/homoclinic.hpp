#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "geolab/flow.hpp"
#include "geolab/green.hpp"
#include "geolab/loop_action.hpp"
#include "geolab/weak_kam.hpp"

namespace geolab {

// ---------------------------------------------------------------------------
// Hyperbolization

struct HyperbolizeOptions {
  int alpha_budget = 2;
  AlphaOptions alpha{};
  double geodesic_tol = 1e-10;
  /// Relative tolerance for alpha and the action of gamma.
  double action_tol = 1e-8;
  double carneiro_tol = 1e-4;
  double floquet_margin = 1e-4;
  double eberlein_margin = 1e-3;
  double green_t_max = 64.0;
  double green_tol = 1e-9;
  int action_nodes = 256;
  StepControl control{};
};

struct HyperbolizeReport {
  TorusMetric model;  // e^rho g0
  ClosedGeodesic gamma;  // same curve, monodromy on the new model
  BumpReport hypotheses;
  double geodesic_residual = 0.0;  // (a)
  double alpha_before = 0.0, alpha_after = 0.0;  // (b)
  double action_before = 0.0, action_after = 0.0;
  MonodromyReport monodromy;  // (c)
  std::optional<EberleinResult> eberlein;  // (d); empty when the Green limits did not converge
  GreenRecord green;
  bool geodesic_ok = false, minimal_ok = false, hyperbolic_ok = false, eberlein_ok = false;

  bool pass() const { return geodesic_ok && minimal_ok && hyperbolic_ok && eberlein_ok; }
  /// Failed clauses as "(a) ...; (c) ...".
  std::string failures() const;
};

class HyperbolizeError : public std::runtime_error {
 public:
  explicit HyperbolizeError(HyperbolizeReport r)
      : std::runtime_error("hyperbolize: certificate failed: " + r.failures()), report(std::move(r)) {}
  HyperbolizeReport report;
};

/// Multiplies g0 by exp(bump) around the horizontal minimal geodesic and
/// certifies (a) gamma is a closed geodesic of g, (b) alpha and the action of
/// gamma are unchanged, (c) the monodromy is hyperbolic, (d) the Green
/// bundles are transverse. The bump exponent is not validated here, so a
/// degenerate bump surfaces as failed certificates. Throws
/// std::invalid_argument when gamma fails the Carneiro law on g0 or the bump
/// does not vanish on gamma, and HyperbolizeError naming the failed clauses.
HyperbolizeReport hyperbolize(const TorusMetric& g0, const CohomologyClass& sigma, const ClosedGeodesic& minimal,
                              const BumpSpec& spec, const HyperbolizeOptions& opts = {});

// ---------------------------------------------------------------------------
// Section {x = 0 mod 1} in the level |v|_g = speed, coordinates (y, theta)
// with theta the angle of v against d/dx.

struct PoincareSection {
  double speed = 0.5;
  StepControl control{1e-13, 1e-13, 1e-3, 0.25, 1e-14, 50'000'000};
  /// A return taking more g-length than this is an escape.
  double max_return_length = 8.0;

  PhaseState lift(const TorusMetric& model, const Vec2& p, double x = 0.0) const;
  static Vec2 coordinates(const PhaseState& s);
  /// p_y = e^{rho/2} speed sin(theta): (y, p_y) carries the invariant area.
  Vec2 to_momentum(const TorusMetric& model, const Vec2& p) const;
  Vec2 from_momentum(const TorusMetric& model, const Vec2& q) const;
};

struct ReturnResult {
  Vec2 point;
  PhaseState state;  // x reduced to 0
  double time = 0.0;
  double section_error = 0.0;  // |x - target| at the located crossing
  bool escaped = false;
};

/// Next crossing of x = x0 + direction (direction = +1 forward in time,
/// -1 backward). Escape when the crossing is not reached within the length
/// budget or arrives with x' <= 0.
ReturnResult return_map(const TorusMetric& model, const PoincareSection& section, const PhaseState& start,
                        int direction);
ReturnResult return_map(const TorusMetric& model, const PoincareSection& section, const Vec2& p, int direction);

enum class SectionChart { angle, momentum };

/// Central-difference Jacobian of the forward return map.
Mat2 return_jacobian(const TorusMetric& model, const PoincareSection& section, const Vec2& p, double h,
                     SectionChart chart = SectionChart::angle);

/// Section coordinates of gamma's crossing of x = 0.
Vec2 section_fixed_point(const TorusMetric& model, const PoincareSection& section, const ClosedGeodesic& gamma);

// ---------------------------------------------------------------------------
// Invariant manifolds

enum class Branch { stable_plus, stable_minus, unstable_plus, unstable_minus };
std::string to_string(Branch b);

struct GrowOptions {
  /// Seeds lie at distance seed_distance * mu^f, f in [0, 1), along the eigenvector.
  double seed_distance = 1e-6;
  /// Maximum distance between adjacent samples inside the extent.
  double spacing = 2e-3;
  double arclength_budget = 3.0;
  /// Growth stops once |y - y0| exceeds this.
  double y_extent = 0.6;
  int per_domain = 8;
  int max_points = 20000;
  int max_iterations = 400;
  double fd_step = 1e-6;
  bool concurrent = true;
};

/// Branch of W^s or W^u of the fixed point. Sample k is P^{n}(seed(f)) with
/// params[k] = n + f; evaluate() recomputes any sample from its seed.
struct ManifoldCurve {
  Branch branch = Branch::unstable_plus;
  TorusMetric model;
  PoincareSection section;
  Vec2 fixed_point;
  double eigenvalue = 0.0;  // of the forward return map
  Vec2 eigenvector;
  double seed_distance = 0.0;
  double spacing = 0.0;
  double arclength_budget = 0.0;
  double arclength = 0.0;
  std::vector<Vec2> points;
  std::vector<double> params;
  bool truncated = false;
  std::string note;

  bool unstable() const { return branch == Branch::unstable_plus || branch == Branch::unstable_minus; }
  int side() const { return branch == Branch::unstable_plus || branch == Branch::stable_plus ? 1 : -1; }
  /// Growth factor per iterate in the iteration direction.
  double mu() const { return unstable() ? eigenvalue : 1.0 / eigenvalue; }
  Vec2 seed(double f) const;
  /// P^{+-n}(seed(f)); f need not lie in [0, 1). Throws on escape.
  PhaseState evaluate_state(int n, double f) const;
  Vec2 evaluate(int n, double f) const { return PoincareSection::coordinates(evaluate_state(n, f)); }
};

struct LinearizedReturn {
  Mat2 jacobian;
  double lambda_u = 0.0, lambda_s = 0.0;
  Vec2 e_u, e_s;  // unit, oriented toward increasing y
};

LinearizedReturn linearize_return(const TorusMetric& model, const PoincareSection& section, const Vec2& fixed,
                                  double h);

ManifoldCurve grow_branch(const TorusMetric& model, const PoincareSection& section, const Vec2& fixed,
                          const LinearizedReturn& lin, Branch branch, const GrowOptions& opts = {});

/// Order: stable_plus, stable_minus, unstable_plus, unstable_minus. Throws
/// std::invalid_argument unless gamma is hyperbolic with positive multipliers.
std::array<ManifoldCurve, 4> grow_manifolds(const TorusMetric& model, const ClosedGeodesic& gamma,
                                            const PoincareSection& section, const GrowOptions& opts = {});

/// Symmetric Hausdorff distance between the parts of a and b + (shift, 0)
/// with y in [y_lo, y_hi]. Both parts must be graphs over y; each point is
/// compared against the cubic interpolant of the other curve.
double hausdorff_on_overlap(const ManifoldCurve& a, const ManifoldCurve& b, double shift, double y_lo, double y_hi);

/// theta at height y on the curve (cubic interpolation on a monotone-y run).
std::optional<double> theta_at(const ManifoldCurve& c, double y, double shift = 0.0);

// ---------------------------------------------------------------------------
// Homoclinic orbits

struct OrbitOptions {
  /// Orbit ends once the chart distance to gamma falls below this.
  double linearization_radius = 1e-4;
  double max_length = 200.0;  // g-length per direction
  double sample_dt = 0.01;
  StepControl control{1e-13, 1e-13, 1e-3, 0.25, 1e-14, 50'000'000};
};

struct HomoclinicCandidate {
  Vec2 section_point;
  int shift = 0;  // the stable curve is matched after y -> y + shift
  double unstable_param = 0.0, stable_param = 0.0;
  double residual = 0.0;  // |theta_u - theta_s| at equal y
  double splitting_angle = 0.0;
  Vec2 unstable_tangent, stable_tangent;
  /// Two-sided orbit, t = 0 on the section.
  Trajectory orbit;
  double horizon_forward = 0.0, horizon_backward = 0.0;
  bool asymptotic_forward = false, asymptotic_backward = false;
};

/// Chart distance sqrt(dy^2 + theta^2) of a state to the lattice of lifts of
/// the horizontal gamma through y0.
double distance_to_gamma(const PhaseState& s, double y0);

/// Integrates both ways from s until within the linearization radius of
/// gamma or out of length budget.
HomoclinicCandidate candidate_from_state(const TorusMetric& model, const PhaseState& s, double gamma_y,
                                         const OrbitOptions& opts = {});
/// gamma itself over [-T, T].
HomoclinicCandidate degenerate_candidate(const TorusMetric& model, const ClosedGeodesic& gamma, double T,
                                         const OrbitOptions& opts = {});

struct HomoclinicOptions {
  double refine_tol = 1e-11;
  /// Crossings within this chart distance of a fixed-point image are ignored.
  double exclusion_radius = 0.05;
  int max_candidates = 4;
  double tangent_step = 1e-3;  // in seed-parameter units
  OrbitOptions orbit{};
};

struct HomoclinicSearch {
  std::vector<HomoclinicCandidate> candidates;
  int shift = 0;
  double overlap_lo = 0.0, overlap_hi = 0.0;
  /// Sign changes of the splitting function theta_u - theta_s on the overlap.
  int sign_changes = 0;
  /// Proper segment intersections of the two polylines.
  int polyline_crossings = 0;
  double max_abs_splitting = 0.0;
};

/// Throws std::invalid_argument when the curves come from different models
/// or sections, or are not one stable and one unstable branch.
HomoclinicSearch find_homoclinic(const ManifoldCurve& ws, const ManifoldCurve& wu, const HomoclinicOptions& opts = {});

struct TubeReport {
  double eps = 0.0;
  bool entered = false;
  bool confined = false;
  double delta = 0.0;  // min F over orbit samples in the shell N_2eps \ N_eps
  double rho = 0.0;    // eps * delta / max |zeta'|
};

struct DiagnosticsOptions {
  double window = 1.0;  // g-length per window
  double f_tolerance = 1e-6;
  double alignment_tol = 1e-2;
  /// Windows count as asymptotic once the orbit is this close to gamma.
  double asymptotic_radius = 0.05;
};

struct HomoclinicDiagnostics {
  double action_total = 0.0;
  std::vector<double> symmetric_action;  // int_{-T}^{T} F dt for T = 1, 2, ... windows
  bool symmetric_monotone = false;
  std::vector<double> forward_windows, backward_windows;
  std::vector<double> forward_ratios, backward_ratios;
  int forward_decay_run = 0, backward_decay_run = 0;  // longest run of ratios < 1
  double forward_ratio = 0.0, backward_ratio = 0.0;  // median in the asymptotic regime
  std::vector<TubeReport> tubes;
  bool tubes_pass = false;
  double forward_alignment = 0.0, backward_alignment = 0.0;  // terminal |theta|
  bool aligned = false;
  double min_F = 0.0;
  bool distance_monotone = false;
};

/// Throws std::runtime_error when F falls below -f_tolerance on the orbit.
HomoclinicDiagnostics homoclinic_diagnostics(const HomoclinicCandidate& c, const NonnegLagrangian& F, double gamma_y,
                                             const std::vector<double>& eps_list,
                                             const DiagnosticsOptions& opts = {});

/// max |e^rho x' - initial| along the orbit (a first integral when rho
/// depends on y only).
double clairaut_drift(const TorusMetric& model, const Trajectory& orbit);

void write_manifolds_json(std::ostream& out, const std::array<ManifoldCurve, 4>& curves,
                          const std::vector<HomoclinicCandidate>& candidates);
/// CSV with columns t,x,y,vx,vy.
void write_orbit_csv(std::ostream& out, const Trajectory& orbit);

}  // namespace geolab
