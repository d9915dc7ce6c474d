#include "experiment.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>

#include "geolab/homoclinic.hpp"

namespace geolab::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string>& pipelines() {
  static const std::vector<std::string> p{"alpha",      "minimal", "green", "hyperbolize",
                                          "homoclinic", "weakkam", "mane",  "full"};
  return p;
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& v) {
  double x = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(x)) throw ConfigError("not a number: '" + v + "'");
  return x;
}

long to_long(const std::string& v) {
  long x = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("not an integer: '" + v + "'");
  return x;
}

int to_int(const std::string& v) { return int(to_long(v)); }

int positive(int x, const char* what) {
  if (x <= 0) throw ConfigError(std::string(what) + " must be positive");
  return x;
}

double positive(double x, const char* what) {
  if (!(x > 0)) throw ConfigError(std::string(what) + " must be positive");
  return x;
}

std::vector<double> to_list(const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(trim(item)));
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

const std::map<std::string, std::map<std::string, Setter>>& schema() {
  static const std::map<std::string, std::map<std::string, Setter>> s{
      {"",
       {{"version",
         [](auto& c, auto& v) {
           c.version = to_int(v);
           if (c.version != kConfigVersion) throw ConfigError("unsupported config version " + v);
         }},
        {"pipeline",
         [](auto& c, auto& v) {
           if (std::find(pipelines().begin(), pipelines().end(), v) == pipelines().end())
             throw ConfigError("unknown pipeline '" + v + "'");
           c.pipeline = v;
         }},
        {"seed",
         [](auto& c, auto& v) {
           const long s = to_long(v);
           if (s < 0) throw ConfigError("seed must be nonnegative");
           c.seed = (unsigned long)s;
         }},
        {"jobs", [](auto& c, auto& v) { c.jobs = positive(to_int(v), "jobs"); }},
        {"out", [](auto& c, auto& v) { c.out = v; }}}},
      {"model",
       {{"kind",
         [](auto& c, auto& v) {
           if (v != "flat" && v != "bump" && v != "file") throw ConfigError("model kind must be flat, bump or file");
           c.model_kind = v;
         }},
        {"epsilon", [](auto& c, auto& v) { c.model_epsilon = to_double(v); }},
        {"beta", [](auto& c, auto& v) { c.model_beta = to_double(v); }},
        {"path", [](auto& c, auto& v) { c.model_path = v; }}}},
      {"sigma",
       {{"c1", [](auto& c, auto& v) { c.sigma_c1 = to_double(v); }},
        {"c2", [](auto& c, auto& v) { c.sigma_c2 = to_double(v); }}}},
      {"alpha",
       {{"budget", [](auto& c, auto& v) { c.alpha_budget = positive(to_int(v), "alpha.budget"); }},
        {"nodes_per_unit", [](auto& c, auto& v) { c.alpha_nodes = positive(to_int(v), "alpha.nodes_per_unit"); }},
        {"starts", [](auto& c, auto& v) { c.alpha_starts = positive(to_int(v), "alpha.starts"); }},
        {"jitter", [](auto& c, auto& v) { c.alpha_jitter = to_double(v); }},
        {"tol", [](auto& c, auto& v) { c.alpha_tol = positive(to_double(v), "alpha.tol"); }}}},
      {"geodesic",
       {{"tol", [](auto& c, auto& v) { c.geodesic_tol = positive(to_double(v), "geodesic.tol"); }},
        {"carneiro_tol", [](auto& c, auto& v) { c.carneiro_tol = positive(to_double(v), "geodesic.carneiro_tol"); }},
        {"floquet_margin", [](auto& c, auto& v) { c.floquet_margin = positive(to_double(v), "floquet_margin"); }}}},
      {"green",
       {{"t_max", [](auto& c, auto& v) { c.green_t_max = positive(to_double(v), "green.t_max"); }},
        {"tol", [](auto& c, auto& v) { c.green_tol = positive(to_double(v), "green.tol"); }},
        {"eberlein_margin", [](auto& c, auto& v) { c.eberlein_margin = positive(to_double(v), "eberlein_margin"); }}}},
      {"bump",
       {{"epsilon", [](auto& c, auto& v) { c.bump_epsilon = to_double(v); }},
        {"beta", [](auto& c, auto& v) { c.bump_beta = to_double(v); }}}},
      {"homoclinic",
       {{"spacing", [](auto& c, auto& v) { c.spacing = positive(to_double(v), "spacing"); }},
        {"seed_distance", [](auto& c, auto& v) { c.seed_distance = positive(to_double(v), "seed_distance"); }},
        {"integration_tol", [](auto& c, auto& v) { c.integration_tol = positive(to_double(v), "integration_tol"); }},
        {"refine_tol", [](auto& c, auto& v) { c.refine_tol = positive(to_double(v), "refine_tol"); }},
        {"y_extent", [](auto& c, auto& v) { c.y_extent = positive(to_double(v), "y_extent"); }},
        {"max_candidates", [](auto& c, auto& v) { c.max_candidates = positive(to_int(v), "max_candidates"); }},
        {"tube_eps", [](auto& c, auto& v) { c.tube_eps = to_list(v); }},
        {"splitting_rel_tol", [](auto& c, auto& v) { c.splitting_rel_tol = positive(to_double(v), "splitting_rel_tol"); }}}},
      {"weakkam",
       {{"grid", [](auto& c, auto& v) { c.grid = positive(to_int(v), "weakkam.grid"); }},
        {"tol", [](auto& c, auto& v) { c.wk_tol = positive(to_double(v), "weakkam.tol"); }},
        {"max_iters", [](auto& c, auto& v) { c.wk_max_iters = positive(to_int(v), "weakkam.max_iters"); }},
        {"radius", [](auto& c, auto& v) { c.wk_radius = positive(to_int(v), "weakkam.radius"); }},
        {"f_samples", [](auto& c, auto& v) { c.f_samples = positive(to_int(v), "weakkam.f_samples"); }},
        {"f_tol", [](auto& c, auto& v) { c.f_tol = positive(to_double(v), "weakkam.f_tol"); }}}},
      {"mane",
       {{"time", [](auto& c, auto& v) { c.mane_time = positive(to_double(v), "mane.time"); }},
        {"start_y", [](auto& c, auto& v) { c.mane_start_y = to_double(v); }},
        {"sample_dt", [](auto& c, auto& v) { c.mane_sample_dt = positive(to_double(v), "mane.sample_dt"); }},
        {"closings", [](auto& c, auto& v) { c.mane_closings = positive(to_int(v), "mane.closings"); }}}},
  };
  return s;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  std::string section;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    std::string line = raw.substr(0, raw.find('#'));
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty() || !schema().count(section)) throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    const auto& keys = schema().at(section);
    const auto it = keys.find(key);
    const std::string full = section.empty() ? key : section + "." + key;
    if (it == keys.end()) throw ConfigError(where + "unknown key '" + full + "'");
    if (!seen.insert(full).second) throw ConfigError(where + "duplicate key '" + full + "'");
    if (value.empty()) throw ConfigError(where + "empty value for '" + full + "'");
    try {
      it->second(c, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + full + ": " + e.what());
    }
  }
  if (c.model_kind == "file" && c.model_path.empty()) throw ConfigError("model.kind = file needs model.path");
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

json config_to_json(const ExperimentConfig& c) {
  return {{"version", c.version},
          {"pipeline", c.pipeline},
          {"seed", c.seed},
          {"model", {{"kind", c.model_kind}, {"epsilon", c.model_epsilon}, {"beta", c.model_beta}, {"path", c.model_path}}},
          {"sigma", {c.sigma_c1, c.sigma_c2}},
          {"alpha",
           {{"budget", c.alpha_budget},
            {"nodes_per_unit", c.alpha_nodes},
            {"starts", c.alpha_starts},
            {"jitter", c.alpha_jitter},
            {"tol", c.alpha_tol}}},
          {"geodesic", {{"tol", c.geodesic_tol}, {"carneiro_tol", c.carneiro_tol}, {"floquet_margin", c.floquet_margin}}},
          {"green", {{"t_max", c.green_t_max}, {"tol", c.green_tol}, {"eberlein_margin", c.eberlein_margin}}},
          {"bump", {{"epsilon", c.bump_epsilon}, {"beta", c.bump_beta}}},
          {"homoclinic",
           {{"spacing", c.spacing},
            {"seed_distance", c.seed_distance},
            {"integration_tol", c.integration_tol},
            {"refine_tol", c.refine_tol},
            {"y_extent", c.y_extent},
            {"max_candidates", c.max_candidates},
            {"tube_eps", c.tube_eps},
            {"splitting_rel_tol", c.splitting_rel_tol}}},
          {"weakkam",
           {{"grid", c.grid},
            {"tol", c.wk_tol},
            {"max_iters", c.wk_max_iters},
            {"radius", c.wk_radius},
            {"f_samples", c.f_samples},
            {"f_tol", c.f_tol}}},
          {"mane",
           {{"time", c.mane_time},
            {"start_y", c.mane_start_y},
            {"sample_dt", c.mane_sample_dt},
            {"closings", c.mane_closings}}}};
}

// ---------------------------------------------------------------------------
// Pipelines

namespace {

json num(double v, double tol) { return {{"value", v}, {"tol", tol}}; }
json num_rel(double v, double tol, double rel) { return {{"value", v}, {"tol", tol}, {"rel_tol", rel}}; }
json vec(const Vec2& v, double tol) { return {{"value", {v.x, v.y}}, {"tol", tol}}; }
json winding(Winding w) { return {{"value", {w.m1, w.m2}}, {"tol", 0}}; }
json multipliers(const std::array<std::complex<double>, 2>& m, double tol) {
  return {{"value", {m[0].real(), m[0].imag(), m[1].real(), m[1].imag()}}, {"tol", tol}};
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

struct Context {
  const ExperimentConfig& cfg;
  json& results;
  json& artifacts;
  fs::path out;
  TorusMetric g0;
  CohomologyClass sigma;
  std::optional<AlphaResult> alpha0;
  std::optional<ClosedGeodesic> minimal;
  std::optional<HyperbolizeReport> hyper;
  std::optional<Subsolution> u;
  std::optional<NonnegLagrangian> F;

  template <class Write>
  void artifact(const std::string& name, Write&& write) {
    std::ofstream f(out / name);
    if (!f) throw std::runtime_error("cannot write artifact " + name);
    write(f);
    artifacts.push_back(name);
  }
};

TorusMetric base_model(const ExperimentConfig& c) {
  if (c.model_kind == "flat") return TorusMetric::flat();
  if (c.model_kind == "bump")
    return TorusMetric::flat().conformal(build_conformal_bump({c.model_epsilon, c.model_beta}), "bump");
  return load_model(c.model_path);
}

void stage_alpha(Context& x) {
  AlphaOptions o;
  o.nodes_per_unit = x.cfg.alpha_nodes;
  o.starts = x.cfg.alpha_starts;
  o.seed = x.cfg.seed;
  o.jitter = x.cfg.alpha_jitter;
  o.jobs = x.cfg.jobs;
  x.alpha0 = alpha(x.g0, x.sigma, x.cfg.alpha_budget, o);
  const AlphaResult& a = *x.alpha0;
  json classes = json::array();
  for (const auto& c : a.classes)
    classes.push_back({{"winding", winding(c.winding)},
                       {"bound", num(c.bound, 0)},
                       {"value", num(c.value, x.cfg.alpha_tol)},
                       {"pruned", c.pruned}});
  x.results["alpha"] = {{"alpha", num(a.alpha, x.cfg.alpha_tol)},
                        {"best_winding", winding(a.best_winding)},
                        {"speed", num(a.speed, x.cfg.carneiro_tol)},
                        {"budget", num(a.budget, 0)},
                        {"budget_boundary_active", a.budget_boundary_active},
                        {"classes", classes}};
  if (a.minimal_loop) x.artifact("minimal_loop.csv", [&](std::ostream& f) { write_loop_csv(f, *a.minimal_loop); });
}

void stage_minimal(Context& x) {
  const AlphaResult& a = *x.alpha0;
  if (!a.minimal_loop) throw std::runtime_error("alpha = 0: no minimal loop to close");
  ShootingOptions so;
  x.minimal = find_closed_geodesic(x.g0, *a.minimal_loop, x.cfg.geodesic_tol, so);
  const ClosedGeodesic& g = *x.minimal;
  const CarneiroReport cr = carneiro_check(x.g0, a, x.cfg.carneiro_tol);
  const MonodromyReport m = monodromy(x.g0, g, x.cfg.floquet_margin);
  x.results["minimal"] = {
      {"initial_position", vec(g.initial.position, x.cfg.geodesic_tol)},
      {"initial_velocity", vec(g.initial.velocity, x.cfg.geodesic_tol)},
      {"period", num(g.period, x.cfg.geodesic_tol)},
      {"speed", num(g.speed, x.cfg.carneiro_tol)},
      {"length", num(g.length(), x.cfg.geodesic_tol)},
      {"winding", winding(g.winding)},
      {"residual", num(g.residual, x.cfg.geodesic_tol)},
      {"carneiro", {{"pass", cr.pass}, {"speed_error", num(cr.speed_error, x.cfg.carneiro_tol)}, {"simple", cr.simple}}},
      {"multipliers", multipliers(m.multipliers, 1e-6)},
      {"verdict", to_string(m.verdict)}};
  x.artifact("minimal_geodesic.csv", [&](std::ostream& f) {
    FlowOptions fo;
    fo.sample_dt = g.period / 256;
    write_trajectory_csv(f, integrate(x.g0, g.initial, g.period, fo));
  });
}

void stage_green(Context& x, const TorusMetric& model, const ClosedGeodesic& gamma) {
  const GreenRecord r = green_limits(model, gamma, x.cfg.green_t_max, x.cfg.green_tol);
  json j = {{"A_plus", num(r.A_plus, x.cfg.green_tol)},
            {"A_minus", num(r.A_minus, x.cfg.green_tol)},
            {"gap", num(r.eberlein_gap, x.cfg.green_tol)},
            {"bracket", {{"value", {r.bracket_lo, r.bracket_hi}}, {"tol", 0}}},
            {"tail_plus", num(r.tail_plus, x.cfg.green_tol)},
            {"tail_minus", num(r.tail_minus, x.cfg.green_tol)},
            {"monotonicity_violation", num(monotonicity_violation(r), 0)},
            {"converged", r.converged},
            {"diagnostic", r.diagnostic}};
  if (r.converged) {
    const EberleinResult e = eberlein_test(r, x.cfg.eberlein_margin);
    j["eberlein"] = {{"hyperbolic", e.hyperbolic},
                     {"margin", num(e.margin, x.cfg.eberlein_margin)},
                     {"floquet", to_string(e.floquet)},
                     {"agrees_with_floquet", e.agrees_with_floquet}};
  }
  x.results["green"] = j;
  x.artifact("green.json", [&](std::ostream& f) { write_green_json(f, r); });
}

json hyperbolize_json(const HyperbolizeReport& r, const ExperimentConfig& c) {
  json j = {
      {"pass", r.pass()},
      {"failures", r.failures()},
      {"hypotheses", {{"pass", r.hypotheses.pass}, {"violated", r.hypotheses.violated},
                      {"min_transverse_hessian", num(r.hypotheses.min_transverse_hessian, 0)}}},
      {"a_geodesic", {{"pass", r.geodesic_ok}, {"residual", num(r.geodesic_residual, c.geodesic_tol)}}},
      {"b_minimal",
       {{"pass", r.minimal_ok},
        {"alpha_before", num(r.alpha_before, c.alpha_tol)},
        {"alpha_after", num(r.alpha_after, c.alpha_tol)},
        {"action_before", num(r.action_before, c.alpha_tol)},
        {"action_after", num(r.action_after, c.alpha_tol)}}},
      {"c_monodromy",
       {{"pass", r.hyperbolic_ok},
        {"verdict", to_string(r.monodromy.verdict)},
        {"multipliers", multipliers(r.monodromy.multipliers, 1e-6)}}},
      {"d_eberlein", {{"pass", r.eberlein_ok}, {"green_converged", r.green.converged}}}};
  if (r.eberlein) j["d_eberlein"]["gap"] = num(r.eberlein->gap, c.green_tol);
  return j;
}

void stage_hyperbolize(Context& x) {
  const ClosedGeodesic& g = *x.minimal;
  if (!(g.winding == Winding{1, 0}) || std::abs(g.initial.velocity.y) > 1e-9 * norm(g.initial.velocity)) {
    throw std::runtime_error("the bump needs a horizontal minimal geodesic of winding (1,0)");
  }
  HyperbolizeOptions o;
  o.alpha_budget = x.cfg.alpha_budget;
  o.alpha.nodes_per_unit = x.cfg.alpha_nodes;
  o.alpha.starts = x.cfg.alpha_starts;
  o.alpha.seed = x.cfg.seed;
  o.alpha.jobs = x.cfg.jobs;
  o.geodesic_tol = x.cfg.geodesic_tol;
  o.carneiro_tol = x.cfg.carneiro_tol;
  o.floquet_margin = x.cfg.floquet_margin;
  o.eberlein_margin = x.cfg.eberlein_margin;
  o.green_t_max = x.cfg.green_t_max;
  o.green_tol = x.cfg.green_tol;
  const BumpSpec spec{x.cfg.bump_epsilon, x.cfg.bump_beta, g.initial.position.y};
  try {
    x.hyper = hyperbolize(x.g0, x.sigma, g, spec, o);
  } catch (const HyperbolizeError& e) {
    x.results["hyperbolize"] = hyperbolize_json(e.report, x.cfg);
    throw;
  }
  x.results["hyperbolize"] = hyperbolize_json(*x.hyper, x.cfg);
  x.artifact("model.txt", [&](std::ostream& f) { write_model(f, x.hyper->model); });
}

void stage_weakkam(Context& x, const TorusMetric& model, const ClosedGeodesic& gamma, double alpha_value) {
  SubsolutionOptions so;
  so.stencil.radius = x.cfg.wk_radius;
  so.stencil.jobs = x.cfg.jobs;
  x.u = solve_subsolution(model, x.sigma, alpha_value, x.cfg.grid, x.cfg.wk_tol, x.cfg.wk_max_iters, so);
  const Subsolution& u = *x.u;
  json j = {{"grid", num(u.G, 0)},
            {"alpha_used", num(u.alpha_used, x.cfg.alpha_tol)},
            {"converged", u.converged},
            {"iterations", num(u.iterations, 0)},
            {"last_change", num(u.last_change, x.cfg.wk_tol)},
            {"raw_residual", num(u.raw_residual, u.C * u.h())},
            {"C", num(u.C, 0)},
            {"lambda", num(u.lambda, 0)},
            {"residual", num(u.residual, 0)},
            {"note", u.note}};
  FReport rep;
  BuildFOptions bo;
  bo.samples = x.cfg.f_samples;
  bo.seed = x.cfg.seed;
  bo.tolerance = x.cfg.f_tol;
  try {
    x.F = build_F(model, x.sigma, u, alpha_value, &gamma, rep, bo);
  } catch (...) {
    x.results["weakkam"] = j;
    throw;
  }
  j["F"] = {{"min_sampled", num(rep.min_sampled, x.cfg.f_tol)},
            {"zero_section_error", num(rep.zero_section_error, 1e-8)},
            {"max_on_geodesic", num(rep.max_on_geodesic, x.cfg.f_tol)},
            {"samples", num(double(rep.samples), 0)}};
  x.results["weakkam"] = j;
  x.artifact("subsolution.txt", [&](std::ostream& f) { write_subsolution(f, u); });
}

void stage_homoclinic(Context& x, const TorusMetric& model, const ClosedGeodesic& gamma) {
  PoincareSection sec;
  sec.speed = gamma.speed;
  sec.control.rtol = sec.control.atol = x.cfg.integration_tol;
  GrowOptions go;
  go.spacing = x.cfg.spacing;
  go.seed_distance = x.cfg.seed_distance;
  go.y_extent = x.cfg.y_extent;
  go.concurrent = x.cfg.jobs > 1;
  const auto curves = grow_manifolds(model, gamma, sec, go);
  HomoclinicOptions ho;
  ho.refine_tol = x.cfg.refine_tol;
  ho.max_candidates = x.cfg.max_candidates;
  ho.orbit.control = sec.control;
  const double y0 = curves[0].fixed_point.x;

  json branches = json::array();
  for (const auto& c : curves)
    branches.push_back({{"branch", to_string(c.branch)},
                        {"eigenvalue", num(c.eigenvalue, 1e-6)},
                        {"points", num(double(c.points.size()), 0)},
                        {"arclength", num(c.arclength, x.cfg.spacing)},
                        {"truncated", c.truncated}});
  json searches = json::array();
  std::vector<HomoclinicCandidate> all;
  const std::pair<int, int> pairs[] = {{1, 2}, {0, 3}};  // (stable-, unstable+), (stable+, unstable-)
  for (const auto& [is, iu] : pairs) {
    const HomoclinicSearch s = find_homoclinic(curves[std::size_t(is)], curves[std::size_t(iu)], ho);
    json cands = json::array();
    for (const auto& c : s.candidates) {
      json cj = {{"section_point", vec(c.section_point, 1e-5)},
                 {"residual", num(c.residual, x.cfg.refine_tol)},
                 {"splitting_angle", num_rel(c.splitting_angle, 0, x.cfg.splitting_rel_tol)},
                 {"asymptotic_forward", c.asymptotic_forward},
                 {"asymptotic_backward", c.asymptotic_backward}};
      if (x.F) {
        const HomoclinicDiagnostics d = homoclinic_diagnostics(c, *x.F, y0, x.cfg.tube_eps);
        json tubes = json::array();
        for (const auto& t : d.tubes)
          tubes.push_back({{"eps", num(t.eps, 0)}, {"entered", t.entered}, {"confined", t.confined},
                           {"delta", num(t.delta, 0)}, {"rho", num(t.rho, 0)}});
        cj["diagnostics"] = {{"action_total", num(d.action_total, x.cfg.f_tol)},
                             {"symmetric_monotone", d.symmetric_monotone},
                             {"forward_decay_run", num(d.forward_decay_run, 0)},
                             {"backward_decay_run", num(d.backward_decay_run, 0)},
                             {"forward_ratio", num_rel(d.forward_ratio, 0, 0.05)},
                             {"backward_ratio", num_rel(d.backward_ratio, 0, 0.05)},
                             {"tubes", tubes},
                             {"tubes_pass", d.tubes_pass},
                             {"aligned", d.aligned},
                             {"min_F", num(d.min_F, x.cfg.f_tol)}};
      }
      cands.push_back(cj);
      all.push_back(c);
    }
    searches.push_back({{"stable", to_string(curves[std::size_t(is)].branch)},
                        {"unstable", to_string(curves[std::size_t(iu)].branch)},
                        {"shift", num(s.shift, 0)},
                        {"overlap", {{"value", {s.overlap_lo, s.overlap_hi}}, {"tol", x.cfg.spacing}}},
                        {"sign_changes", num(s.sign_changes, 0)},
                        {"polyline_crossings", num(s.polyline_crossings, 0)},
                        {"max_abs_splitting", num_rel(s.max_abs_splitting, x.cfg.refine_tol, x.cfg.splitting_rel_tol)},
                        {"candidates", cands}});
  }
  x.results["homoclinic"] = {{"fixed_point", vec(curves[0].fixed_point, 1e-10)},
                             {"branches", branches},
                             {"searches", searches},
                             {"candidate_count", num(double(all.size()), 0)}};
  x.artifact("manifolds.json", [&](std::ostream& f) { write_manifolds_json(f, curves, all); });
  for (std::size_t i = 0; i < all.size(); ++i)
    x.artifact("orbit_" + std::to_string(i) + ".csv", [&](std::ostream& f) { write_orbit_csv(f, all[i].orbit); });
}

void stage_mane(Context& x) {
  const AlphaResult& a = *x.alpha0;
  if (!(a.alpha > 0)) throw std::runtime_error("alpha = 0: no Carneiro speed for the orbit");
  const Vec2 dir = a.best_winding.vec() / norm(a.best_winding.vec());
  const PhaseState start = with_speed(x.g0, {{0.0, x.cfg.mane_start_y}, dir}, std::sqrt(2 * a.alpha));
  FlowOptions fo;
  fo.sample_dt = x.cfg.mane_sample_dt;
  const Trajectory orbit = integrate(x.g0, start, x.cfg.mane_time, fo);
  ManeOptions mo;
  mo.max_closings = x.cfg.mane_closings;
  const ManeReport r = mane_closing(x.g0, x.sigma, orbit, mo);
  json closings = json::array();
  for (const auto& c : r.closings)
    closings.push_back({{"tau", num(c.tau, 1e-6)},
                        {"winding", winding(c.winding)},
                        {"phase_distance", num(c.phase_distance, mo.recurrence_tol)},
                        {"connector_length", num(c.connector_length, 1e-6)},
                        {"seed_action", num(c.seed_action, 1e-6)},
                        {"minimized_action", num(c.minimized_action, 1e-5)},
                        {"ok", c.ok},
                        {"note", c.note}});
  x.results["mane"] = {{"alpha", num(a.alpha, x.cfg.alpha_tol)},
                       {"closings", closings},
                       {"injectivity_proxy", num(r.injectivity_proxy, 0)},
                       {"diagnostic", r.diagnostic}};
  x.artifact("mane_orbit.csv", [&](std::ostream& f) { write_trajectory_csv(f, orbit); });
}

}  // namespace

RunResult run(const ExperimentConfig& cfg) {
  if (cfg.pipeline.empty()) throw ConfigError("no pipeline given");
  RunResult rr;
  json& report = rr.report;
  report = {{"schema", "geolab-report"},
            {"version", kReportVersion},
            {"pipeline", cfg.pipeline},
            {"seed", cfg.seed},
            {"config", config_to_json(cfg)},
            {"timestamp", utc_now()},
            {"results", json::object()},
            {"artifacts", json::array()}};
  const fs::path out(cfg.out);
  fs::create_directories(out);
  Context x{cfg, report["results"], report["artifacts"], out, {}, {}, {}, {}, {}, {}, {}};
  std::string stage = "setup";
  try {
    x.g0 = base_model(cfg);
    x.sigma = CohomologyClass{{cfg.sigma_c1, cfg.sigma_c2}, {}};
    const std::string& p = cfg.pipeline;
    stage = "alpha";
    stage_alpha(x);
    if (p == "mane") {
      stage = "mane";
      stage_mane(x);
    } else if (p != "alpha") {
      stage = "minimal";
      stage_minimal(x);
      if (p == "green") {
        stage = "green";
        stage_green(x, x.g0, *x.minimal);
      } else if (p == "weakkam") {
        stage = "weakkam";
        stage_weakkam(x, x.g0, *x.minimal, x.alpha0->alpha);
      } else if (p == "hyperbolize" || p == "homoclinic" || p == "full") {
        stage = "hyperbolize";
        stage_hyperbolize(x);
        const TorusMetric& g = x.hyper->model;
        const ClosedGeodesic& gamma = x.hyper->gamma;
        if (p == "full") {
          stage = "green";
          stage_green(x, g, gamma);
        }
        if (p != "hyperbolize") {
          stage = "weakkam";
          stage_weakkam(x, g, gamma, x.hyper->alpha_after);
          stage = "homoclinic";
          stage_homoclinic(x, g, gamma);
        }
      }
    }
    report["status"] = "ok";
  } catch (const std::exception& e) {
    report["status"] = "error";
    report["error"] = {{"stage", stage}, {"message", e.what()}};
    rr.exit_code = 1;
  }
  std::ofstream f(out / "report.json");
  f << dump_report(report);
  return rr;
}

std::string dump_report(const json& report) { return report.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Compare

namespace {

void walk(const json& a, const json& b, const std::string& path, const std::string& key, const CompareOptions& o,
          CompareResult& out) {
  auto missing = [&](const std::string& p) {
    FieldDiff d;
    d.path = p;
    d.missing = true;
    out.fields.push_back(d);
    out.pass = false;
  };
  if (a.is_object() && a.contains("value") && a.contains("tol")) {
    if (!(b.is_object() && b.contains("value"))) return missing(path);
    const double tol = std::max(a["tol"].get<double>(), b.value("tol", 0.0));
    double rel = a.value("rel_tol", b.value("rel_tol", 0.0));
    if (const auto it = o.rel_tol.find(key); it != o.rel_tol.end()) rel = it->second;
    auto leaf = [&](const json& va, const json& vb, const std::string& p) {
      FieldDiff d;
      d.path = p;
      if (va.is_number() && vb.is_number()) {
        d.a = va.get<double>();
        d.b = vb.get<double>();
        d.allowed = tol + rel * std::max(std::abs(d.a), std::abs(d.b));
        d.pass = std::abs(d.a - d.b) <= d.allowed;
      } else {
        d.a = d.b = std::numeric_limits<double>::quiet_NaN();
        d.pass = va == vb;  // null (NaN) on both sides matches
      }
      out.pass = out.pass && d.pass;
      out.fields.push_back(d);
    };
    const json &va = a["value"], &vb = b["value"];
    if (va.is_array()) {
      if (!vb.is_array() || va.size() != vb.size()) return missing(path);
      for (std::size_t i = 0; i < va.size(); ++i) leaf(va[i], vb[i], path + "[" + std::to_string(i) + "]");
    } else {
      leaf(va, vb, path);
    }
    return;
  }
  if (a.is_object()) {
    if (!b.is_object()) return missing(path);
    for (auto it = a.begin(); it != a.end(); ++it) {
      const std::string p = path + "/" + it.key();
      if (!b.contains(it.key())) {
        missing(p);
        continue;
      }
      walk(it.value(), b[it.key()], p, it.key(), o, out);
    }
    for (auto it = b.begin(); it != b.end(); ++it)
      if (!a.contains(it.key())) missing(path + "/" + it.key());
    return;
  }
  if (a.is_array()) {
    if (!b.is_array() || a.size() != b.size()) return missing(path);
    for (std::size_t i = 0; i < a.size(); ++i) walk(a[i], b[i], path + "[" + std::to_string(i) + "]", key, o, out);
  }
}

}  // namespace

CompareResult compare(const json& a, const json& b, const CompareOptions& opts) {
  if (a.value("schema", "") != "geolab-report" || b.value("schema", "") != "geolab-report")
    throw CompareError("not a report");
  if (a.value("pipeline", "") != b.value("pipeline", ""))
    throw CompareError("pipeline mismatch: " + a.value("pipeline", "") + " vs " + b.value("pipeline", ""));
  CompareResult out;
  walk(a["results"], b["results"], "", "", opts, out);
  return out;
}

}  // namespace geolab::experiment
