#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace geolab::experiment {

inline constexpr int kConfigVersion = 1;
inline constexpr int kReportVersion = 1;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Pipelines in dependency order of the full chain.
const std::vector<std::string>& pipelines();

struct ExperimentConfig {
  int version = kConfigVersion;
  std::string pipeline;
  unsigned long seed = 1;
  int jobs = 1;
  std::string out = "out";

  // [model]: the base metric g0.
  std::string model_kind = "flat";  // flat | bump | file
  double model_epsilon = 0.01;
  double model_beta = 0.0;
  std::string model_path;

  // [sigma]
  double sigma_c1 = 0.5;
  double sigma_c2 = 0.0;

  // [alpha]
  int alpha_budget = 2;
  int alpha_nodes = 64;
  int alpha_starts = 4;
  double alpha_jitter = 0.0;
  double alpha_tol = 1e-6;

  // [geodesic]
  double geodesic_tol = 1e-10;
  double carneiro_tol = 1e-4;
  double floquet_margin = 1e-4;

  // [green]
  double green_t_max = 64.0;
  double green_tol = 1e-9;
  double eberlein_margin = 1e-3;

  // [bump]: the hyperbolizing perturbation.
  double bump_epsilon = 0.01;
  double bump_beta = 0.3;

  // [homoclinic]
  double spacing = 2e-3;
  double seed_distance = 1e-6;
  double integration_tol = 1e-13;
  double refine_tol = 1e-11;
  double y_extent = 0.6;
  int max_candidates = 4;
  std::vector<double> tube_eps{0.05, 0.02};
  double splitting_rel_tol = 0.1;

  // [weakkam]
  int grid = 128;
  double wk_tol = 1e-10;
  int wk_max_iters = 5000;
  int wk_radius = 8;
  long f_samples = 10000;
  double f_tol = 1e-6;

  // [mane]
  double mane_time = 6.5;
  double mane_start_y = 1e-3;
  double mane_sample_dt = 0.01;
  int mane_closings = 3;
};

/// Strict line-oriented parser: "[section]" headers, "key = value" lines,
/// '#' comments. Unknown sections or keys, duplicates and malformed values
/// throw ConfigError.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
nlohmann::json config_to_json(const ExperimentConfig& c);

struct RunResult {
  int exit_code = 0;  // 0 ok, 1 pipeline error
  nlohmann::json report;
};

/// Runs the pipeline, writes report.json and artifacts into c.out.
RunResult run(const ExperimentConfig& c);

/// Serialized report, deterministic apart from the "timestamp" field.
std::string dump_report(const nlohmann::json& report);

struct CompareOptions {
  /// Relative tolerance overrides by leaf key name.
  std::map<std::string, double> rel_tol;
};

struct FieldDiff {
  std::string path;
  double a = 0.0, b = 0.0;
  double allowed = 0.0;
  bool pass = false;
  bool missing = false;
};

struct CompareResult {
  std::vector<FieldDiff> fields;
  bool pass = true;
};

class CompareError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Field-wise diff of {"value", "tol"} leaves of two reports of the same
/// pipeline. A field passes when |a - b| <= max(tol_a, tol_b) + rel * max(|a|, |b|),
/// with rel from the leaf's "rel_tol" or the overrides. Throws CompareError
/// on a pipeline mismatch.
CompareResult compare(const nlohmann::json& a, const nlohmann::json& b, const CompareOptions& opts = {});

}  // namespace geolab::experiment
