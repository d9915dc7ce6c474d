#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "experiment.hpp"

namespace ex = geolab::experiment;

namespace {

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ex::CompareError("cannot read " + path);
  return nlohmann::json::parse(in);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geodesic flow experiments on conformal tori"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  unsigned long seed = 0;
  int jobs = 1;
  std::vector<CLI::App*> runners;
  auto add_run_flags = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Seed for randomized initialization (overrides the config)");
    sub->add_option("--jobs", jobs, "Worker bound (overrides the config)")->check(CLI::PositiveNumber);
    sub->add_option("--out", out_dir, "Output directory (overrides the config)");
    runners.push_back(sub);
  };
  add_run_flags(app.add_subcommand("run", "Run the pipeline named in the config"));
  for (const auto& p : ex::pipelines()) add_run_flags(app.add_subcommand(p, "Run the " + p + " pipeline"));

  auto* cmp = app.add_subcommand("compare", "Field-wise diff of two reports");
  std::string report_a, report_b;
  std::vector<std::string> rel;
  cmp->add_option("a", report_a, "First report.json")->required();
  cmp->add_option("b", report_b, "Second report.json")->required();
  cmp->add_option("--rel", rel, "Relative tolerance override key=value (repeatable)");

  CLI11_PARSE(app, argc, argv);

  if (cmp->parsed()) {
    try {
      ex::CompareOptions o;
      for (const auto& kv : rel) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ex::CompareError("--rel expects key=value");
        o.rel_tol[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
      }
      const ex::CompareResult r = ex::compare(read_json(report_a), read_json(report_b), o);
      int failed = 0;
      for (const auto& f : r.fields) {
        if (f.pass) continue;
        ++failed;
        if (f.missing)
          std::cout << "MISSING " << f.path << '\n';
        else
          std::cout << "FAIL " << f.path << ": " << f.a << " vs " << f.b << " (allowed " << f.allowed << ")\n";
      }
      std::cout << (r.pass ? "PASS" : "FAIL") << ": " << r.fields.size() - failed << "/" << r.fields.size()
                << " fields within tolerance\n";
      return r.pass ? 0 : 3;
    } catch (const std::exception& e) {
      std::cerr << "compare rejected: " << e.what() << '\n';
      return 4;
    }
  }

  for (CLI::App* sub : runners) {
    if (!sub->parsed()) continue;
    ex::ExperimentConfig cfg;
    try {
      cfg = ex::load_config(config_path);
      const std::string name = sub->get_name();
      if (name != "run") {
        if (!cfg.pipeline.empty() && cfg.pipeline != name)
          throw ex::ConfigError("config pipeline '" + cfg.pipeline + "' does not match subcommand '" + name + "'");
        cfg.pipeline = name;
      }
      if (cfg.pipeline.empty()) throw ex::ConfigError("no pipeline given");
    } catch (const ex::ConfigError& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return 2;
    }
    if (sub->count("--seed")) cfg.seed = seed;
    if (sub->count("--jobs")) cfg.jobs = jobs;
    if (sub->count("--out")) cfg.out = out_dir;
    const ex::RunResult r = ex::run(cfg);
    std::cout << cfg.pipeline << ": " << r.report.value("status", "?") << " (" << cfg.out << "/report.json)\n";
    if (r.exit_code != 0) std::cerr << r.report["error"].dump() << '\n';
    return r.exit_code;
  }
  return 0;
}
