#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "experiment.hpp"

namespace ex = geolab::experiment;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "geolab_test_cli";

std::string alpha_config(const std::string& out, unsigned long seed) {
  return "version = 1\npipeline = alpha\nseed = " + std::to_string(seed) + "\nout = " + out +
         "\n[model]\nkind = flat\n[sigma]\nc1 = 0.5\nc2 = 0\n[alpha]\njitter = 0.05\n";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json load(const fs::path& p) { return json::parse(slurp(p)); }

fs::path write_config(const std::string& name, const std::string& text) {
  fs::create_directories(kRoot);
  const fs::path p = kRoot / name;
  std::ofstream(p) << text;
  return p;
}

int cli(const std::string& args) {
  const int status = std::system((std::string(GEOLAB_CLI) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Every numeric under results sits inside a {value, tol} leaf.
void check_tolerances(const json& j, const std::string& path) {
  if (j.is_object()) {
    if (j.contains("value") && j.contains("tol")) return;
    for (auto it = j.begin(); it != j.end(); ++it) check_tolerances(it.value(), path + "/" + it.key());
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) check_tolerances(j[i], path + "[" + std::to_string(i) + "]");
  } else if (j.is_number()) {
    FAIL_CHECK("bare numeric at " << path);
  }
}

}  // namespace

TEST_CASE("strict config parsing") {
  const ex::ExperimentConfig c = ex::parse_config(
      "# comment\nversion = 1\npipeline = homoclinic\n[homoclinic]\nspacing = 1e-3  # inline\ntube_eps = 0.05, 0.02\n");
  CHECK(c.pipeline == "homoclinic");
  CHECK(c.spacing == 1e-3);
  CHECK(c.tube_eps == std::vector<double>{0.05, 0.02});
  CHECK_THROWS_AS(ex::parse_config("[model]\nkind = flat\ncolour = red\n"), ex::ConfigError);
  CHECK_THROWS_AS(ex::parse_config("[nonsense]\n"), ex::ConfigError);
  CHECK_THROWS_AS(ex::parse_config("seed = 1\nseed = 2\n"), ex::ConfigError);
  CHECK_THROWS_AS(ex::parse_config("seed = x\n"), ex::ConfigError);
  CHECK_THROWS_AS(ex::parse_config("version = 2\n"), ex::ConfigError);
  CHECK_THROWS_AS(ex::parse_config("pipeline = everything\n"), ex::ConfigError);
  CHECK_THROWS_AS(ex::parse_config("[weakkam]\ngrid = 0\n"), ex::ConfigError);
  CHECK_THROWS_AS(ex::parse_config("[model]\nkind = file\n"), ex::ConfigError);
  CHECK_THROWS_AS(ex::parse_config("just words\n"), ex::ConfigError);
  CHECK_THROWS_AS(ex::parse_config("[alpha]\ntol = 1e-6 extra\n"), ex::ConfigError);
}

TEST_CASE("alpha pipeline oracle and tolerance-carrying report") {
  const std::string out = (kRoot / "alpha_a").string();
  const ex::RunResult r = ex::run(ex::parse_config(alpha_config(out, 1)));
  REQUIRE(r.exit_code == 0);
  const json rep = load(fs::path(out) / "report.json");
  CHECK(rep["status"] == "ok");
  CHECK(rep["version"] == ex::kReportVersion);
  CHECK(std::abs(rep["results"]["alpha"]["alpha"]["value"].get<double>() - 0.125) <= 1e-6);
  CHECK(rep["results"]["alpha"]["alpha"]["tol"].get<double>() == 1e-6);
  CHECK(fs::exists(fs::path(out) / "minimal_loop.csv"));
  check_tolerances(rep["results"], "");
}

TEST_CASE("determinism and seed independence") {
  const std::string a = (kRoot / "det_a").string(), b = (kRoot / "det_b").string(), c = (kRoot / "det_c").string();
  ex::run(ex::parse_config(alpha_config(a, 3)));
  ex::run(ex::parse_config(alpha_config(b, 3)));
  json ja = load(fs::path(a) / "report.json"), jb = load(fs::path(b) / "report.json");
  ja.erase("timestamp");
  jb.erase("timestamp");
  ja["config"].erase("out");
  jb["config"].erase("out");
  CHECK(ex::dump_report(ja) == ex::dump_report(jb));
  CHECK(slurp(fs::path(a) / "minimal_loop.csv") == slurp(fs::path(b) / "minimal_loop.csv"));

  ex::run(ex::parse_config(alpha_config(c, 99)));
  const json jc = load(fs::path(c) / "report.json");
  const ex::CompareResult cmp = ex::compare(ja, jc);
  CHECK(cmp.pass);
  for (const auto& f : cmp.fields)
    if (!f.missing && std::isfinite(f.a)) CHECK(std::abs(f.a - f.b) < 1e-6);
}

TEST_CASE("compare rejects mismatched pipelines and flags out-of-tolerance fields") {
  json a = {{"schema", "geolab-report"}, {"pipeline", "alpha"},
            {"results", {{"x", {{"value", 1.0}, {"tol", 1e-3}}}, {"w", {{"value", {1, 0}}, {"tol", 0}}}}}};
  json b = a;
  CHECK(ex::compare(a, b).pass);
  b["results"]["x"]["value"] = 1.01;
  CHECK_FALSE(ex::compare(a, b).pass);
  ex::CompareOptions loose;
  loose.rel_tol["x"] = 0.1;
  CHECK(ex::compare(a, b, loose).pass);
  b["results"].erase("w");
  CHECK_FALSE(ex::compare(a, b, loose).pass);
  json g = a;
  g["pipeline"] = "green";
  CHECK_THROWS_AS(ex::compare(a, g), ex::CompareError);
}

TEST_CASE("pipeline errors land in the report") {
  const std::string out = (kRoot / "err").string();
  ex::ExperimentConfig c = ex::parse_config("pipeline = hyperbolize\n[bump]\nepsilon = 0\n");
  c.out = out;
  const ex::RunResult r = ex::run(c);
  CHECK(r.exit_code == 1);
  const json rep = load(fs::path(out) / "report.json");
  CHECK(rep["status"] == "error");
  CHECK(rep["error"]["stage"] == "hyperbolize");
  CHECK(rep["results"]["hyperbolize"]["failures"].get<std::string>().find("(c)") != std::string::npos);
}

TEST_CASE("binary exit codes") {
  const std::string out = (kRoot / "bin").string();
  const fs::path good = write_config("good.ini", alpha_config(out, 1));
  CHECK(cli("alpha --config " + good.string()) == 0);
  CHECK(cli("run --config " + good.string() + " --seed 5 --jobs 1 --out " + out + "_2") == 0);
  CHECK(load(fs::path(out + "_2") / "report.json")["seed"] == 5);
  CHECK(cli("green --config " + good.string()) == 2);
  const fs::path bad = write_config("bad.ini", "pipeline = alpha\n[model]\nshape = torus\n");
  CHECK(cli("run --config " + bad.string()) == 2);
  const std::string ra = out + "/report.json", rb = out + "_2/report.json";
  CHECK(cli("compare " + ra + " " + rb) == 0);

  const std::string gout = (kRoot / "bin_green").string();
  const fs::path green = write_config("green.ini", "pipeline = green\nout = " + gout + "\n[model]\nkind = flat\n");
  CHECK(cli("run --config " + green.string()) == 0);
  CHECK(cli("compare " + ra + " " + gout + "/report.json") == 4);
}

TEST_CASE("homoclinic splitting angle is stable under halving") {
  const std::string base = "pipeline = homoclinic\n[weakkam]\ngrid = 64\n";
  ex::ExperimentConfig h = ex::parse_config(base);
  h.out = (kRoot / "hom_h").string();
  ex::ExperimentConfig h2 = h;
  h2.out = (kRoot / "hom_h2").string();
  h2.spacing /= 2;
  h2.seed_distance /= 2;
  h2.integration_tol /= 2;
  h2.refine_tol /= 2;
  REQUIRE(ex::run(h).exit_code == 0);
  REQUIRE(ex::run(h2).exit_code == 0);
  const ex::CompareResult cmp = ex::compare(load(fs::path(h.out) / "report.json"), load(fs::path(h2.out) / "report.json"));
  int angles = 0;
  for (const auto& f : cmp.fields) {
    if (f.path.size() < 16 || f.path.substr(f.path.size() - 16) != "/splitting_angle") continue;
    ++angles;
    CHECK_MESSAGE(f.pass, f.path << ": " << f.a << " vs " << f.b);
  }
  CHECK(angles >= 2);
}
