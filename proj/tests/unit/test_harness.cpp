#include "mkvlab/harness.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mkvlab;
using namespace mkvlab::harness;
using nlohmann::json;

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / "mkvlab_unit" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const fs::path& dir, const json& j) {
  const auto p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

std::string config_error(const json& j) {
  try {
    ExperimentConfig::from_json(j);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "";
}

json small_theorem2() {
  return {{"experiment", "theorem2"},
          {"N", 400},
          {"n_steps", 16},
          {"seeds", {1}},
          {"field", {{"family", "mean_field_ou"}}},
          {"gamma", 0.0},
          {"deltas", {0.2}},
          {"w_psi_subsample", 40}};
}

std::string read(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("config errors name the offending field") {
  CHECK(config_error({{"N", 5}}) == "experiment");
  CHECK(config_error({{"experiment", "theorem9"}}) == "experiment");
  CHECK(config_error({{"experiment", "theorem2"}, {"N", -5}, {"field", {{"family", "mean_field_ou"}}}}) == "N");
  CHECK(config_error({{"experiment", "theorem2"}, {"N", 2.5}, {"field", {{"family", "mean_field_ou"}}}}) == "N");
  CHECK(config_error({{"experiment", "theorem2"}, {"T", 0}, {"field", {{"family", "mean_field_ou"}}}}) == "T");
  CHECK(config_error({{"experiment", "theorem2"}}) == "field");
  CHECK(config_error({{"experiment", "theorem2"}, {"field", {{"family", "weird"}}}}) == "field");
  CHECK(config_error({{"experiment", "theorem1"}, {"epsilons", {0.1}}}) == "families");
  CHECK(config_error({{"experiment", "theorem1"},
                      {"epsilons", {0.2, 0.1}},
                      {"families", {{{"field", {{"family", "frozen"}}}, {"u", 1.0}}}}}) == "epsilons[1]");
  CHECK(config_error({{"experiment", "theorem1"},
                      {"epsilons", {0.1}},
                      {"families", {{{"field", {{"family", "frozen"}}}}}}}) == "families[0]");
  CHECK(config_error({{"experiment", "theorem1"},
                      {"epsilons", {0.1}},
                      {"families", {{{"field", {{"family", "mean_field_ou"}}}, {"u", 1.0}}}}}) ==
        "families[0].field");
  CHECK(config_error({{"experiment", "log_harnack"}, {"field", {{"family", "frozen"}}}, {"gamma", 1.0}}) ==
        "gamma_tilde");
  json bad_t = small_theorem2();
  bad_t["t_grid"] = {0.5, 2.0};
  CHECK(config_error(bad_t) == "t_grid");
}

TEST_CASE("config hash ignores key order and changes with content") {
  const json a = json::parse(R"({"experiment":"theorem2","N":10,"T":1})");
  const json b = json::parse(R"({"T":1,"N":10,"experiment":"theorem2"})");
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 16);
  json c = a;
  c["N"] = 11;
  CHECK(config_hash(a) != config_hash(c));
}

TEST_CASE("report serialization") {
  ScalingReport r;
  r.experiment = "theorem1";
  r.config = {{"experiment", "theorem1"}};
  r.config_hash = config_hash(r.config);
  r.rows.push_back({"drift", 0.5, 0.1, 3, 0.04, 0.05, "quantile-1d", std::nullopt});
  r.rows.push_back({"diffusion", 0.5, 0.1, 3, 0.02, 0.03, "quantile-1d", 0.001});
  r.criteria.push_back({"ok", true, ""});
  CHECK(r.series_names() == std::vector<std::string>{"drift", "diffusion"});
  const std::string csv = r.rows_csv("drift");
  CHECK(csv.rfind("t,epsilon,seed,lhs,rhs,method\n", 0) == 0);
  CHECK(csv.find("0.5,0.10000000000000001,3,0.040000000000000001,0.050000000000000003,quantile-1d") !=
        std::string::npos);
  const json j = r.to_json();
  for (const char* key : {"schema_version", "experiment", "module_versions", "config_hash", "config", "rows",
                          "fits", "noise_floor", "criteria", "warnings", "extra", "passed"})
    CHECK(j.contains(key));
  CHECK(j.at("schema_version") == kSchemaVersion);
  CHECK_FALSE(j.at("rows")[0].contains("se"));
  CHECK(j.at("rows")[1].at("se") == 0.001);
  CHECK(j.at("passed") == true);
  r.criteria.push_back({"bad", false, ""});
  CHECK_FALSE(r.passed());

  const auto dir = scratch("report");
  const auto paths = r.write(dir);
  CHECK(paths.size() == 3);
  CHECK(fs::exists(dir / "theorem1_report.json"));
  CHECK(fs::exists(dir / "theorem1_drift.csv"));
}

TEST_CASE("run: invalid config exits 1 and names the field") {
  const auto dir = scratch("bad");
  std::ostringstream out, err;
  const int code = run(write_config(dir, {{"experiment", "theorem2"}, {"N", -5},
                                          {"field", {{"family", "mean_field_ou"}}}}),
                       {dir / "out", std::nullopt, std::nullopt}, out, err);
  CHECK(code == 1);
  CHECK(err.str().find("N") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "out"));
  CHECK(run(dir / "missing.json", {}, out, err) == 1);
}

TEST_CASE("run: small mean-field OU stability experiment") {
  const auto dir = scratch("t2");
  std::ostringstream out, err;
  const int code = run(write_config(dir, small_theorem2()), {dir / "out", std::nullopt, std::nullopt}, out, err);
  CHECK(code == 0);
  CHECK(fs::exists(dir / "out" / "theorem2_report.json"));
  CHECK(fs::exists(dir / "out" / "theorem2_W_k.csv"));
  CHECK(fs::exists(dir / "out" / "theorem2_W_psi.csv"));
  CHECK(out.str().find("PASS") != std::string::npos);
  const json rep = json::parse(read(dir / "out" / "theorem2_report.json"));
  for (const auto& row : rep.at("rows"))
    if (row.at("series") == "W_k" && row.at("epsilon").get<double>() > 0.0)
      CHECK(row.at("lhs").get<double>() == doctest::Approx(row.at("rhs").get<double>()).epsilon(1e-9));

  // identical inputs and seed reproduce the report byte for byte
  std::ostringstream out2;
  run(write_config(dir, small_theorem2()), {dir / "out2", std::nullopt, std::nullopt}, out2, err);
  CHECK(read(dir / "out" / "theorem2_report.json") == read(dir / "out2" / "theorem2_report.json"));
}

TEST_CASE("theorem1: epsilons that break positive definiteness are dropped") {
  json j{{"experiment", "theorem1"},
         {"N", 500},
         {"n_steps", 16},
         {"seeds", {1}},
         {"epsilons", {0.1, 0.2, 0.4, 2.0}},
         {"families", {{{"name", "diffusion"}, {"field", {{"family", "frozen"}, {"a", 1.0}}}, {"S", -1.0}}}}};
  const auto rep = run_experiment(ExperimentConfig::from_json(j));
  bool warned = false;
  for (const auto& w : rep.warnings) warned = warned || w.find("epsilon = 2 dropped") != std::string::npos;
  CHECK(warned);
  for (const auto& r : rep.rows) CHECK(r.epsilon < 1.0);
}

TEST_CASE("theorem1: drift family on the OU oracle") {
  json j{{"experiment", "theorem1"},
         {"N", 2000},
         {"n_steps", 64},
         {"seeds", {1, 2}},
         {"epsilons", {0.05, 0.1, 0.2}},
         {"families", {{{"name", "drift"}, {"field", {{"family", "frozen"}, {"B", -1.0}}}, {"u", 1.0}}}}};
  const auto rep = run_experiment(ExperimentConfig::from_json(j));
  CHECK(rep.passed());
  REQUIRE_FALSE(rep.fits.empty());
  for (const auto& f : rep.fits) {
    CHECK(f.fit.slope == doctest::Approx(1.0).epsilon(0.02));
    CHECK(f.ci.lo <= f.ci.hi);
  }
  for (const auto& r : rep.rows)
    if (r.epsilon > 0.0)
      // common noise makes the difference deterministic: eps (1 - dt)^m sums
      CHECK(r.lhs == doctest::Approx(r.epsilon * (1.0 - std::exp(-r.t))).epsilon(0.02));
}

TEST_CASE("log-Harnack experiment on a small instance") {
  json j{{"experiment", "log_harnack"},
         {"N", 20000},
         {"n_steps", 20},
         {"seeds", {1}},
         {"field", {{"family", "frozen"}, {"a", 1.0}}},
         {"gamma", 0.5},
         {"gamma_tilde", 0.0},
         {"t_grid", {0.2, 0.5, 1.0}},
         {"bumps", {{{"center", 0.0}}}}};
  const auto rep = run_experiment(ExperimentConfig::from_json(j));
  CHECK(rep.passed());
  CHECK(rep.extra.contains("c_by_t"));
  CHECK(rep.extra.contains("entropy"));
  for (const auto& r : rep.rows) {
    if (r.series == "constant") CHECK(r.lhs == doctest::Approx(0.0).scale(1.0));
    if (r.series == "tilt") CHECK(r.se.has_value());
  }
}

TEST_CASE("CLI end to end") {
  const auto dir = scratch("cli");
  const std::string cli = MKVLAB_CLI;
  const auto cfg = write_config(dir, small_theorem2());
  const std::string cmd = cli + " --config " + cfg.string() + " --out-dir " + (dir / "out").string() +
                          " experiment > " + (dir / "log.txt").string() + " 2>&1";
  CHECK(std::system(cmd.c_str()) == 0);
  CHECK(fs::exists(dir / "out" / "theorem2_report.json"));
  const std::string bad = cli + " --config " + std::string(MKVLAB_SOURCE_DIR) +
                          "/configs/invalid_negative_n.json experiment > " + (dir / "bad.txt").string() + " 2>&1";
  CHECK(WEXITSTATUS(std::system(bad.c_str())) == 1);
  CHECK(read(dir / "bad.txt").find("N:") != std::string::npos);

  {
    std::ofstream(dir / "mu.csv") << "weight,x1\n0.5,0\n0.5,2\n";
    std::ofstream(dir / "nu.csv") << "weight,x1\n1,1\n";
  }
  const std::string metric = cli + " metric wk " + (dir / "mu.csv").string() + " " + (dir / "nu.csv").string() +
                             " -k 2 > " + (dir / "metric.json").string();
  CHECK(std::system(metric.c_str()) == 0);
  CHECK(json::parse(read(dir / "metric.json")).at("value").get<double>() == doctest::Approx(1.0));
}

}  // TEST_SUITE
