#include <cstdlib>
#include <filesystem>
#include <string>

#include <sys/wait.h>

#include "doctest.h"
#include "json.hpp"

#include "nnpc/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliResult {
  int status = -1;
  std::string out;
  std::string err;
};

CliResult run_cli(const fs::path& dir, const std::string& args, const std::string& env = "") {
  const fs::path out = dir / "stdout.txt";
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = env + " '" + std::string(NNPC_CLI_PATH) + "' " + args + " >'" +
                          out.string() + "' 2>'" + err.string() + "'";
  const int raw = std::system(cmd.c_str());
  CliResult r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = nnpc::read_file(out);
  r.err = nnpc::read_file(err);
  return r;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("nnpc_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

// Small but complete pipeline settings.
fs::path write_config(const fs::path& dir) {
  const json cfg = {{"sysid", {{"samples", 600}, {"epochs", 3}}},
                    {"scenario", {{"duration", 2e-3}, {"event_time", 1e-3}}},
                    {"mpc", {{"iterations", 10}, {"restarts", 1}}}};
  const fs::path p = dir / "config.json";
  nnpc::write_file_atomic(p, cfg.dump(2));
  return p;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("scenarios lists the built-ins") {
  const fs::path d = fresh_dir("list");
  const CliResult r = run_cli(d, "scenarios");
  CHECK(r.status == 0);
  CHECK(r.out.find("load-step") != std::string::npos);
  fs::remove_all(d);
}

TEST_CASE("errors are one JSON line on stderr with a nonzero exit") {
  const fs::path d = fresh_dir("errors");
  const fs::path bad = d / "bad.json";
  nnpc::write_file_atomic(bad, R"({"mpc": {"horizn": 5}})");

  CliResult r = run_cli(d, "simulate --scenario startup --config '" + bad.string() + "'");
  CHECK(r.status != 0);
  json e = json::parse(r.err);
  CHECK(e["error"] == "config");
  CHECK(e["key"] == "mpc.horizn");
  CHECK(e.contains("message"));

  r = run_cli(d, "simulate --scenario nowhere");
  CHECK(r.status != 0);
  CHECK(json::parse(r.err)["error"] == "config");

  r = run_cli(d, "simulate --scenario startup --controller nnpc");
  CHECK(r.status != 0);
  CHECK(json::parse(r.err)["error"] == "config");

  r = run_cli(d, "frobnicate");
  CHECK(r.status != 0);
  CHECK(json::parse(r.err)["error"] == "usage");

  r = run_cli(d, "scenarios", "NNPC_SEED=x");
  CHECK(r.status != 0);
  CHECK(json::parse(r.err)["error"] == "config");
  fs::remove_all(d);
}

TEST_CASE("pipeline output is byte-identical across invocations") {
  const fs::path d = fresh_dir("pipeline");
  const fs::path cfg = write_config(d);
  const std::string c = " --config '" + cfg.string() + "'";
  std::string first_sim;
  std::string first_cmp;
  std::string first_model;
  for (int pass = 0; pass < 2; ++pass) {
    const fs::path run = d / ("pass" + std::to_string(pass));
    fs::create_directories(run);
    const std::string data = (run / "data.csv").string();
    const std::string model = (run / "model.json").string();
    REQUIRE(run_cli(d, "collect --out '" + data + "'" + c).status == 0);
    REQUIRE(run_cli(d, "train --data '" + data + "' --out '" + model + "'" + c).status == 0);
    const CliResult sim = run_cli(d, "simulate --scenario ref-up --controller nnpc --model '" + model +
                                         "' --out-dir '" + run.string() + "'" + c);
    REQUIRE(sim.status == 0);
    const CliResult cmp = run_cli(d, "compare --scenario load-step --model '" + model + "' --out-dir '" +
                                         run.string() + "'" + c);
    REQUIRE(cmp.status == 0);
    CHECK(fs::exists(run / "load-step_compare.json"));
    CHECK(fs::exists(run / "load-step_plot.csv"));
    CHECK(fs::exists(run / "ref-up_nnpc_solver.csv"));
    const std::string sim_csv = nnpc::read_file(run / "ref-up_nnpc.csv");
    const std::string cmp_json = nnpc::read_file(run / "load-step_compare.json");
    const std::string model_text = nnpc::read_file(model);
    if (pass == 0) {
      first_sim = sim_csv;
      first_cmp = cmp_json;
      first_model = model_text;
    } else {
      CHECK(sim_csv == first_sim);
      CHECK(cmp_json == first_cmp);
      CHECK(model_text == first_model);
    }
  }
  fs::remove_all(d);
}

TEST_CASE("NNPC_SEED overrides --seed") {
  const fs::path d = fresh_dir("seed");
  const CliResult a = run_cli(d, "collect --samples 50 --seed 4 --out '" + (d / "a.csv").string() + "'",
                              "NNPC_SEED=8");
  const CliResult b = run_cli(d, "collect --samples 50 --seed 8 --out '" + (d / "b.csv").string() + "'");
  REQUIRE(a.status == 0);
  REQUIRE(b.status == 0);
  CHECK(json::parse(a.out)["seed"] == 8);
  CHECK(nnpc::read_file(d / "a.csv") == nnpc::read_file(d / "b.csv"));
  fs::remove_all(d);
}

}  // TEST_SUITE
