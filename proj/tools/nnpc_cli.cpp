// nnpc: command-line workflow for the buck-converter NNPC workbench.
//
//   nnpc collect   --out data.csv [--samples N] [--preset paper|recommended]
//   nnpc train     --data data.csv --out model.json [--hidden 7] [--epochs N]
//   nnpc simulate  --scenario NAME --controller pi|nnpc [--model model.json] --out-dir DIR
//   nnpc compare   [--scenario NAME] --model model.json --out-dir DIR
//   nnpc scenarios
//
// Every command takes --config FILE and --seed N (NNPC_SEED wins over --seed).
// Failures print one JSON object on stderr and exit nonzero.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "nnpc/config.hpp"
#include "nnpc/errors.hpp"
#include "nnpc/harness.hpp"
#include "nnpc/io.hpp"
#include "nnpc/sysid.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--seed", opts.seed, "seed for every RNG (overridden by NNPC_SEED)");
}

nnpc::RunConfig resolve_config(const CommonOptions& opts) {
  nnpc::RunConfig cfg = opts.config.empty() ? nnpc::RunConfig{} : nnpc::load_config(opts.config);
  if (opts.seed) nnpc::apply_seed(cfg, *opts.seed);
  if (const auto env = nnpc::seed_from_env()) nnpc::apply_seed(cfg, *env);
  return cfg;
}

int fail(const std::string& code, const std::string& message, json extra = json::object()) {
  extra["error"] = code;
  extra["message"] = message;
  std::cerr << extra.dump() << "\n";
  return 2;
}

int cmd_collect(const CommonOptions& common, const std::string& out,
                std::optional<std::size_t> samples, const std::string& preset) {
  nnpc::RunConfig cfg = resolve_config(common);
  if (!preset.empty()) {
    const nnpc::SysidPreset p = nnpc::sysid_preset(preset);
    cfg.sysid.preset = p.name;
    cfg.sysid.sample_period = p.sample_period;
    cfg.sysid.control_period = p.control_period;
    cfg.sysid.samples = p.samples;
  }
  if (samples) cfg.sysid.samples = *samples;
  const nnpc::ResolvedPi pi = nnpc::resolve_pi(cfg);
  const nnpc::RawDataset raw =
      nnpc::collect(cfg.converter, pi.config, cfg.sysid.excitation, cfg.sysid.samples,
                    cfg.sysid.sample_period, cfg.sysid.control_period);
  nnpc::save_dataset(out, raw);
  std::cout << json{{"rows", raw.rows.size()},
                    {"columns", 3},
                    {"episodes", raw.episode_starts.size()},
                    {"sample_period", raw.sample_period},
                    {"seed", raw.seed},
                    {"out", out}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_train(const CommonOptions& common, const std::string& data, const std::string& out,
              std::optional<std::size_t> hidden, std::optional<std::size_t> epochs,
              const std::string& report_path) {
  nnpc::RunConfig cfg = resolve_config(common);
  if (hidden) cfg.sysid.hidden = *hidden;
  if (epochs) cfg.sysid.train.epochs = *epochs;
  const nnpc::RawDataset raw = nnpc::load_dataset(data);
  const nnpc::Preprocessed pre = nnpc::preprocess(raw);
  const nnpc::IdentifierFit fit =
      nnpc::fit_identifier(pre.pairs, pre.stats, cfg.sysid.hidden, cfg.sysid.train,
                           raw.sample_period, cfg.sysid.hidden_activation);
  nnpc::save_bundle(out, fit.bundle);

  const nnpc::IdentifierReport& r = fit.report;
  json rep = {{"model", out},
              {"hidden", r.hidden},
              {"n_train", r.n_train},
              {"n_validation", r.n_validation},
              {"train_rmse", r.train_rmse},
              {"validation_rmse", r.validation_rmse},
              {"persistence_rmse", r.persistence_rmse},
              {"validation_target_std", r.validation_target_std},
              {"beats_persistence", r.beats_persistence},
              {"final_loss", r.epoch_loss.empty() ? 0.0 : r.epoch_loss.back()},
              {"config", nnpc::to_json(cfg)}};
  if (!r.warning.empty()) rep["warning"] = r.warning;
  if (!report_path.empty()) {
    json full = rep;
    full["epoch_loss"] = r.epoch_loss;
    nnpc::write_file_atomic(report_path, full.dump(2) + "\n");
  }
  rep.erase("config");
  std::cout << rep.dump() << "\n";
  return 0;
}

std::optional<nnpc::IdentifierBundle> maybe_bundle(const std::string& model) {
  if (model.empty()) return std::nullopt;
  return nnpc::load_bundle(model);
}

int cmd_simulate(const CommonOptions& common, const std::string& scenario,
                 const std::string& controller, const std::string& model,
                 const std::string& out_dir) {
  const nnpc::RunConfig cfg = resolve_config(common);
  const nnpc::ControllerKind kind = nnpc::controller_from_string(controller);
  if (kind == nnpc::ControllerKind::Nnpc && model.empty()) {
    throw nnpc::ConfigError("model", "--controller nnpc needs --model");
  }
  const nnpc::Scenario sc = nnpc::builtin_scenario(scenario, cfg.scenario);
  nnpc::RunOutput run = nnpc::run_scenario(sc, kind, cfg, maybe_bundle(model), fs::path(out_dir));
  json summary = {{"scenario", run.report.scenario},
                  {"controller", nnpc::to_string(kind)},
                  {"status", run.report.ok ? "ok" : "failed"}};
  if (run.report.ok) summary["metrics"] = nnpc::to_json(run.report.metrics);
  std::cout << summary.dump() << "\n";
  return run.report.ok ? 0 : fail("simulation", run.report.failure,
                                  {{"step", run.report.failure_step.value_or(0)}});
}

int cmd_compare(const CommonOptions& common, const std::string& scenario, const std::string& model,
                const std::string& out_dir) {
  const nnpc::RunConfig cfg = resolve_config(common);
  const auto bundle = nnpc::load_bundle(model);
  const fs::path dir(out_dir);
  std::vector<std::string> names =
      scenario.empty() ? nnpc::builtin_scenario_names() : std::vector<std::string>{scenario};
  json summary = json::array();
  bool all_ok = true;
  for (const std::string& name : names) {
    const nnpc::Scenario sc = nnpc::builtin_scenario(name, cfg.scenario);
    const nnpc::RunOutput a = nnpc::run_scenario(sc, nnpc::ControllerKind::Pi, cfg, std::nullopt, dir);
    const nnpc::RunOutput b = nnpc::run_scenario(sc, nnpc::ControllerKind::Nnpc, cfg, bundle, dir);
    if (!a.report.ok || !b.report.ok) {
      all_ok = false;
      summary.push_back({{"scenario", name}, {"status", "failed"}});
      continue;
    }
    const nnpc::ComparisonReport c = nnpc::compare(a, b);
    json cj = nnpc::to_json(c);
    cj["reports"] = {name + "_pi.json", name + "_nnpc.json"};
    nnpc::write_file_atomic(dir / (name + "_compare.json"), cj.dump(2) + "\n");
    nnpc::write_file_atomic(dir / (name + "_plot.csv"), c.plot_csv);
    summary.push_back(cj);
  }
  std::cout << summary.dump() << "\n";
  return all_ok ? 0 : fail("simulation", "one or more runs failed; see the run reports");
}

int cmd_scenarios(const CommonOptions& common) {
  const nnpc::RunConfig cfg = resolve_config(common);
  json out = json::array();
  for (const std::string& name : nnpc::builtin_scenario_names()) {
    const nnpc::Scenario sc = nnpc::builtin_scenario(name, cfg.scenario);
    json vref = json::array();
    json rload = json::array();
    for (const auto& b : sc.v_ref) vref.push_back({b.t, b.value});
    for (const auto& b : sc.r_load) rload.push_back({b.t, b.value});
    out.push_back({{"name", sc.name},
                   {"initial", {sc.initial.i_l, sc.initial.v_c}},
                   {"v_ref", vref},
                   {"r_load", rload},
                   {"duration", sc.duration},
                   {"plant_model", nnpc::to_string(sc.plant)}});
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Buck-converter neural-network predictive control workbench"};
  app.require_subcommand(1);

  CommonOptions common;

  auto* collect = app.add_subcommand("collect", "record a PI-driven identification dataset");
  std::string collect_out;
  std::optional<std::size_t> samples;
  std::string preset;
  add_common(collect, common);
  collect->add_option("--out", collect_out, "dataset CSV path")->required();
  collect->add_option("--samples", samples, "number of rows");
  collect->add_option("--preset", preset, "sampling preset")
      ->check(CLI::IsMember({"paper", "recommended"}));

  auto* train = app.add_subcommand("train", "fit the one-step identifier");
  std::string data;
  std::string model_out;
  std::string report_path;
  std::optional<std::size_t> hidden;
  std::optional<std::size_t> epochs;
  add_common(train, common);
  train->add_option("--data", data, "dataset CSV")->required()->check(CLI::ExistingFile);
  train->add_option("--out", model_out, "model bundle path")->required();
  train->add_option("--hidden", hidden, "hidden neurons");
  train->add_option("--epochs", epochs, "training epochs");
  train->add_option("--report", report_path, "training report JSON path");

  auto* simulate = app.add_subcommand("simulate", "run one scenario");
  std::string scenario;
  std::string controller = "pi";
  std::string model;
  std::string out_dir = ".";
  add_common(simulate, common);
  simulate->add_option("--scenario", scenario, "built-in scenario")->required();
  simulate->add_option("--controller", controller, "pi or nnpc");
  simulate->add_option("--model", model, "identifier bundle (nnpc)")->check(CLI::ExistingFile);
  simulate->add_option("--out-dir", out_dir, "directory for trajectory CSV and report JSON");

  auto* cmp = app.add_subcommand("compare", "run PI and NNPC and compare");
  std::string cmp_scenario;
  std::string cmp_model;
  std::string cmp_out = ".";
  add_common(cmp, common);
  cmp->add_option("--scenario", cmp_scenario, "built-in scenario (default: all)");
  cmp->add_option("--model", cmp_model, "identifier bundle")->required()->check(CLI::ExistingFile);
  cmp->add_option("--out-dir", cmp_out, "output directory");

  auto* list = app.add_subcommand("scenarios", "list built-in scenarios");
  add_common(list, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what());
  }

  try {
    if (collect->parsed()) return cmd_collect(common, collect_out, samples, preset);
    if (train->parsed()) return cmd_train(common, data, model_out, hidden, epochs, report_path);
    if (simulate->parsed()) return cmd_simulate(common, scenario, controller, model, out_dir);
    if (cmp->parsed()) return cmd_compare(common, cmp_scenario, cmp_model, cmp_out);
    if (list->parsed()) return cmd_scenarios(common);
  } catch (const nnpc::ConfigError& e) {
    return fail(e.code(), e.what(), {{"key", e.key()}});
  } catch (const nnpc::Error& e) {
    return fail(e.code(), e.what());
  } catch (const std::invalid_argument& e) {
    return fail("invalid_argument", e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
  return fail("usage", "no command given");
}
