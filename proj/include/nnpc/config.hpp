#pragma once

// Run configuration: one JSON document with sections converter, pi, mpc,
// sysid and scenario. Unknown keys are rejected by name.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"

#include "nnpc/converter.hpp"
#include "nnpc/mpc.hpp"
#include "nnpc/neural_net.hpp"
#include "nnpc/pi_control.hpp"
#include "nnpc/sysid.hpp"

namespace nnpc {

struct PiSettings {
  // Explicit gains skip auto-tuning; both or neither must be given.
  std::optional<double> kp;
  std::optional<double> ki;
  double out_min = 0.0;
  double out_max = 1.0;
  double crossover_hz = 3000.0;
  double phase_margin_deg = 60.0;
  double control_period = 20e-6;
};

struct SysidSettings {
  std::string preset = "recommended";
  double sample_period = 20e-6;
  double control_period = 20e-6;
  std::size_t samples = 10000;
  ExcitationConfig excitation;
  std::size_t hidden = 7;
  ActivationKind hidden_activation = ActivationKind::TanH;
  TrainConfig train{0.1, 2000, 8, 1};
};

struct ScenarioSettings {
  double duration = 10e-3;
  double event_time = 4e-3;
  PlantModel plant = PlantModel::Averaged;
  double r_nominal = 6.0;  // load used for i_ref = v_ref / r_nominal
};

struct RunConfig {
  ConverterParams converter;
  PiSettings pi;
  MpcConfig mpc;
  SysidSettings sysid;
  ScenarioSettings scenario;
  std::uint64_t seed = 1;
};

/// Parses a config document over the defaults. Throws ConfigError naming the
/// offending key ("section.key") for unknown keys or bad values.
[[nodiscard]] RunConfig parse_config(const nlohmann::json& j);
[[nodiscard]] RunConfig load_config(const std::filesystem::path& path);

/// Sets every RNG seed (excitation, training, restarts) from one value.
void apply_seed(RunConfig& cfg, std::uint64_t seed);

/// Resolved PI gains: explicit ones, or tune_pi at the configured targets.
struct ResolvedPi {
  PiConfig config;
  bool auto_tuned = false;
  double achieved_phase_margin_deg = 0.0;
};
[[nodiscard]] ResolvedPi resolve_pi(const RunConfig& cfg);

/// Full echo of the configuration; parse_config(to_json(c)) reproduces c.
[[nodiscard]] nlohmann::json to_json(const RunConfig& cfg);

/// Seed override from the NNPC_SEED environment variable, if set.
[[nodiscard]] std::optional<std::uint64_t> seed_from_env();

}  // namespace nnpc
