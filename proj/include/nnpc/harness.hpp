#pragma once

// Experiment harness: built-in scenarios, closed-loop runs under PI or NNPC,
// metrics, and paired comparisons.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "nnpc/config.hpp"
#include "nnpc/converter.hpp"
#include "nnpc/mpc.hpp"
#include "nnpc/pi_control.hpp"
#include "nnpc/sysid.hpp"

namespace nnpc {

/// Piecewise-constant signal: value of the last breakpoint with t <= now.
struct Breakpoint {
  double t = 0.0;
  double value = 0.0;
};
using PiecewiseSignal = std::vector<Breakpoint>;

[[nodiscard]] double value_at(const PiecewiseSignal& sig, double t);

struct Scenario {
  std::string name;
  State initial;
  PiecewiseSignal v_ref;
  PiecewiseSignal r_load;
  double duration = 10e-3;
  PlantModel plant = PlantModel::Averaged;
};

/// Throws std::invalid_argument unless both schedules start at t = 0, have
/// strictly increasing breakpoints inside [0, duration) and positive loads.
void validate(const Scenario& sc);

[[nodiscard]] std::vector<std::string> builtin_scenario_names();

/// "startup", "load-step", "ref-up" or "ref-down", timed from `settings`.
[[nodiscard]] Scenario builtin_scenario(const std::string& name, const ScenarioSettings& settings);

struct Metrics {
  double overshoot = 0.0;            // % of step size, or volts when overshoot_absolute
  bool overshoot_absolute = false;   // set when the step size is zero
  double settling_time = 0.0;        // [s] after the last event
  bool settled = true;
  double steady_state_error = 0.0;   // [V]
  double cumulative_cost = 0.0;      // sum of stage_cost * dt
  double dcm_fraction = 0.0;
};

/// Metrics against the final voltage target. Overshoot and settling are
/// measured from the last schedule event; the step size is the target minus
/// the preceding reference (or the initial voltage when v_ref never changes).
[[nodiscard]] Metrics compute_metrics(const Trajectory& traj, const Scenario& sc,
                                      double r_nominal);

[[nodiscard]] nlohmann::json to_json(const Metrics& m);

enum class ControllerKind { Pi, Nnpc };

[[nodiscard]] std::string to_string(ControllerKind k);
[[nodiscard]] ControllerKind controller_from_string(const std::string& s);

struct RunReport {
  std::string scenario;
  ControllerKind controller = ControllerKind::Pi;
  bool ok = true;
  std::string failure;              // message when !ok
  std::optional<std::size_t> failure_step;
  Metrics metrics;
  std::size_t fallbacks = 0;        // NNPC solves that fell back to the last duty
  std::string trajectory_path;
  nlohmann::json resolved;          // every effective setting
};

[[nodiscard]] nlohmann::json to_json(const RunReport& r);

/// One NNPC solve, streamed as t,J,iters,restart_id,duty0.
struct SolveDiagnostic {
  double t = 0.0;
  double cost = 0.0;
  std::size_t iterations = 0;
  int restart_id = 0;
  double duty0 = 0.0;
  bool fallback = false;
};

[[nodiscard]] std::string diagnostics_csv(const std::vector<SolveDiagnostic>& diag);

struct RunOutput {
  RunReport report;
  Scenario scenario;
  ConverterParams params;
  Trajectory trajectory;
  std::vector<SolveDiagnostic> diagnostics;  // NNPC only
};

/// Closed-loop run of `sc`. NNPC requires `bundle`, and then runs at the
/// bundle's sample period; PI runs at cfg.pi.control_period. When `out_dir` is
/// given, writes <scenario>_<controller>.csv and .json there, plus
/// <scenario>_nnpc_solver.csv for NNPC runs.
[[nodiscard]] RunOutput run_scenario(const Scenario& sc, ControllerKind kind, const RunConfig& cfg,
                                     const std::optional<IdentifierBundle>& bundle,
                                     const std::optional<std::filesystem::path>& out_dir = {});

struct MetricDelta {
  std::string name;
  double a = 0.0;
  double b = 0.0;
  double delta = 0.0;  // b - a
};

struct ComparisonReport {
  std::string scenario;
  std::string label_a;
  std::string label_b;
  std::vector<MetricDelta> rows;
  std::string plot_csv;  // t,v_c_a,v_c_b,i_l_a,i_l_b,v_ref
};

/// Side-by-side metrics. Throws Error("mismatch") unless both runs share the
/// scenario, plant parameters and time grid.
[[nodiscard]] ComparisonReport compare(const RunOutput& a, const RunOutput& b);

[[nodiscard]] nlohmann::json to_json(const ComparisonReport& c);

}  // namespace nnpc
