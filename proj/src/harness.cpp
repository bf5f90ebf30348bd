#include "nnpc/harness.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "nnpc/errors.hpp"
#include "nnpc/io.hpp"

namespace nnpc {

namespace {

constexpr double kSettleBand = 0.02;
constexpr double kZeroStep = 1e-9;

double last_event_time(const Scenario& sc) {
  double t = 0.0;
  for (const auto* sig : {&sc.v_ref, &sc.r_load}) {
    if (sig->size() > 1) t = std::max(t, sig->back().t);
  }
  return t;
}

ParamSchedule load_schedule(const ConverterParams& base, const PiecewiseSignal& r_load) {
  std::vector<std::pair<double, ConverterParams>> segs;
  for (const Breakpoint& b : r_load) {
    ConverterParams p = base;
    p.r_load = b.value;
    segs.emplace_back(b.t, p);
  }
  return ParamSchedule(std::move(segs));
}

std::string slug(ControllerKind k) { return k == ControllerKind::Pi ? "pi" : "nnpc"; }

}  // namespace

double value_at(const PiecewiseSignal& sig, double t) {
  if (sig.empty()) throw std::invalid_argument("value_at: empty signal");
  double v = sig.front().value;
  for (const Breakpoint& b : sig) {
    if (b.t <= t + 1e-12) v = b.value;
  }
  return v;
}

void validate(const Scenario& sc) {
  if (sc.name.empty()) throw std::invalid_argument("scenario needs a name");
  if (!(sc.duration > 0.0)) throw std::invalid_argument("scenario duration must be > 0");
  if (!sc.initial.finite()) throw std::invalid_argument("scenario initial state is not finite");
  for (const auto* sig : {&sc.v_ref, &sc.r_load}) {
    if (sig->empty() || sig->front().t != 0.0) {
      throw std::invalid_argument("scenario schedules must start at t = 0");
    }
    for (std::size_t i = 1; i < sig->size(); ++i) {
      if (!((*sig)[i].t > (*sig)[i - 1].t) || !((*sig)[i].t < sc.duration)) {
        throw std::invalid_argument("scenario breakpoints must increase strictly within the run");
      }
    }
  }
  for (const Breakpoint& b : sc.r_load) {
    if (!(b.value > 0.0)) throw std::invalid_argument("scenario loads must be > 0");
  }
  for (const Breakpoint& b : sc.v_ref) {
    if (!std::isfinite(b.value)) throw std::invalid_argument("scenario references must be finite");
  }
}

std::vector<std::string> builtin_scenario_names() {
  return {"startup", "load-step", "ref-up", "ref-down"};
}

Scenario builtin_scenario(const std::string& name, const ScenarioSettings& settings) {
  const ConverterParams nom = ConverterParams::nominal();
  const double te = settings.event_time;
  const State settled{12.0 / nom.r_load, 12.0};

  Scenario sc;
  sc.name = name;
  sc.duration = settings.duration;
  sc.plant = settings.plant;
  sc.r_load = {{0.0, nom.r_load}};
  if (name == "startup") {
    sc.initial = {0.0, 0.0};
    sc.v_ref = {{0.0, 12.0}};
  } else if (name == "load-step") {
    sc.initial = settled;
    sc.v_ref = {{0.0, 12.0}};
    sc.r_load = {{0.0, 6.0}, {te, 5.0}};
  } else if (name == "ref-up") {
    sc.initial = settled;
    sc.v_ref = {{0.0, 12.0}, {te, 15.0}};
  } else if (name == "ref-down") {
    sc.initial = settled;
    sc.v_ref = {{0.0, 12.0}, {te, 9.0}};
  } else {
    throw ConfigError("scenario", "unknown scenario '" + name +
                                      "' (expected startup, load-step, ref-up or ref-down)");
  }
  validate(sc);
  return sc;
}

Metrics compute_metrics(const Trajectory& traj, const Scenario& sc, double r_nominal) {
  if (traj.records.empty()) throw std::invalid_argument("compute_metrics: empty trajectory");
  const auto& recs = traj.records;
  const std::size_t n = recs.size();
  const double target = sc.v_ref.back().value;
  const double t_event = last_event_time(sc);
  const double start =
      sc.v_ref.size() > 1 ? sc.v_ref[sc.v_ref.size() - 2].value : sc.initial.v_c;
  const double step = target - start;

  Metrics m;
  std::size_t first = 0;
  while (first < n && recs[first].t < t_event - 1e-12) ++first;

  if (std::abs(step) > kZeroStep) {
    const double dir = step > 0.0 ? 1.0 : -1.0;
    double peak = 0.0;
    for (std::size_t k = first; k < n; ++k) peak = std::max(peak, dir * (recs[k].state.v_c - target));
    m.overshoot = 100.0 * peak / std::abs(step);
  } else {
    m.overshoot_absolute = true;
    for (std::size_t k = first; k < n; ++k) {
      m.overshoot = std::max(m.overshoot, std::abs(recs[k].state.v_c - target));
    }
  }

  const double band = kSettleBand * std::abs(target);
  std::optional<std::size_t> last_out;
  for (std::size_t k = first; k < n; ++k) {
    if (std::abs(recs[k].state.v_c - target) > band) last_out = k;
  }
  if (!last_out) {
    m.settling_time = 0.0;
  } else if (*last_out + 1 < n) {
    m.settling_time = recs[*last_out + 1].t - t_event;
  } else {
    m.settled = false;
    m.settling_time = recs.back().t - t_event;
  }

  const std::size_t tail = std::max<std::size_t>(1, n / 10);
  double mean = 0.0;
  for (std::size_t k = n - tail; k < n; ++k) mean += recs[k].state.v_c;
  m.steady_state_error = std::abs(target - mean / static_cast<double>(tail));

  std::size_t dcm = 0;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const References refs = references_for(value_at(sc.v_ref, recs[k].t), r_nominal);
    m.cumulative_cost += stage_cost(recs[k].state, refs) * traj.dt;
    if (recs[k].dcm) ++dcm;
  }
  m.dcm_fraction = n > 1 ? static_cast<double>(dcm) / static_cast<double>(n - 1) : 0.0;
  return m;
}

nlohmann::json to_json(const Metrics& m) {
  return {{"overshoot", m.overshoot},
          {"overshoot_unit", m.overshoot_absolute ? "V" : "%"},
          {"settling_time", m.settling_time},
          {"settled", m.settled},
          {"steady_state_error", m.steady_state_error},
          {"cumulative_cost", m.cumulative_cost},
          {"dcm_fraction", m.dcm_fraction}};
}

std::string to_string(ControllerKind k) { return k == ControllerKind::Pi ? "PI" : "NNPC"; }

ControllerKind controller_from_string(const std::string& s) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  if (l == "pi") return ControllerKind::Pi;
  if (l == "nnpc") return ControllerKind::Nnpc;
  throw ConfigError("controller", "unknown controller '" + s + "' (expected pi or nnpc)");
}

nlohmann::json to_json(const RunReport& r) {
  nlohmann::json j = {{"scenario", r.scenario},
                      {"controller", to_string(r.controller)},
                      {"status", r.ok ? "ok" : "failed"},
                      {"metrics", r.ok ? to_json(r.metrics) : nlohmann::json(nullptr)},
                      {"fallbacks", r.fallbacks},
                      {"trajectory", r.trajectory_path},
                      {"resolved", r.resolved}};
  if (!r.ok) {
    j["failure"] = {{"message", r.failure},
                    {"step", r.failure_step ? nlohmann::json(*r.failure_step) : nlohmann::json(nullptr)}};
  }
  return j;
}

std::string diagnostics_csv(const std::vector<SolveDiagnostic>& diag) {
  std::string out = "t,J,iters,restart_id,duty0,fallback\n";
  for (const SolveDiagnostic& d : diag) {
    out += fmt::format("{},{},{},{},{},{}\n", format_sig(d.t, 9), format_sig(d.cost, 9),
                       d.iterations, d.restart_id, format_sig(d.duty0, 9), d.fallback ? 1 : 0);
  }
  return out;
}

RunOutput run_scenario(const Scenario& sc, ControllerKind kind, const RunConfig& cfg,
                       const std::optional<IdentifierBundle>& bundle,
                       const std::optional<std::filesystem::path>& out_dir) {
  validate(sc);
  RunOutput out;
  out.scenario = sc;
  out.params = cfg.converter;
  out.params.r_load = sc.r_load.front().value;
  RunReport& rep = out.report;
  rep.scenario = sc.name;
  rep.controller = kind;

  const ParamSchedule schedule = load_schedule(cfg.converter, sc.r_load);
  const double r_nom = cfg.scenario.r_nominal;

  RunConfig echoed = cfg;
  nlohmann::json resolved_extra;
  Controller ctrl;
  double dt = 0.0;

  // Controller state lives here and is captured by reference in `ctrl`.
  PiState pi_state;
  ResolvedPi pi;
  std::optional<NnpcController> nnpc;
  double last_duty = 0.0;

  if (kind == ControllerKind::Pi) {
    pi = resolve_pi(cfg);
    echoed.pi.kp = pi.config.kp;
    echoed.pi.ki = pi.config.ki;
    dt = cfg.pi.control_period;
    if (sc.initial.v_c > 0.0) pi_state = pi_state_for_duty(pi.config, sc.initial.v_c / cfg.converter.vs);
    resolved_extra["pi"] = {{"kp", pi.config.kp},
                            {"ki", pi.config.ki},
                            {"auto_tuned", pi.auto_tuned},
                            {"initial_integrator", pi_state.integrator}};
    if (pi.auto_tuned) resolved_extra["pi"]["achieved_phase_margin_deg"] = pi.achieved_phase_margin_deg;
    ctrl = [&](double t, const State& s) {
      const PiOutput o = pi_step(pi.config, pi_state, value_at(sc.v_ref, t), s.v_c, dt);
      pi_state = o.state;
      return o.duty;
    };
  } else {
    if (!bundle) throw ConfigError("model", "NNPC run needs a trained identifier bundle");
    dt = bundle->sample_period;
    MpcConfig mcfg = cfg.mpc;
    mcfg.step_period = dt;
    echoed.mpc.step_period = dt;
    nnpc.emplace(Predictor(NeuralPredictor(*bundle)), mcfg);
    last_duty = std::clamp(value_at(sc.v_ref, 0.0) / cfg.converter.vs, mcfg.d_min, mcfg.d_max);
    nnpc->set_initial_guess(last_duty);
    resolved_extra["nnpc"] = {{"initial_guess", last_duty},
                              {"control_period", dt},
                              {"identifier_hidden", bundle->net.layers.front().out_dim()},
                              {"identifier_sample_period", bundle->sample_period}};
    ctrl = [&](double t, const State& s) {
      const References refs = references_for(value_at(sc.v_ref, t), r_nom);
      SolveDiagnostic diag{t, 0.0, 0, 0, last_duty, true};
      try {
        const NnpcDecision dec = nnpc->step(s, refs);
        last_duty = dec.duty.value();
        diag = {t, dec.solution.cost, dec.solution.iterations, dec.solution.restart_id, last_duty,
                false};
      } catch (const OptimizationError&) {
        ++rep.fallbacks;
      } catch (const RolloutError&) {
        ++rep.fallbacks;
      }
      out.diagnostics.push_back(diag);
      return Duty(last_duty);
    };
  }

  rep.resolved = to_json(echoed);
  rep.resolved["run"] = resolved_extra;
  rep.resolved["run"]["control_period"] = dt;
  rep.resolved["run"]["simulation"] = {{"max_substep", SimulationOptions{}.max_substep},
                                       {"switched_substeps", SimulationOptions{}.switched_substeps}};
  rep.resolved["run"]["scenario"] = {{"name", sc.name},
                                     {"initial", {sc.initial.i_l, sc.initial.v_c}},
                                     {"duration", sc.duration},
                                     {"plant_model", to_string(sc.plant)}};

  try {
    out.trajectory = simulate(sc.initial, schedule, ctrl, sc.duration, dt, sc.plant);
    rep.metrics = compute_metrics(out.trajectory, sc, r_nom);
  } catch (const IntegrationError& e) {
    rep.ok = false;
    rep.failure = e.what();
    rep.failure_step = static_cast<std::size_t>(std::llround(e.time() / dt));
  }

  if (out_dir) {
    const std::string stem = sc.name + "_" + slug(kind);
    const std::filesystem::path csv = *out_dir / (stem + ".csv");
    if (rep.ok) {
      write_file_atomic(csv, trajectory_csv(out.trajectory));
      rep.trajectory_path = csv.string();
    }
    if (kind == ControllerKind::Nnpc) {
      write_file_atomic(*out_dir / (stem + "_solver.csv"), diagnostics_csv(out.diagnostics));
    }
    write_file_atomic(*out_dir / (stem + ".json"), to_json(rep).dump(2) + "\n");
  }
  return out;
}

ComparisonReport compare(const RunOutput& a, const RunOutput& b) {
  if (a.report.scenario != b.report.scenario) {
    throw Error("mismatch", fmt::format("cannot compare scenario '{}' with '{}'",
                                        a.report.scenario, b.report.scenario));
  }
  if (!(a.params == b.params)) throw Error("mismatch", "runs use different plant parameters");
  if (!a.report.ok || !b.report.ok) throw Error("mismatch", "cannot compare a failed run");
  if (a.trajectory.dt != b.trajectory.dt ||
      a.trajectory.records.size() != b.trajectory.records.size()) {
    throw Error("mismatch", "runs use different time grids");
  }

  ComparisonReport c;
  c.scenario = a.report.scenario;
  c.label_a = to_string(a.report.controller);
  c.label_b = to_string(b.report.controller);
  const Metrics& ma = a.report.metrics;
  const Metrics& mb = b.report.metrics;
  auto row = [&](const std::string& name, double va, double vb) {
    c.rows.push_back({name, va, vb, vb - va});
  };
  row("overshoot", ma.overshoot, mb.overshoot);
  row("settling_time", ma.settling_time, mb.settling_time);
  row("steady_state_error", ma.steady_state_error, mb.steady_state_error);
  row("cumulative_cost", ma.cumulative_cost, mb.cumulative_cost);
  row("dcm_fraction", ma.dcm_fraction, mb.dcm_fraction);

  std::string csv = "t,v_c_a,v_c_b,i_l_a,i_l_b,v_ref\n";
  const auto& ra = a.trajectory.records;
  const auto& rb = b.trajectory.records;
  for (std::size_t k = 0; k < ra.size(); ++k) {
    csv += fmt::format("{},{},{},{},{},{}\n", format_sig(ra[k].t, 9), format_sig(ra[k].state.v_c, 9),
                       format_sig(rb[k].state.v_c, 9), format_sig(ra[k].state.i_l, 9),
                       format_sig(rb[k].state.i_l, 9),
                       format_sig(value_at(a.scenario.v_ref, ra[k].t), 9));
  }
  c.plot_csv = std::move(csv);
  return c;
}

nlohmann::json to_json(const ComparisonReport& c) {
  nlohmann::json rows = nlohmann::json::array();
  for (const MetricDelta& r : c.rows) {
    rows.push_back({{"metric", r.name}, {"a", r.a}, {"b", r.b}, {"delta", r.delta}});
  }
  return {{"scenario", c.scenario}, {"a", c.label_a}, {"b", c.label_b}, {"metrics", rows}};
}

}  // namespace nnpc
