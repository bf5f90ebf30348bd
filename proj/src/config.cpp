#include "nnpc/config.hpp"

#include <cstdlib>
#include <functional>
#include <map>
#include <stdexcept>

#include <fmt/format.h>

#include "nnpc/errors.hpp"
#include "nnpc/io.hpp"

namespace nnpc {

namespace {

using Json = nlohmann::json;
using Setter = std::function<void(const Json&)>;

// Applies each key of `obj` through the matching setter; unknown keys and
// type errors are reported with their dotted path.
void apply_section(const Json& obj, const std::string& section,
                   const std::map<std::string, Setter>& setters) {
  if (!obj.is_object()) throw ConfigError(section, "config section '" + section + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    const std::string path = section + "." + key;
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError(path, "unknown config key '" + path + "'");
    try {
      it->second(value);
    } catch (const Json::exception& e) {
      throw ConfigError(path, fmt::format("bad value for '{}': {}", path, e.what()));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(path, fmt::format("bad value for '{}': {}", path, e.what()));
    }
  }
}

template <typename T>
Setter set(T& field) {
  return [&field](const Json& v) { field = v.get<T>(); };
}

}  // namespace

RunConfig parse_config(const Json& j) {
  RunConfig c;
  if (!j.is_object()) throw ConfigError("", "config document must be a JSON object");
  bool preset_sample = false;
  bool preset_control = false;
  bool preset_samples = false;

  if (const auto it = j.find("seed"); it != j.end()) {
    try {
      apply_seed(c, it->get<std::uint64_t>());
    } catch (const Json::exception& e) {
      throw ConfigError("seed", std::string("bad value for 'seed': ") + e.what());
    }
  }

  for (const auto& [section, body] : j.items()) {
    if (section == "seed") {
      continue;
    } else if (section == "converter") {
      apply_section(body, section,
                    {{"vs", set(c.converter.vs)},
                     {"r_load", set(c.converter.r_load)},
                     {"l", set(c.converter.l)},
                     {"c", set(c.converter.c)},
                     {"f_sw", set(c.converter.f_sw)}});
    } else if (section == "pi") {
      apply_section(body, section,
                    {{"kp", [&](const Json& v) { c.pi.kp = v.get<double>(); }},
                     {"ki", [&](const Json& v) { c.pi.ki = v.get<double>(); }},
                     {"out_min", set(c.pi.out_min)},
                     {"out_max", set(c.pi.out_max)},
                     {"crossover_hz", set(c.pi.crossover_hz)},
                     {"phase_margin_deg", set(c.pi.phase_margin_deg)},
                     {"control_period", set(c.pi.control_period)}});
    } else if (section == "mpc") {
      apply_section(body, section,
                    {{"horizon", set(c.mpc.horizon)},
                     {"discount", set(c.mpc.discount)},
                     {"d_min", set(c.mpc.d_min)},
                     {"d_max", set(c.mpc.d_max)},
                     {"iterations", set(c.mpc.iterations)},
                     {"step_size", set(c.mpc.step_size)},
                     {"restarts", set(c.mpc.restarts)},
                     {"step_period", set(c.mpc.step_period)},
                     {"slew_weight", set(c.mpc.slew_weight)},
                     {"warm_start", set(c.mpc.warm_start)},
                     {"seed", set(c.mpc.seed)}});
    } else if (section == "sysid") {
      SysidSettings& s = c.sysid;
      apply_section(
          body, section,
          {{"preset",
            [&](const Json& v) {
              const SysidPreset p = sysid_preset(v.get<std::string>());
              s.preset = p.name;
              if (!preset_sample) s.sample_period = p.sample_period;
              if (!preset_control) s.control_period = p.control_period;
              if (!preset_samples) s.samples = p.samples;
            }},
           {"sample_period",
            [&](const Json& v) {
              s.sample_period = v.get<double>();
              preset_sample = true;
            }},
           {"control_period",
            [&](const Json& v) {
              s.control_period = v.get<double>();
              preset_control = true;
            }},
           {"samples",
            [&](const Json& v) {
              s.samples = v.get<std::size_t>();
              preset_samples = true;
            }},
           {"v_ref_min", set(s.excitation.v_ref_min)},
           {"v_ref_max", set(s.excitation.v_ref_max)},
           {"r_load_min", set(s.excitation.r_load_min)},
           {"r_load_max", set(s.excitation.r_load_max)},
           {"dwell_min", set(s.excitation.dwell_min)},
           {"dwell_max", set(s.excitation.dwell_max)},
           {"excitation_seed", set(s.excitation.seed)},
           {"hidden", set(s.hidden)},
           {"hidden_activation",
            [&](const Json& v) { s.hidden_activation = activation_from_name(v.get<std::string>()); }},
           {"learning_rate", set(s.train.learning_rate)},
           {"epochs", set(s.train.epochs)},
           {"batch_size", set(s.train.batch_size)},
           {"train_seed", set(s.train.seed)}});
    } else if (section == "scenario") {
      apply_section(body, section,
                    {{"duration", set(c.scenario.duration)},
                     {"event_time", set(c.scenario.event_time)},
                     {"plant_model",
                      [&](const Json& v) {
                        c.scenario.plant = plant_model_from_string(v.get<std::string>());
                      }},
                     {"r_nominal", set(c.scenario.r_nominal)}});
    } else {
      throw ConfigError(section, "unknown config section '" + section + "'");
    }
  }

  auto check = [](const std::string& key, auto&& fn) {
    try {
      fn();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(key, fmt::format("invalid '{}' section: {}", key, e.what()));
    }
  };
  check("converter", [&] { validate(c.converter); });
  check("mpc", [&] { validate(c.mpc); });
  check("sysid", [&] {
    validate(c.sysid.excitation, c.converter);
    validate(c.sysid.train);
    if (c.sysid.hidden < 1) throw std::invalid_argument("hidden must be >= 1");
    if (!(c.sysid.sample_period > 0.0) || !(c.sysid.control_period > 0.0)) {
      throw std::invalid_argument("sample and control periods must be > 0");
    }
  });
  check("pi", [&] {
    if (c.pi.kp.has_value() != c.pi.ki.has_value()) {
      throw std::invalid_argument("give both kp and ki, or neither to auto-tune");
    }
    if (!(c.pi.control_period > 0.0)) throw std::invalid_argument("control_period must be > 0");
  });
  check("scenario", [&] {
    if (!(c.scenario.duration > 0.0) || !(c.scenario.event_time > 0.0) ||
        !(c.scenario.event_time < c.scenario.duration)) {
      throw std::invalid_argument("need 0 < event_time < duration");
    }
    if (!(c.scenario.r_nominal > 0.0)) throw std::invalid_argument("r_nominal must be > 0");
  });
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::exception& e) {
    throw ConfigError("", "config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

void apply_seed(RunConfig& cfg, std::uint64_t seed) {
  cfg.seed = seed;
  cfg.sysid.excitation.seed = seed;
  cfg.sysid.train.seed = seed;
  cfg.mpc.seed = seed;
}

ResolvedPi resolve_pi(const RunConfig& cfg) {
  ResolvedPi r;
  if (cfg.pi.kp && cfg.pi.ki) {
    r.config = {*cfg.pi.kp, *cfg.pi.ki, cfg.pi.out_min, cfg.pi.out_max};
    validate(r.config);
    return r;
  }
  const PiTuning t = tune_pi(cfg.converter, cfg.pi.crossover_hz, cfg.pi.phase_margin_deg,
                             cfg.pi.out_min, cfg.pi.out_max);
  r.config = t.config;
  r.auto_tuned = true;
  r.achieved_phase_margin_deg = t.phase_margin_deg;
  return r;
}

Json to_json(const RunConfig& c) {
  Json pi = {{"out_min", c.pi.out_min},
             {"out_max", c.pi.out_max},
             {"crossover_hz", c.pi.crossover_hz},
             {"phase_margin_deg", c.pi.phase_margin_deg},
             {"control_period", c.pi.control_period}};
  if (c.pi.kp) pi["kp"] = *c.pi.kp;
  if (c.pi.ki) pi["ki"] = *c.pi.ki;
  const ExcitationConfig& e = c.sysid.excitation;
  return {
      {"seed", c.seed},
      {"converter",
       {{"vs", c.converter.vs},
        {"r_load", c.converter.r_load},
        {"l", c.converter.l},
        {"c", c.converter.c},
        {"f_sw", c.converter.f_sw}}},
      {"pi", pi},
      {"mpc",
       {{"horizon", c.mpc.horizon},
        {"discount", c.mpc.discount},
        {"d_min", c.mpc.d_min},
        {"d_max", c.mpc.d_max},
        {"iterations", c.mpc.iterations},
        {"step_size", c.mpc.step_size},
        {"restarts", c.mpc.restarts},
        {"step_period", c.mpc.step_period},
        {"slew_weight", c.mpc.slew_weight},
        {"warm_start", c.mpc.warm_start},
        {"seed", c.mpc.seed}}},
      {"sysid",
       {{"preset", c.sysid.preset},
        {"sample_period", c.sysid.sample_period},
        {"control_period", c.sysid.control_period},
        {"samples", c.sysid.samples},
        {"v_ref_min", e.v_ref_min},
        {"v_ref_max", e.v_ref_max},
        {"r_load_min", e.r_load_min},
        {"r_load_max", e.r_load_max},
        {"dwell_min", e.dwell_min},
        {"dwell_max", e.dwell_max},
        {"excitation_seed", e.seed},
        {"hidden", c.sysid.hidden},
        {"hidden_activation", activation_name(c.sysid.hidden_activation)},
        {"learning_rate", c.sysid.train.learning_rate},
        {"epochs", c.sysid.train.epochs},
        {"batch_size", c.sysid.train.batch_size},
        {"train_seed", c.sysid.train.seed}}},
      {"scenario",
       {{"duration", c.scenario.duration},
        {"event_time", c.scenario.event_time},
        {"plant_model", to_string(c.scenario.plant)},
        {"r_nominal", c.scenario.r_nominal}}},
  };
}

std::optional<std::uint64_t> seed_from_env() {
  const char* s = std::getenv("NNPC_SEED");
  if (s == nullptr || *s == '\0') return std::nullopt;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(s, &used);
    if (s[used] != '\0') throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("NNPC_SEED", std::string("NNPC_SEED is not an unsigned integer: ") + s);
  }
}

}  // namespace nnpc
