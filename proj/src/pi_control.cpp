#include "nnpc/pi_control.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <fmt/format.h>

#include "nnpc/errors.hpp"

namespace nnpc {

void validate(const PiConfig& cfg) {
  if (!(cfg.kp >= 0.0) || !(cfg.ki >= 0.0)) {
    throw std::invalid_argument("PI gains must be non-negative");
  }
  if (!(cfg.out_min < cfg.out_max) || cfg.out_min < 0.0 || cfg.out_max > 1.0) {
    throw std::invalid_argument("PI output bounds must satisfy 0 <= out_min < out_max <= 1");
  }
}

PiOutput pi_step(const PiConfig& cfg, const PiState& st, double v_ref, double v_o, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("pi_step: dt must be > 0");
  const double e = v_ref - v_o;
  const double integrated = st.integrator + e * dt;
  const double candidate = cfg.kp * e + cfg.ki * integrated;

  const bool pinned_high = candidate > cfg.out_max && e > 0.0;
  const bool pinned_low = candidate < cfg.out_min && e < 0.0;

  PiOutput out;
  out.state.integrator = (pinned_high || pinned_low) ? st.integrator : integrated;
  out.duty = Duty(std::clamp(candidate, cfg.out_min, cfg.out_max));
  return out;
}

PiState pi_state_for_duty(const PiConfig& cfg, double duty) {
  if (cfg.ki <= 0.0) return {};
  return {duty / cfg.ki};
}

PiTuning tune_pi(const ConverterParams& p, double target_crossover_hz, double phase_margin_deg,
                 double out_min, double out_max) {
  validate(p);
  if (!(target_crossover_hz > 0.0) || !(target_crossover_hz < p.f_sw / 2.0)) {
    throw std::invalid_argument(
        fmt::format("tune_pi: crossover {} Hz must lie in (0, f_sw/2 = {} Hz)", target_crossover_hz,
                    p.f_sw / 2.0));
  }
  const double wc = 2.0 * std::numbers::pi * target_crossover_hz;
  const std::complex<double> g = duty_to_output(p, wc);
  const double plant_phase_deg = std::arg(g) * 180.0 / std::numbers::pi;
  // Margin left for the PI lag -atan(wi/wc).
  const double plant_margin = 180.0 + plant_phase_deg;
  const double lag_budget = plant_margin - phase_margin_deg;
  if (lag_budget < 0.0) {
    throw TuningError(plant_margin,
                      fmt::format("tune_pi: {:.2f} deg margin infeasible at {} Hz; at most "
                                  "{:.2f} deg is achievable",
                                  phase_margin_deg, target_crossover_hz, plant_margin));
  }
  const double lag_deg = std::min(lag_budget, 80.0);
  const double wi = wc * std::tan(lag_deg * std::numbers::pi / 180.0);
  const double kp = 1.0 / (std::abs(g) * std::sqrt(1.0 + (wi / wc) * (wi / wc)));

  PiTuning t;
  t.config = {kp, kp * wi, out_min, out_max};
  validate(t.config);
  t.crossover_hz = target_crossover_hz;
  t.phase_margin_deg = plant_margin - lag_deg;
  return t;
}

}  // namespace nnpc
