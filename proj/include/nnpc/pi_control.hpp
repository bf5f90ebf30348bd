#pragma once

// Discrete PI voltage controller with conditional-integration anti-windup,
// plus loop-shaping auto-tuning against the averaged small-signal model.

#include "nnpc/converter.hpp"

namespace nnpc {

struct PiConfig {
  double kp = 0.0;       // duty per V
  double ki = 0.0;       // duty per V*s
  double out_min = 0.0;  // duty saturation
  double out_max = 1.0;

  bool operator==(const PiConfig&) const = default;
};

/// Throws std::invalid_argument on negative gains or bad saturation limits.
void validate(const PiConfig& cfg);

struct PiState {
  double integrator = 0.0;  // accumulated error [V*s]
  bool operator==(const PiState&) const = default;
};

struct PiOutput {
  Duty duty;
  PiState state;
};

/// e = v_ref - v_o; u = kp*e + ki*(I + e*dt), clamped to [out_min, out_max].
/// The integrator is frozen while the unclamped output is saturated in the
/// direction the error would push it.
[[nodiscard]] PiOutput pi_step(const PiConfig& cfg, const PiState& st, double v_ref, double v_o,
                               double dt);

/// Integrator value whose steady output (zero error) equals `duty`.
[[nodiscard]] PiState pi_state_for_duty(const PiConfig& cfg, double duty);

struct PiTuning {
  PiConfig config;
  double crossover_hz = 0.0;
  double phase_margin_deg = 0.0;  // achieved margin on the continuous model
};

/// Places the PI zero so the loop C(s)*Gvd(s) crosses 0 dB at
/// `target_crossover_hz` with exactly `phase_margin_deg` of margin (the lag
/// budget is capped at 80 degrees). Throws std::invalid_argument when the
/// crossover is not below f_sw/2 and TuningError when the plant alone already
/// eats the requested margin.
[[nodiscard]] PiTuning tune_pi(const ConverterParams& p, double target_crossover_hz,
                               double phase_margin_deg, double out_min = 0.0,
                               double out_max = 1.0);

}  // namespace nnpc
