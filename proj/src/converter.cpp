#include "nnpc/converter.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "nnpc/errors.hpp"

namespace nnpc {

namespace {

State add_scaled(const State& s, const StateDerivative& k, double h) {
  return {s.i_l + h * k.di_l, s.v_c + h * k.dv_c};
}

// Classical RK4 for an autonomous right-hand side over one step h.
template <typename Rhs>
State rk4(const State& s, double h, Rhs&& f) {
  const StateDerivative k1 = f(s);
  const StateDerivative k2 = f(add_scaled(s, k1, 0.5 * h));
  const StateDerivative k3 = f(add_scaled(s, k2, 0.5 * h));
  const StateDerivative k4 = f(add_scaled(s, k3, h));
  return {s.i_l + h / 6.0 * (k1.di_l + 2.0 * k2.di_l + 2.0 * k3.di_l + k4.di_l),
          s.v_c + h / 6.0 * (k1.dv_c + 2.0 * k2.dv_c + 2.0 * k3.dv_c + k4.dv_c)};
}

// Switch/diode pair without a reverse path: once the inductor current reaches
// zero it cannot be driven negative.
StateDerivative block_reverse(const State& s, StateDerivative d) {
  if (s.i_l <= 0.0 && d.di_l < 0.0) d.di_l = 0.0;
  return d;
}

}  // namespace

double ConverterParams::resonance_hz() const {
  return 1.0 / (2.0 * std::numbers::pi * std::sqrt(l * c));
}

void validate(const ConverterParams& p) {
  auto check = [](double v, const char* name) {
    if (!std::isfinite(v) || v <= 0.0) {
      throw std::invalid_argument(std::string("converter parameter '") + name +
                                  "' must be finite and > 0");
    }
  };
  check(p.vs, "vs");
  check(p.r_load, "r_load");
  check(p.l, "l");
  check(p.c, "c");
  check(p.f_sw, "f_sw");
}

bool is_low_pass(const ConverterParams& p) { return p.resonance_hz() < p.f_sw; }

bool State::finite() const { return std::isfinite(i_l) && std::isfinite(v_c); }

Duty::Duty(double raw) {
  if (std::isnan(raw)) throw std::invalid_argument("duty cycle is NaN");
  value_ = std::clamp(raw, 0.0, 1.0);
  clamped_ = value_ != raw;
}

StateDerivative derivative_on(const State& s, const ConverterParams& p) {
  return {-s.v_c / p.l + p.vs / p.l, s.i_l / p.c - s.v_c / (p.r_load * p.c)};
}

StateDerivative derivative_off(const State& s, const ConverterParams& p) {
  return {-s.v_c / p.l, s.i_l / p.c - s.v_c / (p.r_load * p.c)};
}

StateDerivative derivative_averaged(const State& s, const ConverterParams& p, Duty d) {
  return {-s.v_c / p.l + d.value() * p.vs / p.l, s.i_l / p.c - s.v_c / (p.r_load * p.c)};
}

State equilibrium(const ConverterParams& p, Duty d) {
  const double v = d.value() * p.vs;
  return {v / p.r_load, v};
}

State step_averaged(const State& s, const ConverterParams& p, Duty d, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("step_averaged: dt must be > 0");
  const State next = rk4(s, dt, [&](const State& x) { return derivative_averaged(x, p, d); });
  if (!next.finite()) {
    throw IntegrationError(dt, "averaged-model step produced a non-finite state (dt too large?)");
  }
  return next;
}

State advance_averaged(const State& s, const ConverterParams& p, Duty d, double interval,
                       double max_substep) {
  if (!(interval > 0.0) || !(max_substep > 0.0)) {
    throw std::invalid_argument("advance_averaged: interval and max_substep must be > 0");
  }
  const auto n = static_cast<int>(std::ceil(interval / max_substep - 1e-9));
  const double h = interval / n;
  State x = s;
  for (int i = 0; i < n; ++i) x = step_averaged(x, p, d, h);
  return x;
}

SwitchedPeriod switched_period(const State& s, const ConverterParams& p, Duty d, int n_sub) {
  if (n_sub < 1) throw std::invalid_argument("switched_period: n_sub must be >= 1");
  const double period = p.switching_period();
  const double t_on = d.value() * period;
  const double t_off = period - t_on;

  SwitchedPeriod out;
  out.samples.reserve(2 * static_cast<std::size_t>(n_sub) + 1);
  out.samples.push_back(s);
  State x = s;
  auto run_interval = [&](double length, bool on) {
    if (length <= 0.0) return;
    const double h = length / n_sub;
    for (int i = 0; i < n_sub; ++i) {
      x = rk4(x, h, [&](const State& y) {
        return block_reverse(y, on ? derivative_on(y, p) : derivative_off(y, p));
      });
      if (x.i_l <= 0.0) {
        if (x.i_l < 0.0 || !on) out.dcm = true;
        x.i_l = 0.0;
      }
      if (!x.finite()) {
        throw IntegrationError(period, "switched-model step produced a non-finite state");
      }
      out.samples.push_back(x);
    }
  };
  run_interval(t_on, true);
  run_interval(t_off, false);
  return out;
}

SwitchedStep step_switched(const State& s, const ConverterParams& p, Duty d, int n_sub) {
  SwitchedPeriod per = switched_period(s, p, d, n_sub);
  return {per.samples.back(), per.dcm};
}

StateSpace linearized(const ConverterParams& p) {
  StateSpace ss;
  ss.a << 0.0, -1.0 / p.l, 1.0 / p.c, -1.0 / (p.c * p.r_load);
  ss.b << p.vs / p.l, 0.0;
  ss.c << 0.0, 1.0;
  ss.d = 0.0;
  return ss;
}

std::complex<double> duty_to_output(const ConverterParams& p, double omega) {
  const std::complex<double> s{0.0, omega};
  return p.vs / (p.l * p.c * s * s + (p.l / p.r_load) * s + 1.0);
}

const char* to_string(PlantModel m) {
  return m == PlantModel::Averaged ? "averaged" : "switched";
}

PlantModel plant_model_from_string(const std::string& s) {
  if (s == "averaged") return PlantModel::Averaged;
  if (s == "switched") return PlantModel::Switched;
  throw std::invalid_argument("unknown plant model '" + s + "' (expected averaged|switched)");
}

ParamSchedule::ParamSchedule(ConverterParams constant) : segments_{{0.0, constant}} {
  validate(constant);
}

ParamSchedule::ParamSchedule(std::vector<std::pair<double, ConverterParams>> segments)
    : segments_(std::move(segments)) {
  if (segments_.empty() || segments_.front().first != 0.0) {
    throw std::invalid_argument("parameter schedule must start at t = 0");
  }
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    validate(segments_[i].second);
    if (i > 0 && !(segments_[i].first > segments_[i - 1].first)) {
      throw std::invalid_argument("parameter schedule breakpoints must be strictly increasing");
    }
  }
}

const ConverterParams& ParamSchedule::at(double t) const {
  // Small slack so that a breakpoint placed on a control instant is honoured
  // despite k*dt rounding.
  constexpr double kSlack = 1e-12;
  const ConverterParams* cur = &segments_.front().second;
  for (const auto& [start, params] : segments_) {
    if (t + kSlack >= start) cur = &params;
  }
  return *cur;
}

Trajectory simulate(const State& s0, const ParamSchedule& schedule, const Controller& ctrl,
                    double duration, double dt_ctrl, PlantModel model,
                    const SimulationOptions& opts) {
  if (!(dt_ctrl > 0.0) || !(duration > 0.0)) {
    throw std::invalid_argument("simulate: duration and dt_ctrl must be > 0");
  }
  if (!s0.finite()) throw std::invalid_argument("simulate: initial state is not finite");

  int periods_per_ctrl = 0;
  if (model == PlantModel::Switched) {
    for (const auto& seg : schedule.segments()) {
      const double ratio = dt_ctrl * seg.second.f_sw;
      if (std::abs(ratio - std::round(ratio)) > 1e-6 || std::round(ratio) < 1.0) {
        throw std::invalid_argument(
            "simulate: dt_ctrl must be an integer multiple of the switching period");
      }
      periods_per_ctrl = static_cast<int>(std::round(ratio));
    }
  }

  const auto steps = static_cast<std::size_t>(std::llround(duration / dt_ctrl));
  Trajectory traj;
  traj.dt = dt_ctrl;
  traj.records.reserve(steps + 1);

  State x = s0;
  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) * dt_ctrl;
    const Duty d = ctrl(t, x);
    TrajectoryRecord rec{t, x, d, false};
    if (k < steps) {
      const ConverterParams& p = schedule.at(t);
      try {
        if (model == PlantModel::Averaged) {
          x = advance_averaged(x, p, d, dt_ctrl, opts.max_substep);
        } else {
          for (int i = 0; i < periods_per_ctrl; ++i) {
            const SwitchedStep st = step_switched(x, p, d, opts.switched_substeps);
            x = st.state;
            rec.dcm = rec.dcm || st.dcm;
          }
        }
      } catch (const IntegrationError& e) {
        throw IntegrationError(t, std::string(e.what()) + " at t=" + std::to_string(t) + " s");
      }
    }
    traj.records.push_back(rec);
  }
  return traj;
}

}  // namespace nnpc
