#pragma once

// Buck converter plant: switched on/off dynamics, the duty-averaged model,
// and a fixed-step closed-loop simulator.

#include <complex>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace nnpc {

/// Physical constants of the converter (SI units).
struct ConverterParams {
  double vs = 48.0;       // input voltage [V]
  double r_load = 6.0;    // load resistance [Ohm]
  double l = 220e-6;      // filter inductance [H]
  double c = 10e-6;       // filter capacitance [F]
  double f_sw = 75e3;     // switching frequency [Hz]

  /// 48 V -> 12 V reference design (6 Ohm, 220 uH, 10 uF, 75 kHz).
  [[nodiscard]] static ConverterParams nominal() { return {}; }

  [[nodiscard]] double switching_period() const { return 1.0 / f_sw; }
  /// LC resonance 1/(2*pi*sqrt(LC)) in Hz.
  [[nodiscard]] double resonance_hz() const;

  bool operator==(const ConverterParams&) const = default;
};

/// Throws std::invalid_argument unless every field is finite and > 0.
void validate(const ConverterParams& p);

/// True when the LC corner sits below the switching frequency. Violations are
/// legal but worth a warning.
[[nodiscard]] bool is_low_pass(const ConverterParams& p);

/// Plant state X = [i_L, v_c]. The output voltage is v_c.
struct State {
  double i_l = 0.0;  // [A]
  double v_c = 0.0;  // [V]

  [[nodiscard]] bool finite() const;
  bool operator==(const State&) const = default;
};

struct StateDerivative {
  double di_l = 0.0;  // [A/s]
  double dv_c = 0.0;  // [V/s]
  bool operator==(const StateDerivative&) const = default;
};

/// Duty cycle in [0, 1]. Construction clamps out-of-range input and remembers
/// that it did; NaN is rejected.
class Duty {
 public:
  Duty() = default;
  explicit Duty(double raw);

  [[nodiscard]] double value() const noexcept { return value_; }
  [[nodiscard]] bool clamped() const noexcept { return clamped_; }

 private:
  double value_ = 0.0;
  bool clamped_ = false;
};

[[nodiscard]] StateDerivative derivative_on(const State& s, const ConverterParams& p);
[[nodiscard]] StateDerivative derivative_off(const State& s, const ConverterParams& p);
[[nodiscard]] StateDerivative derivative_averaged(const State& s, const ConverterParams& p,
                                                  Duty d);

/// Operating point of the averaged model: (d*Vs/R, d*Vs).
[[nodiscard]] State equilibrium(const ConverterParams& p, Duty d);

/// One classical RK4 step of the averaged model. Throws IntegrationError
/// when the result is not finite.
[[nodiscard]] State step_averaged(const State& s, const ConverterParams& p, Duty d, double dt);

/// Advances the averaged model over `interval` using equal RK4 sub-steps no
/// longer than `max_substep`.
[[nodiscard]] State advance_averaged(const State& s, const ConverterParams& p, Duty d,
                                     double interval, double max_substep);

struct SwitchedStep {
  State state;
  bool dcm = false;  // inductor current was clamped at zero during the period
};

/// One full PWM period: d/f_sw under the on-dynamics then (1-d)/f_sw under
/// the off-dynamics, `n_sub` RK4 sub-steps per interval. Reverse inductor
/// current is blocked (clamped at zero) and reported as DCM.
[[nodiscard]] SwitchedStep step_switched(const State& s, const ConverterParams& p, Duty d,
                                         int n_sub = 16);

/// Same period as step_switched, keeping every sub-step: samples[0] is the
/// start, samples[n_sub] the end of the on-interval (when d > 0), back() the
/// end of the period.
struct SwitchedPeriod {
  std::vector<State> samples;
  bool dcm = false;
};
[[nodiscard]] SwitchedPeriod switched_period(const State& s, const ConverterParams& p, Duty d,
                                             int n_sub = 16);

/// Linearized averaged model with duty as input and v_c as output.
/// Pure function of the parameters; nothing is cached.
struct StateSpace {
  Eigen::Matrix2d a;
  Eigen::Vector2d b;
  Eigen::RowVector2d c;
  double d = 0.0;
};
[[nodiscard]] StateSpace linearized(const ConverterParams& p);

/// Duty-to-output transfer function Vs / (LC s^2 + (L/R) s + 1) at s = j*omega.
[[nodiscard]] std::complex<double> duty_to_output(const ConverterParams& p, double omega);

enum class PlantModel { Averaged, Switched };

[[nodiscard]] const char* to_string(PlantModel m);
[[nodiscard]] PlantModel plant_model_from_string(const std::string& s);

/// Piecewise-constant parameter schedule. Each entry takes effect at its
/// start time; the first entry must start at t = 0.
class ParamSchedule {
 public:
  explicit ParamSchedule(ConverterParams constant);
  explicit ParamSchedule(std::vector<std::pair<double, ConverterParams>> segments);

  [[nodiscard]] const ConverterParams& at(double t) const;
  [[nodiscard]] const std::vector<std::pair<double, ConverterParams>>& segments() const {
    return segments_;
  }

 private:
  std::vector<std::pair<double, ConverterParams>> segments_;
};

struct TrajectoryRecord {
  double t = 0.0;
  State state;
  Duty duty;         // applied over [t, t + dt)
  bool dcm = false;  // DCM seen during [t, t + dt)
};

struct Trajectory {
  double dt = 0.0;
  std::vector<TrajectoryRecord> records;
};

/// Called once per control instant with the current time and plant state.
using Controller = std::function<Duty(double t, const State& s)>;

struct SimulationOptions {
  double max_substep = 2e-6;  // averaged model RK4 step ceiling [s]
  int switched_substeps = 16;
};

/// Closed-loop simulation. Produces one record per control instant
/// k*dt_ctrl for k = 0..round(duration/dt_ctrl); the last record carries the
/// final state (its duty is requested but never applied). Parameter changes
/// take effect at the first control instant at or after their start time.
[[nodiscard]] Trajectory simulate(const State& s0, const ParamSchedule& schedule,
                                  const Controller& ctrl, double duration, double dt_ctrl,
                                  PlantModel model, const SimulationOptions& opts = {});

}  // namespace nnpc
