#pragma once

// Receding-horizon optimizer: rolls a differentiable one-step predictor over
// the horizon, scores the discounted tracking cost and minimizes it over the
// duty sequence with projected gradient descent.

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "nnpc/converter.hpp"
#include "nnpc/sysid.hpp"

namespace nnpc {

struct References {
  double v_ref = 0.0;  // [V]
  double i_ref = 0.0;  // [A]
};

/// i_ref policy: steady inductor current implied by v_ref at the nominal load.
[[nodiscard]] References references_for(double v_ref, double r_load_nominal);

struct MpcConfig {
  std::size_t horizon = 10;
  double discount = 0.9;
  double d_min = 0.0;
  double d_max = 1.0;
  std::size_t iterations = 50;
  double step_size = 0.05;  // largest duty change per iteration
  std::size_t restarts = 4;
  double step_period = 20e-6;  // predictor interval [s]
  double slew_weight = 0.0;    // weight on sum (u_k - u_{k-1})^2
  bool warm_start = true;
  std::uint64_t seed = 1;
};

void validate(const MpcConfig& cfg);

/// One-step map x(k+1) = F(x(k), u(k)) together with its Jacobians.
struct PredictorStep {
  State next;
  Eigen::Matrix2d d_state;  // dF/dx
  Eigen::Vector2d d_duty;   // dF/du
};

/// Averaged plant model advanced over the step period with the same RK4
/// sub-stepping the simulator uses.
class AnalyticPredictor {
 public:
  AnalyticPredictor(ConverterParams p, double step_period, double max_substep = 2e-6);

  [[nodiscard]] State next(const State& s, double d) const;
  [[nodiscard]] PredictorStep linearize(const State& s, double d) const;
  [[nodiscard]] const ConverterParams& params() const { return p_; }
  [[nodiscard]] double step_period() const { return step_period_; }

 private:
  ConverterParams p_;
  double step_period_;
  double max_substep_;
  // The averaged model is affine, so the step map is x' = M x + g d exactly.
  Eigen::Matrix2d m_;
  Eigen::Vector2d g_;
};

/// Trained identifier; Jacobians come from backpropagating through the net.
class NeuralPredictor {
 public:
  explicit NeuralPredictor(IdentifierBundle bundle);

  [[nodiscard]] State next(const State& s, double d) const;
  [[nodiscard]] PredictorStep linearize(const State& s, double d) const;
  [[nodiscard]] const IdentifierBundle& bundle() const { return bundle_; }
  [[nodiscard]] double step_period() const { return bundle_.sample_period; }

 private:
  IdentifierBundle bundle_;
};

class Predictor {
 public:
  Predictor(AnalyticPredictor p) : impl_(std::move(p)) {}  // NOLINT(google-explicit-constructor)
  Predictor(NeuralPredictor p) : impl_(std::move(p)) {}    // NOLINT(google-explicit-constructor)

  [[nodiscard]] State next(const State& s, double d) const;
  [[nodiscard]] PredictorStep linearize(const State& s, double d) const;
  [[nodiscard]] double step_period() const;
  [[nodiscard]] bool is_neural() const {
    return std::holds_alternative<NeuralPredictor>(impl_);
  }

 private:
  std::variant<AnalyticPredictor, NeuralPredictor> impl_;
};

using DutySequence = std::vector<double>;

/// sqrt((v_c - v_ref)^2 + (i_L - i_ref)^2).
[[nodiscard]] double stage_cost(const State& s, const References& refs);

/// J = sum_{k=1..N} discount^k * stage_cost(x(k)) (+ optional slew penalty),
/// with x(k) = F(x(k-1), seq[k-1]). x(0) is not scored. Throws RolloutError
/// when the predictor leaves the finite range.
[[nodiscard]] double cost_to_go(const Predictor& pred, const State& s0, const DutySequence& seq,
                                const References& refs, const MpcConfig& cfg);

struct CostGradient {
  double cost = 0.0;
  std::vector<double> grad;  // dJ/dseq[k]
};

/// Cost and its exact gradient by backpropagation through the rollout.
[[nodiscard]] CostGradient cost_and_gradient(const Predictor& pred, const State& s0,
                                             const DutySequence& seq, const References& refs,
                                             const MpcConfig& cfg);

struct OptimizeResult {
  DutySequence sequence;
  double cost = 0.0;
  std::size_t iterations = 0;  // iterations used by the winning start
  int restart_id = 0;          // 0 = warm start, 1..restarts = seeded random starts
};

/// Projected gradient descent from the warm start (if any) and `cfg.restarts`
/// seeded random starts. Each iteration moves by `step` along the normalized
/// projected gradient; a non-improving move halves `step`. Returns the best
/// start (lowest restart id on ties). Throws OptimizationError if no start
/// yields a finite cost.
[[nodiscard]] OptimizeResult optimize_sequence(const Predictor& pred, const State& s0,
                                               const References& refs, const MpcConfig& cfg,
                                               const std::optional<DutySequence>& warm_start,
                                               std::uint64_t restart_seed);

/// Exhaustive search over constant-spaced duties for horizon 1; used as an
/// oracle and as a coarse fallback.
struct GridResult {
  double duty = 0.0;
  double cost = 0.0;
  std::vector<double> costs;  // cost at every grid point
};
[[nodiscard]] GridResult grid_search_horizon1(const Predictor& pred, const State& s0,
                                              const References& refs, const MpcConfig& cfg,
                                              std::size_t points = 1001);

struct NnpcDecision {
  Duty duty;
  OptimizeResult solution;
};

/// Receding-horizon controller state: predictor, configuration and the last
/// solution used to warm-start the next solve.
class NnpcController {
 public:
  NnpcController(Predictor pred, MpcConfig cfg);

  /// Solve, apply the first duty, keep the solution (shifted next call).
  [[nodiscard]] NnpcDecision step(const State& s, const References& refs);

  /// Seed the warm start with a constant sequence (e.g. the feedforward duty).
  void set_initial_guess(double duty);

  [[nodiscard]] const MpcConfig& config() const { return cfg_; }
  [[nodiscard]] const Predictor& predictor() const { return pred_; }
  [[nodiscard]] const std::optional<DutySequence>& previous() const { return previous_; }
  [[nodiscard]] std::uint64_t calls() const { return calls_; }

 private:
  Predictor pred_;
  MpcConfig cfg_;
  std::optional<DutySequence> previous_;
  std::uint64_t calls_ = 0;
};

}  // namespace nnpc
