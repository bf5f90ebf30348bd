#include "nnpc/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

#include "nnpc/errors.hpp"

namespace nnpc {

namespace {

// d stage_cost / d(i_L, v_c); zero at the (non-differentiable) origin.
Eigen::Vector2d stage_cost_grad(const State& s, const References& refs) {
  const double di = s.i_l - refs.i_ref;
  const double dv = s.v_c - refs.v_ref;
  const double c = std::hypot(di, dv);
  if (c == 0.0) return Eigen::Vector2d::Zero();
  return {di / c, dv / c};
}

double slew_cost(const DutySequence& seq, double weight) {
  if (weight == 0.0) return 0.0;
  double s = 0.0;
  for (std::size_t k = 1; k < seq.size(); ++k) s += (seq[k] - seq[k - 1]) * (seq[k] - seq[k - 1]);
  return weight * s;
}

void require_length(const DutySequence& seq, const MpcConfig& cfg) {
  if (seq.size() != cfg.horizon) {
    throw DimensionError(
        fmt::format("duty sequence has {} entries, horizon is {}", seq.size(), cfg.horizon));
  }
}

std::mt19937_64 restart_rng(std::uint64_t seed, std::uint64_t restart) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(restart)};
  return std::mt19937_64(seq);
}

}  // namespace

References references_for(double v_ref, double r_load_nominal) {
  if (!(r_load_nominal > 0.0)) throw std::invalid_argument("nominal load must be > 0");
  return {v_ref, v_ref / r_load_nominal};
}

void validate(const MpcConfig& cfg) {
  if (cfg.horizon < 1) throw std::invalid_argument("mpc horizon must be >= 1");
  if (!(cfg.discount >= 0.0 && cfg.discount <= 1.0)) {
    throw std::invalid_argument("mpc discount must lie in [0, 1]");
  }
  if (!(cfg.d_min >= 0.0 && cfg.d_max <= 1.0 && cfg.d_min <= cfg.d_max)) {
    throw std::invalid_argument("mpc duty bounds must satisfy 0 <= d_min <= d_max <= 1");
  }
  if (!(cfg.step_size > 0.0)) throw std::invalid_argument("mpc step size must be > 0");
  if (!(cfg.step_period > 0.0)) throw std::invalid_argument("mpc step period must be > 0");
  if (!(cfg.slew_weight >= 0.0)) throw std::invalid_argument("mpc slew weight must be >= 0");
}

AnalyticPredictor::AnalyticPredictor(ConverterParams p, double step_period, double max_substep)
    : p_(p), step_period_(step_period), max_substep_(max_substep) {
  validate(p_);
  if (!(step_period_ > 0.0)) throw std::invalid_argument("predictor step period must be > 0");
  const State e1 = advance_averaged({1.0, 0.0}, p_, Duty(0.0), step_period_, max_substep_);
  const State e2 = advance_averaged({0.0, 1.0}, p_, Duty(0.0), step_period_, max_substep_);
  const State u1 = advance_averaged({0.0, 0.0}, p_, Duty(1.0), step_period_, max_substep_);
  m_ << e1.i_l, e2.i_l, e1.v_c, e2.v_c;
  g_ << u1.i_l, u1.v_c;
}

State AnalyticPredictor::next(const State& s, double d) const {
  return advance_averaged(s, p_, Duty(d), step_period_, max_substep_);
}

PredictorStep AnalyticPredictor::linearize(const State& s, double d) const {
  return {next(s, d), m_, g_};
}

NeuralPredictor::NeuralPredictor(IdentifierBundle bundle) : bundle_(std::move(bundle)) {
  validate(bundle_.net);
  if (bundle_.net.in_dim() != 3 || bundle_.net.out_dim() != 2) {
    throw DimensionError("neural predictor needs a 3 -> ... -> 2 network");
  }
  if (!bundle_.net.differentiable()) {
    throw NotDifferentiableError("neural predictor network must be differentiable");
  }
  if (!(bundle_.sample_period > 0.0)) {
    throw std::invalid_argument("identifier bundle has no sample period");
  }
}

State NeuralPredictor::next(const State& s, double d) const {
  return predict_next(bundle_.net, bundle_.stats, s, Duty(d));
}

PredictorStep NeuralPredictor::linearize(const State& s, double d) const {
  const NormStats& st = bundle_.stats;
  const Eigen::Vector3d z = st.normalize_input({s.i_l, s.v_c, Duty(d).value()});
  const ForwardCache cache = forward_cached(bundle_.net, z);
  const auto y = st.denormalize_target(Eigen::Vector2d(cache.output[0], cache.output[1]));

  PredictorStep out;
  out.next = {y[0], y[1]};
  for (int r = 0; r < 2; ++r) {
    const Eigen::VectorXd row =
        backpropagate(bundle_.net, cache, Eigen::Vector2d::Unit(r), nullptr);
    for (int c = 0; c < 2; ++c) {
      out.d_state(r, c) = st.target_scale[r] * row[c] / st.input_scale[c];
    }
    out.d_duty[r] = st.target_scale[r] * row[2] / st.input_scale[2];
  }
  return out;
}

State Predictor::next(const State& s, double d) const {
  return std::visit([&](const auto& p) { return p.next(s, d); }, impl_);
}

PredictorStep Predictor::linearize(const State& s, double d) const {
  return std::visit([&](const auto& p) { return p.linearize(s, d); }, impl_);
}

double Predictor::step_period() const {
  return std::visit([](const auto& p) { return p.step_period(); }, impl_);
}

double stage_cost(const State& s, const References& refs) {
  return std::hypot(s.v_c - refs.v_ref, s.i_l - refs.i_ref);
}

double cost_to_go(const Predictor& pred, const State& s0, const DutySequence& seq,
                  const References& refs, const MpcConfig& cfg) {
  require_length(seq, cfg);
  State x = s0;
  double weight = 1.0;
  double j = 0.0;
  for (std::size_t k = 1; k <= seq.size(); ++k) {
    try {
      x = pred.next(x, seq[k - 1]);
    } catch (const IntegrationError&) {
      throw RolloutError(k, fmt::format("predictor failed at rollout step {}", k));
    }
    if (!x.finite()) {
      throw RolloutError(k, fmt::format("predictor produced a non-finite state at step {}", k));
    }
    weight *= cfg.discount;
    j += weight * stage_cost(x, refs);
  }
  return j + slew_cost(seq, cfg.slew_weight);
}

CostGradient cost_and_gradient(const Predictor& pred, const State& s0, const DutySequence& seq,
                               const References& refs, const MpcConfig& cfg) {
  require_length(seq, cfg);
  const std::size_t n = seq.size();
  std::vector<PredictorStep> steps;
  steps.reserve(n);
  std::vector<double> weights(n + 1, 1.0);

  CostGradient out;
  State x = s0;
  for (std::size_t k = 1; k <= n; ++k) {
    try {
      steps.push_back(pred.linearize(x, seq[k - 1]));
    } catch (const IntegrationError&) {
      throw RolloutError(k, fmt::format("predictor failed at rollout step {}", k));
    }
    x = steps.back().next;
    if (!x.finite()) {
      throw RolloutError(k, fmt::format("predictor produced a non-finite state at step {}", k));
    }
    weights[k] = weights[k - 1] * cfg.discount;
    out.cost += weights[k] * stage_cost(x, refs);
  }
  out.cost += slew_cost(seq, cfg.slew_weight);

  // Adjoint sweep: a holds dJ/dx(k).
  out.grad.assign(n, 0.0);
  Eigen::Vector2d a = Eigen::Vector2d::Zero();
  for (std::size_t k = n; k >= 1; --k) {
    const PredictorStep& st = steps[k - 1];
    a += weights[k] * stage_cost_grad(st.next, refs);
    out.grad[k - 1] = a.dot(st.d_duty);
    a = st.d_state.transpose() * a;
  }
  if (cfg.slew_weight != 0.0) {
    for (std::size_t k = 1; k < n; ++k) {
      const double g = 2.0 * cfg.slew_weight * (seq[k] - seq[k - 1]);
      out.grad[k] += g;
      out.grad[k - 1] -= g;
    }
  }
  return out;
}

OptimizeResult optimize_sequence(const Predictor& pred, const State& s0, const References& refs,
                                 const MpcConfig& cfg,
                                 const std::optional<DutySequence>& warm_start,
                                 std::uint64_t restart_seed) {
  validate(cfg);
  struct Start {
    DutySequence seq;
    int id;
  };
  std::vector<Start> starts;
  if (warm_start) {
    require_length(*warm_start, cfg);
    DutySequence w = *warm_start;
    for (double& d : w) d = std::clamp(d, cfg.d_min, cfg.d_max);
    starts.push_back({std::move(w), 0});
  }
  for (std::size_t r = 1; r <= cfg.restarts; ++r) {
    std::mt19937_64 rng = restart_rng(restart_seed, r);
    std::uniform_real_distribution<double> u(cfg.d_min, cfg.d_max);
    starts.push_back({DutySequence(cfg.horizon, u(rng)), static_cast<int>(r)});
  }
  if (starts.empty()) throw OptimizationError("optimize_sequence: no warm start and no restarts");

  std::optional<OptimizeResult> best;
  for (const Start& start : starts) {
    DutySequence u = start.seq;
    CostGradient cg;
    try {
      cg = cost_and_gradient(pred, s0, u, refs, cfg);
    } catch (const RolloutError&) {
      continue;
    }
    if (!std::isfinite(cg.cost)) continue;

    double step = cfg.step_size;
    std::size_t used = 0;
    DutySequence cand(u.size());
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
      double gmax = 0.0;
      for (std::size_t k = 0; k < u.size(); ++k) {
        const bool blocked = (u[k] <= cfg.d_min && cg.grad[k] > 0.0) ||
                             (u[k] >= cfg.d_max && cg.grad[k] < 0.0);
        if (blocked) cg.grad[k] = 0.0;
        gmax = std::max(gmax, std::abs(cg.grad[k]));
      }
      if (gmax == 0.0 || !std::isfinite(gmax)) break;
      used = it + 1;
      for (std::size_t k = 0; k < u.size(); ++k) {
        cand[k] = std::clamp(u[k] - step * cg.grad[k] / gmax, cfg.d_min, cfg.d_max);
      }
      bool improved = false;
      try {
        CostGradient next = cost_and_gradient(pred, s0, cand, refs, cfg);
        if (next.cost < cg.cost) {
          u = cand;
          cg = std::move(next);
          improved = true;
        }
      } catch (const RolloutError&) {
      }
      if (!improved) {
        step *= 0.5;
        if (step < 1e-12) break;
      }
    }

    const double j = cost_to_go(pred, s0, u, refs, cfg);
    if (!std::isfinite(j)) continue;
    if (!best || j < best->cost) best = OptimizeResult{std::move(u), j, used, start.id};
  }
  if (!best) throw OptimizationError("optimize_sequence: every start produced a non-finite cost");
  return *best;
}

GridResult grid_search_horizon1(const Predictor& pred, const State& s0, const References& refs,
                                const MpcConfig& cfg, std::size_t points) {
  if (cfg.horizon != 1) throw std::invalid_argument("grid search is defined for horizon 1 only");
  if (points < 2) throw std::invalid_argument("grid search needs at least 2 points");
  GridResult g;
  g.cost = std::numeric_limits<double>::infinity();
  g.costs.reserve(points);
  for (std::size_t i = 0; i < points; ++i) {
    const double d = cfg.d_min + (cfg.d_max - cfg.d_min) * static_cast<double>(i) /
                                     static_cast<double>(points - 1);
    const double j = cost_to_go(pred, s0, {d}, refs, cfg);
    g.costs.push_back(j);
    if (j < g.cost) {
      g.cost = j;
      g.duty = d;
    }
  }
  return g;
}

NnpcController::NnpcController(Predictor pred, MpcConfig cfg)
    : pred_(std::move(pred)), cfg_(cfg) {
  validate(cfg_);
}

void NnpcController::set_initial_guess(double duty) {
  previous_ = DutySequence(cfg_.horizon, std::clamp(duty, cfg_.d_min, cfg_.d_max));
}

NnpcDecision NnpcController::step(const State& s, const References& refs) {
  std::optional<DutySequence> warm;
  if (cfg_.warm_start && previous_) {
    DutySequence w(previous_->begin() + 1, previous_->end());
    w.push_back(previous_->back());
    warm = std::move(w);
  }
  OptimizeResult res = optimize_sequence(pred_, s, refs, cfg_, warm, cfg_.seed + calls_);
  ++calls_;
  previous_ = res.sequence;
  return {Duty(res.sequence.front()), std::move(res)};
}

}  // namespace nnpc
