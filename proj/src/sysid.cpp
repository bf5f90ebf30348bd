#include "nnpc/sysid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

#include "nnpc/errors.hpp"

namespace nnpc {

namespace {

constexpr double kCollectSubstep = 2e-6;

double floor_scale(double s) { return s > NormStats::kScaleFloor ? s : NormStats::kScaleFloor; }

std::size_t integer_ratio(double num, double den, const char* what) {
  const double r = num / den;
  const double rounded = std::round(r);
  if (rounded < 1.0 || std::abs(r - rounded) > 1e-6 * rounded) {
    throw std::invalid_argument(fmt::format("{}: {} is not an integer multiple of {}", what, num,
                                            den));
  }
  return static_cast<std::size_t>(rounded);
}

}  // namespace

Eigen::Vector3d NormStats::normalize_input(const std::array<double, 3>& x) const {
  return {(x[0] - input_mean[0]) / input_scale[0], (x[1] - input_mean[1]) / input_scale[1],
          (x[2] - input_mean[2]) / input_scale[2]};
}

std::array<double, 3> NormStats::denormalize_input(const Eigen::Vector3d& z) const {
  return {z[0] * input_scale[0] + input_mean[0], z[1] * input_scale[1] + input_mean[1],
          z[2] * input_scale[2] + input_mean[2]};
}

Eigen::Vector2d NormStats::normalize_target(const std::array<double, 2>& y) const {
  return {(y[0] - target_mean[0]) / target_scale[0], (y[1] - target_mean[1]) / target_scale[1]};
}

std::array<double, 2> NormStats::denormalize_target(const Eigen::Vector2d& z) const {
  return {z[0] * target_scale[0] + target_mean[0], z[1] * target_scale[1] + target_mean[1]};
}

void validate(const ExcitationConfig& exc, const ConverterParams& p) {
  auto range = [](double lo, double hi, const char* name) {
    if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi) {
      throw std::invalid_argument(fmt::format("excitation {} range [{}, {}] is empty", name, lo,
                                              hi));
    }
  };
  range(exc.v_ref_min, exc.v_ref_max, "v_ref");
  range(exc.r_load_min, exc.r_load_max, "r_load");
  range(exc.dwell_min, exc.dwell_max, "dwell");
  if (exc.v_ref_min <= 0.0 || exc.v_ref_max >= p.vs) {
    throw std::invalid_argument("excitation v_ref range must lie inside (0, vs)");
  }
  if (exc.r_load_min <= 0.0) throw std::invalid_argument("excitation r_load must be > 0");
  if (exc.dwell_min <= 0.0) throw std::invalid_argument("excitation dwell must be > 0");
}

SysidPreset sysid_preset(const std::string& name) {
  if (name == "paper") return {"paper", 1e-3, 20e-6, 10000};
  if (name == "recommended") return {"recommended", 20e-6, 20e-6, 10000};
  throw std::invalid_argument("unknown sysid preset '" + name + "' (expected paper|recommended)");
}

RawDataset collect(const ConverterParams& p, const PiConfig& pi, const ExcitationConfig& exc,
                   std::size_t n_samples, double sample_period, double control_period) {
  validate(p);
  validate(pi);
  validate(exc, p);
  if (n_samples < 2) throw std::invalid_argument("collect: need at least 2 samples");
  const std::size_t ratio = integer_ratio(sample_period, control_period, "collect");

  RawDataset raw;
  raw.sample_period = sample_period;
  raw.seed = exc.seed;
  raw.rows.reserve(n_samples);

  std::mt19937_64 rng(exc.seed);
  std::uniform_real_distribution<double> v_dist(exc.v_ref_min, exc.v_ref_max);
  std::uniform_real_distribution<double> r_dist(exc.r_load_min, exc.r_load_max);
  std::uniform_real_distribution<double> dwell_dist(exc.dwell_min, exc.dwell_max);

  ConverterParams plant = p;
  double v_ref = 0.0;
  double next_change = 0.0;
  State x{};
  PiState pi_state{};

  for (std::size_t step = 0; raw.rows.size() < n_samples; ++step) {
    const double t = static_cast<double>(step) * control_period;
    if (t + 1e-12 >= next_change) {
      v_ref = v_dist(rng);
      plant.r_load = r_dist(rng);
      next_change = t + dwell_dist(rng);
    }
    const PiOutput u = pi_step(pi, pi_state, v_ref, x.v_c, control_period);
    pi_state = u.state;
    if (step % ratio == 0) raw.rows.push_back({x.i_l, x.v_c, u.duty.value()});
    try {
      x = advance_averaged(x, plant, u.duty, control_period, kCollectSubstep);
    } catch (const IntegrationError& e) {
      throw CollectionError(raw.rows.size(), v_ref, plant.r_load,
                            fmt::format("plant diverged near sample {} (v_ref={} V, r_load={} "
                                        "Ohm): {}",
                                        raw.rows.size(), v_ref, plant.r_load, e.what()));
    }
  }
  return raw;
}

NormStats compute_stats(const std::vector<SamplePair>& pairs) {
  NormStats s;
  if (pairs.empty()) return s;
  const double n = static_cast<double>(pairs.size());
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (const auto& sp : pairs) mean += sp.input[c];
    mean /= n;
    double var = 0.0;
    for (const auto& sp : pairs) var += (sp.input[c] - mean) * (sp.input[c] - mean);
    s.input_mean[c] = mean;
    s.input_scale[c] = floor_scale(std::sqrt(var / n));
  }
  for (int c = 0; c < 2; ++c) {
    double mean = 0.0;
    for (const auto& sp : pairs) mean += sp.target[c];
    mean /= n;
    double var = 0.0;
    for (const auto& sp : pairs) var += (sp.target[c] - mean) * (sp.target[c] - mean);
    s.target_mean[c] = mean;
    s.target_scale[c] = floor_scale(std::sqrt(var / n));
  }
  return s;
}

Preprocessed preprocess(const RawDataset& raw) {
  if (raw.rows.size() < 2) throw DataError("preprocess: dataset needs at least 2 rows");
  std::vector<std::size_t> starts = raw.episode_starts;
  if (starts.empty() || starts.front() != 0) starts.insert(starts.begin(), 0);
  if (!std::is_sorted(starts.begin(), starts.end()) ||
      std::adjacent_find(starts.begin(), starts.end()) != starts.end() ||
      starts.back() >= raw.rows.size()) {
    throw DataError("preprocess: episode starts must be strictly increasing row indices");
  }
  starts.push_back(raw.rows.size());

  Preprocessed out;
  out.pairs.reserve(raw.rows.size());
  for (std::size_t e = 0; e + 1 < starts.size(); ++e) {
    for (std::size_t k = starts[e] + 1; k < starts[e + 1]; ++k) {
      const DatasetRow& prev = raw.rows[k - 1];
      const DatasetRow& cur = raw.rows[k];
      out.pairs.push_back({{prev.i_l, prev.v_c, prev.d}, {cur.i_l, cur.v_c}});
    }
  }
  if (out.pairs.empty()) throw DataError("preprocess: no episode has two consecutive rows");
  out.stats = compute_stats(out.pairs);
  return out;
}

IdentifierFit fit_identifier(const std::vector<SamplePair>& pairs, const NormStats& stats,
                             std::size_t hidden, const TrainConfig& cfg, double sample_period,
                             ActivationKind hidden_activation) {
  if (hidden < 1) throw std::invalid_argument("fit_identifier: hidden width must be >= 1");
  if (pairs.size() < 2) throw DataError("fit_identifier: need at least 2 sample pairs");
  validate(cfg);

  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(cfg.seed);
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t n_val = std::max<std::size_t>(1, pairs.size() / 5);
  const std::size_t n_train = pairs.size() - n_val;

  auto fill = [&](std::size_t begin, std::size_t count, Eigen::MatrixXd& x, Eigen::MatrixXd& y) {
    x.resize(static_cast<Eigen::Index>(count), 3);
    y.resize(static_cast<Eigen::Index>(count), 2);
    for (std::size_t j = 0; j < count; ++j) {
      const SamplePair& sp = pairs[order[begin + j]];
      x.row(static_cast<Eigen::Index>(j)) = stats.normalize_input(sp.input).transpose();
      y.row(static_cast<Eigen::Index>(j)) = stats.normalize_target(sp.target).transpose();
    }
  };
  Eigen::MatrixXd x_train, y_train, x_val, y_val;
  fill(0, n_train, x_train, y_train);
  fill(n_train, n_val, x_val, y_val);

  const Network init = make_network({3, static_cast<Eigen::Index>(hidden), 2},
                                    hidden_activation, ActivationKind::Identity, cfg.seed);
  TrainResult trained = train(init, x_train, y_train, cfg);

  IdentifierFit fit;
  fit.bundle = {std::move(trained.net), stats, sample_period};
  IdentifierReport& rep = fit.report;
  rep.hidden = hidden;
  rep.n_train = n_train;
  rep.n_validation = n_val;
  rep.epoch_loss = std::move(trained.epoch_loss);

  auto rmse = [&](std::size_t begin, std::size_t count, std::array<double, 2>& model,
                  std::array<double, 2>* persistence, std::array<double, 2>* target_std) {
    std::array<double, 2> se{}, pe{}, mean{}, sq{};
    for (std::size_t j = 0; j < count; ++j) {
      const SamplePair& sp = pairs[order[begin + j]];
      const State pred =
          predict_next(fit.bundle.net, stats, {sp.input[0], sp.input[1]}, Duty(sp.input[2]));
      const std::array<double, 2> p{pred.i_l, pred.v_c};
      for (int c = 0; c < 2; ++c) {
        se[c] += (p[c] - sp.target[c]) * (p[c] - sp.target[c]);
        pe[c] += (sp.input[c] - sp.target[c]) * (sp.input[c] - sp.target[c]);
        mean[c] += sp.target[c];
        sq[c] += sp.target[c] * sp.target[c];
      }
    }
    const double n = static_cast<double>(count);
    for (int c = 0; c < 2; ++c) {
      model[c] = std::sqrt(se[c] / n);
      if (persistence != nullptr) (*persistence)[c] = std::sqrt(pe[c] / n);
      if (target_std != nullptr) {
        const double m = mean[c] / n;
        (*target_std)[c] = std::sqrt(std::max(0.0, sq[c] / n - m * m));
      }
    }
  };
  rmse(0, n_train, rep.train_rmse, nullptr, nullptr);
  rmse(n_train, n_val, rep.validation_rmse, &rep.persistence_rmse, &rep.validation_target_std);

  rep.beats_persistence = rep.validation_rmse[0] < rep.persistence_rmse[0] &&
                          rep.validation_rmse[1] < rep.persistence_rmse[1];
  if (!rep.beats_persistence) {
    rep.warning =
        "identifier does not beat the persistence baseline (next = current) on validation data";
  }
  return fit;
}

State predict_next(const Network& net, const NormStats& stats, const State& s, Duty d) {
  if (net.in_dim() != 3 || net.out_dim() != 2) {
    throw DimensionError("predict_next: identifier must map 3 inputs to 2 outputs");
  }
  const Eigen::VectorXd z = forward(net, stats.normalize_input({s.i_l, s.v_c, d.value()}));
  const auto y = stats.denormalize_target(Eigen::Vector2d(z[0], z[1]));
  return {y[0], y[1]};
}

std::vector<DriftPoint> rollout_drift(const IdentifierBundle& bundle, const RawDataset& raw,
                                      const std::vector<std::size_t>& horizons,
                                      std::size_t stride) {
  std::vector<std::size_t> ends = raw.episode_starts;
  ends.erase(ends.begin());
  ends.push_back(raw.rows.size());
  std::vector<DriftPoint> out;
  for (std::size_t steps : horizons) {
    DriftPoint dp;
    dp.steps = steps;
    double se_i = 0.0, se_v = 0.0;
    for (std::size_t e = 0; e < ends.size(); ++e) {
      const std::size_t begin = raw.episode_starts[e];
      for (std::size_t r = begin; r + steps < ends[e]; r += std::max<std::size_t>(stride, 1)) {
        State x{raw.rows[r].i_l, raw.rows[r].v_c};
        for (std::size_t j = 0; j < steps; ++j) {
          x = predict_next(bundle.net, bundle.stats, x, Duty(raw.rows[r + j].d));
        }
        const DatasetRow& truth = raw.rows[r + steps];
        se_i += (x.i_l - truth.i_l) * (x.i_l - truth.i_l);
        se_v += (x.v_c - truth.v_c) * (x.v_c - truth.v_c);
        ++dp.windows;
      }
    }
    if (dp.windows > 0) {
      dp.rms_i_l = std::sqrt(se_i / static_cast<double>(dp.windows));
      dp.rms_v_c = std::sqrt(se_v / static_cast<double>(dp.windows));
    }
    out.push_back(dp);
  }
  return out;
}

}  // namespace nnpc
