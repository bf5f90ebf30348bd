#pragma once

// Identification data collection under PI control and the one-step neural
// predictor (i_L, v_c, d)(k-1) -> (i_L, v_c)(k).

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "nnpc/converter.hpp"
#include "nnpc/neural_net.hpp"
#include "nnpc/pi_control.hpp"

namespace nnpc {

struct DatasetRow {
  double i_l = 0.0;
  double v_c = 0.0;
  double d = 0.0;
  bool operator==(const DatasetRow&) const = default;
};

/// Rows sampled every `sample_period`. `episode_starts` lists the row index of
/// every contiguous episode (always begins with 0); no sample pair may straddle
/// an episode start.
struct RawDataset {
  double sample_period = 0.0;
  std::uint64_t seed = 0;
  std::vector<DatasetRow> rows;
  std::vector<std::size_t> episode_starts{0};

  bool operator==(const RawDataset&) const = default;
};

struct SamplePair {
  std::array<double, 3> input{};   // i_L(k-1), v_c(k-1), d(k-1)
  std::array<double, 2> target{};  // i_L(k), v_c(k)
};

/// Per-channel z-score statistics.
struct NormStats {
  static constexpr double kScaleFloor = 1e-9;

  std::array<double, 3> input_mean{};
  std::array<double, 3> input_scale{1.0, 1.0, 1.0};
  std::array<double, 2> target_mean{};
  std::array<double, 2> target_scale{1.0, 1.0};

  [[nodiscard]] Eigen::Vector3d normalize_input(const std::array<double, 3>& x) const;
  [[nodiscard]] std::array<double, 3> denormalize_input(const Eigen::Vector3d& z) const;
  [[nodiscard]] Eigen::Vector2d normalize_target(const std::array<double, 2>& y) const;
  [[nodiscard]] std::array<double, 2> denormalize_target(const Eigen::Vector2d& z) const;

  bool operator==(const NormStats&) const = default;
};

struct ExcitationConfig {
  double v_ref_min = 6.0;
  double v_ref_max = 18.0;
  double r_load_min = 4.0;
  double r_load_max = 8.0;
  double dwell_min = 5e-3;
  double dwell_max = 50e-3;
  std::uint64_t seed = 1;
};

/// Throws std::invalid_argument on empty/inverted ranges or v_ref >= vs.
void validate(const ExcitationConfig& exc, const ConverterParams& p);

/// Named sampling profiles. "paper" samples at 1 ms; "recommended" samples at
/// 20 us so the one-step map resolves the LC dynamics. Both run the PI loop
/// every 20 us.
struct SysidPreset {
  std::string name;
  double sample_period = 0.0;
  double control_period = 0.0;
  std::size_t samples = 10000;
};
[[nodiscard]] SysidPreset sysid_preset(const std::string& name);

/// Runs the averaged plant under PI only, re-drawing (v_ref, r_load) after a
/// random dwell, and records (i_L, v_c, d) every sample period. The recorded d
/// is the duty applied over the following control period.
[[nodiscard]] RawDataset collect(const ConverterParams& p, const PiConfig& pi,
                                 const ExcitationConfig& exc, std::size_t n_samples,
                                 double sample_period, double control_period);

struct Preprocessed {
  std::vector<SamplePair> pairs;
  NormStats stats;
};

/// Consecutive-row pairs within each episode plus z-score statistics over
/// those pairs (scale floored at NormStats::kScaleFloor).
[[nodiscard]] Preprocessed preprocess(const RawDataset& raw);

[[nodiscard]] NormStats compute_stats(const std::vector<SamplePair>& pairs);

/// Trained predictor plus the statistics and sampling interval it expects.
struct IdentifierBundle {
  Network net;
  NormStats stats;
  double sample_period = 0.0;
};

struct IdentifierReport {
  std::size_t hidden = 0;
  std::size_t n_train = 0;
  std::size_t n_validation = 0;
  std::array<double, 2> train_rmse{};        // physical units (A, V)
  std::array<double, 2> validation_rmse{};
  std::array<double, 2> persistence_rmse{};  // "next = current" on validation
  std::array<double, 2> validation_target_std{};
  std::vector<double> epoch_loss;
  bool beats_persistence = false;  // on both channels
  std::string warning;
};

struct IdentifierFit {
  IdentifierBundle bundle;
  IdentifierReport report;
};

/// Shuffles the pairs with `cfg.seed`, trains a 3 -> hidden (TanH) -> 2
/// (identity) network on the first 80 % in normalized units and reports RMSE
/// in physical units on the remaining 20 %.
[[nodiscard]] IdentifierFit fit_identifier(const std::vector<SamplePair>& pairs,
                                           const NormStats& stats, std::size_t hidden,
                                           const TrainConfig& cfg, double sample_period,
                                           ActivationKind hidden_activation = ActivationKind::TanH);

[[nodiscard]] State predict_next(const Network& net, const NormStats& stats, const State& s,
                                 Duty d);

struct DriftPoint {
  std::size_t steps = 0;
  std::size_t windows = 0;
  double rms_i_l = 0.0;
  double rms_v_c = 0.0;
};

/// Open-loop drift of the composed predictor against recorded data: from each
/// admissible start row, feed the recorded duties for `steps` steps and compare
/// with the recorded state. Reported only.
[[nodiscard]] std::vector<DriftPoint> rollout_drift(const IdentifierBundle& bundle,
                                                    const RawDataset& raw,
                                                    const std::vector<std::size_t>& horizons,
                                                    std::size_t stride = 10);

}  // namespace nnpc
