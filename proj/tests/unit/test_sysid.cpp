#include <cmath>
#include <random>

#include "doctest.h"

#include "nnpc/errors.hpp"
#include "nnpc/io.hpp"
#include "nnpc/mpc.hpp"
#include "nnpc/sysid.hpp"

using namespace nnpc;

namespace {

PiConfig tuned() { return tune_pi(ConverterParams::nominal(), 3000.0, 60.0).config; }

// Pairs from the exact averaged model at fixed load, with uniformly drawn
// states and duties.
std::vector<SamplePair> analytic_pairs(std::size_t n, std::uint64_t seed) {
  const AnalyticPredictor pred(ConverterParams::nominal(), 20e-6);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ui(0.0, 4.0);
  std::uniform_real_distribution<double> uv(0.0, 18.0);
  std::uniform_real_distribution<double> ud(0.0, 0.5);
  std::vector<SamplePair> out;
  for (std::size_t k = 0; k < n; ++k) {
    const State s{ui(rng), uv(rng)};
    const double d = ud(rng);
    const State nx = pred.next(s, d);
    out.push_back({{s.i_l, s.v_c, d}, {nx.i_l, nx.v_c}});
  }
  return out;
}

}  // namespace

TEST_SUITE("sysid") {

TEST_CASE("presets") {
  const SysidPreset paper = sysid_preset("paper");
  CHECK(paper.sample_period == 1e-3);
  CHECK(paper.control_period == 20e-6);
  CHECK(paper.samples == 10000);
  const SysidPreset rec = sysid_preset("recommended");
  CHECK(rec.sample_period == 20e-6);
  CHECK(rec.control_period == 20e-6);
  CHECK(rec.samples == 10000);
  CHECK_THROWS((void)sysid_preset("fast"));
}

TEST_CASE("excitation validation") {
  const ConverterParams p = ConverterParams::nominal();
  CHECK_NOTHROW(validate(ExcitationConfig{}, p));
  ExcitationConfig e;
  e.v_ref_max = 48.0;
  CHECK_THROWS_AS(validate(e, p), std::invalid_argument);
  e = {};
  e.r_load_min = 9.0;
  CHECK_THROWS_AS(validate(e, p), std::invalid_argument);
  e = {};
  e.dwell_min = 0.0;
  CHECK_THROWS_AS(validate(e, p), std::invalid_argument);
}

TEST_CASE("collect produces the requested shape deterministically") {
  const ConverterParams p = ConverterParams::nominal();
  const RawDataset a = collect(p, tuned(), ExcitationConfig{}, 10000, 20e-6, 20e-6);
  CHECK(a.rows.size() == 10000);
  CHECK(a.sample_period == 20e-6);
  CHECK(a.seed == 1);
  CHECK(a.episode_starts == std::vector<std::size_t>{0});
  const RawDataset b = collect(p, tuned(), ExcitationConfig{}, 10000, 20e-6, 20e-6);
  CHECK(a == b);
  ExcitationConfig other;
  other.seed = 2;
  CHECK_FALSE(collect(p, tuned(), other, 10000, 20e-6, 20e-6) == a);
  for (const DatasetRow& r : a.rows) {
    REQUIRE(std::isfinite(r.i_l));
    REQUIRE(r.d >= 0.0);
    REQUIRE(r.d <= 1.0);
  }
}

TEST_CASE("collect at a 1 ms sample period") {
  const RawDataset raw =
      collect(ConverterParams::nominal(), tuned(), ExcitationConfig{}, 200, 1e-3, 20e-6);
  CHECK(raw.rows.size() == 200);
  CHECK(raw.sample_period == 1e-3);
  CHECK_THROWS_AS((void)collect(ConverterParams::nominal(), tuned(), ExcitationConfig{}, 200, 30e-6, 20e-6),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)collect(ConverterParams::nominal(), tuned(), ExcitationConfig{}, 1, 20e-6, 20e-6),
                  std::invalid_argument);
}

TEST_CASE("degenerate excitation holds the equilibrium") {
  ExcitationConfig e;
  e.v_ref_min = e.v_ref_max = 12.0;
  e.r_load_min = e.r_load_max = 6.0;
  const RawDataset raw = collect(ConverterParams::nominal(), tuned(), e, 2000, 20e-6, 20e-6);
  for (std::size_t k = 1000; k < raw.rows.size(); ++k) {
    CHECK(raw.rows[k].i_l == doctest::Approx(2.0).epsilon(1e-3));
    CHECK(raw.rows[k].v_c == doctest::Approx(12.0).epsilon(1e-3));
    CHECK(raw.rows[k].d == doctest::Approx(0.25).epsilon(1e-3));
  }
}

TEST_CASE("plant divergence names the sample and operating point") {
  ConverterParams p = ConverterParams::nominal();
  p.l = 1e-9;
  p.c = 1e-9;
  try {
    (void)collect(p, tuned(), ExcitationConfig{}, 100, 20e-6, 20e-6);
    FAIL("expected CollectionError");
  } catch (const CollectionError& e) {
    CHECK(e.sample() < 100);
    CHECK(e.v_ref() >= 6.0);
    CHECK(e.r_load() >= 4.0);
  }
}

TEST_CASE("preprocess builds consecutive pairs") {
  RawDataset raw;
  raw.sample_period = 20e-6;
  raw.rows = {{2.0, 12.0, 0.25}, {2.1, 12.3, 0.26}};
  const Preprocessed pre = preprocess(raw);
  REQUIRE(pre.pairs.size() == 1);
  CHECK(pre.pairs[0].input == std::array<double, 3>{2.0, 12.0, 0.25});
  CHECK(pre.pairs[0].target == std::array<double, 2>{2.1, 12.3});

  const RawDataset big = collect(ConverterParams::nominal(), tuned(), ExcitationConfig{}, 10000, 20e-6, 20e-6);
  CHECK(preprocess(big).pairs.size() == 9999);

  RawDataset one;
  one.rows = {{1.0, 1.0, 0.1}};
  CHECK_THROWS_AS((void)preprocess(one), DataError);
}

TEST_CASE("pairs never straddle an episode start") {
  RawDataset raw;
  raw.sample_period = 20e-6;
  for (int k = 0; k < 10; ++k) raw.rows.push_back({0.1 * k, 1.0 * k, 0.2});
  CHECK(preprocess(raw).pairs.size() == 9);
  raw.episode_starts = {0, 4};
  const Preprocessed pre = preprocess(raw);
  CHECK(pre.pairs.size() == 8);
  for (const SamplePair& sp : pre.pairs) CHECK(sp.input[1] != 3.0);
}

TEST_CASE("constant data hits the scale floor") {
  RawDataset raw;
  raw.sample_period = 20e-6;
  raw.rows.assign(5, {2.0, 12.0, 0.25});
  const Preprocessed pre = preprocess(raw);
  for (double s : pre.stats.input_scale) CHECK(s == NormStats::kScaleFloor);
  for (double s : pre.stats.target_scale) CHECK(s == NormStats::kScaleFloor);
}

TEST_CASE("normalization round trip") {
  const RawDataset raw = collect(ConverterParams::nominal(), tuned(), ExcitationConfig{}, 3000, 20e-6, 20e-6);
  const Preprocessed pre = preprocess(raw);
  const NormStats& st = pre.stats;
  CHECK(st.normalize_input(st.input_mean).isZero(0.0));
  for (const SamplePair& sp : pre.pairs) {
    const auto back = st.denormalize_input(st.normalize_input(sp.input));
    for (int c = 0; c < 3; ++c) CHECK(std::abs(back[c] - sp.input[c]) <= 1e-12 * std::abs(sp.input[c]) + 1e-15);
    const auto tb = st.denormalize_target(st.normalize_target(sp.target));
    for (int c = 0; c < 2; ++c) CHECK(std::abs(tb[c] - sp.target[c]) <= 1e-12 * std::abs(sp.target[c]) + 1e-15);
  }
}

TEST_CASE("identifier learns the exact averaged map") {
  const std::vector<SamplePair> pairs = analytic_pairs(2000, 4);
  const NormStats stats = compute_stats(pairs);
  const IdentifierFit fit = fit_identifier(pairs, stats, 7, {0.1, 2000, 8, 1}, 20e-6);
  CHECK(fit.bundle.net.parameter_count() == 44);
  CHECK(fit.report.n_validation == 400);
  CHECK(fit.report.n_train == 1600);
  for (int c = 0; c < 2; ++c) {
    CHECK(fit.report.validation_rmse[c] < 0.02 * fit.report.validation_target_std[c]);
  }
  CHECK(fit.report.beats_persistence);
  CHECK(fit.report.warning.empty());
}

TEST_CASE("identifier training is deterministic") {
  const std::vector<SamplePair> pairs = analytic_pairs(300, 9);
  const NormStats stats = compute_stats(pairs);
  const IdentifierFit a = fit_identifier(pairs, stats, 7, {0.05, 20, 8, 3}, 20e-6);
  const IdentifierFit b = fit_identifier(pairs, stats, 7, {0.05, 20, 8, 3}, 20e-6);
  CHECK(a.bundle.net.layers[0].weights == b.bundle.net.layers[0].weights);
  CHECK(a.bundle.net.layers[1].biases == b.bundle.net.layers[1].biases);
  CHECK(a.report.epoch_loss == b.report.epoch_loss);
}

TEST_CASE("useless identifier is flagged") {
  const std::vector<SamplePair> pairs = analytic_pairs(200, 3);
  const NormStats stats = compute_stats(pairs);
  const IdentifierFit fit = fit_identifier(pairs, stats, 1, {1e-6, 1, 8, 1}, 20e-6);
  CHECK_FALSE(fit.report.beats_persistence);
  CHECK_FALSE(fit.report.warning.empty());
}

TEST_CASE("predict_next equals the decomposed evaluation") {
  const std::vector<SamplePair> pairs = analytic_pairs(300, 1);
  const NormStats stats = compute_stats(pairs);
  const IdentifierFit fit = fit_identifier(pairs, stats, 7, {0.05, 10, 8, 1}, 20e-6);
  const State s{1.7, 11.2};
  const State p = predict_next(fit.bundle.net, stats, s, Duty(0.27));
  const Eigen::VectorXd z = forward(fit.bundle.net, stats.normalize_input({1.7, 11.2, 0.27}));
  const auto y = stats.denormalize_target(Eigen::Vector2d(z(0), z(1)));
  CHECK(p.i_l == y[0]);
  CHECK(p.v_c == y[1]);
}

TEST_CASE("identifier trained on equilibrium data predicts the equilibrium") {
  ExcitationConfig e;
  e.v_ref_min = e.v_ref_max = 12.0;
  e.r_load_min = e.r_load_max = 6.0;
  RawDataset raw = collect(ConverterParams::nominal(), tuned(), e, 3000, 20e-6, 20e-6);
  raw.rows.erase(raw.rows.begin(), raw.rows.begin() + 1500);
  const Preprocessed pre = preprocess(raw);
  const IdentifierFit fit = fit_identifier(pre.pairs, pre.stats, 7, {0.05, 20, 16, 1}, 20e-6);
  const State eq{2.0, 12.0};
  const State nx = predict_next(fit.bundle.net, fit.bundle.stats, eq, Duty(0.25));
  CHECK(std::abs(nx.i_l - 2.0) < std::max(5.0 * fit.report.validation_rmse[0], 1e-3));
  CHECK(std::abs(nx.v_c - 12.0) < std::max(5.0 * fit.report.validation_rmse[1], 1e-3));
}

TEST_CASE("rollout drift is reported per horizon") {
  const ConverterParams p = ConverterParams::nominal();
  const RawDataset raw = collect(p, tuned(), ExcitationConfig{}, 2000, 20e-6, 20e-6);
  const Preprocessed pre = preprocess(raw);
  const IdentifierFit fit = fit_identifier(pre.pairs, pre.stats, 7, {0.1, 30, 8, 1}, 20e-6);
  const auto drift = rollout_drift(fit.bundle, raw, {1, 5, 20});
  REQUIRE(drift.size() == 3);
  CHECK(drift[0].steps == 1);
  CHECK(drift[2].steps == 20);
  for (const DriftPoint& d : drift) {
    CHECK(d.windows > 0);
    CHECK(std::isfinite(d.rms_v_c));
  }
}

TEST_CASE("dataset CSV round-trips bit-exactly") {
  RawDataset raw = collect(ConverterParams::nominal(), tuned(), ExcitationConfig{}, 500, 20e-6, 20e-6);
  raw.episode_starts = {0, 250};
  const std::string csv = dataset_csv(raw);
  CHECK(csv.rfind("# sample_period=", 0) == 0);
  CHECK(csv.find("\nk,i_l,v_c,d\n") != std::string::npos);
  const RawDataset back = parse_dataset_csv(csv);
  CHECK(back == raw);
  CHECK_THROWS_AS((void)parse_dataset_csv("k,i_l,v_c,d\n0,1,2,3\n"), DataError);
  CHECK_THROWS_AS((void)parse_dataset_csv("# sample_period=2e-05 seed=1\nk,i_l,v_c,d\n0,1,2\n"), DataError);
}

TEST_CASE("identifier bundle round-trips bit-exactly") {
  const std::vector<SamplePair> pairs = analytic_pairs(200, 2);
  const NormStats stats = compute_stats(pairs);
  const IdentifierFit fit = fit_identifier(pairs, stats, 7, {0.05, 5, 8, 1}, 20e-6);
  const std::string text = bundle_to_string(fit.bundle);
  const IdentifierBundle back = bundle_from_string(text);
  CHECK(back.sample_period == fit.bundle.sample_period);
  CHECK(back.stats == fit.bundle.stats);
  REQUIRE(back.net.layers.size() == 2);
  for (std::size_t l = 0; l < 2; ++l) {
    CHECK(back.net.layers[l].weights == fit.bundle.net.layers[l].weights);
    CHECK(back.net.layers[l].biases == fit.bundle.net.layers[l].biases);
    CHECK(back.net.layers[l].activation == fit.bundle.net.layers[l].activation);
  }
  CHECK(bundle_to_string(back) == text);
  CHECK_THROWS_AS((void)bundle_from_string("{\"layers\": []}"), DataError);
  CHECK_THROWS_AS((void)bundle_from_string("not json"), DataError);
}

}  // TEST_SUITE
