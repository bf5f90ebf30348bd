// Acceptance checks. Prints one PASS/FAIL line per criterion; with an argument
// N runs criterion N only. Exit status is nonzero if any selected check fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <sys/wait.h>

#include "net_params.hpp"
#include "oracles.hpp"

#include "nnpc/config.hpp"
#include "nnpc/converter.hpp"
#include "nnpc/harness.hpp"
#include "nnpc/io.hpp"
#include "nnpc/mpc.hpp"
#include "nnpc/neural_net.hpp"
#include "nnpc/sysid.hpp"

namespace fs = std::filesystem;
using namespace nnpc;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Identifier trained with the default configuration, shared by checks 5 and 8.
struct TrainedIdentifier {
  RawDataset raw;
  IdentifierFit fit;
  double seconds = 0.0;
};

const TrainedIdentifier& trained_identifier() {
  static std::optional<TrainedIdentifier> cache;
  if (!cache) {
    const RunConfig cfg;
    const auto t0 = Clock::now();
    TrainedIdentifier t;
    t.raw = collect(cfg.converter, resolve_pi(cfg).config, cfg.sysid.excitation, cfg.sysid.samples,
                    cfg.sysid.sample_period, cfg.sysid.control_period);
    const Preprocessed pre = preprocess(t.raw);
    t.fit = fit_identifier(pre.pairs, pre.stats, cfg.sysid.hidden, cfg.sysid.train, t.raw.sample_period,
                           cfg.sysid.hidden_activation);
    t.seconds = seconds_since(t0);
    cache = std::move(t);
  }
  return *cache;
}

Outcome equilibrium_reproduction() {
  const auto t0 = Clock::now();
  const ConverterParams p = ConverterParams::nominal();
  const State eq = equilibrium(p, Duty(0.25));
  const Trajectory tr = simulate({0.0, 0.0}, ParamSchedule(p), [](double, const State&) { return Duty(0.25); },
                                 20e-3, 20e-6, PlantModel::Averaged);
  const State sim = tr.records.back().state;
  const double secs = seconds_since(t0);
  const double worst = std::max({std::abs(eq.i_l - 2.0) / 2.0, std::abs(eq.v_c - 12.0) / 12.0,
                                 std::abs(sim.i_l - 2.0) / 2.0, std::abs(sim.v_c - 12.0) / 12.0});
  return {worst < 1e-3 && secs < 1.0,
          fmt::format("closed form ({:.6f} A, {:.6f} V), simulated ({:.6f} A, {:.6f} V), worst {:.2e}, {:.3f} s",
                      eq.i_l, eq.v_c, sim.i_l, sim.v_c, worst, secs)};
}

Outcome switched_ripple() {
  const auto t0 = Clock::now();
  const ConverterParams p = ConverterParams::nominal();
  const double d = 0.25;
  State s{0.0, 0.0};
  for (int k = 0; k < 3000; ++k) s = step_switched(s, p, Duty(d)).state;
  const SwitchedPeriod per = switched_period(s, p, Duty(d));
  double lo = per.samples.front().i_l;
  double hi = lo;
  for (const State& x : per.samples) {
    lo = std::min(lo, x.i_l);
    hi = std::max(hi, x.i_l);
  }
  const double ripple = hi - lo;
  const double v_o = std::accumulate(per.samples.begin(), per.samples.end(), 0.0,
                                     [](double a, const State& x) { return a + x.v_c; }) /
                     static_cast<double>(per.samples.size());
  const double expected = (p.vs - v_o) * d / (p.l * p.f_sw);
  const double rel = std::abs(ripple - expected) / expected;
  const double secs = seconds_since(t0);
  return {rel < 0.05 && secs < 5.0 && !per.dcm,
          fmt::format("ripple {:.4f} A vs analytic {:.4f} A, rel err {:.2e}, {:.3f} s", ripple, expected, rel,
                      secs)};
}

Outcome integrator_order() {
  const ConverterParams p = ConverterParams::nominal();
  const State s0{0.0, 0.0};
  const double horizon = 100e-6;
  const State exact = oracle::exact_averaged(s0, p, 0.25, horizon);
  auto err = [&](int n) {
    State s = s0;
    for (int k = 0; k < n; ++k) s = step_averaged(s, p, Duty(0.25), horizon / n);
    return oracle::state_error(s, exact);
  };
  double worst = INFINITY;
  std::string orders;
  for (int n : {5, 10, 20}) {
    const double order = std::log2(err(n) / err(2 * n));
    worst = std::min(worst, order);
    orders += fmt::format("{}{:.3f}", orders.empty() ? "" : ", ", order);
  }
  return {worst >= 3.5, "observed orders " + orders};
}

Outcome nn_gradients() {
  const auto t0 = Clock::now();
  const ActivationKind kinds[] = {ActivationKind::Sigmoid, ActivationKind::TanH, ActivationKind::ReLU,
                                  ActivationKind::Identity};
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> dim(1, 10);
  std::uniform_int_distribution<int> depth(1, 3);
  std::uniform_int_distribution<int> pick(0, 3);
  std::normal_distribution<double> n01(0.0, 1.0);
  double worst = 0.0;
  double worst_abs = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Eigen::Index> dims{dim(rng)};
    const int layers = depth(rng);
    for (int i = 0; i < layers; ++i) dims.push_back(dim(rng));
    Network net = make_network(dims, ActivationKind::TanH, ActivationKind::Identity, 5000 + trial);
    for (Layer& l : net.layers) {
      l.activation = kinds[pick(rng)];
      l.biases = Eigen::VectorXd::NullaryExpr(l.out_dim(), [&] { return 0.3 * n01(rng); });
    }
    const Eigen::VectorXd x = Eigen::VectorXd::NullaryExpr(dims.front(), [&] { return n01(rng); });
    const Eigen::VectorXd t = Eigen::VectorXd::NullaryExpr(dims.back(), [&] { return n01(rng); });
    const std::vector<double> g = testing_support::flatten(backward(net, x, t).grads);
    const auto fd = oracle::central_diff(
        [&](const std::vector<double>& q) {
          return oracle::naive_loss(testing_support::unflatten(net, q), x, t);
        },
        testing_support::flatten(net), 1e-6);
    for (std::size_t i = 0; i < g.size(); ++i) {
      worst = std::max(worst, oracle::rel_err(g[i], fd[i], 1e-7));
      worst_abs = std::max(worst_abs, std::abs(g[i] - fd[i]));
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-5 && secs < 30.0,
          fmt::format("100 nets, max rel err {:.2e} (abs floor 1e-7), max abs diff {:.2e}, {:.3f} s", worst,
                      worst_abs, secs)};
}

Outcome identifier_quality() {
  const TrainedIdentifier& t = trained_identifier();
  const IdentifierReport& r = t.fit.report;
  const std::string csv = dataset_csv(t.raw);
  const std::size_t header = csv.find("\nk,i_l,v_c,d\n");
  const bool shape = t.raw.rows.size() == 10000 && header != std::string::npos;
  bool pass = shape && t.seconds < 120.0;
  std::string detail = fmt::format("rows {}, columns i_l/v_c/d", t.raw.rows.size());
  const char* names[] = {"i_l", "v_c"};
  for (int c = 0; c < 2; ++c) {
    const double ratio = r.validation_rmse[c] / r.validation_target_std[c];
    const bool ok = ratio < 0.02 && r.validation_rmse[c] < r.persistence_rmse[c];
    pass = pass && ok;
    detail += fmt::format("; {} rmse {:.3e} = {:.2f}% of std, persistence {:.3e}", names[c], r.validation_rmse[c],
                          100.0 * ratio, r.persistence_rmse[c]);
  }
  detail += fmt::format("; {:.1f} s", t.seconds);
  return {pass, detail};
}

Outcome horizon1_oracle() {
  const auto t0 = Clock::now();
  const AnalyticPredictor pred(ConverterParams::nominal(), 20e-6);
  MpcConfig cfg;
  cfg.horizon = 1;
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> ui(0.0, 4.0);
  std::uniform_real_distribution<double> uv(0.0, 20.0);
  std::uniform_real_distribution<double> ur(5.0, 18.0);
  int failures = 0;
  double worst_gap = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const State s{ui(rng), uv(rng)};
    const double v_ref = ur(rng);
    const References refs{v_ref, v_ref / 6.0};
    const GridResult g = grid_search_horizon1(pred, s, refs, cfg);
    const OptimizeResult r = optimize_sequence(pred, s, refs, cfg, std::nullopt, static_cast<std::uint64_t>(inst));
    const auto best = static_cast<std::size_t>(std::min_element(g.costs.begin(), g.costs.end()) - g.costs.begin());
    double neighbour = g.cost;
    if (best > 0) neighbour = std::max(neighbour, g.costs[best - 1]);
    if (best + 1 < g.costs.size()) neighbour = std::max(neighbour, g.costs[best + 1]);
    worst_gap = std::max(worst_gap, r.cost - g.cost);
    if (r.cost > neighbour) ++failures;
  }
  const double secs = seconds_since(t0);
  return {failures == 0 && secs < 60.0,
          fmt::format("50 instances, {} outside one grid cell, worst J - J_grid {:.2e}, {:.3f} s", failures,
                      worst_gap, secs)};
}

Outcome rollout_gradient() {
  const TrainedIdentifier& t = trained_identifier();
  const Predictor preds[] = {Predictor(AnalyticPredictor(ConverterParams::nominal(), 20e-6)),
                             Predictor(NeuralPredictor(t.fit.bundle))};
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ud(0.05, 0.6);
  std::uniform_real_distribution<double> ui(0.0, 4.0);
  std::uniform_real_distribution<double> uv(0.0, 18.0);
  double worst = 0.0;
  double worst_abs = 0.0;
  int cases = 0;
  for (const Predictor& pred : preds) {
    for (std::size_t n = 1; n <= 5; ++n) {
      for (int rep = 0; rep < 4; ++rep) {
        MpcConfig cfg;
        cfg.horizon = n;
        const State s0{ui(rng), uv(rng)};
        const References refs{12.0, 2.0};
        DutySequence seq(n);
        for (double& d : seq) d = ud(rng);
        const CostGradient cg = cost_and_gradient(pred, s0, seq, refs, cfg);
        const auto fd = oracle::central_diff(
            [&](const std::vector<double>& u) { return cost_to_go(pred, s0, u, refs, cfg); }, seq, 1e-6);
        for (std::size_t k = 0; k < n; ++k) {
          worst = std::max(worst, oracle::rel_err(cg.grad[k], fd[k], 1e-9));
          worst_abs = std::max(worst_abs, std::abs(cg.grad[k] - fd[k]));
        }
        ++cases;
      }
    }
  }
  return {worst < 1e-4, fmt::format("{} rollouts over analytic and neural predictors, max rel err {:.2e}, "
                                    "max abs diff {:.2e}",
                                    cases, worst, worst_abs)};
}

Outcome closed_loop() {
  const auto t0 = Clock::now();
  const RunConfig cfg;
  const IdentifierBundle& bundle = trained_identifier().fit.bundle;
  bool pass = true;
  std::string detail;
  for (const std::string& name : builtin_scenario_names()) {
    const Scenario sc = builtin_scenario(name, cfg.scenario);
    const RunOutput pi = run_scenario(sc, ControllerKind::Pi, cfg, std::nullopt);
    const RunOutput nn = run_scenario(sc, ControllerKind::Nnpc, cfg, bundle);
    const Metrics& a = pi.report.metrics;
    const Metrics& b = nn.report.metrics;
    const bool cost_ok = nn.report.ok && b.cumulative_cost < a.cumulative_cost;
    const bool over_ok = nn.report.ok && b.overshoot <= a.overshoot;
    pass = pass && pi.report.ok && cost_ok && over_ok;
    const char* unit = a.overshoot_absolute ? " V" : "%";
    detail += fmt::format("{}{}: cost PI {:.4e} NNPC {:.4e} [{}], overshoot PI {:.3f}{} NNPC {:.3f}{} [{}], "
                          "NNPC sse {:.3f} V, fallbacks {}",
                          detail.empty() ? "" : "; ", name, a.cumulative_cost, b.cumulative_cost,
                          cost_ok ? "ok" : "worse", a.overshoot, unit, b.overshoot, unit,
                          over_ok ? "ok" : "worse", b.steady_state_error, nn.report.fallbacks);
  }
  const double secs = seconds_since(t0);
  pass = pass && secs < 600.0;
  detail += fmt::format("; {:.1f} s", secs);
  return {pass, detail};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_file(e.path());
  }
  return files;
}

Outcome determinism() {
  const fs::path work = fs::temp_directory_path() / "nnpc_acceptance_pipeline";
  const std::string cli = NNPC_CLI_PATH;
  auto run = [&](const std::string& args) {
    const std::string cmd = "'" + cli + "' " + args + " >>'" + (work / "stdout.txt").string() + "' 2>>'" +
                            (work / "stderr.txt").string() + "'";
    const int raw = std::system(cmd.c_str());
    return WIFEXITED(raw) && WEXITSTATUS(raw) == 0;
  };
  std::vector<std::map<std::string, std::string>> passes;
  for (int pass = 0; pass < 2; ++pass) {
    fs::remove_all(work);
    fs::create_directories(work / "out");
    const std::string data = (work / "data.csv").string();
    const std::string model = (work / "model.json").string();
    const bool ok = run("collect --seed 1 --out '" + data + "'") &&
                    run("train --seed 1 --data '" + data + "' --out '" + model + "' --report '" +
                        (work / "train_report.json").string() + "'") &&
                    run("simulate --seed 1 --scenario startup --controller nnpc --model '" + model +
                        "' --out-dir '" + (work / "out").string() + "'") &&
                    run("compare --seed 1 --model '" + model + "' --out-dir '" + (work / "out").string() + "'");
    if (!ok) {
      const std::string err = read_file(work / "stderr.txt");
      return {false, fmt::format("pipeline pass {} failed: {}", pass + 1, err)};
    }
    passes.push_back(snapshot(work));
  }
  fs::remove_all(work);
  std::vector<std::string> differing;
  for (const auto& [name, body] : passes[0]) {
    const auto it = passes[1].find(name);
    if (it == passes[1].end() || it->second != body) differing.push_back(name);
  }
  if (passes[1].size() != passes[0].size()) differing.emplace_back("<file set>");
  std::string list;
  for (const std::string& d : differing) list += " " + d;
  return {differing.empty(), fmt::format("{} files compared, {} differ{}", passes[0].size(), differing.size(),
                                         list)};
}

// Predictor whose output is (5 A, 16 V) for every input.
NeuralPredictor constant_predictor() {
  IdentifierBundle b;
  b.net.layers.push_back({Eigen::MatrixXd::Zero(1, 3), Eigen::VectorXd::Zero(1), ActivationKind::TanH});
  Eigen::VectorXd out(2);
  out << 5.0, 16.0;
  b.net.layers.push_back({Eigen::MatrixXd::Zero(2, 1), out, ActivationKind::Identity});
  b.sample_period = 20e-6;
  return NeuralPredictor(b);
}

Outcome cost_identities() {
  const References refs{12.0, 2.0};
  const double c0 = stage_cost({2.0, 12.0}, refs);
  const double c3 = stage_cost({2.0, 9.0}, refs);
  const double c5 = stage_cost({5.0, 16.0}, refs);
  MpcConfig cfg;
  cfg.discount = 0.0;
  const double j0 = cost_to_go(Predictor(AnalyticPredictor(ConverterParams::nominal(), 20e-6)), {0.0, 0.0},
                               DutySequence(cfg.horizon, 0.3), refs, cfg);
  cfg.discount = 1.0;
  const double jn = cost_to_go(Predictor(constant_predictor()), {0.0, 0.0}, DutySequence(cfg.horizon, 0.3), refs, cfg);
  const double expect_n = static_cast<double>(cfg.horizon) * 5.0;
  const bool pass = c0 == 0.0 && c3 == 3.0 && c5 == 5.0 && j0 == 0.0 && jn == expect_n;
  return {pass, fmt::format("stage costs {} / {} / {}, gamma=0 J {}, gamma=1 J {} (expect {})", c0, c3, c5, j0, jn,
                            expect_n)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks = {
      {"equilibrium reproduction", equilibrium_reproduction},
      {"switched-model ripple", switched_ripple},
      {"integrator order", integrator_order},
      {"NN gradient suite", nn_gradients},
      {"identifier quality", identifier_quality},
      {"horizon-1 optimizer oracle", horizon1_oracle},
      {"rollout gradient check", rollout_gradient},
      {"closed-loop comparison", closed_loop},
      {"pipeline determinism", determinism},
      {"cost-function identities", cost_identities},
  };
  std::size_t only = 0;
  if (argc > 1) {
    only = static_cast<std::size_t>(std::strtoul(argv[1], nullptr, 10));
    if (only < 1 || only > checks.size()) {
      std::cerr << "usage: acceptance [1-" << checks.size() << "]\n";
      return 2;
    }
  }
  bool all = true;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    if (only != 0 && only != i + 1) continue;
    Outcome o;
    try {
      o = checks[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << fmt::format("criterion {}: {} {} ({})", i + 1, o.pass ? "PASS" : "FAIL", checks[i].first, o.detail)
              << std::endl;
  }
  return all ? 0 : 1;
}
