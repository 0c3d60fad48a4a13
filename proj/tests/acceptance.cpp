// Acceptance checks. Prints one [PASS]/[FAIL] line per criterion and exits
// non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "onnkit/commands.hpp"
#include "onnkit/network.hpp"
#include "onnkit/patchops.hpp"
#include "onnkit/trainer.hpp"

using namespace onnkit;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::shared_ptr<const OperatorSetLibrary> builtin() {
  return std::make_shared<const OperatorSetLibrary>(OperatorSetLibrary::builtin());
}

Tensor random_tensor(Shape shape, std::mt19937_64& gen, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = dist(gen);
  return t;
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() /
                   fmt::format("onnkit_accept_{}_{}", name, Clock::now().time_since_epoch().count());
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// AC1: an OpBlock with (mul, sum, identity) and b = 0 against a literal
// "same" convolution. The engine correlates, so the convolution loop is
// given the 180-degree-rotated kernel.
Outcome convolution_oracle() {
  const auto start = Clock::now();
  const auto lib = builtin();
  const std::size_t set = lib->index_of("mul", "sum", "identity");
  std::mt19937_64 gen(2024);
  std::uniform_int_distribution<std::size_t> extent(1, 16), kernel_pick(0, 3), chan_pick(0, 1);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t C = chan_pick(gen) == 0 ? 1 : 3;
    const std::size_t M = extent(gen), N = extent(gen);
    const std::size_t k = 2 * kernel_pick(gen) + 1;
    const Tensor x = random_tensor({C, M, N}, gen);
    const Tensor w = random_tensor({C, k, k}, gen);
    const UnfoldPlan plan(M, N, k, k);
    const Tensor y = block_forward(*lib, set, ag::Variable::detached(w),
                                   ag::Variable::detached(Tensor::zeros({1})),
                                   ag::Variable::detached(unfold(x, plan)), M, N)
                         .value();
    const long p = static_cast<long>(k / 2);
    for (std::size_t i = 0; i < M; ++i) {
      for (std::size_t j = 0; j < N; ++j) {
        double conv = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t u = 0; u < k; ++u) {
            for (std::size_t v = 0; v < k; ++v) {
              const long r = static_cast<long>(i) - static_cast<long>(u) + p;
              const long q = static_cast<long>(j) - static_cast<long>(v) + p;
              if (r < 0 || q < 0 || r >= static_cast<long>(M) || q >= static_cast<long>(N)) continue;
              const double rotated = w.at({c, k - 1 - u, k - 1 - v});
              conv += rotated * x.at({c, static_cast<std::size_t>(r), static_cast<std::size_t>(q)});
            }
          }
        }
        worst = std::max(worst, std::abs(conv - y.at({i, j})));
      }
    }
  }
  const double elapsed = seconds_since(start);
  return {worst < 1e-10 && elapsed < 5.0,
          fmt::format("50 cases, max abs error {:.3e} (< 1e-10), {:.2f} s (< 5 s)", worst, elapsed)};
}

// AC2: every core operator set on the two-tier probe with 6x6 inputs.
Outcome gradient_correctness() {
  const auto start = Clock::now();
  std::vector<std::size_t> sets(OperatorSetLibrary::kCoreSetCount);
  for (std::size_t s = 0; s < sets.size(); ++s) sets[s] = s;
  const auto checks = gradcheck_sets(builtin(), sets, 1, 1e-4, 0);
  std::size_t passed = 0, ties = 0;
  double worst = 0.0;
  std::string failed;
  for (const SetCheck& c : checks) {
    worst = std::max(worst, c.report.max_rel_error);
    ties += c.report.ties;
    if (c.report.passed) {
      ++passed;
    } else {
      failed += fmt::format(" {}({:.2e})", c.set, c.report.max_rel_error);
    }
  }
  const double elapsed = seconds_since(start);
  return {passed == sets.size() && elapsed < 60.0,
          fmt::format("{}/{} sets pass at tol 1e-4, max rel error {:.3e}, {} ties excluded, {:.2f} s (< 60 s){}",
                      passed, sets.size(), worst, ties, elapsed,
                      failed.empty() ? "" : ", failed:" + failed)};
}

// AC3: <unfold(y), G> = <y, fold(G)> on random geometries.
Outcome adjointness() {
  std::mt19937_64 gen(77);
  std::uniform_int_distribution<std::size_t> extent(1, 12), half(0, 3), chans(1, 4);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t C = chans(gen), M = extent(gen), N = extent(gen);
    const std::size_t m = 2 * half(gen) + 1, n = 2 * half(gen) + 1;
    const UnfoldPlan plan(M, N, m, n);
    const Tensor y = random_tensor({C, M, N}, gen);
    const Tensor g = random_tensor({C, M * N, m * n}, gen);
    worst = std::max(worst, std::abs(dot(unfold(y, plan), g) - dot(y, fold(g, plan))));
  }
  return {worst <= 1e-12, fmt::format("100 instances, max |difference| {:.3e} (<= 1e-12)", worst)};
}

// AC4: nonlinear-map task with a two-tier sine network.
Outcome desk_scale_training() {
  const auto start = Clock::now();
  const auto lib = builtin();
  const std::size_t sine = lib->index_of("sine", "sum", "tanh");
  const auto dataset = make_synthetic_task(TaskKind::NonlinearMap, 64, 16, 0);
  const DataSplit split = partition(dataset, 1, 0.0, 0)[0];
  TrainerConfig cfg;
  cfg.optimizer.name = "adam";
  cfg.optimizer.lr = 0.01;
  cfg.num_epochs = 300;
  cfg.batch_size = 8;
  cfg.seed = 0;
  Trainer trainer(OpNetwork({1, {{4, 3, 1, {sine}}, {1, 3, 1, {sine}}}}, lib), split, cfg,
                  {builtin_metric("snr")});
  const TrainingRecord& record = trainer.train();
  const double elapsed = seconds_since(start);
  const BestState* best = record.best("snr", Partition::Train);
  const double snr = best != nullptr && best->valid ? best->value : -1e300;

  const std::vector<TrainingRecord> folds{record};
  const std::string summary = summary_csv(folds);
  const std::string header = summary.substr(0, summary.find("\r\n"));
  const bool timing_column = header.ends_with(",per_image_time_s");
  double per_image = 0.0;
  const auto row_start = summary.find("snr,train,");
  if (row_start != std::string::npos) {
    const std::string row = summary.substr(row_start, summary.find("\r\n", row_start) - row_start);
    per_image = std::stod(row.substr(row.rfind(',') + 1));
  }
  const bool ok = snr >= 15.0 && elapsed < 180.0 && timing_column && per_image > 0.0;
  return {ok, fmt::format("best train SNR {:.2f} dB (>= 15) at epoch {}, {:.1f} s (< 180 s), "
                          "summary per_image_time_s = {:.3e} s",
                          snr, best != nullptr ? best->epoch : 0, elapsed, per_image)};
}

// AC5: blur-inverse with a single (mul, sum, identity) tier.
Outcome convexity_sanity() {
  const auto lib = builtin();
  const std::size_t set = lib->index_of("mul", "sum", "identity");
  const auto dataset = make_synthetic_task(TaskKind::BlurInverse, 32, 16, 0);
  const DataSplit split = partition(dataset, 1, 0.0, 0)[0];
  TrainerConfig cfg;
  cfg.optimizer.name = "adam";
  cfg.optimizer.lr = 0.01;
  cfg.num_epochs = 500;
  cfg.batch_size = 8;
  cfg.seed = 0;
  const NetworkSpec spec{1, {{1, 3, 1, {set}}}};

  OpNetwork untrained(spec, lib);
  untrained.reset_parameters(run_seed(cfg.seed, 0), cfg.init);
  const double initial = evaluate(untrained, split.train, "mse", {}).loss;

  Trainer trainer(OpNetwork(spec, lib), split, cfg);
  const TrainingRecord& record = trainer.train();
  const BestState* best = record.best("loss", Partition::Train);
  const double final_mse = best != nullptr && best->valid ? best->value : 1e300;
  const double after_first = record.rows_for(Partition::Train).front()->loss;
  const double ratio = initial / final_mse;
  return {ratio >= 100.0,
          fmt::format("train MSE {:.3e} -> {:.3e}, reduction {:.0f}x (>= 100x) within 500 epochs; "
                      "{:.0f}x relative to the epoch-0 loss",
                      initial, final_mse, ratio, after_first / final_mse)};
}

// AC6: 5 epochs, save_all, load, 5 more against 10 uninterrupted epochs.
Outcome checkpoint_resumption() {
  const auto lib = builtin();
  const auto dataset = make_synthetic_task(TaskKind::NonlinearMap, 16, 8, 3);
  const DataSplit split = partition(dataset, 2, 0.25, 1)[0];
  TrainerConfig cfg;
  cfg.optimizer.name = "adam";
  cfg.optimizer.lr = 0.01;
  cfg.num_epochs = 10;
  cfg.batch_size = 3;
  cfg.seed = 5;
  const NetworkSpec spec{1, {{3, 3, 1, {lib->index_of("exp", "median", "tanh")}},
                             {1, 3, 1, {lib->index_of("mul", "sum", "tanh")}}}};
  const std::vector<MetricSpec> metrics{builtin_metric("snr")};

  Trainer straight(OpNetwork(spec, lib), split, cfg, metrics);
  straight.train();

  const auto dir = scratch("resume");
  Trainer first(OpNetwork(spec, lib), split, cfg, metrics);
  first.advance(5);
  first.save_all(dir / "half.onnk");
  Trainer resumed = Trainer::load(dir / "half.onnk", split, metrics);
  resumed.train();
  std::filesystem::remove_all(dir);

  const auto& a = straight.record().rows;
  const auto& b = resumed.record().rows;
  bool same = a.size() == b.size();
  for (std::size_t i = 0; same && i < a.size(); ++i) {
    same = a[i].loss == b[i].loss && a[i].metrics == b[i].metrics && a[i].epoch == b[i].epoch &&
           a[i].partition == b[i].partition;
  }
  const auto pa = straight.network().parameters();
  const auto pb = resumed.network().parameters();
  bool params = pa.size() == pb.size();
  for (std::size_t i = 0; params && i < pa.size(); ++i) params = *pa[i] == *pb[i];
  return {same && params, fmt::format("{} loss/metric rows {}, final parameters {}", a.size(),
                                      same ? "bitwise identical" : "DIFFER",
                                      params ? "bitwise identical" : "DIFFER")};
}

// AC7: two cmd_train invocations with the same config and seed.
Outcome determinism() {
  const auto dir = scratch("determinism");
  {
    std::ofstream cfg(dir / "run.ini");
    cfg << "[network]\ntier_sizes = 3, 1\nkernel_sizes = 3, 3\noperators = 12, 18, 30; 1\n"
           "[trainer]\nlr = 0.01\nnum_epochs = 4\nnum_runs = 2\nbatch_size = 4\nseed = 11\n"
           "metrics = snr:max, mae:min\n"
           "[data]\ntask = nonlinear-map\ncount = 16\nsize = 8\nfolds = 4\nval_fraction = 0.2\n";
  }
  std::ostringstream sink;
  auto strip_timing = [](const std::string& csv) {
    std::string out;
    std::istringstream in(csv);
    for (std::string line; std::getline(in, line);) out += line.substr(0, line.rfind(',')) + "\n";
    return out;
  };
  std::vector<std::string> summaries;
  for (const char* jobs : {"1", "3"}) {
    const auto out = dir / fmt::format("out_{}", jobs);
    const std::string cfg = (dir / "run.ini").string(), out_s = out.string();
    const char* argv[] = {"onnkit", "train", "--config", cfg.c_str(), "--out", out_s.c_str(),
                          "--jobs", jobs};
    if (run_cli(8, argv, sink, sink) != kExitOk) {
      std::filesystem::remove_all(dir);
      return {false, "cmd_train failed: " + sink.str()};
    }
    summaries.push_back(slurp(out / "summary.csv"));
  }
  std::filesystem::remove_all(dir);
  const bool same = strip_timing(summaries[0]) == strip_timing(summaries[1]);
  const auto rows = std::count(summaries[0].begin(), summaries[0].end(), '\n') - 1;
  return {same && rows > 0,
          fmt::format("two runs (1 and 3 worker threads), {} summary rows {} excluding per_image_time_s",
                      rows, same ? "byte-identical" : "DIFFER")};
}

// AC8: describe on the shipped three-tier configuration.
Outcome config_plumbing() {
  const std::string cfg = std::string(ONNKIT_SOURCE_DIR) + "/configs/three_tier.ini";
  const char* argv[] = {"onnkit", "describe", "--config", cfg.c_str(), "--size", "32"};
  std::ostringstream out, err;
  const int code = run_cli(6, argv, out, err);
  const std::string text = out.str();
  const bool ok = code == kExitOk && text.find("parameters: 24441\n") != std::string::npos &&
                  text.find("output=[12,16,16]") != std::string::npos &&
                  text.find("output=[32,32,32]") != std::string::npos &&
                  text.find("output=[1,32,32]") != std::string::npos;
  return {ok, ok ? "24441 parameters; outputs [12,16,16] -> [32,32,32] -> [1,32,32]"
                 : "unexpected describe output: " + text + err.str()};
}

// AC9: a tier mixing two operator sets against both homogeneous tiers.
Outcome heterogeneity() {
  const auto lib = builtin();
  const std::size_t a = lib->index_of("mul", "sum", "tanh");
  const std::size_t b = lib->index_of("sine", "max", "tanh");
  const NetworkSpec mixed{1, {{2, 3, 1, {a, b}}}};
  const NetworkSpec only_a{1, {{2, 3, 1, {a}}}};
  const NetworkSpec only_b{1, {{2, 3, 1, {b}}}};
  std::mt19937_64 gen(9);
  OpNetwork net_mixed(mixed, lib), net_a(only_a, lib), net_b(only_b, lib);
  net_mixed.reset_parameters(4);
  for (OpNetwork* n : {&net_a, &net_b}) {
    const auto src = net_mixed.parameters();
    const auto dst = n->parameters();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = *src[i];
  }
  const Tensor x = random_tensor({1, 8, 8}, gen);
  const Tensor ym = net_mixed.predict_one(x), ya = net_a.predict_one(x), yb = net_b.predict_one(x);
  const bool differs = max_abs_diff(ym, ya) > 1e-6 && max_abs_diff(ym, yb) > 1e-6;
  // Channel 0 follows set a and channel 1 follows set b.
  const bool consistent = take_leading(ym, 0) == take_leading(ya, 0) &&
                          take_leading(ym, 1) == take_leading(yb, 1);

  ag::GradcheckOptions opts;
  opts.tolerance = 1e-4;
  opts.floor = kNetworkGradcheckFloor;
  auto two_tier = [&](std::vector<std::size_t> ops) {
    return NetworkSpec{1, {{2, 3, 1, std::move(ops)}, {1, 3, 1, {a}}}};
  };
  const auto g_mixed = network_gradcheck(two_tier({a, b}), lib, 6, 6, 1, opts);
  const auto g_a = network_gradcheck(two_tier({a}), lib, 6, 6, 1, opts);
  const auto g_b = network_gradcheck(two_tier({b}), lib, 6, 6, 1, opts);
  const bool grads = g_mixed.passed && g_a.passed && g_b.passed;
  return {differs && consistent && grads,
          fmt::format("mixed vs homogeneous max diff {:.3e} / {:.3e}, channels match their sets: {}; "
                      "gradcheck mixed {:.2e}, homogeneous {:.2e} / {:.2e} ({})",
                      max_abs_diff(ym, ya), max_abs_diff(ym, yb), consistent ? "yes" : "no",
                      g_mixed.max_rel_error, g_a.max_rel_error, g_b.max_rel_error,
                      grads ? "all pass" : "FAIL")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"AC1 convolution oracle", convolution_oracle},
      {"AC2 gradient correctness", gradient_correctness},
      {"AC3 unfold/fold adjointness", adjointness},
      {"AC4 desk-scale training", desk_scale_training},
      {"AC5 convexity sanity", convexity_sanity},
      {"AC6 checkpoint resumption", checkpoint_resumption},
      {"AC7 determinism", determinism},
      {"AC8 config plumbing", config_plumbing},
      {"AC9 heterogeneity", heterogeneity},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, fmt::format("threw: {}", e.what())};
    }
    if (!o.passed) ++failures;
    std::cout << (o.passed ? "[PASS] " : "[FAIL] ") << name << ": " << o.detail << std::endl;
  }
  std::cout << fmt::format("{} of {} criteria passed", criteria.size() - static_cast<std::size_t>(failures),
                           criteria.size())
            << std::endl;
  return failures == 0 ? 0 : 1;
}
