#include "onnkit/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <ostream>
#include <set>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "onnkit/error.hpp"
#include "onnkit/rng.hpp"
#include "onnkit/trainer.hpp"

namespace onnkit {

NetworkSpec gradcheck_probe(std::size_t in_channels, std::size_t set) {
  NetworkSpec spec;
  spec.in_channels = in_channels;
  spec.tiers.push_back({2, 3, 1, {set}});
  spec.tiers.push_back({1, 3, 1, {set}});
  return spec;
}

ag::GradcheckReport network_gradcheck(const NetworkSpec& spec,
                                      std::shared_ptr<const OperatorSetLibrary> library,
                                      std::size_t height, std::size_t width,
                                      std::uint64_t seed,
                                      const ag::GradcheckOptions& options) {
  OpNetwork net(spec, std::move(library));
  const Shape out_shape = net.output_shapes(height, width).back();
  Rng rng(seed);
  std::vector<Tensor> inputs;
  Tensor x({spec.in_channels, height, width});
  for (double& v : x.data()) v = rng.uniform(-0.5, 0.5);
  inputs.push_back(std::move(x));
  for (const Tensor* p : std::as_const(net).parameters()) {
    Tensor t(p->shape());
    for (double& v : t.data()) v = rng.uniform(-0.1, 0.1);
    inputs.push_back(std::move(t));
  }
  Tensor r(out_shape);
  for (double& v : r.data()) v = rng.uniform(-1.0, 1.0);

  const ag::ScalarFunction f = [&net, &r](ag::Tape& tape, std::span<const ag::Variable> v) {
    const ag::Variable y = net.forward(v.subspan(1), v[0]);
    return ag::sum_all(y * tape.constant(r));
  };
  return ag::gradcheck(f, std::move(inputs), options);
}

std::vector<SetCheck> gradcheck_sets(std::shared_ptr<const OperatorSetLibrary> library,
                                     const std::vector<std::size_t>& sets,
                                     std::size_t in_channels, double tolerance,
                                     std::uint64_t seed) {
  ag::GradcheckOptions options;
  options.tolerance = tolerance;
  options.floor = kNetworkGradcheckFloor;
  std::vector<SetCheck> out;
  for (std::size_t s : sets) {
    SetCheck check{s, library->describe(s), {}};
    check.report = network_gradcheck(gradcheck_probe(in_channels, s), library, 6, 6,
                                     mix_seed(seed, s), options);
    out.push_back(std::move(check));
  }
  return out;
}

PairedImageDataset load_dataset(const DataConfig& data, std::size_t in_channels) {
  PairedImageDataset dataset =
      data.source == DataSource::Synthetic
          ? make_synthetic_task(data.task, data.count, data.size, data.seed, data.channels)
          : load_image_folder(data.path, data.size, data.size);
  for (const ImagePair& pair : dataset.items) {
    if (pair.input.extent(0) != in_channels) {
      fail(ErrorCode::SizeMismatch,
           fmt::format("sample '{}' has shape {} but the network expects {} input channels",
                       pair.id, shape_str(pair.input.shape()), in_channels));
    }
  }
  return dataset;
}

namespace {

struct Failure {
  std::string category;
  int exit_code;
  std::string message;
};

template <typename F>
auto guarded(std::string_view category, int exit_code, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Failure{std::string(category), exit_code, e.what()};
  } catch (const std::filesystem::filesystem_error& e) {
    throw Failure{std::string(category), exit_code, e.what()};
  }
}

int report(const Failure& f, std::ostream& err) {
  std::string message = f.message;
  std::replace(message.begin(), message.end(), '\n', ' ');
  fmt::print(err, "error: {}: {}\n", f.category, message);
  return f.exit_code;
}

std::string number(double v) { return fmt::format("{:.17g}", v); }

std::size_t resolve_jobs(std::size_t requested) {
  if (const char* env = std::getenv("ONNKIT_THREADS")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, requested);
}

std::string metric_cells(const TrainingRecord& record, const EvalResult& r) {
  std::string out = fmt::format("loss={}", number(r.loss));
  for (std::size_t m = 0; m < record.metric_names.size(); ++m) {
    out += fmt::format(" {}={}", record.metric_names[m], number(r.metrics[m]));
  }
  return out;
}

}  // namespace

int cmd_train(const TrainOptions& options, std::ostream& out, std::ostream& err) {
  try {
    RunConfig config = guarded("config", kExitUsage, [&] { return load_config(options.config); });
    if (options.seed) config.trainer.seed = *options.seed;
    if (options.folds) {
      if (*options.folds == 0) throw Failure{"usage", kExitUsage, "--folds must be at least 1"};
      config.data.folds = *options.folds;
    }
    const std::string echo = print_config(config);
    const auto library = std::make_shared<const OperatorSetLibrary>(
        OperatorSetLibrary::builtin(config.network.constants));
    const NetworkSpec spec = config.network.to_spec();
    guarded("config", kExitUsage, [&] {
      OpNetwork probe(spec, library);
      return probe.output_shapes(config.data.size, config.data.size);
    });
    const PairedImageDataset dataset = guarded("data", kExitRuntime, [&] {
      return load_dataset(config.data, config.network.in_channels);
    });
    const std::vector<DataSplit> splits = guarded("data", kExitRuntime, [&] {
      return partition(dataset, config.data.folds, config.data.val_fraction, config.data.seed);
    });
    guarded("io", kExitRuntime, [&] { return std::filesystem::create_directories(options.out); });

    const std::vector<MetricSpec> metrics = config.metric_specs();
    std::vector<TrainingRecord> records(splits.size());
    std::vector<std::exception_ptr> errors(splits.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t f = next++; f < splits.size(); f = next++) {
        try {
          Trainer trainer(OpNetwork(spec, library), splits[f], config.trainer, metrics);
          trainer.set_config_echo(echo);
          trainer.train();
          const auto dir = options.out / fmt::format("fold_{}", f + 1);
          std::filesystem::create_directories(dir);
          trainer.save_all(dir / "checkpoint.onnk");
          export_stats(trainer.record(), dir);
          records[f] = trainer.record();
        } catch (...) {
          errors[f] = std::current_exception();
        }
      }
    };
    const std::size_t jobs = std::min(resolve_jobs(options.jobs), splits.size());
    std::vector<std::thread> threads;
    for (std::size_t j = 1; j < jobs; ++j) threads.emplace_back(worker);
    worker();
    for (std::thread& t : threads) t.join();
    for (std::size_t f = 0; f < errors.size(); ++f) {
      if (!errors[f]) continue;
      guarded("train", kExitRuntime, [&] {
        try {
          std::rethrow_exception(errors[f]);
        } catch (const Error& e) {
          fail(e.code(), fmt::format("fold {}: {}", f + 1, e.what()));
        }
      });
    }

    const auto summary = options.out / "summary.csv";
    guarded("io", kExitRuntime, [&] { export_summary(records, summary); });
    for (std::size_t f = 0; f < records.size(); ++f) {
      const TrainingRecord& rec = records[f];
      for (std::size_t r = 0; r < rec.runs.size(); ++r) {
        if (rec.runs[r].aborted) {
          fmt::print(err, "warning: fold {} run {} aborted: {}\n", f + 1, r, rec.runs[r].message);
        }
      }
      for (const BestState& b : rec.bests) {
        if (!b.valid) continue;
        fmt::print(out, "fold {}: best {} {} = {} (run {}, epoch {})\n", f + 1, to_string(b.partition),
                   b.metric, number(b.value), b.run, b.epoch);
      }
    }
    fmt::print(out, "summary: {}\n", summary.string());
    return kExitOk;
  } catch (const Failure& f) {
    return report(f, err);
  }
}

int cmd_eval(const EvalOptions& options, std::ostream& out, std::ostream& err) {
  try {
    LoadedCheckpoint ckpt =
        guarded("checkpoint", kExitRuntime, [&] { return load_checkpoint(options.checkpoint); });
    if (ckpt.config_echo.empty()) {
      throw Failure{"checkpoint", kExitRuntime, "checkpoint carries no configuration"};
    }
    RunConfig config = guarded("checkpoint", kExitRuntime, [&] {
      try {
        return parse_config(ckpt.config_echo);
      } catch (const Error& e) {
        fail(ErrorCode::CorruptState, fmt::format("stored configuration: {}", e.what()));
      }
    });
    std::vector<MetricSpec> metrics;
    for (std::size_t m = 0; m < ckpt.record.metric_names.size(); ++m) {
      MetricSpec spec = guarded("checkpoint", kExitRuntime,
                                [&] { return builtin_metric(ckpt.record.metric_names[m]); });
      spec.criterion = ckpt.record.criteria[m];
      metrics.push_back(std::move(spec));
    }
    const std::string& loss = ckpt.config.loss;

    struct Part {
      std::string label;
      std::optional<Partition> partition;
      PairedImageDataset data;
    };
    std::vector<Part> parts;
    if (options.data) {
      DataConfig dc = config.data;
      dc.source = DataSource::Folder;
      dc.path = options.data->string();
      parts.push_back({"data", std::nullopt, guarded("data", kExitRuntime, [&] {
                         return load_dataset(dc, ckpt.network.in_channels());
                       })});
    } else {
      const PairedImageDataset dataset = guarded("data", kExitRuntime, [&] {
        return load_dataset(config.data, ckpt.network.in_channels());
      });
      for (std::size_t p = 0; p < kPartitions.size(); ++p) {
        const auto& ids = ckpt.split_ids[p];
        if (ids.empty()) continue;
        if (*std::max_element(ids.begin(), ids.end()) >= dataset.size()) {
          throw Failure{"checkpoint", kExitRuntime, "partition indices exceed the dataset"};
        }
        parts.push_back({std::string(to_string(kPartitions[p])), kPartitions[p], dataset.subset(ids)});
      }
    }

    for (const Part& part : parts) {
      const EvalResult r = guarded("data", kExitRuntime,
                                   [&] { return evaluate(ckpt.network, part.data, loss, metrics); });
      fmt::print(out, "final {} {}\n", part.label, metric_cells(ckpt.record, r));
    }
    for (const BestState& b : ckpt.record.bests) {
      if (!b.valid) continue;
      OpNetwork net = ckpt.network;
      const auto params = net.parameters();
      for (std::size_t i = 0; i < params.size(); ++i) *params[i] = b.parameters[i];
      for (const Part& part : parts) {
        if (part.partition && *part.partition != b.partition) continue;
        const EvalResult r = guarded("data", kExitRuntime,
                                     [&] { return evaluate(net, part.data, loss, metrics); });
        double value = r.loss;
        for (std::size_t m = 0; m < metrics.size(); ++m) {
          if (metrics[m].name == b.metric) value = r.metrics[m];
        }
        if (part.partition) {
          fmt::print(out, "best {} {} run={} epoch={} recorded={} evaluated={}\n", b.metric,
                     part.label, b.run, b.epoch, number(b.value), number(value));
        } else {
          fmt::print(out, "best {} {} run={} epoch={} evaluated={}\n", b.metric,
                     to_string(b.partition), b.run, b.epoch, number(value));
        }
      }
    }
    return kExitOk;
  } catch (const Failure& f) {
    return report(f, err);
  }
}

int cmd_gradcheck(const std::filesystem::path& config_path, std::ostream& out, std::ostream& err) {
  try {
    const RunConfig config =
        guarded("config", kExitUsage, [&] { return load_config(config_path); });
    std::set<std::size_t> unique;
    for (const auto& tier : config.network.operators) unique.insert(tier.begin(), tier.end());
    const auto library = std::make_shared<const OperatorSetLibrary>(
        OperatorSetLibrary::builtin(config.network.constants));
    const std::vector<SetCheck> checks = guarded("gradcheck", kExitRuntime, [&] {
      return gradcheck_sets(library, {unique.begin(), unique.end()}, config.network.in_channels,
                            1e-4, config.trainer.seed);
    });
    fmt::print(out, "{:>4}  {:<24}  {:>12}  {:>7}  {:>5}  {}\n", "set", "operators",
               "max_rel_err", "checked", "ties", "result");
    std::size_t failed = 0;
    for (const SetCheck& c : checks) {
      std::size_t checked = 0;
      for (const auto& in : c.report.inputs) checked += in.checked;
      fmt::print(out, "{:>4}  {:<24}  {:>12.3e}  {:>7}  {:>5}  {}\n", c.set, c.name,
                 c.report.max_rel_error, checked, c.report.ties,
                 c.report.passed ? "PASS" : "FAIL");
      if (!c.report.passed) ++failed;
    }
    if (failed > 0) {
      throw Failure{"gradcheck", kExitRuntime,
                    fmt::format("{} of {} operator sets failed", failed, checks.size())};
    }
    return kExitOk;
  } catch (const Failure& f) {
    return report(f, err);
  }
}

int cmd_describe(const DescribeOptions& options, std::ostream& out, std::ostream& err) {
  try {
    const RunConfig config =
        guarded("config", kExitUsage, [&] { return load_config(options.config); });
    const std::size_t size = options.size.value_or(config.data.size);
    const auto library = std::make_shared<const OperatorSetLibrary>(
        OperatorSetLibrary::builtin(config.network.constants));
    const OpNetwork net = guarded("config", kExitUsage, [&] {
      return OpNetwork(config.network.to_spec(), library);
    });
    const std::vector<Shape> shapes =
        guarded("config", kExitUsage, [&] { return net.output_shapes(size, size); });
    fmt::print(out, "input: [{}, {}, {}]\n", net.in_channels(), size, size);
    for (std::size_t t = 0; t < net.tiers().size(); ++t) {
      const OpTier& tier = net.tiers()[t];
      std::set<std::size_t> sets;
      for (const OpBlock& b : tier.blocks) sets.insert(b.operator_set);
      std::string ops;
      for (std::size_t s : sets) {
        if (!ops.empty()) ops += ", ";
        ops += fmt::format("{} {}", s, library->describe(s));
      }
      const std::size_t params =
          tier.blocks.size() * (tier.in_channels * tier.kernel * tier.kernel + 1);
      fmt::print(out, "tier {}: neurons={} kernel={}x{} sampling={} params={} output={} operators=[{}]\n",
                 t + 1, tier.blocks.size(), tier.kernel, tier.kernel, tier.sampling, params,
                 shape_str(shapes[t]), ops);
    }
    fmt::print(out, "parameters: {}\n", net.parameter_count());
    return kExitOk;
  } catch (const Failure& f) {
    return report(f, err);
  }
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Operational neural network toolkit", "onnkit"};
  app.require_subcommand(1);

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Train over every fold of the configured data");
  train_cmd->add_option("--config", train.config, "Configuration file")->required();
  train_cmd->add_option("--out", train.out, "Output directory")->required();
  train_cmd->add_option("--jobs", train.jobs, "Worker threads (ONNKIT_THREADS overrides)")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", train.seed, "Master seed override");
  train_cmd->add_option("--folds", train.folds, "Fold count override");

  EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--data", eval.data, "Folder of paired PGM images");

  std::filesystem::path gradcheck_config;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Check gradients of the configured operator sets");
  grad_cmd->add_option("--config", gradcheck_config, "Configuration file")->required();

  DescribeOptions describe;
  auto* describe_cmd = app.add_subcommand("describe", "Print the architecture and parameter count");
  describe_cmd->add_option("--config", describe.config, "Configuration file")->required();
  describe_cmd->add_option("--size", describe.size, "Input height and width");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::string message = e.what();
    std::replace(message.begin(), message.end(), '\n', ' ');
    fmt::print(err, "error: usage: {}\n", message);
    return kExitUsage;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(train, out, err);
    if (eval_cmd->parsed()) return cmd_eval(eval, out, err);
    if (grad_cmd->parsed()) return cmd_gradcheck(gradcheck_config, out, err);
    return cmd_describe(describe, out, err);
  } catch (const std::exception& e) {
    fmt::print(err, "error: internal: {}\n", e.what());
    return kExitRuntime;
  }
}

}  // namespace onnkit
