#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "onnkit/archive.hpp"
#include "onnkit/dataio.hpp"
#include "onnkit/metrics.hpp"
#include "onnkit/network.hpp"
#include "onnkit/optim.hpp"
#include "onnkit/rng.hpp"

namespace onnkit {

enum class Partition : std::uint8_t { Train = 0, Val = 1, Test = 2 };
inline constexpr std::array<Partition, 3> kPartitions{Partition::Train, Partition::Val,
                                                      Partition::Test};
std::string_view to_string(Partition p);

struct TrainerConfig {
  /// "mse" or "mae".
  std::string loss = "mse";
  OptimizerConfig optimizer;
  std::size_t num_epochs = 10;
  std::size_t num_runs = 1;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  std::string model_name = "onn";
  std::string device = "cpu";
  InitSpec init;

  friend bool operator==(const TrainerConfig&, const TrainerConfig&) = default;
};

/// Loss and metric values of one partition after one epoch.
struct EpochRow {
  std::size_t run = 0;
  std::size_t epoch = 0;
  Partition partition = Partition::Train;
  double loss = 0.0;
  /// Parallel to TrainingRecord::metric_names.
  std::vector<double> metrics;
  double per_image_time_s = 0.0;
};

/// Best value of one (metric, partition) pair and the parameters that
/// produced it. The metric "loss" is always tracked with criterion min.
struct BestState {
  std::string metric;
  Partition partition = Partition::Train;
  Criterion criterion = Criterion::Min;
  bool valid = false;
  std::size_t run = 0;
  std::size_t epoch = 0;
  double value = 0.0;
  std::vector<Tensor> parameters;
};

struct RunStatus {
  std::size_t completed_epochs = 0;
  bool aborted = false;
  std::string message;
};

struct TrainingRecord {
  std::vector<std::string> metric_names;
  std::vector<Criterion> criteria;
  /// Ordered by run, epoch, partition.
  std::vector<EpochRow> rows;
  std::vector<BestState> bests;
  std::vector<RunStatus> runs;

  std::vector<const EpochRow*> rows_for(Partition p) const;
  const BestState* best(std::string_view metric, Partition p) const;
  bool has_partition(Partition p) const;
};

struct EvalResult {
  double loss = 0.0;
  std::vector<double> metrics;
};

/// Loss and metrics over a whole partition, evaluated on the concatenation
/// of all its predictions. Throws SizeMismatch when the network output does
/// not match the targets.
EvalResult evaluate(const OpNetwork& net, const PairedImageDataset& data,
                    std::string_view loss, std::span<const MetricSpec> metrics);

/// Parameter seed of run r for a master seed.
std::uint64_t run_seed(std::uint64_t master, std::size_t run);

class Trainer {
 public:
  Trainer(OpNetwork net, DataSplit data, TrainerConfig config,
          std::vector<MetricSpec> metrics = {});

  /// Trains every remaining epoch of every run.
  const TrainingRecord& train();
  /// Trains at most `epochs` more epochs; returns true once all runs are done.
  bool advance(std::size_t epochs);
  bool finished() const noexcept { return run_ >= config_.num_runs; }

  const TrainingRecord& record() const noexcept { return record_; }
  const OpNetwork& network() const noexcept { return net_; }
  OpNetwork& network() noexcept { return net_; }
  const Optimizer& optimizer() const noexcept { return optimizer_; }
  const TrainerConfig& config() const noexcept { return config_; }
  const DataSplit& data() const noexcept { return data_; }
  std::span<const MetricSpec> metrics() const noexcept { return metrics_; }

  /// Free-form text stored with the checkpoint (the CLI stores its config).
  void set_config_echo(std::string text) { config_echo_ = std::move(text); }
  const std::string& config_echo() const noexcept { return config_echo_; }

  Archive to_archive() const;
  void save_all(const std::filesystem::path& path) const;

  /// Restores a trainer from to_archive() output. Metric functions are taken
  /// from `metrics` by name, falling back to the built-ins. The operator
  /// library defaults to the built-in one with the stored constants.
  static Trainer from_archive(const Archive& archive, DataSplit data,
                              std::vector<MetricSpec> metrics = {},
                              std::shared_ptr<const OperatorSetLibrary> library = nullptr);
  static Trainer load(const std::filesystem::path& path, DataSplit data,
                      std::vector<MetricSpec> metrics = {},
                      std::shared_ptr<const OperatorSetLibrary> library = nullptr);

 private:
  void start_run();
  void run_epoch();
  void abort_run(const std::string& message);

  OpNetwork net_;
  DataSplit data_;
  TrainerConfig config_;
  std::vector<MetricSpec> metrics_;
  Optimizer optimizer_;
  Rng rng_;
  TrainingRecord record_;
  std::string config_echo_;

  std::size_t run_ = 0;
  std::size_t epoch_ = 0;
  bool run_started_ = false;
};

/// Network, optimizer and record stored in a checkpoint, without data.
struct LoadedCheckpoint {
  OpNetwork network;
  Optimizer optimizer;
  TrainerConfig config;
  TrainingRecord record;
  std::string config_echo;
  /// Dataset indices of the train, val and test partitions.
  std::array<std::vector<std::size_t>, 3> split_ids;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 std::shared_ptr<const OperatorSetLibrary> library = nullptr);

/// Architecture entries ("arch/...") for a network and its library constants.
void write_architecture(Archive& archive, const OpNetwork& net);
OpNetwork read_architecture(const Archive& archive,
                            std::shared_ptr<const OperatorSetLibrary> library = nullptr);

/// One CSV per partition (<dir>/<prefix><partition>.csv) with columns run,
/// epoch, loss, metrics..., per_image_time_s. Partitions without rows are
/// skipped. Throws IoError.
void export_stats(const TrainingRecord& record, const std::filesystem::path& dir,
                  std::string_view prefix = "");

/// Fold-wise best values: one row per (metric, partition) with columns
/// metric, partition, fold_1..fold_F, mean, per_image_time_s. Two extra rows
/// give the train loss at the first and last epoch of run 0.
void export_summary(std::span<const TrainingRecord> folds,
                    const std::filesystem::path& path);
std::string summary_csv(std::span<const TrainingRecord> folds);

}  // namespace onnkit
