#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "onnkit/dataio.hpp"
#include "onnkit/metrics.hpp"
#include "onnkit/network.hpp"
#include "onnkit/oplib.hpp"
#include "onnkit/trainer.hpp"

namespace onnkit {

struct NetworkConfig {
  std::size_t in_channels = 1;
  std::vector<std::size_t> tier_sizes;
  std::vector<std::size_t> kernel_sizes;
  std::vector<int> sampling_factors;
  /// Per tier: one set index for every neuron, or one per neuron.
  std::vector<std::vector<std::size_t>> operators;
  OplibConstants constants;
  InitSpec init;

  NetworkSpec to_spec() const;
  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

struct MetricChoice {
  std::string name;
  Criterion criterion = Criterion::Max;
  friend bool operator==(const MetricChoice&, const MetricChoice&) = default;
};

enum class DataSource { Synthetic, Folder };

struct DataConfig {
  DataSource source = DataSource::Synthetic;
  std::string path;
  TaskKind task = TaskKind::NonlinearMap;
  std::size_t count = 64;
  /// Image height and width.
  std::size_t size = 16;
  std::size_t channels = 1;
  std::uint64_t seed = 0;
  std::size_t folds = 1;
  double val_fraction = 0.0;

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct RunConfig {
  NetworkConfig network;
  /// trainer.init mirrors network.init.
  TrainerConfig trainer;
  std::vector<MetricChoice> metrics{{"snr", Criterion::Max}};
  DataConfig data;

  std::vector<MetricSpec> metric_specs() const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// INI-style text with sections [network], [trainer] and [data]:
///
///   [network]
///   in_channels = 1
///   tier_sizes = 12, 32, 1
///   kernel_sizes = 21, 7, 3
///   sampling_factors = 2, -2, 1
///   operators = 1; 6; 3          # ';' between tiers, ',' between neurons
///
/// '#' starts a comment. Throws ParseError for malformed text and
/// ValidationError for invalid values, both naming the line.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);
std::string print_config(const RunConfig& config);

/// Operator set count of the built-in library, used for range checks.
std::size_t builtin_set_count();

}  // namespace onnkit
