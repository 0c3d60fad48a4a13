#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "onnkit/config.hpp"
#include "onnkit/gradcheck.hpp"
#include "onnkit/network.hpp"
#include "onnkit/oplib.hpp"

namespace onnkit {

/// Stable process exit codes.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitRuntime = 2 };

/// Gradient check of a whole network: loss = sum(R * net(x)) for a fixed
/// random R, checked w.r.t. the input and every parameter. Parameters and
/// biases are drawn from U(-0.1, 0.1), which keeps tanh out of saturation,
/// and the input from U(-0.5, 0.5).
ag::GradcheckReport network_gradcheck(const NetworkSpec& spec,
                                      std::shared_ptr<const OperatorSetLibrary> library,
                                      std::size_t height, std::size_t width,
                                      std::uint64_t seed,
                                      const ag::GradcheckOptions& options = {});

/// The two-tier probe used per operator set: a hidden tier of two 3x3
/// neurons and a single 3x3 output neuron, both using `set`.
NetworkSpec gradcheck_probe(std::size_t in_channels, std::size_t set);

/// Relative-error floor for whole-network checks. Two stacked tiers leave
/// some gradients near 1e-9, below what h = 1e-6 differences resolve, so
/// those are compared with |a - n| <= tolerance * floor instead.
inline constexpr double kNetworkGradcheckFloor = 1e-5;

struct SetCheck {
  std::size_t set = 0;
  std::string name;
  ag::GradcheckReport report;
};

/// Checks each set's probe on a 6x6 input at the given tolerance.
std::vector<SetCheck> gradcheck_sets(std::shared_ptr<const OperatorSetLibrary> library,
                                     const std::vector<std::size_t>& sets,
                                     std::size_t in_channels, double tolerance = 1e-4,
                                     std::uint64_t seed = 0);

/// Dataset named by the [data] section.
PairedImageDataset load_dataset(const DataConfig& data, std::size_t in_channels);

struct TrainOptions {
  std::filesystem::path config;
  std::filesystem::path out;
  std::size_t jobs = 1;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> folds;
};

struct EvalOptions {
  std::filesystem::path checkpoint;
  /// Folder of <id>_in.pgm/<id>_out.pgm pairs; defaults to the data the
  /// checkpoint was trained on.
  std::optional<std::filesystem::path> data;
};

struct DescribeOptions {
  std::filesystem::path config;
  /// Input size; defaults to [data] size.
  std::optional<std::size_t> size;
};

int cmd_train(const TrainOptions& options, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalOptions& options, std::ostream& out, std::ostream& err);
int cmd_gradcheck(const std::filesystem::path& config, std::ostream& out, std::ostream& err);
int cmd_describe(const DescribeOptions& options, std::ostream& out, std::ostream& err);

/// Parses argv and dispatches to a command.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace onnkit
