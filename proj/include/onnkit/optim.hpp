#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "onnkit/archive.hpp"
#include "onnkit/tensor.hpp"

namespace onnkit {

struct OptimizerConfig {
  std::string name = "adam";
  double lr = 1e-3;
  /// SGD momentum; 0 gives plain SGD.
  double momentum = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Multiplier applied to the learning rate by decay_lr(); 1 disables it.
  double lr_decay = 1.0;

  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

/// Supported optimizer names, for diagnostics.
std::vector<std::string_view> optimizer_names();

struct OptimizerState {
  OptimizerConfig config;
  double lr = 0.0;
  std::uint64_t steps = 0;
  /// SGD velocity or Adam first moment, one per parameter tensor.
  std::vector<Tensor> first;
  /// Adam second moment; empty for SGD.
  std::vector<Tensor> second;

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

class Optimizer {
 public:
  /// Throws UnknownOptimizer for names other than "sgd" and "adam".
  explicit Optimizer(OptimizerConfig config);
  explicit Optimizer(OptimizerState state);

  /// Updates `params` in place. Nothing is modified if any gradient is
  /// non-finite or mis-shaped.
  void step(std::span<Tensor* const> params, std::span<const Tensor> grads);
  void decay_lr() { state_.lr *= state_.config.lr_decay; }

  const OptimizerState& state() const noexcept { return state_; }

  void write(Archive& archive, std::string_view prefix = "opt/") const;
  static Optimizer read(const Archive& archive, std::string_view prefix = "opt/");

 private:
  OptimizerState state_;
};

std::string serialize_state(const OptimizerState& state);
OptimizerState deserialize_state(std::string_view bytes);

}  // namespace onnkit
