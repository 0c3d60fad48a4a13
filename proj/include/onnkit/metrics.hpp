#pragma once

#include <functional>
#include <string>
#include <string_view>

#include "onnkit/tensor.hpp"

namespace onnkit {

enum class Criterion { Max, Min };

std::string_view to_string(Criterion c);
Criterion parse_criterion(std::string_view text);

/// Strict improvement; ties keep the incumbent.
inline bool improves(Criterion c, double candidate, double incumbent) {
  return c == Criterion::Max ? candidate > incumbent : candidate < incumbent;
}

using MetricFn = std::function<double(const Tensor& pred, const Tensor& target)>;

struct MetricSpec {
  std::string name;
  MetricFn compute;
  Criterion criterion = Criterion::Max;
};

inline constexpr double kSnrCapDb = 300.0;

/// 10 log10( sum (t - mean t)^2 / sum (t - p)^2 ), capped at 300 dB.
/// Throws ConstantTarget when the target has no variance.
double calc_snr(const Tensor& pred, const Tensor& target);
double mean_squared_error(const Tensor& pred, const Tensor& target);
double mean_absolute_error(const Tensor& pred, const Tensor& target);

/// Built-in metric by name: "snr" (max), "mse" (min), "mae" (min).
MetricSpec builtin_metric(std::string_view name);

}  // namespace onnkit
