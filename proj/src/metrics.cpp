#include "onnkit/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "onnkit/error.hpp"

namespace onnkit {

std::string_view to_string(Criterion c) { return c == Criterion::Max ? "max" : "min"; }

Criterion parse_criterion(std::string_view text) {
  if (text == "max") return Criterion::Max;
  if (text == "min") return Criterion::Min;
  fail(ErrorCode::ValidationError,
       fmt::format("metric criterion must be 'max' or 'min', got '{}'", text));
}

namespace {

void check_same_shape(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    fail(ErrorCode::ShapeMismatch,
         fmt::format("prediction {} vs target {}", shape_str(pred.shape()),
                     shape_str(target.shape())));
  }
}

}  // namespace

double calc_snr(const Tensor& pred, const Tensor& target) {
  check_same_shape(pred, target);
  const double mean = sum_all(target) / static_cast<double>(target.numel());
  double signal = 0.0;
  double noise = 0.0;
  for (std::size_t i = 0; i < target.numel(); ++i) {
    signal += (target[i] - mean) * (target[i] - mean);
    noise += (target[i] - pred[i]) * (target[i] - pred[i]);
  }
  if (signal == 0.0) fail(ErrorCode::ConstantTarget, "SNR of a constant target");
  if (noise == 0.0) return kSnrCapDb;
  return std::min(kSnrCapDb, 10.0 * std::log10(signal / noise));
}

double mean_squared_error(const Tensor& pred, const Tensor& target) {
  check_same_shape(pred, target);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    acc += (pred[i] - target[i]) * (pred[i] - target[i]);
  }
  return acc / static_cast<double>(pred.numel());
}

double mean_absolute_error(const Tensor& pred, const Tensor& target) {
  check_same_shape(pred, target);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.numel(); ++i) acc += std::abs(pred[i] - target[i]);
  return acc / static_cast<double>(pred.numel());
}

MetricSpec builtin_metric(std::string_view name) {
  if (name == "snr") return {"snr", calc_snr, Criterion::Max};
  if (name == "mse") return {"mse", mean_squared_error, Criterion::Min};
  if (name == "mae") return {"mae", mean_absolute_error, Criterion::Min};
  fail(ErrorCode::ValidationError,
       fmt::format("unknown metric '{}' (built-ins: snr, mse, mae)", name));
}

}  // namespace onnkit
