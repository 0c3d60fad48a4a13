#pragma once

#include <functional>
#include <span>
#include <vector>

#include "onnkit/autograd.hpp"

namespace onnkit::ag {

struct GradcheckOptions {
  double step = 1e-6;
  double tolerance = 1e-5;
  /// Coordinates whose perturbation by this much (or by `step`) flips any
  /// max/median/clamp selection are reported as ties and not compared.
  double tie_margin = 1e-4;
  /// Smallest denominator of the relative error. Central differences carry
  /// round-off near 1e-16 * |f| / step, so gradients far below this floor are
  /// effectively compared on an absolute scale (|a - n| <= tolerance * floor).
  double floor = 1e-8;
};

struct InputReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t ties = 0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

struct GradcheckReport {
  std::vector<InputReport> inputs;
  double max_rel_error = 0.0;
  std::size_t ties = 0;
  bool passed = false;
};

/// Builds a scalar from variables bound to the given tape.
using ScalarFunction =
    std::function<Variable(Tape& tape, std::span<const Variable> inputs)>;

/// Compares tape gradients of `f` with central differences
/// (f(x+h) - f(x-h)) / 2h, one coordinate at a time. Relative error is
/// |a - n| / max(|a|, |n|, floor).
GradcheckReport gradcheck(const ScalarFunction& f, std::vector<Tensor> inputs,
                          const GradcheckOptions& options = {});

}  // namespace onnkit::ag
