#include "onnkit/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "onnkit/error.hpp"

namespace onnkit::ag {

namespace {

struct Evaluation {
  double value;
  std::uint64_t signature;
};

Evaluation evaluate(const ScalarFunction& f, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Variable> vars;
  vars.reserve(inputs.size());
  for (const Tensor& t : inputs) vars.push_back(tape.constant(t));
  const Variable out = f(tape, vars);
  const double value = out.value().item();
  if (!std::isfinite(value)) {
    fail(ErrorCode::NonFiniteValue,
         fmt::format("gradcheck: function evaluated to {}", value));
  }
  return {value, tape.selection_signature()};
}

}  // namespace

GradcheckReport gradcheck(const ScalarFunction& f, std::vector<Tensor> inputs,
                          const GradcheckOptions& options) {
  for (const Tensor& t : inputs) {
    if (!t.all_finite()) {
      fail(ErrorCode::NonFiniteValue, "gradcheck: non-finite input");
    }
  }

  std::vector<Tensor> analytic;
  std::uint64_t base_signature = 0;
  {
    Tape tape;
    std::vector<Variable> leaves;
    leaves.reserve(inputs.size());
    for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t));
    const Variable root = f(tape, leaves);
    if (!root.value().all_finite()) {
      fail(ErrorCode::NonFiniteValue, "gradcheck: function is not finite");
    }
    base_signature = tape.selection_signature();
    const GradientMap grads = tape.backward(root);
    for (const Variable& leaf : leaves) analytic.push_back(grads.of(leaf));
  }

  std::vector<double> probes{options.step};
  if (options.tie_margin > options.step) probes.push_back(options.tie_margin);

  GradcheckReport report;
  report.inputs.resize(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    InputReport& ir = report.inputs[i];
    for (std::size_t k = 0; k < inputs[i].numel(); ++k) {
      const double original = inputs[i][k];
      double plus = 0.0;
      double minus = 0.0;
      bool tie = false;
      for (double delta : probes) {
        inputs[i][k] = original + delta;
        const Evaluation up = evaluate(f, inputs);
        inputs[i][k] = original - delta;
        const Evaluation down = evaluate(f, inputs);
        if (up.signature != base_signature || down.signature != base_signature) {
          tie = true;
        }
        if (delta == options.step) {
          plus = up.value;
          minus = down.value;
        }
      }
      inputs[i][k] = original;
      if (tie) {
        ++ir.ties;
        continue;
      }
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double a = analytic[i][k];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double rel = std::abs(a - numeric) / denom;
      ++ir.checked;
      if (ir.checked == 1 || rel > ir.max_rel_error) {
        ir.max_rel_error = rel;
        ir.worst_index = k;
        ir.analytic_at_worst = a;
        ir.numeric_at_worst = numeric;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, ir.max_rel_error);
    report.ties += ir.ties;
  }
  report.passed = report.max_rel_error <= options.tolerance;
  return report;
}

}  // namespace onnkit::ag
