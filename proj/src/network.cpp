#include "onnkit/network.hpp"

#include <cmath>
#include <tuple>

#include <fmt/format.h>

#include "onnkit/error.hpp"
#include "onnkit/rng.hpp"

namespace onnkit {

ag::Variable block_forward(const OperatorSetLibrary& library,
                           std::size_t operator_set, const ag::Variable& weights,
                           const ag::Variable& bias, const ag::Variable& patches,
                           std::size_t height, std::size_t width) {
  const Shape& ws = weights.shape();
  const Shape& ps = patches.shape();
  if (ws.size() != 3 || ps.size() != 3 || ws[0] != ps[0] ||
      ws[1] * ws[2] != ps[2] || ps[1] != height * width) {
    fail(ErrorCode::ShapeMismatch,
         fmt::format("weights {} do not fit patches {} for a {}x{} output",
                     shape_str(ws), shape_str(ps), height, width));
  }
  const OperatorSet& set = library.set(operator_set);

  // Weights become [C, 1, m*n] so they broadcast over every patch row.
  const ag::Variable w = ag::reshape(weights, {ws[0], 1, ws[1] * ws[2]});
  const ag::Variable z = evaluate_nodal(library.nodal()[set.nodal], w, patches);
  const ag::Variable pooled = evaluate_pool(library.pool()[set.pool], z);
  const ag::Variable x = ag::reshape(ag::sum(pooled, 0), {height, width});
  return evaluate_activation(library.activation()[set.activation], x, bias);
}

OpNetwork::OpNetwork(const NetworkSpec& spec,
                     std::shared_ptr<const OperatorSetLibrary> library)
    : in_channels_(spec.in_channels), library_(std::move(library)) {
  if (!library_) fail(ErrorCode::ValidationError, "network needs an operator library");
  if (spec.in_channels == 0) {
    fail(ErrorCode::ValidationError, "in_channels must be at least 1");
  }
  if (spec.tiers.empty()) {
    fail(ErrorCode::ValidationError, "network needs at least one tier");
  }
  std::size_t channels = spec.in_channels;
  for (std::size_t t = 0; t < spec.tiers.size(); ++t) {
    const TierSpec& ts = spec.tiers[t];
    if (ts.neurons == 0) {
      fail(ErrorCode::ValidationError, fmt::format("tier {} has no neurons", t));
    }
    if (ts.kernel % 2 == 0) {
      fail(ErrorCode::ValidationError,
           fmt::format("tier {}: kernel size must be odd, got {}", t, ts.kernel));
    }
    if (ts.sampling == 0) {
      fail(ErrorCode::ValidationError,
           fmt::format("tier {}: sampling factor must be non-zero", t));
    }
    if (ts.operators.size() != 1 && ts.operators.size() != ts.neurons) {
      fail(ErrorCode::ValidationError,
           fmt::format("tier {}: {} operator sets given for {} neurons", t,
                       ts.operators.size(), ts.neurons));
    }
    OpTier tier{channels, ts.kernel, ts.sampling, {}};
    for (std::size_t k = 0; k < ts.neurons; ++k) {
      const std::size_t op = ts.operators.size() == 1 ? ts.operators[0] : ts.operators[k];
      if (op >= library_->size()) {
        fail(ErrorCode::UnknownOperator,
             fmt::format("tier {} neuron {}: operator set {} outside [0, {})", t,
                         k, op, library_->size()));
      }
      tier.blocks.push_back(
          OpBlock{Tensor::zeros({channels, ts.kernel, ts.kernel}),
                  Tensor::zeros({1}), op});
    }
    tiers_.push_back(std::move(tier));
    channels = ts.neurons;
  }
}

NetworkSpec OpNetwork::spec() const {
  NetworkSpec s{in_channels_, {}};
  for (const OpTier& tier : tiers_) {
    TierSpec ts{tier.blocks.size(), tier.kernel, tier.sampling, {}};
    bool uniform = true;
    for (const OpBlock& b : tier.blocks) {
      ts.operators.push_back(b.operator_set);
      uniform = uniform && b.operator_set == tier.blocks.front().operator_set;
    }
    if (uniform) ts.operators.resize(1);
    s.tiers.push_back(std::move(ts));
  }
  return s;
}

std::size_t OpNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const OpTier& tier : tiers_) {
    n += tier.blocks.size() * (tier.in_channels * tier.kernel * tier.kernel + 1);
  }
  return n;
}

std::vector<Shape> OpNetwork::output_shapes(std::size_t height,
                                            std::size_t width) const {
  std::vector<Shape> shapes;
  for (std::size_t t = 0; t < tiers_.size(); ++t) {
    try {
      height = resampled_extent(height, tiers_[t].sampling);
      width = resampled_extent(width, tiers_[t].sampling);
    } catch (const Error& e) {
      fail(e.code(), fmt::format("tier {}: {}", t, e.what()));
    }
    shapes.push_back({tiers_[t].blocks.size(), height, width});
  }
  return shapes;
}

void OpNetwork::reset_parameters(std::uint64_t seed, const InitSpec& init) {
  Rng rng(seed);
  for (OpTier& tier : tiers_) {
    const double fan_in =
        static_cast<double>(tier.in_channels * tier.kernel * tier.kernel);
    const double bound =
        init.kind == InitKind::Uniform ? init.bound : 1.0 / std::sqrt(fan_in);
    for (OpBlock& block : tier.blocks) {
      for (double& w : block.weights.data()) w = rng.uniform(-bound, bound);
      block.bias = Tensor::zeros({1});
    }
  }
}

std::vector<Tensor*> OpNetwork::parameters() {
  std::vector<Tensor*> out;
  for (OpTier& tier : tiers_) {
    for (OpBlock& block : tier.blocks) {
      out.push_back(&block.weights);
      out.push_back(&block.bias);
    }
  }
  return out;
}

std::vector<const Tensor*> OpNetwork::parameters() const {
  std::vector<const Tensor*> out;
  for (const OpTier& tier : tiers_) {
    for (const OpBlock& block : tier.blocks) {
      out.push_back(&block.weights);
      out.push_back(&block.bias);
    }
  }
  return out;
}

std::vector<std::string> OpNetwork::parameter_names() const {
  std::vector<std::string> names;
  for (std::size_t t = 0; t < tiers_.size(); ++t) {
    for (std::size_t k = 0; k < tiers_[t].blocks.size(); ++k) {
      names.push_back(fmt::format("param/{}/{}/weights", t, k));
      names.push_back(fmt::format("param/{}/{}/bias", t, k));
    }
  }
  return names;
}

std::vector<ag::Variable> OpNetwork::bind(ag::Tape& tape) const {
  std::vector<ag::Variable> vars;
  for (const Tensor* p : parameters()) vars.push_back(tape.leaf(*p));
  return vars;
}

std::size_t OpNetwork::param_offset(std::size_t tier) const {
  std::size_t offset = 0;
  for (std::size_t t = 0; t < tier; ++t) offset += 2 * tiers_[t].blocks.size();
  return offset;
}

std::shared_ptr<const UnfoldPlan> OpNetwork::plan_for(std::size_t tier,
                                                      std::size_t height,
                                                      std::size_t width) const {
  const std::size_t kernel = tiers_[tier].kernel;
  std::lock_guard lock(plans_->mutex);
  auto& slot = plans_->plans[std::make_tuple(height, width, kernel)];
  if (!slot) slot = std::make_shared<const UnfoldPlan>(height, width, kernel, kernel);
  return slot;
}

ag::Variable OpNetwork::tier_forward(std::size_t t,
                                     std::span<const ag::Variable> params,
                                     const ag::Variable& input) const {
  const OpTier& tier = tiers_.at(t);
  const Shape& s = input.shape();
  if (s.size() != 3 || s[0] != tier.in_channels) {
    fail(ErrorCode::ShapeMismatch,
         fmt::format("tier {} expects [{},M,N] input, got {}", t,
                     tier.in_channels, shape_str(s)));
  }
  const std::size_t height = s[1];
  const std::size_t width = s[2];
  const ag::Variable patches = ag::unfold(input, plan_for(t, height, width));

  const std::size_t offset = param_offset(t);
  std::vector<ag::Variable> outputs;
  outputs.reserve(tier.blocks.size());
  for (std::size_t k = 0; k < tier.blocks.size(); ++k) {
    outputs.push_back(block_forward(*library_, tier.blocks[k].operator_set,
                                    params[offset + 2 * k],
                                    params[offset + 2 * k + 1], patches, height,
                                    width));
  }
  try {
    return ag::resample(ag::stack(outputs), tier.sampling);
  } catch (const Error& e) {
    fail(e.code(), fmt::format("tier {}: {}", t, e.what()));
  }
}

ag::Variable OpNetwork::forward(std::span<const ag::Variable> params,
                                const ag::Variable& input) const {
  if (params.size() != param_offset(tiers_.size())) {
    fail(ErrorCode::ShapeMismatch,
         fmt::format("expected {} parameter tensors, got {}",
                     param_offset(tiers_.size()), params.size()));
  }
  // Fail early with the tier index before doing any work.
  if (input.shape().size() == 3) output_shapes(input.shape()[1], input.shape()[2]);
  ag::Variable x = input;
  for (std::size_t t = 0; t < tiers_.size(); ++t) x = tier_forward(t, params, x);
  return x;
}

Tensor OpNetwork::predict_one(const Tensor& sample) const {
  std::vector<ag::Variable> params;
  for (const Tensor* p : parameters()) params.push_back(ag::Variable::detached(*p));
  return forward(params, ag::Variable::detached(sample)).value();
}

Tensor OpNetwork::predict(const Tensor& batch) const {
  if (batch.rank() != 4) {
    fail(ErrorCode::ShapeMismatch,
         fmt::format("predict expects [B,C,M,N], got {}", shape_str(batch.shape())));
  }
  std::vector<Tensor> outputs;
  outputs.reserve(batch.extent(0));
  for (std::size_t b = 0; b < batch.extent(0); ++b) {
    outputs.push_back(predict_one(take_leading(batch, b)));
  }
  return stack(outputs);
}

}  // namespace onnkit
