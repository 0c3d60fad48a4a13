#include "onnkit/optim.hpp"

#include <cmath>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "onnkit/error.hpp"

namespace onnkit {

std::vector<std::string_view> optimizer_names() { return {"sgd", "adam"}; }

namespace {

void check_name(const std::string& name) {
  for (std::string_view known : optimizer_names()) {
    if (name == known) return;
  }
  fail(ErrorCode::UnknownOptimizer,
       fmt::format("unknown optimizer '{}' (supported: {})", name,
                   fmt::join(optimizer_names(), ", ")));
}

}  // namespace

Optimizer::Optimizer(OptimizerConfig config) {
  check_name(config.name);
  state_.lr = config.lr;
  state_.config = std::move(config);
}

Optimizer::Optimizer(OptimizerState state) : state_(std::move(state)) {
  check_name(state_.config.name);
}

void Optimizer::step(std::span<Tensor* const> params,
                     std::span<const Tensor> grads) {
  if (params.size() != grads.size()) {
    fail(ErrorCode::ShapeMismatch,
         fmt::format("{} parameters but {} gradients", params.size(), grads.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i].shape()) {
      fail(ErrorCode::ShapeMismatch,
           fmt::format("parameter {} has shape {} but gradient {}", i,
                       shape_str(params[i]->shape()), shape_str(grads[i].shape())));
    }
    if (!grads[i].all_finite()) {
      fail(ErrorCode::NonFiniteGradient,
           fmt::format("gradient of parameter {} is not finite", i));
    }
  }
  const bool adam = state_.config.name == "adam";
  if (state_.first.empty()) {
    for (Tensor* p : params) {
      state_.first.push_back(Tensor::zeros(p->shape()));
      if (adam) state_.second.push_back(Tensor::zeros(p->shape()));
    }
  }
  if (state_.first.size() != params.size()) {
    fail(ErrorCode::ShapeMismatch,
         fmt::format("optimizer holds {} slots for {} parameters",
                     state_.first.size(), params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state_.first[i].shape() != params[i]->shape()) {
      fail(ErrorCode::ShapeMismatch,
           fmt::format("optimizer slot {} has shape {} for parameter {}", i,
                       shape_str(state_.first[i].shape()),
                       shape_str(params[i]->shape())));
    }
  }

  ++state_.steps;
  const double lr = state_.lr;
  if (!adam) {
    const double beta = state_.config.momentum;
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto p = params[i]->data();
      auto v = state_.first[i].data();
      auto g = grads[i].data();
      for (std::size_t k = 0; k < p.size(); ++k) {
        v[k] = beta * v[k] + g[k];
        p[k] -= lr * v[k];
      }
    }
    return;
  }

  const double b1 = state_.config.beta1;
  const double b2 = state_.config.beta2;
  const double eps = state_.config.eps;
  const auto t = static_cast<double>(state_.steps);
  const double correction1 = 1.0 - std::pow(b1, t);
  const double correction2 = 1.0 - std::pow(b2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    auto m = state_.first[i].data();
    auto v = state_.second[i].data();
    auto g = grads[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      p[k] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

void Optimizer::write(Archive& archive, std::string_view prefix) const {
  const std::string p(prefix);
  const OptimizerConfig& c = state_.config;
  archive.put_bytes(p + "name", c.name);
  archive.put(p + "hyper",
              Tensor({7}, {c.lr, c.momentum, c.beta1, c.beta2, c.eps, c.lr_decay,
                           state_.lr}));
  archive.put_u64(p + "steps", {state_.steps});
  archive.put_u64(p + "slots", {state_.first.size(), state_.second.size()});
  for (std::size_t i = 0; i < state_.first.size(); ++i) {
    archive.put(fmt::format("{}slot/{}/first", p, i), state_.first[i]);
  }
  for (std::size_t i = 0; i < state_.second.size(); ++i) {
    archive.put(fmt::format("{}slot/{}/second", p, i), state_.second[i]);
  }
}

Optimizer Optimizer::read(const Archive& archive, std::string_view prefix) {
  const std::string p(prefix);
  OptimizerState s;
  s.config.name = archive.bytes(p + "name");
  const Tensor hyper = archive.tensor(p + "hyper");
  if (hyper.shape() != Shape{7}) {
    fail(ErrorCode::CorruptState,
         fmt::format("optimizer hyperparameters have shape {}", shape_str(hyper.shape())));
  }
  s.config.lr = hyper[0];
  s.config.momentum = hyper[1];
  s.config.beta1 = hyper[2];
  s.config.beta2 = hyper[3];
  s.config.eps = hyper[4];
  s.config.lr_decay = hyper[5];
  s.lr = hyper[6];
  s.steps = archive.u64_scalar(p + "steps");
  const auto slots = archive.u64(p + "slots");
  if (slots.size() != 2) fail(ErrorCode::CorruptState, "optimizer slot counts malformed");
  for (std::size_t i = 0; i < slots[0]; ++i) {
    s.first.push_back(archive.tensor(fmt::format("{}slot/{}/first", p, i)));
  }
  for (std::size_t i = 0; i < slots[1]; ++i) {
    s.second.push_back(archive.tensor(fmt::format("{}slot/{}/second", p, i)));
  }
  if (!s.second.empty() && s.second.size() != s.first.size()) {
    fail(ErrorCode::CorruptState, "optimizer moment slots disagree in count");
  }
  for (std::size_t i = 0; i < s.second.size(); ++i) {
    if (s.second[i].shape() != s.first[i].shape()) {
      fail(ErrorCode::CorruptState,
           fmt::format("optimizer slot {} moments disagree in shape", i));
    }
  }
  return Optimizer(std::move(s));
}

std::string serialize_state(const OptimizerState& state) {
  Archive archive;
  Optimizer(state).write(archive);
  return archive.serialize();
}

OptimizerState deserialize_state(std::string_view bytes) {
  return Optimizer::read(Archive::deserialize(bytes)).state();
}

}  // namespace onnkit
