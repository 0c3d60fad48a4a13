#include "onnkit/oplib.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "onnkit/error.hpp"

namespace onnkit {

namespace ops {

NodalOp mul() {
  return {"mul", [](const ag::Variable& w, const ag::Variable& y) {
            return ag::mul(w, y);
          }};
}

NodalOp cubic() {
  return {"cubic", [](const ag::Variable& w, const ag::Variable& y) {
            return ag::mul(w, ag::pow(y, 3));
          }};
}

NodalOp sine(double k_sin) {
  return {"sine", [k_sin](const ag::Variable& w, const ag::Variable& y) {
            return ag::sin(ag::scale(ag::mul(w, y), k_sin));
          }};
}

// Offset by one so psi(w, 0) = 0 like every other nodal operator.
NodalOp exp() {
  return {"exp", [](const ag::Variable& w, const ag::Variable& y) {
            return ag::add_scalar(ag::exp(ag::mul(w, y)), -1.0);
          }};
}

NodalOp sinh() {
  return {"sinh", [](const ag::Variable& w, const ag::Variable& y) {
            return ag::sinh(ag::mul(w, y));
          }};
}

NodalOp chirp(double k_chirp) {
  return {"chirp", [k_chirp](const ag::Variable& w, const ag::Variable& y) {
            return ag::sin(ag::scale(ag::mul(w, ag::square(y)), k_chirp));
          }};
}

PoolOp sum() {
  return {"sum", [](const ag::Variable& z) {
            return ag::sum(z, z.shape().size() - 1);
          }};
}

PoolOp median() {
  return {"median", [](const ag::Variable& z) {
            const std::size_t axis = z.shape().size() - 1;
            const auto n = static_cast<double>(z.shape()[axis]);
            return ag::scale(ag::median(z, axis), n);
          }};
}

PoolOp max() {
  return {"max", [](const ag::Variable& z) {
            const std::size_t axis = z.shape().size() - 1;
            const auto n = static_cast<double>(z.shape()[axis]);
            return ag::scale(ag::max(z, axis), n);
          }};
}

ActivationOp tanh() {
  return {"tanh", [](const ag::Variable& x, const ag::Variable& b) {
            return ag::tanh(ag::sub(x, b));
          }};
}

ActivationOp lincut(double cut) {
  return {"lincut", [cut](const ag::Variable& x, const ag::Variable& b) {
            const ag::Variable shifted = ag::sub(x, b);
            const ag::Variable scaled = ag::pointwise(
                "div_cut", shifted, [cut](double v) { return v / cut; },
                [cut](double, double) { return 1.0 / cut; });
            return ag::clamp(scaled, -1.0, 1.0);
          }};
}

ActivationOp identity() {
  return {"identity", [](const ag::Variable& x, const ag::Variable& b) {
            return ag::sub(x, b);
          }};
}

}  // namespace ops

namespace {

template <typename Op>
void require_unique(const std::vector<Op>& ops, const std::string& name,
                    std::string_view kind) {
  const bool taken = std::any_of(ops.begin(), ops.end(),
                                 [&](const Op& op) { return op.name == name; });
  if (taken) {
    fail(ErrorCode::DuplicateName,
         fmt::format("{} operator '{}' is already registered", kind, name));
  }
}

template <typename Op>
std::size_t find_op(const std::vector<Op>& ops, std::string_view name,
                    std::string_view kind) {
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (ops[i].name == name) return i;
  }
  fail(ErrorCode::UnknownOperator,
       fmt::format("no {} operator named '{}'", kind, name));
}

void check_pool_contract(const std::string& name, const PoolFn& forward) {
  Tensor probe({2, 3, 4});
  for (std::size_t i = 0; i < probe.numel(); ++i) {
    probe[i] = 0.25 * static_cast<double>((i * 7) % 11) - 1.0;
  }
  const ag::Variable out = forward(ag::Variable::detached(probe));
  if (out.shape() != Shape{2, 3}) {
    fail(ErrorCode::ShapeContractViolation,
         fmt::format("pool operator '{}' maps [2,3,4] to {}; it must reduce "
                     "the trailing axis",
                     name, shape_str(out.shape())));
  }
}

}  // namespace

OperatorSetLibrary::OperatorSetLibrary(std::vector<NodalOp> nodal,
                                       std::vector<PoolOp> pool,
                                       std::vector<ActivationOp> activation,
                                       OplibConstants constants)
    : constants_(constants) {
  for (NodalOp& op : nodal) {
    require_unique(nodal_, op.name, "nodal");
    nodal_.push_back(std::move(op));
  }
  for (PoolOp& op : pool) {
    require_unique(pool_, op.name, "pool");
    check_pool_contract(op.name, op.forward);
    pool_.push_back(std::move(op));
  }
  for (ActivationOp& op : activation) {
    require_unique(activation_, op.name, "activation");
    activation_.push_back(std::move(op));
  }
  for (std::size_t n = 0; n < nodal_.size(); ++n) {
    for (std::size_t p = 0; p < pool_.size(); ++p) {
      for (std::size_t a = 0; a < activation_.size(); ++a) append_set(n, p, a);
    }
  }
}

OperatorSetLibrary OperatorSetLibrary::builtin(const OplibConstants& constants) {
  OperatorSetLibrary lib(
      {ops::mul(), ops::cubic(), ops::sine(constants.k_sin), ops::exp(),
       ops::sinh(), ops::chirp(constants.k_chirp)},
      {ops::sum(), ops::median(), ops::max()},
      {ops::tanh(), ops::lincut(constants.cut)}, constants);
  ActivationOp id = ops::identity();
  lib.add_activation(std::move(id.name), std::move(id.forward));
  return lib;
}

void OperatorSetLibrary::append_set(std::size_t n, std::size_t p, std::size_t a) {
  sets_.push_back(OperatorSet{sets_.size(), n, p, a});
}

void OperatorSetLibrary::add_nodal(std::string name, NodalFn forward) {
  require_unique(nodal_, name, "nodal");
  nodal_.push_back({std::move(name), std::move(forward)});
  const std::size_t n = nodal_.size() - 1;
  for (std::size_t p = 0; p < pool_.size(); ++p) {
    for (std::size_t a = 0; a < activation_.size(); ++a) append_set(n, p, a);
  }
}

void OperatorSetLibrary::add_nodal(std::string name, ag::CustomBackward custom) {
  add_nodal(std::move(name),
            [custom = std::move(custom)](const ag::Variable& w,
                                         const ag::Variable& y) {
              const ag::Variable inputs[] = {w, y};
              return ag::apply(custom, inputs);
            });
}

void OperatorSetLibrary::add_pool(std::string name, PoolFn forward) {
  require_unique(pool_, name, "pool");
  check_pool_contract(name, forward);
  pool_.push_back({std::move(name), std::move(forward)});
  const std::size_t p = pool_.size() - 1;
  for (std::size_t n = 0; n < nodal_.size(); ++n) {
    for (std::size_t a = 0; a < activation_.size(); ++a) append_set(n, p, a);
  }
}

void OperatorSetLibrary::add_pool(std::string name, ag::CustomBackward custom) {
  add_pool(std::move(name), [custom = std::move(custom)](const ag::Variable& z) {
    const ag::Variable inputs[] = {z};
    return ag::apply(custom, inputs);
  });
}

void OperatorSetLibrary::add_activation(std::string name, ActivationFn forward) {
  require_unique(activation_, name, "activation");
  activation_.push_back({std::move(name), std::move(forward)});
  const std::size_t a = activation_.size() - 1;
  for (std::size_t n = 0; n < nodal_.size(); ++n) {
    for (std::size_t p = 0; p < pool_.size(); ++p) append_set(n, p, a);
  }
}

void OperatorSetLibrary::add_activation(std::string name,
                                        ag::CustomBackward custom) {
  add_activation(std::move(name),
                 [custom = std::move(custom)](const ag::Variable& x,
                                              const ag::Variable& b) {
                   const ag::Variable inputs[] = {x, b};
                   return ag::apply(custom, inputs);
                 });
}

const OperatorSet& OperatorSetLibrary::set(std::size_t index) const {
  if (index >= sets_.size()) {
    fail(ErrorCode::UnknownOperator,
         fmt::format("operator set {} out of range [0, {})", index, sets_.size()));
  }
  return sets_[index];
}

std::size_t OperatorSetLibrary::index_of(std::size_t nodal, std::size_t pool,
                                         std::size_t activation) const {
  for (const OperatorSet& s : sets_) {
    if (s.nodal == nodal && s.pool == pool && s.activation == activation) {
      return s.index;
    }
  }
  fail(ErrorCode::UnknownOperator,
       fmt::format("no operator set ({}, {}, {})", nodal, pool, activation));
}

std::size_t OperatorSetLibrary::index_of(std::string_view nodal,
                                         std::string_view pool,
                                         std::string_view activation) const {
  return index_of(find_op(nodal_, nodal, "nodal"), find_op(pool_, pool, "pool"),
                  find_op(activation_, activation, "activation"));
}

std::string OperatorSetLibrary::describe(std::size_t index) const {
  const OperatorSet& s = set(index);
  return fmt::format("{}/{}/{}", nodal_[s.nodal].name, pool_[s.pool].name,
                     activation_[s.activation].name);
}

ag::Variable evaluate_nodal(const NodalOp& op, const ag::Variable& weights,
                            const ag::Variable& patches) {
  ag::Variable z = op.forward(weights, patches);
  if (!z.value().all_finite()) {
    fail(ErrorCode::NonFiniteValue,
         fmt::format("nodal operator '{}' produced a non-finite value", op.name));
  }
  return z;
}

ag::Variable evaluate_pool(const PoolOp& op, const ag::Variable& z) {
  if (z.shape().empty() || z.shape().back() == 0) {
    fail(ErrorCode::EmptyAxis,
         fmt::format("pool operator '{}' applied to {}", op.name,
                     shape_str(z.shape())));
  }
  ag::Variable out = op.forward(z);
  const Shape expected(z.shape().begin(), z.shape().end() - 1);
  if (out.shape() != expected) {
    fail(ErrorCode::ShapeContractViolation,
         fmt::format("pool operator '{}' returned {} for input {}", op.name,
                     shape_str(out.shape()), shape_str(z.shape())));
  }
  return out;
}

ag::Variable evaluate_activation(const ActivationOp& op, const ag::Variable& x,
                                 const ag::Variable& bias) {
  return op.forward(x, bias);
}

}  // namespace onnkit
