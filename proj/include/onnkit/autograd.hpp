#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "onnkit/tensor.hpp"

namespace onnkit::ag {

using NodeId = std::size_t;

class Tape;

/// A tensor value plus its position on a tape. Constants carry no node but
/// may still reference the tape that produced them.
class Variable {
 public:
  Variable() = default;

  /// A constant that belongs to no tape.
  static Variable detached(Tensor value) {
    return Variable(std::make_shared<const Tensor>(std::move(value)),
                    std::nullopt, nullptr);
  }

  const Tensor& value() const { return *value_; }
  const Shape& shape() const { return value_->shape(); }
  bool tracked() const noexcept { return node_.has_value(); }
  std::optional<NodeId> node() const noexcept { return node_; }
  Tape* tape() const noexcept { return tape_; }

 private:
  friend class Tape;
  Variable(std::shared_ptr<const Tensor> value, std::optional<NodeId> node,
           Tape* tape)
      : value_(std::move(value)), node_(node), tape_(tape) {}

  std::shared_ptr<const Tensor> value_ = std::make_shared<const Tensor>();
  std::optional<NodeId> node_;
  Tape* tape_ = nullptr;
};

/// Maps the upstream gradient of a node's output to gradients for each of
/// its inputs, in input order. Entries for constant inputs are ignored.
using BackwardFn = std::function<std::vector<Tensor>(const Tensor& upstream)>;

/// Gradients produced by a backward sweep, indexed by node.
class GradientMap {
 public:
  explicit GradientMap(std::vector<std::optional<Tensor>> grads)
      : grads_(std::move(grads)) {}

  /// Gradient w.r.t. `v`; zeros when `v` did not influence the root.
  Tensor of(const Variable& v) const;
  bool reached(const Variable& v) const;

 private:
  std::vector<std::optional<Tensor>> grads_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Variable leaf(Tensor value);
  Variable constant(Tensor value);

  /// Appends a node if any input is tracked; otherwise returns a constant.
  Variable record(std::string_view op, std::span<const Variable> inputs,
                  Tensor output, BackwardFn backward);

  GradientMap backward(const Variable& root) const;
  /// Vector-Jacobian product with an explicit seed shaped like `root`.
  GradientMap backward(const Variable& root, const Tensor& seed) const;

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Selective primitives (max, median, clamp, max-pool) report their
  /// choices here. Two evaluations with equal signatures took the same
  /// branch everywhere, which is what finite differences need.
  void note_selection(std::span<const std::size_t> choices);
  std::uint64_t selection_signature() const noexcept { return signature_; }

 private:
  struct Node {
    std::string op;
    Shape shape;
    std::vector<std::optional<NodeId>> parents;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::uint64_t signature_ = 14695981039346656037ull;
};

/// An operator whose gradient is supplied explicitly instead of being
/// derived from its composition.
struct CustomBackward {
  std::string name;
  std::function<Tensor(std::span<const Tensor> inputs)> forward;
  std::function<std::vector<Tensor>(const Tensor& upstream,
                                    std::span<const Tensor> inputs,
                                    const Tensor& output)>
      backward;
};

Variable apply(const CustomBackward& op, std::span<const Variable> inputs);

// Broadcasting binary primitives.
Variable add(const Variable& a, const Variable& b);
Variable sub(const Variable& a, const Variable& b);
Variable mul(const Variable& a, const Variable& b);
Variable div(const Variable& a, const Variable& b);

inline Variable operator+(const Variable& a, const Variable& b) { return add(a, b); }
inline Variable operator-(const Variable& a, const Variable& b) { return sub(a, b); }
inline Variable operator*(const Variable& a, const Variable& b) { return mul(a, b); }
inline Variable operator/(const Variable& a, const Variable& b) { return div(a, b); }

// Scalar and pointwise primitives.
Variable neg(const Variable& a);
Variable scale(const Variable& a, double factor);
Variable add_scalar(const Variable& a, double offset);
Variable pow(const Variable& a, int exponent);
Variable square(const Variable& a);
Variable sin(const Variable& a);
Variable cos(const Variable& a);
Variable exp(const Variable& a);
Variable sinh(const Variable& a);
Variable tanh(const Variable& a);
Variable clamp(const Variable& a, double lo, double hi);

/// Pointwise primitive from a value function and its derivative, where the
/// derivative receives (input, output).
Variable pointwise(std::string_view name, const Variable& a,
                   const std::function<double(double)>& fn,
                   const std::function<double(double, double)>& derivative);

// Reductions and shape primitives.
Variable reduce(const Variable& a, ReduceKind kind, std::size_t axis);
Variable sum(const Variable& a, std::size_t axis);
Variable max(const Variable& a, std::size_t axis);
Variable median(const Variable& a, std::size_t axis);
Variable sum_all(const Variable& a);
Variable mean_all(const Variable& a);
Variable reshape(const Variable& a, Shape new_shape);
Variable stack(std::span<const Variable> parts);

}  // namespace onnkit::ag
