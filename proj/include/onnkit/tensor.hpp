#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace onnkit {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
Shape row_major_strides(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense, contiguous, row-major array of doubles.
///
/// Tensors are plain values: every operation returns a new tensor and no
/// public view ever carries non-row-major strides.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value) { return Tensor(Shape{1}, {value}); }
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor from(Shape shape, std::initializer_list<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t numel() const noexcept { return data_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  Shape strides() const { return row_major_strides(shape_); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double operator[](std::size_t flat) const { return data_[flat]; }
  double& operator[](std::size_t flat) { return data_[flat]; }

  double at(std::initializer_list<std::size_t> index) const;
  double& at(std::initializer_list<std::size_t> index);

  /// Value of a single-element tensor.
  double item() const;

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::size_t flat_index(std::initializer_list<std::size_t> index) const;

  Shape shape_{0};
  std::vector<double> data_;
};

/// Trailing-aligned broadcast of two shapes.
struct BroadcastSpec {
  Shape left;
  Shape right;
  Shape result;

  static BroadcastSpec of(const Shape& left, const Shape& right);
};

using BinaryFn = std::function<double(double, double)>;
using UnaryFn = std::function<double(double)>;

/// Elementwise op over the broadcast of `a` and `b`. Operands are read
/// through zero strides along broadcast dimensions; nothing is replicated.
Tensor broadcast_binary(const BinaryFn& op, const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor map(const Tensor& a, const UnaryFn& fn);
Tensor scale(const Tensor& a, double factor);

/// Sums `a` down to `target`, the adjoint of broadcasting `target` up to
/// `a`'s shape.
Tensor sum_to(const Tensor& a, const Shape& target);

/// Repeats `a` along broadcast dimensions so the result has `target` shape.
Tensor broadcast_to(const Tensor& a, const Shape& target);

enum class ReduceKind { Sum, Max, Median };

struct ReduceResult {
  Tensor values;
  /// Winning index along the reduced axis for Max/Median, shaped like values
  /// (flattened). Empty for Sum.
  std::optional<std::vector<std::size_t>> arg;
};

/// Reduction along one axis. Max ties go to the lowest index; Median selects
/// the element at sorted position floor(n/2), ties ordered by index.
ReduceResult reduce(ReduceKind kind, const Tensor& a, std::size_t axis);

/// Inverse of reduce's index bookkeeping: places `values` back along `axis`
/// (extent `extent`) at the positions in `arg`, zero elsewhere.
Tensor scatter_along(const Tensor& values, const std::vector<std::size_t>& arg,
                     std::size_t axis, std::size_t extent);

/// Repeats `a` along a new axis of size `extent` inserted at `axis`.
Tensor expand_along(const Tensor& a, std::size_t axis, std::size_t extent);

Tensor reshape(const Tensor& a, Shape new_shape);

/// Stacks equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> parts);

/// Slice `index` of the leading axis.
Tensor take_leading(const Tensor& a, std::size_t index);

double sum_all(const Tensor& a);
double dot(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace onnkit
