#include "onnkit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "onnkit/error.hpp"

namespace onnkit {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

Shape row_major_strides(const Shape& shape) {
  Shape strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) {
    strides[i - 1] = strides[i] * shape[i];
  }
  return strides;
}

std::string shape_str(const Shape& shape) {
  return fmt::format("[{}]", fmt::join(shape, ","));
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    fail(ErrorCode::SizeMismatch,
         fmt::format("shape {} holds {} elements, got {}", shape_str(shape_),
                     shape_numel(shape_), data_.size()));
  }
}

Tensor Tensor::from(Shape shape, std::initializer_list<double> values) {
  return Tensor(std::move(shape), std::vector<double>(values));
}

std::size_t Tensor::flat_index(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) {
    fail(ErrorCode::ShapeMismatch,
         fmt::format("index of rank {} into tensor of rank {}", index.size(),
                     shape_.size()));
  }
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= shape_[axis]) {
      fail(ErrorCode::ShapeMismatch,
           fmt::format("index {} out of range for axis {} of {}", i, axis,
                       shape_str(shape_)));
    }
    flat = flat * shape_[axis] + i;
    ++axis;
  }
  return flat;
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  return data_[flat_index(index)];
}

double& Tensor::at(std::initializer_list<std::size_t> index) {
  return data_[flat_index(index)];
}

double Tensor::item() const {
  if (data_.size() != 1) {
    fail(ErrorCode::ShapeMismatch,
         fmt::format("item() on tensor of shape {}", shape_str(shape_)));
  }
  return data_[0];
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

BroadcastSpec BroadcastSpec::of(const Shape& left, const Shape& right) {
  const std::size_t rank = std::max(left.size(), right.size());
  Shape result(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t l =
        i < left.size() ? left[left.size() - 1 - i] : std::size_t{1};
    const std::size_t r =
        i < right.size() ? right[right.size() - 1 - i] : std::size_t{1};
    if (l != r && l != 1 && r != 1) {
      fail(ErrorCode::ShapeMismatch,
           fmt::format("cannot broadcast {} with {}", shape_str(left),
                       shape_str(right)));
    }
    result[rank - 1 - i] = l == 1 ? r : l;
  }
  return {left, right, std::move(result)};
}

namespace {

// Strides of `operand` expressed in the index space of `result`; broadcast
// dimensions get stride 0.
Shape broadcast_strides(const Shape& operand, const Shape& result) {
  Shape own = row_major_strides(operand);
  Shape out(result.size(), 0);
  const std::size_t offset = result.size() - operand.size();
  for (std::size_t i = 0; i < operand.size(); ++i) {
    out[offset + i] = operand[i] == 1 ? 0 : own[i];
  }
  return out;
}

template <typename Op>
Tensor broadcast_apply(Op&& op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) {
    Tensor out(a.shape());
    auto da = a.data();
    auto db = b.data();
    auto dout = out.data();
    for (std::size_t i = 0; i < dout.size(); ++i) dout[i] = op(da[i], db[i]);
    return out;
  }
  const BroadcastSpec spec = BroadcastSpec::of(a.shape(), b.shape());
  Tensor out(spec.result);
  if (out.numel() == 0) return out;

  const Shape sa = broadcast_strides(a.shape(), spec.result);
  const Shape sb = broadcast_strides(b.shape(), spec.result);
  const std::size_t rank = spec.result.size();
  const std::size_t inner = spec.result[rank - 1];
  const std::size_t ia = sa[rank - 1];
  const std::size_t ib = sb[rank - 1];
  const std::size_t outer = out.numel() / inner;

  auto da = a.data();
  auto db = b.data();
  auto dout = out.data();
  Shape counter(rank, 0);
  std::size_t off_a = 0;
  std::size_t off_b = 0;
  std::size_t pos = 0;
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < inner; ++k) {
      dout[pos++] = op(da[off_a + k * ia], db[off_b + k * ib]);
    }
    // Advance the odometer over all but the innermost axis.
    for (std::size_t axis = rank - 1; axis-- > 0;) {
      ++counter[axis];
      off_a += sa[axis];
      off_b += sb[axis];
      if (counter[axis] < spec.result[axis]) break;
      off_a -= sa[axis] * counter[axis];
      off_b -= sb[axis] * counter[axis];
      counter[axis] = 0;
    }
  }
  return out;
}

struct AxisSplit {
  std::size_t outer;
  std::size_t extent;
  std::size_t inner;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Tensor broadcast_binary(const BinaryFn& op, const Tensor& a, const Tensor& b) {
  return broadcast_apply(op, a, b);
}

Tensor add(const Tensor& a, const Tensor& b) {
  return broadcast_apply([](double x, double y) { return x + y; }, a, b);
}
Tensor sub(const Tensor& a, const Tensor& b) {
  return broadcast_apply([](double x, double y) { return x - y; }, a, b);
}
Tensor mul(const Tensor& a, const Tensor& b) {
  return broadcast_apply([](double x, double y) { return x * y; }, a, b);
}
Tensor div(const Tensor& a, const Tensor& b) {
  return broadcast_apply([](double x, double y) { return x / y; }, a, b);
}

Tensor map(const Tensor& a, const UnaryFn& fn) {
  Tensor out(a.shape());
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = fn(src[i]);
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  Tensor out(a.shape());
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] * factor;
  return out;
}

Tensor sum_to(const Tensor& a, const Shape& target) {
  if (a.shape() == target) return a;
  const BroadcastSpec spec = BroadcastSpec::of(target, a.shape());
  if (spec.result != a.shape()) {
    fail(ErrorCode::ShapeMismatch,
         fmt::format("cannot sum {} down to {}", shape_str(a.shape()),
                     shape_str(target)));
  }
  Tensor out(target);
  const Shape st = broadcast_strides(target, a.shape());
  const std::size_t rank = a.rank();
  auto src = a.data();
  auto dst = out.data();
  Shape counter(rank, 0);
  std::size_t off = 0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[off] += src[i];
    for (std::size_t axis = rank; axis-- > 0;) {
      ++counter[axis];
      off += st[axis];
      if (counter[axis] < a.shape()[axis]) break;
      off -= st[axis] * counter[axis];
      counter[axis] = 0;
    }
  }
  return out;
}

Tensor broadcast_to(const Tensor& a, const Shape& target) {
  return broadcast_apply([](double x, double) { return x; }, a,
                         Tensor(target));
}

ReduceResult reduce(ReduceKind kind, const Tensor& a, std::size_t axis) {
  if (axis >= a.rank()) {
    fail(ErrorCode::ShapeMismatch,
         fmt::format("reduce axis {} out of range for {}", axis,
                     shape_str(a.shape())));
  }
  const AxisSplit s = split_at(a.shape(), axis);
  if (s.extent == 0) {
    fail(ErrorCode::EmptyAxis,
         fmt::format("reduce over empty axis {} of {}", axis,
                     shape_str(a.shape())));
  }
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  ReduceResult result{Tensor(out_shape), std::nullopt};
  auto src = a.data();
  auto dst = result.values.data();

  if (kind == ReduceKind::Sum) {
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t k = 0; k < s.extent; ++k) {
        const double* row = src.data() + (o * s.extent + k) * s.inner;
        double* acc = dst.data() + o * s.inner;
        for (std::size_t i = 0; i < s.inner; ++i) acc[i] += row[i];
      }
    }
    return result;
  }

  std::vector<std::size_t> arg(dst.size());
  std::vector<std::size_t> order(s.extent);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      auto value_at = [&](std::size_t k) { return src[base + k * s.inner]; };
      std::size_t pick = 0;
      if (kind == ReduceKind::Max) {
        for (std::size_t k = 1; k < s.extent; ++k) {
          if (value_at(k) > value_at(pick)) pick = k;
        }
      } else {
        std::iota(order.begin(), order.end(), std::size_t{0});
        const auto mid = order.begin() + static_cast<std::ptrdiff_t>(s.extent / 2);
        std::nth_element(order.begin(), mid, order.end(),
                         [&](std::size_t l, std::size_t r) {
                           const double vl = value_at(l);
                           const double vr = value_at(r);
                           return vl < vr || (vl == vr && l < r);
                         });
        pick = *mid;
      }
      dst[o * s.inner + i] = value_at(pick);
      arg[o * s.inner + i] = pick;
    }
  }
  result.arg = std::move(arg);
  return result;
}

Tensor scatter_along(const Tensor& values, const std::vector<std::size_t>& arg,
                     std::size_t axis, std::size_t extent) {
  if (arg.size() != values.numel() || axis > values.rank()) {
    fail(ErrorCode::ShapeMismatch, "scatter_along: arg does not match values");
  }
  Shape out_shape = values.shape();
  out_shape.insert(out_shape.begin() + static_cast<std::ptrdiff_t>(axis), extent);
  Tensor out(out_shape);
  const AxisSplit s = split_at(out_shape, axis);
  auto src = values.data();
  auto dst = out.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t flat = o * s.inner + i;
      dst[(o * s.extent + arg[flat]) * s.inner + i] = src[flat];
    }
  }
  return out;
}

Tensor expand_along(const Tensor& a, std::size_t axis, std::size_t extent) {
  if (axis > a.rank()) {
    fail(ErrorCode::ShapeMismatch, "expand_along: axis out of range");
  }
  Shape out_shape = a.shape();
  out_shape.insert(out_shape.begin() + static_cast<std::ptrdiff_t>(axis), extent);
  Tensor out(out_shape);
  const AxisSplit s = split_at(out_shape, axis);
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t k = 0; k < s.extent; ++k) {
      std::copy_n(src.data() + o * s.inner, s.inner,
                  dst.data() + (o * s.extent + k) * s.inner);
    }
  }
  return out;
}

Tensor reshape(const Tensor& a, Shape new_shape) {
  if (shape_numel(new_shape) != a.numel()) {
    fail(ErrorCode::SizeMismatch,
         fmt::format("cannot reshape {} into {}", shape_str(a.shape()),
                     shape_str(new_shape)));
  }
  return Tensor(std::move(new_shape), a.values());
}

Tensor stack(std::span<const Tensor> parts) {
  if (parts.empty()) fail(ErrorCode::ShapeMismatch, "stack of zero tensors");
  const Shape& inner = parts.front().shape();
  Shape out_shape{parts.size()};
  out_shape.insert(out_shape.end(), inner.begin(), inner.end());
  std::vector<double> data;
  data.reserve(shape_numel(out_shape));
  for (const Tensor& p : parts) {
    if (p.shape() != inner) {
      fail(ErrorCode::ShapeMismatch,
           fmt::format("stack: {} vs {}", shape_str(p.shape()),
                       shape_str(inner)));
    }
    data.insert(data.end(), p.values().begin(), p.values().end());
  }
  return Tensor(std::move(out_shape), std::move(data));
}

Tensor take_leading(const Tensor& a, std::size_t index) {
  if (a.rank() == 0 || index >= a.extent(0)) {
    fail(ErrorCode::ShapeMismatch,
         fmt::format("take_leading({}) on {}", index, shape_str(a.shape())));
  }
  Shape out_shape(a.shape().begin() + 1, a.shape().end());
  const std::size_t n = shape_numel(out_shape);
  auto begin = a.values().begin() + static_cast<std::ptrdiff_t>(index * n);
  return Tensor(std::move(out_shape), std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(n)));
}

double sum_all(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return acc;
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) {
    fail(ErrorCode::ShapeMismatch,
         fmt::format("dot of {} and {}", shape_str(a.shape()),
                     shape_str(b.shape())));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) acc += a[i] * b[i];
  return acc;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    fail(ErrorCode::ShapeMismatch,
         fmt::format("compare {} with {}", shape_str(a.shape()),
                     shape_str(b.shape())));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return worst;
}

}  // namespace onnkit
