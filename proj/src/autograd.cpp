#include "onnkit/autograd.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "onnkit/error.hpp"

namespace onnkit::ag {

Tensor GradientMap::of(const Variable& v) const {
  if (v.node() && *v.node() < grads_.size() && grads_[*v.node()]) {
    return *grads_[*v.node()];
  }
  return Tensor::zeros(v.shape());
}

bool GradientMap::reached(const Variable& v) const {
  return v.node() && *v.node() < grads_.size() && grads_[*v.node()].has_value();
}

Variable Tape::leaf(Tensor value) {
  const NodeId id = nodes_.size();
  nodes_.push_back(Node{"leaf", value.shape(), {}, nullptr});
  return Variable(std::make_shared<const Tensor>(std::move(value)), id, this);
}

Variable Tape::constant(Tensor value) {
  return Variable(std::make_shared<const Tensor>(std::move(value)),
                  std::nullopt, this);
}

Variable Tape::record(std::string_view op, std::span<const Variable> inputs,
                      Tensor output, BackwardFn backward) {
  std::vector<std::optional<NodeId>> parents;
  parents.reserve(inputs.size());
  bool any_tracked = false;
  for (const Variable& in : inputs) {
    if (in.tracked()) {
      if (in.tape() != this) {
        fail(ErrorCode::DetachedRoot,
             fmt::format("{}: input belongs to a different tape", op));
      }
      any_tracked = true;
    }
    parents.push_back(in.node());
  }
  if (!any_tracked) return constant(std::move(output));

  const NodeId id = nodes_.size();
  nodes_.push_back(
      Node{std::string(op), output.shape(), std::move(parents), std::move(backward)});
  return Variable(std::make_shared<const Tensor>(std::move(output)), id, this);
}

GradientMap Tape::backward(const Variable& root) const {
  if (root.value().numel() != 1) {
    fail(ErrorCode::NonScalarRoot,
         fmt::format("backward root has shape {}", shape_str(root.shape())));
  }
  return backward(root, Tensor(root.shape(), 1.0));
}

GradientMap Tape::backward(const Variable& root, const Tensor& seed) const {
  if (!root.tracked() || root.tape() != this || *root.node() >= nodes_.size()) {
    fail(ErrorCode::DetachedRoot, "backward root is not recorded on this tape");
  }
  if (seed.shape() != root.shape()) {
    fail(ErrorCode::ShapeMismatch,
         fmt::format("seed {} does not match root {}", shape_str(seed.shape()),
                     shape_str(root.shape())));
  }
  std::vector<std::optional<Tensor>> grads(nodes_.size());
  grads[*root.node()] = seed;

  for (NodeId id = *root.node() + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (!grads[id] || !node.backward) continue;
    std::vector<Tensor> parent_grads = node.backward(*grads[id]);
    if (parent_grads.size() != node.parents.size()) {
      fail(ErrorCode::ShapeContractViolation,
           fmt::format("{}: backward returned {} gradients for {} inputs",
                       node.op, parent_grads.size(), node.parents.size()));
    }
    for (std::size_t i = 0; i < node.parents.size(); ++i) {
      if (!node.parents[i]) continue;
      const NodeId parent = *node.parents[i];
      Tensor& g = parent_grads[i];
      if (g.shape() != nodes_[parent].shape) {
        fail(ErrorCode::ShapeContractViolation,
             fmt::format("{}: gradient {} for input {} of shape {}", node.op,
                         shape_str(g.shape()), i,
                         shape_str(nodes_[parent].shape)));
      }
      if (grads[parent]) {
        grads[parent] = onnkit::add(*grads[parent], g);
      } else {
        grads[parent] = std::move(g);
      }
    }
    // Interior gradients are no longer needed once propagated.
    if (id != *root.node() && !nodes_[id].parents.empty()) grads[id].reset();
  }
  return GradientMap(std::move(grads));
}

void Tape::note_selection(std::span<const std::size_t> choices) {
  for (std::size_t c : choices) {
    signature_ ^= static_cast<std::uint64_t>(c) + 0x9e3779b97f4a7c15ull;
    signature_ *= 1099511628211ull;
  }
}

namespace {

Tape* tape_of(std::initializer_list<const Variable*> inputs) {
  for (const Variable* v : inputs) {
    if (v->tape()) return v->tape();
  }
  return nullptr;
}

Variable emit(std::string_view op, std::initializer_list<const Variable*> ins,
              std::span<const Variable> inputs, Tensor output,
              BackwardFn backward) {
  Tape* tape = tape_of(ins);
  if (!tape) return Variable::detached(std::move(output));
  return tape->record(op, inputs, std::move(output), std::move(backward));
}

Variable unary(std::string_view op, const Variable& a, Tensor output,
               BackwardFn backward) {
  const Variable inputs[] = {a};
  return emit(op, {&a}, inputs, std::move(output), std::move(backward));
}

Variable binary(std::string_view op, const Variable& a, const Variable& b,
                Tensor output, BackwardFn backward) {
  const Variable inputs[] = {a, b};
  return emit(op, {&a, &b}, inputs, std::move(output), std::move(backward));
}

}  // namespace

Variable apply(const CustomBackward& op, std::span<const Variable> inputs) {
  std::vector<Tensor> values;
  values.reserve(inputs.size());
  Tape* tape = nullptr;
  for (const Variable& in : inputs) {
    values.push_back(in.value());
    if (!tape) tape = in.tape();
  }
  Tensor output = op.forward(values);
  auto out_copy = std::make_shared<const Tensor>(output);
  auto in_copy = std::make_shared<const std::vector<Tensor>>(std::move(values));
  BackwardFn backward = [op, in_copy, out_copy](const Tensor& up) {
    return op.backward(up, *in_copy, *out_copy);
  };
  if (!tape) return Variable::detached(std::move(output));
  return tape->record(op.name, inputs, std::move(output), std::move(backward));
}

Variable add(const Variable& a, const Variable& b) {
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  return binary("add", a, b, onnkit::add(a.value(), b.value()),
                [sa, sb](const Tensor& up) {
                  return std::vector<Tensor>{sum_to(up, sa), sum_to(up, sb)};
                });
}

Variable sub(const Variable& a, const Variable& b) {
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  return binary("sub", a, b, onnkit::sub(a.value(), b.value()),
                [sa, sb](const Tensor& up) {
                  return std::vector<Tensor>{sum_to(up, sa),
                                             onnkit::scale(sum_to(up, sb), -1.0)};
                });
}

Variable mul(const Variable& a, const Variable& b) {
  Tensor out = onnkit::mul(a.value(), b.value());
  return binary("mul", a, b, std::move(out), [a, b](const Tensor& up) {
    std::vector<Tensor> g(2);
    if (a.tracked()) g[0] = sum_to(onnkit::mul(up, b.value()), a.shape());
    if (b.tracked()) g[1] = sum_to(onnkit::mul(up, a.value()), b.shape());
    return g;
  });
}

Variable div(const Variable& a, const Variable& b) {
  Tensor out = onnkit::div(a.value(), b.value());
  return binary("div", a, b, std::move(out), [a, b](const Tensor& up) {
    std::vector<Tensor> g(2);
    if (a.tracked()) g[0] = sum_to(onnkit::div(up, b.value()), a.shape());
    if (b.tracked()) {
      const Tensor q = onnkit::div(a.value(), onnkit::mul(b.value(), b.value()));
      g[1] = onnkit::scale(sum_to(onnkit::mul(up, q), b.shape()), -1.0);
    }
    return g;
  });
}

Variable pointwise(std::string_view name, const Variable& a,
                   const std::function<double(double)>& fn,
                   const std::function<double(double, double)>& derivative) {
  Tensor out = map(a.value(), fn);
  auto out_copy = std::make_shared<const Tensor>(out);
  return unary(name, a, std::move(out),
               [a, out_copy, derivative](const Tensor& up) {
                 Tensor g(up.shape());
                 const Tensor& x = a.value();
                 for (std::size_t i = 0; i < g.numel(); ++i) {
                   g[i] = up[i] * derivative(x[i], (*out_copy)[i]);
                 }
                 return std::vector<Tensor>{std::move(g)};
               });
}

Variable neg(const Variable& a) { return scale(a, -1.0); }

Variable scale(const Variable& a, double factor) {
  return unary("scale", a, onnkit::scale(a.value(), factor),
               [factor](const Tensor& up) {
                 return std::vector<Tensor>{onnkit::scale(up, factor)};
               });
}

Variable add_scalar(const Variable& a, double offset) {
  return unary("add_scalar", a,
               map(a.value(), [offset](double x) { return x + offset; }),
               [](const Tensor& up) { return std::vector<Tensor>{up}; });
}

Variable pow(const Variable& a, int exponent) {
  return pointwise(
      "pow", a, [exponent](double x) { return std::pow(x, exponent); },
      [exponent](double x, double) {
        return exponent * std::pow(x, exponent - 1);
      });
}

Variable square(const Variable& a) {
  return pointwise(
      "square", a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Variable sin(const Variable& a) {
  return pointwise(
      "sin", a, [](double x) { return std::sin(x); },
      [](double x, double) { return std::cos(x); });
}

Variable cos(const Variable& a) {
  return pointwise(
      "cos", a, [](double x) { return std::cos(x); },
      [](double x, double) { return -std::sin(x); });
}

Variable exp(const Variable& a) {
  return pointwise(
      "exp", a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Variable sinh(const Variable& a) {
  return pointwise(
      "sinh", a, [](double x) { return std::sinh(x); },
      [](double x, double) { return std::cosh(x); });
}

Variable tanh(const Variable& a) {
  return pointwise(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Variable clamp(const Variable& a, double lo, double hi) {
  const Tensor& x = a.value();
  std::vector<std::size_t> region(x.numel());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    region[i] = x[i] < lo ? 0 : (x[i] > hi ? 2 : 1);
  }
  if (a.tape()) a.tape()->note_selection(region);
  return pointwise(
      "clamp", a, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

Variable reduce(const Variable& a, ReduceKind kind, std::size_t axis) {
  ReduceResult r = onnkit::reduce(kind, a.value(), axis);
  const std::size_t extent = a.shape()[axis];
  if (kind == ReduceKind::Sum) {
    return unary("sum", a, std::move(r.values),
                 [axis, extent](const Tensor& up) {
                   return std::vector<Tensor>{expand_along(up, axis, extent)};
                 });
  }
  if (a.tape()) a.tape()->note_selection(*r.arg);
  auto arg = std::make_shared<const std::vector<std::size_t>>(std::move(*r.arg));
  return unary(kind == ReduceKind::Max ? "max" : "median", a,
               std::move(r.values), [arg, axis, extent](const Tensor& up) {
                 return std::vector<Tensor>{scatter_along(up, *arg, axis, extent)};
               });
}

Variable sum(const Variable& a, std::size_t axis) {
  return reduce(a, ReduceKind::Sum, axis);
}
Variable max(const Variable& a, std::size_t axis) {
  return reduce(a, ReduceKind::Max, axis);
}
Variable median(const Variable& a, std::size_t axis) {
  return reduce(a, ReduceKind::Median, axis);
}

Variable sum_all(const Variable& a) {
  const Shape s = a.shape();
  return unary("sum_all", a, Tensor::scalar(onnkit::sum_all(a.value())),
               [s](const Tensor& up) {
                 return std::vector<Tensor>{Tensor(s, up.item())};
               });
}

Variable mean_all(const Variable& a) {
  const double n = static_cast<double>(a.value().numel());
  return scale(sum_all(a), 1.0 / n);
}

Variable reshape(const Variable& a, Shape new_shape) {
  const Shape original = a.shape();
  return unary("reshape", a, onnkit::reshape(a.value(), std::move(new_shape)),
               [original](const Tensor& up) {
                 return std::vector<Tensor>{onnkit::reshape(up, original)};
               });
}

Variable stack(std::span<const Variable> parts) {
  if (parts.empty()) fail(ErrorCode::ShapeMismatch, "stack of zero variables");
  std::vector<Tensor> values;
  values.reserve(parts.size());
  Tape* tape = nullptr;
  for (const Variable& p : parts) {
    values.push_back(p.value());
    if (!tape) tape = p.tape();
  }
  Tensor out = onnkit::stack(values);
  const std::size_t n = parts.size();
  BackwardFn backward = [n](const Tensor& up) {
    std::vector<Tensor> g;
    g.reserve(n);
    for (std::size_t i = 0; i < n; ++i) g.push_back(take_leading(up, i));
    return g;
  };
  if (!tape) return Variable::detached(std::move(out));
  return tape->record("stack", parts, std::move(out), std::move(backward));
}

}  // namespace onnkit::ag
