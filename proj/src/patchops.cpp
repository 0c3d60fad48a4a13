#include "onnkit/patchops.hpp"

#include <fmt/format.h>

#include "onnkit/error.hpp"

namespace onnkit {

UnfoldPlan::UnfoldPlan(std::size_t height, std::size_t width,
                       std::size_t kernel_h, std::size_t kernel_w)
    : height_(height), width_(width), kernel_h_(kernel_h), kernel_w_(kernel_w) {
  if (kernel_h % 2 == 0 || kernel_w % 2 == 0) {
    fail(ErrorCode::ShapeMismatch,
         fmt::format("kernel {}x{} must have odd extents", kernel_h, kernel_w));
  }
  index_map_.assign(positions() * patch_length(), -1);
  const auto ph = static_cast<std::ptrdiff_t>(pad_h());
  const auto pw = static_cast<std::ptrdiff_t>(pad_w());
  const auto h = static_cast<std::ptrdiff_t>(height);
  const auto w = static_cast<std::ptrdiff_t>(width);
  std::size_t slot = 0;
  for (std::ptrdiff_t i = 0; i < h; ++i) {
    for (std::ptrdiff_t j = 0; j < w; ++j) {
      for (std::ptrdiff_t u = 0; u < static_cast<std::ptrdiff_t>(kernel_h); ++u) {
        for (std::ptrdiff_t v = 0; v < static_cast<std::ptrdiff_t>(kernel_w); ++v) {
          const std::ptrdiff_t r = i + u - ph;
          const std::ptrdiff_t c = j + v - pw;
          if (r >= 0 && r < h && c >= 0 && c < w) index_map_[slot] = r * w + c;
          ++slot;
        }
      }
    }
  }
}

namespace {

void check_image(const Tensor& image, const UnfoldPlan& plan) {
  if (image.rank() != 3 || image.extent(1) != plan.height() ||
      image.extent(2) != plan.width()) {
    fail(ErrorCode::ShapeMismatch,
         fmt::format("image {} does not match unfold plan {}x{}",
                     shape_str(image.shape()), plan.height(), plan.width()));
  }
}

void check_patches(const Tensor& patches, const UnfoldPlan& plan) {
  if (patches.rank() != 3 || patches.extent(1) != plan.positions() ||
      patches.extent(2) != plan.patch_length()) {
    fail(ErrorCode::ShapeMismatch,
         fmt::format("patches {} do not match unfold plan [C,{},{}]",
                     shape_str(patches.shape()), plan.positions(),
                     plan.patch_length()));
  }
}

}  // namespace

Tensor unfold(const Tensor& image, const UnfoldPlan& plan) {
  check_image(image, plan);
  const std::size_t channels = image.extent(0);
  const std::size_t pixels = plan.positions();
  const std::size_t len = plan.patch_length();
  Tensor out({channels, pixels, len});
  auto src = image.data();
  auto dst = out.data();
  for (std::size_t c = 0; c < channels; ++c) {
    const double* img = src.data() + c * pixels;
    double* rows = dst.data() + c * pixels * len;
    for (std::size_t p = 0; p < pixels; ++p) {
      for (std::size_t q = 0; q < len; ++q) {
        if (auto s = plan.source(p, q)) rows[p * len + q] = img[*s];
      }
    }
  }
  return out;
}

Tensor fold(const Tensor& patches, const UnfoldPlan& plan) {
  check_patches(patches, plan);
  const std::size_t channels = patches.extent(0);
  const std::size_t pixels = plan.positions();
  const std::size_t len = plan.patch_length();
  Tensor out({channels, plan.height(), plan.width()});
  auto src = patches.data();
  auto dst = out.data();
  for (std::size_t c = 0; c < channels; ++c) {
    const double* rows = src.data() + c * pixels * len;
    double* img = dst.data() + c * pixels;
    for (std::size_t p = 0; p < pixels; ++p) {
      for (std::size_t q = 0; q < len; ++q) {
        if (auto s = plan.source(p, q)) img[*s] += rows[p * len + q];
      }
    }
  }
  return out;
}

std::size_t resampled_extent(std::size_t extent, int factor) {
  if (factor == 0) fail(ErrorCode::ZeroFactor, "sampling factor must be non-zero");
  if (factor == 1) return extent;
  if (factor > 1) {
    const auto s = static_cast<std::size_t>(factor);
    if (extent % s != 0) {
      fail(ErrorCode::IndivisibleExtent,
           fmt::format("extent {} is not divisible by sampling factor {}",
                       extent, factor));
    }
    return extent / s;
  }
  return extent * static_cast<std::size_t>(-factor);
}

ResampleResult resample(const Tensor& image, int factor) {
  if (image.rank() != 3) {
    fail(ErrorCode::ShapeMismatch,
         fmt::format("resample expects [C,M,N], got {}", shape_str(image.shape())));
  }
  const std::size_t channels = image.extent(0);
  const std::size_t h = image.extent(1);
  const std::size_t w = image.extent(2);
  const std::size_t oh = resampled_extent(h, factor);
  const std::size_t ow = resampled_extent(w, factor);
  if (factor == 1) return {image, {}};

  ResampleResult r{Tensor({channels, oh, ow}), {}};
  auto src = image.data();
  auto dst = r.output.data();
  if (factor > 1) {
    const auto s = static_cast<std::size_t>(factor);
    r.argmax.resize(dst.size());
    std::size_t o = 0;
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j, ++o) {
          std::size_t best = (c * h + i * s) * w + j * s;
          for (std::size_t u = 0; u < s; ++u) {
            for (std::size_t v = 0; v < s; ++v) {
              const std::size_t idx = (c * h + i * s + u) * w + j * s + v;
              if (src[idx] > src[best]) best = idx;
            }
          }
          dst[o] = src[best];
          r.argmax[o] = best;
        }
      }
    }
    return r;
  }
  const auto s = static_cast<std::size_t>(-factor);
  std::size_t o = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j, ++o) {
        dst[o] = src[(c * h + i / s) * w + j / s];
      }
    }
  }
  return r;
}

namespace ag {

Variable unfold(const Variable& image, std::shared_ptr<const UnfoldPlan> plan) {
  Tensor out = onnkit::unfold(image.value(), *plan);
  const Variable inputs[] = {image};
  if (!image.tape()) return Variable::detached(std::move(out));
  return image.tape()->record("unfold", inputs, std::move(out),
                              [plan](const Tensor& up) {
                                return std::vector<Tensor>{onnkit::fold(up, *plan)};
                              });
}

Variable fold(const Variable& patches, std::shared_ptr<const UnfoldPlan> plan) {
  Tensor out = onnkit::fold(patches.value(), *plan);
  const Variable inputs[] = {patches};
  if (!patches.tape()) return Variable::detached(std::move(out));
  return patches.tape()->record("fold", inputs, std::move(out),
                                [plan](const Tensor& up) {
                                  return std::vector<Tensor>{onnkit::unfold(up, *plan)};
                                });
}

Variable resample(const Variable& image, int factor) {
  ResampleResult r = onnkit::resample(image.value(), factor);
  if (factor == 1) return image;
  const Variable inputs[] = {image};
  if (!image.tape()) return Variable::detached(std::move(r.output));
  const Shape in_shape = image.shape();
  BackwardFn backward;
  if (factor > 1) {
    image.tape()->note_selection(r.argmax);
    auto argmax = std::make_shared<const std::vector<std::size_t>>(std::move(r.argmax));
    backward = [in_shape, argmax](const Tensor& up) {
      Tensor g(in_shape);
      for (std::size_t o = 0; o < up.numel(); ++o) g[(*argmax)[o]] += up[o];
      return std::vector<Tensor>{std::move(g)};
    };
  } else {
    const auto s = static_cast<std::size_t>(-factor);
    backward = [in_shape, s](const Tensor& up) {
      Tensor g(in_shape);
      const std::size_t h = in_shape[1];
      const std::size_t w = in_shape[2];
      const std::size_t oh = h * s;
      const std::size_t ow = w * s;
      std::size_t o = 0;
      for (std::size_t c = 0; c < in_shape[0]; ++c) {
        for (std::size_t i = 0; i < oh; ++i) {
          for (std::size_t j = 0; j < ow; ++j, ++o) {
            g[(c * h + i / s) * w + j / s] += up[o];
          }
        }
      }
      return std::vector<Tensor>{std::move(g)};
    };
  }
  return image.tape()->record("resample", inputs, std::move(r.output),
                              std::move(backward));
}

}  // namespace ag

}  // namespace onnkit
