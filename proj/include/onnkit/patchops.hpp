#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <vector>

#include "onnkit/autograd.hpp"
#include "onnkit/tensor.hpp"

namespace onnkit {

/// Sliding-window bookkeeping for an M x N image and an m x n kernel with
/// "same" zero padding and stride 1, so there is one patch per pixel.
class UnfoldPlan {
 public:
  UnfoldPlan(std::size_t height, std::size_t width, std::size_t kernel_h,
             std::size_t kernel_w);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t kernel_h() const noexcept { return kernel_h_; }
  std::size_t kernel_w() const noexcept { return kernel_w_; }
  std::size_t pad_h() const noexcept { return kernel_h_ / 2; }
  std::size_t pad_w() const noexcept { return kernel_w_ / 2; }

  /// Number of patches, M * N.
  std::size_t positions() const noexcept { return height_ * width_; }
  /// Elements per patch, m * n.
  std::size_t patch_length() const noexcept { return kernel_h_ * kernel_w_; }

  /// Flat pixel index feeding element `q` of patch `p`, or nothing for a
  /// zero-pad cell.
  std::optional<std::size_t> source(std::size_t p, std::size_t q) const {
    const std::ptrdiff_t s = index_map_[p * patch_length() + q];
    if (s < 0) return std::nullopt;
    return static_cast<std::size_t>(s);
  }

 private:
  std::size_t height_;
  std::size_t width_;
  std::size_t kernel_h_;
  std::size_t kernel_w_;
  std::vector<std::ptrdiff_t> index_map_;
};

/// [C, M, N] -> [C, M*N, m*n]. Row p lists the padded m x n block centred on
/// pixel p in row-major kernel order.
Tensor unfold(const Tensor& image, const UnfoldPlan& plan);

/// [C, M*N, m*n] -> [C, M, N] scatter-add; the adjoint of unfold.
Tensor fold(const Tensor& patches, const UnfoldPlan& plan);

struct ResampleResult {
  Tensor output;
  /// For downsampling: flat input index of each output element's maximum.
  std::vector<std::size_t> argmax;
};

/// factor 1: identity. factor s > 1: s x s max-pool, non-overlapping.
/// factor s < 0: nearest-neighbour upsample by |s|.
ResampleResult resample(const Tensor& image, int factor);

/// Output spatial extent after resampling an extent by `factor`.
std::size_t resampled_extent(std::size_t extent, int factor);

namespace ag {

Variable unfold(const Variable& image, std::shared_ptr<const UnfoldPlan> plan);
Variable fold(const Variable& patches, std::shared_ptr<const UnfoldPlan> plan);
Variable resample(const Variable& image, int factor);

}  // namespace ag

}  // namespace onnkit
