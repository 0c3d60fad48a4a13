#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "onnkit/tensor.hpp"

namespace onnkit {

/// Input and target, both [C, M, N] with values in [-1, 1].
struct ImagePair {
  std::string id;
  Tensor input;
  Tensor target;
};

struct PairedImageDataset {
  std::vector<ImagePair> items;

  std::size_t size() const noexcept { return items.size(); }
  bool empty() const noexcept { return items.empty(); }
  const ImagePair& operator[](std::size_t i) const { return items[i]; }
  PairedImageDataset subset(std::span<const std::size_t> indices) const;
};

/// 8-bit grayscale image.
struct PgmImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
};

/// Binary PGM (P5, maxval 255). Throws UnsupportedFormat or IoError.
PgmImage read_pgm(const std::filesystem::path& path);
PgmImage parse_pgm(std::string_view bytes);
void write_pgm(const std::filesystem::path& path, const PgmImage& image);

/// [0, 255] -> [-1, 1] as a [1, H, W] tensor, and back (clamped, rounded).
Tensor pgm_to_tensor(const PgmImage& image);
PgmImage tensor_to_pgm(const Tensor& image);

/// Pairs <id>_in.pgm with <id>_out.pgm, sorted by id. Every image must be
/// exactly height x width. Throws IoError, MissingPair, UnsupportedFormat,
/// SizeMismatch.
PairedImageDataset load_image_folder(const std::filesystem::path& dir,
                                     std::size_t height, std::size_t width);

enum class TaskKind { Identity, BlurInverse, NonlinearMap };

std::string_view to_string(TaskKind kind);
/// "identity", "blur-inverse" or "nonlinear-map".
TaskKind parse_task_kind(std::string_view text);

/// 3x3 mean filter with replicated borders, per channel of [C, M, N].
Tensor box_blur(const Tensor& image);

/// Sum of four random-frequency sinusoids per channel, scaled to [-1, 1].
Tensor smooth_field(std::size_t channels, std::size_t size, std::uint64_t seed);

/// Seeded synthetic pairs. Requires size >= 8 and count >= 4.
PairedImageDataset make_synthetic_task(TaskKind kind, std::size_t count,
                                       std::size_t size, std::uint64_t seed,
                                       std::size_t channels = 1);

struct DataSplit {
  PairedImageDataset train;
  PairedImageDataset val;
  PairedImageDataset test;
  std::vector<std::size_t> train_ids;
  std::vector<std::size_t> val_ids;
  std::vector<std::size_t> test_ids;
};

/// F fold-wise splits. Fold f tests on shard f of a seeded permutation; the
/// rest is divided into train and val by val_fraction. With F = 1 the test
/// set is empty. Throws TooFewSamples when any required part would be empty.
std::vector<DataSplit> partition(const PairedImageDataset& dataset,
                                 std::size_t folds, double val_fraction,
                                 std::uint64_t seed);

/// [B, C, M, N] stacks of inputs or targets.
Tensor stack_inputs(const PairedImageDataset& dataset);
Tensor stack_targets(const PairedImageDataset& dataset);

}  // namespace onnkit
