#include "onnkit/dataio.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "onnkit/error.hpp"
#include "onnkit/rng.hpp"

namespace onnkit {

PairedImageDataset PairedImageDataset::subset(std::span<const std::size_t> indices) const {
  PairedImageDataset out;
  out.items.reserve(indices.size());
  for (std::size_t i : indices) out.items.push_back(items.at(i));
  return out;
}

namespace {

class PgmHeaderReader {
 public:
  explicit PgmHeaderReader(std::string_view data) : data_(data) {}

  std::size_t number(const char* what) {
    skip_space_and_comments();
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos_ < data_.size() && std::isdigit(static_cast<unsigned char>(data_[pos_]))) {
      value = value * 10 + static_cast<std::size_t>(data_[pos_] - '0');
      if (value > (1u << 24)) fail(ErrorCode::UnsupportedFormat, fmt::format("PGM {} too large", what));
      ++pos_;
      ++digits;
    }
    if (digits == 0) fail(ErrorCode::UnsupportedFormat, fmt::format("PGM header lacks {}", what));
    return value;
  }

  /// Exactly one whitespace byte separates the header from the raster.
  std::size_t raster_start() {
    if (pos_ >= data_.size() || !std::isspace(static_cast<unsigned char>(data_[pos_]))) {
      fail(ErrorCode::UnsupportedFormat, "PGM header not terminated by whitespace");
    }
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < data_.size()) {
      const char c = data_[pos_];
      if (c == '#') {
        while (pos_ < data_.size() && data_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::string_view data_;
  std::size_t pos_ = 2;
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, fmt::format("cannot open {}", path.string()));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace

PgmImage parse_pgm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes.substr(0, 2) != "P5") {
    fail(ErrorCode::UnsupportedFormat, "not a binary PGM (P5) image");
  }
  PgmHeaderReader header(bytes);
  PgmImage image;
  image.width = header.number("width");
  image.height = header.number("height");
  const std::size_t maxval = header.number("maxval");
  if (maxval != 255) {
    fail(ErrorCode::UnsupportedFormat, fmt::format("PGM maxval {} is not 255", maxval));
  }
  if (image.width == 0 || image.height == 0) {
    fail(ErrorCode::UnsupportedFormat, "PGM image is empty");
  }
  const std::size_t start = header.raster_start();
  const std::size_t count = image.width * image.height;
  if (bytes.size() - std::min(start, bytes.size()) < count) {
    fail(ErrorCode::UnsupportedFormat, "PGM raster truncated");
  }
  image.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                      bytes.begin() + static_cast<std::ptrdiff_t>(start + count));
  return image;
}

PgmImage read_pgm(const std::filesystem::path& path) {
  try {
    return parse_pgm(read_file(path));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::UnsupportedFormat) throw;
    fail(ErrorCode::UnsupportedFormat, fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_pgm(const std::filesystem::path& path, const PgmImage& image) {
  if (image.pixels.size() != image.width * image.height) {
    fail(ErrorCode::SizeMismatch,
         fmt::format("{} pixels for a {}x{} image", image.pixels.size(), image.width,
                     image.height));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) fail(ErrorCode::IoError, fmt::format("cannot write {}", path.string()));
}

Tensor pgm_to_tensor(const PgmImage& image) {
  Tensor t({1, image.height, image.width});
  auto d = t.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    d[i] = static_cast<double>(image.pixels[i]) / 127.5 - 1.0;
  }
  return t;
}

PgmImage tensor_to_pgm(const Tensor& image) {
  if (image.rank() != 3 || image.extent(0) != 1) {
    fail(ErrorCode::ShapeMismatch,
         fmt::format("expected a [1, H, W] image, got {}", shape_str(image.shape())));
  }
  PgmImage out{image.extent(2), image.extent(1), {}};
  out.pixels.reserve(image.numel());
  for (double v : image.values()) {
    const double level = std::round((std::clamp(v, -1.0, 1.0) + 1.0) * 127.5);
    out.pixels.push_back(static_cast<std::uint8_t>(level));
  }
  return out;
}

PairedImageDataset load_image_folder(const std::filesystem::path& dir,
                                     std::size_t height, std::size_t width) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) {
    fail(ErrorCode::IoError, fmt::format("{} is not a directory", dir.string()));
  }
  struct Files {
    std::filesystem::path in, out;
  };
  std::map<std::string, Files> pairs;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    constexpr std::string_view in_suffix = "_in.pgm";
    constexpr std::string_view out_suffix = "_out.pgm";
    if (name.ends_with(in_suffix)) {
      pairs[name.substr(0, name.size() - in_suffix.size())].in = entry.path();
    } else if (name.ends_with(out_suffix)) {
      pairs[name.substr(0, name.size() - out_suffix.size())].out = entry.path();
    }
  }
  PairedImageDataset dataset;
  for (const auto& [id, files] : pairs) {
    if (files.in.empty() || files.out.empty()) {
      fail(ErrorCode::MissingPair,
           fmt::format("image '{}' has no {} file", id, files.in.empty() ? "_in" : "_out"));
    }
    ImagePair pair{id, {}, {}};
    for (const auto* path : {&files.in, &files.out}) {
      const PgmImage image = read_pgm(*path);
      if (image.height != height || image.width != width) {
        fail(ErrorCode::SizeMismatch,
             fmt::format("{} is {}x{}, expected {}x{}", path->filename().string(),
                         image.height, image.width, height, width));
      }
      (path == &files.in ? pair.input : pair.target) = pgm_to_tensor(image);
    }
    dataset.items.push_back(std::move(pair));
  }
  return dataset;
}

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::Identity: return "identity";
    case TaskKind::BlurInverse: return "blur-inverse";
    case TaskKind::NonlinearMap: return "nonlinear-map";
  }
  return "identity";
}

TaskKind parse_task_kind(std::string_view text) {
  for (TaskKind k : {TaskKind::Identity, TaskKind::BlurInverse, TaskKind::NonlinearMap}) {
    if (to_string(k) == text) return k;
  }
  fail(ErrorCode::ValidationError,
       fmt::format("unknown task '{}' (identity, blur-inverse, nonlinear-map)", text));
}

Tensor box_blur(const Tensor& image) {
  if (image.rank() != 3) {
    fail(ErrorCode::ShapeMismatch,
         fmt::format("box_blur expects [C, M, N], got {}", shape_str(image.shape())));
  }
  const std::size_t channels = image.extent(0);
  const auto rows = static_cast<std::ptrdiff_t>(image.extent(1));
  const auto cols = static_cast<std::ptrdiff_t>(image.extent(2));
  Tensor out(image.shape());
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
      for (std::ptrdiff_t j = 0; j < cols; ++j) {
        double acc = 0.0;
        for (std::ptrdiff_t di = -1; di <= 1; ++di) {
          for (std::ptrdiff_t dj = -1; dj <= 1; ++dj) {
            const auto r = static_cast<std::size_t>(std::clamp(i + di, std::ptrdiff_t{0}, rows - 1));
            const auto q = static_cast<std::size_t>(std::clamp(j + dj, std::ptrdiff_t{0}, cols - 1));
            acc += image.at({c, r, q});
          }
        }
        out.at({c, static_cast<std::size_t>(i), static_cast<std::size_t>(j)}) = acc / 9.0;
      }
    }
  }
  return out;
}

Tensor smooth_field(std::size_t channels, std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  Tensor out({channels, size, size});
  const double n = static_cast<double>(size);
  auto d = out.data();
  for (std::size_t c = 0; c < channels; ++c) {
    double fy[4], fx[4], phase[4], amp[4];
    for (int k = 0; k < 4; ++k) {
      fy[k] = rng.uniform(-1.0, 1.0);
      fx[k] = rng.uniform(-1.0, 1.0);
      phase[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
      amp[k] = rng.uniform(0.5, 1.0);
    }
    const std::size_t base = c * size * size;
    for (std::size_t i = 0; i < size; ++i) {
      for (std::size_t j = 0; j < size; ++j) {
        double v = 0.0;
        for (int k = 0; k < 4; ++k) {
          v += amp[k] * std::sin(2.0 * std::numbers::pi *
                                     (fy[k] * static_cast<double>(i) + fx[k] * static_cast<double>(j)) / n +
                                 phase[k]);
        }
        d[base + i * size + j] = v;
      }
    }
    const auto first = d.begin() + static_cast<std::ptrdiff_t>(base);
    const auto last = first + static_cast<std::ptrdiff_t>(size * size);
    const auto [lo, hi] = std::minmax_element(first, last);
    const double low = *lo;
    const double span = *hi - *lo;
    for (auto it = first; it != last; ++it) {
      *it = span > 0.0 ? 2.0 * (*it - low) / span - 1.0 : 0.0;
    }
  }
  return out;
}

PairedImageDataset make_synthetic_task(TaskKind kind, std::size_t count,
                                       std::size_t size, std::uint64_t seed,
                                       std::size_t channels) {
  if (size < 8) fail(ErrorCode::ValidationError, fmt::format("image size {} < 8", size));
  if (count < 4) fail(ErrorCode::ValidationError, fmt::format("image count {} < 4", count));
  if (channels == 0) fail(ErrorCode::ValidationError, "channels must be positive");
  PairedImageDataset dataset;
  dataset.items.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Tensor field = smooth_field(channels, size, mix_seed(seed, i));
    ImagePair pair{fmt::format("{:04d}", i), {}, {}};
    switch (kind) {
      case TaskKind::Identity:
        pair.input = field;
        pair.target = std::move(field);
        break;
      case TaskKind::BlurInverse:
        pair.input = box_blur(field);
        pair.target = std::move(field);
        break;
      case TaskKind::NonlinearMap:
        pair.target = map(field, [](double x) { return std::tanh(2.0 * x); });
        pair.input = std::move(field);
        break;
    }
    dataset.items.push_back(std::move(pair));
  }
  return dataset;
}

std::vector<DataSplit> partition(const PairedImageDataset& dataset,
                                 std::size_t folds, double val_fraction,
                                 std::uint64_t seed) {
  if (folds == 0) fail(ErrorCode::ValidationError, "folds must be at least 1");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    fail(ErrorCode::ValidationError,
         fmt::format("val_fraction {} is outside [0, 1)", val_fraction));
  }
  const std::size_t n = dataset.size();
  if (n < folds) {
    fail(ErrorCode::TooFewSamples,
         fmt::format("{} samples cannot fill {} folds", n, folds));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);

  std::vector<DataSplit> splits;
  for (std::size_t f = 0; f < folds; ++f) {
    DataSplit split;
    std::vector<std::size_t> rest;
    if (folds > 1) {
      const std::size_t lo = f * n / folds;
      const std::size_t hi = (f + 1) * n / folds;
      split.test_ids.assign(order.begin() + static_cast<std::ptrdiff_t>(lo),
                            order.begin() + static_cast<std::ptrdiff_t>(hi));
      rest.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(lo));
      rest.insert(rest.end(), order.begin() + static_cast<std::ptrdiff_t>(hi), order.end());
    } else {
      rest = order;
    }
    const auto val_count = static_cast<std::size_t>(
        std::llround(val_fraction * static_cast<double>(rest.size())));
    split.val_ids.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(val_count));
    split.train_ids.assign(rest.begin() + static_cast<std::ptrdiff_t>(val_count), rest.end());
    if (split.train_ids.empty()) {
      fail(ErrorCode::TooFewSamples, fmt::format("fold {} has no training samples", f + 1));
    }
    if (val_fraction > 0.0 && split.val_ids.empty()) {
      fail(ErrorCode::TooFewSamples, fmt::format("fold {} has no validation samples", f + 1));
    }
    for (auto* ids : {&split.train_ids, &split.val_ids, &split.test_ids}) {
      std::sort(ids->begin(), ids->end());
    }
    split.train = dataset.subset(split.train_ids);
    split.val = dataset.subset(split.val_ids);
    split.test = dataset.subset(split.test_ids);
    splits.push_back(std::move(split));
  }
  return splits;
}

namespace {

Tensor stack_field(const PairedImageDataset& dataset, Tensor ImagePair::*field) {
  if (dataset.empty()) fail(ErrorCode::EmptyAxis, "cannot stack an empty dataset");
  std::vector<Tensor> parts;
  parts.reserve(dataset.size());
  for (const ImagePair& p : dataset.items) parts.push_back(p.*field);
  return stack(parts);
}

}  // namespace

Tensor stack_inputs(const PairedImageDataset& dataset) {
  return stack_field(dataset, &ImagePair::input);
}

Tensor stack_targets(const PairedImageDataset& dataset) {
  return stack_field(dataset, &ImagePair::target);
}

}  // namespace onnkit
