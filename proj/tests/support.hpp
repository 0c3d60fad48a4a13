#pragma once

#include <unistd.h>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "onnkit/error.hpp"
#include "onnkit/tensor.hpp"

namespace testing_support {

/// Runs `fn` and checks it throws onnkit::Error with `code`.
template <typename Fn>
::testing::AssertionResult throws_code(Fn&& fn, onnkit::ErrorCode code) {
  try {
    fn();
  } catch (const onnkit::Error& e) {
    if (e.code() == code) return ::testing::AssertionSuccess();
    return ::testing::AssertionFailure()
           << "threw " << onnkit::to_string(e.code()) << ": " << e.what();
  }
  return ::testing::AssertionFailure() << "did not throw";
}

inline onnkit::Tensor random_tensor(onnkit::Shape shape, std::mt19937_64& gen,
                                    double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  onnkit::Tensor t(std::move(shape));
  for (double& v : t.data()) v = dist(gen);
  return t;
}

/// Literal "same" 2D correlation of one channel, zero padded.
inline double correlate_at(const onnkit::Tensor& image, const onnkit::Tensor& kernel,
                           std::size_t c, std::size_t i, std::size_t j) {
  const auto rows = static_cast<long>(image.extent(1));
  const auto cols = static_cast<long>(image.extent(2));
  const auto kh = static_cast<long>(kernel.extent(1));
  const auto kw = static_cast<long>(kernel.extent(2));
  double acc = 0.0;
  for (long u = 0; u < kh; ++u) {
    for (long v = 0; v < kw; ++v) {
      const long r = static_cast<long>(i) + u - kh / 2;
      const long q = static_cast<long>(j) + v - kw / 2;
      if (r < 0 || q < 0 || r >= rows || q >= cols) continue;
      acc += kernel.at({c, static_cast<std::size_t>(u), static_cast<std::size_t>(v)}) *
             image.at({c, static_cast<std::size_t>(r), static_cast<std::size_t>(q)});
    }
  }
  return acc;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("onnkit_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing_support
