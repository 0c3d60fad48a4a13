#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace onnkit {

/// Seeded 64-bit generator with platform-independent derived draws.
/// The engine is std::mt19937_64; uniform() and below() avoid the
/// implementation-defined standard distributions so results are identical
/// across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

  std::string save_state() const;
  void load_state(const std::string& state);

  friend bool operator==(const Rng& a, const Rng& b) {
    return a.engine_ == b.engine_;
  }

 private:
  std::mt19937_64 engine_;
};

/// Mixes two values into a well-spread seed.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace onnkit
