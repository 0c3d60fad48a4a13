#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "onnkit/tensor.hpp"

namespace onnkit {

/// Named-entry binary container used for checkpoints and optimizer state.
///
/// Layout (little-endian): "FONNCKPT", u32 version, u32 entry count, then per
/// entry: u16 name length, UTF-8 name, u8 dtype (0 = f64, 1 = u64, 2 = raw
/// bytes), u64 rank, u64 extents..., payload.
class Archive {
 public:
  static constexpr std::string_view kMagic = "FONNCKPT";
  static constexpr std::uint32_t kVersion = 1;

  enum class DType : std::uint8_t { F64 = 0, U64 = 1, Raw = 2 };

  void put(std::string name, const Tensor& tensor);
  void put_u64(std::string name, std::vector<std::uint64_t> values);
  void put_bytes(std::string name, std::string bytes);

  bool has(std::string_view name) const;
  Tensor tensor(std::string_view name) const;
  std::vector<std::uint64_t> u64(std::string_view name) const;
  std::uint64_t u64_scalar(std::string_view name) const;
  std::string bytes(std::string_view name) const;

  std::vector<std::string> names() const;
  std::size_t size() const noexcept { return entries_.size(); }

  std::string serialize() const;
  static Archive deserialize(std::string_view data);

  void save(const std::filesystem::path& path) const;
  static Archive load(const std::filesystem::path& path);

 private:
  struct U64Array {
    Shape shape;
    std::vector<std::uint64_t> values;
  };
  struct Entry {
    std::string name;
    std::variant<Tensor, U64Array, std::string> value;
  };

  const Entry& find(std::string_view name) const;
  void insert(Entry entry);

  std::vector<Entry> entries_;
};

}  // namespace onnkit
