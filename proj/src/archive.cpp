#include "onnkit/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "onnkit/error.hpp"

namespace onnkit {

namespace {

template <typename T>
void write_le(std::string& out, T value) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff));
  }
}

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  template <typename T>
  T read() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  std::string_view take(std::size_t n) {
    need(n);
    std::string_view s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) {
      fail(ErrorCode::CorruptState,
           fmt::format("archive truncated at byte {} (needed {} more)", pos_, n));
    }
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace

void Archive::insert(Entry entry) {
  if (entry.name.size() > UINT16_MAX) {
    fail(ErrorCode::ValidationError, "archive entry name too long");
  }
  for (Entry& e : entries_) {
    if (e.name == entry.name) {
      e = std::move(entry);
      return;
    }
  }
  entries_.push_back(std::move(entry));
}

void Archive::put(std::string name, const Tensor& tensor) {
  insert({std::move(name), tensor});
}

void Archive::put_u64(std::string name, std::vector<std::uint64_t> values) {
  Shape shape{values.size()};
  insert({std::move(name), U64Array{std::move(shape), std::move(values)}});
}

void Archive::put_bytes(std::string name, std::string bytes) {
  insert({std::move(name), std::move(bytes)});
}

bool Archive::has(std::string_view name) const {
  for (const Entry& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

const Archive::Entry& Archive::find(std::string_view name) const {
  for (const Entry& e : entries_) {
    if (e.name == name) return e;
  }
  fail(ErrorCode::CorruptState, fmt::format("archive has no entry '{}'", name));
}

Tensor Archive::tensor(std::string_view name) const {
  const Entry& e = find(name);
  if (const auto* t = std::get_if<Tensor>(&e.value)) return *t;
  fail(ErrorCode::CorruptState, fmt::format("entry '{}' is not f64", name));
}

std::vector<std::uint64_t> Archive::u64(std::string_view name) const {
  const Entry& e = find(name);
  if (const auto* a = std::get_if<U64Array>(&e.value)) return a->values;
  fail(ErrorCode::CorruptState, fmt::format("entry '{}' is not u64", name));
}

std::uint64_t Archive::u64_scalar(std::string_view name) const {
  const auto values = u64(name);
  if (values.size() != 1) {
    fail(ErrorCode::CorruptState, fmt::format("entry '{}' is not a scalar", name));
  }
  return values[0];
}

std::string Archive::bytes(std::string_view name) const {
  const Entry& e = find(name);
  if (const auto* s = std::get_if<std::string>(&e.value)) return *s;
  fail(ErrorCode::CorruptState, fmt::format("entry '{}' is not raw bytes", name));
}

std::vector<std::string> Archive::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const Entry& e : entries_) out.push_back(e.name);
  return out;
}

std::string Archive::serialize() const {
  std::string out(kMagic);
  write_le<std::uint32_t>(out, kVersion);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries_.size()));
  for (const Entry& e : entries_) {
    write_le<std::uint16_t>(out, static_cast<std::uint16_t>(e.name.size()));
    out += e.name;
    if (const auto* t = std::get_if<Tensor>(&e.value)) {
      write_le<std::uint8_t>(out, static_cast<std::uint8_t>(DType::F64));
      write_le<std::uint64_t>(out, t->rank());
      for (std::size_t d : t->shape()) write_le<std::uint64_t>(out, d);
      for (double v : t->data()) write_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    } else if (const auto* a = std::get_if<U64Array>(&e.value)) {
      write_le<std::uint8_t>(out, static_cast<std::uint8_t>(DType::U64));
      write_le<std::uint64_t>(out, a->shape.size());
      for (std::size_t d : a->shape) write_le<std::uint64_t>(out, d);
      for (std::uint64_t v : a->values) write_le<std::uint64_t>(out, v);
    } else {
      const auto& s = std::get<std::string>(e.value);
      write_le<std::uint8_t>(out, static_cast<std::uint8_t>(DType::Raw));
      write_le<std::uint64_t>(out, 1);
      write_le<std::uint64_t>(out, s.size());
      out += s;
    }
  }
  return out;
}

Archive Archive::deserialize(std::string_view data) {
  Reader in(data);
  if (data.size() < kMagic.size() || in.take(kMagic.size()) != kMagic) {
    fail(ErrorCode::CorruptState, "archive has a bad magic header");
  }
  const auto version = in.read<std::uint32_t>();
  if (version != kVersion) {
    fail(ErrorCode::VersionMismatch,
         fmt::format("archive version {} is not supported (expected {})", version,
                     kVersion));
  }
  const auto count = in.read<std::uint32_t>();
  Archive archive;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = in.read<std::uint16_t>();
    std::string name(in.take(name_len));
    const auto tag = in.read<std::uint8_t>();
    const auto rank = in.read<std::uint64_t>();
    if (rank > 64) {
      fail(ErrorCode::CorruptState, fmt::format("entry '{}' has rank {}", name, rank));
    }
    Shape shape(rank);
    std::uint64_t numel = 1;
    for (auto& d : shape) {
      d = in.read<std::uint64_t>();
      if (d != 0 && numel > data.size() / d) {
        fail(ErrorCode::CorruptState, fmt::format("entry '{}' is oversized", name));
      }
      numel *= d;
    }
    if (archive.has(name)) {
      fail(ErrorCode::CorruptState, fmt::format("duplicate entry '{}'", name));
    }
    switch (static_cast<DType>(tag)) {
      case DType::F64: {
        if (numel > data.size() / 8) {
          fail(ErrorCode::CorruptState, fmt::format("entry '{}' is truncated", name));
        }
        std::vector<double> values(numel);
        for (auto& v : values) v = std::bit_cast<double>(in.read<std::uint64_t>());
        archive.entries_.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
        break;
      }
      case DType::U64: {
        if (numel > data.size() / 8) {
          fail(ErrorCode::CorruptState, fmt::format("entry '{}' is truncated", name));
        }
        std::vector<std::uint64_t> values(numel);
        for (auto& v : values) v = in.read<std::uint64_t>();
        archive.entries_.push_back({std::move(name), U64Array{std::move(shape), std::move(values)}});
        break;
      }
      case DType::Raw: {
        if (rank != 1) {
          fail(ErrorCode::CorruptState, fmt::format("raw entry '{}' has rank {}", name, rank));
        }
        archive.entries_.push_back({std::move(name), std::string(in.take(numel))});
        break;
      }
      default:
        fail(ErrorCode::CorruptState,
             fmt::format("entry '{}' has unknown dtype tag {}", name, tag));
    }
  }
  if (!in.done()) fail(ErrorCode::CorruptState, "trailing bytes after last entry");
  return archive;
}

void Archive::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  const std::string bytes = serialize();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::IoError, fmt::format("cannot write {}", path.string()));
}

Archive Archive::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, fmt::format("cannot open {}", path.string()));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return deserialize(buffer.str());
}

}  // namespace onnkit
