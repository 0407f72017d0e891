#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "gam/errors.hpp"

namespace gam {

// Little-endian binary encoding helpers shared by the artifact and
// neighbor-index file formats.

inline void append_bytes(std::string& out, const void* data, std::size_t len) {
  out.append(static_cast<const char*>(data), len);
}

template <class T>
void append_scalar(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    append_bytes(out, bytes, sizeof(T));
  } else {
    append_bytes(out, &value, sizeof(T));
  }
}

inline void append_f64_array(std::string& out, const std::vector<double>& values) {
  append_scalar<std::uint64_t>(out, values.size());
  for (double v : values) append_scalar(out, v);
}

class ByteReader {
 public:
  ByteReader(const std::string& bytes, std::string context)
      : bytes_(bytes), context_(std::move(context)) {}

  template <class T>
  T read_scalar() {
    static_assert(std::is_trivially_copyable_v<T>);
    if (pos_ + sizeof(T) > bytes_.size()) {
      throw FormatError(context_ + ": truncated file (wanted " + std::to_string(sizeof(T)) +
                        " bytes at offset " + std::to_string(pos_) + ")");
    }
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
      unsigned char* b = reinterpret_cast<unsigned char*>(&value);
      for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    }
    pos_ += sizeof(T);
    return value;
  }

  std::string read_bytes(std::size_t len) {
    if (pos_ + len > bytes_.size()) {
      throw FormatError(context_ + ": truncated file (wanted " + std::to_string(len) +
                        " bytes at offset " + std::to_string(pos_) + ")");
    }
    std::string out = bytes_.substr(pos_, len);
    pos_ += len;
    return out;
  }

  std::vector<double> read_f64_array(std::size_t expected) {
    const auto n = read_scalar<std::uint64_t>();
    if (n != expected) {
      throw FormatError(context_ + ": array length " + std::to_string(n) + ", expected " +
                        std::to_string(expected));
    }
    std::vector<double> out(n);
    for (auto& v : out) v = read_scalar<double>();
    return out;
  }

  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t position() const { return pos_; }

 private:
  const std::string& bytes_;
  std::string context_;
  std::size_t pos_ = 0;
};

std::string read_file_bytes(const std::string& path);

// Writes to a temporary sibling then renames, so readers never observe a
// partial file.
void write_file_atomic(const std::string& path, const std::string& bytes);

}  // namespace gam
