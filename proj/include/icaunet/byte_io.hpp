#pragma once

// Little-endian byte buffers for the ICAV/ICAC formats. The reader tracks its
// position so that every FormatError names the offending byte offset.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "icaunet/errors.hpp"

namespace icaunet::io {

static_assert(std::endian::native == std::endian::little, "byte_io assumes a little-endian host");

class ByteWriter {
 public:
  template <typename T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void put_string(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    put_bytes(s.data(), s.size());
  }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint64_t offset() const { return pos_; }
  std::uint64_t remaining() const { return bytes_.size() - pos_; }

  // A short read reports the first missing byte, i.e. the buffer size.
  void need(std::uint64_t n, const char* what) const {
    if (remaining() < n)
      throw FormatError(std::string("truncated ") + what + ": need " + std::to_string(n) + " bytes at " +
                            std::to_string(pos_),
                        bytes_.size());
  }
  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  void get_bytes(void* out, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::string get_string(const char* what) {
    const auto len = get<std::uint32_t>(what);
    std::string s(len, '\0');
    get_bytes(s.data(), len, what);
    return s;
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::uint64_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace icaunet::io
