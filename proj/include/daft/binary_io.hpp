#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace daft {

/// Malformed or unreadable file contents (bad magic, truncation, version).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes);

/// Little-endian appender.
class ByteWriter {
 public:
  void raw(std::string_view bytes) { out_.insert(out_.end(), bytes.begin(), bytes.end()); }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put(v); }
  void u32(std::uint32_t v) { put(v); }
  void f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }
  void f32s(std::span<const float> values);

  const std::vector<std::uint8_t>& bytes() const { return out_; }

 private:
  template <typename U>
  void put(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

/// Bounds-checked cursor; every read past the end throws FormatError
/// prefixed with `context`.
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::string context)
      : bytes_(bytes), context_(std::move(context)) {}

  std::string raw(std::size_t n);
  std::uint8_t u8() { return take<std::uint8_t>(false); }
  std::uint16_t u16() { return take<std::uint16_t>(false); }
  std::uint32_t u32() { return take<std::uint32_t>(false); }
  std::uint32_t u32_be() { return take<std::uint32_t>(true); }
  float f32() { return std::bit_cast<float>(u32()); }
  void f32s(std::span<float> out);

  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }
  [[noreturn]] void fail(const std::string& what) const;

 private:
  void need(std::size_t n) const;
  template <typename U>
  U take(bool big_endian) {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      const auto byte = static_cast<U>(bytes_[pos_ + i]);
      const std::size_t shift = big_endian ? 8 * (sizeof(U) - 1 - i) : 8 * i;
      v = static_cast<U>(v | static_cast<U>(byte << shift));
    }
    pos_ += sizeof(U);
    return v;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::string context_;
};

}  // namespace daft
