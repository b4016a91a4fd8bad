#include "daft/binary_io.hpp"

#include <fstream>
#include <iterator>

namespace daft {

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path + ": cannot open for reading");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(path + ": cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(path + ": write failed");
}

void ByteWriter::f32s(std::span<const float> values) {
  out_.reserve(out_.size() + values.size() * 4);
  for (float v : values) f32(v);
}

void ByteReader::fail(const std::string& what) const { throw FormatError(context_ + ": " + what); }

void ByteReader::need(std::size_t n) const {
  if (n > remaining()) {
    fail("truncated at byte " + std::to_string(pos_) + " (need " + std::to_string(n) + ", have " +
         std::to_string(remaining()) + ")");
  }
}

std::string ByteReader::raw(std::size_t n) {
  need(n);
  std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
  pos_ += n;
  return s;
}

void ByteReader::f32s(std::span<float> out) {
  need(out.size() * 4);
  for (auto& v : out) v = f32();
}

}  // namespace daft
