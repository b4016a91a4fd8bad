#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "daft/binary_io.hpp"
#include "daft/tensor.hpp"

namespace daft::data {

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

enum class IdxErrorKind {
  truncated_header,
  bad_magic,
  bad_rank,
  zero_dimension,
  dimension_overflow,
  truncated_payload,
  trailing_bytes,
};

std::string to_string(IdxErrorKind kind);

class IdxError : public FormatError {
 public:
  IdxError(IdxErrorKind kind, const std::string& what) : FormatError(what), kind_(kind) {}
  IdxErrorKind kind() const { return kind_; }

 private:
  IdxErrorKind kind_;
};

/// Parsed IDX payload: either an image stack (N,rows,cols) scaled to [0,1]
/// or a label vector.
struct IdxData {
  bool is_images = false;
  Tensor images;
  std::vector<std::uint8_t> labels;
};

/// Big-endian IDX (unsigned byte) parser for image and label files.
IdxData parse_idx(std::span<const std::uint8_t> bytes, const std::string& context = "idx");
IdxData parse_idx_file(const std::string& path);

}  // namespace daft::data
