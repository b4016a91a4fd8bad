#include "daft/data/idx.hpp"

#include <cstdio>
#include <limits>

namespace daft::data {

std::string to_string(IdxErrorKind kind) {
  switch (kind) {
    case IdxErrorKind::truncated_header: return "truncated_header";
    case IdxErrorKind::bad_magic: return "bad_magic";
    case IdxErrorKind::bad_rank: return "bad_rank";
    case IdxErrorKind::zero_dimension: return "zero_dimension";
    case IdxErrorKind::dimension_overflow: return "dimension_overflow";
    case IdxErrorKind::truncated_payload: return "truncated_payload";
    case IdxErrorKind::trailing_bytes: return "trailing_bytes";
  }
  return "unknown";
}

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
         std::uint32_t{b[at + 3]};
}

}  // namespace

IdxData parse_idx(std::span<const std::uint8_t> bytes, const std::string& context) {
  auto fail = [&](IdxErrorKind kind, const std::string& what) -> IdxError {
    return IdxError(kind, context + ": " + what);
  };
  if (bytes.size() < 4) throw fail(IdxErrorKind::truncated_header, "file shorter than the 4-byte magic");
  const auto magic = read_be32(bytes, 0);
  std::size_t rank = 0;
  if (magic == kIdxImagesMagic) {
    rank = 3;
  } else if (magic == kIdxLabelsMagic) {
    rank = 1;
  } else if ((magic & 0xFFFFFF00u) == 0x00000800u) {
    throw fail(IdxErrorKind::bad_rank, "unsupported IDX rank " + std::to_string(magic & 0xFFu));
  } else {
    throw fail(IdxErrorKind::bad_magic, "bad magic 0x" + [&] {
      char buf[9];
      std::snprintf(buf, sizeof buf, "%08x", magic);
      return std::string(buf);
    }());
  }

  const std::size_t header = 4 + 4 * rank;
  if (bytes.size() < header) throw fail(IdxErrorKind::truncated_header, "header needs " + std::to_string(header) + " bytes");
  std::vector<std::size_t> dims(rank);
  std::uint64_t total = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    dims[i] = read_be32(bytes, 4 + 4 * i);
    if (dims[i] == 0) throw fail(IdxErrorKind::zero_dimension, "dimension " + std::to_string(i) + " is zero");
    total *= dims[i];
    if (total > std::numeric_limits<std::uint32_t>::max()) {
      throw fail(IdxErrorKind::dimension_overflow, "element count exceeds 2^32");
    }
  }
  const std::size_t payload = bytes.size() - header;
  if (payload < total) {
    throw fail(IdxErrorKind::truncated_payload,
               "payload has " + std::to_string(payload) + " bytes, header declares " + std::to_string(total));
  }
  if (payload > total) throw fail(IdxErrorKind::trailing_bytes, std::to_string(payload - total) + " trailing bytes");

  IdxData out;
  auto body = bytes.subspan(header);
  if (rank == 1) {
    out.labels.assign(body.begin(), body.end());
    return out;
  }
  std::vector<float> pixels(total);
  for (std::size_t i = 0; i < total; ++i) pixels[i] = static_cast<float>(body[i]) / 255.0f;
  out.is_images = true;
  out.images = Tensor({dims[0], dims[1], dims[2]}, std::move(pixels));
  return out;
}

IdxData parse_idx_file(const std::string& path) { return parse_idx(read_file_bytes(path), path); }

}  // namespace daft::data
