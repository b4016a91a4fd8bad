#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "daft/binary_io.hpp"
#include "daft/nn/model.hpp"

namespace daft::nn {

inline constexpr char kCheckpointMagic[] = "DAFTCKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout (little-endian): magic[8], u32 version, u32 metadata_len,
// metadata JSON {"architecture": str, "tensors": [{"name", "shape"}...]},
// then every tensor's f32 values in declared order.
std::vector<std::uint8_t> encode_checkpoint(const Model& model);
Model decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& context = "checkpoint");

void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace daft::nn
