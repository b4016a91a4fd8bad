#include "daft/nn/checkpoint.hpp"

#include <json.hpp>

namespace daft::nn {

std::vector<std::uint8_t> encode_checkpoint(const Model& model) {
  const auto tensors = model.named_tensors();
  nlohmann::json meta;
  meta["architecture"] = model.arch().to_string();
  meta["tensors"] = nlohmann::json::array();
  for (const auto& t : tensors) meta["tensors"].push_back({{"name", t.name}, {"shape", t.value.shape()}});
  const std::string blob = meta.dump();

  ByteWriter w;
  w.raw(std::string_view(kCheckpointMagic, 8));
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(blob.size()));
  w.raw(blob);
  for (const auto& t : tensors) w.f32s(t.value.data());
  return w.bytes();
}

Model decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& context) {
  ByteReader r(bytes, context);
  if (bytes.size() < 8 || r.raw(8) != std::string_view(kCheckpointMagic, 8)) r.fail("not a checkpoint (bad magic)");
  const auto version = r.u32();
  if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));
  const auto meta_len = r.u32();
  const auto blob = r.raw(meta_len);

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(blob);
  } catch (const nlohmann::json::exception& e) {
    r.fail(std::string("metadata is not valid JSON: ") + e.what());
  }

  std::vector<NamedTensor> tensors;
  Architecture arch;
  try {
    arch = Architecture::parse(meta.at("architecture").get<std::string>());
    for (const auto& entry : meta.at("tensors")) {
      auto shape = entry.at("shape").get<Shape>();
      const auto n = shape_numel(shape);
      if (n > r.remaining() / 4) r.fail("truncated tensor payload for " + entry.at("name").get<std::string>());
      std::vector<float> values(n);
      r.f32s(values);
      tensors.push_back({entry.at("name").get<std::string>(), Tensor(std::move(shape), std::move(values), true)});
    }
  } catch (const nlohmann::json::exception& e) {
    r.fail(std::string("malformed metadata: ") + e.what());
  } catch (const std::invalid_argument& e) {
    r.fail(e.what());
  }
  if (r.remaining() != 0) r.fail(std::to_string(r.remaining()) + " trailing bytes after tensor payload");

  try {
    return Model::from_tensors(arch, std::move(tensors));
  } catch (const std::invalid_argument& e) {
    r.fail(e.what());
  }
}

void save_checkpoint(const Model& model, const std::string& path) { write_file_bytes(path, encode_checkpoint(model)); }

Model load_checkpoint(const std::string& path) { return decode_checkpoint(read_file_bytes(path), path); }

}  // namespace daft::nn
