#include "daft/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "daft/random.hpp"

namespace daft::data {

Shape DomainDataset::example_shape() const {
  Shape s(images.shape().begin() + 1, images.shape().end());
  return s;
}

std::size_t DomainDataset::num_classes() const {
  std::uint16_t top = 0;
  for (auto y : labels) top = std::max(top, y);
  return labels.empty() ? 0 : static_cast<std::size_t>(top) + 1;
}

std::vector<std::uint16_t> DomainDataset::domain_ids() const {
  std::set<std::uint16_t> ids(domains.begin(), domains.end());
  return {ids.begin(), ids.end()};
}

void DomainDataset::validate() const {
  const auto n = labels.size();
  if (!images.defined() || images.rank() != 4 || images.dim(0) != n) {
    throw std::invalid_argument("dataset: images must be (N,C,H,W) with N = " + std::to_string(n));
  }
  if (domains.size() != n || splits.size() != n || (!color_t.empty() && color_t.size() != n)) {
    throw std::invalid_argument("dataset: parallel arrays differ in length");
  }
  for (float v : images.data()) {
    if (!(v >= 0.0f && v <= 1.0f)) throw std::invalid_argument("dataset: pixel value outside [0,1]");
  }
}

Tensor DomainDataset::gather_images(std::span<const std::size_t> indices) const {
  const auto ex = example_shape();
  const auto width = shape_numel(ex);
  std::vector<float> out(indices.size() * width);
  auto src = images.data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(indices[i] * width), width,
                out.begin() + static_cast<std::ptrdiff_t>(i * width));
  }
  Shape shape{indices.size()};
  shape.insert(shape.end(), ex.begin(), ex.end());
  return Tensor(std::move(shape), std::move(out));
}

std::vector<std::uint32_t> DomainDataset::gather_labels(std::span<const std::size_t> indices) const {
  std::vector<std::uint32_t> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels[i]);
  return out;
}

std::vector<std::uint32_t> DomainDataset::labels_u32() const { return {labels.begin(), labels.end()}; }

DomainDataset DomainDataset::subset(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw std::invalid_argument("dataset: empty subset");
  DomainDataset out;
  out.images = gather_images(indices);
  for (auto i : indices) {
    out.labels.push_back(labels[i]);
    out.domains.push_back(domains[i]);
    out.splits.push_back(splits[i]);
    if (!color_t.empty()) out.color_t.push_back(color_t[i]);
  }
  return out;
}

DomainDataset concat(std::span<const DomainDataset> parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no datasets");
  const auto ex = parts[0].example_shape();
  const bool with_t = std::all_of(parts.begin(), parts.end(), [](const auto& p) { return !p.color_t.empty(); });
  DomainDataset out;
  std::vector<float> pixels;
  for (const auto& p : parts) {
    if (p.example_shape() != ex) throw ShapeError("concat: example shapes differ");
    pixels.insert(pixels.end(), p.images.data().begin(), p.images.data().end());
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
    out.domains.insert(out.domains.end(), p.domains.begin(), p.domains.end());
    out.splits.insert(out.splits.end(), p.splits.begin(), p.splits.end());
    if (with_t) out.color_t.insert(out.color_t.end(), p.color_t.begin(), p.color_t.end());
  }
  Shape shape{out.labels.size()};
  shape.insert(shape.end(), ex.begin(), ex.end());
  out.images = Tensor(std::move(shape), std::move(pixels));
  return out;
}

void assign_splits(DomainDataset& ds, std::uint64_t seed) {
  for (auto d : ds.domain_ids()) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (ds.domains[i] == d) rows.push_back(i);
    }
    std::mt19937_64 rng(derive_seed(seed, d));
    std::shuffle(rows.begin(), rows.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(rows.size())));
    for (std::size_t k = 0; k < rows.size(); ++k) ds.splits[rows[k]] = k < n_train ? SplitTag::train80 : SplitTag::eval20;
  }
}

DomainDataset select(const DomainDataset& ds, std::span<const std::uint16_t> domains, SplitTag split) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.splits[i] == split && std::find(domains.begin(), domains.end(), ds.domains[i]) != domains.end()) {
      rows.push_back(i);
    }
  }
  return ds.subset(rows);
}

DomainSplit split_domains(const DomainDataset& ds, std::uint16_t holdout_domain) {
  const auto ids = ds.domain_ids();
  if (std::find(ids.begin(), ids.end(), holdout_domain) == ids.end()) {
    throw std::invalid_argument("split_domains: unknown domain " + std::to_string(holdout_domain));
  }
  std::vector<std::uint16_t> rest;
  for (auto d : ids) {
    if (d != holdout_domain) rest.push_back(d);
  }
  if (rest.empty()) throw std::invalid_argument("split_domains: no training domains besides the holdout");
  const std::uint16_t hold[] = {holdout_domain};
  return {select(ds, rest, SplitTag::train80), select(ds, hold, SplitTag::eval20)};
}

float recover_background_t(const DomainDataset& ds, std::size_t index) {
  const auto ex = ds.example_shape();
  if (ex.size() != 3 || ex[0] != 3) return std::numeric_limits<float>::quiet_NaN();
  const std::size_t plane = ex[1] * ex[2];
  auto px = ds.images.data().subspan(index * 3 * plane, 3 * plane);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < plane; ++p) {
    const float r = px[p], g = px[plane + p], b = px[2 * plane + p];
    if (b == 0.0f && std::abs(r + g - 1.0f) < 1e-5f) {
      total += g;
      ++count;
    }
  }
  return count ? static_cast<float>(total / static_cast<double>(count)) : std::numeric_limits<float>::quiet_NaN();
}

std::vector<std::uint8_t> encode_dataset(const DomainDataset& ds) {
  ds.validate();
  const auto ex = ds.example_shape();
  ByteWriter w;
  w.raw(std::string_view(kDatasetMagic, 8));
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(ds.size()));
  for (auto d : ex) w.u32(static_cast<std::uint32_t>(d));
  for (auto y : ds.labels) w.u16(y);
  for (auto d : ds.domains) w.u16(d);
  for (auto s : ds.splits) w.u8(static_cast<std::uint8_t>(s));
  w.f32s(ds.images.data());
  return w.bytes();
}

DomainDataset decode_dataset(std::span<const std::uint8_t> bytes, const std::string& context) {
  ByteReader r(bytes, context);
  if (bytes.size() < 8 || r.raw(8) != std::string_view(kDatasetMagic, 8)) r.fail("not a dataset file (bad magic)");
  const auto version = r.u32();
  if (version != kDatasetVersion) r.fail("unsupported dataset version " + std::to_string(version));
  const std::uint64_t n = r.u32();
  const std::uint64_t c = r.u32(), h = r.u32(), w = r.u32();
  if (n == 0 || c == 0 || h == 0 || w == 0) r.fail("zero-sized dimension");
  const std::uint64_t per_example = c * h * w;
  if (per_example > std::numeric_limits<std::uint32_t>::max() || n * per_example * 4 > r.remaining()) {
    r.fail("truncated pixel payload");
  }

  DomainDataset ds;
  ds.labels.resize(n);
  ds.domains.resize(n);
  ds.splits.resize(n);
  for (auto& y : ds.labels) y = r.u16();
  for (auto& d : ds.domains) d = r.u16();
  for (auto& s : ds.splits) {
    const auto tag = r.u8();
    if (tag > 1) r.fail("invalid split tag " + std::to_string(tag));
    s = static_cast<SplitTag>(tag);
  }
  std::vector<float> pixels(n * per_example);
  r.f32s(pixels);
  if (r.remaining() != 0) r.fail(std::to_string(r.remaining()) + " trailing bytes");
  ds.images = Tensor({n, c, h, w}, std::move(pixels));
  try {
    ds.validate();
  } catch (const std::invalid_argument& e) {
    r.fail(e.what());
  }

  if (c == 3) {
    std::vector<float> t(n);
    bool all = true;
    for (std::size_t i = 0; i < n && all; ++i) {
      t[i] = recover_background_t(ds, i);
      all = !std::isnan(t[i]);
    }
    if (all) ds.color_t = std::move(t);
  }
  return ds;
}

void save_dataset(const DomainDataset& ds, const std::string& path) { write_file_bytes(path, encode_dataset(ds)); }

DomainDataset load_dataset(const std::string& path) { return decode_dataset(read_file_bytes(path), path); }

}  // namespace daft::data
