#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "daft/binary_io.hpp"
#include "daft/tensor.hpp"

namespace daft::data {

enum class SplitTag : std::uint8_t { train80 = 0, eval20 = 1 };

/// Labeled images annotated with domain ids and 80/20 split tags.
///
/// `color_t` holds the background interpolation parameter per example when
/// known (colored datasets); it is empty otherwise.
struct DomainDataset {
  Tensor images;  // (N, C, H, W), values in [0,1]
  std::vector<std::uint16_t> labels;
  std::vector<std::uint16_t> domains;
  std::vector<SplitTag> splits;
  std::vector<float> color_t;

  std::size_t size() const { return labels.size(); }
  Shape example_shape() const;
  std::size_t num_classes() const;
  std::vector<std::uint16_t> domain_ids() const;

  /// Throws std::invalid_argument when parallel arrays disagree or pixels leave [0,1].
  void validate() const;

  DomainDataset subset(std::span<const std::size_t> indices) const;
  /// Images and labels of the given rows, ready for a forward pass.
  Tensor gather_images(std::span<const std::size_t> indices) const;
  std::vector<std::uint32_t> gather_labels(std::span<const std::size_t> indices) const;
  std::vector<std::uint32_t> labels_u32() const;
};

/// Concatenate datasets with identical example shapes.
DomainDataset concat(std::span<const DomainDataset> parts);

/// Re-tag splits so every domain holds round(0.8 n) train80 rows, chosen by
/// a seeded shuffle within the domain.
void assign_splits(DomainDataset& ds, std::uint64_t seed);

/// Rows of `ds` whose domain is listed and whose tag equals `split`.
DomainDataset select(const DomainDataset& ds, std::span<const std::uint16_t> domains, SplitTag split);

struct DomainSplit {
  DomainDataset train;    // 80% splits of every non-holdout domain
  DomainDataset heldout;  // 20% split of the holdout domain
};

DomainSplit split_domains(const DomainDataset& ds, std::uint16_t holdout_domain);

/// Background parameter t recovered from pixels with B == 0 and R + G == 1.
/// Returns NaN when the image has no such pixel.
float recover_background_t(const DomainDataset& ds, std::size_t index);

inline constexpr char kDatasetMagic[] = "DAFTDATA";
inline constexpr std::uint32_t kDatasetVersion = 1;

std::vector<std::uint8_t> encode_dataset(const DomainDataset& ds);
DomainDataset decode_dataset(std::span<const std::uint8_t> bytes, const std::string& context = "dataset");
void save_dataset(const DomainDataset& ds, const std::string& path);
DomainDataset load_dataset(const std::string& path);

}  // namespace daft::data
