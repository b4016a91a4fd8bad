#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "daft/data/dataset.hpp"

namespace daft::data {

/// Background colour as a function of t in [0,1]: (1 - t, t, 0), i.e. red at
/// t = 0 and green at t = 1.
std::array<float, 3> background_rgb(float t);

/// Training-time colour ranges. Tops span red .. (123,132,0), shoes span
/// (132,123,0) .. green; the two overlap on [123/255, 132/255].
struct ColorSpec {
  static constexpr float top_lo = 0.0f;
  static constexpr float top_hi = 132.0f / 255.0f;
  static constexpr float shoe_lo = 123.0f / 255.0f;
  static constexpr float shoe_hi = 1.0f;
};

inline constexpr std::uint16_t kTop = 0;
inline constexpr std::uint16_t kShoe = 1;

enum class ColorMode { train_correlated, test_uncorrelated };
enum class SourceKind { synthetic_shapes, fashionmnist };

struct ColoredOptions {
  SourceKind source = SourceKind::synthetic_shapes;
  std::size_t image_size = 12;  // synthetic silhouettes are image_size x image_size
  // FashionMNIST inputs; images are block-averaged by `downsample`.
  std::string idx_images;
  std::string idx_labels;
  std::size_t downsample = 1;
  std::vector<std::uint8_t> top_classes = {0, 2, 6};   // T-shirt/top, Pullover, Shirt
  std::vector<std::uint8_t> shoe_classes = {5, 7, 9};  // Sandal, Sneaker, Ankle boot
  float foreground_threshold = 0.1f;
  // Synthetic silhouettes: probability that a pixel flips in or out of the shape.
  float shape_noise = 0.15f;
};

/// Grayscale silhouette (H*W, values in [0,1]) of the given class. Pure
/// function of (seed, class).
std::vector<float> synthetic_silhouette(std::uint16_t cls, std::size_t size, std::uint64_t seed, float noise);

/// Paint the background (source intensity below threshold) with
/// background_rgb(t); foreground keeps its gray level in all channels.
std::vector<float> colorize(const std::vector<float>& gray, float t, float threshold);

/// Binary top/shoe colored dataset, n_per_class examples per class, all in
/// `domain`. Train mode draws t from the class range, test mode uniformly.
/// Every example uses a seed derived from (seed, index).
DomainDataset make_colored_dataset(const ColoredOptions& opts, std::size_t n_per_class, std::uint64_t seed,
                                   ColorMode mode, std::uint16_t domain = 0);

/// Four correlated domains whose backgrounds occupy disjoint quarters of the
/// colour range (t' = (d + t) / 4) plus a fifth, uncorrelated domain with t
/// uniform on [0,1]. Split tags are assigned 80/20 per domain.
DomainDataset make_domain_suite(const ColoredOptions& opts, std::size_t n_per_class_per_domain, std::uint64_t seed);

/// 2-D toy inputs (stored as (N,1,1,2)): feature 0 always carries the label
/// sign; feature 1 carries it with probability `spurious_strength` in train
/// mode and is independent of the label in test mode.
DomainDataset make_two_feature_dataset(std::size_t n, std::uint64_t seed, double spurious_strength, ColorMode mode);

}  // namespace daft::data
