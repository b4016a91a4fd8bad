#include "daft/data/colored.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>

#include "daft/data/idx.hpp"
#include "daft/random.hpp"

namespace daft::data {

std::array<float, 3> background_rgb(float t) { return {1.0f - t, t, 0.0f}; }

std::vector<float> synthetic_silhouette(std::uint16_t cls, std::size_t size, std::uint64_t seed, float noise) {
  if (cls > 1) throw std::invalid_argument("synthetic_silhouette: class must be 0 (top) or 1 (shoe)");
  if (size < 8) throw std::invalid_argument("synthetic_silhouette: image size must be at least 8");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto S = static_cast<double>(size);
  auto span_of = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };

  std::vector<float> gray(size * size);
  for (auto& v : gray) v = static_cast<float>(0.05 * u(rng));

  const double intensity = span_of(0.35, 1.0);
  auto fill = [&](double r0, double r1, double c0, double c1) {
    const auto ri0 = static_cast<std::ptrdiff_t>(std::lround(std::clamp(r0, 0.0, S)));
    const auto ri1 = static_cast<std::ptrdiff_t>(std::lround(std::clamp(r1, 0.0, S)));
    const auto ci0 = static_cast<std::ptrdiff_t>(std::lround(std::clamp(c0, 0.0, S)));
    const auto ci1 = static_cast<std::ptrdiff_t>(std::lround(std::clamp(c1, 0.0, S)));
    for (auto r = ri0; r < ri1; ++r) {
      for (auto c = ci0; c < ci1; ++c) gray[static_cast<std::size_t>(r) * size + static_cast<std::size_t>(c)] = 1.0f;
    }
  };

  const double cx = S / 2.0 + span_of(-1.0, 1.0);
  const double cy = S / 2.0 + span_of(-1.0, 1.0);
  if (cls == 0) {
    // Top: torso with sleeves across its upper part.
    const double body_w = span_of(0.38, 0.52) * S, body_h = span_of(0.55, 0.72) * S;
    const double sleeve_w = span_of(0.75, 0.9) * S, sleeve_h = span_of(0.18, 0.28) * S;
    const double top = cy - body_h / 2.0;
    fill(top, top + body_h, cx - body_w / 2.0, cx + body_w / 2.0);
    fill(top, top + sleeve_h, cx - sleeve_w / 2.0, cx + sleeve_w / 2.0);
  } else {
    // Shoe: shaft on one side standing on a wide sole.
    const double sole_w = span_of(0.7, 0.86) * S, sole_h = span_of(0.2, 0.3) * S;
    const double shaft_w = span_of(0.26, 0.36) * S, shaft_h = span_of(0.45, 0.62) * S;
    const double bottom = cy + (sole_h + shaft_h) / 2.0;
    const double left = cx - sole_w / 2.0;
    fill(bottom - sole_h, bottom, left, left + sole_w);
    const bool heel_left = u(rng) < 0.5;
    const double shaft_left = heel_left ? left : left + sole_w - shaft_w;
    fill(bottom - sole_h - shaft_h, bottom - sole_h, shaft_left, shaft_left + shaft_w);
  }

  // Each pixel leaves or joins the silhouette with probability `noise`, which
  // keeps the class readable from shape while making it costlier to learn.
  for (auto& v : gray) {
    const bool inside = (v == 1.0f) != (u(rng) < noise);
    const double jitter = 0.15 * (2.0 * u(rng) - 1.0);
    v = inside ? static_cast<float>(std::clamp(intensity + jitter, 0.35, 1.0)) : static_cast<float>(0.05 * u(rng));
  }
  return gray;
}

std::vector<float> colorize(const std::vector<float>& gray, float t, float threshold) {
  const auto rgb = background_rgb(t);
  const std::size_t plane = gray.size();
  std::vector<float> out(3 * plane);
  for (std::size_t p = 0; p < plane; ++p) {
    const bool background = gray[p] < threshold;
    for (std::size_t ch = 0; ch < 3; ++ch) out[ch * plane + p] = background ? rgb[ch] : gray[p];
  }
  return out;
}

namespace {

struct GraySource {
  std::size_t side = 0;
  std::function<std::vector<float>(std::uint16_t cls, std::size_t index, std::uint64_t seed)> draw;
};

GraySource fashion_source(const ColoredOptions& opts) {
  const auto images = parse_idx_file(opts.idx_images);
  const auto labels = parse_idx_file(opts.idx_labels);
  if (!images.is_images || labels.is_images) throw FormatError("fashionmnist: expected an image file and a label file");
  if (images.images.dim(0) != labels.labels.size()) throw FormatError("fashionmnist: image and label counts differ");
  const std::size_t rows = images.images.dim(1), cols = images.images.dim(2), ds = std::max<std::size_t>(1, opts.downsample);
  if (rows != cols || rows % ds != 0) throw std::invalid_argument("fashionmnist: images must be square and divisible by downsample");
  const std::size_t side = rows / ds;

  auto pools = std::make_shared<std::array<std::vector<std::vector<float>>, 2>>();
  auto pixels = images.images.data();
  for (std::size_t i = 0; i < labels.labels.size(); ++i) {
    const auto y = labels.labels[i];
    int cls = -1;
    if (std::find(opts.top_classes.begin(), opts.top_classes.end(), y) != opts.top_classes.end()) cls = kTop;
    if (std::find(opts.shoe_classes.begin(), opts.shoe_classes.end(), y) != opts.shoe_classes.end()) cls = kShoe;
    if (cls < 0) continue;
    std::vector<float> small(side * side, 0.0f);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        small[(r / ds) * side + c / ds] += pixels[(i * rows + r) * cols + c] / static_cast<float>(ds * ds);
      }
    }
    (*pools)[static_cast<std::size_t>(cls)].push_back(std::move(small));
  }
  for (const auto& pool : *pools) {
    if (pool.empty()) throw std::invalid_argument("fashionmnist: a mapped class has no images");
  }
  return {side, [pools](std::uint16_t cls, std::size_t index, std::uint64_t) {
            const auto& pool = (*pools)[cls];
            return pool[index % pool.size()];
          }};
}

GraySource shapes_source(const ColoredOptions& opts) {
  const auto size = opts.image_size;
  const auto noise = opts.shape_noise;
  return {size, [size, noise](std::uint16_t cls, std::size_t, std::uint64_t seed) {
            return synthetic_silhouette(cls, size, seed, noise);
          }};
}

DomainDataset generate(const ColoredOptions& opts, std::size_t n_per_class, std::uint64_t seed, ColorMode mode,
                       std::uint16_t domain, const std::function<float(float)>& remap_t) {
  if (n_per_class == 0) throw std::invalid_argument("make_colored_dataset: n_per_class must be positive");
  const GraySource src = opts.source == SourceKind::fashionmnist ? fashion_source(opts) : shapes_source(opts);
  const std::size_t n = 2 * n_per_class, plane = src.side * src.side;

  DomainDataset ds;
  std::vector<float> pixels(n * 3 * plane);
  ds.labels.resize(n);
  ds.domains.assign(n, domain);
  ds.splits.assign(n, SplitTag::train80);
  ds.color_t.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t item_seed = derive_seed(seed, i);
    std::mt19937_64 rng(item_seed);
    const auto cls = static_cast<std::uint16_t>(i % 2);
    // Pool index for real images: a seeded draw so classes interleave evenly.
    const std::size_t source_index = static_cast<std::size_t>(rng() >> 16);
    float t = 0.0f;
    if (mode == ColorMode::train_correlated) {
      const float lo = cls == kTop ? ColorSpec::top_lo : ColorSpec::shoe_lo;
      const float hi = cls == kTop ? ColorSpec::top_hi : ColorSpec::shoe_hi;
      t = std::uniform_real_distribution<float>(lo, hi)(rng);
    } else {
      t = std::uniform_real_distribution<float>(0.0f, 1.0f)(rng);
    }
    t = std::clamp(remap_t(t), 0.0f, 1.0f);
    const auto gray = src.draw(cls, source_index, derive_seed(item_seed, 1));
    const auto rgb = colorize(gray, t, opts.foreground_threshold);
    std::copy(rgb.begin(), rgb.end(), pixels.begin() + static_cast<std::ptrdiff_t>(i * 3 * plane));
    ds.labels[i] = cls;
    ds.color_t[i] = t;
  }
  ds.images = Tensor({n, 3, src.side, src.side}, std::move(pixels));
  return ds;
}

}  // namespace

DomainDataset make_colored_dataset(const ColoredOptions& opts, std::size_t n_per_class, std::uint64_t seed,
                                   ColorMode mode, std::uint16_t domain) {
  return generate(opts, n_per_class, seed, mode, domain, [](float t) { return t; });
}

DomainDataset make_domain_suite(const ColoredOptions& opts, std::size_t n_per_class_per_domain, std::uint64_t seed) {
  std::vector<DomainDataset> parts;
  for (std::uint16_t d = 0; d < 4; ++d) {
    parts.push_back(generate(opts, n_per_class_per_domain, derive_seed(seed, d), ColorMode::train_correlated, d,
                             [d](float t) { return (static_cast<float>(d) + t) / 4.0f; }));
  }
  parts.push_back(generate(opts, n_per_class_per_domain, derive_seed(seed, 4), ColorMode::test_uncorrelated, 4,
                           [](float t) { return t; }));
  auto ds = concat(parts);
  assign_splits(ds, seed);
  return ds;
}

DomainDataset make_two_feature_dataset(std::size_t n, std::uint64_t seed, double spurious_strength, ColorMode mode) {
  if (n == 0) throw std::invalid_argument("make_two_feature_dataset: n must be positive");
  if (spurious_strength < 0.0 || spurious_strength > 1.0) {
    throw std::invalid_argument("make_two_feature_dataset: spurious_strength must lie in [0,1]");
  }
  DomainDataset ds;
  std::vector<float> values(2 * n);
  ds.labels.resize(n);
  ds.domains.assign(n, 0);
  ds.splits.assign(n, SplitTag::train80);
  for (std::size_t i = 0; i < n; ++i) {
    std::mt19937_64 rng(derive_seed(seed, i));
    std::uniform_real_distribution<float> magnitude(0.5f, 1.5f);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    const auto y = static_cast<std::uint16_t>(i % 2);
    const float sign = y == 1 ? 1.0f : -1.0f;
    const double align = mode == ColorMode::train_correlated ? spurious_strength : 0.0;
    const float spurious_sign = coin(rng) < align ? sign : (coin(rng) < 0.5 ? 1.0f : -1.0f);
    // Stored in [0,1]: 0.5 +/- 0.25 * magnitude.
    values[2 * i] = 0.5f + 0.25f * sign * magnitude(rng);
    values[2 * i + 1] = 0.5f + 0.25f * spurious_sign * magnitude(rng);
    ds.labels[i] = y;
  }
  ds.images = Tensor({n, 1, 1, 2}, std::move(values));
  return ds;
}

}  // namespace daft::data
