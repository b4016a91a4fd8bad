#include "daft/nn/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <random>
#include <sstream>

#include "daft/ops.hpp"

namespace daft::nn {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) parts.push_back(cur);
  return parts;
}

std::size_t parse_dim(const std::string& s, const std::string& text) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != s.size() || v == 0) throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw std::invalid_argument("architecture '" + text + "': bad dimension '" + s + "'");
  }
}

std::vector<std::size_t> parse_list(const std::string& s, const std::string& text) {
  std::vector<std::size_t> out;
  for (const auto& part : split(s, ',')) out.push_back(parse_dim(part, text));
  if (out.empty()) throw std::invalid_argument("architecture '" + text + "': empty width list");
  return out;
}

std::string join(const std::vector<std::size_t>& v, char sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += std::to_string(v[i]);
  }
  return s;
}

bool tracks_extractor(ParamGroup g) { return g == ParamGroup::all || g == ParamGroup::extractor; }
bool tracks_head(ParamGroup g) { return g == ParamGroup::all || g == ParamGroup::head; }

Tensor use(const Tensor& t, bool track) { return track ? t : t.detach(); }

// Spatial size after conv3x3(pad 1) + maxpool2 stages.
std::size_t pooled(std::size_t size, std::size_t stages) {
  for (std::size_t i = 0; i < stages; ++i) size /= 2;
  return size;
}

}  // namespace

Architecture Architecture::identity(std::size_t in, std::size_t classes) {
  return {ArchKind::identity, {in}, {}, in, classes};
}

Architecture Architecture::linear(std::size_t in, std::size_t feature, std::size_t classes) {
  return {ArchKind::linear, {in}, {}, feature, classes};
}

Architecture Architecture::mlp(std::size_t in, std::vector<std::size_t> hidden, std::size_t classes) {
  if (hidden.empty()) throw std::invalid_argument("mlp architecture needs at least one hidden layer");
  const auto feature = hidden.back();
  return {ArchKind::mlp, {in}, std::move(hidden), feature, classes};
}

Architecture Architecture::small_cnn(Shape chw, std::vector<std::size_t> channels, std::size_t feature,
                                     std::size_t classes) {
  if (chw.size() != 3) throw std::invalid_argument("cnn architecture needs a (C,H,W) input shape");
  if (channels.empty()) throw std::invalid_argument("cnn architecture needs at least one conv stage");
  if (pooled(chw[1], channels.size()) == 0 || pooled(chw[2], channels.size()) == 0) {
    throw std::invalid_argument("cnn architecture: input " + shape_str(chw) + " too small for " +
                                std::to_string(channels.size()) + " pooling stages");
  }
  return {ArchKind::small_cnn, std::move(chw), std::move(channels), feature, classes};
}

std::string Architecture::to_string() const {
  switch (kind) {
    case ArchKind::identity:
      return "identity:" + std::to_string(input[0]) + ":" + std::to_string(num_classes);
    case ArchKind::linear:
      return "linear:" + std::to_string(input[0]) + ":" + std::to_string(feature_dim) + ":" +
             std::to_string(num_classes);
    case ArchKind::mlp:
      return "mlp:" + std::to_string(input[0]) + ":" + join(widths, ',') + ":" + std::to_string(num_classes);
    case ArchKind::small_cnn:
      return "cnn:" + join(input, 'x') + ":" + join(widths, ',') + ":" + std::to_string(feature_dim) + ":" +
             std::to_string(num_classes);
  }
  return {};
}

Architecture Architecture::parse(const std::string& text) {
  const auto parts = split(text, ':');
  auto expect = [&](std::size_t n) {
    if (parts.size() != n) throw std::invalid_argument("architecture '" + text + "': wrong field count");
  };
  if (parts.empty()) throw std::invalid_argument("architecture: empty descriptor");
  const auto& kind = parts[0];
  if (kind == "identity") {
    expect(3);
    return identity(parse_dim(parts[1], text), parse_dim(parts[2], text));
  }
  if (kind == "linear") {
    expect(4);
    return linear(parse_dim(parts[1], text), parse_dim(parts[2], text), parse_dim(parts[3], text));
  }
  if (kind == "mlp") {
    expect(4);
    return mlp(parse_dim(parts[1], text), parse_list(parts[2], text), parse_dim(parts[3], text));
  }
  if (kind == "cnn") {
    expect(5);
    Shape chw;
    for (const auto& d : split(parts[1], 'x')) chw.push_back(parse_dim(d, text));
    return small_cnn(chw, parse_list(parts[2], text), parse_dim(parts[3], text), parse_dim(parts[4], text));
  }
  throw std::invalid_argument("architecture '" + text + "': unknown kind '" + kind + "'");
}

std::vector<std::pair<std::string, Shape>> parameter_layout(const Architecture& arch) {
  std::vector<std::pair<std::string, Shape>> layout;
  switch (arch.kind) {
    case ArchKind::identity:
      break;
    case ArchKind::linear:
      layout.push_back({"dense1.weight", {arch.input[0], arch.feature_dim}});
      layout.push_back({"dense1.bias", {arch.feature_dim}});
      break;
    case ArchKind::mlp: {
      std::size_t in = arch.input[0];
      for (std::size_t i = 0; i < arch.widths.size(); ++i) {
        const auto name = "dense" + std::to_string(i + 1);
        layout.push_back({name + ".weight", {in, arch.widths[i]}});
        layout.push_back({name + ".bias", {arch.widths[i]}});
        in = arch.widths[i];
      }
      break;
    }
    case ArchKind::small_cnn: {
      std::size_t in = arch.input[0];
      for (std::size_t i = 0; i < arch.widths.size(); ++i) {
        const auto name = "conv" + std::to_string(i + 1);
        layout.push_back({name + ".weight", {arch.widths[i], in, 3, 3}});
        layout.push_back({name + ".bias", {arch.widths[i]}});
        in = arch.widths[i];
      }
      const auto flat =
          in * pooled(arch.input[1], arch.widths.size()) * pooled(arch.input[2], arch.widths.size());
      layout.push_back({"fc.weight", {flat, arch.feature_dim}});
      layout.push_back({"fc.bias", {arch.feature_dim}});
      break;
    }
  }
  layout.push_back({"head.weight", {arch.feature_dim, arch.num_classes}});
  layout.push_back({"head.bias", {arch.num_classes}});
  return layout;
}

Model::Model(const Model& other) : arch_(other.arch_) {
  extractor_.reserve(other.extractor_.size());
  for (const auto& p : other.extractor_) extractor_.push_back({p.name, p.value.clone(true)});
  if (other.head_.weight.defined()) head_ = other.head_.clone();
}

Model& Model::operator=(const Model& other) {
  if (this != &other) *this = Model(other);
  return *this;
}

Model Model::init(const Architecture& arch, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<NamedTensor> tensors;
  for (auto& [name, shape] : parameter_layout(arch)) {
    const bool is_bias = name.ends_with(".bias");
    std::vector<float> values(shape_numel(shape), 0.0f);
    if (!is_bias) {
      // Fan-in: product of all but the output axis. Dense weights are (in,out),
      // conv weights (out,in,kh,kw).
      const std::size_t fan_in = shape.size() == 4 ? shape[1] * shape[2] * shape[3] : shape[0];
      std::normal_distribution<float> normal(0.0f, static_cast<float>(std::sqrt(2.0 / fan_in)));
      for (auto& v : values) v = normal(rng);
    }
    tensors.push_back({name, Tensor(shape, std::move(values), true)});
  }
  return from_tensors(arch, std::move(tensors));
}

Model Model::from_tensors(const Architecture& arch, std::vector<NamedTensor> tensors) {
  const auto layout = parameter_layout(arch);
  if (tensors.size() != layout.size()) {
    throw std::invalid_argument("model: expected " + std::to_string(layout.size()) + " tensors for " +
                                arch.to_string() + ", got " + std::to_string(tensors.size()));
  }
  Model m;
  m.arch_ = arch;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (tensors[i].name != layout[i].first || tensors[i].value.shape() != layout[i].second) {
      throw std::invalid_argument("model: tensor " + std::to_string(i) + " is " + tensors[i].name +
                                  shape_str(tensors[i].value.shape()) + ", expected " + layout[i].first +
                                  shape_str(layout[i].second));
    }
    auto value = tensors[i].value.requires_grad() ? tensors[i].value : tensors[i].value.clone(true);
    if (i + 2 < layout.size()) {
      m.extractor_.push_back({tensors[i].name, value});
    } else if (i + 2 == layout.size()) {
      m.head_.weight = value;
    } else {
      m.head_.bias = value;
    }
  }
  return m;
}

void Model::set_head(Head head) {
  if (head.weight.shape() != head_.weight.shape() || head.bias.shape() != head_.bias.shape()) {
    throw ShapeError("set_head: head " + shape_str(head.weight.shape()) + " does not fit model head " +
                     shape_str(head_.weight.shape()));
  }
  head_ = Head{head.weight.requires_grad() ? head.weight : head.weight.clone(true),
               head.bias.requires_grad() ? head.bias : head.bias.clone(true)};
}

Tensor Model::features(const Tensor& x, ParamGroup group) const {
  // Dense architectures flatten, so any example layout with the right size is accepted.
  const Shape& in = arch_.input;
  const bool dense = arch_.kind != ArchKind::small_cnn;
  const bool ok = x.rank() >= 2 && (dense ? x.numel() / x.dim(0) == shape_numel(in)
                                          : x.rank() == in.size() + 1 &&
                                                std::equal(in.begin(), in.end(), x.shape().begin() + 1));
  if (!ok) {
    throw ShapeError("features: input " + shape_str(x.shape()) + " does not match architecture input " +
                     shape_str(in) + " (plus batch axis)");
  }
  const bool track = tracks_extractor(group);
  auto p = [&](std::size_t i) { return use(extractor_[i].value, track); };

  switch (arch_.kind) {
    case ArchKind::identity:
      return ops::flatten(x);
    case ArchKind::linear:
      return ops::add_row_bias(ops::matmul(ops::flatten(x), p(0)), p(1));
    case ArchKind::mlp: {
      Tensor h = ops::flatten(x);
      for (std::size_t i = 0; i < arch_.widths.size(); ++i) {
        h = ops::relu(ops::add_row_bias(ops::matmul(h, p(2 * i)), p(2 * i + 1)));
      }
      return h;
    }
    case ArchKind::small_cnn: {
      Tensor h = x;
      std::size_t i = 0;
      for (; i < arch_.widths.size(); ++i) {
        h = ops::conv2d(h, p(2 * i), p(2 * i + 1), {.stride = 1, .padding = 1});
        h = ops::max_pool2d(ops::relu(h), 2, 2);
      }
      return ops::add_row_bias(ops::matmul(ops::flatten(h), p(2 * i)), p(2 * i + 1));
    }
  }
  throw std::logic_error("features: unknown architecture kind");
}

Tensor logits_from_features(const Head& head, const Tensor& features, bool track) {
  if (features.rank() != 2 || features.dim(1) != head.weight.dim(0)) {
    throw ShapeError("logits: features " + shape_str(features.shape()) + " do not match head " +
                     shape_str(head.weight.shape()));
  }
  return ops::add_row_bias(ops::matmul(features, use(head.weight, track)), use(head.bias, track));
}

Tensor Model::logits(const Tensor& x, ParamGroup group) const {
  return logits_from_features(head_, features(x, group), tracks_head(group));
}

std::vector<ParamRef> Model::parameters(ParamGroup group) {
  std::vector<ParamRef> refs;
  if (tracks_extractor(group)) {
    for (auto& p : extractor_) refs.push_back({p.name, &p.value});
  }
  if (tracks_head(group)) {
    refs.push_back({"head.weight", &head_.weight});
    refs.push_back({"head.bias", &head_.bias});
  }
  return refs;
}

std::vector<NamedTensor> Model::named_tensors() const {
  auto all = extractor_;
  all.push_back({"head.weight", head_.weight});
  all.push_back({"head.bias", head_.bias});
  return all;
}

std::uint64_t extractor_hash(const Model& model) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& p : model.extractor()) {
    for (float v : p.value.data()) {
      const auto bits = std::bit_cast<std::uint32_t>(v);
      for (int b = 0; b < 4; ++b) {
        h ^= (bits >> (8 * b)) & 0xFFu;
        h *= 1099511628211ULL;
      }
    }
  }
  return h;
}

}  // namespace daft::nn
