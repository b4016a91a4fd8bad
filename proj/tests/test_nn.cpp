#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "daft/nn/adam.hpp"
#include "daft/nn/checkpoint.hpp"
#include "daft/nn/model.hpp"
#include "daft/ops.hpp"
#include "daft/tape.hpp"
#include "doctest.h"
#include "checks.hpp"

using namespace daft;
using namespace daft::nn;
using oracle::Vec;

namespace {

std::vector<NamedTensor> rebuild(const Architecture& arch, const std::vector<Tensor>& values) {
  std::vector<NamedTensor> out;
  const auto layout = parameter_layout(arch);
  for (std::size_t i = 0; i < layout.size(); ++i) out.push_back({layout[i].first, values[i]});
  return out;
}

bool models_bit_equal(const Model& a, const Model& b) {
  const auto ta = a.named_tensors(), tb = b.named_tensors();
  if (ta.size() != tb.size() || !(a.arch() == b.arch())) return false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (ta[i].name != tb[i].name || !ta[i].value.bit_equal(tb[i].value)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("architecture descriptors round-trip and reject malformed text") {
  for (const char* text : {"identity:4:2", "linear:6:3:2", "mlp:8:5,4:3", "cnn:3x12x12:16,32:32:2"}) {
    CHECK(Architecture::parse(text).to_string() == text);
  }
  for (const char* bad : {"", "conv:1:2", "linear:6:3", "mlp:8::3", "linear:0:3:2", "cnn:3x4x4:8,8,8:4:2",
                          "cnn:3x12:8:4:2", "identity:x:2"}) {
    CHECK_THROWS_AS(Architecture::parse(bad), std::invalid_argument);
  }
}

TEST_CASE("parameter layout of the small CNN") {
  const auto layout = parameter_layout(Architecture::parse("cnn:3x12x12:16,32:32:2"));
  REQUIRE(layout.size() == 8);
  CHECK(layout[0].second == Shape{16, 3, 3, 3});
  CHECK(layout[2].second == Shape{32, 16, 3, 3});
  CHECK(layout[4].first == "fc.weight");
  CHECK(layout[4].second == Shape{32 * 3 * 3, 32});
  CHECK(layout[6].first == "head.weight");
  CHECK(layout[6].second == Shape{32, 2});
}

TEST_CASE("init is seeded, zero-biased and fan-in scaled") {
  const auto arch = Architecture::mlp(400, {300}, 2);
  const Model a = Model::init(arch, 5), b = Model::init(arch, 5), c = Model::init(arch, 6);
  CHECK(models_bit_equal(a, b));
  CHECK_FALSE(models_bit_equal(a, c));
  for (float v : a.extractor()[1].value.data()) CHECK(v == 0.0f);
  long double ss = 0;
  for (float v : a.extractor()[0].value.data()) ss += static_cast<long double>(v) * v;
  const double sd = std::sqrt(static_cast<double>(ss / a.extractor()[0].value.numel()));
  CHECK(sd == doctest::Approx(std::sqrt(2.0 / 400)).epsilon(0.02));
}

TEST_CASE("dense forward passes match oracles") {
  std::mt19937_64 rng(1);
  const Tensor x = oracle::random_tensor({3, 4}, rng);
  SUBCASE("identity features are the flattened input") {
    const Model m = Model::init(Architecture::identity(4, 2), 0);
    CHECK(m.features(x.view_as({3, 1, 2, 2})).bit_equal(x));
  }
  SUBCASE("mlp") {
    const auto arch = Architecture::mlp(4, {5, 3}, 2);
    const Model m = Model::init(arch, 3);
    const auto& e = m.extractor();
    Vec h = oracle::widen(x.data());
    std::size_t in = 4;
    for (std::size_t l = 0; l < 2; ++l) {
      const std::size_t out = arch.widths[l];
      h = oracle::matmul(h, oracle::widen(e[2 * l].value.data()), 3, in, out);
      for (std::size_t i = 0; i < h.size(); ++i) h[i] = std::max(0.0L, h[i] + e[2 * l + 1].value.at(i % out));
      in = out;
    }
    CHECK(oracle::max_rel_err(m.features(x).data(), h) < 1e-6);
    Vec z = oracle::matmul(h, oracle::widen(m.head().weight.data()), 3, 3, 2);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += m.head().bias.at(i % 2);
    CHECK(oracle::max_rel_err(m.logits(x).data(), z) < 1e-6);
  }
  CHECK_THROWS_AS(Model::init(Architecture::linear(5, 2, 2), 0).features(x), ShapeError);
}

TEST_CASE("parameter groups decide which tensors receive gradients") {
  std::mt19937_64 rng(2);
  Model m = Model::init(Architecture::linear(4, 3, 2), 1);
  const Tensor x = oracle::random_tensor({2, 4}, rng);
  auto reached = [&](ParamGroup g) {
    Tape tape;
    const auto grads = backward(ops::sum(m.logits(x, g)), tape);
    return std::pair{grads.reached(m.extractor()[0].value), grads.reached(m.head().weight)};
  };
  CHECK(reached(ParamGroup::all) == std::pair{true, true});
  CHECK(reached(ParamGroup::head) == std::pair{false, true});
  CHECK(reached(ParamGroup::extractor) == std::pair{true, false});
  CHECK(m.parameters(ParamGroup::head).size() == 2);
  CHECK(m.parameters(ParamGroup::none).empty());
  CHECK(m.parameters(ParamGroup::all).size() == 4);
}

TEST_CASE("gradient checks through dense models") {
  std::mt19937_64 rng(3);
  for (const auto& arch : {Architecture::linear(4, 3, 2), Architecture::mlp(4, {6, 5}, 3)}) {
    const Model m = Model::init(arch, 7);
    std::vector<Tensor> params;
    for (const auto& t : m.named_tensors()) params.push_back(t.value);
    const Tensor x = oracle::random_tensor({3, 4}, rng);
    oracle::check_gradients(
        arch.to_string(),
        [&](const std::vector<Tensor>& v) { return Model::from_tensors(arch, rebuild(arch, v)).logits(x); }, params,
        rng);
  }
}

TEST_CASE("models copy deeply; heads swap only when shapes fit") {
  Model a = Model::init(Architecture::linear(4, 3, 2), 1);
  Model b = a;
  b.extractor()[0].value.mutable_data()[0] += 1.0f;
  b.head().weight.mutable_data()[0] += 1.0f;
  CHECK(a.extractor()[0].value.at(0) + 1.0f == b.extractor()[0].value.at(0));
  CHECK(extractor_hash(a) != extractor_hash(b));
  Model c = a;
  c.head().weight.mutable_data()[1] += 1.0f;
  CHECK(extractor_hash(a) == extractor_hash(c));
  CHECK_THROWS_AS(a.set_head(Head{Tensor::zeros({4, 2}), Tensor::zeros({2})}), ShapeError);
}

TEST_CASE("adam matches a long-double reference trace") {
  // minimize sum (w - c)^2 for 10 steps
  const std::vector<float> c = {0.5f, -1.0f, 2.0f};
  Tensor w({3}, {0.0f, 0.0f, 0.0f}, true);
  std::vector<ParamRef> refs = {{"w", &w}};
  AdamState st(0.1);
  Vec rw(3, 0.0L), rm(3, 0.0L), rv(3, 0.0L);
  for (int t = 1; t <= 10; ++t) {
    std::vector<float> g(3);
    for (int i = 0; i < 3; ++i) g[i] = 2.0f * (w.at(i) - c[i]);
    const std::vector<Tensor> grads = {Tensor({3}, g)};
    adam_step(st, refs, grads);
    for (int i = 0; i < 3; ++i) {
      const long double gr = 2.0L * (rw[i] - c[i]);
      rm[i] = 0.9L * rm[i] + 0.1L * gr;
      rv[i] = 0.999L * rv[i] + 0.001L * gr * gr;
      const long double mh = rm[i] / (1 - std::pow(0.9L, t)), vh = rv[i] / (1 - std::pow(0.999L, t));
      rw[i] -= 0.1L * mh / (std::sqrt(vh) + 1e-8L);
    }
    CHECK(oracle::max_rel_err(w.data(), rw) < 1e-5);
  }
  CHECK(st.step == 10);
}

TEST_CASE("adam: first step moves by lr along -sign(g); zero gradient is a no-op") {
  Tensor w({3}, {1.0f, 1.0f, 1.0f}, true);
  std::vector<ParamRef> refs = {{"w", &w}};
  AdamState st(0.01);
  std::vector<Tensor> grads = {Tensor({3}, {3.0f, -0.001f, 0.0f})};
  adam_step(st, refs, grads);
  CHECK(w.at(0) == doctest::Approx(0.99));
  CHECK(w.at(1) == doctest::Approx(1.01));
  CHECK(w.at(2) == 1.0f);
}

TEST_CASE("adam rejects non-finite gradients naming the parameter, and shape drift") {
  Tensor w({2}, {1.0f, 1.0f}, true);
  std::vector<ParamRef> refs = {{"dense1.weight", &w}};
  AdamState st;
  std::vector<Tensor> bad = {Tensor({2}, {NAN, 0.0f})};
  try {
    adam_step(st, refs, bad);
    FAIL("accepted NaN gradient");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("dense1.weight") != std::string::npos);
  }
  CHECK(w.at(0) == 1.0f);
  std::vector<Tensor> wrong = {Tensor::zeros({3})};
  CHECK_THROWS_AS(adam_step(st, refs, wrong), ShapeError);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  for (const char* text : {"identity:4:2", "mlp:8:5,4:3", "cnn:3x12x12:16,32:32:2"}) {
    const Model m = Model::init(Architecture::parse(text), 11);
    const auto bytes = encode_checkpoint(m);
    const Model back = decode_checkpoint(bytes);
    CHECK(models_bit_equal(m, back));
    CHECK(encode_checkpoint(back) == bytes);
  }
  const Model m = Model::init(Architecture::parse("mlp:8:5:3"), 2);
  const auto path = (std::filesystem::temp_directory_path() / "daft_test_ckpt.bin").string();
  save_checkpoint(m, path);
  CHECK(models_bit_equal(load_checkpoint(path), m));
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
}

TEST_CASE("corrupt checkpoints raise FormatError") {
  const auto good = encode_checkpoint(Model::init(Architecture::parse("mlp:4:3:2"), 1));
  auto bad_magic = good;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad_magic), FormatError);
  auto bad_version = good;
  bad_version[8] = 2;
  CHECK_THROWS_AS(decode_checkpoint(bad_version), FormatError);
  for (std::size_t n : {std::size_t{0}, std::size_t{7}, std::size_t{12}, std::size_t{20}, good.size() - 1}) {
    CHECK_THROWS_AS(decode_checkpoint(std::span(good).first(n)), FormatError);
  }
  auto trailing = good;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode_checkpoint(trailing), FormatError);
}

TEST_CASE("adam on w^2 from w0 = 1 with lr 0.1 follows the scalar recurrence") {
  Tensor w({1}, {1.0f}, true);
  std::vector<ParamRef> refs = {{"w", &w}};
  AdamState st(0.1);
  long double rw = 1, m = 0, v = 0;
  for (int t = 1; t <= 10; ++t) {
    const std::vector<Tensor> grads = {Tensor({1}, {2.0f * w.at(0)})};
    adam_step(st, refs, grads);
    const long double g = 2 * rw;
    m = 0.9L * m + 0.1L * g;
    v = 0.999L * v + 0.001L * g * g;
    rw -= 0.1L * (m / (1 - std::pow(0.9L, t))) / (std::sqrt(v / (1 - std::pow(0.999L, t))) + 1e-8L);
    CHECK(w.at(0) == doctest::Approx(static_cast<double>(rw)).epsilon(1e-5));
  }
}

TEST_CASE("adam with lr 0 leaves parameters untouched") {
  std::mt19937_64 rng(9);
  Tensor w = oracle::random_tensor({4}, rng).clone(true);
  const Tensor before = w.clone();
  std::vector<ParamRef> refs = {{"w", &w}};
  AdamState st(0.0);
  for (int t = 0; t < 5; ++t) {
    const std::vector<Tensor> grads = {oracle::random_tensor({4}, rng)};
    adam_step(st, refs, grads);
  }
  CHECK(w.bit_equal(before));
}

TEST_CASE("a wrong magic reports 'not a checkpoint'; reloaded models give identical logits") {
  const Model m = Model::init(Architecture::parse("cnn:3x8x8:4:6:3"), 4);
  auto bytes = encode_checkpoint(m);
  std::mt19937_64 rng(1);
  const Tensor x = oracle::random_tensor({2, 3, 8, 8}, rng, 0.0f, 1.0f);
  CHECK(decode_checkpoint(bytes).logits(x).bit_equal(m.logits(x)));
  bytes[3] ^= 0x20;
  try {
    (void)decode_checkpoint(bytes, "model.ckpt");
    FAIL("accepted a bad magic");
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("not a checkpoint") != std::string::npos);
    CHECK(msg.find("model.ckpt") != std::string::npos);
  }
}
