#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "daft/ops.hpp"
#include "daft/tape.hpp"
#include "daft/tensor.hpp"
#include "doctest.h"
#include "checks.hpp"

using namespace daft;
using oracle::Vec;

namespace {

// Values with pairwise gaps far larger than the finite-difference step, so
// max-pool and relu never switch branch under perturbation.
Vec conv_oracle(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad) {
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const auto o = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const auto oh = (h + 2 * pad - kh) / stride + 1, ow = (wd + 2 * pad - kw) / stride + 1;
  Vec out(n * o * oh * ow);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t oc = 0; oc < o; ++oc)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          long double s = b.at(oc);
          for (std::size_t ic = 0; ic < c; ++ic)
            for (std::size_t dy = 0; dy < kh; ++dy)
              for (std::size_t dx = 0; dx < kw; ++dx) {
                const long iy = static_cast<long>(y * stride + dy) - static_cast<long>(pad);
                const long ix = static_cast<long>(xx * stride + dx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd)) continue;
                s += static_cast<long double>(x.at(((i * c + ic) * h + iy) * wd + ix)) *
                     w.at(((oc * c + ic) * kh + dy) * kw + dx);
              }
          out[((i * o + oc) * oh + y) * ow + xx] = s;
        }
  return out;
}

}  // namespace

TEST_CASE("tensor construction validates shapes") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<float>(5)), ShapeError);
  CHECK_THROWS_AS(Tensor::zeros({2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor::zeros({2}).item(), ShapeError);
  CHECK(Tensor::scalar(3.5f).item() == 3.5f);
  CHECK_THROWS_AS(Tensor::zeros({2, 2}).view_as({3}), ShapeError);
}

TEST_CASE("handles: detach shares storage, clone copies, identities are fresh") {
  Tensor a({2}, {1.0f, 2.0f}, true);
  Tensor d = a.detach();
  Tensor c = a.clone();
  CHECK(d.id() != a.id());
  CHECK(c.id() != a.id());
  CHECK_FALSE(d.requires_grad());
  a.mutable_data()[0] = 7.0f;
  CHECK(d.at(0) == 7.0f);
  CHECK(c.at(0) == 1.0f);
  CHECK(a.bit_equal(d));
  CHECK_FALSE(a.bit_equal(c));
}

TEST_CASE("softmax of (1,2,3)") {
  const Tensor s = ops::softmax(Tensor({3}, {1.0f, 2.0f, 3.0f}));
  const Vec want = oracle::softmax({1, 2, 3});
  CHECK(s.at(0) == doctest::Approx(0.09003).epsilon(1e-4));
  CHECK(s.at(1) == doctest::Approx(0.24473).epsilon(1e-4));
  CHECK(s.at(2) == doctest::Approx(0.66524).epsilon(1e-4));
  CHECK(oracle::max_rel_err(s.data(), want) < 1e-6);
}

TEST_CASE("trivial identities") {
  const Tensor u = ops::softmax(Tensor({3}, {0.0f, 0.0f, 0.0f}));
  for (float v : u.data()) CHECK(v == doctest::Approx(1.0 / 3.0));
  std::mt19937_64 rng(5);
  const Tensor a = oracle::random_tensor({3, 3}, rng);
  const Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  CHECK(ops::matmul(eye, a).bit_equal(a));
  {
    const Tensor x({4}, {0.3f, -1.0f, 2.0f, 5.0f}, true);
    Tape tape;
    const auto g = backward(ops::sum(x), tape);
    for (std::size_t i = 0; i < 4; ++i) CHECK(g.of(x).at(i) == 1.0f);
  }
  {
    const Tensor x({2}, {3.0f, 4.0f}, true);
    Tape tape;
    const Tensor n = ops::l2_norm(x);
    const auto g = backward(ops::mul(n, n), tape);
    CHECK(g.of(x).at(0) == doctest::Approx(6.0));
    CHECK(g.of(x).at(1) == doctest::Approx(8.0));
  }
}

TEST_CASE("softmax rows are distributions") {
  std::mt19937_64 rng(6);
  for (int rep = 0; rep < 50; ++rep) {
    const Tensor s = ops::softmax(oracle::random_tensor({4, 7}, rng, -20.0f, 20.0f));
    for (std::size_t r = 0; r < 4; ++r) {
      double total = 0;
      for (std::size_t c = 0; c < 7; ++c) {
        const float v = s.at(r * 7 + c);
        CHECK(v > 0.0f);
        CHECK(v <= 1.0f);
        total += v;
      }
      CHECK(std::abs(total - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("softmax and log_softmax stay finite for large logits") {
  const Tensor x({2, 2}, {1000.0f, 0.0f, -1000.0f, 0.0f});
  const Tensor s = ops::softmax(x);
  const Tensor l = ops::log_softmax(x);
  CHECK(s.at(0) == doctest::Approx(1.0));
  CHECK(s.at(1) == doctest::Approx(0.0));
  CHECK(l.at(1) == doctest::Approx(-1000.0));
  CHECK(l.at(2) == doctest::Approx(-1000.0));
}

TEST_CASE("forward values match long-double oracles") {
  std::mt19937_64 rng(1);
  const Tensor a = oracle::random_tensor({3, 4}, rng), b = oracle::random_tensor({4, 5}, rng);
  CHECK(oracle::max_rel_err(ops::matmul(a, b).data(), oracle::matmul(oracle::widen(a.data()), oracle::widen(b.data()), 3, 4, 5)) < 1e-6);

  const Tensor x = oracle::random_tensor({2, 3}, rng);
  const Tensor ls = ops::log_softmax(x);
  for (std::size_t r = 0; r < 2; ++r) {
    const Vec p = oracle::softmax({x.at(3 * r), x.at(3 * r + 1), x.at(3 * r + 2)});
    for (std::size_t c = 0; c < 3; ++c) CHECK(ls.at(3 * r + c) == doctest::Approx(static_cast<double>(std::log(p[c]))));
  }
  const Tensor sr = ops::sum_rows(x);
  CHECK(sr.at(1) == doctest::Approx(x.at(3) + x.at(4) + x.at(5)));
  CHECK(ops::l2_norm(Tensor({2}, {3.0f, 4.0f})).item() == doctest::Approx(5.0));
  const std::vector<std::uint32_t> idx = {2, 0};
  const Tensor picked = ops::pick(x, idx);
  CHECK(picked.at(0) == x.at(2));
  CHECK(picked.at(1) == x.at(3));
  CHECK(ops::mean(Tensor({4}, {1, 2, 3, 6})).item() == doctest::Approx(3.0));
}

TEST_CASE("conv2d matches a direct loop oracle") {
  std::mt19937_64 rng(2);
  const Tensor x = oracle::random_tensor({2, 3, 6, 5}, rng);
  const Tensor w = oracle::random_tensor({4, 3, 3, 3}, rng);
  const Tensor b = oracle::random_tensor({4}, rng);
  for (std::size_t stride : {1, 2})
    for (std::size_t pad : {0, 1}) {
      const Tensor y = ops::conv2d(x, w, b, {stride, pad});
      const Vec want = conv_oracle(x, w, b, stride, pad);
      REQUIRE(y.numel() == want.size());
      CHECK(oracle::max_rel_err(y.data(), want) < 1e-5);
    }
}

TEST_CASE("max_pool2d matches a direct loop oracle with floor semantics") {
  std::mt19937_64 rng(3);
  const Tensor x = oracle::random_tensor({1, 2, 5, 5}, rng);
  const Tensor y = ops::max_pool2d(x, 2, 2);
  REQUIRE(y.shape() == Shape{1, 2, 2, 2});
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t oy = 0; oy < 2; ++oy)
      for (std::size_t ox = 0; ox < 2; ++ox) {
        float m = -1e30f;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) m = std::max(m, x.at((c * 5 + 2 * oy + dy) * 5 + 2 * ox + dx));
        CHECK(y.at((c * 2 + oy) * 2 + ox) == m);
      }
}

TEST_CASE("shape errors name the op and both shapes") {
  const Tensor a = Tensor::zeros({2, 3}), b = Tensor::zeros({2, 3});
  try {
    (void)ops::matmul(a, b);
    FAIL("matmul accepted (2,3)x(2,3)");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find(shape_str({2, 3})) != std::string::npos);
  }
  CHECK_THROWS_AS((void)ops::add(a, Tensor::zeros({3, 2})), ShapeError);
  CHECK_THROWS_AS((void)ops::add_row_bias(a, Tensor::zeros({2})), ShapeError);
  CHECK_THROWS_AS((void)ops::conv2d(Tensor::zeros({1, 2, 4, 4}), Tensor::zeros({1, 3, 3, 3}), Tensor::zeros({1}), {}),
                  ShapeError);
  const std::vector<std::uint32_t> bad = {5, 0};
  CHECK_THROWS_AS((void)ops::pick(a, bad), std::out_of_range);
}

TEST_CASE("non-finite outputs raise NumericalError") {
  CHECK_THROWS_AS((void)ops::log(Tensor({2}, {1.0f, 0.0f})), NumericalError);
  CHECK_THROWS_AS((void)ops::exp(Tensor({1}, {1000.0f})), NumericalError);
}

TEST_CASE("no tape, no graph; tapes nest and restore") {
  const Tensor x({2}, {1.0f, 2.0f}, true);
  CHECK(Tape::active() == nullptr);
  (void)ops::mul(x, x);
  {
    Tape outer;
    CHECK(Tape::active() == &outer);
    {
      Tape inner;
      CHECK(Tape::active() == &inner);
    }
    CHECK(Tape::active() == &outer);
    (void)ops::mul(x, x);
    (void)ops::mul(x.detach(), x.detach());  // nothing requires grad
    CHECK(outer.size() == 1);
  }
  CHECK(Tape::active() == nullptr);
}

TEST_CASE("backward accumulates over reused inputs and rejects bad losses") {
  const Tensor x({3}, {1.0f, -2.0f, 0.5f}, true);
  Tape tape;
  const Tensor loss = ops::sum(ops::mul(x, x));
  const auto g = backward(loss, tape);
  for (std::size_t i = 0; i < 3; ++i) CHECK(g.of(x).at(i) == doctest::Approx(2.0 * x.at(i)));
  const Tensor other({3}, {0, 0, 0}, true);
  CHECK_FALSE(g.reached(other));
  CHECK(g.of(other).at(0) == 0.0f);
  CHECK_THROWS_AS(backward(ops::mul(x, x), tape), ShapeError);
  CHECK_THROWS_AS(backward(Tensor::scalar(1.0f), tape), std::invalid_argument);
}

TEST_CASE("gradient checks: elementwise and reductions, 20 random inputs per op") {
  std::mt19937_64 rng(10);
  auto r = [&](Shape s) { return oracle::random_tensor(std::move(s), rng); };
  using V = std::vector<Tensor>;
  for (int rep = 0; rep < 20; ++rep) {
  oracle::check_gradients("matmul", [](const V& v) { return ops::matmul(v[0], v[1]); }, {r({3, 4}), r({4, 2})}, rng);
  oracle::check_gradients("add", [](const V& v) { return ops::add(v[0], v[1]); }, {r({2, 3}), r({2, 3})}, rng);
  oracle::check_gradients("sub", [](const V& v) { return ops::sub(v[0], v[1]); }, {r({2, 3}), r({2, 3})}, rng);
  oracle::check_gradients("mul", [](const V& v) { return ops::mul(v[0], v[1]); }, {r({2, 3}), r({2, 3})}, rng);
  oracle::check_gradients("add_row_bias", [](const V& v) { return ops::add_row_bias(v[0], v[1]); },
                          {r({3, 4}), r({4})}, rng);
  oracle::check_gradients("scale", [](const V& v) { return ops::scale(v[0], -2.5f); }, {r({5})}, rng);
  oracle::check_gradients("sum", [](const V& v) { return ops::sum(v[0]); }, {r({2, 3})}, rng);
  oracle::check_gradients("mean", [](const V& v) { return ops::mean(v[0]); }, {r({2, 3})}, rng);
  oracle::check_gradients("sum_rows", [](const V& v) { return ops::sum_rows(v[0]); }, {r({3, 4})}, rng);
  oracle::check_gradients("log", [](const V& v) { return ops::log(v[0]); },
                          {oracle::random_tensor({6}, rng, 0.5f, 2.0f)}, rng);
  oracle::check_gradients("exp", [](const V& v) { return ops::exp(v[0]); }, {r({6})}, rng);
  oracle::check_gradients("relu", [](const V& v) { return ops::relu(v[0]); }, {oracle::spread_tensor({12}, rng)}, rng);
  oracle::check_gradients("softmax", [](const V& v) { return ops::softmax(v[0]); }, {r({3, 4})}, rng);
  oracle::check_gradients("log_softmax", [](const V& v) { return ops::log_softmax(v[0]); }, {r({3, 4})}, rng);
  oracle::check_gradients("l2_norm", [](const V& v) { return ops::l2_norm(v[0]); }, {r({2, 3})}, rng);
  oracle::check_gradients(
      "pick",
      [](const V& v) {
        const std::vector<std::uint32_t> idx = {1, 0, 3};
        return ops::pick(v[0], idx);
      },
      {r({3, 4})}, rng);
  oracle::check_gradients("reshape", [](const V& v) { return ops::reshape(v[0], {3, 2}); }, {r({2, 3})}, rng);
  oracle::check_gradients("flatten", [](const V& v) { return ops::flatten(v[0]); }, {r({2, 2, 3})}, rng);
  }
}

TEST_CASE("gradient checks: convolution, pooling and a composed network, 20 random inputs each") {
  std::mt19937_64 rng(11);
  using V = std::vector<Tensor>;
  for (int rep = 0; rep < 20; ++rep) {
  for (std::size_t stride : {1, 2})
    for (std::size_t pad : {0, 1})
      oracle::check_gradients(
          "conv2d",
          [=](const V& v) { return ops::conv2d(v[0], v[1], v[2], {stride, pad}); },
          {oracle::random_tensor({2, 2, 5, 5}, rng), oracle::random_tensor({3, 2, 3, 3}, rng),
           oracle::random_tensor({3}, rng)},
          rng);
  oracle::check_gradients("max_pool2d", [](const V& v) { return ops::max_pool2d(v[0], 2, 2); },
                          {oracle::spread_tensor({2, 2, 4, 5}, rng)}, rng);
  const V in = oracle::smooth_composed_inputs(rng);
  oracle::check_gradients(
      "composed",
      [](const V& v) {
        const Tensor h = ops::max_pool2d(ops::relu(ops::conv2d(v[0], v[1], v[2], {1, 1})), 2, 2);
        const Tensor z = ops::add_row_bias(ops::matmul(ops::flatten(h), v[3]), v[4]);
        const std::vector<std::uint32_t> y = {0, 2};
        return ops::mean(ops::scale(ops::pick(ops::log_softmax(z), y), -1.0f));
      },
      in, rng);
  }
}

TEST_CASE("ops are deterministic bit-for-bit") {
  std::mt19937_64 rng(4);
  const Tensor x = oracle::random_tensor({4, 3, 8, 8}, rng), w = oracle::random_tensor({5, 3, 3, 3}, rng),
               b = oracle::random_tensor({5}, rng);
  CHECK(ops::conv2d(x, w, b, {1, 1}).bit_equal(ops::conv2d(x, w, b, {1, 1})));
}
