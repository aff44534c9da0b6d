// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "carft/autodiff/autodiff.hpp"
#include "carft/common/error.hpp"
#include "gradient_cases.hpp"
#include "test_util.hpp"

using namespace carft;
using carft::testing::random_array;

TEST_CASE("array construction validates shape and contents") {
  CHECK_THROWS_AS(ad::Array({2, 3}, std::vector<double>(5, 0.0)), Error);
  CHECK_THROWS_AS(ad::Array({2, 0}), Error);
  CHECK_THROWS_AS(ad::Array({1}, std::vector<double>{NAN}), Error);
  const ad::Array a({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  CHECK(a.rank() == 2);
  CHECK(a.last_dim() == 3);
  CHECK(a.outer_size() == 2);
  CHECK_THROWS_AS(a.item(), Error);
  CHECK(ad::Array::scalar(4.0).item() == 4.0);
  CHECK(a.reshaped({3, 2}).dim(0) == 3);
  CHECK_THROWS_AS(a.reshaped({4, 2}), Error);
}

TEST_CASE("every primitive matches finite differences") {
  for (const auto& c : testing::primitive_cases()) {
    CAPTURE(c.name);
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      Rng rng(derive_seed(100, {seed}));
      const ad::Array x = random_array(c.shape, rng, c.lo, c.hi);
      CHECK(ad::grad_check(c.fn, x) < 1e-4);
    }
  }
}

TEST_CASE("matmul forward matches a direct triple loop") {
  Rng rng(5);
  const ad::Array a = random_array({3, 4}, rng);
  const ad::Array b = random_array({4, 2}, rng);
  ad::Tape t;
  const ad::Var y = ad::matmul(t.constant(a), t.constant(b));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 4; ++k) s += a.data()[i * 4 + k] * b.data()[k * 2 + j];
      CHECK(y.value().data()[i * 2 + j] == doctest::Approx(s).epsilon(1e-14));
    }
  }
  CHECK_THROWS_AS(ad::matmul(t.constant(a), t.constant(a)), Error);
}

TEST_CASE("matmul rows do not depend on the other rows in the batch") {
  Rng rng(6);
  const ad::Array a = random_array({5, 7}, rng);
  const ad::Array b = random_array({7, 3}, rng);
  ad::Tape t;
  const ad::Var full = ad::matmul(t.constant(a), t.constant(b));
  const ad::Var row = ad::matmul(ad::slice_rows(t.constant(a), 2, 3), t.constant(b));
  for (std::size_t j = 0; j < 3; ++j) CHECK(full.value().data()[2 * 3 + j] == row.value().data()[j]);
}

TEST_CASE("backward twice gives bit-identical gradients") {
  Rng rng(7);
  ad::Tape t;
  const ad::Var x = t.leaf(random_array({3, 4}, rng));
  const ad::Var loss = ad::sum(ad::square(ad::softmax_last(ad::matmul(x, ad::transpose(x)))));
  t.backward(loss);
  const ad::Array g1 = t.grad(x);
  t.backward(loss);
  CHECK(t.grad(x) == g1);
}

TEST_CASE("backward requires a scalar and unreached nodes get zero gradient") {
  ad::Tape t;
  const ad::Var x = t.leaf(ad::Array({2}, 1.0));
  const ad::Var unused = t.leaf(ad::Array({3}, 2.0));
  CHECK_THROWS_AS(t.backward(x), Error);
  t.backward(ad::sum(x));
  CHECK(t.grad(unused) == ad::Array({3}, 0.0));
  CHECK(t.grad(x) == ad::Array({2}, 1.0));
}

TEST_CASE("bound arrays are read without copying") {
  ad::Array w({2}, std::vector<double>{1.0, 2.0});
  ad::Tape t;
  const ad::Var v = t.bind(w);
  CHECK(&v.value() == &w);
  t.backward(ad::sum(ad::square(v)));
  CHECK(t.grad(v) == ad::Array({2}, std::vector<double>{2.0, 4.0}));
}

TEST_CASE("constants receive no backward closure and no gradient flow") {
  ad::Tape t;
  const ad::Var c = t.constant(ad::Array({2}, 3.0));
  const ad::Var y = ad::sum(ad::exp(c));
  CHECK_FALSE(t.requires_grad(y.id()));
}

TEST_CASE("clip gradient is one on the closed interval and zero outside") {
  ad::Tape t;
  const ad::Var x = t.leaf(ad::Array({4}, std::vector<double>{-2.0, -1.0, 1.0, 2.0}));
  t.backward(ad::sum(ad::clip(x, -1.0, 1.0)));
  CHECK(t.grad(x) == ad::Array({4}, std::vector<double>{0.0, 1.0, 1.0, 0.0}));
}

TEST_CASE("minimum and maximum route ties to the first operand") {
  ad::Tape t;
  const ad::Var a = t.leaf(ad::Array({1}, 1.0));
  const ad::Var b = t.leaf(ad::Array({1}, 1.0));
  t.backward(ad::sum(ad::minimum(a, b)));
  CHECK(t.grad(a).item() == 1.0);
  CHECK(t.grad(b).item() == 0.0);
  t.backward(ad::sum(ad::maximum(b, a)));
  CHECK(t.grad(b).item() == 1.0);
  CHECK(t.grad(a).item() == 0.0);
}

TEST_CASE("softmax rows sum to one and causal mask zeroes future weights") {
  Rng rng(8);
  ad::Tape t;
  const ad::Var p = ad::softmax_last(ad::causal_mask(t.constant(random_array({4, 4}, rng, -3, 3))));
  for (std::size_t i = 0; i < 4; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
      const double v = p.value().data()[i * 4 + j];
      if (j > i) CHECK(v == 0.0);
      s += v;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("log and normalisation reject degenerate inputs") {
  ad::Tape t;
  CHECK_THROWS_AS(ad::log(t.constant(ad::Array({2}, std::vector<double>{1.0, 0.0}))), Error);
  CHECK_THROWS_AS(ad::l2_normalize_last(t.constant(ad::Array({1, 3}, 0.0))), Error);
  CHECK_THROWS_AS(ad::exp(t.constant(ad::Array({1}, 1000.0))), Error);
}

TEST_CASE("elementwise ops reject mismatched shapes") {
  ad::Tape t;
  const ad::Var a = t.constant(ad::Array({2, 3}));
  const ad::Var b = t.constant(ad::Array({3, 2}));
  CHECK_THROWS_AS(ad::add(a, b), Error);
  CHECK_THROWS_AS(ad::inner(a, b), Error);
  CHECK_THROWS_AS(ad::slice_rows(a, 1, 3), Error);
  CHECK_THROWS_AS(ad::causal_mask(a), Error);
}

TEST_CASE("apply_primitive dispatches to the same computation") {
  Rng rng(9);
  const ad::Array a = random_array({3, 4}, rng);
  const ad::Array b = random_array({4, 2}, rng);
  ad::Tape t;
  const ad::Var va = t.constant(a);
  const ad::Var vb = t.constant(b);
  const ad::Var direct = ad::matmul(va, vb);
  const ad::Var inputs[] = {va, vb};
  CHECK(ad::apply_primitive(ad::OpKind::matmul, inputs).value() == direct.value());
  ad::PrimitiveArgs args;
  args.lo = -0.1;
  args.hi = 0.2;
  const ad::Var one[] = {va};
  CHECK(ad::apply_primitive(ad::OpKind::clip, one, args).value() == ad::clip(va, -0.1, 0.2).value());
  CHECK(ad::op_name(ad::OpKind::softmax_last) == "softmax_last");
}

TEST_CASE("grad_check detects a wrong gradient") {
  // A primitive whose backward pass is deliberately wrong by a factor of 2.
  const ad::ScalarFn wrong = [](ad::Tape& t, ad::Var x) {
    const std::size_t ix = x.id();
    ad::Array y({1}, ad::sum(ad::square(x)).value().item());
    const ad::Var out = t.record(ad::OpKind::sum, y, {ix}, [ix](ad::Tape& tp, std::size_t self) {
      const double g = tp.grad_of(self).item();
      const ad::Array& xv = tp.value(ix);
      ad::Array& gx = tp.grad_buffer(ix);
      for (std::size_t i = 0; i < xv.size(); ++i) gx.data()[i] += g * 4.0 * xv.data()[i];
    });
    return out;
  };
  CHECK(ad::grad_check(wrong, ad::Array({3}, std::vector<double>{0.5, -1.0, 2.0})) > 0.1);
}
