// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "carft/common/error.hpp"
#include "carft/cot_embed/cot_embed.hpp"
#include "carft/model/params.hpp"
#include "test_util.hpp"

using namespace carft;
using testing::random_array;

namespace {

model::ModelConfig small_config() {
  model::ModelConfig c;
  c.vocab_size = 21;
  c.d_model = 8;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_ff = 16;
  c.max_seq_len = 32;
  c.d_proj = 4;
  return c;
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Oracle: affine projection of one hidden row, computed directly.
std::vector<double> project(const model::PolicyParams& p, const ad::Array& hidden, std::size_t row) {
  const std::size_t d = p.config.d_model;
  const std::size_t k = p.config.d_proj;
  std::vector<double> out(k);
  for (std::size_t j = 0; j < k; ++j) {
    double s = p.weights.proj_bias.data()[j];
    for (std::size_t i = 0; i < d; ++i) {
      s += hidden.data()[row * d + i] * p.weights.proj_weight.data()[i * k + j];
    }
    out[j] = s;
  }
  return out;
}

std::vector<double> normalized(std::vector<double> v) {
  const double n = norm(v);
  for (double& x : v) x /= n;
  return v;
}

}  // namespace

TEST_CASE("pooling weights follow softmax of the values") {
  const auto p = model::init_params(small_config(), 1);
  Rng rng(1);
  const ad::Array hidden = random_array({2, 8}, rng);
  const auto p0 = project(p, hidden, 0);
  const auto p1 = project(p, hidden, 1);

  SUBCASE("equal values give the normalised mean") {
    const auto e = cot_embed::embed_cot(p, hidden, ad::Array({2}, 0.3));
    std::vector<double> mean(4);
    for (std::size_t j = 0; j < 4; ++j) mean[j] = 0.5 * (p0[j] + p1[j]);
    const auto want = normalized(mean);
    for (std::size_t j = 0; j < 4; ++j) CHECK(e[j] == doctest::Approx(want[j]).epsilon(1e-12));
  }
  SUBCASE("values 0 and ln 3 weight the rows 1:3") {
    const auto e = cot_embed::embed_cot(p, hidden, ad::Array({2}, std::vector<double>{0.0, std::log(3.0)}));
    std::vector<double> mix(4);
    for (std::size_t j = 0; j < 4; ++j) mix[j] = 0.25 * p0[j] + 0.75 * p1[j];
    const auto want = normalized(mix);
    for (std::size_t j = 0; j < 4; ++j) CHECK(e[j] == doctest::Approx(want[j]).epsilon(1e-12));
  }
  SUBCASE("a single row is its normalised projection") {
    const std::size_t sel[] = {1};
    const auto e = cot_embed::embed_cot(p, hidden, ad::Array({2}, 0.0), std::span<const std::size_t>(sel));
    const auto want = normalized(p1);
    for (std::size_t j = 0; j < 4; ++j) CHECK(e[j] == doctest::Approx(want[j]).epsilon(1e-12));
  }
}

TEST_CASE("embeddings are unit length and shift invariant in the values") {
  const auto p = model::init_params(small_config(), 2);
  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    Rng rng(derive_seed(2, {trial}));
    const std::size_t len = 1 + rng.below(9);
    const ad::Array hidden = random_array({len, 8}, rng, -2, 2);
    const ad::Array values = random_array({len}, rng, -3, 3);
    ad::Array shifted = values;
    for (double& v : shifted.data()) v += 5.0;
    const auto e = cot_embed::embed_cot(p, hidden, values);
    const auto f = cot_embed::embed_cot(p, hidden, shifted);
    CHECK(std::abs(norm(e) - 1.0) < 1e-9);
    for (std::size_t j = 0; j < e.size(); ++j) CHECK(std::abs(e[j] - f[j]) < 1e-10);
  }
}

TEST_CASE("selection is validated") {
  const auto p = model::init_params(small_config(), 3);
  Rng rng(3);
  const ad::Array hidden = random_array({3, 8}, rng);
  const ad::Array values({3}, 0.0);
  const std::vector<std::size_t> empty;
  const std::vector<std::size_t> unordered = {2, 1};
  const std::vector<std::size_t> outside = {0, 3};
  using Sel = std::span<const std::size_t>;
  CHECK_THROWS_AS(cot_embed::embed_cot(p, hidden, values, Sel(empty)), Error);
  CHECK_THROWS_AS(cot_embed::embed_cot(p, hidden, values, Sel(unordered)), Error);
  CHECK_THROWS_AS(cot_embed::embed_cot(p, hidden, values, Sel(outside)), Error);
}

TEST_CASE("a zero pooled vector is reported as degenerate") {
  auto p = model::init_params(small_config(), 4);
  p.weights.proj_weight = ad::Array({8, 4}, 0.0);
  Rng rng(4);
  try {
    cot_embed::embed_cot(p, random_array({2, 8}, rng), ad::Array({2}, 0.0));
    FAIL("expected rejection");
  } catch (const Error& e) {
    CHECK(std::string(e.message()).find("degenerate") != std::string::npos);
  }
}

TEST_CASE("identical token sequences embed identically and inner products stay in [-1, 1]") {
  const auto p = model::init_params(small_config(), 5);
  const TokenSeq q = {18, 17, 3, 12, 4};
  const TokenSeq cot = {3, 12, 4, 14, 7};
  const TokenSeq other = {9, 13, 9, 14, 8, 11};
  const auto a = cot_embed::embed_sequence(p, q, cot);
  const auto b = cot_embed::embed_sequence(p, q, cot);
  CHECK(a == b);
  const double ip = cot_embed::dot(a, cot_embed::embed_sequence(p, q, other));
  CHECK(ip >= -1.0);
  CHECK(ip <= 1.0);
  CHECK_THROWS_AS(cot_embed::embed_sequence(p, q, TokenSeq{}), Error);
}

TEST_CASE("gradient of the embedding inner product w.r.t. the projection matches finite differences") {
  const auto params = model::init_params(small_config(), 6);
  const std::vector<TokenSeq> ann = {TokenSeq{18, 3, 12, 4, 14, 7}};
  const std::vector<TokenSeq> roll = {TokenSeq{18, 3, 12, 4, 14, 8, 8}};
  const auto span_of = [](std::size_t n) { return cot_embed::span_positions(1, n - 1); };
  const ad::ScalarFn f = [&](ad::Tape& t, ad::Var proj) {
    model::ParamVars p = model::bind_params(t, params, false);
    p.proj_weight = proj;
    const auto fa = model::forward(t, params.config, p, ann);
    const auto fr = model::forward(t, params.config, p, roll);
    const auto sa = span_of(ann[0].size());
    const auto sr = span_of(roll[0].size());
    const ad::Var ea = cot_embed::embed_cot(p, fa.hidden, fa.values, std::span<const std::size_t>(sa));
    const ad::Var er = cot_embed::embed_cot(p, fr.hidden, fr.values, std::span<const std::size_t>(sr));
    return ad::inner(ea, er);
  };
  CHECK(ad::grad_check(f, params.weights.proj_weight) < 1e-4);
}
