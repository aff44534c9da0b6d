// SPDX-License-Identifier: Apache-2.0

#include "carft/cot_embed/cot_embed.hpp"

#include <string>

#include "carft/common/error.hpp"

namespace carft::cot_embed {

ad::Var embed_cot(const model::ParamVars& params, ad::Var hidden, ad::Var values,
                  std::optional<std::span<const std::size_t>> selection) {
  if (hidden.shape().size() != 2 || values.shape().size() != 1 ||
      hidden.shape()[0] != values.shape()[0]) {
    throw Error("cot_embed", "hidden " + ad::shape_string(hidden.shape()) + " and values " +
                                 ad::shape_string(values.shape()) + " do not align");
  }
  const std::size_t length = hidden.shape()[0];
  if (selection) {
    if (selection->empty()) throw Error("cot_embed", "empty position selection");
    for (std::size_t i = 0; i < selection->size(); ++i) {
      const std::size_t p = (*selection)[i];
      if (p >= length) throw Error("cot_embed", "selected position " + std::to_string(p) + " out of range");
      if (i > 0 && p <= (*selection)[i - 1]) {
        throw Error("cot_embed", "selection must be strictly increasing");
      }
    }
    if (selection->size() != length) {
      hidden = ad::gather_rows(hidden, *selection);
      values = ad::gather_rows(values, *selection);
    }
  }
  const std::size_t n = hidden.shape()[0];
  ad::Var weights = ad::softmax_last(ad::reshape(values, {1, n}));
  ad::Var pooled = ad::matmul(weights, model::projection_head(params, hidden));
  const double norm_sq = [&] {
    double s = 0.0;
    for (double v : pooled.value().data()) s += v * v;
    return s;
  }();
  if (!(norm_sq > 0.0)) throw Error("cot_embed", "degenerate embedding: pooled vector has zero norm");
  const std::size_t d = pooled.shape()[1];
  return ad::reshape(ad::l2_normalize_last(pooled), {d});
}

std::vector<double> embed_cot(const model::PolicyParams& params, const ad::Array& hidden,
                              const ad::Array& values,
                              std::optional<std::span<const std::size_t>> selection) {
  ad::Tape tape;
  const model::ParamVars p = model::bind_params(tape, params, false);
  ad::Var e = embed_cot(p, tape.constant(hidden), tape.constant(values), selection);
  const auto data = e.value().data();
  return {data.begin(), data.end()};
}

std::vector<std::size_t> span_positions(std::size_t begin, std::size_t count) {
  std::vector<std::size_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = begin + i;
  return out;
}

std::vector<double> embed_sequence(const model::PolicyParams& params,
                                   std::span<const TokenId> prompt, std::span<const TokenId> cot,
                                   std::span<const TokenId> suffix) {
  if (cot.empty()) throw Error("cot_embed", "empty chain-of-thought span");
  TokenSeq seq(prompt.begin(), prompt.end());
  seq.insert(seq.end(), cot.begin(), cot.end());
  seq.insert(seq.end(), suffix.begin(), suffix.end());
  ad::Tape tape;
  const model::ParamVars p = model::bind_params(tape, params, false);
  const model::ForwardVars f = model::forward(tape, params.config, p, std::span<const TokenSeq>(&seq, 1));
  const std::vector<std::size_t> pos = span_positions(prompt.size(), cot.size());
  ad::Var e = embed_cot(p, f.hidden, f.values, std::span<const std::size_t>(pos));
  const auto data = e.value().data();
  return {data.begin(), data.end()};
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("cot_embed", "dot of vectors with different lengths");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace carft::cot_embed
