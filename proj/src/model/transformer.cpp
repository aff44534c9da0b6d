// SPDX-License-Identifier: Apache-2.0

#include "carft/model/transformer.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "carft/common/error.hpp"

namespace carft::model {

namespace {

ad::Var affine_norm(ad::Var x, ad::Var gain, ad::Var bias) {
  const std::size_t n = x.shape()[0];
  return ad::add(ad::mul(ad::layer_norm_last(x), ad::broadcast_rows(gain, n)),
                 ad::broadcast_rows(bias, n));
}

ad::Var linear(ad::Var x, ad::Var weight, ad::Var bias) {
  return ad::add(ad::matmul(x, weight), ad::broadcast_rows(bias, x.shape()[0]));
}

ad::Var attention(const ModelConfig& cfg, ad::Var q, ad::Var k, ad::Var v, std::size_t batch,
                  std::size_t length) {
  const std::size_t hd = cfg.head_dim();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<ad::Var> rows;
  rows.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t r0 = b * length;
    const std::size_t r1 = r0 + length;
    ad::Var qb = batch == 1 ? q : ad::slice_rows(q, r0, r1);
    ad::Var kb_t = ad::transpose(batch == 1 ? k : ad::slice_rows(k, r0, r1));
    ad::Var vb = batch == 1 ? v : ad::slice_rows(v, r0, r1);
    std::vector<ad::Var> heads;
    heads.reserve(cfg.n_heads);
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
      const std::size_t c0 = h * hd;
      const std::size_t c1 = c0 + hd;
      ad::Var scores = ad::scale(
          ad::matmul(ad::slice_cols(qb, c0, c1), ad::slice_rows(kb_t, c0, c1)), inv_sqrt);
      ad::Var weights = ad::softmax_last(ad::causal_mask(scores));
      heads.push_back(ad::matmul(weights, ad::slice_cols(vb, c0, c1)));
    }
    rows.push_back(cfg.n_heads == 1 ? heads[0] : ad::concat_cols(heads));
  }
  return batch == 1 ? rows[0] : ad::concat_rows(rows);
}

}  // namespace

ParamVars bind_params(ad::Tape& tape, const PolicyParams& params, bool trainable) {
  return map_params<ad::Var>(params.weights,
                             [&](const ad::Array& a) { return tape.bind(a, trainable); });
}

void check_rows(const ModelConfig& config, std::span<const TokenSeq> rows) {
  if (rows.empty()) throw Error("model", "empty batch");
  const std::size_t length = rows[0].size();
  if (length == 0) throw Error("model", "empty token row");
  if (length > config.max_seq_len) {
    throw Error("model", "input length " + std::to_string(length) + " exceeds max_seq_len " +
                             std::to_string(config.max_seq_len));
  }
  for (const TokenSeq& row : rows) {
    if (row.size() != length) throw Error("model", "rows of unequal length in batch");
    for (TokenId id : row) {
      if (id < 0 || static_cast<std::size_t>(id) >= config.vocab_size) {
        throw Error("model", "token id " + std::to_string(id) + " outside vocabulary");
      }
    }
  }
}

ForwardVars forward(ad::Tape& tape, const ModelConfig& config, const ParamVars& p,
                    std::span<const TokenSeq> rows) {
  (void)tape;
  check_rows(config, rows);
  const std::size_t batch = rows.size();
  const std::size_t length = rows[0].size();
  std::vector<std::size_t> ids;
  std::vector<std::size_t> positions;
  ids.reserve(batch * length);
  positions.reserve(batch * length);
  for (const TokenSeq& row : rows) {
    for (std::size_t t = 0; t < length; ++t) {
      ids.push_back(static_cast<std::size_t>(row[t]));
      positions.push_back(t);
    }
  }
  ad::Var x = ad::add(ad::gather_rows(p.token_embedding, ids),
                      ad::gather_rows(p.position_embedding, positions));
  for (const LayerSet<ad::Var>& layer : p.layers) {
    ad::Var h = affine_norm(x, layer.ln1_gain, layer.ln1_bias);
    ad::Var attn = attention(config, ad::matmul(h, layer.w_query), ad::matmul(h, layer.w_key),
                             ad::matmul(h, layer.w_value), batch, length);
    x = ad::add(x, ad::matmul(attn, layer.w_out));
    ad::Var h2 = affine_norm(x, layer.ln2_gain, layer.ln2_bias);
    ad::Var ff = ad::gelu(linear(h2, layer.w_ff_in, layer.b_ff_in));
    x = ad::add(x, linear(ff, layer.w_ff_out, layer.b_ff_out));
  }
  ForwardVars out;
  out.hidden = affine_norm(x, p.final_gain, p.final_bias);
  out.logits = ad::matmul(out.hidden, p.lm_head);
  out.values = value_head(p, out.hidden);
  out.batch = batch;
  out.length = length;
  return out;
}

ad::Var value_head(const ParamVars& p, ad::Var hidden) {
  const std::size_t n = hidden.shape()[0];
  return ad::reshape(linear(hidden, p.value_weight, p.value_bias), {n});
}

ad::Var projection_head(const ParamVars& p, ad::Var hidden) {
  return linear(hidden, p.proj_weight, p.proj_bias);
}

ForwardOutput forward(const PolicyParams& params, std::span<const TokenSeq> rows) {
  ad::Tape tape;
  const ParamVars p = bind_params(tape, params, false);
  const ForwardVars f = forward(tape, params.config, p, rows);
  const std::size_t b = f.batch;
  const std::size_t l = f.length;
  ForwardOutput out;
  out.logits = f.logits.value().reshaped({b, l, params.config.vocab_size});
  out.values = f.values.value().reshaped({b, l});
  out.hidden = f.hidden.value().reshaped({b, l, params.config.d_model});
  return out;
}

}  // namespace carft::model
