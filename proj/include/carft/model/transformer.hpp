// SPDX-License-Identifier: Apache-2.0

#ifndef CARFT_MODEL_TRANSFORMER_HPP_
#define CARFT_MODEL_TRANSFORMER_HPP_

#include <cstddef>
#include <span>

#include "carft/autodiff/autodiff.hpp"
#include "carft/common/types.hpp"
#include "carft/model/params.hpp"

namespace carft::model {

using ParamVars = ParamSet<ad::Var>;

// Puts every parameter array on the tape by reference (no copy).
ParamVars bind_params(ad::Tape& tape, const PolicyParams& params, bool trainable);

// Traced forward over `rows` (all of equal length). Outputs are flattened
// over batch*length rows in row-major order.
struct ForwardVars {
  ad::Var logits;  // [batch*length, vocab]
  ad::Var values;  // [batch*length]
  ad::Var hidden;  // [batch*length, d_model]
  std::size_t batch = 0;
  std::size_t length = 0;
};

ForwardVars forward(ad::Tape& tape, const ModelConfig& config, const ParamVars& params,
                    std::span<const TokenSeq> rows);

// Scalar value per hidden row: [n, d_model] -> [n].
ad::Var value_head(const ParamVars& params, ad::Var hidden);
// Affine projection per hidden row: [n, d_model] -> [n, d_proj].
ad::Var projection_head(const ParamVars& params, ad::Var hidden);

struct ForwardOutput {
  ad::Array logits;  // [batch, length, vocab]
  ad::Array values;  // [batch, length]
  ad::Array hidden;  // [batch, length, d_model]
};

// Untraced convenience wrapper around the traced forward.
ForwardOutput forward(const PolicyParams& params, std::span<const TokenSeq> rows);

// Throws unless every row is non-empty, rows share a length no greater than
// max_seq_len, and every id is inside the vocabulary.
void check_rows(const ModelConfig& config, std::span<const TokenSeq> rows);

}  // namespace carft::model

#endif  // CARFT_MODEL_TRANSFORMER_HPP_
