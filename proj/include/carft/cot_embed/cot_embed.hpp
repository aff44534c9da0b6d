// SPDX-License-Identifier: Apache-2.0

#ifndef CARFT_COT_EMBED_COT_EMBED_HPP_
#define CARFT_COT_EMBED_COT_EMBED_HPP_

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "carft/autodiff/autodiff.hpp"
#include "carft/common/types.hpp"
#include "carft/model/params.hpp"
#include "carft/model/transformer.hpp"

// Chain-of-thought embedding: project each token's hidden state, pool the
// projections with softmax(values) weights, then scale to unit length.
namespace carft::cot_embed {

// hidden [L, d_model], values [L] -> unit vector [d_proj]. `selection`, when
// given, must be non-empty and strictly increasing inside [0, L).
ad::Var embed_cot(const model::ParamVars& params, ad::Var hidden, ad::Var values,
                  std::optional<std::span<const std::size_t>> selection = std::nullopt);

// Untraced form returning the embedding vector.
std::vector<double> embed_cot(const model::PolicyParams& params, const ad::Array& hidden,
                              const ad::Array& values,
                              std::optional<std::span<const std::size_t>> selection = std::nullopt);

// Positions [begin, begin + count) as an index list.
std::vector<std::size_t> span_positions(std::size_t begin, std::size_t count);

// Runs the model on prompt + cot (+ `suffix`) and embeds the cot positions.
std::vector<double> embed_sequence(const model::PolicyParams& params,
                                   std::span<const TokenId> prompt, std::span<const TokenId> cot,
                                   std::span<const TokenId> suffix = {});

double dot(std::span<const double> a, std::span<const double> b);

}  // namespace carft::cot_embed

#endif  // CARFT_COT_EMBED_COT_EMBED_HPP_
