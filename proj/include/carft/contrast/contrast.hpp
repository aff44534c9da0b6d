// SPDX-License-Identifier: Apache-2.0

#ifndef CARFT_CONTRAST_CONTRAST_HPP_
#define CARFT_CONTRAST_CONTRAST_HPP_

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "carft/autodiff/autodiff.hpp"
#include "carft/common/types.hpp"
#include "carft/model/transformer.hpp"

namespace carft::contrast {

// Positions of one longest common subsequence of a and b, plus the
// complementary positions of each sequence.
struct LcsSplit {
  std::vector<std::size_t> lcs_a, lcs_b;
  std::vector<std::size_t> exc_a, exc_b;
};

// Among maximal solutions picks the lexicographically smallest positions in
// a, then the smallest positions in b.
LcsSplit lcs(std::span<const TokenId> a, std::span<const TokenId> b);

// Sum over rows with mask[i] of
//   -log( exp(<ann_i, roll_i>/tau) / sum_j exp(<ann_i, roll_j>/tau) ),
// j over all rows. Embeddings are [d] vectors. Returns a gradient-free 0
// when no row is selected.
ad::Var masked_infonce_positive(ad::Tape& tape, std::span<const ad::Var> annotated,
                                std::span<const ad::Var> rollout, std::span<const bool> mask,
                                double temperature);

// Sum over rows with mask[i] of
//   -log( exp(<lcs_roll_i, exc_ann_i>/tau) / sum_j exp(<lcs_roll_i, exc_roll_j>/tau) ),
// j over the masked rows only. Unmasked rows may hold invalid Vars.
ad::Var masked_infonce_negative(ad::Tape& tape, std::span<const ad::Var> lcs_rollout,
                                std::span<const ad::Var> exc_annotated,
                                std::span<const ad::Var> exc_rollout, std::span<const bool> mask,
                                double temperature);

struct NegativeEmbeddings {
  ad::Var lcs_annotated, exc_annotated, lcs_rollout, exc_rollout;
};

// Embeds the shared and non-shared parts of two chains of thought. hidden
// and values cover the chain-of-thought positions only. Empty when any of
// the four position sets is empty.
std::optional<NegativeEmbeddings> split_embeddings_negative(
    const model::ParamVars& params, std::span<const TokenId> annotated_cot,
    ad::Var annotated_hidden, ad::Var annotated_values, std::span<const TokenId> rollout_cot,
    ad::Var rollout_hidden, ad::Var rollout_values);

// True when the two chains of thought admit a non-degenerate split.
bool split_usable(std::span<const TokenId> annotated_cot, std::span<const TokenId> rollout_cot);

}  // namespace carft::contrast

#endif  // CARFT_CONTRAST_CONTRAST_HPP_
