// SPDX-License-Identifier: Apache-2.0

#ifndef CARFT_MODEL_SAMPLING_HPP_
#define CARFT_MODEL_SAMPLING_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "carft/common/random.hpp"
#include "carft/common/types.hpp"
#include "carft/model/params.hpp"

namespace carft::model {

struct Continuation {
  TokenSeq tokens;                // generated tokens, including a final EOS if produced
  std::vector<double> log_probs;  // log pi(token_t | prefix) at the sampling temperature
  std::vector<double> values;     // value estimate of the state each token was drawn from
  bool ended_with_eos = false;
};

// log softmax(logits / temperature) for one row.
std::vector<double> tempered_log_softmax(std::span<const double> logits, double temperature);

// Draws an index from exp(log_probs) by inverse CDF on one uniform variate.
std::size_t sample_index(std::span<const double> log_probs, Rng& rng);

// Lowest index among the maxima.
std::size_t argmax(std::span<const double> values);

Continuation sample_continuation(const PolicyParams& params, std::span<const TokenId> prompt,
                                 std::size_t max_new, double temperature, std::uint64_t seed,
                                 TokenId eos);

// Row r is decoded with its own Rng(seeds[r]); results equal per-row
// sample_continuation calls.
std::vector<Continuation> sample_batch(const PolicyParams& params,
                                       std::span<const TokenSeq> prompts, std::size_t max_new,
                                       double temperature, std::span<const std::uint64_t> seeds,
                                       TokenId eos);

TokenSeq greedy_decode(const PolicyParams& params, std::span<const TokenId> prompt,
                       std::size_t max_new, TokenId eos);

std::vector<TokenSeq> greedy_batch(const PolicyParams& params, std::span<const TokenSeq> prompts,
                                   std::size_t max_new, TokenId eos);

// log pi(continuation_t | prompt, continuation_<t) at `temperature` for every
// row; rows may differ in length.
std::vector<std::vector<double>> score_continuations(const PolicyParams& params,
                                                     std::span<const TokenSeq> prompts,
                                                     std::span<const TokenSeq> continuations,
                                                     double temperature);

}  // namespace carft::model

#endif  // CARFT_MODEL_SAMPLING_HPP_
