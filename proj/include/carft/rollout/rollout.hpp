// SPDX-License-Identifier: Apache-2.0

#ifndef CARFT_ROLLOUT_ROLLOUT_HPP_
#define CARFT_ROLLOUT_ROLLOUT_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "carft/common/types.hpp"
#include "carft/model/params.hpp"
#include "carft/task/dataset.hpp"

namespace carft::rollout {

enum class RewardMode { fixed, embedding };

std::string_view reward_mode_name(RewardMode mode);
std::optional<RewardMode> parse_reward_mode(std::string_view name);

inline constexpr double kFixedPartialReward = 0.1;

struct Trajectory {
  std::size_t prompt_length = 0;
  TokenSeq tokens;  // prompt followed by the generated tokens
  std::vector<double> old_log_probs;
  std::vector<double> ref_log_probs;
  std::vector<double> values;
  std::vector<double> token_rewards;
  std::vector<double> advantages;
  std::vector<double> returns;
  double terminal_reward = 0.0;
  task::Outcome outcome = task::Outcome::unextractable;
  bool ended_with_eos = false;

  std::size_t generated_count() const { return tokens.size() - prompt_length; }
  std::span<const TokenId> generated() const;
  // Generated tokens without a trailing end-of-sequence token.
  std::span<const TokenId> cot() const;
};

// 1 for correct, 0 for unextractable; a wrong but extractable answer earns
// kFixedPartialReward in fixed mode, or a value in [0.1, 0.3] that grows with
// the inner product of the two unit embeddings in embedding mode.
double terminal_reward(task::Outcome outcome, std::optional<std::span<const double>> annotated,
                       std::optional<std::span<const double>> rollout, RewardMode mode);

// -beta * (old - ref) per token, with `terminal` added to the last token.
std::vector<double> token_rewards(double terminal, std::span<const double> old_log_probs,
                                  std::span<const double> ref_log_probs, double beta);

// Generalized advantage estimates with a zero value after the last token.
std::vector<double> gae(std::span<const double> rewards, std::span<const double> values,
                        double gamma, double lambda);

std::vector<double> returns(std::span<const double> advantages, std::span<const double> values);

struct RolloutConfig {
  std::size_t max_new_tokens = 40;
  double temperature = 1.0;
  double kl_coef = 0.05;
  double gamma = 0.95;
  double lambda = 1.0;
  RewardMode reward_mode = RewardMode::embedding;
};

// One sampled continuation per sample. Row r draws from
// Rng(derive_seed(seed, {step, r})).
std::vector<Trajectory> collect(const model::PolicyParams& params,
                                const model::PolicyParams& reference,
                                std::span<const task::Sample> batch, const RolloutConfig& config,
                                std::uint64_t seed, std::uint64_t step);

}  // namespace carft::rollout

#endif  // CARFT_ROLLOUT_ROLLOUT_HPP_
