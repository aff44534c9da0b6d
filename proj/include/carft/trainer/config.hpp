// SPDX-License-Identifier: Apache-2.0

#ifndef CARFT_TRAINER_CONFIG_HPP_
#define CARFT_TRAINER_CONFIG_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

#include "carft/model/params.hpp"
#include "carft/rollout/rollout.hpp"

namespace carft::trainer {

// Which contrastive term joins the PPO loss. `none` is plain reinforced
// fine-tuning.
enum class SignalMode { positive, negative, none };

std::string_view signal_mode_name(SignalMode mode);
// Accepts positive, negative, none, and reft as an alias of none.
std::optional<SignalMode> parse_signal_mode(std::string_view name);

struct TrainConfig {
  model::ModelConfig model;

  // Reinforcement stage.
  double kl_coef = 0.05;
  double gamma = 0.95;
  double lambda = 1.0;
  double value_coef = 5.0;
  double clip_eps = 0.2;
  double contrast_temperature = 0.2;
  double contrast_coef = 1e-3;
  std::size_t updates_per_step = 2;
  std::size_t rl_steps = 300;
  std::size_t batch_size = 16;
  SignalMode signal_mode = SignalMode::positive;
  rollout::RewardMode reward_mode = rollout::RewardMode::embedding;
  std::size_t max_new_tokens = 64;
  double sample_temperature = 1.0;
  double rl_learning_rate = 1e-5;

  // Supervised stage.
  std::size_t sft_epochs = 20;
  std::size_t sft_batch_size = 4;
  double sft_learning_rate = 2e-3;
  double sft_weight_decay = 0.1;
  double sft_ema_decay = 0.99;  // 0 keeps the last iterate

  // Adam.
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  std::uint64_t seed = 1;
  std::size_t eval_interval = 50;        // 0 disables periodic evaluation
  std::size_t checkpoint_interval = 0;   // 0 disables periodic checkpoints

  // Throws Error("trainer", ...) naming the offending field.
  void validate() const;

  rollout::RolloutConfig rollout_config() const;
};

}  // namespace carft::trainer

#endif  // CARFT_TRAINER_CONFIG_HPP_
