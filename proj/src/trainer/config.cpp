// SPDX-License-Identifier: Apache-2.0

#include "carft/trainer/config.hpp"

#include <cmath>
#include <string>

#include "carft/common/error.hpp"

namespace carft::trainer {

std::string_view signal_mode_name(SignalMode mode) {
  switch (mode) {
    case SignalMode::positive: return "positive";
    case SignalMode::negative: return "negative";
    case SignalMode::none: return "none";
  }
  return "none";
}

std::optional<SignalMode> parse_signal_mode(std::string_view name) {
  if (name == "positive") return SignalMode::positive;
  if (name == "negative") return SignalMode::negative;
  if (name == "none" || name == "reft") return SignalMode::none;
  return std::nullopt;
}

namespace {

void require(bool ok, const char* field, const std::string& reason) {
  if (!ok) throw Error("trainer", std::string(field) + ": " + reason);
}

bool finite(double v) { return std::isfinite(v); }

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  require(finite(kl_coef) && kl_coef >= 0.0, "kl_coef", "must be >= 0");
  require(finite(gamma) && gamma >= 0.0 && gamma <= 1.0, "gamma", "must lie in [0, 1]");
  require(finite(lambda) && lambda > 0.0 && lambda <= 1.0, "lambda", "must lie in (0, 1]");
  require(finite(value_coef) && value_coef >= 0.0, "value_coef", "must be >= 0");
  require(finite(clip_eps) && clip_eps > 0.0 && clip_eps < 1.0, "clip_eps", "must lie in (0, 1)");
  require(finite(contrast_temperature) && contrast_temperature > 0.0, "contrast_temperature",
          "must be > 0");
  require(finite(contrast_coef) && contrast_coef >= 0.0, "contrast_coef", "must be >= 0");
  require(updates_per_step >= 1, "updates_per_step", "must be >= 1");
  require(batch_size >= 1, "batch_size", "must be >= 1");
  require(max_new_tokens >= 1, "max_new_tokens", "must be >= 1");
  require(finite(sample_temperature) && sample_temperature > 0.0, "sample_temperature",
          "must be > 0");
  require(finite(rl_learning_rate) && rl_learning_rate >= 0.0, "rl_learning_rate", "must be >= 0");
  require(sft_batch_size >= 1, "sft_batch_size", "must be >= 1");
  require(finite(sft_learning_rate) && sft_learning_rate >= 0.0, "sft_learning_rate",
          "must be >= 0");
  require(finite(sft_weight_decay) && sft_weight_decay >= 0.0, "sft_weight_decay",
          "must be >= 0");
  require(finite(sft_ema_decay) && sft_ema_decay >= 0.0 && sft_ema_decay < 1.0, "sft_ema_decay",
          "must lie in [0, 1)");
  require(finite(adam_beta1) && adam_beta1 >= 0.0 && adam_beta1 < 1.0, "adam_beta1",
          "must lie in [0, 1)");
  require(finite(adam_beta2) && adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam_beta2",
          "must lie in [0, 1)");
  require(finite(adam_eps) && adam_eps > 0.0, "adam_eps", "must be > 0");
}

rollout::RolloutConfig TrainConfig::rollout_config() const {
  rollout::RolloutConfig r;
  r.max_new_tokens = max_new_tokens;
  r.temperature = sample_temperature;
  r.kl_coef = kl_coef;
  r.gamma = gamma;
  r.lambda = lambda;
  r.reward_mode = reward_mode;
  return r;
}

}  // namespace carft::trainer
