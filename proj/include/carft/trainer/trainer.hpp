// SPDX-License-Identifier: Apache-2.0

#ifndef CARFT_TRAINER_TRAINER_HPP_
#define CARFT_TRAINER_TRAINER_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "carft/model/params.hpp"
#include "carft/rollout/rollout.hpp"
#include "carft/task/dataset.hpp"
#include "carft/trainer/adam.hpp"
#include "carft/trainer/config.hpp"

namespace carft::trainer {

// Cross-entropy over the chain-of-thought and end-of-sequence positions of
// question + cot + eos, averaged over those tokens.
double sft_loss(const model::PolicyParams& params, std::span<const task::Sample> batch,
                model::ParamSet<ad::Array>* gradients = nullptr);

// One shuffled pass over `data`; returns the mean of the minibatch losses.
// When `average` is given it is moved toward the weights after every step
// with decay config.sft_ema_decay.
double sft_epoch(model::PolicyParams& params, AdamState& state, std::span<const task::Sample> data,
                 const TrainConfig& config, std::uint64_t epoch,
                 model::ParamSet<ad::Array>* average = nullptr);

struct RlMetrics {
  std::size_t step = 0;
  double loss_total = 0.0;
  double loss_policy = 0.0;
  double loss_value = 0.0;
  double loss_contrast = 0.0;
  double mean_terminal_reward = 0.0;
  double frac_correct = 0.0;
  double frac_extractable = 0.0;
  std::size_t contrast_rows = 0;  // rows selected by the active mask
  std::optional<double> eval_accuracy;
};

struct UpdateLosses {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double contrast = 0.0;
};

// Loss (and optionally gradients) of one inner update for fixed rollouts.
UpdateLosses rl_loss(const model::PolicyParams& params, std::span<const task::Sample> batch,
                     std::span<const rollout::Trajectory> trajectories, const TrainConfig& config,
                     model::ParamSet<ad::Array>* gradients = nullptr);

// Rows that feed the contrastive term under `mode`.
std::vector<bool> contrast_mask(SignalMode mode, std::span<const task::Sample> batch,
                                std::span<const rollout::Trajectory> trajectories);

// Collects rollouts for `batch`, then runs updates_per_step optimizer
// updates. Reported losses come from the first update.
RlMetrics rl_step(model::PolicyParams& params, AdamState& state,
                  const model::PolicyParams& reference, std::span<const task::Sample> batch,
                  const TrainConfig& config, std::size_t step);

// Fraction of samples whose greedy decode yields the gold answer.
double evaluate(const model::PolicyParams& params, std::span<const task::Sample> samples,
                std::size_t max_new_tokens);

// Same, decoding by sampling at `temperature`.
double evaluate_sampled(const model::PolicyParams& params, std::span<const task::Sample> samples,
                        std::size_t max_new_tokens, double temperature, std::uint64_t seed);

struct TrainOutputs {
  std::string metrics_path;     // empty: no metrics file
  std::string checkpoint_path;  // empty: no checkpoints
  std::string config_echo;      // written verbatim into the metrics header
};

struct TrainResult {
  model::PolicyParams params;
  model::PolicyParams reference;
  std::vector<double> sft_losses;
  double sft_greedy_accuracy = 0.0;
  double sft_sampled_accuracy = 0.0;
  std::vector<RlMetrics> history;
};

// Supervised warm-up starting from `init` (or a seeded initialization), then
// reinforced fine-tuning against a frozen copy of the warm-up result.
TrainResult train(const TrainConfig& config, std::span<const task::Sample> train_set,
                  std::span<const task::Sample> test_set, const TrainOutputs& outputs = {},
                  std::optional<model::PolicyParams> init = std::nullopt,
                  bool run_sft = true);

}  // namespace carft::trainer

#endif  // CARFT_TRAINER_TRAINER_HPP_
