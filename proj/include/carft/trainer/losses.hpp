// SPDX-License-Identifier: Apache-2.0

#ifndef CARFT_TRAINER_LOSSES_HPP_
#define CARFT_TRAINER_LOSSES_HPP_

#include <cstddef>
#include <span>

#include "carft/autodiff/autodiff.hpp"

namespace carft::trainer {

// -mean(min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A)), ratio = exp(new - old).
ad::Var ppo_policy_loss(ad::Var new_log_probs, std::span<const double> old_log_probs,
                        std::span<const double> advantages, double eps);

// 0.5 * mean(max((V - R)^2, clip(R - V, A - eps, A + eps)^2)).
ad::Var ppo_value_loss(ad::Var new_values, std::span<const double> returns,
                       std::span<const double> advantages, double eps);

// Mean of -log softmax(logits[r])[targets[r]] over rows of [N, vocab] logits.
ad::Var token_cross_entropy(ad::Var logits, std::span<const std::size_t> targets);

}  // namespace carft::trainer

#endif  // CARFT_TRAINER_LOSSES_HPP_
