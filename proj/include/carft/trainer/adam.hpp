// SPDX-License-Identifier: Apache-2.0

#ifndef CARFT_TRAINER_ADAM_HPP_
#define CARFT_TRAINER_ADAM_HPP_

#include <cstdint>

#include "carft/autodiff/array.hpp"
#include "carft/model/params.hpp"

namespace carft::trainer {

struct AdamState {
  model::ParamSet<ad::Array> first_moment;
  model::ParamSet<ad::Array> second_moment;
  std::uint64_t step = 0;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Decoupled decay on matrices, applied after the moment update.
  double weight_decay = 0.0;
};

AdamState make_adam_state(const model::PolicyParams& params);

// In-place bias-corrected Adam update. Rank-2 arrays are then shrunk by
// learning_rate * weight_decay.
void adam_step(model::PolicyParams& params, const model::ParamSet<ad::Array>& gradients,
               AdamState& state, const AdamConfig& config);

}  // namespace carft::trainer

#endif  // CARFT_TRAINER_ADAM_HPP_
