// SPDX-License-Identifier: Apache-2.0

#include "carft/trainer/losses.hpp"

#include <string>
#include <vector>

#include "carft/common/error.hpp"

namespace carft::trainer {

namespace {

ad::Array as_array(std::span<const double> v) {
  return ad::Array({v.size()}, std::vector<double>(v.begin(), v.end()));
}

void require_rank1(ad::Var v, std::size_t n, const char* what) {
  if (v.shape().size() != 1 || v.shape()[0] != n) {
    throw Error("trainer", std::string(what) + " length mismatch: " + ad::shape_string(v.shape()) +
                               " vs " + std::to_string(n));
  }
}

}  // namespace

ad::Var ppo_policy_loss(ad::Var new_log_probs, std::span<const double> old_log_probs,
                        std::span<const double> advantages, double eps) {
  require_rank1(new_log_probs, old_log_probs.size(), "policy loss");
  require_rank1(new_log_probs, advantages.size(), "policy loss");
  ad::Tape& tape = new_log_probs.tape();
  const ad::Var old_lp = tape.constant(as_array(old_log_probs));
  const ad::Var adv = tape.constant(as_array(advantages));
  const ad::Var ratio = ad::exp(ad::sub(new_log_probs, old_lp));
  const ad::Var unclipped = ad::mul(ratio, adv);
  const ad::Var clipped = ad::mul(ad::clip(ratio, 1.0 - eps, 1.0 + eps), adv);
  return ad::scale(ad::mean(ad::minimum(unclipped, clipped)), -1.0);
}

ad::Var ppo_value_loss(ad::Var new_values, std::span<const double> returns,
                       std::span<const double> advantages, double eps) {
  require_rank1(new_values, returns.size(), "value loss");
  require_rank1(new_values, advantages.size(), "value loss");
  ad::Tape& tape = new_values.tape();
  const ad::Var ret = tape.constant(as_array(returns));
  std::vector<double> lo(advantages.size());
  std::vector<double> hi(advantages.size());
  for (std::size_t i = 0; i < advantages.size(); ++i) {
    lo[i] = advantages[i] - eps;
    hi[i] = advantages[i] + eps;
  }
  const std::size_t n = advantages.size();
  const ad::Array lo_arr({n}, std::move(lo));
  const ad::Array hi_arr({n}, std::move(hi));
  const ad::Var unclipped = ad::square(ad::sub(new_values, ret));
  const ad::Var clipped = ad::square(ad::clip(ad::sub(ret, new_values), lo_arr, hi_arr));
  return ad::scale(ad::mean(ad::maximum(unclipped, clipped)), 0.5);
}

ad::Var token_cross_entropy(ad::Var logits, std::span<const std::size_t> targets) {
  if (logits.shape().size() != 2 || logits.shape()[0] != targets.size()) {
    throw Error("trainer", "cross-entropy logits " + ad::shape_string(logits.shape()) +
                               " do not match " + std::to_string(targets.size()) + " targets");
  }
  return ad::scale(ad::mean(ad::gather_last(ad::log_softmax_last(logits), targets)), -1.0);
}

}  // namespace carft::trainer
