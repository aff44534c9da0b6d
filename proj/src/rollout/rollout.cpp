// SPDX-License-Identifier: Apache-2.0

#include "carft/rollout/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "carft/common/error.hpp"
#include "carft/common/random.hpp"
#include "carft/cot_embed/cot_embed.hpp"
#include "carft/model/sampling.hpp"
#include "carft/task/vocab.hpp"

namespace carft::rollout {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw Error("rollout", std::string(what) + " length mismatch: " + std::to_string(a) + " vs " +
                               std::to_string(b));
  }
}

}  // namespace

std::string_view reward_mode_name(RewardMode mode) {
  return mode == RewardMode::fixed ? "fixed" : "embedding";
}

std::optional<RewardMode> parse_reward_mode(std::string_view name) {
  if (name == "fixed") return RewardMode::fixed;
  if (name == "embedding") return RewardMode::embedding;
  return std::nullopt;
}

std::span<const TokenId> Trajectory::generated() const {
  return std::span<const TokenId>(tokens).subspan(prompt_length);
}

std::span<const TokenId> Trajectory::cot() const {
  std::span<const TokenId> g = generated();
  return ended_with_eos ? g.first(g.size() - 1) : g;
}

double terminal_reward(task::Outcome outcome, std::optional<std::span<const double>> annotated,
                       std::optional<std::span<const double>> rollout, RewardMode mode) {
  switch (outcome) {
    case task::Outcome::correct: return 1.0;
    case task::Outcome::unextractable: return 0.0;
    case task::Outcome::wrong_extractable: break;
  }
  if (mode == RewardMode::fixed) return kFixedPartialReward;
  if (!annotated || !rollout) {
    throw Error("rollout", "embedding reward needs both annotated and rollout embeddings");
  }
  const double ip = std::clamp(cot_embed::dot(*annotated, *rollout), -1.0, 1.0);
  // Equal to ip * 0.1 + 0.2, written so the endpoints are exactly 0.1 and 0.3.
  return (ip + 2.0) / 10.0;
}

std::vector<double> token_rewards(double terminal, std::span<const double> old_log_probs,
                                  std::span<const double> ref_log_probs, double beta) {
  require_same_length(old_log_probs.size(), ref_log_probs.size(), "log-prob");
  if (!(beta >= 0.0)) throw Error("rollout", "KL coefficient must be non-negative");
  std::vector<double> out(old_log_probs.size());
  for (std::size_t t = 0; t < out.size(); ++t) {
    out[t] = -beta * (old_log_probs[t] - ref_log_probs[t]);
  }
  if (!out.empty()) out.back() += terminal;
  return out;
}

std::vector<double> gae(std::span<const double> rewards, std::span<const double> values,
                        double gamma, double lambda) {
  require_same_length(rewards.size(), values.size(), "reward/value");
  if (rewards.empty()) throw Error("rollout", "advantage estimation needs at least one step");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw Error("rollout", "gamma must lie in [0, 1]");
  if (!(lambda > 0.0 && lambda <= 1.0)) throw Error("rollout", "lambda must lie in (0, 1]");
  const std::size_t n = rewards.size();
  std::vector<double> adv(n);
  double next_adv = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const double next_value = t + 1 < n ? values[t + 1] : 0.0;
    const double delta = rewards[t] + gamma * next_value - values[t];
    adv[t] = delta + gamma * lambda * next_adv;
    next_adv = adv[t];
  }
  return adv;
}

std::vector<double> returns(std::span<const double> advantages, std::span<const double> values) {
  require_same_length(advantages.size(), values.size(), "advantage/value");
  std::vector<double> out(advantages.size());
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = advantages[t] + values[t];
  return out;
}

std::vector<Trajectory> collect(const model::PolicyParams& params,
                                const model::PolicyParams& reference,
                                std::span<const task::Sample> batch, const RolloutConfig& config,
                                std::uint64_t seed, std::uint64_t step) {
  if (batch.empty()) throw Error("rollout", "empty batch");
  const TokenId eos = task::Vocab::standard().eos();
  std::vector<TokenSeq> prompts;
  std::vector<std::uint64_t> seeds;
  prompts.reserve(batch.size());
  for (std::size_t r = 0; r < batch.size(); ++r) {
    prompts.push_back(batch[r].question_tokens);
    seeds.push_back(derive_seed(seed, {step, r}));
  }
  std::vector<model::Continuation> samples = model::sample_batch(
      params, prompts, config.max_new_tokens, config.temperature, seeds, eos);
  std::vector<TokenSeq> generated;
  generated.reserve(samples.size());
  for (const model::Continuation& c : samples) generated.push_back(c.tokens);
  const std::vector<std::vector<double>> ref_lp =
      model::score_continuations(reference, prompts, generated, config.temperature);

  std::vector<Trajectory> out(batch.size());
  for (std::size_t r = 0; r < batch.size(); ++r) {
    Trajectory& tr = out[r];
    model::Continuation& c = samples[r];
    tr.prompt_length = prompts[r].size();
    tr.tokens = prompts[r];
    tr.tokens.insert(tr.tokens.end(), c.tokens.begin(), c.tokens.end());
    tr.old_log_probs = std::move(c.log_probs);
    tr.ref_log_probs = ref_lp[r];
    tr.values = std::move(c.values);
    tr.ended_with_eos = c.ended_with_eos;
    tr.outcome = task::check(task::extract_answer(tr.cot()), batch[r].answer);

    std::optional<std::vector<double>> e_ann, e_roll;
    if (tr.outcome == task::Outcome::wrong_extractable &&
        config.reward_mode == RewardMode::embedding) {
      e_ann = cot_embed::embed_sequence(params, batch[r].question_tokens, batch[r].cot_tokens);
      e_roll = cot_embed::embed_sequence(params, prompts[r], tr.cot());
    }
    auto as_span = [](const std::optional<std::vector<double>>& v)
        -> std::optional<std::span<const double>> {
      if (!v) return std::nullopt;
      return std::span<const double>(*v);
    };
    tr.terminal_reward = terminal_reward(tr.outcome, as_span(e_ann), as_span(e_roll), config.reward_mode);
    tr.token_rewards = token_rewards(tr.terminal_reward, tr.old_log_probs, tr.ref_log_probs,
                                     config.kl_coef);
    tr.advantages = gae(tr.token_rewards, tr.values, config.gamma, config.lambda);
    tr.returns = returns(tr.advantages, tr.values);
  }
  return out;
}

}  // namespace carft::rollout
