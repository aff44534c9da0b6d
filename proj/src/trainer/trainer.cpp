// SPDX-License-Identifier: Apache-2.0

#include "carft/trainer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "carft/common/error.hpp"
#include "carft/common/random.hpp"
#include "carft/contrast/contrast.hpp"
#include "carft/cot_embed/cot_embed.hpp"
#include "carft/model/checkpoint.hpp"
#include "carft/model/sampling.hpp"
#include "carft/model/transformer.hpp"
#include "carft/task/vocab.hpp"
#include "carft/trainer/losses.hpp"
#include "carft/trainer/metrics.hpp"

namespace carft::trainer {

namespace {

// Seed streams derived from the run seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kSftStream = 2;
constexpr std::uint64_t kRolloutStream = 3;
constexpr std::uint64_t kBatchStream = 4;
constexpr std::uint64_t kEvalStream = 5;

constexpr std::size_t kEvalChunk = 64;

TokenId eos_id() { return task::Vocab::standard().eos(); }

// Right-pads rows with end-of-sequence tokens to a common width.
std::size_t pad_rows(std::vector<TokenSeq>& rows) {
  std::size_t width = 0;
  for (const TokenSeq& r : rows) width = std::max(width, r.size());
  for (TokenSeq& r : rows) r.resize(width, eos_id());
  return width;
}

model::ParamSet<ad::Array> collect_grads(ad::Tape& tape, const model::ParamVars& vars) {
  return model::map_params<ad::Array>(vars, [&](const ad::Var& v) { return tape.grad(v); });
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw Error("trainer", std::string("non-finite ") + what);
}

AdamConfig adam_config(const TrainConfig& c, double lr) {
  return AdamConfig{lr, c.adam_beta1, c.adam_beta2, c.adam_eps};
}

void update_average(model::ParamSet<ad::Array>& average,
                    const model::ParamSet<ad::Array>& weights, double decay) {
  std::vector<ad::Array*> dst = model::param_list(average);
  std::vector<const ad::Array*> src = model::param_list(weights);
  if (dst.size() != src.size()) throw Error("trainer", "weight average does not mirror the parameters");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i]->shape() != src[i]->shape()) {
      throw Error("trainer", "weight average does not mirror the parameters");
    }
    auto d = dst[i]->data();
    auto s = src[i]->data();
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = decay * d[k] + (1.0 - decay) * s[k];
  }
}

// Embeds rows of `hidden`/`values` at `positions` (flattened batch layout).
ad::Var embed_rows(const model::ParamVars& p, const model::ForwardVars& f,
                   const std::vector<std::size_t>& positions) {
  return cot_embed::embed_cot(p, ad::gather_rows(f.hidden, positions),
                              ad::gather_rows(f.values, positions));
}

std::vector<std::size_t> row_span(std::size_t row, std::size_t width, std::size_t begin,
                                  std::size_t count) {
  return cot_embed::span_positions(row * width + begin, count);
}

// Contiguous bool storage, which std::vector<bool> does not provide.
class Flags {
 public:
  explicit Flags(const std::vector<bool>& bits) : n_(bits.size()), data_(new bool[bits.size()]) {
    for (std::size_t i = 0; i < n_; ++i) data_[i] = bits[i];
  }
  std::span<const bool> view() const { return {data_.get(), n_}; }

 private:
  std::size_t n_;
  std::unique_ptr<bool[]> data_;
};

struct AnnotatedForward {
  model::ForwardVars f;
  std::size_t width = 0;
  std::vector<std::size_t> slot;  // batch row -> annotated row
};

AnnotatedForward annotated_forward(ad::Tape& tape, const model::PolicyParams& params,
                                   const model::ParamVars& p, std::span<const task::Sample> batch,
                                   const std::vector<bool>& mask) {
  AnnotatedForward a;
  a.slot.assign(batch.size(), 0);
  std::vector<TokenSeq> rows;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!mask[i]) continue;
    a.slot[i] = rows.size();
    TokenSeq s = batch[i].question_tokens;
    s.insert(s.end(), batch[i].cot_tokens.begin(), batch[i].cot_tokens.end());
    rows.push_back(std::move(s));
  }
  a.width = pad_rows(rows);
  a.f = model::forward(tape, params.config, p, rows);
  return a;
}

}  // namespace

double sft_loss(const model::PolicyParams& params, std::span<const task::Sample> batch,
                model::ParamSet<ad::Array>* gradients) {
  if (batch.empty()) throw Error("trainer", "empty supervised batch");
  std::vector<TokenSeq> rows;
  std::vector<std::size_t> prompt_lens;
  std::vector<std::size_t> lens;
  for (const task::Sample& s : batch) {
    TokenSeq seq = s.question_tokens;
    seq.insert(seq.end(), s.cot_tokens.begin(), s.cot_tokens.end());
    seq.push_back(eos_id());
    prompt_lens.push_back(s.question_tokens.size());
    lens.push_back(seq.size());
    rows.push_back(std::move(seq));
  }
  std::vector<TokenSeq> padded = rows;
  const std::size_t width = pad_rows(padded);
  std::vector<std::size_t> positions;
  std::vector<std::size_t> targets;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t t = prompt_lens[r]; t < lens[r]; ++t) {
      positions.push_back(r * width + t - 1);
      targets.push_back(static_cast<std::size_t>(rows[r][t]));
    }
  }
  ad::Tape tape;
  const model::ParamVars p = model::bind_params(tape, params, gradients != nullptr);
  const model::ForwardVars f = model::forward(tape, params.config, p, padded);
  const ad::Var loss = token_cross_entropy(ad::gather_rows(f.logits, positions), targets);
  if (gradients) {
    tape.backward(loss);
    *gradients = collect_grads(tape, p);
  }
  return loss.value().item();
}

double sft_epoch(model::PolicyParams& params, AdamState& state, std::span<const task::Sample> data,
                 const TrainConfig& config, std::uint64_t epoch,
                 model::ParamSet<ad::Array>* average) {
  if (data.empty()) throw Error("trainer", "empty supervised dataset");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(config.seed, {kSftStream, epoch}));
  rng.shuffle(std::span<std::size_t>(order));
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t begin = 0; begin < order.size(); begin += config.sft_batch_size) {
    const std::size_t end = std::min(order.size(), begin + config.sft_batch_size);
    std::vector<task::Sample> batch;
    for (std::size_t k = begin; k < end; ++k) batch.push_back(data[order[k]]);
    model::ParamSet<ad::Array> grads;
    const double loss = sft_loss(params, batch, &grads);
    require_finite(loss, "supervised loss");
    AdamConfig adam = adam_config(config, config.sft_learning_rate);
    adam.weight_decay = config.sft_weight_decay;
    adam_step(params, grads, state, adam);
    if (average) update_average(*average, params.weights, config.sft_ema_decay);
    total += loss;
    ++batches;
  }
  return total / static_cast<double>(batches);
}

std::vector<bool> contrast_mask(SignalMode mode, std::span<const task::Sample> batch,
                                std::span<const rollout::Trajectory> trajectories) {
  if (batch.size() != trajectories.size()) {
    throw Error("trainer", "batch and trajectory counts differ");
  }
  std::vector<bool> mask(batch.size(), false);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const rollout::Trajectory& tr = trajectories[i];
    switch (mode) {
      case SignalMode::positive:
        mask[i] = tr.outcome == task::Outcome::correct && !tr.cot().empty();
        break;
      case SignalMode::negative:
        mask[i] = tr.outcome == task::Outcome::wrong_extractable &&
                  contrast::split_usable(batch[i].cot_tokens, tr.cot());
        break;
      case SignalMode::none:
        break;
    }
  }
  return mask;
}

UpdateLosses rl_loss(const model::PolicyParams& params, std::span<const task::Sample> batch,
                     std::span<const rollout::Trajectory> trajectories, const TrainConfig& config,
                     model::ParamSet<ad::Array>* gradients) {
  if (batch.empty() || batch.size() != trajectories.size()) {
    throw Error("trainer", "batch and trajectory counts differ or are zero");
  }
  ad::Tape tape;
  const model::ParamVars p = model::bind_params(tape, params, gradients != nullptr);
  std::vector<TokenSeq> rows;
  for (const rollout::Trajectory& tr : trajectories) rows.push_back(tr.tokens);
  const std::size_t width = pad_rows(rows);
  const model::ForwardVars f = model::forward(tape, params.config, p, rows);

  std::vector<std::size_t> positions;
  std::vector<std::size_t> targets;
  std::vector<double> old_lp, adv, ret;
  for (std::size_t r = 0; r < trajectories.size(); ++r) {
    const rollout::Trajectory& tr = trajectories[r];
    const auto gen = tr.generated();
    for (std::size_t t = 0; t < gen.size(); ++t) {
      positions.push_back(r * width + tr.prompt_length + t - 1);
      targets.push_back(static_cast<std::size_t>(gen[t]));
    }
    old_lp.insert(old_lp.end(), tr.old_log_probs.begin(), tr.old_log_probs.end());
    adv.insert(adv.end(), tr.advantages.begin(), tr.advantages.end());
    ret.insert(ret.end(), tr.returns.begin(), tr.returns.end());
  }
  ad::Var step_logits = ad::gather_rows(f.logits, positions);
  if (config.sample_temperature != 1.0) {
    step_logits = ad::scale(step_logits, 1.0 / config.sample_temperature);
  }
  const ad::Var new_lp = ad::gather_last(ad::log_softmax_last(step_logits), targets);
  const ad::Var new_values = ad::gather_rows(f.values, positions);
  const ad::Var policy = ppo_policy_loss(new_lp, old_lp, adv, config.clip_eps);
  const ad::Var value = ppo_value_loss(new_values, ret, adv, config.clip_eps);

  ad::Var contrast_loss = tape.constant(ad::Array({}, 0.0));
  const std::vector<bool> mask = contrast_mask(config.signal_mode, batch, trajectories);
  const bool any = std::find(mask.begin(), mask.end(), true) != mask.end();
  if (any && config.signal_mode == SignalMode::positive) {
    const AnnotatedForward a = annotated_forward(tape, params, p, batch, mask);
    // Rows whose rollout produced a chain of thought take part in the
    // denominator; only masked rows contribute terms.
    std::vector<ad::Var> ann, roll;
    std::vector<bool> row_mask;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const rollout::Trajectory& tr = trajectories[i];
      const std::size_t n = tr.cot().size();
      if (n == 0) continue;
      const ad::Var e_roll = embed_rows(p, f, row_span(i, width, tr.prompt_length, n));
      roll.push_back(e_roll);
      row_mask.push_back(mask[i]);
      if (mask[i]) {
        ann.push_back(embed_rows(p, a.f,
                                 row_span(a.slot[i], a.width, batch[i].question_tokens.size(),
                                          batch[i].cot_tokens.size())));
      } else {
        ann.push_back(e_roll);
      }
    }
    const Flags flags(row_mask);
    contrast_loss =
        contrast::masked_infonce_positive(tape, ann, roll, flags.view(), config.contrast_temperature);
  } else if (any && config.signal_mode == SignalMode::negative) {
    const AnnotatedForward a = annotated_forward(tape, params, p, batch, mask);
    std::vector<ad::Var> lcs_roll, exc_ann, exc_roll;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (!mask[i]) continue;
      const rollout::Trajectory& tr = trajectories[i];
      const auto ann_pos = row_span(a.slot[i], a.width, batch[i].question_tokens.size(),
                                    batch[i].cot_tokens.size());
      const auto roll_pos = row_span(i, width, tr.prompt_length, tr.cot().size());
      const auto e = contrast::split_embeddings_negative(
          p, batch[i].cot_tokens, ad::gather_rows(a.f.hidden, ann_pos),
          ad::gather_rows(a.f.values, ann_pos), tr.cot(), ad::gather_rows(f.hidden, roll_pos),
          ad::gather_rows(f.values, roll_pos));
      if (!e) throw Error("trainer", "masked row lacks a usable split");
      lcs_roll.push_back(e->lcs_rollout);
      exc_ann.push_back(e->exc_annotated);
      exc_roll.push_back(e->exc_rollout);
    }
    const Flags flags(std::vector<bool>(lcs_roll.size(), true));
    contrast_loss = contrast::masked_infonce_negative(tape, lcs_roll, exc_ann, exc_roll,
                                                      flags.view(), config.contrast_temperature);
  }

  const ad::Var total = ad::add(ad::add(policy, ad::scale(value, config.value_coef)),
                                ad::scale(contrast_loss, config.contrast_coef));
  UpdateLosses out;
  out.total = total.value().item();
  out.policy = policy.value().item();
  out.value = value.value().item();
  out.contrast = contrast_loss.value().item();
  require_finite(out.total, "reinforcement loss");
  if (gradients) {
    tape.backward(total);
    *gradients = collect_grads(tape, p);
  }
  return out;
}

RlMetrics rl_step(model::PolicyParams& params, AdamState& state,
                  const model::PolicyParams& reference, std::span<const task::Sample> batch,
                  const TrainConfig& config, std::size_t step) {
  const std::vector<rollout::Trajectory> trajectories =
      rollout::collect(params, reference, batch, config.rollout_config(),
                       derive_seed(config.seed, {kRolloutStream}), step);
  RlMetrics m;
  m.step = step;
  for (const rollout::Trajectory& tr : trajectories) {
    m.mean_terminal_reward += tr.terminal_reward;
    m.frac_correct += tr.outcome == task::Outcome::correct ? 1.0 : 0.0;
    m.frac_extractable += tr.outcome != task::Outcome::unextractable ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(trajectories.size());
  m.mean_terminal_reward /= n;
  m.frac_correct /= n;
  m.frac_extractable /= n;
  const std::vector<bool> mask = contrast_mask(config.signal_mode, batch, trajectories);
  m.contrast_rows = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
  for (std::size_t u = 0; u < config.updates_per_step; ++u) {
    model::ParamSet<ad::Array> grads;
    const UpdateLosses l = rl_loss(params, batch, trajectories, config, &grads);
    if (u == 0) {
      m.loss_total = l.total;
      m.loss_policy = l.policy;
      m.loss_value = l.value;
      m.loss_contrast = l.contrast;
    }
    adam_step(params, grads, state, adam_config(config, config.rl_learning_rate));
  }
  return m;
}

namespace {

double accuracy_of(std::span<const task::Sample> samples, const std::vector<TokenSeq>& outputs) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::span<const TokenId> gen(outputs[i]);
    if (!gen.empty() && gen.back() == eos_id()) gen = gen.first(gen.size() - 1);
    if (task::check(task::extract_answer(gen), samples[i].answer) == task::Outcome::correct) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

}  // namespace

double evaluate(const model::PolicyParams& params, std::span<const task::Sample> samples,
                std::size_t max_new_tokens) {
  if (samples.empty()) throw Error("trainer", "empty evaluation set");
  std::vector<TokenSeq> outputs;
  for (std::size_t begin = 0; begin < samples.size(); begin += kEvalChunk) {
    const std::size_t end = std::min(samples.size(), begin + kEvalChunk);
    std::vector<TokenSeq> prompts;
    for (std::size_t i = begin; i < end; ++i) prompts.push_back(samples[i].question_tokens);
    for (TokenSeq& o : model::greedy_batch(params, prompts, max_new_tokens, eos_id())) {
      outputs.push_back(std::move(o));
    }
  }
  return accuracy_of(samples, outputs);
}

double evaluate_sampled(const model::PolicyParams& params, std::span<const task::Sample> samples,
                        std::size_t max_new_tokens, double temperature, std::uint64_t seed) {
  if (samples.empty()) throw Error("trainer", "empty evaluation set");
  std::vector<TokenSeq> outputs;
  for (std::size_t begin = 0; begin < samples.size(); begin += kEvalChunk) {
    const std::size_t end = std::min(samples.size(), begin + kEvalChunk);
    std::vector<TokenSeq> prompts;
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = begin; i < end; ++i) {
      prompts.push_back(samples[i].question_tokens);
      seeds.push_back(derive_seed(seed, {i}));
    }
    for (model::Continuation& c :
         model::sample_batch(params, prompts, max_new_tokens, temperature, seeds, eos_id())) {
      outputs.push_back(std::move(c.tokens));
    }
  }
  return accuracy_of(samples, outputs);
}

TrainResult train(const TrainConfig& config, std::span<const task::Sample> train_set,
                  std::span<const task::Sample> test_set, const TrainOutputs& outputs,
                  std::optional<model::PolicyParams> init, bool run_sft) {
  config.validate();
  if (train_set.empty()) throw Error("trainer", "empty training set");
  TrainResult result;
  result.params = init ? std::move(*init)
                       : model::init_params(config.model, derive_seed(config.seed, {kInitStream}));
  if (!(result.params.config == config.model)) {
    throw Error("trainer", "initial parameters do not match the model configuration");
  }
  MetricsWriter metrics(outputs.metrics_path);
  metrics.header(outputs.config_echo);

  if (run_sft) {
    AdamState sft_state = make_adam_state(result.params);
    std::optional<model::ParamSet<ad::Array>> average;
    if (config.sft_ema_decay > 0.0) average = result.params.weights;
    for (std::size_t epoch = 1; epoch <= config.sft_epochs; ++epoch) {
      const double loss = sft_epoch(result.params, sft_state, train_set, config, epoch,
                                    average ? &*average : nullptr);
      result.sft_losses.push_back(loss);
      metrics.sft_epoch(epoch, loss);
    }
    if (average) result.params.weights = std::move(*average);
  }
  if (!test_set.empty()) {
    result.sft_greedy_accuracy = evaluate(result.params, test_set, config.max_new_tokens);
    result.sft_sampled_accuracy =
        evaluate_sampled(result.params, test_set, config.max_new_tokens, config.sample_temperature,
                         derive_seed(config.seed, {kEvalStream}));
    metrics.sft_eval(result.sft_greedy_accuracy, result.sft_sampled_accuracy);
  }

  result.reference = result.params;
  AdamState rl_state = make_adam_state(result.params);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  Rng batch_rng(derive_seed(config.seed, {kBatchStream}));
  std::size_t cursor = order.size();
  for (std::size_t step = 1; step <= config.rl_steps; ++step) {
    std::vector<task::Sample> batch;
    for (std::size_t k = 0; k < config.batch_size; ++k) {
      if (cursor == order.size()) {
        batch_rng.shuffle(std::span<std::size_t>(order));
        cursor = 0;
      }
      batch.push_back(train_set[order[cursor++]]);
    }
    RlMetrics m = rl_step(result.params, rl_state, result.reference, batch, config, step);
    const bool eval_now = !test_set.empty() && config.eval_interval > 0 &&
                          (step % config.eval_interval == 0 || step == config.rl_steps);
    if (eval_now) m.eval_accuracy = evaluate(result.params, test_set, config.max_new_tokens);
    metrics.rl_step(m);
    result.history.push_back(m);
    if (!outputs.checkpoint_path.empty() && config.checkpoint_interval > 0 &&
        step % config.checkpoint_interval == 0) {
      model::save_checkpoint(outputs.checkpoint_path + ".step" + std::to_string(step),
                             result.params);
    }
  }
  if (!outputs.checkpoint_path.empty()) model::save_checkpoint(outputs.checkpoint_path, result.params);
  return result;
}

}  // namespace carft::trainer
