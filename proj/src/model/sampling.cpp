// SPDX-License-Identifier: Apache-2.0

#include "carft/model/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "carft/common/error.hpp"
#include "carft/model/transformer.hpp"

namespace carft::model {

std::vector<double> tempered_log_softmax(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0)) throw Error("model", "temperature must be positive");
  if (logits.empty()) throw Error("model", "empty logits");
  std::vector<double> out(logits.size());
  double mx = logits[0] / temperature;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = logits[i] / temperature;
    mx = std::max(mx, out[i]);
  }
  double total = 0.0;
  for (double v : out) total += std::exp(v - mx);
  const double lse = mx + std::log(total);
  for (double& v : out) v -= lse;
  return out;
}

std::size_t sample_index(std::span<const double> log_probs, Rng& rng) {
  const double u = rng.uniform();
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < log_probs.size(); ++i) {
    const double p = std::exp(log_probs[i]);
    if (p > 0.0) last_positive = i;
    cumulative += p;
    if (u < cumulative) return i;
  }
  return last_positive;  // rounding left cumulative just below 1
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

namespace {

struct DecodeRow {
  TokenSeq sequence;
  std::size_t prompt_len = 0;
  Continuation result;
  bool done = false;
};

// Shared decoding loop. Unfinished rows are right-padded to a common length;
// causal attention keeps the padding invisible to each row's last real token.
template <typename Pick>
void decode(const PolicyParams& params, std::vector<DecodeRow>& rows, std::size_t max_new,
            TokenId eos, Pick pick) {
  const ModelConfig& cfg = params.config;
  for (DecodeRow& r : rows) {
    if (r.sequence.empty()) throw Error("model", "empty prompt");
    if (r.sequence.size() + max_new > cfg.max_seq_len) {
      throw Error("model", "prompt length " + std::to_string(r.sequence.size()) + " + max_new " +
                               std::to_string(max_new) + " exceeds max_seq_len " +
                               std::to_string(cfg.max_seq_len));
    }
    r.prompt_len = r.sequence.size();
    r.done = max_new == 0;
  }
  const std::size_t vocab = cfg.vocab_size;
  while (true) {
    std::vector<std::size_t> active;
    std::size_t width = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (!rows[i].done) {
        active.push_back(i);
        width = std::max(width, rows[i].sequence.size());
      }
    }
    if (active.empty()) break;
    std::vector<TokenSeq> batch;
    batch.reserve(active.size());
    for (std::size_t i : active) {
      TokenSeq padded = rows[i].sequence;
      padded.resize(width, eos);
      batch.push_back(std::move(padded));
    }
    const ForwardOutput out = forward(params, batch);
    const auto logits = out.logits.data();
    const auto values = out.values.data();
    for (std::size_t b = 0; b < active.size(); ++b) {
      DecodeRow& r = rows[active[b]];
      const std::size_t pos = r.sequence.size() - 1;
      const std::size_t offset = (b * width + pos) * vocab;
      const std::span<const double> row_logits(logits.data() + offset, vocab);
      const auto [token, log_prob] = pick(active[b], row_logits);
      const TokenId id = static_cast<TokenId>(token);
      r.sequence.push_back(id);
      r.result.tokens.push_back(id);
      r.result.log_probs.push_back(log_prob);
      r.result.values.push_back(values[b * width + pos]);
      if (id == eos) {
        r.result.ended_with_eos = true;
        r.done = true;
      } else if (r.result.tokens.size() >= max_new) {
        r.done = true;
      }
    }
  }
}

std::vector<DecodeRow> make_rows(std::span<const TokenSeq> prompts) {
  std::vector<DecodeRow> rows(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) rows[i].sequence = prompts[i];
  return rows;
}

}  // namespace

std::vector<Continuation> sample_batch(const PolicyParams& params,
                                       std::span<const TokenSeq> prompts, std::size_t max_new,
                                       double temperature, std::span<const std::uint64_t> seeds,
                                       TokenId eos) {
  if (!(temperature > 0.0)) throw Error("model", "temperature must be positive");
  if (seeds.size() != prompts.size()) throw Error("model", "one seed per prompt required");
  std::vector<Rng> rngs;
  rngs.reserve(seeds.size());
  for (std::uint64_t s : seeds) rngs.emplace_back(s);
  std::vector<DecodeRow> rows = make_rows(prompts);
  decode(params, rows, max_new, eos, [&](std::size_t row, std::span<const double> logits) {
    const std::vector<double> lp = tempered_log_softmax(logits, temperature);
    const std::size_t k = sample_index(lp, rngs[row]);
    return std::pair<std::size_t, double>(k, lp[k]);
  });
  std::vector<Continuation> out;
  out.reserve(rows.size());
  for (DecodeRow& r : rows) out.push_back(std::move(r.result));
  return out;
}

Continuation sample_continuation(const PolicyParams& params, std::span<const TokenId> prompt,
                                 std::size_t max_new, double temperature, std::uint64_t seed,
                                 TokenId eos) {
  const TokenSeq p(prompt.begin(), prompt.end());
  return sample_batch(params, std::span<const TokenSeq>(&p, 1), max_new, temperature,
                      std::span<const std::uint64_t>(&seed, 1), eos)[0];
}

std::vector<TokenSeq> greedy_batch(const PolicyParams& params, std::span<const TokenSeq> prompts,
                                   std::size_t max_new, TokenId eos) {
  std::vector<DecodeRow> rows = make_rows(prompts);
  decode(params, rows, max_new, eos, [](std::size_t, std::span<const double> logits) {
    const std::vector<double> lp = tempered_log_softmax(logits, 1.0);
    const std::size_t k = argmax(logits);
    return std::pair<std::size_t, double>(k, lp[k]);
  });
  std::vector<TokenSeq> out;
  out.reserve(rows.size());
  for (DecodeRow& r : rows) out.push_back(std::move(r.result.tokens));
  return out;
}

TokenSeq greedy_decode(const PolicyParams& params, std::span<const TokenId> prompt,
                       std::size_t max_new, TokenId eos) {
  const TokenSeq p(prompt.begin(), prompt.end());
  return greedy_batch(params, std::span<const TokenSeq>(&p, 1), max_new, eos)[0];
}

std::vector<std::vector<double>> score_continuations(const PolicyParams& params,
                                                     std::span<const TokenSeq> prompts,
                                                     std::span<const TokenSeq> continuations,
                                                     double temperature) {
  if (prompts.size() != continuations.size()) {
    throw Error("model", "prompt and continuation counts differ");
  }
  std::vector<std::vector<double>> out(prompts.size());
  std::vector<TokenSeq> batch;
  std::vector<std::size_t> rows;
  std::size_t width = 0;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    if (prompts[i].empty()) throw Error("model", "empty prompt");
    if (continuations[i].empty()) continue;
    TokenSeq seq = prompts[i];
    seq.insert(seq.end(), continuations[i].begin(), continuations[i].end());
    width = std::max(width, seq.size());
    batch.push_back(std::move(seq));
    rows.push_back(i);
  }
  if (batch.empty()) return out;
  const TokenId filler = batch[0][0];
  for (TokenSeq& seq : batch) seq.resize(width, filler);
  const ForwardOutput f = forward(params, batch);
  const auto logits = f.logits.data();
  const std::size_t vocab = params.config.vocab_size;
  for (std::size_t b = 0; b < rows.size(); ++b) {
    const std::size_t i = rows[b];
    const std::size_t plen = prompts[i].size();
    for (std::size_t t = 0; t < continuations[i].size(); ++t) {
      const std::size_t pos = plen + t - 1;
      const std::span<const double> row_logits(logits.data() + (b * width + pos) * vocab, vocab);
      const std::vector<double> lp = tempered_log_softmax(row_logits, temperature);
      out[i].push_back(lp[static_cast<std::size_t>(continuations[i][t])]);
    }
  }
  return out;
}

}  // namespace carft::model
