// SPDX-License-Identifier: Apache-2.0

#include "carft/contrast/contrast.hpp"

#include <string>

#include "carft/common/error.hpp"
#include "carft/cot_embed/cot_embed.hpp"

namespace carft::contrast {

namespace {

std::vector<std::size_t> complement(const std::vector<std::size_t>& picked, std::size_t n) {
  std::vector<std::size_t> out;
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (k < picked.size() && picked[k] == i) {
      ++k;
    } else {
      out.push_back(i);
    }
  }
  return out;
}

void check_temperature(double temperature) {
  if (!(temperature > 0.0)) throw Error("contrast", "temperature must be positive");
}

// [n, d] matrix whose rows are the given [d] vectors.
ad::Var stack(std::span<const ad::Var> rows) {
  std::vector<ad::Var> parts;
  parts.reserve(rows.size());
  for (ad::Var r : rows) parts.push_back(ad::reshape(r, {1, r.shape()[0]}));
  return parts.size() == 1 ? parts[0] : ad::concat_rows(parts);
}

ad::Var zero_loss(ad::Tape& tape) { return tape.constant(ad::Array({}, 0.0)); }

// -log softmax(logits)[target] for logits [1, n].
ad::Var nll(ad::Var logits, std::size_t target) {
  const std::size_t idx[] = {target};
  return ad::scale(ad::sum(ad::gather_last(ad::log_softmax_last(logits), idx)), -1.0);
}

ad::Var accumulate(ad::Tape& tape, const std::vector<ad::Var>& terms) {
  if (terms.empty()) return zero_loss(tape);
  ad::Var total = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) total = ad::add(total, terms[i]);
  return total;
}

}  // namespace

LcsSplit lcs(std::span<const TokenId> a, std::span<const TokenId> b) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  // suffix[i][j] = LCS length of a[i:] and b[j:].
  std::vector<std::size_t> suffix((n + 1) * (m + 1), 0);
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return suffix[i * (m + 1) + j]; };
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t j = m; j-- > 0;) {
      at(i, j) = a[i] == b[j] ? at(i + 1, j + 1) + 1 : std::max(at(i + 1, j), at(i, j + 1));
    }
  }
  LcsSplit out;
  std::size_t i = 0;
  std::size_t j = 0;
  std::size_t remaining = at(0, 0);
  while (remaining > 0) {
    bool found = false;
    for (std::size_t ii = i; ii < n && !found; ++ii) {
      for (std::size_t jj = j; jj < m; ++jj) {
        if (a[ii] == b[jj] && at(ii + 1, jj + 1) + 1 == remaining) {
          out.lcs_a.push_back(ii);
          out.lcs_b.push_back(jj);
          i = ii + 1;
          j = jj + 1;
          --remaining;
          found = true;
          break;
        }
      }
    }
    if (!found) throw Error("contrast", "internal LCS reconstruction failure");
  }
  out.exc_a = complement(out.lcs_a, n);
  out.exc_b = complement(out.lcs_b, m);
  return out;
}

ad::Var masked_infonce_positive(ad::Tape& tape, std::span<const ad::Var> annotated,
                                std::span<const ad::Var> rollout, std::span<const bool> mask,
                                double temperature) {
  check_temperature(temperature);
  const std::size_t b = mask.size();
  if (annotated.size() != b || rollout.size() != b) {
    throw Error("contrast", "positive batch lists have different lengths");
  }
  std::vector<ad::Var> terms;
  bool any = false;
  for (bool m : mask) any = any || m;
  if (!any) return zero_loss(tape);
  ad::Var keys_t = ad::transpose(stack(rollout));  // [d, B]
  for (std::size_t i = 0; i < b; ++i) {
    if (!mask[i]) continue;
    const ad::Var query = ad::reshape(annotated[i], {1, annotated[i].shape()[0]});
    terms.push_back(nll(ad::scale(ad::matmul(query, keys_t), 1.0 / temperature), i));
  }
  return accumulate(tape, terms);
}

ad::Var masked_infonce_negative(ad::Tape& tape, std::span<const ad::Var> lcs_rollout,
                                std::span<const ad::Var> exc_annotated,
                                std::span<const ad::Var> exc_rollout, std::span<const bool> mask,
                                double temperature) {
  check_temperature(temperature);
  const std::size_t b = mask.size();
  if (lcs_rollout.size() != b || exc_annotated.size() != b || exc_rollout.size() != b) {
    throw Error("contrast", "negative batch lists have different lengths");
  }
  std::vector<ad::Var> usable_exc;
  for (std::size_t i = 0; i < b; ++i) {
    if (mask[i]) usable_exc.push_back(exc_rollout[i]);
  }
  if (usable_exc.empty()) return zero_loss(tape);
  ad::Var keys_t = ad::transpose(stack(usable_exc));  // [d, U]
  std::vector<ad::Var> terms;
  for (std::size_t i = 0; i < b; ++i) {
    if (!mask[i]) continue;
    const ad::Var query = ad::reshape(lcs_rollout[i], {1, lcs_rollout[i].shape()[0]});
    // The target logit sits outside the denominator set, so it is placed in
    // its own column and excluded from the log-sum-exp.
    const ad::Var target = ad::scale(ad::inner(lcs_rollout[i], exc_annotated[i]), 1.0 / temperature);
    const ad::Var denom =
        ad::logsumexp_last(ad::scale(ad::matmul(query, keys_t), 1.0 / temperature));
    terms.push_back(ad::sub(ad::sum(denom), target));
  }
  return accumulate(tape, terms);
}

bool split_usable(std::span<const TokenId> annotated_cot, std::span<const TokenId> rollout_cot) {
  const LcsSplit s = lcs(annotated_cot, rollout_cot);
  return !s.lcs_a.empty() && !s.exc_a.empty() && !s.exc_b.empty();
}

std::optional<NegativeEmbeddings> split_embeddings_negative(
    const model::ParamVars& params, std::span<const TokenId> annotated_cot,
    ad::Var annotated_hidden, ad::Var annotated_values, std::span<const TokenId> rollout_cot,
    ad::Var rollout_hidden, ad::Var rollout_values) {
  const LcsSplit s = lcs(annotated_cot, rollout_cot);
  if (s.lcs_a.empty() || s.exc_a.empty() || s.exc_b.empty()) return std::nullopt;
  using Sel = std::span<const std::size_t>;
  NegativeEmbeddings e;
  e.lcs_annotated = cot_embed::embed_cot(params, annotated_hidden, annotated_values, Sel(s.lcs_a));
  e.exc_annotated = cot_embed::embed_cot(params, annotated_hidden, annotated_values, Sel(s.exc_a));
  e.lcs_rollout = cot_embed::embed_cot(params, rollout_hidden, rollout_values, Sel(s.lcs_b));
  e.exc_rollout = cot_embed::embed_cot(params, rollout_hidden, rollout_values, Sel(s.exc_b));
  return e;
}

}  // namespace carft::contrast
