// SPDX-License-Identifier: Apache-2.0

#include "carft/model/params.hpp"

#include <cmath>

#include "carft/common/error.hpp"
#include "carft/common/random.hpp"

namespace carft::model {

void ModelConfig::validate() const {
  const std::pair<const char*, std::size_t> fields[] = {
      {"vocab_size", vocab_size}, {"d_model", d_model}, {"n_layers", n_layers},
      {"n_heads", n_heads},       {"d_ff", d_ff},       {"max_seq_len", max_seq_len},
      {"d_proj", d_proj}};
  for (const auto& [name, value] : fields) {
    if (value == 0) throw Error("model", std::string(name) + " must be positive");
  }
  if (d_model % n_heads != 0) {
    throw Error("model", "d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                             std::to_string(n_heads));
  }
  if (max_seq_len > kMaxSequenceCeiling) {
    throw Error("model", "max_seq_len " + std::to_string(max_seq_len) + " exceeds " +
                             std::to_string(kMaxSequenceCeiling));
  }
}

std::size_t PolicyParams::parameter_count() const {
  std::size_t n = 0;
  for (const ad::Array* a : param_list(weights)) n += a->size();
  return n;
}

bool operator==(const PolicyParams& a, const PolicyParams& b) {
  if (!(a.config == b.config) || a.weights.layers.size() != b.weights.layers.size()) return false;
  const auto la = param_list(a.weights);
  const auto lb = param_list(b.weights);
  for (std::size_t i = 0; i < la.size(); ++i) {
    if (!(*la[i] == *lb[i])) return false;
  }
  return true;
}

PolicyParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  const std::size_t d = config.d_model;
  PolicyParams p;
  p.config = config;
  ParamSet<ad::Array>& w = p.weights;
  w.token_embedding = ad::Array({config.vocab_size, d});
  w.position_embedding = ad::Array({config.max_seq_len, d});
  w.layers.resize(config.n_layers);
  for (auto& layer : w.layers) {
    layer.ln1_gain = ad::Array({d}, 1.0);
    layer.ln1_bias = ad::Array({d});
    layer.w_query = ad::Array({d, d});
    layer.w_key = ad::Array({d, d});
    layer.w_value = ad::Array({d, d});
    layer.w_out = ad::Array({d, d});
    layer.ln2_gain = ad::Array({d}, 1.0);
    layer.ln2_bias = ad::Array({d});
    layer.w_ff_in = ad::Array({d, config.d_ff});
    layer.b_ff_in = ad::Array({config.d_ff});
    layer.w_ff_out = ad::Array({config.d_ff, d});
    layer.b_ff_out = ad::Array({d});
  }
  w.final_gain = ad::Array({d}, 1.0);
  w.final_bias = ad::Array({d});
  w.lm_head = ad::Array({d, config.vocab_size});
  w.value_weight = ad::Array({d, 1});
  w.value_bias = ad::Array({1});
  w.proj_weight = ad::Array({d, config.d_proj});
  w.proj_bias = ad::Array({config.d_proj});

  // Matrices (rank 2) are random; gains and biases keep their fills.
  Rng rng(derive_seed(seed, {0x1417}));
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  visit_params(w, [&](const std::string&, ad::Array& a) {
    if (a.rank() != 2) return;
    for (double& v : a.data()) v = rng.normal() * scale;
  });
  return p;
}

ParamSet<ad::Array> zeros_like(const ParamSet<ad::Array>& params) {
  return map_params<ad::Array>(params, [](const ad::Array& a) { return ad::Array(a.shape(), 0.0); });
}

}  // namespace carft::model
