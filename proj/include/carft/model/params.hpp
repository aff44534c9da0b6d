// SPDX-License-Identifier: Apache-2.0

#ifndef CARFT_MODEL_PARAMS_HPP_
#define CARFT_MODEL_PARAMS_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "carft/autodiff/array.hpp"

namespace carft::model {

struct ModelConfig {
  std::size_t vocab_size = 21;
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 8;
  std::size_t d_ff = 256;
  std::size_t max_seq_len = 128;
  std::size_t d_proj = 64;

  std::size_t head_dim() const { return d_model / n_heads; }
  // Throws on non-positive extents, d_model % n_heads != 0, or max_seq_len > 1024.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline constexpr std::size_t kMaxSequenceCeiling = 1024;

template <typename T>
struct LayerSet {
  T ln1_gain, ln1_bias;
  T w_query, w_key, w_value, w_out;
  T ln2_gain, ln2_bias;
  T w_ff_in, b_ff_in, w_ff_out, b_ff_out;
};

// Every learnable array of the policy: transformer backbone, language-model
// head, value head and projection head. Instantiated with ad::Array for
// storage/gradients/optimizer moments and with ad::Var for traced forwards.
template <typename T>
struct ParamSet {
  T token_embedding;     // [vocab, d_model]
  T position_embedding;  // [max_seq_len, d_model]
  std::vector<LayerSet<T>> layers;
  T final_gain, final_bias;  // [d_model]
  T lm_head;                 // [d_model, vocab]
  T value_weight;            // [d_model, 1]
  T value_bias;              // [1]
  T proj_weight;             // [d_model, d_proj]
  T proj_bias;               // [d_proj]
};

// Calls f(name, member) for every array in a fixed canonical order.
template <typename Set, typename F>
void visit_params(Set& p, F&& f) {
  f(std::string("token_embedding"), p.token_embedding);
  f(std::string("position_embedding"), p.position_embedding);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& layer = p.layers[l];
    const std::string pre = "layers." + std::to_string(l) + ".";
    f(pre + "ln1_gain", layer.ln1_gain);
    f(pre + "ln1_bias", layer.ln1_bias);
    f(pre + "w_query", layer.w_query);
    f(pre + "w_key", layer.w_key);
    f(pre + "w_value", layer.w_value);
    f(pre + "w_out", layer.w_out);
    f(pre + "ln2_gain", layer.ln2_gain);
    f(pre + "ln2_bias", layer.ln2_bias);
    f(pre + "w_ff_in", layer.w_ff_in);
    f(pre + "b_ff_in", layer.b_ff_in);
    f(pre + "w_ff_out", layer.w_ff_out);
    f(pre + "b_ff_out", layer.b_ff_out);
  }
  f(std::string("final_gain"), p.final_gain);
  f(std::string("final_bias"), p.final_bias);
  f(std::string("lm_head"), p.lm_head);
  f(std::string("value_weight"), p.value_weight);
  f(std::string("value_bias"), p.value_bias);
  f(std::string("proj_weight"), p.proj_weight);
  f(std::string("proj_bias"), p.proj_bias);
}

// Pointers to every member in canonical order.
template <typename T>
std::vector<T*> param_list(ParamSet<T>& p) {
  std::vector<T*> out;
  visit_params(p, [&](const std::string&, T& v) { out.push_back(&v); });
  return out;
}

template <typename T>
std::vector<const T*> param_list(const ParamSet<T>& p) {
  std::vector<const T*> out;
  visit_params(p, [&](const std::string&, const T& v) { out.push_back(&v); });
  return out;
}

// Same structure with each member mapped through fn.
template <typename U, typename T, typename Fn>
ParamSet<U> map_params(const ParamSet<T>& src, Fn fn) {
  ParamSet<U> dst;
  dst.layers.resize(src.layers.size());
  std::vector<U*> out = param_list(dst);
  std::vector<const T*> in = param_list(src);
  for (std::size_t i = 0; i < in.size(); ++i) *out[i] = fn(*in[i]);
  return dst;
}

struct PolicyParams {
  ModelConfig config;
  ParamSet<ad::Array> weights;

  std::size_t parameter_count() const;

  friend bool operator==(const PolicyParams& a, const PolicyParams& b);
};

// Zero-mean normal weights with standard deviation 1/sqrt(d_model); layer-norm
// gains one; every bias (including value and projection heads) zero.
PolicyParams init_params(const ModelConfig& config, std::uint64_t seed);

// Arrays shaped like `params` and filled with zeros.
ParamSet<ad::Array> zeros_like(const ParamSet<ad::Array>& params);

}  // namespace carft::model

#endif  // CARFT_MODEL_PARAMS_HPP_
