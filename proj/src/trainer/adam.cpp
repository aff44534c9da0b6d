// SPDX-License-Identifier: Apache-2.0

#include "carft/trainer/adam.hpp"

#include <cmath>

#include "carft/common/error.hpp"

namespace carft::trainer {

AdamState make_adam_state(const model::PolicyParams& params) {
  AdamState s;
  s.first_moment = model::zeros_like(params.weights);
  s.second_moment = model::zeros_like(params.weights);
  return s;
}

void adam_step(model::PolicyParams& params, const model::ParamSet<ad::Array>& gradients,
               AdamState& state, const AdamConfig& config) {
  std::vector<ad::Array*> w = model::param_list(params.weights);
  std::vector<const ad::Array*> g = model::param_list(gradients);
  std::vector<ad::Array*> m = model::param_list(state.first_moment);
  std::vector<ad::Array*> v = model::param_list(state.second_moment);
  if (g.size() != w.size() || m.size() != w.size() || v.size() != w.size()) {
    throw Error("trainer", "optimizer state does not mirror the parameters");
  }
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (g[i]->shape() != w[i]->shape() || m[i]->shape() != w[i]->shape() ||
        v[i]->shape() != w[i]->shape()) {
      throw Error("trainer", "gradient shape " + ad::shape_string(g[i]->shape()) +
                                 " does not match parameter shape " +
                                 ad::shape_string(w[i]->shape()));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < w.size(); ++i) {
    auto wd = w[i]->data();
    auto gd = g[i]->data();
    auto md = m[i]->data();
    auto vd = v[i]->data();
    for (std::size_t k = 0; k < wd.size(); ++k) {
      md[k] = config.beta1 * md[k] + (1.0 - config.beta1) * gd[k];
      vd[k] = config.beta2 * vd[k] + (1.0 - config.beta2) * gd[k] * gd[k];
      const double m_hat = md[k] / correction1;
      const double v_hat = vd[k] / correction2;
      wd[k] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.eps);
    }
    if (config.weight_decay > 0.0 && w[i]->rank() == 2) {
      const double keep = config.learning_rate * config.weight_decay;
      for (double& x : wd) x -= keep * x;
    }
  }
}

}  // namespace carft::trainer
