// SPDX-License-Identifier: Apache-2.0

#ifndef CARFT_TRAINER_METRICS_HPP_
#define CARFT_TRAINER_METRICS_HPP_

#include <fstream>
#include <string>

#include "carft/trainer/trainer.hpp"

// Line-delimited JSON metrics: a header record carrying the resolved
// configuration, one record per supervised epoch, one after the supervised
// stage, and one per reinforcement step.
namespace carft::trainer {

class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path);

  bool enabled() const { return out_.is_open(); }
  void header(const std::string& config_echo);
  void sft_epoch(std::size_t epoch, double loss);
  void sft_eval(double greedy_accuracy, double sampled_accuracy);
  void rl_step(const RlMetrics& m);

 private:
  void line(const std::string& text);
  std::ofstream out_;
};

std::string rl_record(const RlMetrics& m);

}  // namespace carft::trainer

#endif  // CARFT_TRAINER_METRICS_HPP_
