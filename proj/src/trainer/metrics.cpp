// SPDX-License-Identifier: Apache-2.0

#include "carft/trainer/metrics.hpp"

#include <json.hpp>

#include "carft/common/error.hpp"

namespace carft::trainer {

MetricsWriter::MetricsWriter(const std::string& path) {
  if (path.empty()) return;
  out_.open(path, std::ios::trunc);
  if (!out_) throw Error("trainer", "cannot open metrics file: " + path);
}

void MetricsWriter::line(const std::string& text) {
  if (!enabled()) return;
  out_ << text << '\n';
  out_.flush();
  if (!out_) throw Error("trainer", "failed writing metrics");
}

void MetricsWriter::header(const std::string& config_echo) {
  line(nlohmann::json{{"type", "config"}, {"config", config_echo}}.dump());
}

void MetricsWriter::sft_epoch(std::size_t epoch, double loss) {
  line(nlohmann::json{{"type", "sft"}, {"epoch", epoch}, {"loss", loss}}.dump());
}

void MetricsWriter::sft_eval(double greedy_accuracy, double sampled_accuracy) {
  line(nlohmann::json{{"type", "sft_eval"},
                      {"greedy_accuracy", greedy_accuracy},
                      {"sampled_accuracy", sampled_accuracy}}
           .dump());
}

void MetricsWriter::rl_step(const RlMetrics& m) { line(rl_record(m)); }

std::string rl_record(const RlMetrics& m) {
  nlohmann::json j{{"type", "rl"},
                   {"step", m.step},
                   {"loss_total", m.loss_total},
                   {"loss_policy", m.loss_policy},
                   {"loss_value", m.loss_value},
                   {"loss_contrast", m.loss_contrast},
                   {"mean_terminal_reward", m.mean_terminal_reward},
                   {"frac_correct", m.frac_correct},
                   {"frac_extractable", m.frac_extractable},
                   {"contrast_rows", m.contrast_rows}};
  if (m.eval_accuracy) j["eval_accuracy"] = *m.eval_accuracy;
  return j.dump();
}

}  // namespace carft::trainer
