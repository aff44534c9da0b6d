// SPDX-License-Identifier: Apache-2.0

#include "carft/cli/run.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "carft/common/error.hpp"
#include "carft/model/checkpoint.hpp"
#include "carft/task/dataset.hpp"
#include "carft/trainer/trainer.hpp"

namespace carft::cli {

namespace {

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cli", "cannot write " + path);
  out << text;
  if (!out) throw Error("cli", "failed writing " + path);
}

trainer::TrainOutputs outputs_for(const RunConfig& c) {
  trainer::TrainOutputs o;
  o.metrics_path = c.metrics_out;
  o.checkpoint_path = c.checkpoint_out;
  o.config_echo = echo_config(c);
  if (!c.metrics_out.empty()) write_text(c.metrics_out + ".cfg", o.config_echo);
  return o;
}

int run_training(const RunConfig& c, std::ostream& out) {
  const std::vector<task::Sample> train_set = task::read_dataset(c.train_data);
  const std::vector<task::Sample> test_set = task::read_dataset(c.test_data);
  trainer::TrainConfig tc = c.train;
  if (c.command == Command::sft) tc.rl_steps = 0;
  std::optional<model::PolicyParams> init;
  bool run_sft = true;
  if (c.command == Command::train && !c.checkpoint_in.empty()) {
    init = model::load_checkpoint(c.checkpoint_in);
    tc.model = init->config;
    run_sft = false;
  }
  const trainer::TrainResult r =
      trainer::train(tc, train_set, test_set, outputs_for(c), std::move(init), run_sft);
  if (run_sft && !r.sft_losses.empty()) {
    out << "sft final loss: " << fixed4(r.sft_losses.back()) << "\n";
  }
  out << "sft greedy accuracy: " << fixed4(r.sft_greedy_accuracy) << "\n";
  out << "sft sampled accuracy: " << fixed4(r.sft_sampled_accuracy) << "\n";
  if (!r.history.empty()) {
    const trainer::RlMetrics& last = r.history.back();
    out << "rl steps: " << r.history.size() << "\n";
    if (last.eval_accuracy) out << "final accuracy: " << fixed4(*last.eval_accuracy) << "\n";
  }
  return 0;
}

}  // namespace

std::string export_accuracy_curve(const std::string& metrics_path) {
  std::ifstream in(metrics_path);
  if (!in) throw Error("cli", "cannot read metrics file " + metrics_path);
  std::string text = "step\teval_accuracy\n";
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw Error("cli", metrics_path + ":" + std::to_string(line_no) + ": malformed record");
    }
    if (j.value("type", "") != "rl" || !j.contains("eval_accuracy")) continue;
    text += std::to_string(j.at("step").get<std::size_t>()) + "\t" +
            fixed4(j.at("eval_accuracy").get<double>()) + "\n";
  }
  return text;
}

int run(const RunConfig& c, std::ostream& out, std::ostream& err) {
  try {
    switch (c.command) {
      case Command::gen_data: {
        const auto train_set = task::gen_dataset(c.n_train, c.data_seed, task::Split::train);
        const auto test_set = task::gen_dataset(c.n_test, c.data_seed, task::Split::test);
        task::write_dataset(c.train_data, train_set);
        task::write_dataset(c.test_data, test_set);
        out << "wrote " << train_set.size() << " train samples to " << c.train_data << "\n";
        out << "wrote " << test_set.size() << " test samples to " << c.test_data << "\n";
        return 0;
      }
      case Command::sft:
      case Command::train:
        return run_training(c, out);
      case Command::eval: {
        const model::PolicyParams params = model::load_checkpoint(c.checkpoint_in);
        const auto test_set = task::read_dataset(c.test_data);
        out << "accuracy: "
            << fixed4(trainer::evaluate(params, test_set, c.train.max_new_tokens)) << "\n";
        return 0;
      }
      case Command::export_metrics: {
        const std::string curve = export_accuracy_curve(c.metrics_out);
        if (c.export_out.empty()) {
          out << curve;
        } else {
          write_text(c.export_out, curve);
        }
        return 0;
      }
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

int main_entry(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Contrastive reinforced fine-tuning on synthetic arithmetic"};
  std::string command;
  std::string config_path;
  app.add_option("command", command, "gen-data | sft | train | eval | export-metrics")->required();
  app.add_option("--config", config_path, "flat key=value configuration file");
  app.allow_extras();
  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  if (!argv_rev.empty()) argv_rev.pop_back();  // program name
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: cli: " << e.what() << "\n";
    return 1;
  }
  try {
    const std::optional<Command> cmd = parse_command(command);
    if (!cmd) throw Error("cli", "command: unknown command '" + command + "'");
    Overrides overrides;
    const std::vector<std::string> extra = app.remaining();
    for (std::size_t i = 0; i < extra.size(); ++i) {
      std::string token = extra[i];
      if (token.rfind("--", 0) != 0) throw Error("cli", "unexpected argument '" + token + "'");
      token = token.substr(2);
      const auto eq = token.find('=');
      if (eq != std::string::npos) {
        overrides.emplace_back(token.substr(0, eq), token.substr(eq + 1));
      } else if (i + 1 < extra.size()) {
        overrides.emplace_back(token, extra[++i]);
      } else {
        throw Error("cli", token + ": missing value");
      }
    }
    return run(load_config(*cmd, config_path, overrides), out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace carft::cli
