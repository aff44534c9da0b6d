// SPDX-License-Identifier: Apache-2.0

#include "carft/cli/config.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <type_traits>

#include "carft/common/error.hpp"

namespace carft::cli {

std::string_view command_name(Command command) {
  switch (command) {
    case Command::gen_data: return "gen-data";
    case Command::sft: return "sft";
    case Command::train: return "train";
    case Command::eval: return "eval";
    case Command::export_metrics: return "export-metrics";
  }
  return "train";
}

std::optional<Command> parse_command(std::string_view name) {
  for (Command c : {Command::gen_data, Command::sft, Command::train, Command::eval,
                    Command::export_metrics}) {
    if (command_name(c) == name) return c;
  }
  return std::nullopt;
}

namespace {

[[noreturn]] void reject(const std::string& key, const std::string& reason) {
  throw Error("cli", key + ": " + reason);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string normalize_key(std::string key) {
  for (char& c : key) {
    if (c == '-') c = '_';
  }
  return key;
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size() || !std::isfinite(v)) {
    reject(key, "expected a finite number, got '" + text + "'");
  }
  return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size()) {
    reject(key, "expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

Field real(std::string key, double trainer::TrainConfig::*member) {
  return {key, [member](const RunConfig& c) { return format_double(c.train.*member); },
          [key, member](RunConfig& c, const std::string& v) { c.train.*member = parse_double(key, v); }};
}

template <typename Owner, typename Int>
Field integer(std::string key, Int Owner::*member) {
  return {key,
          [member](const RunConfig& c) {
            if constexpr (std::is_same_v<Owner, trainer::TrainConfig>) {
              return std::to_string(c.train.*member);
            } else if constexpr (std::is_same_v<Owner, model::ModelConfig>) {
              return std::to_string(c.train.model.*member);
            } else {
              return std::to_string(c.*member);
            }
          },
          [key, member](RunConfig& c, const std::string& v) {
            const Int parsed = static_cast<Int>(parse_uint(key, v));
            if constexpr (std::is_same_v<Owner, trainer::TrainConfig>) {
              c.train.*member = parsed;
            } else if constexpr (std::is_same_v<Owner, model::ModelConfig>) {
              c.train.model.*member = parsed;
            } else {
              c.*member = parsed;
            }
          }};
}

Field path(std::string key, std::string RunConfig::*member) {
  return {key, [member](const RunConfig& c) { return c.*member; },
          [member](RunConfig& c, const std::string& v) { c.*member = v; }};
}

const std::vector<Field>& fields() {
  using TC = trainer::TrainConfig;
  using MC = model::ModelConfig;
  static const std::vector<Field> table = {
      integer("seed", &TC::seed),
      integer("data_seed", &RunConfig::data_seed),
      integer("n_train", &RunConfig::n_train),
      integer("n_test", &RunConfig::n_test),
      path("train_data", &RunConfig::train_data),
      path("test_data", &RunConfig::test_data),
      path("checkpoint_in", &RunConfig::checkpoint_in),
      path("checkpoint_out", &RunConfig::checkpoint_out),
      path("metrics_out", &RunConfig::metrics_out),
      path("export_out", &RunConfig::export_out),
      integer("d_model", &MC::d_model),
      integer("n_layers", &MC::n_layers),
      integer("n_heads", &MC::n_heads),
      integer("d_ff", &MC::d_ff),
      integer("max_seq_len", &MC::max_seq_len),
      integer("d_proj", &MC::d_proj),
      {"signal_mode",
       [](const RunConfig& c) { return std::string(trainer::signal_mode_name(c.train.signal_mode)); },
       [](RunConfig& c, const std::string& v) {
         const auto m = trainer::parse_signal_mode(v);
         if (!m) reject("signal_mode", "expected positive, negative, none or reft, got '" + v + "'");
         c.train.signal_mode = *m;
       }},
      {"reward_mode",
       [](const RunConfig& c) { return std::string(rollout::reward_mode_name(c.train.reward_mode)); },
       [](RunConfig& c, const std::string& v) {
         const auto m = rollout::parse_reward_mode(v);
         if (!m) reject("reward_mode", "expected fixed or embedding, got '" + v + "'");
         c.train.reward_mode = *m;
       }},
      real("kl_beta", &TC::kl_coef),
      real("gamma", &TC::gamma),
      real("lambda", &TC::lambda),
      real("value_coef", &TC::value_coef),
      real("epsilon", &TC::clip_eps),
      real("tau", &TC::contrast_temperature),
      real("contrast_coef", &TC::contrast_coef),
      integer("updates_per_step", &TC::updates_per_step),
      integer("rl_steps", &TC::rl_steps),
      integer("batch_size", &TC::batch_size),
      integer("max_new_tokens", &TC::max_new_tokens),
      real("temperature", &TC::sample_temperature),
      real("rl_learning_rate", &TC::rl_learning_rate),
      integer("sft_epochs", &TC::sft_epochs),
      integer("sft_batch_size", &TC::sft_batch_size),
      real("sft_learning_rate", &TC::sft_learning_rate),
      real("sft_weight_decay", &TC::sft_weight_decay),
      real("sft_ema_decay", &TC::sft_ema_decay),
      real("adam_beta1", &TC::adam_beta1),
      real("adam_beta2", &TC::adam_beta2),
      real("adam_eps", &TC::adam_eps),
      integer("eval_interval", &TC::eval_interval),
      integer("checkpoint_interval", &TC::checkpoint_interval),
  };
  return table;
}

void assign(RunConfig& c, const std::string& raw_key, const std::string& value) {
  const std::string key = normalize_key(raw_key);
  for (const Field& f : fields()) {
    if (f.key == key) {
      f.set(c, value);
      return;
    }
  }
  reject(key, "unknown key");
}

// Maps trainer validation failures onto the user-facing key names.
std::string user_key(const std::string& field) {
  static const std::pair<const char*, const char*> names[] = {
      {"kl_coef", "kl_beta"},          {"clip_eps", "epsilon"},
      {"contrast_temperature", "tau"}, {"sample_temperature", "temperature"}};
  for (const auto& [internal, external] : names) {
    if (field == internal) return external;
  }
  return field;
}

void require_file(const std::string& key, const std::string& path) {
  if (path.empty()) reject(key, "a path is required");
  if (!std::filesystem::is_regular_file(path)) reject(key, "file does not exist: " + path);
}

void validate(const RunConfig& c) {
  try {
    c.train.validate();
  } catch (const Error& e) {
    const std::string msg = e.message();
    const auto colon = msg.find(':');
    if (colon == std::string::npos) throw Error("cli", msg);
    reject(user_key(msg.substr(0, colon)), trim(msg.substr(colon + 1)));
  }
  if (c.train.model.vocab_size != model::ModelConfig{}.vocab_size) {
    reject("vocab_size", "fixed by the task vocabulary");
  }
  if (c.train.max_new_tokens + 16 > c.train.model.max_seq_len) {
    reject("max_new_tokens", "prompt plus generation must fit in max_seq_len");
  }
  switch (c.command) {
    case Command::gen_data:
      if (c.n_train == 0) reject("n_train", "must be positive");
      if (c.n_test == 0) reject("n_test", "must be positive");
      if (c.train_data.empty()) reject("train_data", "a path is required");
      if (c.test_data.empty()) reject("test_data", "a path is required");
      break;
    case Command::sft:
    case Command::train:
      require_file("train_data", c.train_data);
      require_file("test_data", c.test_data);
      if (!c.checkpoint_in.empty()) require_file("checkpoint_in", c.checkpoint_in);
      break;
    case Command::eval:
      require_file("checkpoint_in", c.checkpoint_in);
      require_file("test_data", c.test_data);
      break;
    case Command::export_metrics:
      require_file("metrics_out", c.metrics_out);
      break;
  }
}

}  // namespace

RunConfig parse_config(Command command, std::string_view file_text, const Overrides& overrides) {
  RunConfig c;
  c.command = command;
  std::istringstream in{std::string(file_text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw Error("cli", "config line " + std::to_string(line_no) + ": expected key=value");
    }
    assign(c, trim(std::string_view(body).substr(0, eq)), trim(std::string_view(body).substr(eq + 1)));
  }
  for (const auto& [key, value] : overrides) assign(c, key, value);
  validate(c);
  return c;
}

RunConfig load_config(Command command, const std::string& path, const Overrides& overrides) {
  std::string text;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw Error("cli", "config: cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  return parse_config(command, text, overrides);
}

std::string echo_config(const RunConfig& config) {
  std::string out;
  for (const Field& f : fields()) out += f.key + "=" + f.get(config) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const Field& f : fields()) keys.push_back(f.key);
  return keys;
}

}  // namespace carft::cli
