// SPDX-License-Identifier: Apache-2.0

#ifndef CARFT_CLI_CONFIG_HPP_
#define CARFT_CLI_CONFIG_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "carft/trainer/config.hpp"

namespace carft::cli {

enum class Command { gen_data, sft, train, eval, export_metrics };

std::string_view command_name(Command command);
std::optional<Command> parse_command(std::string_view name);

struct RunConfig {
  Command command = Command::train;
  trainer::TrainConfig train;

  std::uint64_t data_seed = 7;
  std::size_t n_train = 512;
  std::size_t n_test = 128;

  std::string train_data = "train.tsv";
  std::string test_data = "test.tsv";
  std::string checkpoint_in;   // train: start reinforcement from here, skipping SFT
  std::string checkpoint_out;
  std::string metrics_out;     // export-metrics reads this file
  std::string export_out;      // empty: export to stdout
};

using Overrides = std::vector<std::pair<std::string, std::string>>;

// Applies flat `key = value` lines (# starts a comment) and then the
// overrides, in order. Dashes in keys are read as underscores. Throws
// Error("cli", "<key>: <reason>") on unknown keys, malformed or out-of-range
// values, and missing input paths for the command.
RunConfig parse_config(Command command, std::string_view file_text, const Overrides& overrides);

// Reads the file at `path` (empty path: no file) and calls the above.
RunConfig load_config(Command command, const std::string& path, const Overrides& overrides);

// Every key with its resolved value, one `key=value` per line, in a fixed
// order. Feeding the text back to parse_config yields the same RunConfig.
std::string echo_config(const RunConfig& config);

// Names of all accepted keys in echo order.
std::vector<std::string> config_keys();

}  // namespace carft::cli

#endif  // CARFT_CLI_CONFIG_HPP_
