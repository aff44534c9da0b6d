// SPDX-License-Identifier: Apache-2.0

#ifndef CARFT_CLI_RUN_HPP_
#define CARFT_CLI_RUN_HPP_

#include <ostream>
#include <string>
#include <vector>

#include "carft/cli/config.hpp"

namespace carft::cli {

// Executes one command. Returns 0 on success; errors are reported on `err`
// as "error: <module>: <message>" with exit status 1.
int run(const RunConfig& config, std::ostream& out, std::ostream& err);

// Full command line: carft <command> --config <path> [--key value | --key=value ...]
int main_entry(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// (step, eval_accuracy) rows of a metrics file as tab-separated text.
std::string export_accuracy_curve(const std::string& metrics_path);

}  // namespace carft::cli

#endif  // CARFT_CLI_RUN_HPP_
