// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "carft/cli/config.hpp"
#include "carft/cli/run.hpp"
#include "carft/common/error.hpp"

using namespace carft;
using cli::Command;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result call(std::vector<std::string> args) {
  args.insert(args.begin(), "carft");
  std::ostringstream out, err;
  const int code = cli::main_entry(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string rejection(Command cmd, std::string_view text, const cli::Overrides& o = {}) {
  try {
    cli::parse_config(cmd, text, o);
  } catch (const Error& e) {
    return e.message();
  }
  return "";
}

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / name) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string operator/(const std::string& f) const { return (path_ / f).string(); }

 private:
  fs::path path_;
};

const std::vector<std::string> kTinyModel = {
    "--d_model", "16", "--n_layers", "1", "--n_heads", "2", "--d_ff", "32", "--d_proj", "8",
    "--max_seq_len", "48", "--max_new_tokens", "24", "--batch_size", "4", "--sft_batch_size", "4"};

std::vector<std::string> with_tiny(std::vector<std::string> args) {
  args.insert(args.end(), kTinyModel.begin(), kTinyModel.end());
  return args;
}

}  // namespace

TEST_CASE("empty configuration gives the documented defaults") {
  const auto c = cli::parse_config(Command::gen_data, "", {});
  const trainer::TrainConfig d;
  CHECK(c.train.kl_coef == 0.05);
  CHECK(c.train.contrast_temperature == 0.2);
  CHECK(c.train.contrast_coef == 1e-3);
  CHECK(c.train.gamma == 0.95);
  CHECK(c.train.lambda == 1.0);
  CHECK(c.train.value_coef == 5.0);
  CHECK(c.train.clip_eps == 0.2);
  CHECK(c.train.updates_per_step == 2);
  CHECK(c.train.batch_size == d.batch_size);
  CHECK(c.train.rl_steps == d.rl_steps);
  CHECK(c.train.sft_epochs == d.sft_epochs);
  CHECK(c.train.signal_mode == trainer::SignalMode::positive);
  CHECK(c.train.reward_mode == rollout::RewardMode::embedding);
  CHECK(c.train.model == model::ModelConfig{});
  CHECK(c.n_train == 512);
  CHECK(c.n_test == 128);
}

TEST_CASE("file values, flag overrides and key spelling") {
  const std::string text = "# comment\nkl_beta = 0.1\n\nseed=3  # trailing\nsignal-mode = reft\n";
  const auto c = cli::parse_config(Command::gen_data, text, {{"kl-beta", "0.05"}, {"tau", "0.5"}});
  CHECK(c.train.kl_coef == 0.05);
  CHECK(c.train.seed == 3);
  CHECK(c.train.contrast_temperature == 0.5);
  CHECK(c.train.signal_mode == trainer::SignalMode::none);
}

TEST_CASE("bad values are rejected with the key name") {
  CHECK(rejection(Command::gen_data, "epsilon = 1.5").rfind("epsilon:", 0) == 0);
  CHECK(rejection(Command::gen_data, "tau = 0").rfind("tau:", 0) == 0);
  CHECK(rejection(Command::gen_data, "contrast_coef = -1").rfind("contrast_coef:", 0) == 0);
  CHECK(rejection(Command::gen_data, "sft_ema_decay = 1").rfind("sft_ema_decay:", 0) == 0);
  CHECK(rejection(Command::gen_data, "sft_weight_decay = -0.1").rfind("sft_weight_decay:", 0) == 0);
  CHECK(rejection(Command::gen_data, "updates_per_step = 0").rfind("updates_per_step:", 0) == 0);
  CHECK(rejection(Command::gen_data, "bogus = 1").rfind("bogus:", 0) == 0);
  CHECK(rejection(Command::gen_data, "seed = abc").rfind("seed:", 0) == 0);
  CHECK(rejection(Command::gen_data, "signal_mode = both").rfind("signal_mode:", 0) == 0);
  CHECK(rejection(Command::gen_data, "no equals sign") != "");
  CHECK(rejection(Command::gen_data, "", {{"n_heads", "3"}}) != "");
  CHECK(rejection(Command::train, "train_data = /nonexistent/x.tsv").rfind("train_data:", 0) == 0);
  CHECK(rejection(Command::eval, "").rfind("checkpoint_in:", 0) == 0);
  CHECK(rejection(Command::export_metrics, "metrics_out = /nonexistent/m").rfind("metrics_out:", 0) == 0);
}

TEST_CASE("echoed configuration parses back to the same values") {
  const auto c = cli::parse_config(Command::gen_data, "tau = 0.3\nkl_beta = 0.07\nrl_steps = 17\n",
                                   {{"reward_mode", "fixed"}, {"signal_mode", "negative"}});
  const std::string echo = cli::echo_config(c);
  const auto again = cli::parse_config(Command::gen_data, echo, {});
  CHECK(cli::echo_config(again) == echo);
  CHECK(again.train.contrast_temperature == 0.3);
  CHECK(again.train.kl_coef == 0.07);
  std::size_t lines = 0;
  for (char ch : echo) lines += ch == '\n';
  CHECK(lines == cli::config_keys().size());
}

TEST_CASE("command names") {
  CHECK(cli::parse_command("gen-data") == Command::gen_data);
  CHECK(cli::parse_command("export-metrics") == Command::export_metrics);
  CHECK_FALSE(cli::parse_command("fly").has_value());
  CHECK(cli::command_name(Command::sft) == "sft");
}

TEST_CASE("command line errors exit with status 1") {
  const auto unknown = call({"fly"});
  CHECK(unknown.code == 1);
  CHECK(unknown.err.find("error: cli:") != std::string::npos);
  CHECK(call({"gen-data", "--bogus", "1"}).code == 1);
  CHECK(call({"gen-data", "--seed"}).code == 1);
  CHECK(call({"gen-data", "--config", "/nonexistent/c.cfg"}).code == 1);
  CHECK(call({}).code == 1);
}

TEST_CASE("commands end to end") {
  TempDir dir("carft_test_cli");
  const std::string train = dir / "train.tsv";
  const std::string test = dir / "test.tsv";
  const std::vector<std::string> data = {"--train_data", train, "--test_data", test,
                                         "--n_train", "100", "--n_test", "12", "--data_seed", "7"};

  auto gen = data;
  gen.insert(gen.begin(), "gen-data");
  REQUIRE(call(gen).code == 0);
  const std::string first = slurp(train);
  const std::string first_test = slurp(test);
  REQUIRE(call(gen).code == 0);
  CHECK(slurp(train) == first);
  CHECK(slurp(test) == first_test);

  const std::string cfg = dir / "run.cfg";
  std::ofstream(cfg) << "n_train = 100\nn_test = 12\nsft_epochs = 1\nrl_steps = 2\n";
  auto sft = with_tiny({"sft", "--config", cfg, "--train_data", train, "--test_data", test,
                        "--checkpoint_out", dir / "sft.ckpt", "--metrics_out", dir / "sft.jsonl"});
  const auto s = call(sft);
  INFO(s.err);
  REQUIRE(s.code == 0);
  CHECK(fs::exists(dir / "sft.ckpt"));
  CHECK(fs::exists(dir / "sft.jsonl.cfg"));

  const auto ev = call(with_tiny({"eval", "--checkpoint_in", dir / "sft.ckpt", "--test_data", test}));
  REQUIRE(ev.code == 0);
  CHECK(std::regex_match(ev.out, std::regex("accuracy: [01]\\.[0-9]{4}\n")));

  auto rl = with_tiny({"train", "--config", cfg, "--train_data", train, "--test_data", test,
                       "--checkpoint_in", dir / "sft.ckpt", "--metrics_out", dir / "rl.jsonl",
                       "--eval_interval=1"});
  REQUIRE(call(rl).code == 0);
  const auto ex = call({"export-metrics", "--metrics_out", dir / "rl.jsonl"});
  REQUIRE(ex.code == 0);
  CHECK(std::regex_match(ex.out, std::regex("step\teval_accuracy\n(\\d+\t[01]\\.\\d+\n){2}")));

  // The echoed configuration reproduces the run.
  const auto rerun = call({"train", "--config", dir / "rl.jsonl.cfg", "--metrics_out", dir / "rl2.jsonl"});
  REQUIRE(rerun.code == 0);
  const std::string a = slurp(dir / "rl.jsonl");
  const std::string b = slurp(dir / "rl2.jsonl");
  CHECK(a.substr(a.find('\n')) == b.substr(b.find('\n')));

  const auto missing = call({"eval", "--checkpoint_in", dir / "none.ckpt", "--test_data", test});
  CHECK(missing.code == 1);
}

TEST_CASE("the installed binary reports exit status") {
  const char* bin = std::getenv("CARFT_CLI");
  if (bin == nullptr) return;
  TempDir dir("carft_test_cli_bin");
  const std::string ok = std::string(bin) + " gen-data --n_train 4 --n_test 2 --train_data " +
                         (dir / "a.tsv") + " --test_data " + (dir / "b.tsv") + " > /dev/null";
  CHECK(std::system(ok.c_str()) == 0);
  const std::string bad = std::string(bin) + " gen-data --epsilon 1.5 2> /dev/null";
  CHECK(std::system(bad.c_str()) != 0);
}
