// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "carft/common/error.hpp"
#include "carft/task/dataset.hpp"
#include "carft/task/vocab.hpp"

using namespace carft;
using task::Vocab;

TEST_CASE("vocabulary round-trips text and rejects unknown symbols") {
  const Vocab& v = Vocab::standard();
  CHECK(v.size() == 21);
  CHECK(v.symbol(v.eos()) == "<eos>");
  const std::string text = "Q: 3+4*2=? A:4*2=8 ; 3+8=11 ; Answer: 11";
  const TokenSeq ids = v.tokenize(text);
  CHECK(v.detokenize(ids) == text);
  CHECK(v.tokenize("Answer:").size() == 1);
  CHECK(v.tokenize("A:").size() == 1);
  try {
    v.tokenize("1+x");
    FAIL("expected rejection");
  } catch (const Error& e) {
    CHECK(e.module() == "task");
    CHECK(std::string(e.message()).find("'x'") != std::string::npos);
  }
}

TEST_CASE("samples respect operator precedence") {
  const task::Sample s = task::make_sample(3, '+', 4, '*', 2);
  CHECK(s.answer == 11);
  CHECK(s.question == "Q: 3+4*2=? A:");
  CHECK(s.cot == "4*2=8 ; 3+8=11 ; Answer: 11");
  const task::Sample p = task::make_sample(3, '*', 4, '+', 2);
  CHECK(p.answer == 14);
  CHECK(p.cot == "3*4=12 ; 12+2=14 ; Answer: 14");
  CHECK(task::make_sample(9, '+', 9, '+', 9).answer == 27);
  CHECK_THROWS_AS(task::make_sample(1, '-', 2, '+', 3), Error);
}

TEST_CASE("every canonical chain of thought yields its gold answer") {
  for (const auto& s : task::gen_dataset(300, 3, task::Split::train)) {
    CHECK(task::extract_answer(s.cot) == s.answer);
    CHECK(task::extract_answer(std::span<const TokenId>(s.cot_tokens)) == s.answer);
    CHECK(s.answer <= 90);
  }
}

TEST_CASE("dataset generation is deterministic and splits are disjoint") {
  const auto a = task::gen_dataset(100, 7, task::Split::train);
  const auto b = task::gen_dataset(100, 7, task::Split::train);
  CHECK(a == b);
  CHECK(a.size() == 100);
  CHECK(task::gen_dataset(100, 8, task::Split::train) != a);
  std::set<std::string> train_q;
  for (const auto& s : task::gen_dataset(500, 1, task::Split::train)) train_q.insert(s.question);
  for (const auto& s : task::gen_dataset(200, 2, task::Split::test)) {
    CHECK(train_q.count(s.question) == 0);
    CHECK(task::split_of(s.question) == task::Split::test);
  }
  CHECK_THROWS_AS(task::gen_dataset(0, 1, task::Split::train), Error);
}

TEST_CASE("answer extraction") {
  CHECK(task::extract_answer("x ; Answer: 42") == 42);
  CHECK(task::extract_answer("Answer: 1 ; Answer:  7") == 7);
  CHECK_FALSE(task::extract_answer("3+4=7").has_value());
  CHECK_FALSE(task::extract_answer("Answer: ;").has_value());
  CHECK(task::extract_answer("Answer: 99999999999999999999999") == INT64_MAX);
  CHECK(task::check(std::optional<std::int64_t>(5), 5) == task::Outcome::correct);
  CHECK(task::check(std::optional<std::int64_t>(4), 5) == task::Outcome::wrong_extractable);
  CHECK(task::check(std::nullopt, 5) == task::Outcome::unextractable);
  CHECK(task::outcome_name(task::Outcome::wrong_extractable) == "wrong-extractable");
}

TEST_CASE("dataset files round-trip and malformed lines are reported") {
  const auto dir = std::filesystem::temp_directory_path() / "carft_task_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "data.tsv";
  const auto samples = task::gen_dataset(20, 4, task::Split::test);
  task::write_dataset(path, samples);
  CHECK(task::read_dataset(path) == samples);
  {
    std::ofstream out(dir / "bad.tsv");
    out << "Q: 1+2+3=? A:\t1+2=3 ; 3+3=6 ; Answer: 6\tsix\n";
  }
  CHECK_THROWS_AS(task::read_dataset(dir / "bad.tsv"), Error);
  CHECK_THROWS_AS(task::read_dataset(dir / "missing.tsv"), Error);
  std::filesystem::remove_all(dir);
}
