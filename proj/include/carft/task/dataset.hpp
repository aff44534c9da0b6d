// SPDX-License-Identifier: Apache-2.0

#ifndef CARFT_TASK_DATASET_HPP_
#define CARFT_TASK_DATASET_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "carft/common/types.hpp"

namespace carft::task {

// One (question, annotated chain-of-thought, gold answer) triplet.
struct Sample {
  std::string question;
  std::string cot;
  std::int64_t answer = 0;
  TokenSeq question_tokens;
  TokenSeq cot_tokens;

  friend bool operator==(const Sample&, const Sample&) = default;
};

enum class Split { train, test };

// Builds the sample for "a op1 b op2 c" with standard precedence; operators
// are '+' or '*'.
Sample make_sample(int a, char op1, int b, char op2, int c);

// Fixed partition of the question space; independent of any seed so every
// train set is disjoint from every test set.
Split split_of(std::string_view question);

// n questions drawn uniformly (digits in 0-9, operator pairs from
// {++, +*, *+}) restricted to the requested split. Pure in (n, seed, split).
std::vector<Sample> gen_dataset(std::size_t n, std::uint64_t seed, Split split);

// Value after the last "Answer:" marker: optional spaces, then the maximal
// digit run. Absent when there is no marker or no digits follow it. Runs
// longer than 18 digits saturate at INT64_MAX.
std::optional<std::int64_t> extract_answer(std::string_view text);
std::optional<std::int64_t> extract_answer(std::span<const TokenId> tokens);

enum class Outcome { correct, wrong_extractable, unextractable };

Outcome check(std::optional<std::int64_t> extracted, std::int64_t gold);
std::string_view outcome_name(Outcome outcome);

// Tab-separated lines: question, cot, gold answer.
void write_dataset(const std::filesystem::path& path, std::span<const Sample> samples);
std::vector<Sample> read_dataset(const std::filesystem::path& path);

}  // namespace carft::task

#endif  // CARFT_TASK_DATASET_HPP_
