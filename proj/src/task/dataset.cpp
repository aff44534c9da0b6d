// SPDX-License-Identifier: Apache-2.0

#include "carft/task/dataset.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <limits>

#include "carft/common/error.hpp"
#include "carft/common/random.hpp"
#include "carft/task/vocab.hpp"

namespace carft::task {
namespace {

constexpr std::array<std::array<char, 2>, 3> kOperatorPairs = {{{'+', '+'}, {'+', '*'}, {'*', '+'}}};

std::int64_t apply(std::int64_t x, char op, std::int64_t y) { return op == '*' ? x * y : x + y; }

std::string step(std::int64_t x, char op, std::int64_t y) {
  return std::to_string(x) + op + std::to_string(y) + '=' + std::to_string(apply(x, op, y));
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Sample make_sample(int a, char op1, int b, char op2, int c) {
  for (char op : {op1, op2}) {
    if (op != '+' && op != '*') throw Error("task", std::string("unsupported operator '") + op + "'");
  }
  Sample s;
  s.question = "Q: " + std::to_string(a) + op1 + std::to_string(b) + op2 + std::to_string(c) + "=? A:";
  std::string first, second;
  if (op2 == '*' && op1 == '+') {
    // Multiplication binds tighter: b*c first, then a+(b*c).
    const std::int64_t p = apply(b, op2, c);
    first = step(b, op2, c);
    second = step(a, op1, p);
    s.answer = apply(a, op1, p);
  } else {
    const std::int64_t p = apply(a, op1, b);
    first = step(a, op1, b);
    second = step(p, op2, c);
    s.answer = apply(p, op2, c);
  }
  s.cot = first + " ; " + second + " ; " + std::string(kAnswerMarker) + " " + std::to_string(s.answer);
  const Vocab& vocab = Vocab::standard();
  s.question_tokens = vocab.tokenize(s.question);
  s.cot_tokens = vocab.tokenize(s.cot);
  return s;
}

Split split_of(std::string_view question) {
  return fnv1a(question) % 5 == 0 ? Split::test : Split::train;
}

std::vector<Sample> gen_dataset(std::size_t n, std::uint64_t seed, Split split) {
  if (n == 0) throw Error("task", "dataset size must be positive");
  Rng rng(derive_seed(seed, {split == Split::train ? 1u : 2u}));
  std::vector<Sample> out;
  out.reserve(n);
  while (out.size() < n) {
    const auto a = static_cast<int>(rng.below(10));
    const auto b = static_cast<int>(rng.below(10));
    const auto c = static_cast<int>(rng.below(10));
    const auto& ops = kOperatorPairs[rng.below(kOperatorPairs.size())];
    Sample s = make_sample(a, ops[0], b, ops[1], c);
    if (split_of(s.question) == split) out.push_back(std::move(s));
  }
  return out;
}

std::optional<std::int64_t> extract_answer(std::string_view text) {
  const std::size_t marker = text.rfind(kAnswerMarker);
  if (marker == std::string_view::npos) return std::nullopt;
  std::size_t pos = marker + kAnswerMarker.size();
  while (pos < text.size() && text[pos] == ' ') ++pos;
  std::size_t end = pos;
  while (end < text.size() && text[end] >= '0' && text[end] <= '9') ++end;
  if (end == pos) return std::nullopt;
  std::int64_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + end, value);
  if (ec == std::errc::result_out_of_range) return std::numeric_limits<std::int64_t>::max();
  return value;
}

std::optional<std::int64_t> extract_answer(std::span<const TokenId> tokens) {
  return extract_answer(Vocab::standard().detokenize(tokens));
}

Outcome check(std::optional<std::int64_t> extracted, std::int64_t gold) {
  if (!extracted) return Outcome::unextractable;
  return *extracted == gold ? Outcome::correct : Outcome::wrong_extractable;
}

std::string_view outcome_name(Outcome outcome) {
  switch (outcome) {
    case Outcome::correct: return "correct";
    case Outcome::wrong_extractable: return "wrong-extractable";
    case Outcome::unextractable: return "unextractable";
  }
  return "unknown";
}

void write_dataset(const std::filesystem::path& path, std::span<const Sample> samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("task", "cannot open " + path.string() + " for writing");
  for (const Sample& s : samples) out << s.question << '\t' << s.cot << '\t' << s.answer << '\n';
  if (!out) throw Error("task", "write failed for " + path.string());
}

std::vector<Sample> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("task", "cannot open dataset " + path.string());
  const Vocab& vocab = Vocab::standard();
  std::vector<Sample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::size_t t1 = line.find('\t');
    const std::size_t t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) {
      throw Error("task", path.string() + ":" + std::to_string(line_no) + ": expected 3 tab-separated fields");
    }
    Sample s;
    s.question = line.substr(0, t1);
    s.cot = line.substr(t1 + 1, t2 - t1 - 1);
    const std::string gold = line.substr(t2 + 1);
    const auto [ptr, ec] = std::from_chars(gold.data(), gold.data() + gold.size(), s.answer);
    if (ec != std::errc() || ptr != gold.data() + gold.size()) {
      throw Error("task", path.string() + ":" + std::to_string(line_no) + ": bad gold answer '" + gold + "'");
    }
    s.question_tokens = vocab.tokenize(s.question);
    s.cot_tokens = vocab.tokenize(s.cot);
    out.push_back(std::move(s));
  }
  if (out.empty()) throw Error("task", "dataset " + path.string() + " is empty");
  return out;
}

}  // namespace carft::task
