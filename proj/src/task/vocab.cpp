// SPDX-License-Identifier: Apache-2.0

#include "carft/task/vocab.hpp"

#include <set>

#include "carft/common/error.hpp"

namespace carft::task {

const Vocab& Vocab::standard() {
  static const Vocab vocab({std::string(kPadSymbol), std::string(kEosSymbol),
                            "0", "1", "2", "3", "4", "5", "6", "7", "8", "9",
                            "+", "*", "=", ";", "?", " ", "Q:", "A:",
                            std::string(kAnswerMarker)});
  return vocab;
}

Vocab::Vocab(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {
  std::set<std::string_view> seen;
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    if (symbols_[i].empty()) throw Error("task", "empty vocabulary symbol");
    if (!seen.insert(symbols_[i]).second) {
      throw Error("task", "duplicate vocabulary symbol '" + symbols_[i] + "'");
    }
    if (symbols_[i] == kPadSymbol) pad_ = static_cast<TokenId>(i);
    if (symbols_[i] == kEosSymbol) eos_ = static_cast<TokenId>(i);
  }
  if (pad_ < 0 || eos_ < 0) throw Error("task", "vocabulary lacks padding or end-of-sequence");
}

TokenId Vocab::id(std::string_view symbol) const {
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    if (symbols_[i] == symbol) return static_cast<TokenId>(i);
  }
  throw Error("task", "unknown symbol '" + std::string(symbol) + "'");
}

const std::string& Vocab::symbol(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= symbols_.size()) {
    throw Error("task", "token id " + std::to_string(id) + " out of range");
  }
  return symbols_[static_cast<std::size_t>(id)];
}

TokenSeq Vocab::tokenize(std::string_view text) const {
  TokenSeq out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t best_len = 0;
    TokenId best = -1;
    for (std::size_t i = 0; i < symbols_.size(); ++i) {
      const std::string& s = symbols_[i];
      if (s.size() > best_len && text.compare(pos, s.size(), s) == 0) {
        best_len = s.size();
        best = static_cast<TokenId>(i);
      }
    }
    if (best < 0) {
      throw Error("task", "out-of-vocabulary symbol '" + std::string(1, text[pos]) +
                              "' at offset " + std::to_string(pos));
    }
    out.push_back(best);
    pos += best_len;
  }
  return out;
}

std::string Vocab::detokenize(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) out += symbol(id);
  return out;
}

}  // namespace carft::task
