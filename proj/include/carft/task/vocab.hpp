// SPDX-License-Identifier: Apache-2.0

#ifndef CARFT_TASK_VOCAB_HPP_
#define CARFT_TASK_VOCAB_HPP_

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "carft/common/types.hpp"

namespace carft::task {

// Bijective symbol <-> id table for the arithmetic language. Multi-character
// markers ("Q:", "A:", "Answer:") are single tokens; tokenisation is greedy
// longest-match.
class Vocab {
 public:
  static const Vocab& standard();

  explicit Vocab(std::vector<std::string> symbols);

  std::size_t size() const noexcept { return symbols_.size(); }
  TokenId id(std::string_view symbol) const;
  const std::string& symbol(TokenId id) const;

  TokenId pad() const noexcept { return pad_; }
  TokenId eos() const noexcept { return eos_; }

  // Rejects text containing a symbol outside the vocabulary, naming it.
  TokenSeq tokenize(std::string_view text) const;
  std::string detokenize(std::span<const TokenId> ids) const;

 private:
  std::vector<std::string> symbols_;
  TokenId pad_ = -1;
  TokenId eos_ = -1;
};

inline constexpr std::string_view kPadSymbol = "<pad>";
inline constexpr std::string_view kEosSymbol = "<eos>";
inline constexpr std::string_view kAnswerMarker = "Answer:";

}  // namespace carft::task

#endif  // CARFT_TASK_VOCAB_HPP_
