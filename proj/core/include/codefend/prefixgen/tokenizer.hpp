// Copyright 2026 The codefend Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "codefend/promptopt/prompt_space.hpp"

namespace codefend::prefixgen {

using promptopt::TokenId;
using promptopt::Tokens;

// Word-level tokenizer. Special markers are matched verbatim, words are
// case-folded runs of letters, digits and apostrophes, and each punctuation
// character is its own token. Out-of-vocabulary words become <unk>.
class WordTokenizer {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kInst = 3;
  static constexpr TokenId kInstEnd = 4;
  static constexpr TokenId kUnk = 5;
  static constexpr TokenId kNumSpecial = 6;

  explicit WordTokenizer(const std::vector<std::string>& words);
  // Tokenizer over the surrogate lexicon.
  static WordTokenizer surrogate();

  std::size_t vocab_size() const noexcept { return pieces_.size(); }
  Tokens encode(std::string_view text) const;
  // Pieces are joined by single spaces, except that punctuation and </s>
  // attach to what precedes them and nothing is inserted after <s>.
  std::string decode(std::span<const TokenId> tokens) const;
  const std::string& piece(TokenId id) const;
  bool is_special(TokenId id) const noexcept { return id >= 0 && id < kNumSpecial; }
  std::string fingerprint() const;

 private:
  std::vector<std::string> pieces_;
  std::unordered_map<std::string, TokenId> ids_;
};

}  // namespace codefend::prefixgen
