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

#include "codefend/prefixgen/tokenizer.hpp"

#include <array>
#include <cctype>

#include <fmt/format.h>

#include "codefend/core/error.hpp"
#include "codefend/core/hash.hpp"
#include "codefend/surrogate/lexicon.hpp"

namespace codefend::prefixgen {
namespace {

constexpr std::array<std::string_view, WordTokenizer::kNumSpecial> kSpecials = {
    "<pad>", "<s>", "</s>", "[INST]", "[/INST]", "<unk>"};
constexpr std::string_view kPunctuation = ".,:;?!-\"()";

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '\'';
}

}  // namespace

WordTokenizer::WordTokenizer(const std::vector<std::string>& words) {
  auto add = [&](std::string piece) {
    if (ids_.contains(piece)) return;
    ids_.emplace(piece, static_cast<TokenId>(pieces_.size()));
    pieces_.push_back(std::move(piece));
  };
  for (auto s : kSpecials) add(std::string(s));
  for (char c : kPunctuation) add(std::string(1, c));
  for (const auto& w : words) {
    for (auto& norm : surrogate::normalize_words(w)) add(std::move(norm));
  }
}

WordTokenizer WordTokenizer::surrogate() { return WordTokenizer(surrogate::all_words()); }

Tokens WordTokenizer::encode(std::string_view text) const {
  Tokens out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c)) != 0) {
      ++i;
      continue;
    }
    bool matched = false;
    for (std::size_t s = 0; s < kSpecials.size(); ++s) {
      if (text.substr(i).starts_with(kSpecials[s])) {
        out.push_back(static_cast<TokenId>(s));
        i += kSpecials[s].size();
        matched = true;
        break;
      }
    }
    if (matched) continue;
    if (is_word_char(c)) {
      std::string word;
      while (i < text.size() && is_word_char(text[i])) {
        word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[i]))));
        ++i;
      }
      const auto it = ids_.find(word);
      out.push_back(it == ids_.end() ? kUnk : it->second);
      continue;
    }
    const auto it = ids_.find(std::string(1, c));
    out.push_back(it == ids_.end() ? kUnk : it->second);
    ++i;
  }
  return out;
}

std::string WordTokenizer::decode(std::span<const TokenId> tokens) const {
  std::string out;
  for (TokenId id : tokens) {
    const std::string& p = piece(id);
    const bool punct = p.size() == 1 && kPunctuation.find(p[0]) != std::string_view::npos;
    if (!out.empty() && !punct && id != kEos && !out.ends_with("<s>")) {
      out.push_back(' ');
    }
    out += p;
  }
  return out;
}

const std::string& WordTokenizer::piece(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= pieces_.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("token id {} outside vocab of {}", id, pieces_.size()));
  }
  return pieces_[static_cast<std::size_t>(id)];
}

std::string WordTokenizer::fingerprint() const {
  Fnv1a h;
  for (const auto& p : pieces_) h.update(p).update(std::string_view("\n"));
  return h.hex();
}

}  // namespace codefend::prefixgen
