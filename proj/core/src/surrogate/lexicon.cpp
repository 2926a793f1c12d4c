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

#include "codefend/surrogate/lexicon.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <set>

namespace codefend::surrogate {

namespace {

constexpr auto kClassWords = std::to_array<std::string_view>({
    "cat", "dog", "car", "tree", "boat", "bird", "house", "fish", "skull"});

constexpr auto kDefenseWords = std::to_array<std::string_view>({
    "robust",   "focus", "shape",  "global", "carefully", "ignore",
    "texture",  "noise", "steady", "overall", "structure", "truthfully"});

constexpr auto kCommonWords = std::to_array<std::string_view>({
    "a",       "an",       "the",      "of",        "to",       "in",      "on",
    "is",      "it",       "this",     "that",      "what",     "which",   "who",
    "where",   "how",      "shown",    "image",     "picture",  "photo",   "object",
    "describe", "answer",  "question", "please",    "about",    "following", "tell",
    "me",      "give",     "brief",    "caption",   "main",     "there",   "here",
    "see",     "look",     "now",      "and",       "or",       "with",    "for",
    "be",      "are",      "do",       "you",       "can",      "your",    "say",
    "write",   "one",      "word",     "scene",     "visible",  "color",   "kind",
    "thing",   "add",      "prefix",   "generate",  "protective", "only",  "more",
    "simple",  "clear",    "just",     "some",      "very",     "most",    "model",
    "reply",   "input",    "user",     "query",     "briefly",  "exactly", "seen",
    "inside"});

}  // namespace

std::span<const std::string_view> class_words() { return kClassWords; }
std::size_t num_image_classes() { return kClassWords.size() - 1; }
std::string_view target_word() { return kClassWords.back(); }
std::span<const std::string_view> defense_words() { return kDefenseWords; }
std::span<const std::string_view> common_words() { return kCommonWords; }

std::vector<std::string> all_words() {
  std::vector<std::string> out;
  std::set<std::string_view> seen;
  auto add = [&](std::span<const std::string_view> words) {
    for (auto w : words) {
      if (seen.insert(w).second) out.emplace_back(w);
    }
  };
  add(kClassWords);
  add(kDefenseWords);
  add(kCommonWords);
  return out;
}

std::vector<std::string> normalize_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || ch == '\'') {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace codefend::surrogate
