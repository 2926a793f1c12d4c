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
#include <vector>

// Shared word inventory for the desk-scale surrogate providers: the toy
// victim's text tower, the prompt optimizer's vocabulary and the prefix LM's
// word-level tokenizer all draw from it, so optimized prompts round-trip
// through every stage.
namespace codefend::surrogate {

// Output words of the toy captioner, in logit order. The final word never
// labels a generated image; it exists to be an attack target.
std::span<const std::string_view> class_words();
std::size_t num_image_classes();
std::string_view target_word();

// Words with a strong component along the toy model's robustness direction.
std::span<const std::string_view> defense_words();
// Every other word the surrogates know, in a fixed order.
std::span<const std::string_view> common_words();

// class_words + defense_words + common_words, deduplicated, stable order.
std::vector<std::string> all_words();

// Lower-cases and splits on anything that is not a letter, digit or '\''.
std::vector<std::string> normalize_words(std::string_view text);

}  // namespace codefend::surrogate
