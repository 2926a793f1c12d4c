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

#include "codefend/promptopt/prompt_space.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "codefend/core/error.hpp"

namespace codefend::promptopt {

EmbeddingTable::EmbeddingTable(std::size_t vocab_size, std::size_t dim,
                               std::vector<double> values)
    : vocab_size_(vocab_size), dim_(dim), values_(std::move(values)) {
  if (values_.size() != vocab_size_ * dim_) {
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("embedding table {}x{} given {} values", vocab_size_, dim_,
                            values_.size()));
  }
}

std::span<const double> EmbeddingTable::row(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= vocab_size_) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("token id {} outside vocab of {}", id, vocab_size_));
  }
  return std::span(values_).subspan(static_cast<std::size_t>(id) * dim_, dim_);
}

double EmbeddingTable::distance(TokenId a, TokenId b) const {
  if (a == b) return 0.0;
  const auto ra = row(a);
  const auto rb = row(b);
  double s = 0.0;
  for (std::size_t i = 0; i < dim_; ++i) {
    const double d = ra[i] - rb[i];
    s += d * d;
  }
  return std::sqrt(s);
}

void PromptSpace::validate() const {
  if (table == nullptr) throw Error(ErrorCode::kInvalidArgument, "prompt space has no table");
  if (!(delta_bound >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("delta_bound {} < 0", delta_bound));
  }
  if (trigger_positions.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "prompt space has no trigger positions");
  }
  for (auto p : trigger_positions) {
    if (p >= base_prompt.size()) {
      throw Error(ErrorCode::kInvalidArgument,
                  fmt::format("trigger position {} outside prompt of length {}", p,
                              base_prompt.size()));
    }
  }
  for (auto id : vocab) (void)table->row(id);
  for (auto id : base_prompt) (void)table->row(id);
}

bool PromptSpace::is_trigger(std::size_t position) const {
  return std::find(trigger_positions.begin(), trigger_positions.end(), position) !=
         trigger_positions.end();
}

double prompt_distance(const PromptSpace& space, std::span<const TokenId> prompt) {
  if (prompt.size() != space.base_prompt.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("prompt length {} vs base length {}", prompt.size(),
                            space.base_prompt.size()));
  }
  if (space.trigger_positions.empty()) return 0.0;
  double s = 0.0;
  for (auto p : space.trigger_positions) s += space.table->distance(prompt[p], space.base_prompt[p]);
  return s / static_cast<double>(space.trigger_positions.size());
}

}  // namespace codefend::promptopt
