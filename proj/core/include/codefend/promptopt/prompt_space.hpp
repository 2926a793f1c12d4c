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

#include <cstdint>
#include <span>
#include <vector>

#include "codefend/core/image.hpp"

namespace codefend::promptopt {

using TokenId = std::int32_t;
using Tokens = std::vector<TokenId>;

// Dense (vocab_size x dim) token-embedding matrix, row-major.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::size_t vocab_size, std::size_t dim, std::vector<double> values);

  std::size_t vocab_size() const noexcept { return vocab_size_; }
  std::size_t dim() const noexcept { return dim_; }
  std::span<const double> row(TokenId id) const;

  double distance(TokenId a, TokenId b) const;

 private:
  std::size_t vocab_size_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> values_;
};

// The search space of the discrete optimizer: which tokens may be placed,
// which prompt positions may change, the starting prompt and the semantic
// budget dist(p, p_base) <= delta_bound.
struct PromptSpace {
  const EmbeddingTable* table = nullptr;
  std::vector<TokenId> vocab;
  std::vector<std::size_t> trigger_positions;
  Tokens base_prompt;
  double delta_bound = 0.0;

  // Throws InvalidArgument when the invariants (positions in range, bound >= 0,
  // vocab ids inside the table) do not hold.
  void validate() const;
  bool is_trigger(std::size_t position) const;
};

// Mean, over trigger positions, of the embedding L2 distance between the
// tokens of `prompt` and of the base prompt.
double prompt_distance(const PromptSpace& space, std::span<const TokenId> prompt);

// Differentiable scorer L_CE(B(image; prompt (+) query), y_true).
class ScoringOracle {
 public:
  virtual ~ScoringOracle() = default;

  virtual double loss(std::span<const TokenId> prompt, std::span<const TokenId> query,
                      const ImageTensor& image, std::span<const TokenId> y_true) const = 0;
  // d loss / d embedding of prompt[position], length = embedding dim.
  virtual std::vector<double> grad_wrt_embedding(std::span<const TokenId> prompt,
                                                 std::span<const TokenId> query,
                                                 const ImageTensor& image,
                                                 std::span<const TokenId> y_true,
                                                 std::size_t position) const = 0;
  virtual bool concurrent_safe() const { return false; }
};

}  // namespace codefend::promptopt
