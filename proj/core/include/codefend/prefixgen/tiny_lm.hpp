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
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "codefend/prefixgen/lora.hpp"
#include "codefend/promptopt/prompt_space.hpp"

namespace codefend::prefixgen {

using promptopt::TokenId;

struct TinyLmConfig {
  int layers = 2;
  int d_model = 64;
  int heads = 4;
  int ffn = 1536;
  int max_len = 64;
  std::uint64_t seed = 1;

  friend bool operator==(const TinyLmConfig&, const TinyLmConfig&) = default;
};

// Pre-norm causal transformer decoder with learned positions and an untied
// output head. The base weights are fixed at construction; only an optional
// LoRA adapter on the query and value projections ("layerN.q", "layerN.v")
// is trainable.
class TinyLm {
 public:
  TinyLm(std::size_t vocab_size, TinyLmConfig config);

  const TinyLmConfig& config() const noexcept { return config_; }
  std::size_t vocab_size() const noexcept { return vocab_size_; }
  std::size_t num_parameters() const noexcept { return num_params_; }
  std::vector<LoraTarget> lora_targets() const;
  // Hash over the configuration and every base weight.
  std::string fingerprint() const;

  // Next-token logits at every position, shape (n x vocab).
  Eigen::MatrixXd logits(std::span<const TokenId> ids, const LoraAdapter* adapter = nullptr) const;

  // Mean negative log-likelihood of ids[i] given ids[<i] over the positions
  // with target_mask[i] set (position 0 is never a target). Adds the
  // gradient with respect to the adapter parameters into grad when given.
  double nll(std::span<const TokenId> ids, std::span<const std::uint8_t> target_mask,
             const LoraAdapter& adapter, std::span<float> grad = {}) const;
  // Same, but returns the sum of NLL terms and the target count, and adds
  // grad_scale * d(sum)/d(params) into grad.
  double nll_sum(std::span<const TokenId> ids, std::span<const std::uint8_t> target_mask,
                 const LoraAdapter& adapter, double grad_scale, std::span<float> grad,
                 std::size_t* targets) const;

 private:
  struct Layer {
    Eigen::MatrixXd wq, wk, wv, wo;  // d x d, (out x in)
    Eigen::MatrixXd w1;              // ffn x d
    Eigen::VectorXd b1;
    Eigen::MatrixXd w2;  // d x ffn
    Eigen::VectorXd b2;
  };
  struct LayerCache;
  struct Forward;

  void check_ids(std::span<const TokenId> ids) const;
  void check_adapter(const LoraAdapter& adapter) const;
  Forward forward(std::span<const TokenId> ids, const LoraAdapter* adapter) const;

  std::size_t vocab_size_;
  TinyLmConfig config_;
  Eigen::MatrixXd tok_emb_;  // vocab x d
  Eigen::MatrixXd pos_emb_;  // max_len x d
  std::vector<Layer> layers_;
  Eigen::MatrixXd head_;  // vocab x d
  std::size_t num_params_ = 0;
  std::string fingerprint_;
};

}  // namespace codefend::prefixgen
