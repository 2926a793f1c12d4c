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

namespace codefend::prefixgen {

struct LoraTarget {
  std::string name;
  int d_in = 0;
  int d_out = 0;

  friend bool operator==(const LoraTarget&, const LoraTarget&) = default;
};

// Low-rank update W' = W + (alpha / r) * B * A for each target matrix, with
// A (r x d_in) and B (d_out x r). Parameters live in one flat float vector:
// for each target in order, A row-major then B row-major.
class LoraAdapter {
 public:
  LoraAdapter() = default;
  LoraAdapter(std::vector<LoraTarget> targets, int rank, double alpha);

  const std::vector<LoraTarget>& targets() const noexcept { return targets_; }
  int rank() const noexcept { return rank_; }
  double alpha() const noexcept { return alpha_; }
  double scaling() const noexcept { return alpha_ / rank_; }

  std::size_t num_parameters() const noexcept { return params_.size(); }
  std::span<const float> parameters() const noexcept { return params_; }
  std::span<float> mutable_parameters() noexcept { return params_; }
  std::size_t offset_a(std::size_t target) const { return offsets_.at(target); }
  std::size_t offset_b(std::size_t target) const {
    return offsets_.at(target) + std::size_t(rank_) * targets_.at(target).d_in;
  }

  Eigen::MatrixXd a(std::size_t target) const;
  Eigen::MatrixXd b(std::size_t target) const;
  // (alpha / r) * B * A, shape d_out x d_in.
  Eigen::MatrixXd delta(std::size_t target) const;
  std::size_t index_of(const std::string& name) const;

 private:
  std::vector<LoraTarget> targets_;
  int rank_ = 0;
  double alpha_ = 0.0;
  std::vector<std::size_t> offsets_;
  std::vector<float> params_;
};

// A ~ U(-1/sqrt(d_in), 1/sqrt(d_in)), B = 0, so the update starts at zero.
// Throws RankTooLarge if r exceeds min(d_in, d_out) for any target and
// InvalidArgument if r < 1.
LoraAdapter lora_wrap(std::vector<LoraTarget> targets, int rank, double alpha,
                      std::uint64_t init_seed);

// Closed form sum over targets of r * (d_in + d_out).
std::size_t lora_parameter_count(std::span<const LoraTarget> targets, int rank);

// Number of singular values above `threshold`.
int numerical_rank(const Eigen::MatrixXd& m, double threshold = 1e-8);

}  // namespace codefend::prefixgen
