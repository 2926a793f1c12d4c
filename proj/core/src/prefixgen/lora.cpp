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

#include "codefend/prefixgen/lora.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "codefend/core/error.hpp"
#include "codefend/core/rng.hpp"

namespace codefend::prefixgen {

LoraAdapter::LoraAdapter(std::vector<LoraTarget> targets, int rank, double alpha)
    : targets_(std::move(targets)), rank_(rank), alpha_(alpha) {
  if (rank_ < 1) throw Error(ErrorCode::kInvalidArgument, fmt::format("LoRA rank {} < 1", rank_));
  std::size_t total = 0;
  for (const auto& t : targets_) {
    if (t.d_in < 1 || t.d_out < 1) {
      throw Error(ErrorCode::kInvalidArgument,
                  fmt::format("LoRA target '{}' has dims ({}, {})", t.name, t.d_in, t.d_out));
    }
    if (rank_ > std::min(t.d_in, t.d_out)) {
      throw Error(ErrorCode::kRankTooLarge,
                  fmt::format("rank {} exceeds min({}, {}) for '{}'", rank_, t.d_in, t.d_out,
                              t.name));
    }
    offsets_.push_back(total);
    total += std::size_t(rank_) * (std::size_t(t.d_in) + t.d_out);
  }
  params_.assign(total, 0.0f);
}

Eigen::MatrixXd LoraAdapter::a(std::size_t target) const {
  const auto& t = targets_.at(target);
  Eigen::MatrixXd m(rank_, t.d_in);
  const float* p = params_.data() + offset_a(target);
  for (int i = 0; i < rank_; ++i)
    for (int j = 0; j < t.d_in; ++j) m(i, j) = p[std::size_t(i) * t.d_in + j];
  return m;
}

Eigen::MatrixXd LoraAdapter::b(std::size_t target) const {
  const auto& t = targets_.at(target);
  Eigen::MatrixXd m(t.d_out, rank_);
  const float* p = params_.data() + offset_b(target);
  for (int i = 0; i < t.d_out; ++i)
    for (int j = 0; j < rank_; ++j) m(i, j) = p[std::size_t(i) * rank_ + j];
  return m;
}

Eigen::MatrixXd LoraAdapter::delta(std::size_t target) const {
  return scaling() * b(target) * a(target);
}

std::size_t LoraAdapter::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < targets_.size(); ++i) {
    if (targets_[i].name == name) return i;
  }
  throw Error(ErrorCode::kInvalidArgument, fmt::format("no LoRA target named '{}'", name));
}

LoraAdapter lora_wrap(std::vector<LoraTarget> targets, int rank, double alpha,
                      std::uint64_t init_seed) {
  LoraAdapter adapter(std::move(targets), rank, alpha);
  Rng rng(init_seed);
  auto params = adapter.mutable_parameters();
  for (std::size_t k = 0; k < adapter.targets().size(); ++k) {
    const int d_in = adapter.targets()[k].d_in;
    const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
    const std::size_t begin = adapter.offset_a(k);
    for (std::size_t i = 0; i < std::size_t(rank) * d_in; ++i) {
      params[begin + i] = static_cast<float>(rng.uniform(-bound, bound));
    }
  }
  return adapter;
}

std::size_t lora_parameter_count(std::span<const LoraTarget> targets, int rank) {
  std::size_t n = 0;
  for (const auto& t : targets) n += std::size_t(rank) * (std::size_t(t.d_in) + t.d_out);
  return n;
}

int numerical_rank(const Eigen::MatrixXd& m, double threshold) {
  if (m.size() == 0) return 0;
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  return static_cast<int>((s.array() > threshold).count());
}

}  // namespace codefend::prefixgen
