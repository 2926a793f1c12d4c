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

#include "codefend/core/adamw.hpp"

#include <cmath>

#include <fmt/format.h>

#include "codefend/core/error.hpp"

namespace codefend {

AdamW::AdamW(std::size_t num_params, AdamWConfig config)
    : config_(config), m_(num_params, 0.0), v_(num_params, 0.0) {}

void AdamW::step(std::span<float> params, std::span<const float> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("AdamW sized for {} params, got {} params / {} grads", m_.size(),
                            params.size(), grads.size()));
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  const double lr = config_.learning_rate;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g * g;
    const double m_hat = m_[i] / bc1;
    const double v_hat = v_[i] / bc2;
    double p = params[i];
    p -= lr * config_.weight_decay * p;
    p -= lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    params[i] = static_cast<float>(p);
  }
}

}  // namespace codefend
