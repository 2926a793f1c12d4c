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

#include "codefend/purifier/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "codefend/core/error.hpp"

namespace codefend::purifier {

bool Latent::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](float v) { return std::isfinite(v); });
}

std::string Latent::shape_string() const {
  return fmt::format("{}x{}x{}", height, width, channels);
}

DiffusionSchedule::DiffusionSchedule(std::vector<double> alpha_bar)
    : alpha_bar_(std::move(alpha_bar)) {
  if (alpha_bar_.empty()) throw Error(ErrorCode::kInvalidArgument, "empty diffusion schedule");
  for (std::size_t t = 0; t < alpha_bar_.size(); ++t) {
    const double a = alpha_bar_[t];
    if (!(a >= 0.0 && a <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, fmt::format("alpha_bar[{}] = {} outside [0,1]", t, a));
    }
    if (t > 0 && !(a < alpha_bar_[t - 1])) {
      throw Error(ErrorCode::kInvalidArgument,
                  fmt::format("alpha_bar not strictly decreasing at t={}", t));
    }
  }
}

DiffusionSchedule DiffusionSchedule::cosine(int steps, double offset) {
  if (steps < 2) throw Error(ErrorCode::kInvalidArgument, "cosine schedule needs T >= 2");
  auto f = [&](double t) {
    const double c = std::cos((t / steps + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
    return c * c;
  };
  std::vector<double> ab(static_cast<std::size_t>(steps));
  const double f0 = f(0.0);
  for (int t = 0; t < steps; ++t) {
    ab[static_cast<std::size_t>(t)] = std::clamp(f(t + 1.0) / f0, 1e-4, 0.9999);
  }
  return DiffusionSchedule(std::move(ab));
}

double DiffusionSchedule::alpha_bar(int t) const {
  if (t < 0 || t >= steps()) {
    throw Error(ErrorCode::kStepOutOfRange, fmt::format("t={} outside [0,{})", t, steps()));
  }
  return alpha_bar_[static_cast<std::size_t>(t)];
}

Latent add_noise(const Latent& z0, int t, const Latent& eps, const DiffusionSchedule& schedule) {
  if (!z0.same_shape(eps)) {
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("z0 {} vs eps {}", z0.shape_string(), eps.shape_string()));
  }
  const double ab = schedule.alpha_bar(t);
  // Endpoints are exact: ab == 1 returns z0 and ab == 0 returns eps bit-for-bit.
  const auto signal = static_cast<float>(std::sqrt(ab));
  const auto noise = static_cast<float>(std::sqrt(1.0 - ab));
  Latent out(z0.height, z0.width, z0.channels);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.values[i] = signal * z0.values[i] + noise * eps.values[i];
  }
  return out;
}

}  // namespace codefend::purifier
