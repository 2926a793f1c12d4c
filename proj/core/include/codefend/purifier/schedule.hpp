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

#include <vector>

#include "codefend/purifier/latent.hpp"

namespace codefend::purifier {

// Cumulative signal-retention products alpha_bar[t] for t = 0..T-1.
class DiffusionSchedule {
 public:
  DiffusionSchedule() = default;
  // Throws InvalidArgument unless the values are strictly decreasing in [0,1].
  explicit DiffusionSchedule(std::vector<double> alpha_bar);

  // Cosine schedule, clipped to [1e-4, 0.9999] at the ends.
  static DiffusionSchedule cosine(int steps, double offset = 0.008);

  int steps() const noexcept { return static_cast<int>(alpha_bar_.size()); }
  double alpha_bar(int t) const;
  const std::vector<double>& values() const noexcept { return alpha_bar_; }

  friend bool operator==(const DiffusionSchedule&, const DiffusionSchedule&) = default;

 private:
  std::vector<double> alpha_bar_;
};

// Variance-preserving forward noising sqrt(ab_t) * z0 + sqrt(1 - ab_t) * eps.
// Throws ShapeMismatch or StepOutOfRange.
Latent add_noise(const Latent& z0, int t, const Latent& eps, const DiffusionSchedule& schedule);

}  // namespace codefend::purifier
