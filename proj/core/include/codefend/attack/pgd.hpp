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
#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include "codefend/attack/oracle.hpp"
#include "codefend/core/image.hpp"

namespace codefend::attack {

struct AttackConfig {
  // L-infinity budget in [0,1] pixel units (8/255 in 8-bit terms is 8.0/255).
  double epsilon = 8.0 / 255.0;
  int steps = 10;
  double step_size = 2.0 / 255.0;
  bool targeted = false;
  std::optional<std::string> target_text;
  std::uint64_t seed = 0;
  // Uniform start inside the budget ball instead of the clean image.
  bool random_start = false;
  std::string name = "pgd-linf";

  // Throws InvalidArgument unless steps >= 1, 0 <= step_size <= epsilon and a
  // targeted config carries a target.
  void validate() const;
};

// Called after every projected step with (step index starting at 1, iterate).
using StepObserver = std::function<void(int, const ImageTensor&)>;

// Sign-gradient ascent on L(G(I + delta, text), reference), projected onto
// ||delta||_inf <= epsilon and [0,1]. Returns the best iterate seen (the clean
// image included), so loss(adv) >= loss(clean) always holds.
AdvPair pgd_untargeted(const GradOracle& oracle, const ImageTensor& image, std::string_view text,
                       std::string_view reference, const AttackConfig& config,
                       const StepObserver& observer = {});

// Sign-gradient descent on L(G(I + delta, text), target); keeps the lowest-loss
// iterate so loss(adv) <= loss(clean).
AdvPair pgd_targeted(const GradOracle& oracle, const ImageTensor& image, std::string_view text,
                     std::string_view target, const AttackConfig& config,
                     const StepObserver& observer = {});

// Parses "8/255", "0.03" or "8" (integers > 1 are read as 8-bit levels).
double parse_epsilon(std::string_view text);

}  // namespace codefend::attack
