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

#include "codefend/attack/pgd.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "codefend/core/error.hpp"
#include "codefend/core/rng.hpp"

namespace codefend::attack {

void AttackConfig::validate() const {
  if (steps < 1) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("steps must be >= 1, got {}", steps));
  }
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("epsilon {} outside [0,1]", epsilon));
  }
  if (!(step_size >= 0.0 && step_size <= epsilon)) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("step_size {} must lie in [0, epsilon={}]", step_size, epsilon));
  }
  if (targeted && !target_text) {
    throw Error(ErrorCode::kInvalidArgument, "targeted attack without target_text");
  }
}

namespace {

float sign_of(double g) { return g > 0.0 ? 1.0f : (g < 0.0 ? -1.0f : 0.0f); }

double checked_loss(const GradOracle& oracle, const ImageTensor& x, std::string_view text,
                    std::string_view ref) {
  const double l = oracle.loss(x, text, ref);
  if (!std::isfinite(l)) {
    throw Error(ErrorCode::kOracleFailure, fmt::format("non-finite loss on '{}'", x.id()));
  }
  return l;
}

AdvPair run_pgd(const GradOracle& oracle, const ImageTensor& clean, std::string_view text,
                std::string_view reference, const AttackConfig& config, double direction,
                const StepObserver& observer) {
  config.validate();
  const auto eps = static_cast<float>(config.epsilon);
  const auto alpha = static_cast<float>(config.step_size);
  const std::size_t n = clean.size();
  const auto c = clean.data();

  std::vector<float> lo(n);
  std::vector<float> hi(n);
  for (std::size_t i = 0; i < n; ++i) {
    lo[i] = std::max(c[i] - eps, 0.0f);
    hi[i] = std::min(c[i] + eps, 1.0f);
  }

  std::vector<float> x(c.begin(), c.end());
  if (config.random_start && eps > 0.0f) {
    Rng rng(config.seed);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = std::clamp(c[i] + static_cast<float>(rng.uniform(-eps, eps)), lo[i], hi[i]);
    }
  }

  ImageTensor best = clean;
  double best_loss = checked_loss(oracle, clean, text, reference);
  ImageTensor current = clean.with_data(x);
  if (config.random_start) {
    const double l = checked_loss(oracle, current, text, reference);
    if (direction * (l - best_loss) >= 0.0) {
      best = current;
      best_loss = l;
    }
  }

  for (int step = 1; step <= config.steps; ++step) {
    const std::vector<double> g = oracle.grad_wrt_image(current, text, reference);
    if (g.size() != n) {
      throw Error(ErrorCode::kOracleFailure,
                  fmt::format("gradient has {} entries for {} pixels", g.size(), n));
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(g[i])) {
        throw Error(ErrorCode::kOracleFailure,
                    fmt::format("non-finite gradient at pixel {} of '{}'", i, clean.id()));
      }
      const float s = static_cast<float>(direction) * sign_of(g[i]);
      x[i] = std::clamp(x[i] + alpha * s, lo[i], hi[i]);
    }
    current = clean.with_data(x);
    if (max_abs_diff(current, clean) > config.epsilon + 1e-6) {
      throw std::logic_error("PGD iterate left the epsilon ball");
    }
    if (observer) observer(step, current);

    const double l = checked_loss(oracle, current, text, reference);
    if (direction * (l - best_loss) >= 0.0) {
      best = current;
      best_loss = l;
    }
  }

  AdvPair pair;
  pair.adv = best.with_id(clean.id());
  pair.clean = clean;
  pair.attack_name = config.name;
  pair.epsilon = config.epsilon;
  if (config.targeted) pair.target_text = std::string(reference);
  return pair;
}

}  // namespace

AdvPair pgd_untargeted(const GradOracle& oracle, const ImageTensor& image, std::string_view text,
                       std::string_view reference, const AttackConfig& config,
                       const StepObserver& observer) {
  if (config.targeted) {
    throw Error(ErrorCode::kInvalidArgument, "pgd_untargeted called with a targeted config");
  }
  return run_pgd(oracle, image, text, reference, config, +1.0, observer);
}

AdvPair pgd_targeted(const GradOracle& oracle, const ImageTensor& image, std::string_view text,
                     std::string_view target, const AttackConfig& config,
                     const StepObserver& observer) {
  if (!config.targeted) {
    throw Error(ErrorCode::kInvalidArgument, "pgd_targeted called with an untargeted config");
  }
  return run_pgd(oracle, image, text, target, config, -1.0, observer);
}

double parse_epsilon(std::string_view text) {
  auto parse = [&](std::string_view s) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end) {
      throw Error(ErrorCode::kInvalidArgument, fmt::format("cannot parse epsilon '{}'", text));
    }
    return v;
  };
  double value = 0.0;
  if (const auto slash = text.find('/'); slash != std::string_view::npos) {
    const double den = parse(text.substr(slash + 1));
    if (den == 0.0) throw Error(ErrorCode::kInvalidArgument, "epsilon denominator is zero");
    value = parse(text.substr(0, slash)) / den;
  } else {
    value = parse(text);
    if (value > 1.0) value /= 255.0;
  }
  if (!(value >= 0.0 && value <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("epsilon '{}' outside [0,1]", text));
  }
  return value;
}

}  // namespace codefend::attack
