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

#include "codefend/attack/oracle.hpp"

#include <fmt/format.h>

#include "codefend/core/error.hpp"

namespace codefend::attack {

namespace {

void check_size(std::size_t expected, const ImageTensor& image, const char* who) {
  if (expected != image.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("{} sized for {} pixels, image has {}", who, expected, image.size()));
  }
}

}  // namespace

double LinearOracle::loss(const ImageTensor& image, std::string_view, std::string_view) const {
  check_size(weights_.size(), image, "LinearOracle");
  double s = 0.0;
  for (std::size_t i = 0; i < weights_.size(); ++i) s += weights_[i] * image.data()[i];
  return s;
}

std::vector<double> LinearOracle::grad_wrt_image(const ImageTensor& image, std::string_view,
                                                 std::string_view) const {
  check_size(weights_.size(), image, "LinearOracle");
  return weights_;
}

double QuadraticOracle::loss(const ImageTensor& image, std::string_view,
                             std::string_view) const {
  check_size(center_.size(), image, "QuadraticOracle");
  double s = 0.0;
  for (std::size_t i = 0; i < center_.size(); ++i) {
    const double d = image.data()[i] - center_[i];
    s += 0.5 * curvature_[i] * d * d;
  }
  return s;
}

std::vector<double> QuadraticOracle::grad_wrt_image(const ImageTensor& image, std::string_view,
                                                    std::string_view) const {
  check_size(center_.size(), image, "QuadraticOracle");
  std::vector<double> g(center_.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = curvature_[i] * (image.data()[i] - center_[i]);
  return g;
}

}  // namespace codefend::attack
