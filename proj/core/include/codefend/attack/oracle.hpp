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

#include <string_view>
#include <vector>

#include "codefend/core/image.hpp"

namespace codefend::attack {

// Differentiable loss L(G(image, text), reference) of a white-box surrogate.
// The attacks only ever read the gradient's sign, but it is returned in
// double precision so finite-difference checks stay meaningful.
class GradOracle {
 public:
  virtual ~GradOracle() = default;

  virtual double loss(const ImageTensor& image, std::string_view text,
                      std::string_view reference) const = 0;
  virtual std::vector<double> grad_wrt_image(const ImageTensor& image, std::string_view text,
                                             std::string_view reference) const = 0;

  // Whether loss/grad may be called from several threads at once. The forge
  // serializes calls to oracles that return false.
  virtual bool concurrent_safe() const { return false; }
};

// L = <w, I>. Ignores text and reference.
class LinearOracle final : public GradOracle {
 public:
  explicit LinearOracle(std::vector<double> weights) : weights_(std::move(weights)) {}

  double loss(const ImageTensor& image, std::string_view, std::string_view) const override;
  std::vector<double> grad_wrt_image(const ImageTensor& image, std::string_view,
                                     std::string_view) const override;
  bool concurrent_safe() const override { return true; }

  const std::vector<double>& weights() const noexcept { return weights_; }

 private:
  std::vector<double> weights_;
};

// L = 0.5 * sum_i h_i (I_i - c_i)^2 with h_i > 0.
class QuadraticOracle final : public GradOracle {
 public:
  QuadraticOracle(std::vector<double> center, std::vector<double> curvature)
      : center_(std::move(center)), curvature_(std::move(curvature)) {}

  double loss(const ImageTensor& image, std::string_view, std::string_view) const override;
  std::vector<double> grad_wrt_image(const ImageTensor& image, std::string_view,
                                     std::string_view) const override;
  bool concurrent_safe() const override { return true; }

 private:
  std::vector<double> center_;
  std::vector<double> curvature_;
};

}  // namespace codefend::attack
