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

#include <memory>
#include <string>

#include "codefend/core/image.hpp"
#include "codefend/purifier/latent.hpp"

namespace codefend::purifier {

// Image <-> latent autoencoder. Frozen during purifier training.
class LatentCodec {
 public:
  virtual ~LatentCodec() = default;

  virtual Latent encode(const ImageTensor& image) const = 0;
  // Decoded pixels are clamped into [0,1].
  virtual ImageTensor decode(const Latent& latent, std::string id = {}) const = 0;
  virtual Latent latent_shape(int height, int width, int channels) const = 0;
  // Reconstruction MSE the provider promises on in-distribution images.
  virtual double reconstruction_tolerance() const = 0;
  virtual std::string name() const = 0;
  // Hash over everything that determines the codec's outputs.
  virtual std::string fingerprint() const = 0;
};

// Latent = factor x factor average pooling; decode = bilinear upsampling with
// half-pixel centres and edge clamping.
class DownscaleCodec final : public LatentCodec {
 public:
  explicit DownscaleCodec(int factor = 4) : factor_(factor) {}

  Latent encode(const ImageTensor& image) const override;
  ImageTensor decode(const Latent& latent, std::string id = {}) const override;
  Latent latent_shape(int height, int width, int channels) const override;
  double reconstruction_tolerance() const override { return 1e-3; }
  std::string name() const override { return "downscale"; }
  std::string fingerprint() const override;

  int factor() const noexcept { return factor_; }

 private:
  int factor_;
};

}  // namespace codefend::purifier
