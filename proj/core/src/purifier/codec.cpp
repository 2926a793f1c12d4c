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

#include "codefend/purifier/codec.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "codefend/core/error.hpp"
#include "codefend/core/hash.hpp"

namespace codefend::purifier {

Latent DownscaleCodec::latent_shape(int height, int width, int channels) const {
  if (height % factor_ != 0 || width % factor_ != 0) {
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("{}x{} image is not divisible by codec factor {}", height, width,
                            factor_));
  }
  return Latent(height / factor_, width / factor_, channels);
}

Latent DownscaleCodec::encode(const ImageTensor& image) const {
  Latent z = latent_shape(image.height(), image.width(), image.channels());
  const float inv = 1.0f / static_cast<float>(factor_ * factor_);
  for (int y = 0; y < z.height; ++y) {
    for (int x = 0; x < z.width; ++x) {
      for (int c = 0; c < z.channels; ++c) {
        float s = 0.0f;
        for (int dy = 0; dy < factor_; ++dy) {
          for (int dx = 0; dx < factor_; ++dx) {
            s += image.at(y * factor_ + dy, x * factor_ + dx, c);
          }
        }
        z.at(y, x, c) = s * inv;
      }
    }
  }
  return z;
}

ImageTensor DownscaleCodec::decode(const Latent& latent, std::string id) const {
  const int height = latent.height * factor_;
  const int width = latent.width * factor_;
  std::vector<float> out(static_cast<std::size_t>(height) * width * latent.channels);
  auto sample_axis = [&](int p, int n, int& i0, int& i1, float& w1) {
    const float pos = (static_cast<float>(p) + 0.5f) / static_cast<float>(factor_) - 0.5f;
    const float clamped = std::clamp(pos, 0.0f, static_cast<float>(n - 1));
    i0 = static_cast<int>(std::floor(clamped));
    i1 = std::min(i0 + 1, n - 1);
    w1 = clamped - static_cast<float>(i0);
  };
  for (int y = 0; y < height; ++y) {
    int y0, y1;
    float wy;
    sample_axis(y, latent.height, y0, y1, wy);
    for (int x = 0; x < width; ++x) {
      int x0, x1;
      float wx;
      sample_axis(x, latent.width, x0, x1, wx);
      for (int c = 0; c < latent.channels; ++c) {
        const float top = (1 - wx) * latent.at(y0, x0, c) + wx * latent.at(y0, x1, c);
        const float bot = (1 - wx) * latent.at(y1, x0, c) + wx * latent.at(y1, x1, c);
        const float v = (1 - wy) * top + wy * bot;
        out[(static_cast<std::size_t>(y) * width + x) * latent.channels + c] =
            std::isfinite(v) ? std::clamp(v, 0.0f, 1.0f) : v;
      }
    }
  }
  return ImageTensor(height, width, latent.channels, std::move(out), std::move(id));
}

std::string DownscaleCodec::fingerprint() const {
  return hash_text(fmt::format("downscale/v1/factor={}", factor_));
}

}  // namespace codefend::purifier
