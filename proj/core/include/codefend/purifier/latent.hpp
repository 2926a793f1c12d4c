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

#include <string>
#include <vector>

namespace codefend::purifier {

// Unbounded float tensor in (height, width, channels) layout.
struct Latent {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> values;

  Latent() = default;
  Latent(int h, int w, int c) : height(h), width(w), channels(c), values(std::size_t(h) * w * c) {}
  Latent(int h, int w, int c, std::vector<float> v)
      : height(h), width(w), channels(c), values(std::move(v)) {}

  std::size_t size() const noexcept { return values.size(); }
  bool same_shape(const Latent& o) const noexcept {
    return height == o.height && width == o.width && channels == o.channels;
  }
  float& at(int y, int x, int c) { return values[(std::size_t(y) * width + x) * channels + c]; }
  float at(int y, int x, int c) const {
    return values[(std::size_t(y) * width + x) * channels + c];
  }
  bool all_finite() const;
  std::string shape_string() const;
};

}  // namespace codefend::purifier
