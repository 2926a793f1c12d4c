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

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace codefend {

// Float image in [0,1], stored row-major as (height, width, channels).
// Immutable once constructed; every constructor validates the value range.
class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(int height, int width, int channels, std::vector<float> data,
              std::string id = {});

  static ImageTensor filled(int height, int width, int channels, float value,
                            std::string id = {});
  // Clamps into [0,1] before validating; non-finite values still throw.
  static ImageTensor clamped(int height, int width, int channels,
                             std::vector<float> data, std::string id = {});

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  const std::string& id() const noexcept { return id_; }

  std::span<const float> data() const noexcept { return data_; }
  float at(int y, int x, int c) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  bool same_shape(const ImageTensor& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ &&
           channels_ == other.channels_;
  }

  ImageTensor with_data(std::vector<float> data) const;
  ImageTensor with_id(std::string id) const;

  friend bool operator==(const ImageTensor& a, const ImageTensor& b) {
    return a.same_shape(b) && a.data_ == b.data_;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
  std::string id_;
};

// L-infinity distance. Throws ShapeMismatch on differing shapes.
float max_abs_diff(const ImageTensor& a, const ImageTensor& b);
double l2_distance(const ImageTensor& a, const ImageTensor& b);
double mean_squared_error(const ImageTensor& a, const ImageTensor& b);

struct AdvPair {
  ImageTensor adv;
  ImageTensor clean;
  std::string attack_name;
  double epsilon = 0.0;
  std::optional<std::string> target_text;
};

}  // namespace codefend
