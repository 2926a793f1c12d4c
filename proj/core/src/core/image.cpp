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

#include "codefend/core/image.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "codefend/core/error.hpp"

namespace codefend {

namespace {

void check_shape(int height, int width, int channels, std::size_t n) {
  if (height <= 0 || width <= 0) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("image dims must be positive, got {}x{}", height, width));
  }
  if (channels != 1 && channels != 3) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("image channels must be 1 or 3, got {}", channels));
  }
  if (n != static_cast<std::size_t>(height) * width * channels) {
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("{} values for a {}x{}x{} image", n, height, width, channels));
  }
}

void check_shapes_match(const ImageTensor& a, const ImageTensor& b) {
  if (!a.same_shape(b)) {
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("{}x{}x{} vs {}x{}x{}", a.height(), a.width(), a.channels(),
                            b.height(), b.width(), b.channels()));
  }
}

}  // namespace

ImageTensor::ImageTensor(int height, int width, int channels, std::vector<float> data,
                         std::string id)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)),
      id_(std::move(id)) {
  check_shape(height, width, channels, data_.size());
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const float v = data_[i];
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
      throw Error(ErrorCode::kInvalidArgument,
                  fmt::format("pixel {} of image '{}' is {} (outside [0,1])", i, id_, v));
    }
  }
}

ImageTensor ImageTensor::filled(int height, int width, int channels, float value,
                                std::string id) {
  std::vector<float> data(static_cast<std::size_t>(std::max(height, 0)) *
                              std::max(width, 0) * std::max(channels, 0),
                          value);
  return ImageTensor(height, width, channels, std::move(data), std::move(id));
}

ImageTensor ImageTensor::clamped(int height, int width, int channels,
                                 std::vector<float> data, std::string id) {
  for (float& v : data) {
    if (std::isfinite(v)) v = std::clamp(v, 0.0f, 1.0f);
  }
  return ImageTensor(height, width, channels, std::move(data), std::move(id));
}

ImageTensor ImageTensor::with_data(std::vector<float> data) const {
  return ImageTensor(height_, width_, channels_, std::move(data), id_);
}

ImageTensor ImageTensor::with_id(std::string id) const {
  ImageTensor out = *this;
  out.id_ = std::move(id);
  return out;
}

float max_abs_diff(const ImageTensor& a, const ImageTensor& b) {
  check_shapes_match(a, b);
  float m = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  }
  return m;
}

double l2_distance(const ImageTensor& a, const ImageTensor& b) {
  check_shapes_match(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - b.data()[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double mean_squared_error(const ImageTensor& a, const ImageTensor& b) {
  const double d = l2_distance(a, b);
  return d * d / static_cast<double>(a.size());
}

}  // namespace codefend
