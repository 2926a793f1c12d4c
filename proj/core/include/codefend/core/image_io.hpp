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

#include <filesystem>
#include <string>

#include "codefend/core/image.hpp"

namespace codefend {

// 8-bit PNG, gray or RGB. Values are quantized with round(v * 255).
void write_png(const ImageTensor& image, const std::filesystem::path& path);
ImageTensor read_png(const std::filesystem::path& path, std::string id = {});

// Raw float32 sidecar: little-endian u32 height, width, channels, then the
// row-major HWC payload. Bit-exact round trip.
void write_npybin(const ImageTensor& image, const std::filesystem::path& path);
ImageTensor read_npybin(const std::filesystem::path& path, std::string id = {});

// Dispatches on extension (.png / .npybin). The id defaults to the file stem.
ImageTensor read_image(const std::filesystem::path& path);
void write_image(const ImageTensor& image, const std::filesystem::path& path);

}  // namespace codefend
