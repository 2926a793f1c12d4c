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
#include <string_view>
#include <vector>

#include "codefend/core/image.hpp"

namespace codefend::pipeline {

// The protected model G. Black-box by construction: text and image in, text
// out. There is deliberately no way to ask it for gradients or internals.
class VictimVlm {
 public:
  virtual ~VictimVlm() = default;
  virtual std::string generate(std::string_view prompt, const ImageTensor& image) const = 0;
  virtual std::string name() const = 0;
  virtual bool concurrent_safe() const { return false; }
};

// Image feature extractor used by the evaluation kit.
class VisionEncoder {
 public:
  virtual ~VisionEncoder() = default;
  virtual std::vector<double> embed_image(const ImageTensor& image) const = 0;
  virtual std::string name() const = 0;
};

// Image and text towers sharing one embedding space (CLIP-style).
class VisionTextEncoder : public VisionEncoder {
 public:
  virtual std::vector<double> embed_text(std::string_view text) const = 0;
};

}  // namespace codefend::pipeline
