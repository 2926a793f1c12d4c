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

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace codefend {

// 64-bit FNV-1a. Used for parameter fingerprints, freeze-contract checks and
// trace hashes; not a cryptographic digest.
class Fnv1a {
 public:
  Fnv1a& update(std::span<const std::byte> bytes);
  Fnv1a& update(std::string_view text);
  Fnv1a& update(std::span<const float> values);
  std::uint64_t digest() const noexcept { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string hash_floats(std::span<const float> values);
std::string hash_text(std::string_view text);

}  // namespace codefend
