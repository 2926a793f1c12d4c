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

#include "codefend/core/hash.hpp"

#include <fmt/format.h>

namespace codefend {

Fnv1a& Fnv1a::update(std::span<const std::byte> bytes) {
  for (std::byte b : bytes) {
    state_ ^= static_cast<std::uint64_t>(b);
    state_ *= 0x100000001b3ULL;
  }
  return *this;
}

Fnv1a& Fnv1a::update(std::string_view text) {
  return update(std::as_bytes(std::span(text.data(), text.size())));
}

Fnv1a& Fnv1a::update(std::span<const float> values) {
  return update(std::as_bytes(values));
}

std::string Fnv1a::hex() const { return fmt::format("{:016x}", state_); }

std::string hash_floats(std::span<const float> values) {
  return Fnv1a().update(values).hex();
}

std::string hash_text(std::string_view text) { return Fnv1a().update(text).hex(); }

}  // namespace codefend
