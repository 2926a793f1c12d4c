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
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace codefend {

struct NamedTensor {
  std::vector<std::int64_t> shape;
  std::vector<float> values;
};

// Checkpoint container: a JSON metadata block plus named float32 tensors.
//
// Layout on disk (all integers little-endian):
//   "CDFARCH1" | u64 header_len | header JSON | float32 payload | u64 FNV-1a
// The trailing checksum covers every preceding byte; any mismatch, truncation
// or malformed header is reported as CheckpointCorrupt.
class TensorArchive {
 public:
  nlohmann::json& meta() noexcept { return meta_; }
  const nlohmann::json& meta() const noexcept { return meta_; }

  void put(const std::string& name, std::vector<std::int64_t> shape,
           std::vector<float> values);
  bool contains(const std::string& name) const { return tensors_.contains(name); }
  const NamedTensor& get(const std::string& name) const;
  const std::map<std::string, NamedTensor>& tensors() const noexcept { return tensors_; }

  std::string serialize() const;
  static TensorArchive deserialize(const std::string& bytes);

  void save(const std::filesystem::path& path) const;
  static TensorArchive load(const std::filesystem::path& path);

 private:
  nlohmann::json meta_ = nlohmann::json::object();
  std::map<std::string, NamedTensor> tensors_;
};

}  // namespace codefend
