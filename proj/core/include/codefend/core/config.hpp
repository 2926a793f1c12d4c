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
#include <string_view>
#include <vector>

namespace codefend {

// Flat key-value configuration. Text form, one entry per line:
//
//   # comment
//   section.key = value
//
// Keys are case-sensitive; values are trimmed. Typed getters throw
// ConfigError naming the key when a value does not parse.
class Config {
 public:
  static Config parse(std::string_view text, std::string_view source = "<config>");
  static Config load(const std::filesystem::path& path);

  void set(const std::string& key, std::string value);
  bool contains(const std::string& key) const { return values_.contains(key); }
  const std::map<std::string, std::string>& entries() const noexcept { return values_; }

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_u64(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Entries of `other` replace ours.
  void merge(const Config& other);
  // Keys present here but absent from `known`.
  std::vector<std::string> unknown_keys(const Config& known) const;
  // Sorted "key = value" lines; parse(dump()) reproduces the config.
  std::string dump() const;

  friend bool operator==(const Config&, const Config&) = default;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace codefend
