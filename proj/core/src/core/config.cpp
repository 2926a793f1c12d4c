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

#include "codefend/core/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "codefend/core/error.hpp"

namespace codefend {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool valid_key(std::string_view key) {
  return !key.empty() && std::all_of(key.begin(), key.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '.' || c == '_' || c == '-';
  });
}

template <typename T>
T parse_integer(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw Error(ErrorCode::kConfigError,
                fmt::format("'{}' = '{}' is not a valid integer", key, value));
  }
  return out;
}

}  // namespace

Config Config::parse(std::string_view text, std::string_view source) {
  Config cfg;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto raw = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::kConfigError,
                  fmt::format("{}:{}: expected 'key = value'", source, line_no));
    }
    const std::string key(trim(line.substr(0, eq)));
    if (!valid_key(key)) {
      throw Error(ErrorCode::kConfigError,
                  fmt::format("{}:{}: invalid key '{}'", source, line_no, key));
    }
    cfg.values_[key] = std::string(trim(line.substr(eq + 1)));
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingFile, fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void Config::set(const std::string& key, std::string value) {
  if (!valid_key(key)) throw Error(ErrorCode::kConfigError, fmt::format("invalid key '{}'", key));
  values_[key] = std::move(value);
}

std::string Config::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) {
    throw Error(ErrorCode::kConfigError, fmt::format("missing config key '{}'", key));
  }
  return it->second;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  return contains(key) ? get_string(key) : fallback;
}

double Config::get_double(const std::string& key) const {
  const std::string v = get_string(key);
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) {
    throw Error(ErrorCode::kConfigError, fmt::format("'{}' = '{}' is not a number", key, v));
  }
  return out;
}

double Config::get_double(const std::string& key, double fallback) const {
  return contains(key) ? get_double(key) : fallback;
}

std::int64_t Config::get_int(const std::string& key) const {
  return parse_integer<std::int64_t>(key, get_string(key));
}

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) const {
  return contains(key) ? get_int(key) : fallback;
}

std::uint64_t Config::get_u64(const std::string& key) const {
  return parse_integer<std::uint64_t>(key, get_string(key));
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  return contains(key) ? get_u64(key) : fallback;
}

bool Config::get_bool(const std::string& key) const {
  std::string v = get_string(key);
  std::transform(v.begin(), v.end(), v.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw Error(ErrorCode::kConfigError, fmt::format("'{}' = '{}' is not a boolean", key, v));
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  return contains(key) ? get_bool(key) : fallback;
}

void Config::merge(const Config& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

std::vector<std::string> Config::unknown_keys(const Config& known) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) {
    if (!known.contains(k)) out.push_back(k);
  }
  return out;
}

std::string Config::dump() const {
  std::string out;
  for (const auto& [k, v] : values_) out += fmt::format("{} = {}\n", k, v);
  return out;
}

}  // namespace codefend
