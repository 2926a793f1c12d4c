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

#include "codefend/core/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "codefend/core/error.hpp"
#include "codefend/core/image_io.hpp"

namespace codefend {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view split_name(Split split) {
  return split == Split::kTrain ? "train" : "test";
}

std::string ManifestEntry::clean_id() const {
  return fs::path(clean_path).lexically_normal().generic_string();
}

std::size_t PairManifest::count(Split split) const {
  return static_cast<std::size_t>(std::count_if(
      entries.begin(), entries.end(), [split](const auto& e) { return e.split == split; }));
}

std::vector<std::size_t> PairManifest::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].split == split) out.push_back(i);
  }
  return out;
}

fs::path PairManifest::resolve(const std::string& path) const {
  const fs::path p(path);
  return p.is_absolute() ? p : base_dir / p;
}

std::string serialize_manifest(const PairManifest& manifest) {
  std::string out;
  for (const auto& e : manifest.entries) {
    json j = {{"adv", e.adv_path},
              {"clean", e.clean_path},
              {"attack", e.attack},
              {"epsilon", e.epsilon},
              {"target", e.target ? json(*e.target) : json(nullptr)},
              {"split", split_name(e.split)}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

void write_manifest(const PairManifest& manifest, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, fmt::format("cannot open '{}'", path.string()));
  out << serialize_manifest(manifest);
  if (!out) throw Error(ErrorCode::kIoError, fmt::format("failed writing '{}'", path.string()));
}

namespace {

std::string required_string(const json& j, const char* key, std::size_t line) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    throw Error(ErrorCode::kSchemaError,
                fmt::format("line {}: field '{}' missing or not a string", line, key));
  }
  return j.at(key).get<std::string>();
}

ManifestEntry parse_entry(const std::string& text, std::size_t line) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kSchemaError, fmt::format("line {}: invalid JSON ({})", line, e.what()));
  }
  if (!j.is_object()) {
    throw Error(ErrorCode::kSchemaError, fmt::format("line {}: expected an object", line));
  }
  ManifestEntry e;
  e.adv_path = required_string(j, "adv", line);
  e.clean_path = required_string(j, "clean", line);
  e.attack = required_string(j, "attack", line);
  if (!j.contains("epsilon") || !j.at("epsilon").is_number()) {
    throw Error(ErrorCode::kSchemaError,
                fmt::format("line {}: field 'epsilon' missing or not a number", line));
  }
  e.epsilon = j.at("epsilon").get<double>();
  if (!std::isfinite(e.epsilon) || e.epsilon < 0.0) {
    throw Error(ErrorCode::kSchemaError, fmt::format("line {}: epsilon must be >= 0", line));
  }
  if (!j.contains("target")) {
    throw Error(ErrorCode::kSchemaError, fmt::format("line {}: field 'target' missing", line));
  }
  if (j.at("target").is_string()) {
    e.target = j.at("target").get<std::string>();
  } else if (!j.at("target").is_null()) {
    throw Error(ErrorCode::kSchemaError,
                fmt::format("line {}: field 'target' must be a string or null", line));
  }
  const std::string split = required_string(j, "split", line);
  if (split == "train") {
    e.split = Split::kTrain;
  } else if (split == "test") {
    e.split = Split::kTest;
  } else {
    throw Error(ErrorCode::kSchemaError,
                fmt::format("line {}: split must be 'train' or 'test', got '{}'", line, split));
  }
  return e;
}

void check_decodable(const PairManifest& m, const std::string& path, std::size_t line) {
  const fs::path resolved = m.resolve(path);
  if (!fs::exists(resolved)) {
    throw Error(ErrorCode::kDanglingRef,
                fmt::format("line {}: '{}' does not exist", line, resolved.string()));
  }
  try {
    (void)read_manifest_image(m, path);
  } catch (const Error& err) {
    throw Error(ErrorCode::kDanglingRef,
                fmt::format("line {}: '{}' is not decodable ({})", line, resolved.string(),
                            err.what()));
  }
}

}  // namespace

PairManifest load_manifest(const fs::path& path, bool check_images) {
  if (!fs::exists(path)) {
    throw Error(ErrorCode::kMissingFile, fmt::format("manifest '{}' not found", path.string()));
  }
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, fmt::format("cannot open '{}'", path.string()));

  PairManifest manifest;
  manifest.base_dir = path.parent_path();
  std::string text;
  std::size_t line = 0;
  std::vector<std::size_t> lines;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    manifest.entries.push_back(parse_entry(text, line));
    lines.push_back(line);
  }
  if (check_images) {
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
      check_decodable(manifest, manifest.entries[i].adv_path, lines[i]);
      check_decodable(manifest, manifest.entries[i].clean_path, lines[i]);
    }
  }
  return manifest;
}

PairManifest split_manifest(const PairManifest& manifest, double train_fraction, Rng& rng) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("train_fraction must be in (0,1), got {}", train_fraction));
  }
  const std::size_t n = manifest.entries.size();
  const auto target = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(n)));

  // Group entries by clean id, preserving first-appearance order before the shuffle.
  std::map<std::string, std::size_t> group_of;
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) {
    const auto [it, inserted] = group_of.emplace(manifest.entries[i].clean_id(), groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(i);
  }
  std::vector<std::size_t> order(groups.size());
  for (std::size_t g = 0; g < order.size(); ++g) order[g] = g;
  rng.shuffle(std::span(order));

  // Subset-sum over group sizes. suffix[g][s] says whether the shuffled groups
  // g..G-1 can contribute exactly s entries to train.
  const std::size_t G = order.size();
  std::vector<std::vector<char>> suffix(G + 1, std::vector<char>(n + 1, 0));
  suffix[G][0] = 1;
  for (std::size_t g = G; g-- > 0;) {
    const std::size_t sz = groups[order[g]].size();
    for (std::size_t s = 0; s <= n; ++s) {
      if (!suffix[g + 1][s]) continue;
      suffix[g][s] = 1;
      if (s + sz <= n) suffix[g][s + sz] = 1;
    }
  }
  std::size_t goal = target;
  for (std::size_t d = 0; d <= n; ++d) {
    if (target >= d && suffix[0][target - d]) { goal = target - d; break; }
    if (target + d <= n && suffix[0][target + d]) { goal = target + d; break; }
  }
  // Greedy walk in shuffle order: take a group whenever the rest can still
  // complete the goal.
  std::vector<char> in_train(G, 0);
  std::size_t remaining = goal;
  for (std::size_t g = 0; g < G; ++g) {
    const std::size_t sz = groups[order[g]].size();
    if (sz <= remaining && suffix[g + 1][remaining - sz]) {
      in_train[g] = 1;
      remaining -= sz;
    }
  }

  PairManifest out = manifest;
  for (std::size_t g = 0; g < G; ++g) {
    for (std::size_t idx : groups[order[g]]) {
      out.entries[idx].split = in_train[g] ? Split::kTrain : Split::kTest;
    }
  }
  if (out.count(Split::kTrain) == 0 || out.count(Split::kTest) == 0) {
    throw Error(ErrorCode::kDegenerateSplit,
                fmt::format("{} entries / {} clean ids at fraction {} leave a split empty", n, G,
                            train_fraction));
  }
  return out;
}

ImageTensor read_manifest_image(const PairManifest& manifest, const std::string& path) {
  const fs::path resolved = manifest.resolve(path);
  fs::path sidecar = resolved;
  sidecar.replace_extension(".npybin");
  const std::string id = resolved.stem().string();
  if (sidecar != resolved && fs::exists(sidecar)) return read_npybin(sidecar, id);
  if (resolved.extension() == ".npybin") return read_npybin(resolved, id);
  return read_png(resolved, id);
}

AdvPair load_pair(const PairManifest& manifest, std::size_t index) {
  const ManifestEntry& e = manifest.entries.at(index);
  AdvPair pair{read_manifest_image(manifest, e.adv_path),
               read_manifest_image(manifest, e.clean_path), e.attack, e.epsilon, e.target};
  if (!pair.adv.same_shape(pair.clean)) {
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("entry {}: adv and clean shapes differ", index));
  }
  return pair;
}

}  // namespace codefend
