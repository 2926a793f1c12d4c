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
#include <optional>
#include <string>
#include <vector>

#include "codefend/core/image.hpp"
#include "codefend/core/rng.hpp"

namespace codefend {

enum class Split { kTrain, kTest };

std::string_view split_name(Split split);

struct ManifestEntry {
  std::string adv_path;
  std::string clean_path;
  std::string attack;
  double epsilon = 0.0;
  std::optional<std::string> target;
  Split split = Split::kTrain;

  // Splits are keyed on this so one underlying image never lands in both.
  std::string clean_id() const;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

// A list of adversarial/clean pairs. Image paths are stored as written and
// resolved against base_dir (the manifest's directory when loaded from disk).
struct PairManifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;

  std::size_t count(Split split) const;
  std::vector<std::size_t> indices(Split split) const;
  std::filesystem::path resolve(const std::string& path) const;
};

// JSON-lines, one object per pair: adv, clean, attack, epsilon, target, split.
std::string serialize_manifest(const PairManifest& manifest);
void write_manifest(const PairManifest& manifest, const std::filesystem::path& path);

// Throws MissingFile, SchemaError (naming the 1-based line) or DanglingRef.
// With check_images, every referenced image is decoded once.
PairManifest load_manifest(const std::filesystem::path& path, bool check_images = true);

// Reassigns splits by clean-image id so that |train| = round(fraction * N)
// whenever a grouping achieves it (closest achievable count otherwise).
// Throws DegenerateSplit if either side ends up empty.
PairManifest split_manifest(const PairManifest& manifest, double train_fraction, Rng& rng);

// Reads an image referenced by a manifest. A sibling ".npybin" sidecar, when
// present, takes precedence over the PNG so budgets survive storage exactly.
ImageTensor read_manifest_image(const PairManifest& manifest, const std::string& path);

AdvPair load_pair(const PairManifest& manifest, std::size_t index);

}  // namespace codefend
