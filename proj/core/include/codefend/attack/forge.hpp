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
#include <vector>

#include "codefend/attack/oracle.hpp"
#include "codefend/attack/pgd.hpp"
#include "codefend/core/manifest.hpp"

namespace codefend::attack {

struct ForgeOptions {
  // Prompt the surrogate is attacked under.
  std::string prompt = "Describe the image.";
  // Per-image ground-truth reference, required for untargeted attacks.
  std::vector<std::string> references;
  std::size_t workers = 1;
};

// Attacks every image, writes clean/ and adv/ PNGs (plus bit-exact .npybin
// sidecars) and manifest.jsonl under out_dir, and returns the manifest. Every
// written pair is re-read and its budget checked. All entries are tagged
// train; use split_manifest to carve out a test split.
PairManifest forge_dataset(const std::vector<ImageTensor>& images, const GradOracle& oracle,
                           const AttackConfig& config, const std::filesystem::path& out_dir,
                           const ForgeOptions& options = {});

}  // namespace codefend::attack
