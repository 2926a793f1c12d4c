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

#include "codefend/attack/forge.hpp"

#include <mutex>

#include <fmt/format.h>

#include "codefend/core/error.hpp"
#include "codefend/core/image_io.hpp"
#include "codefend/core/parallel.hpp"
#include "codefend/core/rng.hpp"

namespace codefend::attack {

namespace fs = std::filesystem;

PairManifest forge_dataset(const std::vector<ImageTensor>& images, const GradOracle& oracle,
                           const AttackConfig& config, const fs::path& out_dir,
                           const ForgeOptions& options) {
  if (images.empty()) throw Error(ErrorCode::kInvalidArgument, "forge_dataset: no images");
  config.validate();
  if (!config.targeted && options.references.size() != images.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("untargeted forge needs one reference per image ({} vs {})",
                            options.references.size(), images.size()));
  }
  std::error_code ec;
  fs::create_directories(out_dir / "clean", ec);
  fs::create_directories(out_dir / "adv", ec);
  if (ec) {
    throw Error(ErrorCode::kIoError,
                fmt::format("cannot create '{}': {}", out_dir.string(), ec.message()));
  }

  PairManifest manifest;
  manifest.base_dir = out_dir;
  manifest.entries.resize(images.size());

  std::mutex oracle_mu;
  const bool serialize = !oracle.concurrent_safe();
  const std::size_t workers = serialize ? 1 : options.workers;

  parallel_for(images.size(), workers, [&](std::size_t i) {
    const ImageTensor& image = images[i];
    const std::string id = image.id().empty() ? fmt::format("img{:05d}", i) : image.id();
    AttackConfig item_cfg = config;
    item_cfg.seed = Rng(config.seed).fork(i).next_u64();

    AdvPair pair;
    try {
      std::unique_lock lock(oracle_mu, std::defer_lock);
      if (serialize) lock.lock();
      pair = config.targeted
                 ? pgd_targeted(oracle, image, options.prompt, *config.target_text, item_cfg)
                 : pgd_untargeted(oracle, image, options.prompt, options.references[i], item_cfg);
    } catch (const Error& e) {
      throw e.in_context(fmt::format("item '{}'", id));
    }

    ManifestEntry& entry = manifest.entries[i];
    entry.clean_path = fmt::format("clean/{}.png", id);
    entry.adv_path = fmt::format("adv/{}.png", id);
    entry.attack = config.name;
    entry.epsilon = config.epsilon;
    entry.target = config.targeted ? config.target_text : std::nullopt;
    entry.split = Split::kTrain;

    for (const auto& [img, rel] : {std::pair{&pair.clean, entry.clean_path},
                                   std::pair{&pair.adv, entry.adv_path}}) {
      const fs::path png = out_dir / rel;
      write_png(*img, png);
      write_npybin(*img, fs::path(png).replace_extension(".npybin"));
    }
    const AdvPair stored = load_pair(manifest, i);
    if (max_abs_diff(stored.adv, stored.clean) > config.epsilon + 1e-6) {
      throw Error(ErrorCode::kIoError, fmt::format("item '{}': stored pair exceeds budget", id));
    }
  });

  write_manifest(manifest, out_dir / "manifest.jsonl");
  return manifest;
}

}  // namespace codefend::attack
