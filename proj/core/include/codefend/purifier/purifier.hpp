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
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "codefend/core/image.hpp"
#include "codefend/core/manifest.hpp"
#include "codefend/core/rng.hpp"
#include "codefend/purifier/codec.hpp"
#include "codefend/purifier/noise_predictor.hpp"
#include "codefend/purifier/schedule.hpp"

namespace codefend::purifier {

inline constexpr std::string_view kDefaultInstruction =
    "Remove the adversarial noise while preserving original image details";

struct PurifierBackend {
  std::shared_ptr<const LatentCodec> codec;
  std::shared_ptr<NoisePredictor> predictor;
  DiffusionSchedule schedule;
};

struct TrainingMeta {
  int epochs = 0;
  double learning_rate = 0.0;
  int batch_size = 0;
  std::uint64_t seed = 0;
  std::string manifest_hash;

  friend bool operator==(const TrainingMeta&, const TrainingMeta&) = default;
};

struct PurifierCheckpoint {
  std::string provider;
  std::vector<float> predictor_state;
  DiffusionSchedule schedule;
  std::string instruction{kDefaultInstruction};
  TrainingMeta training;
  std::string codec_fingerprint;
  std::string conditioning_fingerprint;

  // Snapshot of the backend's current predictor parameters.
  static PurifierCheckpoint capture(const PurifierBackend& backend, std::string instruction,
                                    TrainingMeta training);

  void save(const std::filesystem::path& path) const;
  // Throws MissingFile or CheckpointCorrupt.
  static PurifierCheckpoint load(const std::filesystem::path& path);
};

// Monte-Carlo estimate of E ||eps - eps_theta(z_t, t, E(adv), instruction)||^2
// where z_t noises the CLEAN latent. Mean over batch items and latent
// elements. For each item, in batch order, the draws are: t from
// rng.uniform_int(0, T-1), then one rng.normal() per latent element in
// (y, x, c) order.
double diffusion_loss(std::span<const AdvPair> batch, const NoisePredictor& predictor,
                      const LatentCodec& codec, const DiffusionSchedule& schedule,
                      const std::string& instruction, Rng& rng);

struct PurifierTrainConfig {
  int epochs = 4000;
  double learning_rate = 5e-5;
  int batch_size = 4;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  // Condition dropout so the guidance sampler has unconditional branches.
  double drop_image_prob = 0.05;
  double drop_text_prob = 0.05;
  std::string instruction{kDefaultInstruction};
};

struct PurifierTrainResult {
  PurifierCheckpoint checkpoint;
  std::vector<double> epoch_losses;
};

// AdamW on the predictor's parameters only; codec and conditioning encoders
// are never written. Throws EmptySplit or NonFiniteLoss (with epoch/step).
PurifierTrainResult train_purifier(std::span<const AdvPair> train_pairs, PurifierBackend& backend,
                                   const PurifierTrainConfig& config,
                                   const std::string& manifest_hash = {});
// Trains on the manifest's train split.
PurifierTrainResult train_purifier(const PairManifest& manifest, PurifierBackend& backend,
                                   const PurifierTrainConfig& config);

void write_loss_log(const std::vector<double>& epoch_losses, const std::filesystem::path& path);

struct SamplerConfig {
  int steps = 10;
  double image_guidance = 1.5;
  double text_guidance = 7.5;
  // Purification starts from z_{t_start}, t_start = round(fraction * T).
  double t_start_fraction = 0.3;
  std::uint64_t seed = 0;
};

// Deterministic DDIM reverse loop with dual classifier-free guidance:
//   eps = e(0,0) + s_I (e(c,0) - e(0,0)) + s_T (e(c,T) - e(c,0)).
// Binds a checkpoint to a private copy of the predictor once; purify() is
// const and safe to call concurrently.
class Purifier {
 public:
  Purifier(const PurifierCheckpoint& checkpoint, const PurifierBackend& backend,
           SamplerConfig sampler);

  ImageTensor purify(const ImageTensor& adversarial) const;
  std::vector<int> timesteps() const;
  const SamplerConfig& sampler() const noexcept { return sampler_; }

 private:
  Latent guided_eps(const Latent& z, int t, const Latent& cond) const;

  std::shared_ptr<const LatentCodec> codec_;
  std::shared_ptr<const NoisePredictor> predictor_;
  DiffusionSchedule schedule_;
  std::string instruction_;
  SamplerConfig sampler_;
};

// Throws CheckpointCorrupt or SamplerDiverged.
ImageTensor purify(const ImageTensor& adversarial, const PurifierCheckpoint& checkpoint,
                   const PurifierBackend& backend, const SamplerConfig& sampler);

}  // namespace codefend::purifier
