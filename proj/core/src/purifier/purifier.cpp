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

#include "codefend/purifier/purifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>
#include <json.hpp>

#include "codefend/core/adamw.hpp"
#include "codefend/core/error.hpp"
#include "codefend/core/hash.hpp"
#include "codefend/core/tensor_archive.hpp"

namespace codefend::purifier {
namespace {

using nlohmann::json;

struct EncodedPair {
  Latent clean;
  Latent adv;
};

std::vector<EncodedPair> encode_pairs(std::span<const AdvPair> pairs, const LatentCodec& codec) {
  std::vector<EncodedPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    out.push_back({codec.encode(p.clean), codec.encode(p.adv)});
  }
  return out;
}

Latent draw_noise(const Latent& like, Rng& rng) {
  Latent eps(like.height, like.width, like.channels);
  for (auto& v : eps.values) v = static_cast<float>(rng.normal());
  return eps;
}

double squared_error(const Latent& pred, const Latent& eps) {
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = double(pred.values[i]) - eps.values[i];
    s += d * d;
  }
  return s;
}

void check_backend(const PurifierBackend& backend) {
  if (!backend.codec || !backend.predictor) {
    throw Error(ErrorCode::kInvalidArgument, "purifier backend needs a codec and a predictor");
  }
  if (backend.schedule.steps() == 0) {
    throw Error(ErrorCode::kInvalidArgument, "purifier backend has an empty schedule");
  }
}

}  // namespace

PurifierCheckpoint PurifierCheckpoint::capture(const PurifierBackend& backend,
                                               std::string instruction, TrainingMeta training) {
  check_backend(backend);
  PurifierCheckpoint ck;
  ck.provider = backend.predictor->kind();
  const auto params = backend.predictor->parameters();
  ck.predictor_state.assign(params.begin(), params.end());
  ck.schedule = backend.schedule;
  ck.instruction = std::move(instruction);
  ck.training = std::move(training);
  ck.codec_fingerprint = backend.codec->fingerprint();
  ck.conditioning_fingerprint = backend.predictor->conditioning_fingerprint();
  return ck;
}

void PurifierCheckpoint::save(const std::filesystem::path& path) const {
  TensorArchive archive;
  auto& meta = archive.meta();
  meta["format"] = "codefend-purifier/1";
  meta["provider"] = provider;
  meta["instruction"] = instruction;
  meta["schedule"] = schedule.values();
  meta["codec_fingerprint"] = codec_fingerprint;
  meta["conditioning_fingerprint"] = conditioning_fingerprint;
  meta["training"] = {{"epochs", training.epochs},
                      {"learning_rate", training.learning_rate},
                      {"batch_size", training.batch_size},
                      {"seed", training.seed},
                      {"manifest_hash", training.manifest_hash}};
  archive.put("predictor", {static_cast<std::int64_t>(predictor_state.size())}, predictor_state);
  archive.save(path);
}

PurifierCheckpoint PurifierCheckpoint::load(const std::filesystem::path& path) {
  const TensorArchive archive = TensorArchive::load(path);
  const auto& meta = archive.meta();
  PurifierCheckpoint ck;
  try {
    if (meta.at("format").get<std::string>() != "codefend-purifier/1") {
      throw Error(ErrorCode::kCheckpointCorrupt,
                  fmt::format("{}: not a purifier checkpoint", path.string()));
    }
    ck.provider = meta.at("provider").get<std::string>();
    ck.instruction = meta.at("instruction").get<std::string>();
    ck.schedule = DiffusionSchedule(meta.at("schedule").get<std::vector<double>>());
    ck.codec_fingerprint = meta.at("codec_fingerprint").get<std::string>();
    ck.conditioning_fingerprint = meta.at("conditioning_fingerprint").get<std::string>();
    const auto& tr = meta.at("training");
    ck.training.epochs = tr.at("epochs").get<int>();
    ck.training.learning_rate = tr.at("learning_rate").get<double>();
    ck.training.batch_size = tr.at("batch_size").get<int>();
    ck.training.seed = tr.at("seed").get<std::uint64_t>();
    ck.training.manifest_hash = tr.at("manifest_hash").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kCheckpointCorrupt,
                fmt::format("{}: bad purifier metadata ({})", path.string(), e.what()));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kCheckpointCorrupt) throw;
    throw Error(ErrorCode::kCheckpointCorrupt,
                fmt::format("{}: bad purifier metadata ({})", path.string(), e.detail()));
  }
  if (!archive.contains("predictor")) {
    throw Error(ErrorCode::kCheckpointCorrupt,
                fmt::format("{}: missing predictor tensor", path.string()));
  }
  ck.predictor_state = archive.get("predictor").values;
  return ck;
}

double diffusion_loss(std::span<const AdvPair> batch, const NoisePredictor& predictor,
                      const LatentCodec& codec, const DiffusionSchedule& schedule,
                      const std::string& instruction, Rng& rng) {
  if (batch.empty()) throw Error(ErrorCode::kEmptySplit, "diffusion_loss on an empty batch");
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& pair : batch) {
    const Latent z0 = codec.encode(pair.clean);
    const Latent cond = codec.encode(pair.adv);
    const int t = static_cast<int>(rng.uniform_int(0, schedule.steps() - 1));
    const Latent eps = draw_noise(z0, rng);
    const Latent zt = add_noise(z0, t, eps, schedule);
    const Latent pred = predictor.predict(zt, t, {&cond, &instruction});
    total += squared_error(pred, eps);
    count += pred.size();
  }
  return total / static_cast<double>(count);
}

PurifierTrainResult train_purifier(std::span<const AdvPair> train_pairs, PurifierBackend& backend,
                                   const PurifierTrainConfig& config,
                                   const std::string& manifest_hash) {
  check_backend(backend);
  if (train_pairs.empty()) {
    throw Error(ErrorCode::kEmptySplit, "no training pairs for the purifier");
  }
  if (config.epochs < 0 || config.batch_size < 1 || !(config.learning_rate > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("bad purifier training config (epochs={}, batch={}, lr={})",
                            config.epochs, config.batch_size, config.learning_rate));
  }

  const LatentCodec& codec = *backend.codec;
  NoisePredictor& predictor = *backend.predictor;
  const DiffusionSchedule& schedule = backend.schedule;
  const std::string codec_before = codec.fingerprint();
  const std::string cond_before = predictor.conditioning_fingerprint();

  const auto encoded = encode_pairs(train_pairs, codec);
  const std::size_t n = encoded.size();
  const std::size_t n_params = predictor.parameters().size();

  AdamW opt(n_params, {.learning_rate = config.learning_rate, .weight_decay = config.weight_decay});
  Rng rng(config.seed);
  Rng order_rng = rng.fork(1);
  Rng drop_rng = rng.fork(2);
  Rng noise_rng = rng.fork(3);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<float> grads(n_params);

  PurifierTrainResult result;
  result.epoch_losses.reserve(static_cast<std::size_t>(config.epochs));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    order_rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(config.batch_size));
      std::fill(grads.begin(), grads.end(), 0.0f);
      double batch_loss = 0.0;
      std::size_t batch_elems = 0;
      for (std::size_t k = start; k < stop; ++k) batch_elems += encoded[order[k]].clean.size();

      for (std::size_t k = start; k < stop; ++k) {
        const auto& item = encoded[order[k]];
        const int t = static_cast<int>(noise_rng.uniform_int(0, schedule.steps() - 1));
        const Latent eps = draw_noise(item.clean, noise_rng);
        const Latent zt = add_noise(item.clean, t, eps, schedule);
        const bool drop_image = drop_rng.bernoulli(config.drop_image_prob);
        const bool drop_text = drop_rng.bernoulli(config.drop_text_prob);
        const Condition cond{drop_image ? nullptr : &item.adv,
                             drop_text ? nullptr : &config.instruction};
        const Latent pred = predictor.predict(zt, t, cond);
        batch_loss += squared_error(pred, eps);
        Latent grad_out(pred.height, pred.width, pred.channels);
        const double scale = 2.0 / static_cast<double>(batch_elems);
        for (std::size_t i = 0; i < pred.size(); ++i) {
          grad_out.values[i] =
              static_cast<float>(scale * (double(pred.values[i]) - eps.values[i]));
        }
        predictor.backward(zt, t, cond, grad_out, grads);
      }
      batch_loss /= static_cast<double>(batch_elems);
      if (!std::isfinite(batch_loss) ||
          !std::all_of(grads.begin(), grads.end(), [](float g) { return std::isfinite(g); })) {
        throw Error(ErrorCode::kNonFiniteLoss,
                    fmt::format("purifier loss diverged at epoch {} step {}", epoch + 1,
                                opt.steps_taken() + 1));
      }
      opt.step(predictor.mutable_parameters(), grads);
      epoch_loss += batch_loss;
      ++batches;
    }
    result.epoch_losses.push_back(epoch_loss / batches);
  }

  if (codec.fingerprint() != codec_before ||
      predictor.conditioning_fingerprint() != cond_before) {
    throw Error(ErrorCode::kStageFailure, "frozen purifier components changed during training");
  }

  TrainingMeta meta{config.epochs, config.learning_rate, config.batch_size, config.seed,
                    manifest_hash};
  result.checkpoint = PurifierCheckpoint::capture(backend, config.instruction, std::move(meta));
  return result;
}

PurifierTrainResult train_purifier(const PairManifest& manifest, PurifierBackend& backend,
                                   const PurifierTrainConfig& config) {
  std::vector<AdvPair> pairs;
  for (std::size_t idx : manifest.indices(Split::kTrain)) pairs.push_back(load_pair(manifest, idx));
  if (pairs.empty()) {
    throw Error(ErrorCode::kEmptySplit, "manifest has no train entries");
  }
  return train_purifier(pairs, backend, config, hash_text(serialize_manifest(manifest)));
}

void write_loss_log(const std::vector<double>& epoch_losses, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, fmt::format("cannot write {}", path.string()));
  out << "epoch,mean_loss\n";
  for (std::size_t i = 0; i < epoch_losses.size(); ++i) {
    out << fmt::format("{},{:.9g}\n", i + 1, epoch_losses[i]);
  }
  if (!out) throw Error(ErrorCode::kIoError, fmt::format("failed writing {}", path.string()));
}

Purifier::Purifier(const PurifierCheckpoint& checkpoint, const PurifierBackend& backend,
                   SamplerConfig sampler)
    : codec_(backend.codec), schedule_(checkpoint.schedule),
      instruction_(checkpoint.instruction), sampler_(sampler) {
  check_backend(backend);
  if (sampler_.steps < 1) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("sampler steps {} < 1", sampler_.steps));
  }
  if (!(sampler_.t_start_fraction >= 0.0 && sampler_.t_start_fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("t_start fraction {} outside [0,1]", sampler_.t_start_fraction));
  }
  if (checkpoint.provider != backend.predictor->kind()) {
    throw Error(ErrorCode::kCheckpointCorrupt,
                fmt::format("checkpoint is for '{}' but the backend provides '{}'",
                            checkpoint.provider, backend.predictor->kind()));
  }
  if (checkpoint.predictor_state.size() != backend.predictor->parameters().size()) {
    throw Error(ErrorCode::kCheckpointCorrupt,
                fmt::format("checkpoint has {} predictor values, backend expects {}",
                            checkpoint.predictor_state.size(),
                            backend.predictor->parameters().size()));
  }
  if (checkpoint.schedule != backend.schedule) {
    throw Error(ErrorCode::kCheckpointCorrupt, "checkpoint schedule differs from the backend's");
  }
  if (checkpoint.codec_fingerprint != backend.codec->fingerprint() ||
      checkpoint.conditioning_fingerprint != backend.predictor->conditioning_fingerprint()) {
    throw Error(ErrorCode::kCheckpointCorrupt,
                "checkpoint was trained against different frozen components");
  }
  auto copy = backend.predictor->clone();
  std::copy(checkpoint.predictor_state.begin(), checkpoint.predictor_state.end(),
            copy->mutable_parameters().begin());
  predictor_ = std::move(copy);
}

std::vector<int> Purifier::timesteps() const {
  const int T = schedule_.steps();
  const int t_start =
      std::clamp(static_cast<int>(std::lround(sampler_.t_start_fraction * T)), 0, T - 1);
  const int k = std::min(sampler_.steps, t_start + 1);
  std::vector<int> taus;
  if (k == 1) return {t_start};
  for (int i = 0; i < k; ++i) {
    taus.push_back(static_cast<int>(
        std::lround(double(t_start) * double(k - 1 - i) / double(k - 1))));
  }
  return taus;
}

Latent Purifier::guided_eps(const Latent& z, int t, const Latent& cond) const {
  const double s_i = sampler_.image_guidance;
  const double s_t = sampler_.text_guidance;
  const Latent full = predictor_->predict(z, t, {&cond, &instruction_});
  if (s_i == 1.0 && s_t == 1.0) return full;
  const Latent img_only = predictor_->predict(z, t, {&cond, nullptr});
  const Latent none = predictor_->predict(z, t, {nullptr, nullptr});
  Latent out(z.height, z.width, z.channels);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double e0 = none.values[i];
    const double ec = img_only.values[i];
    const double ect = full.values[i];
    out.values[i] = static_cast<float>(e0 + s_i * (ec - e0) + s_t * (ect - ec));
  }
  return out;
}

ImageTensor Purifier::purify(const ImageTensor& adversarial) const {
  const Latent cond = codec_->encode(adversarial);
  const auto taus = timesteps();
  Rng rng(sampler_.seed);
  const Latent noise = draw_noise(cond, rng);
  Latent z = add_noise(cond, taus.front(), noise, schedule_);

  for (std::size_t i = 0; i < taus.size(); ++i) {
    const int t = taus[i];
    const Latent eps = guided_eps(z, t, cond);
    const double ab = schedule_.alpha_bar(t);
    const double sa = std::sqrt(ab);
    const double sb = std::sqrt(1.0 - ab);
    const bool last = i + 1 == taus.size();
    const double ab_next = last ? 1.0 : schedule_.alpha_bar(taus[i + 1]);
    const double sa_n = std::sqrt(ab_next);
    const double sb_n = std::sqrt(1.0 - ab_next);
    for (std::size_t j = 0; j < z.size(); ++j) {
      const double x0 = (double(z.values[j]) - sb * eps.values[j]) / sa;
      z.values[j] = static_cast<float>(last ? x0 : sa_n * x0 + sb_n * eps.values[j]);
    }
    if (!z.all_finite()) {
      throw Error(ErrorCode::kSamplerDiverged,
                  fmt::format("sampler diverged at step {} (t={}) for '{}'", i + 1, t,
                              adversarial.id()));
    }
  }
  return codec_->decode(z, adversarial.id());
}

ImageTensor purify(const ImageTensor& adversarial, const PurifierCheckpoint& checkpoint,
                   const PurifierBackend& backend, const SamplerConfig& sampler) {
  return Purifier(checkpoint, backend, sampler).purify(adversarial);
}

}  // namespace codefend::purifier
