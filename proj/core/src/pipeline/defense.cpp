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

#include "codefend/pipeline/defense.hpp"

#include <chrono>
#include <sstream>

#include <fmt/format.h>

#include "codefend/core/hash.hpp"
#include "codefend/core/image_io.hpp"
#include "codefend/core/parallel.hpp"

namespace codefend::pipeline {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

template <typename Fn>
auto run_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e.code(), e.detail());
  } catch (const std::exception& e) {
    throw StageError(stage, ErrorCode::kStageFailure, e.what());
  }
}

std::string item_id(const ManifestEntry& entry) {
  return std::filesystem::path(entry.adv_path).stem().string();
}

}  // namespace

std::string compose_prompt(std::string_view prefix, std::string_view query) {
  if (prefix.empty()) return std::string(query);
  return fmt::format("{} {}", prefix, query);
}

json DefenseTrace::to_json(bool with_timings) const {
  json errors = json::array();
  for (const auto& e : stage_errors) errors.push_back({{"stage", e.stage}, {"message", e.message}});
  json j = {{"id", id},
            {"stages", stages},
            {"purified_image_path", purified_image_path},
            {"purified_hash", purified_hash},
            {"prefix", prefix},
            {"prompt", prompt},
            {"answer", answer},
            {"degraded", degraded},
            {"stage_errors", errors}};
  if (with_timings) {
    j["timings_ms"] = {{"purify", timings.purify_ms},
                       {"prefix", timings.prefix_ms},
                       {"vlm", timings.vlm_ms}};
  }
  return j;
}

std::string DefenseTrace::hash() const { return hash_text(to_json(false).dump()); }

Defense::Defense(std::shared_ptr<const PurifyStage> purify,
                 std::shared_ptr<const PrefixStage> prefix, std::shared_ptr<const VictimVlm> victim,
                 DefenseOptions options)
    : purify_(std::move(purify)), prefix_(std::move(prefix)), victim_(std::move(victim)),
      options_(std::move(options)), victim_mu_(std::make_unique<std::mutex>()) {
  if (!purify_ || !prefix_ || !victim_) {
    throw Error(ErrorCode::kUnresolvedRole, "defense needs purify, prefix and victim stages");
  }
}

DefenseResult Defense::defend(const ImageTensor& adversarial, std::string_view query,
                              std::string id) const {
  DefenseResult out;
  DefenseTrace& trace = out.trace;
  trace.id = id.empty() ? adversarial.id() : std::move(id);

  auto t0 = Clock::now();
  const ImageTensor purified = run_stage("purify", [&] {
    ImageTensor img = purify_->purify(adversarial);
    if (!img.same_shape(adversarial)) {
      throw Error(ErrorCode::kShapeMismatch, "purified image changed shape");
    }
    return img;
  });
  trace.timings.purify_ms = elapsed_ms(t0);
  trace.stages.push_back("purify");
  trace.purified_hash = hash_floats(purified.data());
  if (!options_.image_dir.empty()) {
    const auto path = options_.image_dir / fmt::format("{}.png", trace.id);
    write_png(purified, path);
    trace.purified_image_path = path.string();
  }

  t0 = Clock::now();
  try {
    trace.prefix = run_stage("prefix", [&] { return prefix_->prefix(query, purified); });
  } catch (const StageError& e) {
    if (!options_.allow_degraded) throw;
    trace.prefix.clear();
    trace.degraded = true;
    trace.stage_errors.push_back({e.stage(), e.what()});
  }
  trace.timings.prefix_ms = elapsed_ms(t0);
  trace.stages.push_back("prefix");

  trace.prompt = compose_prompt(trace.prefix, query);
  t0 = Clock::now();
  out.answer = run_stage("vlm", [&] {
    std::unique_lock lock(*victim_mu_, std::defer_lock);
    if (!victim_->concurrent_safe()) lock.lock();
    return victim_->generate(trace.prompt, purified);
  });
  trace.timings.vlm_ms = elapsed_ms(t0);
  trace.stages.push_back("vlm");
  trace.answer = out.answer;
  return out;
}

Defense make_defense(const DefenseConfig& config, const ProviderRegistry& registry) {
  registry.require({Role::kVictim});

  std::shared_ptr<const PurifyStage> purify;
  if (config.purifier_checkpoint.empty()) {
    purify = std::make_shared<const IdentityPurifyStage>();
  } else {
    registry.require({Role::kPurifier});
    auto checkpoint = purifier::PurifierCheckpoint::load(config.purifier_checkpoint);
    if (!config.instruction.empty()) checkpoint.instruction = config.instruction;
    auto sampler = config.sampler;
    sampler.seed = config.seed;
    purify = std::make_shared<const DiffusionPurifyStage>(
        purifier::Purifier(checkpoint, *registry.purifier, sampler));
  }

  std::shared_ptr<const PrefixStage> prefix;
  if (config.adapter_checkpoint.empty()) {
    prefix = std::make_shared<const FixedPrefixStage>();
  } else {
    registry.require({Role::kPrefixLm});
    auto lm = std::make_shared<prefixgen::PrefixLm>(*registry.prefix_lm);
    prefixgen::AdapterCheckpoint::load(config.adapter_checkpoint).apply_to(*lm);
    auto decode = config.decode;
    decode.seed = config.seed;
    prefix = std::make_shared<const LmPrefixStage>(std::move(lm), decode);
  }

  return Defense(std::move(purify), std::move(prefix), registry.victim,
                 {config.allow_degraded, config.image_dir});
}

std::vector<BatchItem> defend_batch(const PairManifest& manifest,
                                    std::span<const std::string> questions,
                                    const Defense& defense, int workers) {
  if (questions.size() != manifest.entries.size()) {
    throw Error(ErrorCode::kLengthMismatch,
                fmt::format("{} manifest entries but {} questions", manifest.entries.size(),
                            questions.size()));
  }
  const auto& dir = defense.options().image_dir;
  if (!dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
      throw Error(ErrorCode::kIoError,
                  fmt::format("cannot create {}: {}", dir.string(), ec.message()));
    }
  }
  std::vector<BatchItem> items(manifest.entries.size());
  parallel_for(items.size(), static_cast<std::size_t>(std::max(1, workers)), [&](std::size_t i) {
    BatchItem& item = items[i];
    item.id = item_id(manifest.entries[i]);
    try {
      const ImageTensor adv =
          read_manifest_image(manifest, manifest.entries[i].adv_path).with_id(item.id);
      item.result = defense.defend(adv, questions[i], item.id);
    } catch (const std::exception& e) {
      item.error = e.what();
    }
  });
  return items;
}

std::string serialize_batch(std::span<const BatchItem> items, bool with_timings) {
  std::ostringstream out;
  for (const auto& item : items) {
    json j = item.result ? item.result->trace.to_json(with_timings)
                         : json{{"id", item.id}, {"error", *item.error}};
    out << j.dump() << '\n';
  }
  return out.str();
}

std::string batch_hash(std::span<const BatchItem> items) {
  return hash_text(serialize_batch(items, false));
}

}  // namespace codefend::pipeline
