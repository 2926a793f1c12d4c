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
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "codefend/core/error.hpp"
#include "codefend/core/image.hpp"
#include "codefend/core/manifest.hpp"
#include "codefend/pipeline/providers.hpp"
#include "codefend/pipeline/registry.hpp"
#include "codefend/prefixgen/prefix_lm.hpp"
#include "codefend/purifier/purifier.hpp"

namespace codefend::pipeline {

// Step 1: adversarial image in, purified image out.
class PurifyStage {
 public:
  virtual ~PurifyStage() = default;
  virtual ImageTensor purify(const ImageTensor& adversarial) const = 0;
  virtual std::string name() const = 0;
};

// Step 2: protective prefix for a query. The purified image is offered for
// interface parity; the bundled generators condition on the query only.
class PrefixStage {
 public:
  virtual ~PrefixStage() = default;
  virtual std::string prefix(std::string_view query, const ImageTensor& purified) const = 0;
  virtual std::string name() const = 0;
};

class IdentityPurifyStage final : public PurifyStage {
 public:
  ImageTensor purify(const ImageTensor& adversarial) const override { return adversarial; }
  std::string name() const override { return "identity"; }
};

class DiffusionPurifyStage final : public PurifyStage {
 public:
  explicit DiffusionPurifyStage(purifier::Purifier purifier) : purifier_(std::move(purifier)) {}
  ImageTensor purify(const ImageTensor& adversarial) const override {
    return purifier_.purify(adversarial);
  }
  std::string name() const override { return "diffusion"; }

 private:
  purifier::Purifier purifier_;
};

class FixedPrefixStage final : public PrefixStage {
 public:
  explicit FixedPrefixStage(std::string text = {}) : text_(std::move(text)) {}
  std::string prefix(std::string_view, const ImageTensor&) const override { return text_; }
  std::string name() const override { return text_.empty() ? "none" : "fixed"; }

 private:
  std::string text_;
};

class LmPrefixStage final : public PrefixStage {
 public:
  LmPrefixStage(std::shared_ptr<const prefixgen::PrefixLm> lm, prefixgen::DecodeConfig decode)
      : lm_(std::move(lm)), decode_(decode) {}
  std::string prefix(std::string_view query, const ImageTensor&) const override {
    return prefixgen::generate_prefix(query, *lm_, decode_).text;
  }
  std::string name() const override { return "lora-lm"; }

 private:
  std::shared_ptr<const prefixgen::PrefixLm> lm_;
  prefixgen::DecodeConfig decode_;
};

// An Error raised inside one defense stage ("purify", "prefix" or "vlm").
class StageError : public Error {
 public:
  StageError(std::string stage, ErrorCode code, const std::string& detail)
      : Error(code, fmt_message(stage, detail)), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  static std::string fmt_message(const std::string& stage, const std::string& detail) {
    return "stage " + stage + ": " + detail;
  }
  std::string stage_;
};

// p (+) q: a single space between prefix and query; an empty prefix leaves
// the query unchanged.
std::string compose_prompt(std::string_view prefix, std::string_view query);

struct StageTimings {
  double purify_ms = 0.0;
  double prefix_ms = 0.0;
  double vlm_ms = 0.0;
};

struct StageErrorRecord {
  std::string stage;
  std::string message;
};

struct DefenseTrace {
  std::string id;
  std::vector<std::string> stages;
  std::string purified_image_path;
  std::string purified_hash;
  std::string prefix;
  std::string prompt;
  std::string answer;
  bool degraded = false;
  StageTimings timings;
  std::vector<StageErrorRecord> stage_errors;

  nlohmann::json to_json(bool with_timings = true) const;
  // Hash of the trace without timings; equal for reproducible runs.
  std::string hash() const;
};

struct DefenseResult {
  std::string answer;
  DefenseTrace trace;
};

struct DefenseOptions {
  // A failing prefix stage falls back to the empty prefix (recorded).
  bool allow_degraded = false;
  // When set, purified images are written here as <id>.png.
  std::filesystem::path image_dir;
};

// Algorithm: purify -> prefix -> victim, one victim call per item; the
// victim only ever sees the purified image.
class Defense {
 public:
  Defense(std::shared_ptr<const PurifyStage> purify, std::shared_ptr<const PrefixStage> prefix,
          std::shared_ptr<const VictimVlm> victim, DefenseOptions options = {});

  DefenseResult defend(const ImageTensor& adversarial, std::string_view query,
                       std::string id = {}) const;
  const DefenseOptions& options() const noexcept { return options_; }

 private:
  std::shared_ptr<const PurifyStage> purify_;
  std::shared_ptr<const PrefixStage> prefix_;
  std::shared_ptr<const VictimVlm> victim_;
  DefenseOptions options_;
  std::unique_ptr<std::mutex> victim_mu_;
};

struct DefenseConfig {
  // Empty paths select the identity purifier / empty prefix.
  std::filesystem::path purifier_checkpoint;
  std::filesystem::path adapter_checkpoint;
  purifier::SamplerConfig sampler;
  prefixgen::DecodeConfig decode;
  // Overrides the checkpoint's instruction when non-empty.
  std::string instruction;
  std::uint64_t seed = 0;
  bool allow_degraded = false;
  std::filesystem::path image_dir;
};

// Loads checkpoints against the registry's providers. Throws CheckpointCorrupt,
// BaseMismatch or UnresolvedRole.
Defense make_defense(const DefenseConfig& config, const ProviderRegistry& registry);

struct BatchItem {
  std::string id;
  std::optional<DefenseResult> result;
  std::optional<std::string> error;
};

// Order-preserving; a failing item yields an error record instead of
// aborting. Throws LengthMismatch when questions and entries disagree and
// IoError when the image directory cannot be created.
std::vector<BatchItem> defend_batch(const PairManifest& manifest,
                                    std::span<const std::string> questions,
                                    const Defense& defense, int workers = 1);

// JSON lines, one trace (or error record) per item.
std::string serialize_batch(std::span<const BatchItem> items, bool with_timings = true);
std::string batch_hash(std::span<const BatchItem> items);

}  // namespace codefend::pipeline
