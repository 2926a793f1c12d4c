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
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "codefend/prefixgen/lora.hpp"
#include "codefend/prefixgen/tiny_lm.hpp"
#include "codefend/prefixgen/tokenizer.hpp"
#include "codefend/promptopt/search.hpp"

namespace codefend::prefixgen {

inline constexpr std::string_view kDefaultTemplate =
    "<s>[INST] Add prefix to: {question} [/INST] {prefix}</s>";

struct PrefixSample {
  std::string query;
  std::string prefix;
  std::string image_id;
  // The template filled with query and prefix.
  std::string text;

  friend bool operator==(const PrefixSample&, const PrefixSample&) = default;
};

struct QueryItem {
  std::string id;
  std::string text;
};

// Substitutes {question} and {prefix}. Throws InvalidArgument if either
// placeholder is missing or {prefix} precedes {question}.
std::string apply_template(std::string_view tmpl, std::string_view question,
                           std::string_view prefix);

using Detokenizer = std::function<std::string(std::span<const promptopt::TokenId>)>;

// One sample per record, matched to the query with the same id. Throws
// AlignmentError (naming the id) or EmptyPrefix.
std::vector<PrefixSample> build_prefix_dataset(std::span<const promptopt::PromptRecord> records,
                                               std::span<const QueryItem> queries,
                                               const Detokenizer& detokenize,
                                               std::string_view tmpl = kDefaultTemplate);

// JSON lines with query, prefix, image_id.
std::string serialize_prefix_dataset(std::span<const PrefixSample> samples);
void write_prefix_dataset(std::span<const PrefixSample> samples,
                          const std::filesystem::path& path);
std::vector<PrefixSample> read_prefix_dataset(const std::filesystem::path& path,
                                              std::string_view tmpl = kDefaultTemplate);

// Token ids and loss mask for one sample: template tokens up to {prefix} are
// context (mask 0); the prefix and the template tail are targets (mask 1).
struct EncodedSample {
  Tokens ids;
  std::vector<std::uint8_t> target_mask;
};

// Prefix-generating language model: tokenizer, frozen base model and a LoRA
// adapter over the base's query/value projections.
class PrefixLm {
 public:
  PrefixLm(std::shared_ptr<const WordTokenizer> tokenizer, std::shared_ptr<const TinyLm> base,
           std::string tmpl = std::string(kDefaultTemplate));

  const WordTokenizer& tokenizer() const noexcept { return *tokenizer_; }
  const TinyLm& base() const noexcept { return *base_; }
  const std::string& template_text() const noexcept { return template_; }
  // Fingerprint of base weights and tokenizer together.
  std::string base_fingerprint() const;

  // Installs an adapter; its targets must match the base model.
  void set_adapter(LoraAdapter adapter);
  bool has_adapter() const noexcept { return adapter_.has_value(); }
  const LoraAdapter& adapter() const;
  LoraAdapter& mutable_adapter();

  EncodedSample encode_sample(std::string_view query, std::string_view prefix) const;
  // Context the generator continues: the template up to {prefix}.
  Tokens encode_context(std::string_view query) const;
  // log P(next | context) under base + adapter (base alone if none installed).
  std::vector<double> next_log_probs(std::span<const TokenId> context) const;

 private:
  std::shared_ptr<const WordTokenizer> tokenizer_;
  std::shared_ptr<const TinyLm> base_;
  std::string template_;
  std::optional<LoraAdapter> adapter_;
};

struct PrefixTrainConfig {
  int epochs = 100;
  double learning_rate = 2e-4;
  int batch_size = 4;
  double weight_decay = 0.0;
  int rank = 8;
  double alpha = 16.0;
  std::uint64_t seed = 0;
};

struct AdapterCheckpoint {
  LoraAdapter adapter;
  std::string base_fingerprint;
  PrefixTrainConfig training;

  void save(const std::filesystem::path& path) const;
  static AdapterCheckpoint load(const std::filesystem::path& path);
  // Throws BaseMismatch when the checkpoint was trained on another base.
  void apply_to(PrefixLm& lm) const;
};

struct PrefixTrainResult {
  AdapterCheckpoint checkpoint;
  std::vector<double> epoch_losses;
};

// Teacher-forced cross-entropy on prefix tokens only. Creates a fresh
// adapter with lora_wrap(rank, alpha, seed) and installs the trained result
// on `lm`. Throws EmptyDataset or NonFiniteLoss.
PrefixTrainResult train_prefix_generator(std::span<const PrefixSample> samples, PrefixLm& lm,
                                         const PrefixTrainConfig& config);

enum class DecodeStrategy { kGreedy, kSampled };

struct DecodeConfig {
  int max_length = 16;
  DecodeStrategy strategy = DecodeStrategy::kGreedy;
  double temperature = 1.0;
  std::uint64_t seed = 0;
};

struct GeneratedPrefix {
  std::string text;
  Tokens tokens;
  // max_length was reached before </s>; text holds the truncated prefix.
  bool overflow = false;
};

GeneratedPrefix generate_prefix(std::string_view query, const PrefixLm& lm,
                                const DecodeConfig& config);

}  // namespace codefend::prefixgen
