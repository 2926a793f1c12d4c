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

#include "codefend/prefixgen/prefix_lm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>
#include <json.hpp>

#include "codefend/core/adamw.hpp"
#include "codefend/core/error.hpp"
#include "codefend/core/hash.hpp"
#include "codefend/core/rng.hpp"
#include "codefend/core/tensor_archive.hpp"

namespace codefend::prefixgen {
namespace {

using nlohmann::json;

constexpr std::string_view kQuestion = "{question}";
constexpr std::string_view kPrefix = "{prefix}";

struct TemplateParts {
  std::string before_question;
  std::string between;
  std::string after_prefix;
};

TemplateParts split_template(std::string_view tmpl) {
  const auto q = tmpl.find(kQuestion);
  const auto p = tmpl.find(kPrefix);
  if (q == std::string_view::npos || p == std::string_view::npos || p < q + kQuestion.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("template '{}' needs {{question}} followed by {{prefix}}", tmpl));
  }
  return {std::string(tmpl.substr(0, q)),
          std::string(tmpl.substr(q + kQuestion.size(), p - q - kQuestion.size())),
          std::string(tmpl.substr(p + kPrefix.size()))};
}

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
}

}  // namespace

std::string apply_template(std::string_view tmpl, std::string_view question,
                           std::string_view prefix) {
  const auto parts = split_template(tmpl);
  return parts.before_question + std::string(question) + parts.between + std::string(prefix) +
         parts.after_prefix;
}

std::vector<PrefixSample> build_prefix_dataset(std::span<const promptopt::PromptRecord> records,
                                               std::span<const QueryItem> queries,
                                               const Detokenizer& detokenize,
                                               std::string_view tmpl) {
  (void)split_template(tmpl);
  std::unordered_map<std::string, const QueryItem*> by_id;
  for (const auto& q : queries) {
    if (!by_id.emplace(q.id, &q).second) {
      throw Error(ErrorCode::kAlignmentError, fmt::format("duplicate query id '{}'", q.id));
    }
  }
  if (records.size() != queries.size()) {
    throw Error(ErrorCode::kAlignmentError,
                fmt::format("{} prompt records but {} queries", records.size(), queries.size()));
  }
  std::vector<PrefixSample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    const auto it = by_id.find(r.id);
    if (it == by_id.end()) {
      throw Error(ErrorCode::kAlignmentError, fmt::format("no query for record id '{}'", r.id));
    }
    std::string prefix = detokenize(r.optimized);
    if (blank(prefix)) {
      throw Error(ErrorCode::kEmptyPrefix, fmt::format("record '{}' has an empty prefix", r.id));
    }
    PrefixSample s;
    s.query = it->second->text;
    s.prefix = std::move(prefix);
    s.image_id = r.id;
    s.text = apply_template(tmpl, s.query, s.prefix);
    out.push_back(std::move(s));
  }
  return out;
}

std::string serialize_prefix_dataset(std::span<const PrefixSample> samples) {
  std::ostringstream out;
  for (const auto& s : samples) {
    out << json{{"query", s.query}, {"prefix", s.prefix}, {"image_id", s.image_id}}.dump() << '\n';
  }
  return out.str();
}

void write_prefix_dataset(std::span<const PrefixSample> samples,
                          const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, fmt::format("cannot write {}", path.string()));
  out << serialize_prefix_dataset(samples);
  if (!out) throw Error(ErrorCode::kIoError, fmt::format("failed writing {}", path.string()));
}

std::vector<PrefixSample> read_prefix_dataset(const std::filesystem::path& path,
                                              std::string_view tmpl) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kMissingFile, fmt::format("cannot open {}", path.string()));
  std::vector<PrefixSample> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (blank(line)) continue;
    try {
      const auto j = json::parse(line);
      PrefixSample s;
      s.query = j.at("query").get<std::string>();
      s.prefix = j.at("prefix").get<std::string>();
      s.image_id = j.at("image_id").get<std::string>();
      if (blank(s.prefix)) {
        throw Error(ErrorCode::kEmptyPrefix,
                    fmt::format("{}:{}: empty prefix", path.string(), line_no));
      }
      s.text = apply_template(tmpl, s.query, s.prefix);
      out.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kSchemaError,
                  fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
  }
  return out;
}

PrefixLm::PrefixLm(std::shared_ptr<const WordTokenizer> tokenizer,
                   std::shared_ptr<const TinyLm> base, std::string tmpl)
    : tokenizer_(std::move(tokenizer)), base_(std::move(base)), template_(std::move(tmpl)) {
  if (!tokenizer_ || !base_) {
    throw Error(ErrorCode::kInvalidArgument, "prefix LM needs a tokenizer and a base model");
  }
  if (tokenizer_->vocab_size() != base_->vocab_size()) {
    throw Error(ErrorCode::kBaseMismatch,
                fmt::format("tokenizer has {} pieces, base model {}", tokenizer_->vocab_size(),
                            base_->vocab_size()));
  }
  (void)split_template(template_);
}

std::string PrefixLm::base_fingerprint() const {
  return hash_text(base_->fingerprint() + "/" + tokenizer_->fingerprint());
}

void PrefixLm::set_adapter(LoraAdapter adapter) {
  if (adapter.targets() != base_->lora_targets()) {
    throw Error(ErrorCode::kBaseMismatch, "adapter targets do not match the base model");
  }
  adapter_ = std::move(adapter);
}

const LoraAdapter& PrefixLm::adapter() const {
  if (!adapter_) throw Error(ErrorCode::kInvalidArgument, "no adapter installed");
  return *adapter_;
}

LoraAdapter& PrefixLm::mutable_adapter() {
  if (!adapter_) throw Error(ErrorCode::kInvalidArgument, "no adapter installed");
  return *adapter_;
}

Tokens PrefixLm::encode_context(std::string_view query) const {
  const auto parts = split_template(template_);
  return tokenizer_->encode(parts.before_question + std::string(query) + parts.between);
}

EncodedSample PrefixLm::encode_sample(std::string_view query, std::string_view prefix) const {
  const auto parts = split_template(template_);
  EncodedSample s;
  s.ids = encode_context(query);
  s.target_mask.assign(s.ids.size(), 0);
  for (const auto& piece : {tokenizer_->encode(prefix), tokenizer_->encode(parts.after_prefix)}) {
    s.ids.insert(s.ids.end(), piece.begin(), piece.end());
    s.target_mask.insert(s.target_mask.end(), piece.size(), 1);
  }
  if (s.ids.size() > static_cast<std::size_t>(base_->config().max_len)) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("sample of {} tokens exceeds the model's {}", s.ids.size(),
                            base_->config().max_len));
  }
  return s;
}

std::vector<double> PrefixLm::next_log_probs(std::span<const TokenId> context) const {
  const auto logits = base_->logits(context, adapter_ ? &*adapter_ : nullptr);
  const auto row = logits.row(logits.rows() - 1);
  const double mx = row.maxCoeff();
  const double lse = mx + std::log((row.array() - mx).exp().sum());
  std::vector<double> out(static_cast<std::size_t>(row.size()));
  for (long i = 0; i < row.size(); ++i) out[static_cast<std::size_t>(i)] = row(i) - lse;
  return out;
}

void AdapterCheckpoint::save(const std::filesystem::path& path) const {
  TensorArchive archive;
  auto& meta = archive.meta();
  meta["format"] = "codefend-lora/1";
  meta["base_fingerprint"] = base_fingerprint;
  meta["rank"] = adapter.rank();
  meta["alpha"] = adapter.alpha();
  json targets = json::array();
  for (const auto& t : adapter.targets()) {
    targets.push_back({{"name", t.name}, {"d_in", t.d_in}, {"d_out", t.d_out}});
  }
  meta["targets"] = targets;
  meta["training"] = {{"epochs", training.epochs},
                      {"learning_rate", training.learning_rate},
                      {"batch_size", training.batch_size},
                      {"weight_decay", training.weight_decay},
                      {"rank", training.rank},
                      {"alpha", training.alpha},
                      {"seed", training.seed}};
  const auto params = adapter.parameters();
  for (std::size_t k = 0; k < adapter.targets().size(); ++k) {
    const auto& t = adapter.targets()[k];
    const std::size_t na = std::size_t(adapter.rank()) * t.d_in;
    const std::size_t nb = std::size_t(adapter.rank()) * t.d_out;
    const auto a = params.subspan(adapter.offset_a(k), na);
    const auto b = params.subspan(adapter.offset_b(k), nb);
    archive.put(t.name + ".A", {adapter.rank(), t.d_in}, {a.begin(), a.end()});
    archive.put(t.name + ".B", {t.d_out, adapter.rank()}, {b.begin(), b.end()});
  }
  archive.save(path);
}

AdapterCheckpoint AdapterCheckpoint::load(const std::filesystem::path& path) {
  const TensorArchive archive = TensorArchive::load(path);
  const auto& meta = archive.meta();
  AdapterCheckpoint ck;
  try {
    if (meta.at("format").get<std::string>() != "codefend-lora/1") {
      throw Error(ErrorCode::kCheckpointCorrupt,
                  fmt::format("{}: not an adapter checkpoint", path.string()));
    }
    ck.base_fingerprint = meta.at("base_fingerprint").get<std::string>();
    std::vector<LoraTarget> targets;
    for (const auto& t : meta.at("targets")) {
      targets.push_back(
          {t.at("name").get<std::string>(), t.at("d_in").get<int>(), t.at("d_out").get<int>()});
    }
    const auto& tr = meta.at("training");
    ck.training.epochs = tr.at("epochs").get<int>();
    ck.training.learning_rate = tr.at("learning_rate").get<double>();
    ck.training.batch_size = tr.at("batch_size").get<int>();
    ck.training.weight_decay = tr.at("weight_decay").get<double>();
    ck.training.rank = tr.at("rank").get<int>();
    ck.training.alpha = tr.at("alpha").get<double>();
    ck.training.seed = tr.at("seed").get<std::uint64_t>();
    ck.adapter = LoraAdapter(std::move(targets), meta.at("rank").get<int>(),
                             meta.at("alpha").get<double>());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kCheckpointCorrupt,
                fmt::format("{}: bad adapter metadata ({})", path.string(), e.what()));
  }
  auto params = ck.adapter.mutable_parameters();
  for (std::size_t k = 0; k < ck.adapter.targets().size(); ++k) {
    const auto& t = ck.adapter.targets()[k];
    for (const auto& [suffix, offset, rows, cols] :
         {std::tuple{".A", ck.adapter.offset_a(k), ck.adapter.rank(), t.d_in},
          std::tuple{".B", ck.adapter.offset_b(k), t.d_out, ck.adapter.rank()}}) {
      const std::string name = t.name + suffix;
      if (!archive.contains(name)) {
        throw Error(ErrorCode::kCheckpointCorrupt,
                    fmt::format("{}: missing tensor '{}'", path.string(), name));
      }
      const auto& tensor = archive.get(name);
      if (tensor.shape != std::vector<std::int64_t>{rows, cols}) {
        throw Error(ErrorCode::kCheckpointCorrupt,
                    fmt::format("{}: tensor '{}' has the wrong shape", path.string(), name));
      }
      std::copy(tensor.values.begin(), tensor.values.end(), params.begin() + offset);
    }
  }
  return ck;
}

void AdapterCheckpoint::apply_to(PrefixLm& lm) const {
  if (base_fingerprint != lm.base_fingerprint()) {
    throw Error(ErrorCode::kBaseMismatch,
                fmt::format("adapter was trained on base {} but the model is {}",
                            base_fingerprint, lm.base_fingerprint()));
  }
  lm.set_adapter(adapter);
}

PrefixTrainResult train_prefix_generator(std::span<const PrefixSample> samples, PrefixLm& lm,
                                         const PrefixTrainConfig& config) {
  if (samples.empty()) throw Error(ErrorCode::kEmptyDataset, "no prefix samples to train on");
  if (config.epochs < 0 || config.batch_size < 1 || !(config.learning_rate > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("bad prefix training config (epochs={}, batch={}, lr={})",
                            config.epochs, config.batch_size, config.learning_rate));
  }
  const std::string base_before = lm.base_fingerprint();
  std::vector<EncodedSample> encoded;
  encoded.reserve(samples.size());
  for (const auto& s : samples) encoded.push_back(lm.encode_sample(s.query, s.prefix));

  lm.set_adapter(lora_wrap(lm.base().lora_targets(), config.rank, config.alpha, config.seed));
  LoraAdapter& adapter = lm.mutable_adapter();
  AdamW opt(adapter.num_parameters(),
            {.learning_rate = config.learning_rate, .weight_decay = config.weight_decay});
  Rng order_rng = Rng(config.seed).fork(1);
  std::vector<std::size_t> order(encoded.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<float> grad(adapter.num_parameters());

  auto target_count = [](const EncodedSample& s) {
    return static_cast<std::size_t>(std::count(s.target_mask.begin() + 1, s.target_mask.end(), 1));
  };

  PrefixTrainResult result;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    order_rng.shuffle(std::span<std::size_t>(order));
    double epoch_sum = 0.0;
    std::size_t epoch_targets = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::size_t batch_targets = 0;
      for (std::size_t k = start; k < stop; ++k) batch_targets += target_count(encoded[order[k]]);
      std::fill(grad.begin(), grad.end(), 0.0f);
      double batch_sum = 0.0;
      for (std::size_t k = start; k < stop; ++k) {
        const auto& s = encoded[order[k]];
        batch_sum += lm.base().nll_sum(s.ids, s.target_mask, adapter,
                                       1.0 / static_cast<double>(batch_targets), grad, nullptr);
      }
      if (!std::isfinite(batch_sum) ||
          !std::all_of(grad.begin(), grad.end(), [](float g) { return std::isfinite(g); })) {
        throw Error(ErrorCode::kNonFiniteLoss,
                    fmt::format("prefix loss diverged at epoch {} step {}", epoch + 1,
                                opt.steps_taken() + 1));
      }
      opt.step(adapter.mutable_parameters(), grad);
      epoch_sum += batch_sum;
      epoch_targets += batch_targets;
    }
    result.epoch_losses.push_back(epoch_sum / static_cast<double>(epoch_targets));
  }
  if (lm.base_fingerprint() != base_before) {
    throw Error(ErrorCode::kStageFailure, "base model changed during adapter training");
  }
  result.checkpoint = {adapter, base_before, config};
  return result;
}

GeneratedPrefix generate_prefix(std::string_view query, const PrefixLm& lm,
                                const DecodeConfig& config) {
  if (config.max_length < 1) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("max_length {} < 1", config.max_length));
  }
  if (config.strategy == DecodeStrategy::kSampled && !(config.temperature > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("temperature {} must be positive", config.temperature));
  }
  const WordTokenizer& tok = lm.tokenizer();
  const std::size_t max_len = static_cast<std::size_t>(lm.base().config().max_len);
  Tokens context = lm.encode_context(query);
  if (context.size() >= max_len) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("query context of {} tokens leaves no room to generate",
                            context.size()));
  }
  Rng rng(config.seed);
  GeneratedPrefix out;
  out.overflow = true;
  while (static_cast<int>(out.tokens.size()) < config.max_length && context.size() < max_len) {
    auto logp = lm.next_log_probs(context);
    for (TokenId id = 0; id < WordTokenizer::kNumSpecial; ++id) {
      const bool allow_eos = id == WordTokenizer::kEos && !out.tokens.empty();
      if (!allow_eos) logp[static_cast<std::size_t>(id)] = -INFINITY;
    }
    TokenId next = 0;
    if (config.strategy == DecodeStrategy::kGreedy) {
      next = static_cast<TokenId>(std::max_element(logp.begin(), logp.end()) - logp.begin());
    } else {
      std::vector<double> w(logp.size());
      const double mx = *std::max_element(logp.begin(), logp.end());
      double z = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) z += w[i] = std::exp((logp[i] - mx) / config.temperature);
      double u = rng.uniform() * z;
      next = static_cast<TokenId>(w.size() - 1);
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (w[i] > 0.0 && (u -= w[i]) < 0.0) {
          next = static_cast<TokenId>(i);
          break;
        }
      }
    }
    if (next == WordTokenizer::kEos) {
      out.overflow = false;
      break;
    }
    out.tokens.push_back(next);
    context.push_back(next);
  }
  out.text = tok.decode(out.tokens);
  return out;
}

}  // namespace codefend::prefixgen
