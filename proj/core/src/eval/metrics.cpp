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

#include "codefend/eval/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include <fmt/format.h>

#include "codefend/core/error.hpp"

namespace codefend::eval {
namespace {

std::string fold(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

template <typename Fn>
auto encoder_call(Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kEncoderFailure) throw;
    throw Error(ErrorCode::kEncoderFailure, e.detail());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::kEncoderFailure, e.what());
  }
}

void check_embedding(std::span<const double> v, std::string_view what) {
  if (v.empty() || !std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); })) {
    throw Error(ErrorCode::kEncoderFailure, fmt::format("unusable {} embedding", what));
  }
}

}  // namespace

double cosine(std::span<const double> a, std::span<const double> b, bool* degenerate) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("cosine of vectors of length {} and {}", a.size(), b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const bool zero = na == 0.0 || nb == 0.0;
  if (degenerate != nullptr) *degenerate = zero;
  if (zero) return 0.0;
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

double clip_score_from_embeddings(std::span<const double> image, std::span<const double> text) {
  check_embedding(image, "image");
  check_embedding(text, "text");
  bool degenerate = false;
  const double c = encoder_call([&] { return cosine(image, text, &degenerate); });
  if (degenerate) throw Error(ErrorCode::kEncoderFailure, "zero-norm embedding");
  return 100.0 * std::max(0.0, c);
}

double clip_score(const ImageTensor& image, std::string_view text,
                  const pipeline::VisionTextEncoder& encoder) {
  const auto ei = encoder_call([&] { return encoder.embed_image(image); });
  const auto et = encoder_call([&] { return encoder.embed_text(text); });
  return clip_score_from_embeddings(ei, et);
}

bool target_matches(std::string_view answer, std::string_view target) {
  return fold(answer).find(fold(target)) != std::string::npos;
}

double asr(std::span<const AnswerTarget> items) {
  if (items.empty()) throw Error(ErrorCode::kInvalidArgument, "ASR over an empty set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!items[i].target) {
      throw Error(ErrorCode::kUntargetedItem, fmt::format("item {} has no target", i));
    }
    hits += target_matches(items[i].answer, *items[i].target) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(items.size());
}

double asr(std::span<const EvalRecord> records) {
  std::vector<AnswerTarget> items;
  items.reserve(records.size());
  for (const auto& r : records) {
    if (!r.target) {
      throw Error(ErrorCode::kUntargetedItem, fmt::format("record '{}' has no target", r.id));
    }
    items.push_back({r.answer, r.target});
  }
  return asr(items);
}

std::vector<std::string> normalize_answer(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty() && cur != "a" && cur != "an" && cur != "the") tokens.push_back(cur);
    cur.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c) != 0) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

bool vqa_match(std::string_view answer, std::span<const std::string> golds) {
  const auto a = normalize_answer(answer);
  for (const auto& gold : golds) {
    const auto g = normalize_answer(gold);
    if (g == a) return true;
    if (g.empty() || g.size() > a.size()) continue;
    if (std::search(a.begin(), a.end(), g.begin(), g.end()) != a.end()) return true;
  }
  return false;
}

double vqa_accuracy(std::span<const std::string> answers,
                    std::span<const std::vector<std::string>> golds) {
  if (answers.size() != golds.size()) {
    throw Error(ErrorCode::kLengthMismatch,
                fmt::format("{} answers but {} gold sets", answers.size(), golds.size()));
  }
  if (answers.empty()) throw Error(ErrorCode::kInvalidArgument, "VQA accuracy over an empty set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < answers.size(); ++i) correct += vqa_match(answers[i], golds[i]);
  return static_cast<double>(correct) / static_cast<double>(answers.size());
}

SimilarityTriple feature_similarity(const ImageTensor& original, const ImageTensor& adversarial,
                                    const ImageTensor& purified,
                                    const pipeline::VisionEncoder& encoder) {
  if (!original.same_shape(adversarial) || !original.same_shape(purified)) {
    throw Error(ErrorCode::kShapeMismatch, "feature_similarity needs three same-shape images");
  }
  const auto eo = encoder_call([&] { return encoder.embed_image(original); });
  const auto ea = encoder_call([&] { return encoder.embed_image(adversarial); });
  const auto ep = encoder_call([&] { return encoder.embed_image(purified); });
  for (const auto* e : {&eo, &ea, &ep}) check_embedding(*e, "image");

  SimilarityTriple out;
  bool d1 = false, d2 = false, d3 = false;
  out.sim_purified_original = encoder_call([&] { return cosine(ep, eo, &d1); });
  out.sim_purified_adversarial = encoder_call([&] { return cosine(ep, ea, &d2); });

  const auto xa = adversarial.data();
  const auto xp = purified.data();
  const auto xo = original.data();
  std::vector<double> removed(xa.size()), perturbation(xa.size());
  for (std::size_t i = 0; i < xa.size(); ++i) {
    removed[i] = double(xa[i]) - xp[i];
    perturbation[i] = double(xa[i]) - xo[i];
  }
  out.sim_noise_perturbation = cosine(removed, perturbation, &d3);
  out.flagged = d1 || d2 || d3;
  return out;
}

double drop_percent(double vanilla, double method) {
  if (vanilla == 0.0) throw Error(ErrorCode::kInvalidArgument, "baseline score is zero");
  return 100.0 * (vanilla - method) / vanilla;
}

std::string format_side_effect_cell(double score, double drop_pct) {
  const double shown = std::round(drop_pct * 100.0) / 100.0;
  return fmt::format("{:.2f} ({}{:.2f}%)", score, shown < 0.0 ? "↑" : "↓",
                     std::abs(shown));
}

std::vector<SideEffectRow> side_effect_report(std::span<const EvalRecord> clean_records,
                                              std::string_view baseline) {
  struct Acc {
    double sum = 0.0;
    std::size_t n = 0;
  };
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, Acc> cells;
  for (const auto& r : clean_records) {
    const auto key = std::make_pair(r.condition.model, r.condition.method);
    auto [it, inserted] = cells.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.sum += r.clip_score;
    ++it->second.n;
  }
  std::vector<SideEffectRow> rows;
  for (const auto& key : order) {
    const auto base_it = cells.find({key.first, std::string(baseline)});
    if (base_it == cells.end()) {
      throw Error(ErrorCode::kInvalidArgument,
                  fmt::format("model '{}' has no '{}' records", key.first, baseline));
    }
    const Acc& acc = cells.at(key);
    SideEffectRow row;
    row.model = key.first;
    row.method = key.second;
    row.n = acc.n;
    row.mean_clip = acc.sum / static_cast<double>(acc.n);
    row.drop_pct = drop_percent(base_it->second.sum / static_cast<double>(base_it->second.n),
                                row.mean_clip);
    row.cell = format_side_effect_cell(row.mean_clip, row.drop_pct);
    rows.push_back(std::move(row));
  }
  return rows;
}

double median(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorCode::kInvalidArgument, "median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace codefend::eval
