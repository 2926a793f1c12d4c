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

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "codefend/core/image.hpp"
#include "codefend/pipeline/providers.hpp"

namespace codefend::eval {

struct Condition {
  std::string model;
  std::string attack;
  std::string method;

  friend bool operator==(const Condition&, const Condition&) = default;
  friend auto operator<=>(const Condition&, const Condition&) = default;
};

struct EvalRecord {
  std::string id;
  std::string answer;
  double clip_score = 0.0;
  // Present iff the attack is targeted.
  std::optional<std::string> target;
  std::optional<bool> target_hit;
  std::optional<bool> vqa_correct;
  Condition condition;
};

// Cosine similarity; `degenerate` is set (and 0 returned) when either vector
// has zero norm. Throws ShapeMismatch on length mismatch.
double cosine(std::span<const double> a, std::span<const double> b, bool* degenerate = nullptr);

// 100 * max(0, cos(image_embedding, text_embedding)).
double clip_score_from_embeddings(std::span<const double> image, std::span<const double> text);
// Throws EncoderFailure when the encoder fails or returns unusable vectors.
double clip_score(const ImageTensor& image, std::string_view text,
                  const pipeline::VisionTextEncoder& encoder);

// Case-folded substring match.
bool target_matches(std::string_view answer, std::string_view target);

struct AnswerTarget {
  std::string answer;
  std::optional<std::string> target;
};

// Fraction in [0,1]. Throws UntargetedItem for items without a target and
// InvalidArgument for an empty set.
double asr(std::span<const AnswerTarget> items);
double asr(std::span<const EvalRecord> records);

// Lower-case, punctuation to spaces, articles a/an/the dropped.
std::vector<std::string> normalize_answer(std::string_view text);
// Exact match or contiguous token-span containment of any normalized gold.
bool vqa_match(std::string_view answer, std::span<const std::string> golds);
// Fraction in [0,1]. Throws LengthMismatch or InvalidArgument (empty).
double vqa_accuracy(std::span<const std::string> answers,
                    std::span<const std::vector<std::string>> golds);

struct SimilarityTriple {
  double sim_purified_original = 0.0;
  double sim_purified_adversarial = 0.0;
  double sim_noise_perturbation = 0.0;
  // The removed-noise or perturbation vector was zero.
  bool flagged = false;
};

// Encoder-space cosines of purified vs original / adversarial, and the
// pixel-space cosine of (adversarial - purified) vs (adversarial - original).
SimilarityTriple feature_similarity(const ImageTensor& original, const ImageTensor& adversarial,
                                    const ImageTensor& purified,
                                    const pipeline::VisionEncoder& encoder);

// 100 * (vanilla - method) / vanilla.
double drop_percent(double vanilla, double method);
// "88.79 (↓4.34%)"; an increase renders with ↑.
std::string format_side_effect_cell(double score, double drop_pct);

struct SideEffectRow {
  std::string model;
  std::string method;
  double mean_clip = 0.0;
  double drop_pct = 0.0;
  std::size_t n = 0;
  std::string cell;
};

// Per (model, method) mean CLIP score over clean-image records and drop
// relative to the model's baseline method. Throws InvalidArgument when a
// model has no baseline records.
std::vector<SideEffectRow> side_effect_report(std::span<const EvalRecord> clean_records,
                                              std::string_view baseline = "Vanilla");

double median(std::vector<double> values);

}  // namespace codefend::eval
