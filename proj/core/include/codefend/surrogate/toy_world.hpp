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
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "codefend/attack/oracle.hpp"
#include "codefend/core/image.hpp"
#include "codefend/core/rng.hpp"
#include "codefend/pipeline/providers.hpp"
#include "codefend/promptopt/prompt_space.hpp"

namespace codefend::surrogate {

struct ToyWorldConfig {
  int height = 32;
  int width = 32;
  std::uint64_t seed = 7;
  // Weight of the smooth class-template features.
  double template_gain = 20.0;
  // Weight of the fragile per-pixel texture features (what attacks exploit).
  double texture_gain = 3.0;
  std::size_t embed_dim = 16;
  // Extra length of defense-word embeddings along the robustness direction.
  double defense_strength = 1.5;
  double gate_scale = 8.0;
  double gate_bias = -3.0;
};

// Class-conditional smooth RGB images: a per-class base colour plus two
// low-frequency plane waves, with per-image jitter in phase, amplitude and
// brightness.
class ToyImageGenerator {
 public:
  explicit ToyImageGenerator(const ToyWorldConfig& config);

  std::size_t num_classes() const noexcept { return classes_.size(); }
  ImageTensor sample(std::size_t cls, Rng& rng, std::string id = {}) const;
  // Deterministic dataset: item i has class i % num_classes.
  std::vector<ImageTensor> dataset(std::size_t count, std::uint64_t seed) const;
  static std::size_t class_of_index(std::size_t i, std::size_t num_classes) {
    return i % num_classes;
  }

 private:
  struct Wave {
    int fx;
    int fy;
    double amp[3];
    double phase;
  };
  struct ClassSpec {
    double base[3];
    Wave waves[2];
  };

  int height_;
  int width_;
  std::vector<ClassSpec> classes_;
};

// Desk-scale vision-language model. For class k:
//
//   logit_k = template_gain * <T_k, x - 0.5> + (1 - g) * texture_gain * <R_k, x - 0.5>
//
// T_k are unit-norm class templates, R_k random +-1 texture detectors. The gate
// g = sigmoid(gate_scale * mean_i <u, e_i> + gate_bias) is computed from the
// prompt's word embeddings, so prompts rich in defense words suppress the
// texture pathway. Captions are "a photo of a <word>".
class ToyVlm {
 public:
  explicit ToyVlm(const ToyWorldConfig& config);

  const ToyWorldConfig& config() const noexcept { return config_; }
  const std::vector<std::string>& words() const noexcept { return words_; }
  const promptopt::EmbeddingTable& embeddings() const noexcept { return embeddings_; }
  std::span<const double> robust_direction() const noexcept { return robust_dir_; }
  std::size_t num_outputs() const noexcept { return templates_.size(); }

  // Word ids of the normalized text; unknown words map to -1 (zero embedding).
  promptopt::Tokens tokenize(std::string_view text) const;
  std::string detokenize(std::span<const promptopt::TokenId> tokens) const;
  promptopt::TokenId word_id(std::string_view word) const;
  // Index of the first class word in `text`, or -1.
  int class_index(std::string_view text) const;

  double gate(std::span<const promptopt::TokenId> tokens) const;
  std::vector<double> logits(const ImageTensor& image, double gate) const;
  std::size_t predict(const ImageTensor& image, std::string_view prompt) const;
  std::string caption(const ImageTensor& image, std::string_view prompt) const;

  // Cross-entropy of class `label` and its gradients.
  double cross_entropy(const ImageTensor& image, double gate, std::size_t label) const;
  std::vector<double> grad_image(const ImageTensor& image, double gate, std::size_t label) const;
  double grad_gate(const ImageTensor& image, double gate, std::size_t label) const;

  // Template-space features, used by the toy CLIP encoder.
  std::vector<double> template_features(const ImageTensor& image) const;

 private:
  void check_image(const ImageTensor& image) const;
  double texture_response(const ImageTensor& image, std::size_t k) const;
  double template_response(const ImageTensor& image, std::size_t k) const;

  ToyWorldConfig config_;
  std::vector<std::string> words_;
  promptopt::EmbeddingTable embeddings_;
  std::vector<double> robust_dir_;
  std::vector<std::vector<double>> templates_;
  std::vector<std::vector<double>> textures_;
};

// GradOracle view: text is the prompt, reference names the class whose
// cross-entropy is measured.
class ToyVlmOracle final : public attack::GradOracle {
 public:
  explicit ToyVlmOracle(std::shared_ptr<const ToyVlm> vlm) : vlm_(std::move(vlm)) {}
  double loss(const ImageTensor& image, std::string_view text,
              std::string_view reference) const override;
  std::vector<double> grad_wrt_image(const ImageTensor& image, std::string_view text,
                                     std::string_view reference) const override;
  bool concurrent_safe() const override { return true; }

 private:
  std::size_t label_of(std::string_view reference) const;
  std::shared_ptr<const ToyVlm> vlm_;
};

// ScoringOracle view for prompt optimization. Token ids are ToyVlm word ids.
class ToyVlmScorer final : public promptopt::ScoringOracle {
 public:
  explicit ToyVlmScorer(std::shared_ptr<const ToyVlm> vlm) : vlm_(std::move(vlm)) {}
  double loss(std::span<const promptopt::TokenId> prompt,
              std::span<const promptopt::TokenId> query, const ImageTensor& image,
              std::span<const promptopt::TokenId> y_true) const override;
  std::vector<double> grad_wrt_embedding(std::span<const promptopt::TokenId> prompt,
                                         std::span<const promptopt::TokenId> query,
                                         const ImageTensor& image,
                                         std::span<const promptopt::TokenId> y_true,
                                         std::size_t position) const override;
  bool concurrent_safe() const override { return true; }

 private:
  std::size_t label_of(std::span<const promptopt::TokenId> y_true) const;
  std::shared_ptr<const ToyVlm> vlm_;
};

class ToyVictim final : public pipeline::VictimVlm {
 public:
  explicit ToyVictim(std::shared_ptr<const ToyVlm> vlm) : vlm_(std::move(vlm)) {}
  std::string generate(std::string_view prompt, const ImageTensor& image) const override {
    return vlm_->caption(image, prompt);
  }
  std::string name() const override { return "toy-vlm"; }
  bool concurrent_safe() const override { return true; }

 private:
  std::shared_ptr<const ToyVlm> vlm_;
};

// CLIP-style encoder: image features are the toy model's template responses
// followed by a fixed random projection of the centred pixels; the text tower
// places each mentioned class word on its template axis.
class ToyClipEncoder final : public pipeline::VisionTextEncoder {
 public:
  ToyClipEncoder(std::shared_ptr<const ToyVlm> vlm, std::size_t projection_dim = 32);
  std::vector<double> embed_image(const ImageTensor& image) const override;
  std::vector<double> embed_text(std::string_view text) const override;
  std::string name() const override { return "toy-clip"; }

 private:
  std::shared_ptr<const ToyVlm> vlm_;
  std::size_t projection_dim_;
  std::vector<double> projection_;
};

}  // namespace codefend::surrogate
