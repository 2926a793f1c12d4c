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

#include "codefend/surrogate/toy_world.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "codefend/core/error.hpp"
#include "codefend/surrogate/lexicon.hpp"

namespace codefend::surrogate {

namespace {

constexpr std::uint64_t kClassStream = 0xC1A55;
constexpr std::uint64_t kTemplateStream = 0x7E3F1A7E;
constexpr std::uint64_t kTextureStream = 0x7E47;
constexpr std::uint64_t kEmbedStream = 0xE3BED;
constexpr std::uint64_t kProjectionStream = 0x9A0C;
constexpr int kTemplateSamples = 20;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<double> softmax(const std::vector<double>& logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    p[k] = std::exp(logits[k] - mx);
    z += p[k];
  }
  for (double& v : p) v /= z;
  return p;
}

// softmax(logits) - onehot(label), with the label entry formed as minus the
// sum of the others so that saturated logits keep a usable gradient.
std::vector<double> softmax_residual(const std::vector<double>& logits, std::size_t label) {
  auto p = softmax(logits);
  double others = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (k != label) others += p[k];
  }
  p.at(label) = -others;
  return p;
}

}  // namespace

ToyImageGenerator::ToyImageGenerator(const ToyWorldConfig& config)
    : height_(config.height), width_(config.width) {
  Rng rng = Rng(config.seed).fork(kClassStream);
  classes_.resize(num_image_classes());
  for (auto& spec : classes_) {
    for (double& b : spec.base) b = rng.uniform(0.35, 0.65);
    for (auto& wave : spec.waves) {
      do {
        wave.fx = static_cast<int>(rng.uniform_int(-1, 1));
        wave.fy = static_cast<int>(rng.uniform_int(-1, 1));
      } while (wave.fx == 0 && wave.fy == 0);
      for (double& a : wave.amp) a = rng.uniform(0.08, 0.16);
      wave.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
  }
}

ImageTensor ToyImageGenerator::sample(std::size_t cls, Rng& rng, std::string id) const {
  if (cls >= classes_.size()) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("class {} out of range", cls));
  }
  const ClassSpec& spec = classes_[cls];
  const double brightness = rng.uniform(-0.04, 0.04);
  double phase[2];
  double gain[2];
  for (int j = 0; j < 2; ++j) {
    phase[j] = spec.waves[j].phase + rng.uniform(-0.3, 0.3);
    gain[j] = rng.uniform(0.8, 1.2);
  }
  std::vector<float> data(static_cast<std::size_t>(height_) * width_ * 3);
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      for (int c = 0; c < 3; ++c) {
        double v = spec.base[c] + brightness;
        for (int j = 0; j < 2; ++j) {
          const Wave& w = spec.waves[j];
          const double arg = 2.0 * std::numbers::pi *
                                 (static_cast<double>(w.fx) * x / width_ +
                                  static_cast<double>(w.fy) * y / height_) +
                             phase[j];
          v += gain[j] * w.amp[c] * std::cos(arg);
        }
        data[(static_cast<std::size_t>(y) * width_ + x) * 3 + c] =
            static_cast<float>(std::clamp(v, 0.05, 0.95));
      }
    }
  }
  return ImageTensor(height_, width_, 3, std::move(data), std::move(id));
}

std::vector<ImageTensor> ToyImageGenerator::dataset(std::size_t count, std::uint64_t seed) const {
  std::vector<ImageTensor> out;
  out.reserve(count);
  const Rng root(seed);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = root.fork(i);
    out.push_back(sample(class_of_index(i, classes_.size()), rng, fmt::format("img{:05d}", i)));
  }
  return out;
}

ToyVlm::ToyVlm(const ToyWorldConfig& config) : config_(config), words_(all_words()) {
  const std::size_t n = static_cast<std::size_t>(config.height) * config.width * 3;
  const Rng root(config.seed);

  // Image-class templates are the centred class means; the attack-only target
  // word gets a random direction no generated image aligns with.
  const ToyImageGenerator gen(config);
  for (std::size_t k = 0; k < gen.num_classes(); ++k) {
    Rng rng = root.fork(kTemplateStream + k);
    std::vector<double> mean(n, 0.0);
    for (int s = 0; s < kTemplateSamples; ++s) {
      const ImageTensor img = gen.sample(k, rng);
      for (std::size_t i = 0; i < n; ++i) mean[i] += img.data()[i];
    }
    double norm = 0.0;
    for (double& v : mean) {
      v = v / kTemplateSamples - 0.5;
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : mean) v /= norm;
    templates_.push_back(std::move(mean));
  }
  {
    Rng rng = root.fork(kTemplateStream + 1000);
    std::vector<double> dir(n);
    double norm = 0.0;
    for (double& v : dir) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : dir) v /= norm;
    templates_.push_back(std::move(dir));
  }
  Rng tex_rng = root.fork(kTextureStream);
  for (std::size_t k = 0; k < templates_.size(); ++k) {
    std::vector<double> r(n);
    for (double& v : r) v = tex_rng.bernoulli(0.5) ? 1.0 : -1.0;
    textures_.push_back(std::move(r));
  }

  Rng emb_rng = root.fork(kEmbedStream);
  const std::size_t d = config.embed_dim;
  robust_dir_.resize(d);
  double norm = 0.0;
  for (double& v : robust_dir_) {
    v = emb_rng.normal();
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (double& v : robust_dir_) v /= norm;
  std::vector<double> table(words_.size() * d);
  const auto defense = defense_words();
  for (std::size_t w = 0; w < words_.size(); ++w) {
    const bool is_defense =
        std::find(defense.begin(), defense.end(), words_[w]) != defense.end();
    for (std::size_t j = 0; j < d; ++j) {
      table[w * d + j] = emb_rng.normal() / std::sqrt(static_cast<double>(d)) +
                         (is_defense ? config.defense_strength * robust_dir_[j] : 0.0);
    }
  }
  embeddings_ = promptopt::EmbeddingTable(words_.size(), d, std::move(table));
}

promptopt::TokenId ToyVlm::word_id(std::string_view word) const {
  const auto it = std::find(words_.begin(), words_.end(), word);
  return it == words_.end() ? -1 : static_cast<promptopt::TokenId>(it - words_.begin());
}

promptopt::Tokens ToyVlm::tokenize(std::string_view text) const {
  promptopt::Tokens out;
  for (const auto& w : normalize_words(text)) out.push_back(word_id(w));
  return out;
}

std::string ToyVlm::detokenize(std::span<const promptopt::TokenId> tokens) const {
  std::string out;
  for (auto id : tokens) {
    if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) continue;
    if (!out.empty()) out += ' ';
    out += words_[static_cast<std::size_t>(id)];
  }
  return out;
}

int ToyVlm::class_index(std::string_view text) const {
  const auto classes = class_words();
  for (const auto& w : normalize_words(text)) {
    const auto it = std::find(classes.begin(), classes.end(), w);
    if (it != classes.end()) return static_cast<int>(it - classes.begin());
  }
  return -1;
}

double ToyVlm::gate(std::span<const promptopt::TokenId> tokens) const {
  if (tokens.empty()) return sigmoid(config_.gate_bias);
  double m = 0.0;
  for (auto id : tokens) {
    if (id < 0) continue;
    const auto e = embeddings_.row(id);
    for (std::size_t j = 0; j < e.size(); ++j) m += robust_dir_[j] * e[j];
  }
  m /= static_cast<double>(tokens.size());
  return sigmoid(config_.gate_scale * m + config_.gate_bias);
}

void ToyVlm::check_image(const ImageTensor& image) const {
  if (image.height() != config_.height || image.width() != config_.width ||
      image.channels() != 3) {
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("toy VLM expects {}x{}x3, got {}x{}x{}", config_.height,
                            config_.width, image.height(), image.width(), image.channels()));
  }
}

double ToyVlm::template_response(const ImageTensor& image, std::size_t k) const {
  double s = 0.0;
  const auto& t = templates_[k];
  for (std::size_t i = 0; i < t.size(); ++i) s += t[i] * (image.data()[i] - 0.5);
  return s;
}

double ToyVlm::texture_response(const ImageTensor& image, std::size_t k) const {
  double s = 0.0;
  const auto& r = textures_[k];
  for (std::size_t i = 0; i < r.size(); ++i) s += r[i] * (image.data()[i] - 0.5);
  return s;
}

std::vector<double> ToyVlm::logits(const ImageTensor& image, double gate) const {
  check_image(image);
  std::vector<double> out(templates_.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = config_.template_gain * template_response(image, k) +
             (1.0 - gate) * config_.texture_gain * texture_response(image, k);
  }
  return out;
}

std::size_t ToyVlm::predict(const ImageTensor& image, std::string_view prompt) const {
  const auto l = logits(image, gate(tokenize(prompt)));
  return static_cast<std::size_t>(std::max_element(l.begin(), l.end()) - l.begin());
}

std::string ToyVlm::caption(const ImageTensor& image, std::string_view prompt) const {
  return fmt::format("a photo of a {}", class_words()[predict(image, prompt)]);
}

double ToyVlm::cross_entropy(const ImageTensor& image, double gate, std::size_t label) const {
  const auto l = logits(image, gate);
  const auto top = static_cast<std::size_t>(std::max_element(l.begin(), l.end()) - l.begin());
  double rest = 0.0;
  for (std::size_t k = 0; k < l.size(); ++k) {
    if (k != top) rest += std::exp(l[k] - l[top]);
  }
  return std::log1p(rest) + l[top] - l.at(label);
}

std::vector<double> ToyVlm::grad_image(const ImageTensor& image, double gate,
                                       std::size_t label) const {
  const auto p = softmax_residual(logits(image, gate), label);
  std::vector<double> g(image.size(), 0.0);
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double wt = p[k] * config_.template_gain;
    const double wr = p[k] * (1.0 - gate) * config_.texture_gain;
    const auto& t = templates_[k];
    const auto& r = textures_[k];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += wt * t[i] + wr * r[i];
  }
  return g;
}

double ToyVlm::grad_gate(const ImageTensor& image, double gate, std::size_t label) const {
  const auto p = softmax_residual(logits(image, gate), label);
  double g = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    g -= p[k] * config_.texture_gain * texture_response(image, k);
  }
  return g;
}

std::vector<double> ToyVlm::template_features(const ImageTensor& image) const {
  check_image(image);
  std::vector<double> out(templates_.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = config_.template_gain * template_response(image, k);
  }
  return out;
}

std::size_t ToyVlmOracle::label_of(std::string_view reference) const {
  const int k = vlm_->class_index(reference);
  if (k < 0) {
    throw Error(ErrorCode::kOracleFailure,
                fmt::format("reference '{}' names no class the toy VLM knows", reference));
  }
  return static_cast<std::size_t>(k);
}

double ToyVlmOracle::loss(const ImageTensor& image, std::string_view text,
                          std::string_view reference) const {
  return vlm_->cross_entropy(image, vlm_->gate(vlm_->tokenize(text)), label_of(reference));
}

std::vector<double> ToyVlmOracle::grad_wrt_image(const ImageTensor& image, std::string_view text,
                                                 std::string_view reference) const {
  return vlm_->grad_image(image, vlm_->gate(vlm_->tokenize(text)), label_of(reference));
}

std::size_t ToyVlmScorer::label_of(std::span<const promptopt::TokenId> y_true) const {
  const auto classes = class_words();
  for (auto id : y_true) {
    if (id < 0 || static_cast<std::size_t>(id) >= vlm_->words().size()) continue;
    const auto it = std::find(classes.begin(), classes.end(), vlm_->words()[id]);
    if (it != classes.end()) return static_cast<std::size_t>(it - classes.begin());
  }
  throw Error(ErrorCode::kOracleFailure, "y_true contains no class word");
}

double ToyVlmScorer::loss(std::span<const promptopt::TokenId> prompt,
                          std::span<const promptopt::TokenId> query, const ImageTensor& image,
                          std::span<const promptopt::TokenId> y_true) const {
  promptopt::Tokens all(prompt.begin(), prompt.end());
  all.insert(all.end(), query.begin(), query.end());
  return vlm_->cross_entropy(image, vlm_->gate(all), label_of(y_true));
}

std::vector<double> ToyVlmScorer::grad_wrt_embedding(std::span<const promptopt::TokenId> prompt,
                                                     std::span<const promptopt::TokenId> query,
                                                     const ImageTensor& image,
                                                     std::span<const promptopt::TokenId> y_true,
                                                     std::size_t position) const {
  if (position >= prompt.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("position {} outside prompt of length {}", position, prompt.size()));
  }
  promptopt::Tokens all(prompt.begin(), prompt.end());
  all.insert(all.end(), query.begin(), query.end());
  const double g = vlm_->gate(all);
  const double dl_dg = vlm_->grad_gate(image, g, label_of(y_true));
  const double scale = dl_dg * g * (1.0 - g) * vlm_->config().gate_scale /
                       static_cast<double>(all.size());
  const auto u = vlm_->robust_direction();
  std::vector<double> out(u.size());
  for (std::size_t j = 0; j < u.size(); ++j) out[j] = scale * u[j];
  return out;
}

ToyClipEncoder::ToyClipEncoder(std::shared_ptr<const ToyVlm> vlm, std::size_t projection_dim)
    : vlm_(std::move(vlm)), projection_dim_(projection_dim) {
  const auto& cfg = vlm_->config();
  const std::size_t n = static_cast<std::size_t>(cfg.height) * cfg.width * 3;
  Rng rng = Rng(cfg.seed).fork(kProjectionStream);
  projection_.resize(projection_dim_ * n);
  const double scale = 4.0 * cfg.template_gain / std::sqrt(static_cast<double>(n));
  for (double& v : projection_) v = scale * rng.normal();
}

std::vector<double> ToyClipEncoder::embed_image(const ImageTensor& image) const {
  std::vector<double> out = vlm_->template_features(image);
  const std::size_t n = image.size();
  for (std::size_t j = 0; j < projection_dim_; ++j) {
    double s = 0.0;
    const double* row = projection_.data() + j * n;
    for (std::size_t i = 0; i < n; ++i) s += row[i] * (image.data()[i] - 0.5);
    out.push_back(s);
  }
  return out;
}

std::vector<double> ToyClipEncoder::embed_text(std::string_view text) const {
  std::vector<double> out(vlm_->num_outputs() + projection_dim_, 0.0);
  const auto classes = class_words();
  for (const auto& w : normalize_words(text)) {
    const auto it = std::find(classes.begin(), classes.end(), w);
    if (it != classes.end()) out[static_cast<std::size_t>(it - classes.begin())] += 1.0;
  }
  return out;
}

}  // namespace codefend::surrogate
