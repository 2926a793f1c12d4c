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

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "codefend/purifier/latent.hpp"
#include "codefend/purifier/schedule.hpp"

namespace codefend::purifier {

// Conditioning for one predictor call. A null image or null text is the
// "dropped" condition used by classifier-free guidance.
struct Condition {
  const Latent* image = nullptr;
  const std::string* text = nullptr;
};

// eps_theta(z_t, t, E(c_image), c_text). Only parameters() are trainable; any
// conditioning encoders the predictor holds are frozen and covered by
// conditioning_fingerprint().
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;

  virtual Latent predict(const Latent& z_t, int t, const Condition& cond) const = 0;
  // Accumulates d loss / d params into grad_params given d loss / d output.
  virtual void backward(const Latent& z_t, int t, const Condition& cond, const Latent& grad_output,
                        std::span<float> grad_params) const = 0;

  virtual std::span<const float> parameters() const = 0;
  virtual std::span<float> mutable_parameters() = 0;
  // Provider name and version, e.g. "conv-eps/1"; checkpoints are keyed by it.
  virtual std::string kind() const = 0;
  virtual std::string conditioning_fingerprint() const = 0;
  virtual std::unique_ptr<NoisePredictor> clone() const = 0;
};

// Frozen instruction encoder: a fixed hashed bag of character trigrams.
class TextConditioner {
 public:
  explicit TextConditioner(std::size_t dim = 8) : dim_(dim) {}
  std::vector<float> embed(std::string_view text) const;
  std::size_t dim() const noexcept { return dim_; }
  std::string fingerprint() const;

 private:
  std::size_t dim_;
};

struct ConvPredictorConfig {
  int channels = 3;
  int hidden = 16;
  std::size_t text_dim = 8;
  std::uint64_t seed = 1;
};

// Small convolutional noise predictor:
//
//   h   = silu(conv3(z_t) + conv3(c_image) + W_t phi(t) + W_x text + b)
//   eps = conv3(h) + b_out + (S_z phi(t)) * z_t + (S_c phi(t)) * c_image
//
// phi(t) = [1, sqrt(ab), sqrt(1-ab), sqrt(ab)/sqrt(1-ab), 1/sqrt(1-ab)] are
// schedule-derived time features, so the per-channel skip gains can express
// the linear part of the optimal predictor at every step.
class ConvNoisePredictor final : public NoisePredictor {
 public:
  static constexpr int kTimeFeatures = 5;

  ConvNoisePredictor(ConvPredictorConfig config, DiffusionSchedule schedule);

  Latent predict(const Latent& z_t, int t, const Condition& cond) const override;
  void backward(const Latent& z_t, int t, const Condition& cond, const Latent& grad_output,
                std::span<float> grad_params) const override;
  std::span<const float> parameters() const override { return params_; }
  std::span<float> mutable_parameters() override { return params_; }
  std::string kind() const override { return "conv-eps/1"; }
  std::string conditioning_fingerprint() const override;
  std::unique_ptr<NoisePredictor> clone() const override {
    return std::make_unique<ConvNoisePredictor>(*this);
  }

  const ConvPredictorConfig& config() const noexcept { return config_; }
  std::array<double, kTimeFeatures> time_features(int t) const;

 private:
  struct Layout {
    std::size_t conv_z, conv_c, w_time, w_text, b_hidden, conv_out, b_out, skip_z, skip_c, total;
  };
  static Layout make_layout(const ConvPredictorConfig& c);
  void check_input(const Latent& z_t, const Condition& cond) const;
  // Pre-activations, (h, w, hidden) layout.
  std::vector<float> hidden_pre(const Latent& z_t, int t, const Condition& cond) const;

  ConvPredictorConfig config_;
  DiffusionSchedule schedule_;
  TextConditioner text_;
  Layout layout_;
  std::vector<float> params_;
};

}  // namespace codefend::purifier
