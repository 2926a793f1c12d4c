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

#include "codefend/purifier/noise_predictor.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "codefend/core/error.hpp"
#include "codefend/core/hash.hpp"
#include "codefend/core/rng.hpp"

namespace codefend::purifier {

namespace {

constexpr int kK = 3;  // kernel size
constexpr int kTaps = kK * kK;

float silu(float x) { return x / (1.0f + std::exp(-x)); }
float silu_grad(float x) {
  const float s = 1.0f / (1.0f + std::exp(-x));
  return s * (1.0f + x * (1.0f - s));
}

}  // namespace

std::vector<float> TextConditioner::embed(std::string_view text) const {
  std::vector<float> out(dim_, 0.0f);
  if (text.empty()) return out;
  const std::string padded = fmt::format("  {}  ", text);
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
    std::uint64_t h = Fnv1a().update(std::string_view(padded).substr(i, 3)).digest();
    for (std::size_t j = 0; j < dim_; ++j) {
      h = splitmix64(h);
      out[j] += (h & 1u) ? 1.0f : -1.0f;
    }
  }
  double norm = 0.0;
  for (float v : out) norm += static_cast<double>(v) * v;
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (float& v : out) v = static_cast<float>(v / norm);
  }
  return out;
}

std::string TextConditioner::fingerprint() const {
  return hash_text(fmt::format("trigram-hash/v1/dim={}", dim_));
}

ConvNoisePredictor::Layout ConvNoisePredictor::make_layout(const ConvPredictorConfig& c) {
  Layout l{};
  const std::size_t H = static_cast<std::size_t>(c.hidden);
  const std::size_t C = static_cast<std::size_t>(c.channels);
  std::size_t at = 0;
  l.conv_z = at; at += H * C * kTaps;
  l.conv_c = at; at += H * C * kTaps;
  l.w_time = at; at += H * kTimeFeatures;
  l.w_text = at; at += H * c.text_dim;
  l.b_hidden = at; at += H;
  l.conv_out = at; at += C * H * kTaps;
  l.b_out = at; at += C;
  l.skip_z = at; at += C * kTimeFeatures;
  l.skip_c = at; at += C * kTimeFeatures;
  l.total = at;
  return l;
}

ConvNoisePredictor::ConvNoisePredictor(ConvPredictorConfig config, DiffusionSchedule schedule)
    : config_(config), schedule_(std::move(schedule)), text_(config.text_dim),
      layout_(make_layout(config)), params_(layout_.total, 0.0f) {
  if (config.channels <= 0 || config.hidden <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "predictor channels/hidden must be positive");
  }
  Rng rng(config.seed);
  const std::size_t H = static_cast<std::size_t>(config.hidden);
  const std::size_t C = static_cast<std::size_t>(config.channels);
  const double in_scale = 1.0 / std::sqrt(static_cast<double>(C * kTaps));
  for (std::size_t i = 0; i < H * C * kTaps; ++i) {
    params_[layout_.conv_z + i] = static_cast<float>(in_scale * rng.normal());
    params_[layout_.conv_c + i] = static_cast<float>(in_scale * rng.normal());
  }
  for (std::size_t i = 0; i < H * kTimeFeatures; ++i) {
    params_[layout_.w_time + i] = static_cast<float>(0.1 * rng.normal());
  }
  for (std::size_t i = 0; i < H * config.text_dim; ++i) {
    params_[layout_.w_text + i] = static_cast<float>(0.1 * rng.normal());
  }
  const double out_scale = 0.1 / std::sqrt(static_cast<double>(H * kTaps));
  for (std::size_t i = 0; i < C * H * kTaps; ++i) {
    params_[layout_.conv_out + i] = static_cast<float>(out_scale * rng.normal());
  }
}

std::array<double, ConvNoisePredictor::kTimeFeatures> ConvNoisePredictor::time_features(
    int t) const {
  const double ab = schedule_.alpha_bar(t);
  const double s = std::sqrt(ab);
  const double n = std::sqrt(std::max(1.0 - ab, 1e-4));
  return {1.0, s, n, s / n, 1.0 / n};
}

std::string ConvNoisePredictor::conditioning_fingerprint() const {
  return text_.fingerprint();
}

void ConvNoisePredictor::check_input(const Latent& z_t, const Condition& cond) const {
  if (z_t.channels != config_.channels) {
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("predictor expects {} channels, got {}", config_.channels,
                            z_t.channels));
  }
  if (cond.image != nullptr && !cond.image->same_shape(z_t)) {
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("condition {} vs latent {}", cond.image->shape_string(),
                            z_t.shape_string()));
  }
}

std::vector<float> ConvNoisePredictor::hidden_pre(const Latent& z_t, int t,
                                                  const Condition& cond) const {
  const int H = config_.hidden;
  const int C = config_.channels;
  const auto phi = time_features(t);
  const std::vector<float> txt =
      cond.text != nullptr ? text_.embed(*cond.text) : std::vector<float>(config_.text_dim, 0.0f);

  std::vector<float> bias(static_cast<std::size_t>(H));
  for (int h = 0; h < H; ++h) {
    double b = params_[layout_.b_hidden + h];
    for (int f = 0; f < kTimeFeatures; ++f) {
      b += params_[layout_.w_time + h * kTimeFeatures + f] * phi[f];
    }
    for (std::size_t d = 0; d < config_.text_dim; ++d) {
      b += params_[layout_.w_text + h * config_.text_dim + d] * txt[d];
    }
    bias[h] = static_cast<float>(b);
  }

  std::vector<float> pre(static_cast<std::size_t>(z_t.height) * z_t.width * H);
  for (int y = 0; y < z_t.height; ++y) {
    for (int x = 0; x < z_t.width; ++x) {
      float* out = &pre[(static_cast<std::size_t>(y) * z_t.width + x) * H];
      for (int h = 0; h < H; ++h) out[h] = bias[h];
      for (int ky = 0; ky < kK; ++ky) {
        const int sy = y + ky - 1;
        if (sy < 0 || sy >= z_t.height) continue;
        for (int kx = 0; kx < kK; ++kx) {
          const int sx = x + kx - 1;
          if (sx < 0 || sx >= z_t.width) continue;
          for (int c = 0; c < C; ++c) {
            const float zv = z_t.at(sy, sx, c);
            const float cv = cond.image != nullptr ? cond.image->at(sy, sx, c) : 0.0f;
            const std::size_t tap = (static_cast<std::size_t>(c) * kK + ky) * kK + kx;
            for (int h = 0; h < H; ++h) {
              const std::size_t w = static_cast<std::size_t>(h) * C * kTaps + tap;
              out[h] += params_[layout_.conv_z + w] * zv + params_[layout_.conv_c + w] * cv;
            }
          }
        }
      }
    }
  }
  return pre;
}

Latent ConvNoisePredictor::predict(const Latent& z_t, int t, const Condition& cond) const {
  check_input(z_t, cond);
  const int H = config_.hidden;
  const int C = config_.channels;
  const auto phi = time_features(t);
  std::vector<float> act = hidden_pre(z_t, t, cond);
  for (float& v : act) v = silu(v);

  std::vector<float> gain_z(static_cast<std::size_t>(C));
  std::vector<float> gain_c(static_cast<std::size_t>(C));
  for (int c = 0; c < C; ++c) {
    double gz = 0.0;
    double gc = 0.0;
    for (int f = 0; f < kTimeFeatures; ++f) {
      gz += params_[layout_.skip_z + c * kTimeFeatures + f] * phi[f];
      gc += params_[layout_.skip_c + c * kTimeFeatures + f] * phi[f];
    }
    gain_z[c] = static_cast<float>(gz);
    gain_c[c] = static_cast<float>(gc);
  }

  Latent out(z_t.height, z_t.width, C);
  for (int y = 0; y < z_t.height; ++y) {
    for (int x = 0; x < z_t.width; ++x) {
      for (int c = 0; c < C; ++c) {
        float v = params_[layout_.b_out + c] + gain_z[c] * z_t.at(y, x, c);
        if (cond.image != nullptr) v += gain_c[c] * cond.image->at(y, x, c);
        for (int ky = 0; ky < kK; ++ky) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= z_t.height) continue;
          for (int kx = 0; kx < kK; ++kx) {
            const int sx = x + kx - 1;
            if (sx < 0 || sx >= z_t.width) continue;
            const float* a = &act[(static_cast<std::size_t>(sy) * z_t.width + sx) * H];
            const float* w = &params_[layout_.conv_out +
                                      (static_cast<std::size_t>(c) * H) * kTaps + ky * kK + kx];
            for (int h = 0; h < H; ++h) v += w[static_cast<std::size_t>(h) * kTaps] * a[h];
          }
        }
        out.at(y, x, c) = v;
      }
    }
  }
  return out;
}

void ConvNoisePredictor::backward(const Latent& z_t, int t, const Condition& cond,
                                  const Latent& grad_output, std::span<float> grad_params) const {
  check_input(z_t, cond);
  if (!grad_output.same_shape(z_t) || grad_params.size() != params_.size()) {
    throw Error(ErrorCode::kShapeMismatch, "backward: gradient buffers do not match");
  }
  const int H = config_.hidden;
  const int C = config_.channels;
  const int height = z_t.height;
  const int width = z_t.width;
  const auto phi = time_features(t);
  const std::vector<float> txt =
      cond.text != nullptr ? text_.embed(*cond.text) : std::vector<float>(config_.text_dim, 0.0f);
  const std::vector<float> pre = hidden_pre(z_t, t, cond);
  std::vector<float> act(pre.size());
  for (std::size_t i = 0; i < pre.size(); ++i) act[i] = silu(pre[i]);

  // Output head: bias, skips and the output convolution.
  std::vector<double> g_gain_z(static_cast<std::size_t>(C), 0.0);
  std::vector<double> g_gain_c(static_cast<std::size_t>(C), 0.0);
  std::vector<float> g_act(act.size(), 0.0f);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < C; ++c) {
        const float g = grad_output.at(y, x, c);
        if (g == 0.0f) continue;
        grad_params[layout_.b_out + c] += g;
        g_gain_z[c] += static_cast<double>(g) * z_t.at(y, x, c);
        if (cond.image != nullptr) g_gain_c[c] += static_cast<double>(g) * cond.image->at(y, x, c);
        for (int ky = 0; ky < kK; ++ky) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= height) continue;
          for (int kx = 0; kx < kK; ++kx) {
            const int sx = x + kx - 1;
            if (sx < 0 || sx >= width) continue;
            const std::size_t cell = (static_cast<std::size_t>(sy) * width + sx) * H;
            const std::size_t wbase =
                layout_.conv_out + (static_cast<std::size_t>(c) * H) * kTaps + ky * kK + kx;
            for (int h = 0; h < H; ++h) {
              const std::size_t w = wbase + static_cast<std::size_t>(h) * kTaps;
              grad_params[w] += g * act[cell + h];
              g_act[cell + h] += g * params_[w];
            }
          }
        }
      }
    }
  }
  for (int c = 0; c < C; ++c) {
    for (int f = 0; f < kTimeFeatures; ++f) {
      grad_params[layout_.skip_z + c * kTimeFeatures + f] +=
          static_cast<float>(g_gain_z[c] * phi[f]);
      grad_params[layout_.skip_c + c * kTimeFeatures + f] +=
          static_cast<float>(g_gain_c[c] * phi[f]);
    }
  }

  // Hidden layer.
  std::vector<double> g_bias(static_cast<std::size_t>(H), 0.0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t cell = (static_cast<std::size_t>(y) * width + x) * H;
      for (int h = 0; h < H; ++h) {
        const float gp = g_act[cell + h] * silu_grad(pre[cell + h]);
        if (gp == 0.0f) continue;
        g_bias[h] += gp;
        for (int ky = 0; ky < kK; ++ky) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= height) continue;
          for (int kx = 0; kx < kK; ++kx) {
            const int sx = x + kx - 1;
            if (sx < 0 || sx >= width) continue;
            for (int c = 0; c < C; ++c) {
              const std::size_t w = static_cast<std::size_t>(h) * C * kTaps +
                                    (static_cast<std::size_t>(c) * kK + ky) * kK + kx;
              grad_params[layout_.conv_z + w] += gp * z_t.at(sy, sx, c);
              if (cond.image != nullptr) {
                grad_params[layout_.conv_c + w] += gp * cond.image->at(sy, sx, c);
              }
            }
          }
        }
      }
    }
  }
  for (int h = 0; h < H; ++h) {
    grad_params[layout_.b_hidden + h] += static_cast<float>(g_bias[h]);
    for (int f = 0; f < kTimeFeatures; ++f) {
      grad_params[layout_.w_time + h * kTimeFeatures + f] += static_cast<float>(g_bias[h] * phi[f]);
    }
    for (std::size_t d = 0; d < config_.text_dim; ++d) {
      grad_params[layout_.w_text + h * config_.text_dim + d] +=
          static_cast<float>(g_bias[h] * txt[d]);
    }
  }
}

}  // namespace codefend::purifier
