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

#include "codefend/prefixgen/tiny_lm.hpp"

#include <cmath>

#include <fmt/format.h>

#include "codefend/core/error.hpp"
#include "codefend/core/hash.hpp"
#include "codefend/core/rng.hpp"

namespace codefend::prefixgen {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kLnEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)

MatrixXd random_matrix(int rows, int cols, double stddev, Rng& rng) {
  MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = static_cast<float>(rng.normal() * stddev);
  return m;
}

// Row-wise layer norm without affine parameters.
MatrixXd layer_norm(const MatrixXd& x, VectorXd& rstd) {
  const long n = x.rows();
  MatrixXd xhat(n, x.cols());
  rstd.resize(n);
  for (long i = 0; i < n; ++i) {
    const double mu = x.row(i).mean();
    const double var = (x.row(i).array() - mu).square().mean();
    rstd(i) = 1.0 / std::sqrt(var + kLnEps);
    xhat.row(i) = (x.row(i).array() - mu) * rstd(i);
  }
  return xhat;
}

MatrixXd layer_norm_backward(const MatrixXd& dy, const MatrixXd& xhat, const VectorXd& rstd) {
  MatrixXd dx(dy.rows(), dy.cols());
  for (long i = 0; i < dy.rows(); ++i) {
    const double m1 = dy.row(i).mean();
    const double m2 = dy.row(i).cwiseProduct(xhat.row(i)).mean();
    dx.row(i) = rstd(i) * (dy.row(i).array() - m1 - xhat.row(i).array() * m2);
  }
  return dx;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x))); }

double gelu_grad(double x) {
  const double u = kGeluC * (x + 0.044715 * x * x * x);
  const double th = std::tanh(u);
  const double du = kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
}

void hash_matrix(Fnv1a& h, const MatrixXd& m) {
  std::vector<float> v(static_cast<std::size_t>(m.size()));
  for (long i = 0; i < m.rows(); ++i)
    for (long j = 0; j < m.cols(); ++j)
      v[static_cast<std::size_t>(i * m.cols() + j)] = static_cast<float>(m(i, j));
  h.update(std::span<const float>(v));
}

void add_to_flat(std::span<float> grad, std::size_t offset, const MatrixXd& g, double scale) {
  for (long i = 0; i < g.rows(); ++i)
    for (long j = 0; j < g.cols(); ++j)
      grad[offset + static_cast<std::size_t>(i * g.cols() + j)] +=
          static_cast<float>(scale * g(i, j));
}

}  // namespace

struct TinyLm::LayerCache {
  MatrixXd x_in, xhat1, a_q, a_v, q, k, v, o, xhat2, f_pre, g;
  VectorXd rstd1, rstd2;
  std::vector<MatrixXd> probs;
};

struct TinyLm::Forward {
  std::vector<LayerCache> layers;
  MatrixXd xhat_f;
  VectorXd rstd_f;
  MatrixXd logits;
};

TinyLm::TinyLm(std::size_t vocab_size, TinyLmConfig config)
    : vocab_size_(vocab_size), config_(config) {
  const int d = config_.d_model;
  if (vocab_size_ < 2 || config_.layers < 1 || d < 1 || config_.heads < 1 ||
      d % config_.heads != 0 || config_.ffn < 1 || config_.max_len < 2) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("bad LM config (vocab={}, layers={}, d={}, heads={}, ffn={}, len={})",
                            vocab_size_, config_.layers, d, config_.heads, config_.ffn,
                            config_.max_len));
  }
  Rng rng(config_.seed);
  const int v = static_cast<int>(vocab_size_);
  const double in_d = 1.0 / std::sqrt(double(d));
  tok_emb_ = random_matrix(v, d, 1.0, rng);
  pos_emb_ = random_matrix(config_.max_len, d, 1.0, rng);
  for (int l = 0; l < config_.layers; ++l) {
    Layer layer;
    layer.wq = random_matrix(d, d, in_d, rng);
    layer.wk = random_matrix(d, d, in_d, rng);
    layer.wv = random_matrix(d, d, in_d, rng);
    layer.wo = random_matrix(d, d, in_d, rng);
    layer.w1 = random_matrix(config_.ffn, d, in_d, rng);
    layer.b1 = VectorXd::Zero(config_.ffn);
    layer.w2 = random_matrix(d, config_.ffn, 1.0 / std::sqrt(double(config_.ffn)), rng);
    layer.b2 = VectorXd::Zero(d);
    layers_.push_back(std::move(layer));
  }
  head_ = random_matrix(v, d, in_d, rng);

  num_params_ = static_cast<std::size_t>(tok_emb_.size() + pos_emb_.size() + head_.size());
  for (const auto& l : layers_) {
    num_params_ += static_cast<std::size_t>(l.wq.size() + l.wk.size() + l.wv.size() +
                                            l.wo.size() + l.w1.size() + l.b1.size() +
                                            l.w2.size() + l.b2.size());
  }

  Fnv1a h;
  h.update(fmt::format("tiny-lm/1 v={} l={} d={} h={} f={} n={}", vocab_size_, config_.layers,
                       d, config_.heads, config_.ffn, config_.max_len));
  hash_matrix(h, tok_emb_);
  hash_matrix(h, pos_emb_);
  for (const auto& l : layers_) {
    for (const MatrixXd* m : {&l.wq, &l.wk, &l.wv, &l.wo, &l.w1, &l.w2}) hash_matrix(h, *m);
    hash_matrix(h, l.b1);
    hash_matrix(h, l.b2);
  }
  hash_matrix(h, head_);
  fingerprint_ = h.hex();
}

std::vector<LoraTarget> TinyLm::lora_targets() const {
  std::vector<LoraTarget> out;
  for (int l = 0; l < config_.layers; ++l) {
    out.push_back({fmt::format("layer{}.q", l), config_.d_model, config_.d_model});
    out.push_back({fmt::format("layer{}.v", l), config_.d_model, config_.d_model});
  }
  return out;
}

std::string TinyLm::fingerprint() const { return fingerprint_; }

void TinyLm::check_ids(std::span<const TokenId> ids) const {
  if (ids.empty()) throw Error(ErrorCode::kInvalidArgument, "empty token sequence");
  if (ids.size() > static_cast<std::size_t>(config_.max_len)) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("sequence of {} tokens exceeds max length {}", ids.size(),
                            config_.max_len));
  }
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size_) {
      throw Error(ErrorCode::kInvalidArgument,
                  fmt::format("token id {} outside vocab of {}", id, vocab_size_));
    }
  }
}

void TinyLm::check_adapter(const LoraAdapter& adapter) const {
  if (adapter.targets() != lora_targets()) {
    throw Error(ErrorCode::kBaseMismatch, "adapter targets do not match this model");
  }
}

TinyLm::Forward TinyLm::forward(std::span<const TokenId> ids, const LoraAdapter* adapter) const {
  check_ids(ids);
  if (adapter != nullptr) check_adapter(*adapter);
  const long n = static_cast<long>(ids.size());
  const int d = config_.d_model;
  const int heads = config_.heads;
  const int dh = d / heads;
  const double att_scale = 1.0 / std::sqrt(double(dh));

  MatrixXd x(n, d);
  for (long i = 0; i < n; ++i) x.row(i) = tok_emb_.row(ids[i]) + pos_emb_.row(i);

  Forward fw;
  fw.layers.resize(layers_.size());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& L = layers_[l];
    LayerCache& c = fw.layers[l];
    c.x_in = x;
    c.xhat1 = layer_norm(x, c.rstd1);
    const MatrixXd& a1 = c.xhat1;
    c.q = a1 * L.wq.transpose();
    c.k = a1 * L.wk.transpose();
    c.v = a1 * L.wv.transpose();
    if (adapter != nullptr) {
      const double s = adapter->scaling();
      const std::size_t iq = 2 * l;
      const std::size_t iv = 2 * l + 1;
      c.a_q = a1 * adapter->a(iq).transpose();
      c.a_v = a1 * adapter->a(iv).transpose();
      c.q += s * c.a_q * adapter->b(iq).transpose();
      c.v += s * c.a_v * adapter->b(iv).transpose();
    }
    c.o = MatrixXd::Zero(n, d);
    c.probs.resize(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      const auto qh = c.q.middleCols(h * dh, dh);
      const auto kh = c.k.middleCols(h * dh, dh);
      const auto vh = c.v.middleCols(h * dh, dh);
      MatrixXd p = MatrixXd::Zero(n, n);
      for (long i = 0; i < n; ++i) {
        double mx = -1e300;
        for (long j = 0; j <= i; ++j) {
          p(i, j) = qh.row(i).dot(kh.row(j)) * att_scale;
          mx = std::max(mx, p(i, j));
        }
        double z = 0.0;
        for (long j = 0; j <= i; ++j) {
          p(i, j) = std::exp(p(i, j) - mx);
          z += p(i, j);
        }
        for (long j = 0; j <= i; ++j) p(i, j) /= z;
      }
      c.o.middleCols(h * dh, dh) = p * vh;
      c.probs[static_cast<std::size_t>(h)] = std::move(p);
    }
    x = x + c.o * L.wo.transpose();
    c.xhat2 = layer_norm(x, c.rstd2);
    c.f_pre = (c.xhat2 * L.w1.transpose()).rowwise() + L.b1.transpose();
    c.g = c.f_pre.unaryExpr([](double v) { return gelu(v); });
    x = x + ((c.g * L.w2.transpose()).rowwise() + L.b2.transpose());
  }
  fw.xhat_f = layer_norm(x, fw.rstd_f);
  fw.logits = fw.xhat_f * head_.transpose();
  return fw;
}

Eigen::MatrixXd TinyLm::logits(std::span<const TokenId> ids, const LoraAdapter* adapter) const {
  return forward(ids, adapter).logits;
}

double TinyLm::nll(std::span<const TokenId> ids, std::span<const std::uint8_t> target_mask,
                   const LoraAdapter& adapter, std::span<float> grad) const {
  std::size_t count = 0;
  const bool want_grad = !grad.empty();
  for (std::size_t i = 1; i < target_mask.size(); ++i) count += target_mask[i] != 0;
  if (count == 0) throw Error(ErrorCode::kInvalidArgument, "sequence has no target positions");
  const double sum = nll_sum(ids, target_mask, adapter, want_grad ? 1.0 / double(count) : 0.0,
                             grad, nullptr);
  return sum / static_cast<double>(count);
}

double TinyLm::nll_sum(std::span<const TokenId> ids, std::span<const std::uint8_t> target_mask,
                       const LoraAdapter& adapter, double grad_scale, std::span<float> grad,
                       std::size_t* targets) const {
  if (target_mask.size() != ids.size()) {
    throw Error(ErrorCode::kLengthMismatch,
                fmt::format("{} tokens but {} mask entries", ids.size(), target_mask.size()));
  }
  const bool want_grad = !grad.empty();
  if (want_grad && grad.size() != adapter.num_parameters()) {
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("gradient buffer {} for {} adapter parameters", grad.size(),
                            adapter.num_parameters()));
  }
  const Forward fw = forward(ids, &adapter);
  const long n = static_cast<long>(ids.size());
  const long v = static_cast<long>(vocab_size_);

  double sum = 0.0;
  std::size_t count = 0;
  MatrixXd dlogits = MatrixXd::Zero(n, v);
  for (long i = 1; i < n; ++i) {
    if (target_mask[static_cast<std::size_t>(i)] == 0) continue;
    const auto row = fw.logits.row(i - 1);
    const double mx = row.maxCoeff();
    const double lse = mx + std::log((row.array() - mx).exp().sum());
    sum += lse - row(ids[i]);
    ++count;
    if (want_grad) {
      dlogits.row(i - 1) = (row.array() - lse).exp();
      dlogits(i - 1, ids[i]) -= 1.0;
    }
  }
  if (targets != nullptr) *targets = count;
  if (!want_grad || count == 0) return sum;

  const int d = config_.d_model;
  const int heads = config_.heads;
  const int dh = d / heads;
  const double att_scale = 1.0 / std::sqrt(double(dh));
  const double s = adapter.scaling();

  MatrixXd dx = layer_norm_backward(dlogits * head_, fw.xhat_f, fw.rstd_f);
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const Layer& L = layers_[l];
    const LayerCache& c = fw.layers[l];

    MatrixXd df = (dx * L.w2).cwiseProduct(c.f_pre.unaryExpr([](double u) {
      return gelu_grad(u);
    }));
    MatrixXd dmid = dx + layer_norm_backward(df * L.w1, c.xhat2, c.rstd2);

    const MatrixXd d_o = dmid * L.wo;
    MatrixXd dq = MatrixXd::Zero(n, d);
    MatrixXd dk = MatrixXd::Zero(n, d);
    MatrixXd dv = MatrixXd::Zero(n, d);
    for (int h = 0; h < heads; ++h) {
      const MatrixXd& p = c.probs[static_cast<std::size_t>(h)];
      const auto doh = d_o.middleCols(h * dh, dh);
      const MatrixXd dp = doh * c.v.middleCols(h * dh, dh).transpose();
      dv.middleCols(h * dh, dh) = p.transpose() * doh;
      MatrixXd ds = MatrixXd::Zero(n, n);
      for (long i = 0; i < n; ++i) {
        double dot = 0.0;
        for (long j = 0; j <= i; ++j) dot += dp(i, j) * p(i, j);
        for (long j = 0; j <= i; ++j) ds(i, j) = p(i, j) * (dp(i, j) - dot) * att_scale;
      }
      dq.middleCols(h * dh, dh) = ds * c.k.middleCols(h * dh, dh);
      dk.middleCols(h * dh, dh) = ds.transpose() * c.q.middleCols(h * dh, dh);
    }

    const std::size_t iq = 2 * l;
    const std::size_t iv = 2 * l + 1;
    const MatrixXd bq = adapter.b(iq);
    const MatrixXd bv = adapter.b(iv);
    // Q = a1 Wq^T + s (a1 Aq^T) Bq^T
    add_to_flat(grad, adapter.offset_b(iq), dq.transpose() * c.a_q, grad_scale * s);
    add_to_flat(grad, adapter.offset_b(iv), dv.transpose() * c.a_v, grad_scale * s);
    const MatrixXd du_q = s * dq * bq;
    const MatrixXd du_v = s * dv * bv;
    add_to_flat(grad, adapter.offset_a(iq), du_q.transpose() * c.xhat1, grad_scale);
    add_to_flat(grad, adapter.offset_a(iv), du_v.transpose() * c.xhat1, grad_scale);

    const MatrixXd da1 = dq * L.wq + dk * L.wk + dv * L.wv + du_q * adapter.a(iq) +
                         du_v * adapter.a(iv);
    dx = dmid + layer_norm_backward(da1, c.xhat1, c.rstd1);
  }
  return sum;
}

}  // namespace codefend::prefixgen
