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

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "codefend/attack/pgd.hpp"
#include "codefend/core/image.hpp"
#include "codefend/core/rng.hpp"
#include "codefend/promptopt/prompt_space.hpp"
#include "codefend/purifier/noise_predictor.hpp"
#include "codefend/surrogate/lexicon.hpp"
#include "codefend/surrogate/toy_world.hpp"

namespace codefend::testing {

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("codefend_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline ImageTensor random_image(int h, int w, int c, std::uint64_t seed, std::string id = {}) {
  Rng rng(seed);
  std::vector<float> data(static_cast<std::size_t>(h) * w * c);
  for (auto& v : data) v = static_cast<float>(rng.uniform());
  return ImageTensor(h, w, c, std::move(data), std::move(id));
}

inline promptopt::EmbeddingTable random_table(std::size_t vocab, std::size_t dim,
                                              std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> values(vocab * dim);
  for (auto& v : values) v = rng.normal();
  return promptopt::EmbeddingTable(vocab, dim, std::move(values));
}

// loss = sum over positions of <w_pos, e(prompt[pos])>; first-order exact.
class LinearScoringOracle final : public promptopt::ScoringOracle {
 public:
  LinearScoringOracle(const promptopt::EmbeddingTable* table, std::vector<std::vector<double>> w)
      : table_(table), w_(std::move(w)) {}
  double loss(std::span<const promptopt::TokenId> prompt, std::span<const promptopt::TokenId>,
              const ImageTensor&, std::span<const promptopt::TokenId>) const override {
    double s = 0.0;
    for (std::size_t p = 0; p < prompt.size(); ++p) {
      const auto e = table_->row(prompt[p]);
      for (std::size_t j = 0; j < e.size(); ++j) s += w_[p][j] * e[j];
    }
    return s;
  }
  std::vector<double> grad_wrt_embedding(std::span<const promptopt::TokenId>,
                                         std::span<const promptopt::TokenId>, const ImageTensor&,
                                         std::span<const promptopt::TokenId>,
                                         std::size_t position) const override {
    return w_.at(position);
  }
  bool concurrent_safe() const override { return true; }

 private:
  const promptopt::EmbeddingTable* table_;
  std::vector<std::vector<double>> w_;
};

// Arbitrary (non-linear) loss over two-token prompts given by a lookup table,
// with a deliberately uninformative gradient.
class TableScoringOracle final : public promptopt::ScoringOracle {
 public:
  TableScoringOracle(std::size_t vocab, std::uint64_t seed) : vocab_(vocab) {
    Rng rng(seed);
    table_.resize(vocab * vocab);
    for (auto& v : table_) v = rng.uniform(0.0, 10.0);
  }
  double loss(std::span<const promptopt::TokenId> prompt, std::span<const promptopt::TokenId>,
              const ImageTensor&, std::span<const promptopt::TokenId>) const override {
    return table_[static_cast<std::size_t>(prompt[0]) * vocab_ +
                  static_cast<std::size_t>(prompt[1])];
  }
  std::vector<double> grad_wrt_embedding(std::span<const promptopt::TokenId> prompt,
                                         std::span<const promptopt::TokenId>, const ImageTensor&,
                                         std::span<const promptopt::TokenId>,
                                         std::size_t position) const override {
    std::vector<double> g(dim_, 0.0);
    g[position % dim_] = std::sin(static_cast<double>(prompt[position]));
    return g;
  }
  bool concurrent_safe() const override { return true; }
  void set_dim(std::size_t dim) { dim_ = dim; }

 private:
  std::size_t vocab_;
  std::size_t dim_ = 4;
  std::vector<double> table_;
};

// Targeted toy attack pairs: clean toy images and their PGD counterparts.
inline std::vector<AdvPair> toy_pairs(const surrogate::ToyVlm& vlm, std::size_t count,
                                      std::uint64_t seed, std::size_t offset = 0) {
  const surrogate::ToyImageGenerator gen(vlm.config());
  const auto images = gen.dataset(count + offset, seed);
  const surrogate::ToyVlmOracle oracle(std::make_shared<surrogate::ToyVlm>(vlm));
  attack::AttackConfig ac;
  ac.targeted = true;
  ac.target_text = std::string(surrogate::target_word());
  std::vector<AdvPair> out;
  for (std::size_t i = offset; i < images.size(); ++i) {
    out.push_back(attack::pgd_targeted(oracle, images[i], "Describe the image.",
                                       *ac.target_text, ac));
  }
  return out;
}

using purifier::Condition;
using purifier::Latent;
using purifier::NoisePredictor;

// Replays the loss's random draws and returns the exact noise it will compare against.
class ReplayPredictor final : public NoisePredictor {
 public:
  explicit ReplayPredictor(std::uint64_t seed, int steps) : rng_(seed), steps_(steps) {}
  Latent predict(const Latent& z_t, int, const Condition&) const override {
    rng_.uniform_int(0, steps_ - 1);
    Latent eps(z_t.height, z_t.width, z_t.channels);
    for (auto& v : eps.values) v = static_cast<float>(rng_.normal());
    return eps;
  }
  void backward(const Latent&, int, const Condition&, const Latent&,
                std::span<float>) const override {}
  std::span<const float> parameters() const override { return {}; }
  std::span<float> mutable_parameters() override { return {}; }
  std::string kind() const override { return "replay"; }
  std::string conditioning_fingerprint() const override { return "none"; }
  std::unique_ptr<NoisePredictor> clone() const override {
    return std::make_unique<ReplayPredictor>(*this);
  }

 private:
  mutable Rng rng_;
  int steps_;
};

class ZeroPredictor final : public NoisePredictor {
 public:
  Latent predict(const Latent& z_t, int, const Condition&) const override {
    return Latent(z_t.height, z_t.width, z_t.channels);
  }
  void backward(const Latent&, int, const Condition&, const Latent&,
                std::span<float>) const override {}
  std::span<const float> parameters() const override { return {}; }
  std::span<float> mutable_parameters() override { return {}; }
  std::string kind() const override { return "zero"; }
  std::string conditioning_fingerprint() const override { return "none"; }
  std::unique_ptr<NoisePredictor> clone() const override {
    return std::make_unique<ZeroPredictor>(*this);
  }
};

inline std::vector<AdvPair> noise_pairs(std::size_t n, std::uint64_t seed) {
  std::vector<AdvPair> out;
  for (std::size_t i = 0; i < n; ++i) {
    AdvPair p;
    p.clean = random_image(8, 8, 3, seed + i);
    p.adv = random_image(8, 8, 3, seed + 100 + i);
    out.push_back(p);
  }
  return out;
}

}  // namespace codefend::testing
