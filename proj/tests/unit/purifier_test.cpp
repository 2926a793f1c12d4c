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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>

#include "codefend/core/error.hpp"
#include "codefend/purifier/codec.hpp"
#include "codefend/purifier/noise_predictor.hpp"
#include "codefend/purifier/purifier.hpp"
#include "codefend/purifier/schedule.hpp"
#include "codefend/eval/metrics.hpp"
#include "test_support.hpp"

namespace codefend::purifier {
namespace {

using testing::noise_pairs;
using testing::ReplayPredictor;
using testing::TempDir;
using testing::ZeroPredictor;

Latent random_latent(int h, int w, int c, std::uint64_t seed) {
  Rng rng(seed);
  Latent z(h, w, c);
  for (auto& v : z.values) v = static_cast<float>(rng.normal());
  return z;
}

// Knows the sampler's starting noise and predicts it at every step.
class OraclePredictor final : public NoisePredictor {
 public:
  explicit OraclePredictor(std::uint64_t seed) : seed_(seed) {}
  Latent predict(const Latent& z_t, int, const Condition&) const override {
    if (!cached_) {
      Rng rng(seed_);
      Latent eps(z_t.height, z_t.width, z_t.channels);
      for (auto& v : eps.values) v = static_cast<float>(rng.normal());
      cached_ = eps;
    }
    return *cached_;
  }
  void backward(const Latent&, int, const Condition&, const Latent&,
                std::span<float>) const override {}
  std::span<const float> parameters() const override { return {}; }
  std::span<float> mutable_parameters() override { return {}; }
  std::string kind() const override { return "oracle"; }
  std::string conditioning_fingerprint() const override { return "none"; }
  std::unique_ptr<NoisePredictor> clone() const override {
    return std::make_unique<OraclePredictor>(seed_);
  }

 private:
  std::uint64_t seed_;
  mutable std::optional<Latent> cached_;
};

TEST(Schedule, AddNoiseEndpoints) {
  const DiffusionSchedule s({1.0, 0.5, 0.0});
  const auto z0 = random_latent(2, 3, 3, 1);
  const auto eps = random_latent(2, 3, 3, 2);
  EXPECT_EQ(add_noise(z0, 0, eps, s).values, z0.values);
  EXPECT_EQ(add_noise(z0, 2, eps, s).values, eps.values);
  const Latent zero(2, 3, 3);
  const auto mid = add_noise(zero, 1, eps, s);
  for (std::size_t i = 0; i < eps.size(); ++i) {
    EXPECT_FLOAT_EQ(mid.values[i], static_cast<float>(std::sqrt(0.5) * eps.values[i]));
  }
}

TEST(Schedule, CosineIsDecreasingAndRejectsBadSteps) {
  const auto s = DiffusionSchedule::cosine(50);
  EXPECT_EQ(s.steps(), 50);
  for (int t = 1; t < 50; ++t) EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
  EXPECT_THROW(s.alpha_bar(50), Error);
  EXPECT_THROW(DiffusionSchedule({0.5, 0.7}), Error);
}

TEST(Codec, DownscaleRoundTripOnToyImages) {
  const DownscaleCodec codec(4);
  const auto images = surrogate::ToyImageGenerator(surrogate::ToyWorldConfig{}).dataset(20, 3);
  for (const auto& img : images) {
    const auto z = codec.encode(img);
    EXPECT_EQ(z.height, img.height() / 4);
    EXPECT_LE(mean_squared_error(codec.decode(z), img), codec.reconstruction_tolerance());
  }
  EXPECT_THROW(codec.encode(testing::random_image(6, 8, 3, 1)), Error);
}

TEST(DiffusionLoss, CheatingPredictorIsExactlyZero) {
  const auto pairs = noise_pairs(4, 10);
  const DownscaleCodec codec(2);
  const auto schedule = DiffusionSchedule::cosine(50);
  const ReplayPredictor cheat(77, schedule.steps());
  Rng rng(77);
  EXPECT_EQ(diffusion_loss(pairs, cheat, codec, schedule, "x", rng), 0.0);
}

TEST(DiffusionLoss, ZeroPredictorMatchesNoiseMeanSquare) {
  const auto pairs = noise_pairs(4, 20);
  const DownscaleCodec codec(2);
  const auto schedule = DiffusionSchedule::cosine(50);
  Rng rng(5);
  const double loss = diffusion_loss(pairs, ZeroPredictor{}, codec, schedule, "x", rng);

  Rng replay(5);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    replay.uniform_int(0, schedule.steps() - 1);
    for (int k = 0; k < 4 * 4 * 3; ++k) {
      const double e = static_cast<float>(replay.normal());
      sum += e * e;
      ++n;
    }
  }
  ASSERT_GE(n, 64u);
  EXPECT_NEAR(loss, sum / n, 0.05 * sum / n);
}

TEST(DiffusionLoss, DeterministicForFixedSeed) {
  const auto pairs = noise_pairs(3, 30);
  const DownscaleCodec codec(4);
  const auto schedule = DiffusionSchedule::cosine(50);
  const ConvNoisePredictor pred({}, schedule);
  Rng a(9);
  Rng b(9);
  EXPECT_EQ(diffusion_loss(pairs, pred, codec, schedule, "x", a),
            diffusion_loss(pairs, pred, codec, schedule, "x", b));
}

TEST(ConvNoisePredictor, BackwardMatchesFiniteDifferences) {
  const auto schedule = DiffusionSchedule::cosine(50);
  ConvNoisePredictor pred({.hidden = 4, .seed = 3}, schedule);
  const auto z = random_latent(4, 4, 3, 1);
  const auto cond_img = random_latent(4, 4, 3, 2);
  const std::string text = "clean it";
  const Condition cond{&cond_img, &text};
  const auto w = random_latent(4, 4, 3, 3);
  auto objective = [&]() {
    const auto out = pred.predict(z, 17, cond);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += double(out.values[i]) * w.values[i];
    return s;
  };
  std::vector<float> grad(pred.parameters().size(), 0.0f);
  pred.backward(z, 17, cond, w, grad);

  auto params = pred.mutable_parameters();
  const std::size_t stride = std::max<std::size_t>(1, params.size() / 60);
  int checked = 0;
  for (std::size_t i = 0; i < params.size(); i += stride) {
    const float orig = params[i];
    const float h = 1e-2f;
    params[i] = orig + h;
    const double up = objective();
    params[i] = orig - h;
    const double down = objective();
    params[i] = orig;
    const double fd = (up - down) / (2.0 * h);
    EXPECT_NEAR(grad[i], fd, 2e-3 + 2e-2 * std::abs(fd)) << "param " << i;
    ++checked;
  }
  EXPECT_GT(checked, 30);
}

TEST(ConvNoisePredictor, ConditionShapeMismatch) {
  const auto schedule = DiffusionSchedule::cosine(50);
  const ConvNoisePredictor pred({}, schedule);
  const auto z = random_latent(4, 4, 3, 1);
  const auto bad = random_latent(2, 2, 3, 1);
  EXPECT_THROW(pred.predict(z, 0, {&bad, nullptr}), Error);
}

PurifierBackend conv_backend(int hidden = 16) {
  const auto schedule = DiffusionSchedule::cosine(50);
  return {std::make_shared<DownscaleCodec>(4),
          std::make_shared<ConvNoisePredictor>(ConvPredictorConfig{.hidden = hidden}, schedule),
          schedule};
}

TEST(TrainPurifier, ZeroEpochsKeepsInitialPredictor) {
  auto backend = conv_backend();
  const std::vector<float> before(backend.predictor->parameters().begin(),
                                  backend.predictor->parameters().end());
  const auto pairs = noise_pairs(2, 40);
  const auto res = train_purifier(pairs, backend, {.epochs = 0});
  EXPECT_TRUE(res.epoch_losses.empty());
  EXPECT_EQ(res.checkpoint.predictor_state, before);
}

TEST(TrainPurifier, LossDecreasesAndFrozenPartsUnchanged) {
  auto backend = conv_backend();
  const auto codec_fp = backend.codec->fingerprint();
  const auto cond_fp = backend.predictor->conditioning_fingerprint();
  const surrogate::ToyVlm vlm{surrogate::ToyWorldConfig{}};
  const auto pairs = testing::toy_pairs(vlm, 32, 3);
  const auto res = train_purifier(
      pairs, backend, {.epochs = 200, .learning_rate = 3e-3, .weight_decay = 0.0, .seed = 1});
  ASSERT_EQ(res.epoch_losses.size(), 200u);
  EXPECT_LT(res.epoch_losses.back(), res.epoch_losses.front());
  EXPECT_EQ(res.checkpoint.codec_fingerprint, codec_fp);
  EXPECT_EQ(res.checkpoint.conditioning_fingerprint, cond_fp);
  EXPECT_EQ(backend.codec->fingerprint(), codec_fp);
}

TEST(TrainPurifier, EmptyAndDivergent) {
  auto backend = conv_backend();
  EXPECT_THROW(train_purifier(std::vector<AdvPair>{}, backend, {}), Error);
  const auto pairs = noise_pairs(2, 50);
  try {
    train_purifier(pairs, backend, {.epochs = 50, .learning_rate = 1e30});
    FAIL() << "expected divergence";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFiniteLoss);
  }
}

TEST(PurifierCheckpoint, RoundTripAndCorruption) {
  TempDir dir("ckpt");
  auto backend = conv_backend();
  const auto ck = PurifierCheckpoint::capture(backend, "inst", {.epochs = 3, .seed = 2});
  ck.save(dir / "p.ckpt");
  const auto back = PurifierCheckpoint::load(dir / "p.ckpt");
  EXPECT_EQ(back.predictor_state, ck.predictor_state);
  EXPECT_EQ(back.schedule, ck.schedule);
  EXPECT_EQ(back.instruction, "inst");
  EXPECT_EQ(back.training, ck.training);
  EXPECT_EQ(back.codec_fingerprint, ck.codec_fingerprint);

  {
    std::ofstream f(dir / "bad.ckpt", std::ios::binary);
    f << "not a checkpoint";
  }
  try {
    PurifierCheckpoint::load(dir / "bad.ckpt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCheckpointCorrupt);
  }

  auto other = conv_backend(8);
  try {
    Purifier(ck, other, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCheckpointCorrupt);
  }
}

TEST(Purifier, TimestepsDescendFromStart) {
  auto backend = conv_backend();
  const auto ck = PurifierCheckpoint::capture(backend, "inst", {});
  const Purifier p(ck, backend, {.steps = 10, .t_start_fraction = 0.3});
  const auto taus = p.timesteps();
  ASSERT_EQ(taus.size(), 10u);
  EXPECT_EQ(taus.front(), 15);
  EXPECT_EQ(taus.back(), 0);
  for (std::size_t i = 1; i < taus.size(); ++i) EXPECT_LT(taus[i], taus[i - 1]);
  const Purifier one(ck, backend, {.steps = 10, .t_start_fraction = 0.0});
  EXPECT_EQ(one.timesteps(), std::vector<int>{0});
}

TEST(Purifier, OracleNoiseReconstructsInput) {
  const auto schedule = DiffusionSchedule::cosine(50);
  PurifierBackend backend{std::make_shared<DownscaleCodec>(1),
                          std::make_shared<OraclePredictor>(123), schedule};
  const auto ck = PurifierCheckpoint::capture(backend, "inst", {});
  const Purifier p(ck, backend, {.seed = 123});
  const auto img = testing::random_image(8, 8, 3, 4);
  const auto out = p.purify(img);
  EXPECT_LT(mean_squared_error(out, img), backend.codec->reconstruction_tolerance() + 1e-3);
}

TEST(Purifier, DeterministicAndSeedSensitive) {
  auto backend = conv_backend();
  const auto ck = PurifierCheckpoint::capture(backend, "inst", {});
  const auto img = testing::random_image(32, 32, 3, 5);
  const Purifier a(ck, backend, {.seed = 1});
  const Purifier b(ck, backend, {.seed = 1});
  const Purifier c(ck, backend, {.seed = 2});
  EXPECT_EQ(a.purify(img), b.purify(img));
  EXPECT_NE(a.purify(img), c.purify(img));
}

TEST(Purifier, TrainedModelImprovesPairsAndPreservesClean) {
  auto backend = conv_backend();
  const surrogate::ToyVlm vlm{surrogate::ToyWorldConfig{}};
  const auto train = testing::toy_pairs(vlm, 16, 3);
  const auto test = testing::toy_pairs(vlm, 8, 3, 16);
  const auto res = train_purifier(
      train, backend, {.epochs = 2000, .learning_rate = 3e-3, .weight_decay = 0.0, .seed = 1});
  const Purifier p(res.checkpoint, backend,
                   {.image_guidance = 1.0, .text_guidance = 1.0, .seed = 4});
  std::vector<double> gain;
  std::vector<double> clean_err;
  std::vector<double> adv_err;
  for (const auto& pair : test) {
    const auto pur = p.purify(pair.adv);
    gain.push_back(l2_distance(pur, pair.clean) - l2_distance(pair.adv, pair.clean));
    adv_err.push_back(l2_distance(pur, pair.clean));
    clean_err.push_back(l2_distance(p.purify(pair.clean), pair.clean));
  }
  EXPECT_LT(eval::median(gain), 0.0);
  EXPECT_LE(eval::median(clean_err), eval::median(adv_err));
}

}  // namespace
}  // namespace codefend::purifier
