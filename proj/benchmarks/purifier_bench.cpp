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

#include <benchmark/benchmark.h>

#include <memory>
#include <vector>

#include "codefend/core/rng.hpp"
#include "codefend/purifier/codec.hpp"
#include "codefend/purifier/noise_predictor.hpp"
#include "codefend/purifier/purifier.hpp"
#include "codefend/surrogate/toy_world.hpp"

using namespace codefend;

namespace {

purifier::PurifierBackend make_backend() {
  const auto schedule = purifier::DiffusionSchedule::cosine(50);
  return {std::make_shared<purifier::DownscaleCodec>(4),
          std::make_shared<purifier::ConvNoisePredictor>(purifier::ConvPredictorConfig{},
                                                         schedule),
          schedule};
}

std::vector<AdvPair> toy_batch(std::size_t n) {
  const surrogate::ToyImageGenerator gen(surrogate::ToyWorldConfig{});
  const auto images = gen.dataset(n, 5);
  Rng rng(9);
  std::vector<AdvPair> out;
  for (const auto& img : images) {
    std::vector<float> data(img.data().begin(), img.data().end());
    for (auto& v : data) v = std::clamp(v + static_cast<float>(rng.uniform(-0.03, 0.03)), 0.f, 1.f);
    out.push_back({img.with_data(std::move(data)), img});
  }
  return out;
}

}  // namespace

static void BM_DiffusionLoss(benchmark::State& state) {
  const auto backend = make_backend();
  const auto batch = toy_batch(4);
  Rng rng(1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(purifier::diffusion_loss(batch, *backend.predictor, *backend.codec,
                                                      backend.schedule, "x", rng));
  }
}
BENCHMARK(BM_DiffusionLoss);

static void BM_TrainEpoch(benchmark::State& state) {
  auto backend = make_backend();
  const auto batch = toy_batch(32);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        purifier::train_purifier(batch, backend, {.epochs = 1, .learning_rate = 3e-3}));
  }
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

static void BM_Purify(benchmark::State& state) {
  auto backend = make_backend();
  const auto batch = toy_batch(1);
  const auto checkpoint = purifier::PurifierCheckpoint::capture(backend, "x", {});
  const purifier::Purifier p(checkpoint, backend, {.steps = static_cast<int>(state.range(0))});
  for (auto _ : state) benchmark::DoNotOptimize(p.purify(batch[0].adv));
}
BENCHMARK(BM_Purify)->Arg(5)->Arg(10)->Arg(20);
