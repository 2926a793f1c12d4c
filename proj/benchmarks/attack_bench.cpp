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
#include <string>

#include "codefend/attack/oracle.hpp"
#include "codefend/attack/pgd.hpp"
#include "codefend/core/rng.hpp"
#include "codefend/surrogate/lexicon.hpp"
#include "codefend/surrogate/toy_world.hpp"

using namespace codefend;

static void BM_PgdLinear(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const auto img = ImageTensor::filled(side, side, 3, 0.5f);
  Rng rng(1);
  std::vector<double> w(img.size());
  for (auto& v : w) v = rng.normal();
  const attack::LinearOracle oracle(w);
  attack::AttackConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(attack::pgd_untargeted(oracle, img, "", "", cfg));
  }
  state.SetItemsProcessed(state.iterations() * cfg.steps);
}
BENCHMARK(BM_PgdLinear)->Arg(32)->Arg(224);

static void BM_PgdToyTargeted(benchmark::State& state) {
  const auto vlm = std::make_shared<surrogate::ToyVlm>(surrogate::ToyWorldConfig{});
  const surrogate::ToyVlmOracle oracle(vlm);
  const surrogate::ToyImageGenerator gen(vlm->config());
  const auto img = gen.dataset(1, 3).front();
  attack::AttackConfig cfg;
  cfg.targeted = true;
  cfg.target_text = std::string(surrogate::target_word());
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        attack::pgd_targeted(oracle, img, "Describe the image.", *cfg.target_text, cfg));
  }
  state.SetItemsProcessed(state.iterations() * cfg.steps);
}
BENCHMARK(BM_PgdToyTargeted);
