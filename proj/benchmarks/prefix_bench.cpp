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

#include "codefend/prefixgen/lora.hpp"
#include "codefend/prefixgen/prefix_lm.hpp"
#include "codefend/prefixgen/tiny_lm.hpp"
#include "codefend/prefixgen/tokenizer.hpp"

using namespace codefend;

namespace {

prefixgen::PrefixLm make_lm() {
  auto tok = std::make_shared<const prefixgen::WordTokenizer>(prefixgen::WordTokenizer::surrogate());
  auto base = std::make_shared<const prefixgen::TinyLm>(tok->vocab_size(), prefixgen::TinyLmConfig{});
  prefixgen::PrefixLm lm(tok, base);
  lm.set_adapter(prefixgen::lora_wrap(base->lora_targets(), 8, 16.0, 1));
  return lm;
}

}  // namespace

static void BM_TinyLmNllWithGrad(benchmark::State& state) {
  const auto lm = make_lm();
  const auto sample = lm.encode_sample("what is shown in the image?", "please answer truthfully");
  std::vector<float> grad(lm.adapter().num_parameters());
  for (auto _ : state) {
    benchmark::DoNotOptimize(lm.base().nll(sample.ids, sample.target_mask, lm.adapter(), grad));
  }
}
BENCHMARK(BM_TinyLmNllWithGrad);

static void BM_GreedyPrefix(benchmark::State& state) {
  const auto lm = make_lm();
  const prefixgen::DecodeConfig cfg{.max_length = static_cast<int>(state.range(0))};
  for (auto _ : state) {
    benchmark::DoNotOptimize(prefixgen::generate_prefix("what is shown in the image?", lm, cfg));
  }
}
BENCHMARK(BM_GreedyPrefix)->Arg(4)->Arg(16);
