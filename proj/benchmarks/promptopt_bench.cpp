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

#include <algorithm>
#include <memory>

#include "codefend/promptopt/search.hpp"
#include "codefend/surrogate/lexicon.hpp"
#include "codefend/surrogate/toy_world.hpp"

using namespace codefend;

static void BM_OptimizeToyPrompt(benchmark::State& state) {
  const auto vlm = std::make_shared<surrogate::ToyVlm>(surrogate::ToyWorldConfig{});
  const surrogate::ToyVlmScorer scorer(vlm);
  const surrogate::ToyImageGenerator gen(vlm->config());
  const auto img = gen.dataset(1, 2).front();
  promptopt::PromptSpace space;
  space.table = &vlm->embeddings();
  const auto classes = surrogate::class_words();
  for (std::size_t i = 0; i < vlm->words().size(); ++i) {
    if (std::find(classes.begin(), classes.end(), vlm->words()[i]) == classes.end()) {
      space.vocab.push_back(static_cast<promptopt::TokenId>(i));
    }
  }
  space.base_prompt = vlm->tokenize("please look here and tell me about the");
  for (std::size_t i = 0; i < space.base_prompt.size(); ++i) space.trigger_positions.push_back(i);
  space.delta_bound = 1.2;
  const auto query = vlm->tokenize("what is shown in the image");
  const auto y_true = vlm->tokenize(vlm->caption(img, ""));
  const promptopt::OptimizeConfig cfg{.beam_width = static_cast<std::size_t>(state.range(0))};
  for (auto _ : state) {
    benchmark::DoNotOptimize(promptopt::optimize_prompt(img, query, y_true, scorer, space, cfg));
  }
}
BENCHMARK(BM_OptimizeToyPrompt)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);
