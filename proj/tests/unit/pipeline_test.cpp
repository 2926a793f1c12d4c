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

#include <atomic>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "codefend/core/config.hpp"
#include "codefend/core/error.hpp"
#include "codefend/core/image_io.hpp"
#include "codefend/core/manifest.hpp"
#include "codefend/pipeline/defense.hpp"
#include "codefend/pipeline/registry.hpp"
#include "test_support.hpp"

namespace codefend::pipeline {
namespace {

struct CallLog {
  std::mutex mu;
  std::vector<std::string> events;
  void add(std::string e) {
    std::lock_guard lock(mu);
    events.push_back(std::move(e));
  }
};

class ShiftPurify final : public PurifyStage {
 public:
  explicit ShiftPurify(CallLog* log) : log_(log) {}
  ImageTensor purify(const ImageTensor& adv) const override {
    log_->add("purify");
    std::vector<float> data(adv.data().begin(), adv.data().end());
    for (auto& v : data) v = 1.0f - v;
    return ImageTensor(adv.height(), adv.width(), adv.channels(), std::move(data), adv.id());
  }
  std::string name() const override { return "shift"; }

 private:
  CallLog* log_;
};

class RecordingPrefix final : public PrefixStage {
 public:
  RecordingPrefix(CallLog* log, bool fail = false) : log_(log), fail_(fail) {}
  std::string prefix(std::string_view, const ImageTensor& purified) const override {
    log_->add("prefix");
    seen = purified;
    if (fail_) throw std::runtime_error("generator offline");
    return "be careful.";
  }
  std::string name() const override { return "recording"; }
  mutable ImageTensor seen;

 private:
  CallLog* log_;
  bool fail_;
};

class RecordingVictim final : public VictimVlm {
 public:
  explicit RecordingVictim(CallLog* log) : log_(log) {}
  std::string generate(std::string_view prompt, const ImageTensor& image) const override {
    log_->add("vlm");
    ++calls;
    prompts.emplace_back(prompt);
    images.push_back(image);
    return "answer " + std::to_string(image.data()[0]);
  }
  std::string name() const override { return "recording"; }
  mutable int calls = 0;
  mutable std::vector<std::string> prompts;
  mutable std::vector<ImageTensor> images;

 private:
  CallLog* log_;
};

ImageTensor make_adv() { return testing::random_image(4, 4, 3, 17, "adv0"); }

TEST(Defense, StagesRunInOrderOnPurifiedImage) {
  CallLog log;
  auto purify = std::make_shared<ShiftPurify>(&log);
  auto prefix = std::make_shared<RecordingPrefix>(&log);
  auto victim = std::make_shared<RecordingVictim>(&log);
  const Defense defense(purify, prefix, victim);
  const ImageTensor adv = make_adv();
  const auto res = defense.defend(adv, "What is shown?");

  EXPECT_EQ(log.events, (std::vector<std::string>{"purify", "prefix", "vlm"}));
  ASSERT_EQ(victim->calls, 1);
  const ImageTensor expected = purify->purify(adv);
  EXPECT_EQ(victim->images[0].data().size(), expected.data().size());
  EXPECT_TRUE(std::equal(victim->images[0].data().begin(), victim->images[0].data().end(),
                         expected.data().begin()));
  EXPECT_FALSE(std::equal(victim->images[0].data().begin(), victim->images[0].data().end(),
                          adv.data().begin()));
  EXPECT_TRUE(std::equal(prefix->seen.data().begin(), prefix->seen.data().end(),
                         expected.data().begin()));
  EXPECT_EQ(victim->prompts[0], "be careful. What is shown?");
  EXPECT_EQ(res.trace.stages, (std::vector<std::string>{"purify", "prefix", "vlm"}));
  EXPECT_EQ(res.trace.prompt, victim->prompts[0]);
  EXPECT_EQ(res.answer, res.trace.answer);
  EXPECT_EQ(res.trace.id, "adv0");
}

TEST(Defense, IdentityAndEmptyPrefixEqualUndefended) {
  CallLog log;
  auto victim = std::make_shared<RecordingVictim>(&log);
  const Defense defense(std::make_shared<IdentityPurifyStage>(),
                        std::make_shared<FixedPrefixStage>(), victim);
  const ImageTensor adv = make_adv();
  const auto res = defense.defend(adv, "What is shown?");
  EXPECT_EQ(res.answer, RecordingVictim(&log).generate("What is shown?", adv));
  EXPECT_EQ(victim->prompts[0], "What is shown?");
}

TEST(Defense, PrefixFailureIsFatalUnlessDegradedAllowed) {
  CallLog log;
  auto victim = std::make_shared<RecordingVictim>(&log);
  const Defense strict(std::make_shared<IdentityPurifyStage>(),
                       std::make_shared<RecordingPrefix>(&log, true), victim);
  try {
    strict.defend(make_adv(), "q");
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "prefix");
  }
  EXPECT_EQ(victim->calls, 0);

  const Defense lenient(std::make_shared<IdentityPurifyStage>(),
                        std::make_shared<RecordingPrefix>(&log, true), victim,
                        {.allow_degraded = true});
  const auto res = lenient.defend(make_adv(), "q");
  EXPECT_TRUE(res.trace.degraded);
  ASSERT_EQ(res.trace.stage_errors.size(), 1u);
  EXPECT_EQ(res.trace.stage_errors[0].stage, "prefix");
  EXPECT_EQ(res.trace.prompt, "q");
}

TEST(Defense, ComposePrompt) {
  EXPECT_EQ(compose_prompt("", "q?"), "q?");
  EXPECT_EQ(compose_prompt("Look.", "q?"), "Look. q?");
}

struct BatchFixture {
  testing::TempDir dir{"batch"};
  PairManifest manifest;

  BatchFixture() {
    manifest.base_dir = dir.path();
    for (int i = 0; i < 3; ++i) {
      const std::string adv = "adv" + std::to_string(i) + ".png";
      const std::string clean = "clean" + std::to_string(i) + ".png";
      if (i != 1) write_png(testing::random_image(4, 4, 3, 100 + i, "a"), dir / adv);
      write_png(testing::random_image(4, 4, 3, 200 + i, "c"), dir / clean);
      manifest.entries.push_back({adv, clean, "pgd", 8.0 / 255, std::nullopt, Split::kTest});
    }
  }
};

TEST(Batch, FailingItemIsIsolatedAndOrderKept) {
  BatchFixture f;
  CallLog log;
  const Defense defense(std::make_shared<IdentityPurifyStage>(),
                        std::make_shared<FixedPrefixStage>(),
                        std::make_shared<RecordingVictim>(&log));
  const std::vector<std::string> questions(3, "q");
  const auto items = defend_batch(f.manifest, questions, defense, 3);
  ASSERT_EQ(items.size(), 3u);
  EXPECT_EQ(items[0].id, "adv0");
  EXPECT_EQ(items[1].id, "adv1");
  EXPECT_EQ(items[2].id, "adv2");
  EXPECT_TRUE(items[0].result);
  EXPECT_FALSE(items[1].result);
  ASSERT_TRUE(items[1].error);
  EXPECT_TRUE(items[2].result);
  const std::string text = serialize_batch(items, false);
  const auto line2 = text.find('\n') + 1;
  EXPECT_EQ(text.find("\"error\""), text.find("\"error\"", line2));
  EXPECT_NE(text.find("\"error\""), std::string::npos);
}

TEST(Batch, HashIsReproducibleAcrossRunsAndWorkers) {
  BatchFixture f;
  CallLog log;
  const Defense defense(std::make_shared<ShiftPurify>(&log),
                        std::make_shared<FixedPrefixStage>("hint"),
                        std::make_shared<RecordingVictim>(&log),
                        {.image_dir = f.dir / "purified"});
  const std::vector<std::string> questions(3, "q");
  const auto a = defend_batch(f.manifest, questions, defense, 1);
  const auto b = defend_batch(f.manifest, questions, defense, 3);
  EXPECT_EQ(batch_hash(a), batch_hash(b));
  EXPECT_EQ(serialize_batch(a, false), serialize_batch(b, false));
  EXPECT_TRUE(std::filesystem::exists(f.dir / "purified" / "adv0.png"));
  EXPECT_THROW(defend_batch(f.manifest, std::vector<std::string>(2, "q"), defense), Error);
}

TEST(Registry, UnknownProviderNamed) {
  Config cfg;
  cfg.set("providers.victim", "gpt-vision");
  try {
    ProviderRegistry::from_config(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownProvider);
    EXPECT_NE(std::string(e.what()).find("gpt-vision"), std::string::npos);
  }
}

TEST(Registry, UnresolvedRolesListed) {
  Config cfg;
  cfg.set("providers.victim", "");
  cfg.set("providers.encoder", "");
  const auto reg = ProviderRegistry::from_config(cfg);
  EXPECT_FALSE(reg.has(Role::kVictim));
  EXPECT_TRUE(reg.has(Role::kScorer));
  try {
    reg.require({Role::kVictim, Role::kEncoder, Role::kScorer});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnresolvedRole);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("victim"), std::string::npos);
    EXPECT_NE(msg.find("encoder"), std::string::npos);
    EXPECT_EQ(msg.find("scorer"), std::string::npos);
  }
}

TEST(Registry, ToyRolesShareOneWorld) {
  const auto reg = ProviderRegistry::from_config(Config{});
  reg.require({Role::kVictim, Role::kEncoder, Role::kScorer, Role::kPrefixLm, Role::kPurifier,
               Role::kAttackOracle});
  ASSERT_TRUE(reg.toy);
  EXPECT_EQ(reg.victim->name(), "toy-vlm");
}

TEST(Registry, MakeDefenseWithoutCheckpointsIsUndefended) {
  const auto reg = ProviderRegistry::from_config(Config{});
  const Defense defense = make_defense({}, reg);
  const surrogate::ToyImageGenerator gen(surrogate::ToyWorldConfig{});
  const ImageTensor img = gen.dataset(1, 3).front();
  EXPECT_EQ(defense.defend(img, "what is shown").answer,
            reg.victim->generate("what is shown", img));
}

}  // namespace
}  // namespace codefend::pipeline
