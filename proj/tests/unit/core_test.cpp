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

#include <cmath>
#include <fstream>
#include <functional>
#include <set>

#include <fmt/format.h>

#include "codefend/core/adamw.hpp"
#include "codefend/core/config.hpp"
#include "codefend/core/error.hpp"
#include "codefend/core/hash.hpp"
#include "codefend/core/image_io.hpp"
#include "codefend/core/manifest.hpp"
#include "codefend/core/parallel.hpp"
#include "codefend/core/rng.hpp"
#include "codefend/core/tensor_archive.hpp"
#include "test_support.hpp"

namespace codefend {
namespace {

using testing::random_image;
using testing::TempDir;

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::kInvalidArgument;
}

TEST(ImageIo, PngRoundTripWithinOneLevel) {
  TempDir dir("png");
  const auto img = random_image(7, 5, 3, 1);
  write_png(img, dir / "a.png");
  const auto back = read_png(dir / "a.png");
  ASSERT_TRUE(back.same_shape(img));
  EXPECT_LE(max_abs_diff(back, img), 0.5f / 255.0f + 1e-7f);
}

TEST(ImageIo, NpybinIsBitExact) {
  TempDir dir("npy");
  const auto img = random_image(4, 6, 3, 2);
  write_npybin(img, dir / "a.npybin");
  EXPECT_EQ(read_npybin(dir / "a.npybin"), img);
}

TEST(ImageIo, ManifestReaderPrefersSidecar) {
  TempDir dir("sidecar");
  const auto img = random_image(3, 3, 3, 3);
  write_image(img, dir / "x.png");
  write_image(img, dir / "x.npybin");
  PairManifest m;
  m.base_dir = dir.path();
  EXPECT_EQ(read_manifest_image(m, "x.png"), img);
  EXPECT_NE(read_image(dir / "x.png"), img);
  EXPECT_EQ(read_image(dir / "x.npybin"), img);
}

TEST(ImageIo, MissingFileIsReported) {
  EXPECT_EQ(code_of([] { read_png("/nonexistent/x.png"); }), ErrorCode::kMissingFile);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42);
  Rng b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  EXPECT_NE(Rng(1).fork(1).next_u64(), Rng(1).fork(2).next_u64());
}

TEST(Hash, Fnv1aKnownValue) {
  EXPECT_EQ(Fnv1a().hex(), "cbf29ce484222325");
  EXPECT_EQ(hash_text("a"), "af63dc4c8601ec8c");
}

TEST(TensorArchive, RoundTripAndCorruption) {
  TempDir dir("archive");
  TensorArchive ar;
  ar.meta()["format"] = "test/1";
  ar.put("w", {2, 3}, {1, 2, 3, 4, 5, 6});
  ar.save(dir / "a.bin");
  const auto back = TensorArchive::load(dir / "a.bin");
  EXPECT_EQ(back.meta()["format"], "test/1");
  EXPECT_EQ(back.get("w").values, ar.get("w").values);
  EXPECT_EQ(back.get("w").shape, (std::vector<std::int64_t>{2, 3}));

  auto bytes = ar.serialize();
  bytes.resize(bytes.size() - 3);
  EXPECT_EQ(code_of([&] { TensorArchive::deserialize(bytes); }), ErrorCode::kCheckpointCorrupt);
  EXPECT_EQ(code_of([&] { ar.put("bad", {2, 2}, {1, 2, 3}); }), ErrorCode::kShapeMismatch);
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  AdamW opt(2, {.learning_rate = 0.1, .weight_decay = 0.0});
  std::vector<float> p{1.0f, -1.0f};
  const std::vector<float> g{3.0f, -0.5f};
  opt.step(p, g);
  EXPECT_NEAR(p[0], 0.9f, 1e-6);
  EXPECT_NEAR(p[1], -0.9f, 1e-6);
}

TEST(AdamW, DecoupledWeightDecay) {
  AdamW opt(1, {.learning_rate = 0.1, .weight_decay = 0.5});
  std::vector<float> p{2.0f};
  const std::vector<float> g{0.0f};
  opt.step(p, g);
  EXPECT_NEAR(p[0], 2.0f * (1.0f - 0.05f), 1e-6);
}

TEST(Config, ParseTypedAndMerge) {
  auto c = Config::parse("# comment\na.x = 3\na.y = 2.5\na.z = true\na.s = hello world\n");
  EXPECT_EQ(c.get_int("a.x"), 3);
  EXPECT_DOUBLE_EQ(c.get_double("a.y"), 2.5);
  EXPECT_TRUE(c.get_bool("a.z"));
  EXPECT_EQ(c.get_string("a.s"), "hello world");
  EXPECT_EQ(c.get_int("a.missing", 7), 7);
  EXPECT_EQ(code_of([&] { c.get_int("a.s"); }), ErrorCode::kConfigError);
  EXPECT_EQ(code_of([&] { c.get_string("nope.k"); }), ErrorCode::kConfigError);

  Config over = Config::parse("a.x = 4\nb.new = 1\n");
  EXPECT_EQ(over.unknown_keys(c), std::vector<std::string>{"b.new"});
  c.merge(over);
  EXPECT_EQ(c.get_int("a.x"), 4);
  EXPECT_EQ(Config::parse(c.dump()), c);
}

TEST(Config, MalformedLineIsConfigError) {
  EXPECT_EQ(code_of([] { Config::parse("just words\n"); }), ErrorCode::kConfigError);
}

TEST(Parallel, CoversEveryIndexAndRethrowsLowestFailure) {
  std::vector<int> hits(100, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) EXPECT_EQ(h, 1);
  try {
    parallel_for(50, 4, [](std::size_t i) {
      if (i == 7 || i == 30) throw std::runtime_error(std::to_string(i));
    });
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "7");
  }
}

PairManifest make_manifest(const TempDir& dir, std::size_t n, std::size_t distinct_clean) {
  PairManifest m;
  m.base_dir = dir.path();
  std::filesystem::create_directories(dir / "adv");
  std::filesystem::create_directories(dir / "clean");
  for (std::size_t i = 0; i < n; ++i) {
    ManifestEntry e;
    e.adv_path = fmt::format("adv/{:03}.png", i);
    e.clean_path = fmt::format("clean/{:03}.png", i % distinct_clean);
    e.attack = "pgd-linf";
    e.epsilon = 8.0 / 255.0;
    if (i % 2 == 0) e.target = "skull";
    m.entries.push_back(e);
  }
  return m;
}

void materialize(const PairManifest& m) {
  for (const auto& e : m.entries) {
    write_png(random_image(2, 2, 3, 1), m.resolve(e.adv_path));
    write_png(random_image(2, 2, 3, 2), m.resolve(e.clean_path));
  }
}

TEST(Manifest, WriterReaderIdentity) {
  TempDir dir("manifest");
  const auto m = make_manifest(dir, 5, 5);
  materialize(m);
  write_manifest(m, dir / "manifest.jsonl");
  const auto back = load_manifest(dir / "manifest.jsonl");
  ASSERT_EQ(back.entries.size(), 5u);
  EXPECT_EQ(back.entries, m.entries);
  EXPECT_EQ(serialize_manifest(back), serialize_manifest(m));
}

TEST(Manifest, MissingCleanPathNamesLine) {
  TempDir dir("manifest_bad");
  {
    std::ofstream f(dir / "m.jsonl");
    f << R"({"adv":"a.png","attack":"x","epsilon":0.1,"split":"train","target":null})" << "\n";
  }
  try {
    load_manifest(dir / "m.jsonl", false);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSchemaError);
    EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos) << e.what();
  }
}

TEST(Manifest, DanglingReference) {
  TempDir dir("manifest_dangling");
  const auto m = make_manifest(dir, 2, 2);
  write_manifest(m, dir / "m.jsonl");
  EXPECT_EQ(code_of([&] { load_manifest(dir / "m.jsonl"); }), ErrorCode::kDanglingRef);
}

TEST(Manifest, SplitFractions) {
  TempDir dir("split");
  Rng rng(3);
  const auto s = split_manifest(make_manifest(dir, 10, 10), 0.8, rng);
  EXPECT_EQ(s.count(Split::kTrain), 8u);
  EXPECT_EQ(s.count(Split::kTest), 2u);

  const auto two = make_manifest(dir, 2, 2);
  Rng r1(9);
  Rng r2(9);
  const auto a = split_manifest(two, 0.5, r1);
  const auto b = split_manifest(two, 0.5, r2);
  EXPECT_EQ(a.count(Split::kTrain), 1u);
  EXPECT_EQ(a.count(Split::kTest), 1u);
  EXPECT_EQ(a.entries, b.entries);
}

TEST(Manifest, SplitsNeverShareCleanIds) {
  TempDir dir("leak");
  Rng rng(5);
  const auto s = split_manifest(make_manifest(dir, 100, 50), 0.8, rng);
  std::set<std::string> train;
  std::set<std::string> test;
  for (const auto& e : s.entries) (e.split == Split::kTrain ? train : test).insert(e.clean_id());
  for (const auto& id : test) EXPECT_FALSE(train.contains(id)) << id;
  EXPECT_EQ(train.size() + test.size(), 50u);
}

TEST(Manifest, DegenerateSplit) {
  TempDir dir("degenerate");
  Rng rng(1);
  EXPECT_EQ(code_of([&] { split_manifest(make_manifest(dir, 1, 1), 0.5, rng); }),
            ErrorCode::kDegenerateSplit);
}

}  // namespace
}  // namespace codefend
