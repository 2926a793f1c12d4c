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

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>
#include <unistd.h>

#include "codefend/attack/oracle.hpp"
#include "codefend/attack/pgd.hpp"
#include "codefend/cli/app.hpp"
#include "codefend/core/error.hpp"
#include "codefend/core/hash.hpp"
#include "codefend/core/rng.hpp"
#include "codefend/eval/metrics.hpp"
#include "codefend/eval/report.hpp"
#include "codefend/pipeline/defense.hpp"
#include "codefend/prefixgen/lora.hpp"
#include "codefend/prefixgen/prefix_lm.hpp"
#include "codefend/promptopt/search.hpp"
#include "codefend/purifier/codec.hpp"
#include "codefend/purifier/purifier.hpp"
#include "codefend/surrogate/lexicon.hpp"
#include "codefend/surrogate/toy_world.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace codefend;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;
  std::vector<std::string> failures;

  void check(bool ok, std::string what) {
    if (!ok) {
      pass = false;
      failures.push_back(std::move(what));
    }
  }
  void note(std::string what) { notes.push_back(std::move(what)); }
};

struct Criterion {
  int id;
  std::string title;
  double budget_s;
  std::function<void(Outcome&)> body;
};

// State handed from the purifier criterion to the feature-similarity one.
struct PurifierRun {
  bool ready = false;
  std::vector<AdvPair> held_out;
  std::vector<ImageTensor> purified;
  std::shared_ptr<surrogate::ToyVlm> vlm;
};

// State handed from the end-to-end run to the reproducibility check.
struct PipelineRun {
  bool ready = false;
  std::map<std::string, std::string> digests;
  nlohmann::json results;
};

PurifierRun g_purifier;
PipelineRun g_pipeline;
fs::path g_workdir;

ImageTensor sign_step(const ImageTensor& img, const std::vector<double>& w, float eps,
                      float direction) {
  std::vector<float> out(img.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const float s = w[i] > 0 ? 1.0f : (w[i] < 0 ? -1.0f : 0.0f);
    out[i] = std::clamp(img.data()[i] + direction * eps * s, 0.0f, 1.0f);
  }
  return img.with_data(std::move(out));
}

void pgd_linear_oracle(Outcome& o) {
  std::size_t checked = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto img = testing::random_image(8, 8, 3, seed);
    Rng rng(seed + 1000);
    std::vector<double> w(img.size());
    for (auto& v : w) v = rng.normal();
    w[seed % w.size()] = 0.0;
    const attack::LinearOracle oracle(w);
    attack::AttackConfig cfg;
    cfg.steps = 1;
    cfg.step_size = cfg.epsilon;
    const auto up = attack::pgd_untargeted(oracle, img, "", "", cfg);
    o.check(up.adv == sign_step(img, w, static_cast<float>(cfg.epsilon), +1.0f),
            fmt::format("untargeted single step differs from closed form (seed {})", seed));
    cfg.targeted = true;
    cfg.target_text = "x";
    const auto down = attack::pgd_targeted(oracle, img, "", "x", cfg);
    o.check(down.adv == sign_step(img, w, static_cast<float>(cfg.epsilon), -1.0f),
            fmt::format("targeted single step differs from closed form (seed {})", seed));
    checked += 2 * img.size();
  }
  o.note(fmt::format("{} pixels match the sign-gradient closed form", checked));

  const auto toy = std::make_shared<surrogate::ToyVlm>(surrogate::ToyWorldConfig{});
  const surrogate::ToyVlmOracle toy_oracle(toy);
  const surrogate::ToyImageGenerator gen(toy->config());
  const auto images = gen.dataset(6, 5);
  std::size_t steps = 0;
  float worst = 0.0f;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto img = images[i];
    attack::AttackConfig cfg;
    cfg.steps = 10;
    cfg.random_start = i % 2 == 1;
    cfg.seed = i;
    const auto observe = [&](int, const ImageTensor& x) {
      ++steps;
      const float d = max_abs_diff(x, img);
      worst = std::max(worst, d);
      o.check(d <= cfg.epsilon + 1e-6, fmt::format("step left the budget: {}", d));
      o.check(std::all_of(x.data().begin(), x.data().end(),
                          [](float v) { return v >= 0.0f && v <= 1.0f; }),
              "step left the pixel range");
    };
    Rng rng(i);
    std::vector<double> w(img.size());
    for (auto& v : w) v = rng.normal();
    attack::pgd_untargeted(attack::LinearOracle(w), img, "", "", cfg, observe);
    attack::pgd_untargeted(attack::QuadraticOracle(std::vector<double>(img.size(), 0.9),
                                                   std::vector<double>(img.size(), 1.0)),
                           img, "", "", cfg, observe);
    cfg.targeted = true;
    cfg.target_text = std::string(surrogate::target_word());
    attack::pgd_targeted(toy_oracle, img, "Describe the image.", *cfg.target_text, cfg, observe);
  }
  o.note(fmt::format("{} PGD steps within budget, worst |delta| = {:.6f}", steps, worst));
}

void diffusion_loss_checks(Outcome& o) {
  const purifier::DownscaleCodec codec(2);
  const auto schedule = purifier::DiffusionSchedule::cosine(50);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto pairs = testing::noise_pairs(4, seed * 10);
    const testing::ReplayPredictor cheat(seed, schedule.steps());
    Rng rng(seed);
    const double cheat_loss = purifier::diffusion_loss(pairs, cheat, codec, schedule, "x", rng);
    o.check(cheat_loss == 0.0, fmt::format("cheating predictor loss {} (seed {})", cheat_loss, seed));

    Rng draw(seed + 50);
    const double zero_loss =
        purifier::diffusion_loss(pairs, testing::ZeroPredictor{}, codec, schedule, "x", draw);
    Rng replay(seed + 50);
    double sum = 0.0;
    std::size_t n = 0;
    const auto latent = codec.encode(pairs[0].adv);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      replay.uniform_int(0, schedule.steps() - 1);
      for (std::size_t k = 0; k < latent.values.size(); ++k) {
        const double e = static_cast<float>(replay.normal());
        sum += e * e;
        ++n;
      }
    }
    o.check(n >= 64, fmt::format("only {} latent elements", n));
    const double expected = sum / static_cast<double>(n);
    o.check(std::abs(zero_loss - expected) <= 0.05 * expected,
            fmt::format("zero predictor loss {} vs noise mean square {}", zero_loss, expected));
    if (seed == 1) {
      o.note(fmt::format("zero predictor {:.4f} vs mean square {:.4f} over {} elements",
                         zero_loss, expected, n));
    }
  }
}

void purifier_learns(Outcome& o) {
  const auto schedule = purifier::DiffusionSchedule::cosine(50);
  purifier::PurifierBackend backend{
      std::make_shared<purifier::DownscaleCodec>(4),
      std::make_shared<purifier::ConvNoisePredictor>(purifier::ConvPredictorConfig{}, schedule),
      schedule};
  auto vlm = std::make_shared<surrogate::ToyVlm>(surrogate::ToyWorldConfig{});
  const auto train = testing::toy_pairs(*vlm, 32, 3);
  const auto held_out = testing::toy_pairs(*vlm, 16, 3, 32);
  const auto res = purifier::train_purifier(
      train, backend, {.epochs = 2000, .learning_rate = 3e-3, .weight_decay = 0.0, .seed = 1});
  const double first = res.epoch_losses.front();
  const double last = res.epoch_losses.back();
  o.check(last < first, fmt::format("epoch loss did not decrease: {} -> {}", first, last));

  const purifier::Purifier p(res.checkpoint, backend,
                             {.image_guidance = 1.0, .text_guidance = 1.0, .seed = 4});
  std::size_t improved = 0;
  g_purifier.purified.clear();
  for (const auto& pair : held_out) {
    const auto pur = p.purify(pair.adv);
    improved += l2_distance(pur, pair.clean) < l2_distance(pair.adv, pair.clean) ? 1 : 0;
    g_purifier.purified.push_back(pur);
  }
  const double frac = static_cast<double>(improved) / static_cast<double>(held_out.size());
  o.check(frac >= 0.8, fmt::format("only {}/{} held-out pairs improved", improved,
                                   held_out.size()));
  o.note(fmt::format("loss {:.4f} -> {:.4f}; {}/{} held-out pairs closer to clean", first, last,
                     improved, held_out.size()));
  g_purifier.held_out = held_out;
  g_purifier.vlm = vlm;
  g_purifier.ready = true;
}

void feature_ordering(Outcome& o) {
  if (!g_purifier.ready) {
    o.check(false, "purifier criterion did not produce a model");
    return;
  }
  const surrogate::ToyClipEncoder encoder(g_purifier.vlm);
  std::vector<double> po, pa, np;
  for (std::size_t i = 0; i < g_purifier.held_out.size(); ++i) {
    const auto& pair = g_purifier.held_out[i];
    const auto sim =
        eval::feature_similarity(pair.clean, pair.adv, g_purifier.purified[i], encoder);
    po.push_back(sim.sim_purified_original);
    pa.push_back(sim.sim_purified_adversarial);
    np.push_back(sim.sim_noise_perturbation);
  }
  const double m_po = eval::median(po), m_pa = eval::median(pa), m_np = eval::median(np);
  o.check(m_po > m_pa, fmt::format("median sim_po {} <= sim_pa {}", m_po, m_pa));
  o.check(m_np > 0.5, fmt::format("median sim_np {} <= 0.5", m_np));
  o.note(fmt::format("medians po {:.4f} > pa {:.4f}, np {:.4f}", m_po, m_pa, m_np));
}

double exhaustive_min(const promptopt::ScoringOracle& oracle, const promptopt::PromptSpace& space,
                      const ImageTensor& image) {
  double best = INFINITY;
  for (promptopt::TokenId a = 0; a < 10; ++a) {
    for (promptopt::TokenId b = 0; b < 10; ++b) {
      const promptopt::Tokens p{a, b};
      if (promptopt::prompt_distance(space, p) > space.delta_bound) continue;
      best = std::min(best, oracle.loss(p, {}, image, {}));
    }
  }
  return best;
}

void beam_search_oracle(Outcome& o) {
  const auto table = testing::random_table(10, 4, 11);
  const ImageTensor image = ImageTensor::filled(2, 2, 3, 0.5f);
  promptopt::PromptSpace space;
  space.table = &table;
  for (promptopt::TokenId i = 0; i < 10; ++i) space.vocab.push_back(i);
  space.base_prompt = {2, 7};
  space.trigger_positions = {0, 1};
  std::size_t traces = 0;
  for (const double bound : {100.0, 1.5, 1.0}) {
    space.delta_bound = bound;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      testing::TableScoringOracle oracle(10, seed);
      oracle.set_dim(4);
      const auto res = promptopt::optimize_prompt(
          image, {}, {}, oracle, space,
          {.rounds = 3, .beam_width = 100, .candidates_per_position = 10});
      const double want = exhaustive_min(oracle, space, image);
      o.check(res.record.final_loss == want,
              fmt::format("seed {} bound {}: search {} vs exhaustive {}", seed, bound,
                          res.record.final_loss, want));
      double prev = INFINITY;
      for (const auto& row : res.trace) {
        if (row.beam_rank != 0) continue;
        o.check(row.loss <= prev, fmt::format("best-beam loss rose in round {}", row.round));
        prev = row.loss;
      }
      ++traces;
    }
  }
  o.note(fmt::format("{} searches hit the exhaustive argmin", traces));

  space.delta_bound = 100.0;
  Rng rng(4);
  std::vector<std::vector<double>> w(2, std::vector<double>(4));
  for (auto& row : w)
    for (auto& v : row) v = rng.normal();
  const testing::LinearScoringOracle linear(&table, w);
  const promptopt::Beam beam{space.base_prompt, linear.loss(space.base_prompt, {}, image, {}), {}};
  promptopt::ScoringContext ctx;
  ctx.image = &image;
  double worst = 0.0;
  for (std::size_t pos = 0; pos < 2; ++pos) {
    for (const auto& c : promptopt::hotflip_candidates(beam, pos, linear, space, ctx, 10)) {
      auto p = beam.tokens;
      p[pos] = c.token;
      const double actual = linear.loss(p, {}, image, {}) - beam.loss;
      worst = std::max(worst, std::abs(actual - c.predicted_delta));
    }
  }
  o.check(worst <= 1e-12, fmt::format("first-order delta off by {}", worst));
  o.note(fmt::format("linear-oracle delta error {:.1e}", worst));
}

void lora_contracts(Outcome& o) {
  auto tok = std::make_shared<const prefixgen::WordTokenizer>(prefixgen::WordTokenizer::surrogate());
  auto base = std::make_shared<const prefixgen::TinyLm>(tok->vocab_size(), prefixgen::TinyLmConfig{});
  prefixgen::PrefixLm lm(tok, base);
  const std::string query = "what is shown in the image?";

  const auto greedy_base = prefixgen::generate_prefix(query, lm, {.max_length = 12});
  auto zero = prefixgen::lora_wrap(base->lora_targets(), 8, 16.0, 3);
  const auto ctx = lm.encode_context(query);
  o.check(base->logits(ctx, &zero) == base->logits(ctx), "zero-init adapter changed logits");
  lm.set_adapter(zero);
  const auto greedy_zero = prefixgen::generate_prefix(query, lm, {.max_length = 12});
  o.check(greedy_zero.tokens == greedy_base.tokens, "zero-init adapter changed greedy decode");

  std::size_t hand = 0;
  for (const auto& t : base->lora_targets()) hand += 8 * static_cast<std::size_t>(t.d_in + t.d_out);
  o.check(zero.num_parameters() == hand,
          fmt::format("adapter has {} parameters, expected {}", zero.num_parameters(), hand));

  prefixgen::PrefixLm fresh(tok, base);
  const std::string prefix = "please answer about the image truthfully";
  const std::vector<prefixgen::PrefixSample> samples{
      {query, prefix, "one", prefixgen::apply_template(prefixgen::kDefaultTemplate, query, prefix)}};
  const auto res = prefixgen::train_prefix_generator(
      samples, fresh, {.epochs = 400, .learning_rate = 1e-2, .batch_size = 1, .rank = 8});
  int max_rank = 0;
  for (std::size_t k = 0; k < fresh.adapter().targets().size(); ++k) {
    max_rank = std::max(max_rank, prefixgen::numerical_rank(fresh.adapter().delta(k)));
  }
  o.check(max_rank <= 8, fmt::format("rank(delta W) = {}", max_rank));
  const auto out = prefixgen::generate_prefix(query, fresh, {.max_length = 16});
  o.check(!out.overflow && out.text == prefix,
          fmt::format("greedy decode gave '{}' instead of '{}'", out.text, prefix));
  o.note(fmt::format("{} adapter parameters ({:.2f}% of base), max rank {}, loss {:.4f} -> {:.6f}",
                     hand, 100.0 * double(hand) / double(base->num_parameters()), max_rank,
                     res.epoch_losses.front(), res.epoch_losses.back()));
}

struct Log {
  std::vector<std::string> events;
};

class TracePurify final : public pipeline::PurifyStage {
 public:
  explicit TracePurify(Log* log) : log_(log) {}
  ImageTensor purify(const ImageTensor& adv) const override {
    log_->events.push_back("purify");
    std::vector<float> data(adv.data().begin(), adv.data().end());
    for (auto& v : data) v = 0.5f * v + 0.25f;
    output = ImageTensor(adv.height(), adv.width(), adv.channels(), std::move(data), adv.id());
    return output;
  }
  std::string name() const override { return "trace"; }
  mutable ImageTensor output;

 private:
  Log* log_;
};

class TracePrefix final : public pipeline::PrefixStage {
 public:
  explicit TracePrefix(Log* log) : log_(log) {}
  std::string prefix(std::string_view, const ImageTensor&) const override {
    log_->events.push_back("prefix");
    return "Answer faithfully.";
  }
  std::string name() const override { return "trace"; }

 private:
  Log* log_;
};

class TraceVictim final : public pipeline::VictimVlm {
 public:
  explicit TraceVictim(Log* log) : log_(log) {}
  std::string generate(std::string_view, const ImageTensor& image) const override {
    log_->events.push_back("vlm");
    seen.push_back(image);
    return "ok";
  }
  std::string name() const override { return "trace"; }
  mutable std::vector<ImageTensor> seen;

 private:
  Log* log_;
};

bool same_bytes(const ImageTensor& a, const ImageTensor& b) {
  return a.same_shape(b) &&
         std::equal(a.data().begin(), a.data().end(), b.data().begin(), b.data().end());
}

void composition(Outcome& o) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Log log;
    auto purify = std::make_shared<TracePurify>(&log);
    auto victim = std::make_shared<TraceVictim>(&log);
    const pipeline::Defense defense(purify, std::make_shared<TracePrefix>(&log), victim);
    const auto adv = testing::random_image(6, 6, 3, seed, "x");
    defense.defend(adv, "What is shown?");
    o.check(log.events == std::vector<std::string>{"purify", "prefix", "vlm"},
            "stage order differs from purify -> prefix -> vlm");
    o.check(victim->seen.size() == 1, fmt::format("victim called {} times", victim->seen.size()));
    if (victim->seen.empty()) continue;
    o.check(same_bytes(victim->seen[0], purify->output),
            "victim input differs from the purifier output");
    o.check(!same_bytes(victim->seen[0], adv), "victim observed the adversarial image");
  }
  o.note("10 stubbed runs: order, single call, and byte-exact handoff hold");
}

std::vector<std::string> brute_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (const char ch : text + " ") {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      continue;
    }
    if (!cur.empty() && cur != "a" && cur != "an" && cur != "the") out.push_back(cur);
    cur.clear();
  }
  return out;
}

bool brute_vqa(const std::string& answer, const std::vector<std::string>& golds) {
  const auto a = brute_tokens(answer);
  for (const auto& g : golds) {
    const auto t = brute_tokens(g);
    if (t == a) return true;
    if (t.empty()) continue;
    for (std::size_t i = 0; i + t.size() <= a.size(); ++i) {
      if (std::equal(t.begin(), t.end(), a.begin() + static_cast<long>(i))) return true;
    }
  }
  return false;
}

bool brute_hit(std::string answer, std::string target) {
  for (auto& ch : answer) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  for (auto& ch : target) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return answer.find(target) != std::string::npos;
}

void metric_arithmetic(Outcome& o) {
  const std::vector<std::string> words{"Cat", "dog", "a bird", "red apple", "the car", "Boat",
                                       "fish.", "horse"};
  Rng rng(2024);
  const auto pick = [&] { return words[static_cast<std::size_t>(rng.uniform_int(0, 7))]; };
  std::vector<eval::EvalRecord> records;
  std::vector<std::string> answers;
  std::vector<std::vector<std::string>> golds;
  std::size_t hits = 0, correct = 0;
  for (int i = 0; i < 1000; ++i) {
    eval::EvalRecord r;
    r.id = fmt::format("r{}", i);
    r.answer = fmt::format("{} {} {}", rng.bernoulli(0.5) ? "It is" : "I see", pick(),
                           rng.bernoulli(0.3) ? pick() : "");
    r.target = pick();
    std::vector<std::string> g{pick()};
    if (rng.bernoulli(0.4)) g.push_back(pick());
    r.vqa_correct = eval::vqa_match(r.answer, g);
    r.condition = {"toy", "pgd", "Vanilla"};
    hits += brute_hit(r.answer, *r.target) ? 1 : 0;
    correct += brute_vqa(r.answer, g) ? 1 : 0;
    answers.push_back(r.answer);
    golds.push_back(g);
    records.push_back(std::move(r));
  }
  const double asr = eval::asr(records);
  o.check(asr == static_cast<double>(hits) / 1000.0,
          fmt::format("ASR {} vs brute force {}", asr, hits / 1000.0));
  const double vqa = eval::vqa_accuracy(answers, golds);
  o.check(vqa == static_cast<double>(correct) / 1000.0,
          fmt::format("VQA {} vs brute force {}", vqa, correct / 1000.0));
  const auto rows = eval::aggregate(records);
  o.check(rows.size() == 1 && rows[0].asr_pct && *rows[0].asr_pct == 100.0 * hits / 1000.0 &&
              rows[0].vqa_acc_pct && *rows[0].vqa_acc_pct == 100.0 * correct / 1000.0,
          "aggregate disagrees with brute force");
  o.note(fmt::format("1000 records: ASR {:.1f}%, VQA {:.1f}%", 100 * asr, 100 * vqa));

  struct ClipCase {
    std::vector<double> image, text;
    double want;
  };
  const double h = std::sqrt(0.5);
  const std::vector<ClipCase> cases{{{1, 0, 0}, {1, 0, 0}, 100.0},
                                    {{1, 0, 0}, {0, 1, 0}, 0.0},
                                    {{1, 2, 3}, {-1, -2, -3}, 0.0},
                                    {{1, 0, 0}, {h, h, 0}, 70.71},
                                    {{3, 4}, {4, 3}, 96.0},
                                    {{1, 1, 1, 1}, {1, 0, 0, 0}, 50.0}};
  for (const auto& c : cases) {
    const double got = eval::clip_score_from_embeddings(c.image, c.text);
    o.check(std::abs(got - c.want) <= 0.01, fmt::format("clip {} vs {}", got, c.want));
  }

  std::vector<eval::EvalRecord> clean{{.clip_score = 92.82, .condition = {"m", "clean", "Vanilla"}},
                                      {.clip_score = 88.79, .condition = {"m", "clean", "CoDefend"}}};
  const auto side = eval::side_effect_report(clean);
  o.check(side.size() == 2 && side[1].cell == "88.79 (↓4.34%)",
          fmt::format("side-effect cell '{}'", side.size() == 2 ? side[1].cell : ""));
  if (side.size() == 2) o.note(fmt::format("side-effect cell {}", side[1].cell));
}

struct CliResult {
  int code;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.end(), {"--workdir", g_workdir.string()});
  std::ostringstream out, err;
  const int code = cli::run(args, out, err, {});
  return {code, err.str()};
}

const std::vector<std::string> kGuidance{"--set", "sampler.image_guidance=1", "--set",
                                         "sampler.text_guidance=1"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// Runs every stage of the toy pipeline under g_workdir; returns false and
// records the failure when a stage exits non-zero.
bool run_pipeline(Outcome& o) {
  const std::vector<std::vector<std::string>> stages{
      {"attack-gen", "--out", "data", "--count", "100", "--workers", "4"},
      {"train-purifier", "--manifest", "data/manifest.jsonl", "--out", "pur", "--epochs", "2000",
       "--lr", "3e-3", "--set", "purifier.weight_decay=0", "--workers", "4"},
      with({"optimize-prompts", "--manifest", "data/manifest.jsonl", "--purifier",
            "pur/purifier.ckpt", "--out", "po", "--workers", "4"},
           kGuidance),
      {"build-prefix-data", "--prompts", "po/prompts.jsonl", "--queries", "po/queries.jsonl",
       "--out", "pd"},
      {"train-prefix", "--data", "pd/prefix_data.jsonl", "--out", "pl", "--lr", "1e-2",
       "--epochs", "40"},
      with({"evaluate", "--manifest", "data/manifest.jsonl", "--purifier", "pur/purifier.ckpt",
            "--adapter", "pl/adapter.ckpt", "--out", "ev", "--workers", "4"},
           kGuidance),
  };
  for (const auto& args : stages) {
    const auto r = cli(args);
    if (r.code != 0) {
      o.check(false, fmt::format("{} exited {}: {}", args[0], r.code, r.err));
      return false;
    }
  }
  return true;
}

std::map<std::string, std::string> artifact_digests() {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(g_workdir)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), g_workdir).generic_string();
    if (entry.path().filename() == "run.json" || rel == "ev/traces.jsonl") continue;
    out[rel] = hash_text(testing::slurp(entry.path()));
  }
  return out;
}

void end_to_end(Outcome& o) {
  fs::remove_all(g_workdir);
  fs::create_directories(g_workdir);
  if (!run_pipeline(o)) return;
  const auto rows = eval::parse_report_csv(testing::slurp(g_workdir / "ev" / "report.csv"));
  const eval::ReportRow* vanilla = nullptr;
  const eval::ReportRow* defended = nullptr;
  for (const auto& r : rows) {
    if (r.condition.attack == "clean") continue;
    if (r.condition.method == "Vanilla") vanilla = &r;
    if (r.condition.method == "CoDefend") defended = &r;
  }
  o.check(vanilla && defended, "report lacks the Vanilla or CoDefend row");
  if (!vanilla || !defended) return;
  o.check(vanilla->n >= 20 && defended->n >= 20, fmt::format("only {} items", defended->n));
  o.check(vanilla->asr_pct == 100.0, fmt::format("undefended ASR {}", vanilla->asr_pct.value_or(-1)));
  o.check(defended->asr_pct == 0.0, fmt::format("defended ASR {}", defended->asr_pct.value_or(-1)));
  o.note(fmt::format("{} items: undefended {} / defended {} (CLIP/ASR)", defended->n,
                     eval::format_cell(*vanilla), eval::format_cell(*defended)));

  g_pipeline.digests = artifact_digests();
  g_pipeline.results = nlohmann::json::parse(testing::slurp(g_workdir / "ev" / "run.json"))["results"];
  g_pipeline.ready = true;
}

void reproducibility(Outcome& o) {
  if (!g_pipeline.ready) {
    o.check(false, "end-to-end run did not complete");
    return;
  }
  fs::remove_all(g_workdir);
  fs::create_directories(g_workdir);
  if (!run_pipeline(o)) return;
  const auto second = artifact_digests();
  o.check(second.size() == g_pipeline.digests.size(),
          fmt::format("{} artifacts vs {}", second.size(), g_pipeline.digests.size()));
  std::size_t same = 0;
  for (const auto& [path, digest] : g_pipeline.digests) {
    const auto it = second.find(path);
    const bool eq = it != second.end() && it->second == digest;
    o.check(eq, fmt::format("{} differs between runs", path));
    same += eq ? 1 : 0;
  }
  const auto results = nlohmann::json::parse(testing::slurp(g_workdir / "ev" / "run.json"))["results"];
  o.check(results["trace_hash"] == g_pipeline.results["trace_hash"], "trace hashes differ");
  o.check(results["report_hash"] == g_pipeline.results["report_hash"], "report hashes differ");
  o.note(fmt::format("{} artifacts byte-identical; trace hash {}", same,
                     results["trace_hash"].get<std::string>()));
}

}  // namespace

int main() {
  g_workdir = fs::temp_directory_path() / fmt::format("codefend_acceptance_{}", ::getpid());
  const std::vector<Criterion> criteria{
      {1, "PGD closed form on a linear oracle and per-step budget", 5, pgd_linear_oracle},
      {2, "diffusion loss: cheating predictor and zero predictor", 10, diffusion_loss_checks},
      {3, "supervised purification learns on 32 toy pairs", 600, purifier_learns},
      {4, "feature similarity ordering po > pa, np > 0.5", 60, feature_ordering},
      {5, "HotFlip beam search equals exhaustive argmin", 30, beam_search_oracle},
      {6, "LoRA contracts and one-sample overfit", 120, lora_contracts},
      {7, "purify -> prefix -> vlm composition with stubs", 5, composition},
      {8, "metric arithmetic against brute force", 10, metric_arithmetic},
      {9, "end-to-end toy defense ASR 100% -> 0%", 300, end_to_end},
      {10, "byte-identical artifacts across identical runs", 300, reproducibility},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.body(o);
    } catch (const std::exception& e) {
      o.check(false, fmt::format("exception: {}", e.what()));
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.check(secs < c.budget_s, fmt::format("took {:.1f} s, budget {:.0f} s", secs, c.budget_s));
    failed += o.pass ? 0 : 1;
    std::string detail;
    for (const auto& n : o.notes) detail += (detail.empty() ? "" : "; ") + n;
    for (const auto& f : o.failures) detail += (detail.empty() ? "" : "; ") + f;
    std::cout << fmt::format("{} criterion {} ({:.2f} s): {} [{}]", o.pass ? "PASS" : "FAIL", c.id,
                             secs, c.title, detail)
              << std::endl;
  }
  std::error_code ec;
  fs::remove_all(g_workdir, ec);
  std::cout << fmt::format("{}/{} criteria passed", criteria.size() - failed, criteria.size())
            << std::endl;
  return failed == 0 ? 0 : 1;
}
