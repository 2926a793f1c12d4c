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

#include "commands.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "codefend/attack/forge.hpp"
#include "codefend/core/error.hpp"
#include "codefend/core/hash.hpp"
#include "codefend/core/image_io.hpp"
#include "codefend/core/manifest.hpp"
#include "codefend/core/parallel.hpp"
#include "codefend/eval/metrics.hpp"
#include "codefend/eval/report.hpp"
#include "codefend/pipeline/defense.hpp"
#include "codefend/pipeline/registry.hpp"
#include "codefend/promptopt/search.hpp"
#include "codefend/surrogate/lexicon.hpp"

namespace codefend::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using pipeline::ProviderRegistry;
using pipeline::Role;

void write_text(const fs::path& path, std::string_view text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw Error(ErrorCode::kIoError, fmt::format("cannot write {}", path.string()));
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kMissingFile, fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto bar = text.find('|', start);
    const auto piece = trim(text.substr(start, bar == std::string_view::npos ? text.npos
                                                                                : bar - start));
    if (!piece.empty()) out.push_back(piece);
    if (bar == std::string_view::npos) break;
    start = bar + 1;
  }
  return out;
}

std::string item_id(const ManifestEntry& entry) { return fs::path(entry.adv_path).stem().string(); }

PairManifest select_split(const PairManifest& manifest, const std::string& split) {
  PairManifest out;
  out.base_dir = manifest.base_dir;
  for (const auto& e : manifest.entries) {
    if (split == "all" || split_name(e.split) == split) out.entries.push_back(e);
  }
  if (out.entries.empty()) {
    throw Error(ErrorCode::kEmptySplit, fmt::format("manifest has no '{}' entries", split));
  }
  return out;
}

PairManifest open_manifest(const Context& ctx) {
  return load_manifest(ctx.resolve(ctx.path("manifest")));
}

const surrogate::ToyVlm& require_toy(const ProviderRegistry& reg, std::string_view why) {
  if (!reg.toy) {
    throw Error(ErrorCode::kUnresolvedRole, fmt::format("{} needs the toy-vlm vocabulary", why));
  }
  return *reg.toy;
}

attack::AttackConfig attack_config(const Config& cfg, std::uint64_t seed) {
  attack::AttackConfig ac;
  ac.name = cfg.get_string("attack.name");
  ac.epsilon = attack::parse_epsilon(cfg.get_string("attack.epsilon"));
  ac.step_size = attack::parse_epsilon(cfg.get_string("attack.step_size"));
  ac.steps = static_cast<int>(cfg.get_int("attack.steps"));
  ac.targeted = cfg.get_bool("attack.targeted");
  if (ac.targeted) ac.target_text = cfg.get_string("attack.target");
  ac.random_start = cfg.get_bool("attack.random_start");
  ac.seed = seed;
  ac.validate();
  return ac;
}

purifier::SamplerConfig sampler_config(const Config& cfg, std::uint64_t seed) {
  purifier::SamplerConfig sc;
  sc.steps = static_cast<int>(cfg.get_int("sampler.steps"));
  sc.image_guidance = cfg.get_double("sampler.image_guidance");
  sc.text_guidance = cfg.get_double("sampler.text_guidance");
  sc.t_start_fraction = cfg.get_double("sampler.t_start_fraction");
  sc.seed = seed;
  return sc;
}

prefixgen::DecodeConfig decode_config(const Config& cfg, std::uint64_t seed) {
  prefixgen::DecodeConfig dc;
  dc.max_length = static_cast<int>(cfg.get_int("prefix.max_length"));
  const auto strategy = cfg.get_string("prefix.strategy");
  if (strategy == "greedy") {
    dc.strategy = prefixgen::DecodeStrategy::kGreedy;
  } else if (strategy == "sampled") {
    dc.strategy = prefixgen::DecodeStrategy::kSampled;
  } else {
    throw Error(ErrorCode::kConfigError,
                fmt::format("prefix.strategy must be greedy or sampled, got '{}'", strategy));
  }
  dc.temperature = cfg.get_double("prefix.temperature");
  dc.seed = seed;
  return dc;
}

pipeline::DefenseConfig defense_config(const Context& ctx) {
  const auto& cfg = ctx.config;
  pipeline::DefenseConfig dc;
  if (const auto p = ctx.path("purifier"); !p.empty()) dc.purifier_checkpoint = ctx.resolve(p);
  if (const auto p = ctx.path("adapter"); !p.empty()) dc.adapter_checkpoint = ctx.resolve(p);
  dc.sampler = sampler_config(cfg, ctx.seed());
  dc.decode = decode_config(cfg, ctx.seed());
  dc.instruction = cfg.get_string("purifier.instruction");
  dc.seed = ctx.seed();
  dc.allow_degraded = cfg.get_bool("defense.allow_degraded");
  dc.image_dir = ctx.out_dir / "purified";
  return dc;
}

std::string file_hash(const fs::path& path) { return hash_text(read_text(path)); }

std::vector<ImageTensor> read_image_dir(const fs::path& dir) {
  std::vector<fs::path> files;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    const auto ext = entry.path().extension().string();
    if (entry.is_regular_file() && (ext == ".png" || ext == ".npybin")) {
      files.push_back(entry.path());
    }
  }
  if (ec) throw Error(ErrorCode::kMissingFile, fmt::format("cannot list {}", dir.string()));
  std::sort(files.begin(), files.end());
  std::vector<ImageTensor> images;
  std::set<std::string> seen;
  for (const auto& f : files) {
    const auto stem = f.stem().string();
    if (!seen.insert(stem).second) continue;
    images.push_back(read_image(f).with_id(stem));
  }
  if (images.empty()) {
    throw Error(ErrorCode::kEmptyDataset, fmt::format("no images in {}", dir.string()));
  }
  return images;
}

std::vector<prefixgen::QueryItem> read_queries(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<prefixgen::QueryItem> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    try {
      const auto j = json::parse(line);
      out.push_back({j.at("id").get<std::string>(), j.at("text").get<std::string>()});
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kSchemaError,
                  fmt::format("{}:{}: {}", path.string(), n, e.what()));
    }
  }
  return out;
}

json record_json(const eval::EvalRecord& r) {
  json j{{"id", r.id},
         {"model", r.condition.model},
         {"attack", r.condition.attack},
         {"method", r.condition.method},
         {"answer", r.answer},
         {"clip_score", r.clip_score}};
  j["target"] = r.target ? json(*r.target) : json(nullptr);
  j["target_hit"] = r.target_hit ? json(*r.target_hit) : json(nullptr);
  j["vqa_correct"] = r.vqa_correct ? json(*r.vqa_correct) : json(nullptr);
  return j;
}

void write_prefix_loss(const std::vector<double>& losses, const fs::path& path) {
  purifier::write_loss_log(losses, path);
}

}  // namespace

fs::path Context::resolve(const std::string& p) const {
  const fs::path path(p);
  return path.is_absolute() ? path : workdir / path;
}

std::string Context::path(const std::string& name) const {
  const auto it = paths.find(name);
  return it == paths.end() ? std::string{} : it->second;
}

int Context::workers() const { return static_cast<int>(config.get_int("run.workers")); }

std::uint64_t Context::seed() const { return config.get_u64("run.seed"); }

void cmd_attack_gen(Context& ctx) {
  const auto& cfg = ctx.config;
  const auto reg = ProviderRegistry::from_config(cfg);
  reg.require({Role::kAttackOracle});

  std::vector<ImageTensor> images;
  if (const auto dir = ctx.path("images"); !dir.empty()) {
    images = read_image_dir(ctx.resolve(dir));
  } else {
    const auto& toy = require_toy(reg, "generating images without --images");
    images = surrogate::ToyImageGenerator(toy.config())
                 .dataset(static_cast<std::size_t>(cfg.get_int("data.count")),
                          cfg.get_u64("data.seed"));
  }

  const auto ac = attack_config(cfg, ctx.seed());
  attack::ForgeOptions fo;
  fo.prompt = cfg.get_string("attack.prompt");
  fo.workers = static_cast<std::size_t>(ctx.workers());
  if (!ac.targeted) {
    reg.require({Role::kVictim});
    for (const auto& img : images) fo.references.push_back(reg.victim->generate(fo.prompt, img));
  }
  auto manifest = attack::forge_dataset(images, *reg.attack_oracle, ac, ctx.out_dir, fo);
  Rng rng(ctx.seed());
  manifest = split_manifest(manifest, cfg.get_double("run.train_fraction"), rng);
  const auto path = ctx.out_dir / "manifest.jsonl";
  write_manifest(manifest, path);

  ctx.results["manifest_hash"] = file_hash(path);
  ctx.results["train"] = manifest.count(Split::kTrain);
  ctx.results["test"] = manifest.count(Split::kTest);
  *ctx.out << fmt::format("wrote {} pairs ({} train, {} test) to {}\n", manifest.entries.size(),
                          manifest.count(Split::kTrain), manifest.count(Split::kTest),
                          path.string());
}

void cmd_train_purifier(Context& ctx) {
  const auto& cfg = ctx.config;
  auto reg = ProviderRegistry::from_config(cfg);
  reg.require({Role::kPurifier});
  const auto manifest = open_manifest(ctx);

  purifier::PurifierTrainConfig tc;
  tc.epochs = static_cast<int>(cfg.get_int("purifier.epochs"));
  tc.learning_rate = cfg.get_double("purifier.learning_rate");
  tc.batch_size = static_cast<int>(cfg.get_int("purifier.batch_size"));
  tc.weight_decay = cfg.get_double("purifier.weight_decay");
  tc.drop_image_prob = cfg.get_double("purifier.drop_image_prob");
  tc.drop_text_prob = cfg.get_double("purifier.drop_text_prob");
  tc.instruction = cfg.get_string("purifier.instruction");
  tc.seed = ctx.seed();

  const auto result = purifier::train_purifier(manifest, *reg.purifier, tc);
  const auto ckpt = ctx.out_dir / "purifier.ckpt";
  result.checkpoint.save(ckpt);
  purifier::write_loss_log(result.epoch_losses, ctx.out_dir / "loss.csv");

  ctx.results["checkpoint_hash"] = file_hash(ckpt);
  ctx.results["first_loss"] = result.epoch_losses.front();
  ctx.results["final_loss"] = result.epoch_losses.back();
  *ctx.out << fmt::format("epoch loss {:.6f} -> {:.6f}; checkpoint {}\n",
                          result.epoch_losses.front(), result.epoch_losses.back(),
                          ckpt.string());
}

void cmd_optimize_prompts(Context& ctx) {
  const auto& cfg = ctx.config;
  const auto reg = ProviderRegistry::from_config(cfg);
  reg.require({Role::kScorer, Role::kVictim});
  const auto& toy = require_toy(reg, "prompt optimization");
  const auto manifest = select_split(open_manifest(ctx), ctx.split);

  std::optional<purifier::Purifier> purifier;
  if (const auto p = ctx.path("purifier"); !p.empty()) {
    reg.require({Role::kPurifier});
    auto ckpt = purifier::PurifierCheckpoint::load(ctx.resolve(p));
    ckpt.instruction = cfg.get_string("purifier.instruction");
    purifier.emplace(ckpt, *reg.purifier, sampler_config(cfg, ctx.seed()));
  }

  promptopt::PromptSpace space;
  space.table = &toy.embeddings();
  const auto classes = surrogate::class_words();
  for (std::size_t i = 0; i < toy.words().size(); ++i) {
    if (std::find(classes.begin(), classes.end(), toy.words()[i]) != classes.end()) continue;
    space.vocab.push_back(static_cast<promptopt::TokenId>(i));
  }
  space.base_prompt = toy.tokenize(cfg.get_string("promptopt.base_prompt"));
  const auto trigger_length = static_cast<std::size_t>(cfg.get_int("promptopt.trigger_length"));
  if (trigger_length > space.base_prompt.size() ||
      std::count(space.base_prompt.begin(), space.base_prompt.end(), -1) > 0) {
    throw Error(ErrorCode::kConfigError,
                "promptopt.base_prompt must be in-vocabulary and cover trigger_length words");
  }
  for (std::size_t i = 0; i < trigger_length; ++i) space.trigger_positions.push_back(i);
  space.delta_bound = cfg.get_double("promptopt.delta_bound");
  space.validate();

  promptopt::OptimizeConfig oc;
  oc.rounds = static_cast<int>(cfg.get_int("promptopt.rounds"));
  oc.beam_width = static_cast<std::size_t>(cfg.get_int("promptopt.beam_width"));
  oc.candidates_per_position = static_cast<std::size_t>(cfg.get_int("promptopt.candidates"));
  oc.seed = ctx.seed();
  oc.workers = ctx.workers();

  const auto queries = split_list(cfg.get_string("promptopt.queries"));
  if (queries.empty()) throw Error(ErrorCode::kConfigError, "promptopt.queries is empty");

  auto count = manifest.entries.size();
  if (const auto limit = cfg.get_int("promptopt.max_items"); limit > 0) {
    count = std::min(count, static_cast<std::size_t>(limit));
  }

  const auto trace_dir = ctx.out_dir / "traces";
  fs::create_directories(trace_dir);
  std::vector<promptopt::PromptRecord> records;
  std::vector<prefixgen::QueryItem> query_items;
  Fnv1a trace_hash;
  std::size_t improved = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const auto& entry = manifest.entries[i];
    const auto id = item_id(entry);
    const auto pair = load_pair(manifest, i);
    const auto image = purifier ? purifier->purify(pair.adv) : pair.adv;
    const auto& query = queries[i % queries.size()];
    const auto y_true = toy.tokenize(reg.victim->generate(query, pair.clean));
    try {
      auto res = promptopt::optimize_prompt(image, toy.tokenize(query), y_true, *reg.scorer,
                                            space, oc);
      res.record.id = id;
      const auto trace = promptopt::serialize_trace(res.trace);
      write_text(trace_dir / (id + ".jsonl"), trace);
      trace_hash.update(trace);
      if (res.record.final_loss < res.record.base_loss) ++improved;
      records.push_back(std::move(res.record));
    } catch (const Error& e) {
      throw e.in_context(fmt::format("item '{}'", id));
    }
    query_items.push_back({id, query});
  }

  promptopt::write_prompt_records(records, ctx.out_dir / "prompts.jsonl");
  std::string qtext;
  for (const auto& q : query_items) qtext += json{{"id", q.id}, {"text", q.text}}.dump() + "\n";
  write_text(ctx.out_dir / "queries.jsonl", qtext);

  ctx.results["items"] = records.size();
  ctx.results["improved"] = improved;
  ctx.results["trace_hash"] = trace_hash.hex();
  ctx.results["prompts_hash"] = file_hash(ctx.out_dir / "prompts.jsonl");
  *ctx.out << fmt::format("optimized {} prompts, {} lowered the loss\n", records.size(),
                          improved);
}

void cmd_build_prefix_data(Context& ctx) {
  const auto& cfg = ctx.config;
  const auto reg = ProviderRegistry::from_config(cfg);
  const auto& toy = require_toy(reg, "detokenizing optimized prompts");
  const auto records = promptopt::read_prompt_records(ctx.resolve(ctx.path("prompts")));
  const auto queries = read_queries(ctx.resolve(ctx.path("queries")));
  const auto tmpl = cfg.get_string("prefix.template");

  const auto samples = prefixgen::build_prefix_dataset(
      records, queries,
      [&toy](std::span<const promptopt::TokenId> tokens) { return toy.detokenize(tokens); },
      tmpl);
  const auto path = ctx.out_dir / "prefix_data.jsonl";
  prefixgen::write_prefix_dataset(samples, path);
  ctx.results["samples"] = samples.size();
  ctx.results["data_hash"] = file_hash(path);
  *ctx.out << fmt::format("wrote {} samples to {}\n", samples.size(), path.string());
}

void cmd_train_prefix(Context& ctx) {
  const auto& cfg = ctx.config;
  const auto reg = ProviderRegistry::from_config(cfg);
  reg.require({Role::kPrefixLm});
  const auto samples =
      prefixgen::read_prefix_dataset(ctx.resolve(ctx.path("data")), cfg.get_string("prefix.template"));

  prefixgen::PrefixTrainConfig tc;
  tc.epochs = static_cast<int>(cfg.get_int("prefix.epochs"));
  tc.learning_rate = cfg.get_double("prefix.learning_rate");
  tc.batch_size = static_cast<int>(cfg.get_int("prefix.batch_size"));
  tc.weight_decay = cfg.get_double("prefix.weight_decay");
  tc.rank = static_cast<int>(cfg.get_int("prefix.rank"));
  tc.alpha = cfg.get_double("prefix.alpha");
  tc.seed = ctx.seed();

  prefixgen::PrefixLm lm = *reg.prefix_lm;
  const auto result = prefixgen::train_prefix_generator(samples, lm, tc);
  const auto ckpt = ctx.out_dir / "adapter.ckpt";
  result.checkpoint.save(ckpt);
  write_prefix_loss(result.epoch_losses, ctx.out_dir / "loss.csv");

  std::set<std::string> queries;
  for (const auto& s : samples) queries.insert(s.query);
  const auto decode = decode_config(cfg, ctx.seed());
  std::string probe;
  for (const auto& q : queries) {
    probe += json{{"query", q}, {"prefix", prefixgen::generate_prefix(q, lm, decode).text}}.dump() +
             "\n";
  }
  write_text(ctx.out_dir / "probe.jsonl", probe);

  ctx.results["checkpoint_hash"] = file_hash(ckpt);
  ctx.results["probe_hash"] = hash_text(probe);
  ctx.results["first_loss"] = result.epoch_losses.front();
  ctx.results["final_loss"] = result.epoch_losses.back();
  *ctx.out << fmt::format("epoch loss {:.6f} -> {:.6f}; adapter {}\n", result.epoch_losses.front(),
                          result.epoch_losses.back(), ckpt.string());
}

void cmd_defend(Context& ctx) {
  const auto& cfg = ctx.config;
  const auto reg = ProviderRegistry::from_config(cfg);
  const auto manifest = select_split(open_manifest(ctx), ctx.split);
  const auto defense = pipeline::make_defense(defense_config(ctx), reg);
  const std::vector<std::string> questions(manifest.entries.size(),
                                           cfg.get_string("defense.question"));
  const auto items = pipeline::defend_batch(manifest, questions, defense, ctx.workers());
  write_text(ctx.out_dir / "traces.jsonl", pipeline::serialize_batch(items));

  std::size_t failed = 0;
  std::size_t degraded = 0;
  for (const auto& item : items) {
    if (item.error) {
      ++failed;
      *ctx.err << fmt::format("item '{}': {}\n", item.id, *item.error);
    } else if (item.result->trace.degraded) {
      ++degraded;
    }
  }
  ctx.results["items"] = items.size();
  ctx.results["failed"] = failed;
  ctx.results["degraded"] = degraded;
  ctx.results["trace_hash"] = pipeline::batch_hash(items);
  if (failed > 0) {
    throw Error(ErrorCode::kStageFailure,
                fmt::format("{} of {} items failed", failed, items.size()));
  }
  *ctx.out << fmt::format("defended {} items ({} degraded)\n", items.size(), degraded);
}

void cmd_evaluate(Context& ctx) {
  const auto& cfg = ctx.config;
  const auto reg = ProviderRegistry::from_config(cfg);
  reg.require({Role::kVictim, Role::kEncoder});
  const auto& encoder = reg.text_encoder();
  const auto manifest = select_split(open_manifest(ctx), ctx.split);
  const auto dc = defense_config(ctx);
  fs::create_directories(dc.image_dir);
  const auto defense = pipeline::make_defense(dc, reg);
  const auto question = cfg.get_string("defense.question");
  const auto method = cfg.get_string("eval.method");
  const auto baseline = cfg.get_string("eval.baseline");
  const auto model = reg.victim->name();

  const std::size_t n = manifest.entries.size();
  std::vector<eval::EvalRecord> attacked(2 * n);
  std::vector<eval::EvalRecord> clean(2 * n);
  std::vector<pipeline::BatchItem> traces(n);
  parallel_for(n, static_cast<std::size_t>(ctx.workers()), [&](std::size_t i) {
    const auto& entry = manifest.entries[i];
    const auto id = item_id(entry);
    const auto pair = load_pair(manifest, i);
    const auto gold = reg.victim->generate(question, pair.clean);
    const std::vector<std::string> golds{gold};

    auto make = [&](const std::string& answer, const std::string& attack, const std::string& m,
                    bool with_target) {
      eval::EvalRecord r;
      r.id = id;
      r.answer = answer;
      r.clip_score = eval::clip_score(pair.clean, answer, encoder);
      if (with_target && entry.target) {
        r.target = entry.target;
        r.target_hit = eval::target_matches(answer, *entry.target);
      }
      r.vqa_correct = eval::vqa_match(answer, golds);
      r.condition = {model, attack, m};
      return r;
    };

    const auto defended = defense.defend(pair.adv.with_id(id), question, id);
    traces[i].id = id;
    traces[i].result = defended;
    attacked[2 * i] = make(reg.victim->generate(question, pair.adv), entry.attack, baseline, true);
    attacked[2 * i + 1] = make(defended.answer, entry.attack, method, true);
    clean[2 * i] = make(gold, "clean", baseline, false);
    clean[2 * i + 1] = make(defense.defend(pair.clean, question, id + "_clean").answer, "clean",
                            method, false);
  });

  std::vector<eval::EvalRecord> all = attacked;
  all.insert(all.end(), clean.begin(), clean.end());
  const auto rows = eval::aggregate(all);
  const auto csv = eval::emit_report_csv(rows);
  write_text(ctx.out_dir / "report.csv", csv);
  const auto md = eval::emit_report_markdown(rows);
  write_text(ctx.out_dir / "report.md", md.text);

  std::string lines;
  for (const auto& r : all) lines += record_json(r).dump() + "\n";
  write_text(ctx.out_dir / "records.jsonl", lines);

  std::string side = "model,method,mean_clip,drop_pct,n,cell\n";
  for (const auto& row : eval::side_effect_report(clean, baseline)) {
    side += fmt::format("{},{},{:.2f},{:.2f},{},{}\n", row.model, row.method, row.mean_clip,
                        row.drop_pct, row.n, row.cell);
  }
  write_text(ctx.out_dir / "side_effects.csv", side);
  write_text(ctx.out_dir / "traces.jsonl", pipeline::serialize_batch(traces));

  ctx.results["items"] = n;
  ctx.results["report_hash"] = hash_text(csv);
  ctx.results["trace_hash"] = pipeline::batch_hash(traces);
  for (const auto& row : rows) {
    if (row.condition.attack == "clean") continue;
    *ctx.out << fmt::format("{} / {} / {}: {}\n", row.condition.model, row.condition.attack,
                            row.condition.method, eval::format_cell(row));
  }
}

void cmd_analyze_features(Context& ctx) {
  const auto& cfg = ctx.config;
  const auto reg = ProviderRegistry::from_config(cfg);
  reg.require({Role::kEncoder, Role::kPurifier});
  const auto manifest = select_split(open_manifest(ctx), ctx.split);
  auto ckpt = purifier::PurifierCheckpoint::load(ctx.resolve(ctx.path("purifier")));
  ckpt.instruction = cfg.get_string("purifier.instruction");
  const purifier::Purifier purifier(ckpt, *reg.purifier, sampler_config(cfg, ctx.seed()));

  std::vector<eval::SimilarityRow> rows(manifest.entries.size());
  parallel_for(rows.size(), static_cast<std::size_t>(ctx.workers()), [&](std::size_t i) {
    const auto pair = load_pair(manifest, i);
    rows[i].id = item_id(manifest.entries[i]);
    rows[i].sim = eval::feature_similarity(pair.clean, pair.adv, purifier.purify(pair.adv),
                                           *reg.encoder);
  });
  write_text(ctx.out_dir / "similarity.csv", eval::emit_similarity_csv(rows));

  eval::ScatterSeries po{"purified-original", {}, {0.1f, 0.5f, 0.1f}};
  eval::ScatterSeries pa{"purified-adversarial", {}, {0.8f, 0.2f, 0.1f}};
  eval::ScatterSeries np{"noise-perturbation", {}, {0.1f, 0.3f, 0.8f}};
  std::size_t flagged = 0;
  for (const auto& r : rows) {
    po.values.push_back(r.sim.sim_purified_original);
    pa.values.push_back(r.sim.sim_purified_adversarial);
    np.values.push_back(r.sim.sim_noise_perturbation);
    if (r.sim.flagged) ++flagged;
  }
  const std::vector<eval::ScatterSeries> image_series{po, pa};
  eval::write_scatter_png(ctx.out_dir / "similarity_images.png", image_series, -1.0, 1.0);
  eval::write_scatter_png(ctx.out_dir / "similarity_noise.png",
                          std::vector<eval::ScatterSeries>{np}, -1.0, 1.0);

  const json summary{{"n", rows.size()},
                     {"flagged", flagged},
                     {"median_sim_po", eval::median(po.values)},
                     {"median_sim_pa", eval::median(pa.values)},
                     {"median_sim_np", eval::median(np.values)}};
  write_text(ctx.out_dir / "summary.json", summary.dump(2) + "\n");
  ctx.results["summary"] = summary;
  *ctx.out << fmt::format("median sim_po {:.4f}, sim_pa {:.4f}, sim_np {:.4f} over {} items\n",
                          eval::median(po.values), eval::median(pa.values),
                          eval::median(np.values), rows.size());
}

void cmd_report(Context& ctx) {
  std::map<eval::Condition, eval::ReportRow> merged;
  for (const auto& input : ctx.inputs) {
    const auto path = ctx.resolve(input);
    std::vector<eval::ReportRow> rows;
    try {
      rows = eval::parse_report_csv(read_text(path));
    } catch (const Error& e) {
      throw e.in_context(path.string());
    }
    for (const auto& row : rows) {
      const auto [it, inserted] = merged.emplace(row.condition, row);
      if (!inserted && !(it->second == row)) {
        throw Error(ErrorCode::kSchemaError,
                    fmt::format("{}: conflicting rows for {}/{}/{}", path.string(),
                                row.condition.model, row.condition.attack, row.condition.method));
      }
    }
  }
  std::vector<eval::ReportRow> rows;
  for (auto& [_, row] : merged) rows.push_back(row);
  const auto csv = eval::emit_report_csv(rows);
  write_text(ctx.out_dir / "report.csv", csv);
  const auto md = eval::emit_report_markdown(rows);
  write_text(ctx.out_dir / "report.md", md.text);
  for (const auto& cell : md.incomplete) *ctx.err << "warning: missing cell " << cell << "\n";
  ctx.results["rows"] = rows.size();
  ctx.results["report_hash"] = hash_text(csv);
  *ctx.out << md.text;
}

}  // namespace codefend::cli
