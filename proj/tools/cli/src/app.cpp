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

#include "codefend/cli/app.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <fstream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "codefend/cli/default_config.hpp"
#include "codefend/core/error.hpp"
#include "commands.hpp"

extern char** environ;

namespace codefend::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

constexpr std::string_view kEnvPrefix = "CODEFEND_";

struct Options {
  std::string config_file;
  std::string workdir = ".";
  std::string out;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::map<std::string, std::string> paths;
  std::vector<std::string> inputs;
  std::string split = "test";
  std::optional<int> count;
  std::optional<int> epochs;
  std::optional<int> limit;
  std::optional<double> lr;
  std::optional<std::string> method;
  bool allow_degraded = false;
};

using Command = void (*)(Context&);

struct Subcommand {
  const char* name;
  const char* description;
  Command run;
};

constexpr Subcommand kSubcommands[] = {
    {"attack-gen", "Forge adversarial/clean pairs and write a manifest", cmd_attack_gen},
    {"train-purifier", "Train the instruction-guided purifier on a manifest", cmd_train_purifier},
    {"optimize-prompts", "Search defensive prompts on purified images", cmd_optimize_prompts},
    {"build-prefix-data", "Turn optimized prompts into prefix-generator samples",
     cmd_build_prefix_data},
    {"train-prefix", "Fine-tune the prefix generator with LoRA", cmd_train_prefix},
    {"defend", "Run purify -> prefix -> victim over a manifest", cmd_defend},
    {"evaluate", "Score undefended and defended answers and write reports", cmd_evaluate},
    {"analyze-features", "Visual-feature similarity of purified images", cmd_analyze_features},
    {"report", "Merge report.csv files into one table", cmd_report},
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void add_path(CLI::App* sub, Options& o, const std::string& name, const std::string& help,
              bool required = false) {
  auto* opt = sub->add_option("--" + name, o.paths[name], help);
  if (required) opt->required();
}

void configure(CLI::App* sub, const std::string& name, Options& o) {
  sub->add_option("--config", o.config_file, "Configuration file layered over the defaults");
  sub->add_option("--workdir", o.workdir, "Directory relative paths are resolved against");
  sub->add_option("--set", o.sets, "Override a configuration key (key=value)");
  sub->add_option("--seed", o.seed, "Run seed (run.seed)");
  sub->add_option("--workers", o.workers, "Worker threads for batch stages (run.workers)");
  sub->add_option("--out", o.out, "Output directory")->required();

  if (name == "attack-gen") {
    sub->add_option("--count", o.count, "Number of generated images (data.count)");
    add_path(sub, o, "images", "Directory of clean images instead of generated ones");
  } else if (name == "train-purifier") {
    add_path(sub, o, "manifest", "Pair manifest", true);
    sub->add_option("--epochs", o.epochs, "Training epochs (purifier.epochs)");
    sub->add_option("--lr", o.lr, "Learning rate (purifier.learning_rate)");
  } else if (name == "optimize-prompts") {
    add_path(sub, o, "manifest", "Pair manifest", true);
    add_path(sub, o, "purifier", "Purifier checkpoint applied before scoring");
    sub->add_option("--limit", o.limit, "Maximum items (promptopt.max_items)");
    sub->add_option("--split", o.split, "Manifest split: train, test or all")
        ->check(CLI::IsMember({"train", "test", "all"}));
    o.split = "train";
  } else if (name == "build-prefix-data") {
    add_path(sub, o, "prompts", "prompts.jsonl from optimize-prompts", true);
    add_path(sub, o, "queries", "queries.jsonl from optimize-prompts", true);
  } else if (name == "train-prefix") {
    add_path(sub, o, "data", "prefix_data.jsonl from build-prefix-data", true);
    sub->add_option("--epochs", o.epochs, "Training epochs (prefix.epochs)");
    sub->add_option("--lr", o.lr, "Learning rate (prefix.learning_rate)");
  } else if (name == "defend" || name == "evaluate") {
    add_path(sub, o, "manifest", "Pair manifest", true);
    add_path(sub, o, "purifier", "Purifier checkpoint (identity when omitted)");
    add_path(sub, o, "adapter", "Prefix adapter checkpoint (no prefix when omitted)");
    sub->add_option("--split", o.split, "Manifest split: train, test or all")
        ->check(CLI::IsMember({"train", "test", "all"}));
    sub->add_flag("--allow-degraded", o.allow_degraded,
                  "Answer without a prefix when prefix generation fails");
    if (name == "evaluate") sub->add_option("--method", o.method, "Method label (eval.method)");
  } else if (name == "analyze-features") {
    add_path(sub, o, "manifest", "Pair manifest", true);
    add_path(sub, o, "purifier", "Purifier checkpoint", true);
    sub->add_option("--split", o.split, "Manifest split: train, test or all")
        ->check(CLI::IsMember({"train", "test", "all"}));
  } else if (name == "report") {
    sub->add_option("--inputs", o.inputs, "report.csv files to merge")->required();
  }
}

Config flag_layer(const std::string& command, const Options& o) {
  Config c;
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw UsageError(fmt::format("--set expects key=value, got '{}'", kv));
    }
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) c.set("run.seed", std::to_string(*o.seed));
  if (o.workers) c.set("run.workers", std::to_string(*o.workers));
  if (o.count) c.set("data.count", std::to_string(*o.count));
  if (o.limit) c.set("promptopt.max_items", std::to_string(*o.limit));
  const std::string section = command == "train-prefix" ? "prefix" : "purifier";
  if (o.epochs) c.set(section + ".epochs", std::to_string(*o.epochs));
  if (o.lr) c.set(section + ".learning_rate", fmt::format("{}", *o.lr));
  if (o.allow_degraded) c.set("defense.allow_degraded", "true");
  if (o.method) c.set("eval.method", *o.method);
  return c;
}

void merge_checked(Config& base, const Config& layer, std::string_view source) {
  const auto unknown = layer.unknown_keys(base);
  if (!unknown.empty()) {
    std::string list;
    for (const auto& k : unknown) list += (list.empty() ? "" : ", ") + k;
    throw UsageError(fmt::format("unknown configuration key(s) from {}: {}", source, list));
  }
  base.merge(layer);
}

void write_file(const fs::path& path, std::string_view text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw Error(ErrorCode::kIoError, fmt::format("cannot write {}", path.string()));
}

}  // namespace

Config default_config() { return Config::parse(kDefaultConfigText, "<defaults>"); }

Config config_from_env(const EnvMap& env) {
  Config c;
  for (const auto& [name, value] : env) {
    if (name.rfind(kEnvPrefix, 0) != 0) continue;
    const auto rest = name.substr(kEnvPrefix.size());
    const auto sep = rest.find("__");
    if (sep == std::string::npos || sep == 0 || sep + 2 >= rest.size()) continue;
    std::string key = rest.substr(0, sep) + "." + rest.substr(sep + 2);
    std::transform(key.begin(), key.end(), key.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    c.set(key, value);
  }
  return c;
}

EnvMap process_environment() {
  EnvMap env;
  for (char** e = environ; e != nullptr && *e != nullptr; ++e) {
    const std::string_view entry(*e);
    const auto eq = entry.find('=');
    if (eq == std::string_view::npos) continue;
    env.emplace(entry.substr(0, eq), entry.substr(eq + 1));
  }
  return env;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const EnvMap& env) {
  const auto started = std::chrono::steady_clock::now();
  CLI::App app{"codefend: adversarial purification and defensive prompting for VLMs",
               "codefend"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", CODEFEND_GIT_DESCRIBE);

  std::map<std::string, CLI::App*> subs;
  for (const auto& s : kSubcommands) {
    auto* sub = app.add_subcommand(s.name, s.description);
    subs[s.name] = sub;
  }

  // Each subcommand gets its own option storage; only the selected one is used.
  std::map<std::string, Options> per_command;
  for (auto& [name, sub] : subs) configure(sub, name, per_command[name]);

  auto help_target = [&]() -> const CLI::App* {
    for (auto& [name, sub] : subs) {
      if (sub->parsed()) return sub;
    }
    return &app;
  };

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << help_target()->help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << CODEFEND_GIT_DESCRIBE << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::vector<std::string> extras = app.remaining();
    for (auto& [name, sub] : subs) {
      const auto rest = sub->remaining();
      extras.insert(extras.end(), rest.begin(), rest.end());
    }
    err << "error: ";
    if (extras.empty()) {
      err << e.what();
    } else {
      err << "unrecognized argument(s):";
      for (const auto& x : extras) err << ' ' << x;
    }
    err << "\n\n" << help_target()->help();
    return kExitUsageError;
  }

  const CLI::App* selected = help_target();
  const std::string command = selected->get_name();
  const Options& options = per_command.at(command);
  const Subcommand* spec = nullptr;
  for (const auto& s : kSubcommands) {
    if (command == s.name) spec = &s;
  }

  Context ctx;
  ctx.command = command;
  ctx.workdir = options.workdir;
  ctx.out = &out;
  ctx.err = &err;
  ctx.split = options.split;
  ctx.inputs = options.inputs;
  for (const auto& [k, v] : options.paths) {
    if (!v.empty()) ctx.paths[k] = v;
  }

  try {
    Config cfg = default_config();
    if (!options.config_file.empty()) {
      merge_checked(cfg, Config::load(ctx.resolve(options.config_file)), options.config_file);
    }
    merge_checked(cfg, config_from_env(env), "environment");
    merge_checked(cfg, flag_layer(command, options), "command line");
    cfg.get_u64("run.seed");
    if (cfg.get_int("run.workers") < 1) throw UsageError("run.workers must be at least 1");
    ctx.config = std::move(cfg);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << selected->help();
    return kExitUsageError;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n\n" << selected->help();
    return kExitUsageError;
  }

  ctx.out_dir = ctx.resolve(options.out);
  std::error_code ec;
  fs::create_directories(ctx.out_dir, ec);
  if (ec) {
    err << fmt::format("error: cannot create {}: {}\n", ctx.out_dir.string(), ec.message());
    return kExitDomainError;
  }

  int code = kExitOk;
  std::string failure;
  try {
    write_file(ctx.out_dir / "config.effective", ctx.config.dump());
    spec->run(ctx);
  } catch (const Error& e) {
    failure = e.what();
    code = kExitDomainError;
  } catch (const std::exception& e) {
    failure = fmt::format("internal error: {}", e.what());
    code = kExitDomainError;
  }
  if (code != kExitOk) err << "error: " << failure << "\n";

  const double elapsed_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started)
          .count();
  json run_json{{"command", command},
                {"args", args},
                {"seed", ctx.config.get_u64("run.seed")},
                {"workers", ctx.config.get_int("run.workers")},
                {"git_describe", CODEFEND_GIT_DESCRIBE},
                {"config", ctx.config.entries()},
                {"status", code == kExitOk ? "ok" : "error"},
                {"results", ctx.results},
                {"timings_ms", {{"total", elapsed_ms}}}};
  if (code != kExitOk) run_json["error"] = failure;
  try {
    write_file(ctx.out_dir / "run.json", run_json.dump(2) + "\n");
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitDomainError;
  }
  return code;
}

}  // namespace codefend::cli
