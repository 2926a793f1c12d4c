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

#pragma once

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "codefend/core/config.hpp"

namespace codefend::cli {

// Everything a subcommand needs: the effective configuration, resolved
// locations and a results object that ends up in run.json.
struct Context {
  std::string command;
  Config config;
  std::filesystem::path workdir;
  std::filesystem::path out_dir;
  std::map<std::string, std::string> paths;
  std::vector<std::string> inputs;
  std::string split = "test";
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;
  nlohmann::json results = nlohmann::json::object();

  std::filesystem::path resolve(const std::string& path) const;
  // Value of a path flag, or empty when it was not given.
  std::string path(const std::string& name) const;
  int workers() const;
  std::uint64_t seed() const;
};

void cmd_attack_gen(Context& ctx);
void cmd_train_purifier(Context& ctx);
void cmd_optimize_prompts(Context& ctx);
void cmd_build_prefix_data(Context& ctx);
void cmd_train_prefix(Context& ctx);
void cmd_defend(Context& ctx);
void cmd_evaluate(Context& ctx);
void cmd_analyze_features(Context& ctx);
void cmd_report(Context& ctx);

}  // namespace codefend::cli
