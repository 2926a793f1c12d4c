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

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "codefend/core/config.hpp"

namespace codefend::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomainError = 1;
inline constexpr int kExitUsageError = 2;

using EnvMap = std::map<std::string, std::string>;

// The built-in defaults (config/codefend.conf).
Config default_config();

// CODEFEND_<SECTION>__<KEY>=value overrides section.key (lower-cased).
Config config_from_env(const EnvMap& env);
EnvMap process_environment();

// Entry point of the codefend tool. args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const EnvMap& env);

}  // namespace codefend::cli
