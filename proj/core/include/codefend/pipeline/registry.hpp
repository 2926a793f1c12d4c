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

#include <initializer_list>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "codefend/attack/oracle.hpp"
#include "codefend/core/config.hpp"
#include "codefend/pipeline/providers.hpp"
#include "codefend/prefixgen/prefix_lm.hpp"
#include "codefend/promptopt/prompt_space.hpp"
#include "codefend/purifier/purifier.hpp"
#include "codefend/surrogate/toy_world.hpp"

namespace codefend::pipeline {

enum class Role { kVictim, kEncoder, kScorer, kPrefixLm, kPurifier, kAttackOracle };

std::string_view role_name(Role role);

// Role -> implementation bindings for one run.
struct ProviderRegistry {
  std::shared_ptr<const VictimVlm> victim;
  std::shared_ptr<const VisionEncoder> encoder;
  std::shared_ptr<const promptopt::ScoringOracle> scorer;
  // Base prefix LM without an adapter.
  std::shared_ptr<const prefixgen::PrefixLm> prefix_lm;
  std::optional<purifier::PurifierBackend> purifier;
  // White-box surrogate used only to forge attacks, never by the defense.
  std::shared_ptr<const attack::GradOracle> attack_oracle;
  // Set when the toy world backs any role.
  std::shared_ptr<const surrogate::ToyVlm> toy;

  bool has(Role role) const;
  // Throws UnresolvedRole listing every missing role.
  void require(std::initializer_list<Role> roles) const;
  // The text tower of the encoder; throws EncoderFailure if it has none.
  const VisionTextEncoder& text_encoder() const;

  // Builds providers from "providers.<role> = <name>" bindings plus
  // provider settings ("toy.*", "purifier.*", "lm.*"). Throws
  // UnknownProvider for names it does not know.
  static ProviderRegistry from_config(const Config& config);
};

// Every key from_config reads, with its default value.
Config default_provider_config();

}  // namespace codefend::pipeline
