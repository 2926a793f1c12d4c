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

#include "codefend/pipeline/registry.hpp"

#include <fmt/format.h>

#include "codefend/core/error.hpp"

namespace codefend::pipeline {
namespace {

std::shared_ptr<const surrogate::ToyVlm> toy_world(ProviderRegistry& reg, const Config& cfg) {
  if (!reg.toy) {
    surrogate::ToyWorldConfig wc;
    wc.seed = cfg.get_u64("toy.seed", wc.seed);
    wc.height = static_cast<int>(cfg.get_int("toy.height", wc.height));
    wc.width = static_cast<int>(cfg.get_int("toy.width", wc.width));
    reg.toy = std::make_shared<const surrogate::ToyVlm>(wc);
  }
  return reg.toy;
}

[[noreturn]] void unknown(Role role, const std::string& name) {
  throw Error(ErrorCode::kUnknownProvider,
              fmt::format("no provider '{}' for role {}", name, role_name(role)));
}

std::string binding(const Config& cfg, Role role) {
  return cfg.get_string(fmt::format("providers.{}", role_name(role)), "");
}

}  // namespace

std::string_view role_name(Role role) {
  switch (role) {
    case Role::kVictim: return "victim";
    case Role::kEncoder: return "encoder";
    case Role::kScorer: return "scorer";
    case Role::kPrefixLm: return "prefix_lm";
    case Role::kPurifier: return "purifier";
    case Role::kAttackOracle: return "attack_oracle";
  }
  return "unknown";
}

bool ProviderRegistry::has(Role role) const {
  switch (role) {
    case Role::kVictim: return victim != nullptr;
    case Role::kEncoder: return encoder != nullptr;
    case Role::kScorer: return scorer != nullptr;
    case Role::kPrefixLm: return prefix_lm != nullptr;
    case Role::kPurifier: return purifier.has_value();
    case Role::kAttackOracle: return attack_oracle != nullptr;
  }
  return false;
}

void ProviderRegistry::require(std::initializer_list<Role> roles) const {
  std::string missing;
  for (Role r : roles) {
    if (has(r)) continue;
    if (!missing.empty()) missing += ", ";
    missing += role_name(r);
  }
  if (!missing.empty()) {
    throw Error(ErrorCode::kUnresolvedRole, fmt::format("no provider bound for: {}", missing));
  }
}

const VisionTextEncoder& ProviderRegistry::text_encoder() const {
  require({Role::kEncoder});
  const auto* enc = dynamic_cast<const VisionTextEncoder*>(encoder.get());
  if (enc == nullptr) {
    throw Error(ErrorCode::kEncoderFailure,
                fmt::format("encoder '{}' has no text tower", encoder->name()));
  }
  return *enc;
}

Config default_provider_config() {
  return Config::parse(R"(
providers.victim = toy-vlm
providers.encoder = toy-clip
providers.scorer = toy-vlm
providers.prefix_lm = tiny-lm
providers.purifier = conv-eps
providers.attack_oracle = toy-vlm
toy.seed = 7
toy.height = 32
toy.width = 32
purifier.codec_factor = 4
purifier.hidden = 16
purifier.schedule_steps = 50
purifier.predictor_seed = 1
lm.layers = 2
lm.d_model = 64
lm.heads = 4
lm.ffn = 1536
lm.max_len = 64
lm.seed = 1
)",
                       "<provider defaults>");
}

ProviderRegistry ProviderRegistry::from_config(const Config& config) {
  Config cfg = default_provider_config();
  cfg.merge(config);
  ProviderRegistry reg;

  if (const auto name = binding(cfg, Role::kVictim); !name.empty()) {
    if (name != "toy-vlm") unknown(Role::kVictim, name);
    reg.victim = std::make_shared<const surrogate::ToyVictim>(toy_world(reg, cfg));
  }
  if (const auto name = binding(cfg, Role::kEncoder); !name.empty()) {
    if (name != "toy-clip") unknown(Role::kEncoder, name);
    reg.encoder = std::make_shared<const surrogate::ToyClipEncoder>(toy_world(reg, cfg));
  }
  if (const auto name = binding(cfg, Role::kScorer); !name.empty()) {
    if (name != "toy-vlm") unknown(Role::kScorer, name);
    reg.scorer = std::make_shared<const surrogate::ToyVlmScorer>(toy_world(reg, cfg));
  }
  if (const auto name = binding(cfg, Role::kAttackOracle); !name.empty()) {
    if (name != "toy-vlm") unknown(Role::kAttackOracle, name);
    reg.attack_oracle = std::make_shared<const surrogate::ToyVlmOracle>(toy_world(reg, cfg));
  }
  if (const auto name = binding(cfg, Role::kPrefixLm); !name.empty()) {
    if (name != "tiny-lm") unknown(Role::kPrefixLm, name);
    auto tok = std::make_shared<const prefixgen::WordTokenizer>(
        prefixgen::WordTokenizer::surrogate());
    prefixgen::TinyLmConfig lc;
    lc.layers = static_cast<int>(cfg.get_int("lm.layers"));
    lc.d_model = static_cast<int>(cfg.get_int("lm.d_model"));
    lc.heads = static_cast<int>(cfg.get_int("lm.heads"));
    lc.ffn = static_cast<int>(cfg.get_int("lm.ffn"));
    lc.max_len = static_cast<int>(cfg.get_int("lm.max_len"));
    lc.seed = cfg.get_u64("lm.seed");
    auto base = std::make_shared<const prefixgen::TinyLm>(tok->vocab_size(), lc);
    reg.prefix_lm = std::make_shared<const prefixgen::PrefixLm>(
        tok, base, cfg.get_string("prefix.template", std::string(prefixgen::kDefaultTemplate)));
  }
  if (const auto name = binding(cfg, Role::kPurifier); !name.empty()) {
    if (name != "conv-eps") unknown(Role::kPurifier, name);
    const auto schedule = purifier::DiffusionSchedule::cosine(
        static_cast<int>(cfg.get_int("purifier.schedule_steps")));
    purifier::ConvPredictorConfig pc;
    pc.hidden = static_cast<int>(cfg.get_int("purifier.hidden"));
    pc.seed = cfg.get_u64("purifier.predictor_seed");
    reg.purifier = purifier::PurifierBackend{
        std::make_shared<const purifier::DownscaleCodec>(
            static_cast<int>(cfg.get_int("purifier.codec_factor"))),
        std::make_shared<purifier::ConvNoisePredictor>(pc, schedule), schedule};
  }
  return reg;
}

}  // namespace codefend::pipeline
