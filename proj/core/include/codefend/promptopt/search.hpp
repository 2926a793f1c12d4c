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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "codefend/core/image.hpp"
#include "codefend/promptopt/prompt_space.hpp"

namespace codefend::promptopt {

// What the scorer is asked about: the query appended after the prompt, the
// (purified) image and the reference answer tokens.
struct ScoringContext {
  const ImageTensor* image = nullptr;
  Tokens query;
  Tokens y_true;
};

struct Edit {
  int round = 0;
  std::size_t position = 0;
  TokenId old_token = 0;
  TokenId new_token = 0;

  friend bool operator==(const Edit&, const Edit&) = default;
};

struct Beam {
  Tokens tokens;
  double loss = 0.0;
  std::vector<Edit> history;
};

struct Candidate {
  TokenId token = 0;
  double predicted_delta = 0.0;
};

// First-order HotFlip shortlist for one position:
//   delta(e_new) = (e_new - e_cur)^T dL/de_cur.
// Swaps violating the distance bound are dropped before truncation to k;
// ordering is ascending delta with ties to the lower token id.
// Throws PositionNotMutable for non-trigger positions.
std::vector<Candidate> hotflip_candidates(const Beam& beam, std::size_t position,
                                          const ScoringOracle& oracle, const PromptSpace& space,
                                          const ScoringContext& ctx, std::size_t k);

struct BeamRoundOptions {
  std::size_t beam_width = 4;
  std::size_t candidates_per_position = 16;
  int round = 1;
  int workers = 1;
};

// Expands every beam by single-token swaps at every trigger position, scores
// each expansion with the true oracle loss and keeps the best beam_width
// sequences of parents plus expansions (duplicates removed). Ordering is
// ascending loss, ties broken by lexicographically smaller token sequence.
std::vector<Beam> beam_round(const std::vector<Beam>& beams, const ScoringOracle& oracle,
                             const PromptSpace& space, const ScoringContext& ctx,
                             const BeamRoundOptions& options);

struct OptimizeConfig {
  int rounds = 3;
  std::size_t beam_width = 4;
  std::size_t candidates_per_position = 16;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct TraceRow {
  int round = 0;
  std::size_t beam_rank = 0;
  double loss = 0.0;
  Tokens tokens;
};

struct PromptRecord {
  std::string id;
  Tokens base;
  Tokens optimized;
  double base_loss = 0.0;
  double final_loss = 0.0;
  int rounds = 0;
  double constraint_slack = 0.0;
  // Set when the distance bound left no token other than the current one.
  bool no_feasible_candidate = false;
  std::vector<Edit> history;
};

struct OptimizeResult {
  PromptRecord record;
  std::vector<TraceRow> trace;
};

OptimizeResult optimize_prompt(const ImageTensor& image, const Tokens& query, const Tokens& y_true,
                               const ScoringOracle& oracle, const PromptSpace& space,
                               const OptimizeConfig& config);

// JSON-lines writers/readers. Trace rows: round, beam_rank, loss, tokens.
std::string serialize_trace(const std::vector<TraceRow>& trace);
void write_trace(const std::vector<TraceRow>& trace, const std::filesystem::path& path);
std::vector<TraceRow> read_trace(const std::filesystem::path& path);

std::string serialize_prompt_records(const std::vector<PromptRecord>& records);
void write_prompt_records(const std::vector<PromptRecord>& records,
                          const std::filesystem::path& path);
std::vector<PromptRecord> read_prompt_records(const std::filesystem::path& path);

}  // namespace codefend::promptopt
