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

#include "codefend/promptopt/search.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <json.hpp>

#include "codefend/core/error.hpp"
#include "codefend/core/parallel.hpp"

namespace codefend::promptopt {
namespace {

using nlohmann::json;

bool beam_less(const Beam& a, const Beam& b) {
  if (a.loss != b.loss) return a.loss < b.loss;
  return a.tokens < b.tokens;
}

template <typename Fn>
auto with_context(const std::string& where, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw e.in_context(where);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::kOracleFailure, fmt::format("{}: {}", where, e.what()));
  }
}

double checked_loss(const ScoringOracle& oracle, const Tokens& prompt, const ScoringContext& ctx) {
  const double loss = oracle.loss(prompt, ctx.query, *ctx.image, ctx.y_true);
  if (!std::isfinite(loss)) throw Error(ErrorCode::kOracleFailure, "non-finite scorer loss");
  return loss;
}

void check_context(const ScoringContext& ctx) {
  if (ctx.image == nullptr) throw Error(ErrorCode::kInvalidArgument, "scoring context has no image");
}

std::size_t effective_workers(const ScoringOracle& oracle, int workers) {
  return oracle.concurrent_safe() ? static_cast<std::size_t>(std::max(1, workers)) : 1;
}

json trace_row_json(const TraceRow& row) {
  return {{"round", row.round}, {"beam_rank", row.beam_rank}, {"loss", row.loss},
          {"tokens", row.tokens}};
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kMissingFile, fmt::format("cannot open {}", path.string()));
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

void write_text(const std::string& text, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, fmt::format("cannot write {}", path.string()));
  out << text;
  if (!out) throw Error(ErrorCode::kIoError, fmt::format("failed writing {}", path.string()));
}

}  // namespace

std::vector<Candidate> hotflip_candidates(const Beam& beam, std::size_t position,
                                          const ScoringOracle& oracle, const PromptSpace& space,
                                          const ScoringContext& ctx, std::size_t k) {
  check_context(ctx);
  if (!space.is_trigger(position)) {
    throw Error(ErrorCode::kPositionNotMutable,
                fmt::format("position {} is not a trigger position", position));
  }
  if (k > space.vocab.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("k={} exceeds vocab size {}", k, space.vocab.size()));
  }
  const TokenId current = beam.tokens.at(position);
  const auto grad = oracle.grad_wrt_embedding(beam.tokens, ctx.query, *ctx.image, ctx.y_true,
                                              position);
  if (grad.size() != space.table->dim()) {
    throw Error(ErrorCode::kOracleFailure,
                fmt::format("gradient of length {} for embedding dim {}", grad.size(),
                            space.table->dim()));
  }
  const auto e_cur = space.table->row(current);

  std::set<TokenId> vocab(space.vocab.begin(), space.vocab.end());
  Tokens probe = beam.tokens;
  std::vector<Candidate> out;
  for (TokenId v : vocab) {
    probe[position] = v;
    if (prompt_distance(space, probe) > space.delta_bound) continue;
    const auto e_new = space.table->row(v);
    double delta = 0.0;
    for (std::size_t i = 0; i < grad.size(); ++i) delta += (e_new[i] - e_cur[i]) * grad[i];
    out.push_back({v, delta});
  }
  std::sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
    if (a.predicted_delta != b.predicted_delta) return a.predicted_delta < b.predicted_delta;
    return a.token < b.token;
  });
  if (out.size() > k) out.resize(k);
  return out;
}

std::vector<Beam> beam_round(const std::vector<Beam>& beams, const ScoringOracle& oracle,
                             const PromptSpace& space, const ScoringContext& ctx,
                             const BeamRoundOptions& options) {
  check_context(ctx);
  if (beams.empty()) throw Error(ErrorCode::kInvalidArgument, "beam_round needs at least one beam");
  if (options.beam_width == 0) throw Error(ErrorCode::kInvalidArgument, "beam_width must be >= 1");
  for (const auto& b : beams) {
    if (prompt_distance(space, b.tokens) > space.delta_bound) {
      throw Error(ErrorCode::kInvalidArgument, "input beam violates the distance bound");
    }
  }
  const std::size_t workers = effective_workers(oracle, options.workers);
  const std::size_t k = std::min(options.candidates_per_position, space.vocab.size());

  struct Task {
    std::size_t beam;
    std::size_t position;
  };
  std::vector<Task> tasks;
  for (std::size_t b = 0; b < beams.size(); ++b) {
    for (auto p : space.trigger_positions) tasks.push_back({b, p});
  }
  std::vector<std::vector<Candidate>> shortlists(tasks.size());
  parallel_for(tasks.size(), workers, [&](std::size_t i) {
    const auto& task = tasks[i];
    shortlists[i] = with_context(
        fmt::format("beam {} position {}", task.beam, task.position),
        [&] { return hotflip_candidates(beams[task.beam], task.position, oracle, space, ctx, k); });
  });

  std::set<Tokens> seen;
  std::vector<Beam> pool;
  for (const auto& b : beams) {
    if (seen.insert(b.tokens).second) pool.push_back(b);
  }
  const std::size_t num_parents = pool.size();
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const Beam& parent = beams[tasks[i].beam];
    const std::size_t pos = tasks[i].position;
    for (const auto& c : shortlists[i]) {
      if (c.token == parent.tokens[pos]) continue;
      Beam child;
      child.tokens = parent.tokens;
      child.tokens[pos] = c.token;
      if (!seen.insert(child.tokens).second) continue;
      child.history = parent.history;
      child.history.push_back({options.round, pos, parent.tokens[pos], c.token});
      pool.push_back(std::move(child));
    }
  }
  parallel_for(pool.size() - num_parents, workers, [&](std::size_t i) {
    Beam& child = pool[num_parents + i];
    child.loss = with_context(fmt::format("expansion {}", i),
                              [&] { return checked_loss(oracle, child.tokens, ctx); });
  });

  std::sort(pool.begin(), pool.end(), beam_less);
  if (pool.size() > options.beam_width) pool.resize(options.beam_width);
  return pool;
}

OptimizeResult optimize_prompt(const ImageTensor& image, const Tokens& query, const Tokens& y_true,
                               const ScoringOracle& oracle, const PromptSpace& space,
                               const OptimizeConfig& config) {
  space.validate();
  if (config.rounds < 0 || config.beam_width == 0 || config.candidates_per_position == 0) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("bad search config (rounds={}, beam={}, candidates={})",
                            config.rounds, config.beam_width, config.candidates_per_position));
  }
  const ScoringContext ctx{&image, query, y_true};

  OptimizeResult result;
  PromptRecord& rec = result.record;
  rec.base = space.base_prompt;
  rec.base_loss = with_context("base prompt", [&] { return checked_loss(oracle, rec.base, ctx); });
  rec.rounds = config.rounds;

  Tokens probe = rec.base;
  bool feasible = false;
  for (auto p : space.trigger_positions) {
    for (TokenId v : space.vocab) {
      if (v == rec.base[p]) continue;
      probe[p] = v;
      feasible = feasible || prompt_distance(space, probe) <= space.delta_bound;
    }
    probe[p] = rec.base[p];
  }
  rec.no_feasible_candidate = !feasible;

  std::vector<Beam> beams{Beam{rec.base, rec.base_loss, {}}};
  result.trace.push_back({0, 0, rec.base_loss, rec.base});
  for (int r = 1; r <= config.rounds && feasible; ++r) {
    beams = beam_round(beams, oracle, space, ctx,
                       {config.beam_width, config.candidates_per_position, r, config.workers});
    for (std::size_t i = 0; i < beams.size(); ++i) {
      result.trace.push_back({r, i, beams[i].loss, beams[i].tokens});
    }
  }

  const Beam& best = beams.front();
  rec.optimized = best.tokens;
  rec.final_loss = best.loss;
  rec.history = best.history;
  const double dist = prompt_distance(space, rec.optimized);
  if (dist > space.delta_bound || rec.final_loss > rec.base_loss) {
    throw std::logic_error("prompt search returned an infeasible or worse prompt");
  }
  rec.constraint_slack = space.delta_bound - dist;
  return result;
}

std::string serialize_trace(const std::vector<TraceRow>& trace) {
  std::ostringstream out;
  for (const auto& row : trace) out << trace_row_json(row).dump() << '\n';
  return out.str();
}

void write_trace(const std::vector<TraceRow>& trace, const std::filesystem::path& path) {
  write_text(serialize_trace(trace), path);
}

std::vector<TraceRow> read_trace(const std::filesystem::path& path) {
  std::vector<TraceRow> rows;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    try {
      const auto j = json::parse(lines[i]);
      rows.push_back({j.at("round").get<int>(), j.at("beam_rank").get<std::size_t>(),
                      j.at("loss").get<double>(), j.at("tokens").get<Tokens>()});
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kSchemaError,
                  fmt::format("{}:{}: {}", path.string(), i + 1, e.what()));
    }
  }
  return rows;
}

std::string serialize_prompt_records(const std::vector<PromptRecord>& records) {
  std::ostringstream out;
  for (const auto& r : records) {
    json history = json::array();
    for (const auto& e : r.history) {
      history.push_back({{"round", e.round}, {"position", e.position}, {"old", e.old_token},
                         {"new", e.new_token}});
    }
    json j = {{"id", r.id},
              {"base", r.base},
              {"optimized", r.optimized},
              {"base_loss", r.base_loss},
              {"final_loss", r.final_loss},
              {"rounds", r.rounds},
              {"constraint_slack", r.constraint_slack},
              {"no_feasible_candidate", r.no_feasible_candidate},
              {"history", history}};
    out << j.dump() << '\n';
  }
  return out.str();
}

void write_prompt_records(const std::vector<PromptRecord>& records,
                          const std::filesystem::path& path) {
  write_text(serialize_prompt_records(records), path);
}

std::vector<PromptRecord> read_prompt_records(const std::filesystem::path& path) {
  std::vector<PromptRecord> records;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    try {
      const auto j = json::parse(lines[i]);
      PromptRecord r;
      r.id = j.at("id").get<std::string>();
      r.base = j.at("base").get<Tokens>();
      r.optimized = j.at("optimized").get<Tokens>();
      r.base_loss = j.at("base_loss").get<double>();
      r.final_loss = j.at("final_loss").get<double>();
      r.rounds = j.at("rounds").get<int>();
      r.constraint_slack = j.at("constraint_slack").get<double>();
      r.no_feasible_candidate = j.at("no_feasible_candidate").get<bool>();
      for (const auto& e : j.at("history")) {
        r.history.push_back({e.at("round").get<int>(), e.at("position").get<std::size_t>(),
                             e.at("old").get<TokenId>(), e.at("new").get<TokenId>()});
      }
      records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kSchemaError,
                  fmt::format("{}:{}: {}", path.string(), i + 1, e.what()));
    }
  }
  return records;
}

}  // namespace codefend::promptopt
