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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "codefend/eval/metrics.hpp"

namespace codefend::eval {

inline constexpr std::string_view kReportHeader =
    "model,attack,method,clip_score,asr_pct,vqa_acc_pct,n";
inline constexpr std::string_view kSimilarityHeader = "id,sim_po,sim_pa,sim_np,flagged";

struct ReportRow {
  Condition condition;
  double clip_score = 0.0;
  std::optional<double> asr_pct;
  std::optional<double> vqa_acc_pct;
  std::size_t n = 0;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

// One row per condition, in order of first appearance. ASR is reported when
// every record of the condition is targeted, VQA accuracy when every record
// carries a verdict.
std::vector<ReportRow> aggregate(std::span<const EvalRecord> records);

// Numbers are written with two decimals; parse(emit(rows)) re-emits
// identically.
std::string emit_report_csv(std::span<const ReportRow> rows);
// Throws SchemaError (with line number) on malformed input.
std::vector<ReportRow> parse_report_csv(std::string_view text);

// "100%" for whole percentages, two decimals otherwise.
std::string format_percent(double pct);
// "61.46/100%" when ASR is present, "61.46" otherwise.
std::string format_cell(const ReportRow& row);

struct MarkdownReport {
  std::string text;
  // One entry per (attack, method, model) cell missing from the grid.
  std::vector<std::string> incomplete;
};

// One table per attack: methods down, models across. Missing cells render
// as an em dash and are listed in `incomplete`.
MarkdownReport emit_report_markdown(std::span<const ReportRow> rows);

struct SimilarityRow {
  std::string id;
  SimilarityTriple sim;
};

std::string emit_similarity_csv(std::span<const SimilarityRow> rows);

struct ScatterSeries {
  std::string label;
  std::vector<double> values;
  // RGB in [0,1].
  float color[3] = {0.f, 0.f, 0.f};
};

// Per-sample scatter (sample index across, value up) with a labelled
// y-axis over [y_min, y_max], written as PNG.
void write_scatter_png(const std::filesystem::path& path, std::span<const ScatterSeries> series,
                       double y_min, double y_max);

}  // namespace codefend::eval
