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

#include "codefend/eval/report.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>

#include <fmt/format.h>

#include "codefend/core/error.hpp"
#include "codefend/core/image_io.hpp"

namespace codefend::eval {
namespace {

constexpr std::string_view kMissingCell = "—";

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) {
    throw Error(ErrorCode::kSchemaError, fmt::format("line {}: unterminated quote", line_no));
  }
  fields.push_back(std::move(cur));
  return fields;
}

double parse_number(const std::string& s, std::size_t line_no, std::string_view column) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) {
    throw Error(ErrorCode::kSchemaError,
                fmt::format("line {}: column {} has non-numeric '{}'", line_no, column, s));
  }
  return v;
}

std::string number(double v) { return fmt::format("{:.2f}", v); }

// 3x5 glyphs, rows top to bottom, 3 bits per row (MSB = left).
const std::map<char, std::array<std::uint8_t, 5>>& glyphs() {
  static const std::map<char, std::array<std::uint8_t, 5>> g = {
      {'0', {7, 5, 5, 5, 7}}, {'1', {2, 6, 2, 2, 7}}, {'2', {7, 1, 7, 4, 7}},
      {'3', {7, 1, 7, 1, 7}}, {'4', {5, 5, 7, 1, 1}}, {'5', {7, 4, 7, 1, 7}},
      {'6', {7, 4, 7, 5, 7}}, {'7', {7, 1, 1, 1, 1}}, {'8', {7, 5, 7, 5, 7}},
      {'9', {7, 5, 7, 1, 7}}, {'.', {0, 0, 0, 0, 2}}, {'-', {0, 0, 7, 0, 0}}};
  return g;
}

class Canvas {
 public:
  Canvas(int w, int h) : w_(w), h_(h), px_(std::size_t(w) * h * 3, 1.0f) {}

  void set(int x, int y, const float* rgb) {
    if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
    for (int c = 0; c < 3; ++c) px_[(std::size_t(y) * w_ + x) * 3 + c] = rgb[c];
  }
  void rect(int x0, int y0, int x1, int y1, const float* rgb) {
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) set(x, y, rgb);
  }
  void text(int x, int y, std::string_view s, const float* rgb, int scale = 2) {
    for (char ch : s) {
      const auto it = glyphs().find(ch);
      if (it != glyphs().end()) {
        for (int r = 0; r < 5; ++r)
          for (int c = 0; c < 3; ++c)
            if ((it->second[r] >> (2 - c)) & 1)
              rect(x + c * scale, y + r * scale, x + c * scale + scale - 1,
                   y + r * scale + scale - 1, rgb);
      }
      x += 4 * scale;
    }
  }
  ImageTensor image() const { return ImageTensor(h_, w_, 3, px_); }

 private:
  int w_;
  int h_;
  std::vector<float> px_;
};

}  // namespace

std::vector<ReportRow> aggregate(std::span<const EvalRecord> records) {
  struct Acc {
    double clip = 0.0;
    std::size_t n = 0, targeted = 0, hits = 0, judged = 0, correct = 0;
  };
  std::vector<Condition> order;
  std::map<Condition, Acc> acc;
  for (const auto& r : records) {
    auto [it, inserted] = acc.try_emplace(r.condition);
    if (inserted) order.push_back(r.condition);
    Acc& a = it->second;
    a.clip += r.clip_score;
    ++a.n;
    if (r.target) {
      ++a.targeted;
      a.hits += r.target_hit.value_or(target_matches(r.answer, *r.target)) ? 1 : 0;
    }
    if (r.vqa_correct) {
      ++a.judged;
      a.correct += *r.vqa_correct ? 1 : 0;
    }
  }
  std::vector<ReportRow> rows;
  for (const auto& c : order) {
    const Acc& a = acc.at(c);
    ReportRow row;
    row.condition = c;
    row.n = a.n;
    row.clip_score = a.clip / static_cast<double>(a.n);
    if (a.targeted == a.n) row.asr_pct = 100.0 * double(a.hits) / double(a.n);
    if (a.judged == a.n) row.vqa_acc_pct = 100.0 * double(a.correct) / double(a.n);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string emit_report_csv(std::span<const ReportRow> rows) {
  std::string out = std::string(kReportHeader) + "\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{}\n", csv_field(r.condition.model),
                       csv_field(r.condition.attack), csv_field(r.condition.method),
                       number(r.clip_score), r.asr_pct ? number(*r.asr_pct) : "",
                       r.vqa_acc_pct ? number(*r.vqa_acc_pct) : "", r.n);
  }
  return out;
}

std::vector<ReportRow> parse_report_csv(std::string_view text) {
  std::vector<ReportRow> rows;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != kReportHeader) {
        throw Error(ErrorCode::kSchemaError,
                    fmt::format("line {}: expected header '{}'", line_no, kReportHeader));
      }
      header_seen = true;
      continue;
    }
    const auto f = split_csv_line(line, line_no);
    if (f.size() != 7) {
      throw Error(ErrorCode::kSchemaError,
                  fmt::format("line {}: expected 7 columns, found {}", line_no, f.size()));
    }
    ReportRow r;
    r.condition = {f[0], f[1], f[2]};
    r.clip_score = parse_number(f[3], line_no, "clip_score");
    if (!f[4].empty()) r.asr_pct = parse_number(f[4], line_no, "asr_pct");
    if (!f[5].empty()) r.vqa_acc_pct = parse_number(f[5], line_no, "vqa_acc_pct");
    const double n = parse_number(f[6], line_no, "n");
    if (n < 0 || n != std::floor(n)) {
      throw Error(ErrorCode::kSchemaError, fmt::format("line {}: bad count '{}'", line_no, f[6]));
    }
    r.n = static_cast<std::size_t>(n);
    rows.push_back(std::move(r));
  }
  if (!header_seen) throw Error(ErrorCode::kSchemaError, "report CSV has no header");
  return rows;
}

std::string format_percent(double pct) {
  const double rounded = std::round(pct * 100.0) / 100.0;
  if (rounded == std::floor(rounded)) return fmt::format("{:.0f}%", rounded);
  return fmt::format("{:.2f}%", rounded);
}

std::string format_cell(const ReportRow& row) {
  if (row.asr_pct) return fmt::format("{:.2f}/{}", row.clip_score, format_percent(*row.asr_pct));
  return fmt::format("{:.2f}", row.clip_score);
}

MarkdownReport emit_report_markdown(std::span<const ReportRow> rows) {
  std::vector<std::string> attacks, models;
  std::map<std::string, std::vector<std::string>> methods;
  std::map<std::tuple<std::string, std::string, std::string>, const ReportRow*> cells;
  auto push_unique = [](std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
  };
  for (const auto& r : rows) {
    push_unique(attacks, r.condition.attack);
    push_unique(models, r.condition.model);
    push_unique(methods[r.condition.attack], r.condition.method);
    cells[{r.condition.attack, r.condition.method, r.condition.model}] = &r;
  }
  MarkdownReport out;
  for (const auto& attack : attacks) {
    out.text += fmt::format("### Attack: {}\n\n| Method |", attack);
    for (const auto& m : models) out.text += fmt::format(" {} |", m);
    out.text += "\n|---|";
    for (std::size_t i = 0; i < models.size(); ++i) out.text += "---|";
    out.text += "\n";
    for (const auto& method : methods[attack]) {
      out.text += fmt::format("| {} |", method);
      for (const auto& model : models) {
        const auto it = cells.find({attack, method, model});
        if (it == cells.end()) {
          out.text += fmt::format(" {} |", kMissingCell);
          out.incomplete.push_back(fmt::format("{}/{}/{}", attack, method, model));
        } else {
          out.text += fmt::format(" {} |", format_cell(*it->second));
        }
      }
      out.text += "\n";
    }
    out.text += "\n";
  }
  return out;
}

std::string emit_similarity_csv(std::span<const SimilarityRow> rows) {
  std::string out = std::string(kSimilarityHeader) + "\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{:.6f},{:.6f},{:.6f},{}\n", csv_field(r.id),
                       r.sim.sim_purified_original, r.sim.sim_purified_adversarial,
                       r.sim.sim_noise_perturbation, r.sim.flagged ? 1 : 0);
  }
  return out;
}

void write_scatter_png(const std::filesystem::path& path, std::span<const ScatterSeries> series,
                       double y_min, double y_max) {
  if (!(y_max > y_min)) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("bad y range [{}, {}]", y_min, y_max));
  }
  constexpr int kW = 480, kH = 320, kLeft = 56, kRight = 12, kTop = 24, kBottom = 20;
  const float black[3] = {0.f, 0.f, 0.f};
  const float grid[3] = {0.85f, 0.85f, 0.85f};
  Canvas canvas(kW, kH);
  const int plot_w = kW - kLeft - kRight;
  const int plot_h = kH - kTop - kBottom;
  auto to_y = [&](double v) {
    const double t = std::clamp((v - y_min) / (y_max - y_min), 0.0, 1.0);
    return kTop + static_cast<int>(std::lround((1.0 - t) * plot_h));
  };
  for (int i = 0; i <= 4; ++i) {
    const double v = y_min + (y_max - y_min) * i / 4.0;
    const int y = to_y(v);
    canvas.rect(kLeft, y, kLeft + plot_w, y, grid);
    canvas.text(4, y - 5, fmt::format("{:.2f}", v), black);
  }
  canvas.rect(kLeft, kTop, kLeft, kTop + plot_h, black);
  canvas.rect(kLeft, kTop + plot_h, kLeft + plot_w, kTop + plot_h, black);

  std::size_t max_n = 1;
  for (const auto& s : series) max_n = std::max(max_n, s.values.size());
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    canvas.rect(kLeft + 8 + int(k) * 40, 6, kLeft + 14 + int(k) * 40, 12, s.color);
    canvas.text(kLeft + 18 + int(k) * 40, 4, fmt::format("{}", k + 1), black);
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      const int x = kLeft + 4 +
                    static_cast<int>(std::lround(double(i) / double(std::max<std::size_t>(1, max_n - 1)) *
                                                 (plot_w - 8)));
      const int y = to_y(s.values[i]);
      canvas.rect(x - 1, y - 1, x + 1, y + 1, s.color);
    }
  }
  write_png(canvas.image(), path);
}

}  // namespace codefend::eval
