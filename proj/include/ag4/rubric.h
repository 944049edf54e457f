// Copyright 2026 The ag4 Authors.
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

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace ag4::rubric {

enum class Benchmark { kIdc, kIsac, kIcrc, kMdiuc };

inline constexpr std::array<Benchmark, 4> kBenchmarks = {
    Benchmark::kIdc, Benchmark::kIsac, Benchmark::kIcrc, Benchmark::kMdiuc};
inline constexpr int kMinScore = 0;
inline constexpr int kMaxScore = 5;

std::string_view key(Benchmark b);    // "idc", ...
std::string_view label(Benchmark b);  // "IDC", ...
std::string_view title(Benchmark b);  // long name
std::size_t item_count(Benchmark b);  // 10, 10, 5, 2
// Level descriptions 0..5 of the benchmark's scoring scale.
const std::array<std::string_view, 6>& levels(Benchmark b);

struct ScoreSheet {
  std::string model_name;
  std::vector<int> idc;
  std::vector<int> isac;
  std::vector<int> icrc;
  std::vector<int> mdiuc;
  // Optional externally published overall score, compared against the
  // recomputed value in reports.
  std::optional<double> reported_overall;

  const std::vector<int>& scores(Benchmark b) const;
};

struct Violation {
  std::string benchmark;  // benchmark key, or the offending top-level field
  int index = -1;         // item index, -1 for whole-list problems
  std::string value;      // offending value as JSON text
  std::string message;

  std::string to_string() const;
};

class ValidationError : public std::runtime_error {
 public:
  ValidationError(std::string model, std::vector<Violation> violations);
  const std::vector<Violation>& violations() const { return violations_; }

 private:
  std::vector<Violation> violations_;
};

// Collects every violation; throws ValidationError if there is any.
ScoreSheet validate_scoresheet(const nlohmann::json& raw);
ScoreSheet load_scoresheet(const std::string& path);

// Exact fraction used for rendering.
struct Fraction {
  std::int64_t num = 0;
  std::int64_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

// Arithmetic mean. Throws std::invalid_argument on an empty list.
double benchmark_average(const std::vector<int>& scores);
Fraction benchmark_average_exact(const std::vector<int>& scores);
// Mean of the four benchmark averages.
double overall_score(const ScoreSheet& sheet);
Fraction overall_score_exact(const ScoreSheet& sheet);

// Half-up rounding of a non-negative fraction to `decimals` places.
std::string format_half_up(const Fraction& f, int decimals);
// Overall scores: two decimals with one trailing zero dropped (3.40 -> 3.4).
std::string format_overall(const Fraction& f);

struct ModelSummary {
  std::string model_name;
  std::array<double, 4> averages{};  // in kBenchmarks order
  double overall = 0.0;
};

struct BenchmarkReport {
  std::vector<ModelSummary> models;
  std::string text;
  std::string items_csv;    // model,benchmark,item,score
  std::string summary_csv;  // model,benchmark,average
};

// Throws std::invalid_argument on an empty list or duplicate model names.
BenchmarkReport render_report(const std::vector<ScoreSheet>& sheets);

}  // namespace ag4::rubric
