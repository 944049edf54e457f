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

#include "ag4/rubric.h"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

namespace ag4::rubric {

using nlohmann::json;

std::string_view key(Benchmark b) {
  switch (b) {
    case Benchmark::kIdc: return "idc";
    case Benchmark::kIsac: return "isac";
    case Benchmark::kIcrc: return "icrc";
    case Benchmark::kMdiuc: return "mdiuc";
  }
  return "";
}

std::string_view label(Benchmark b) {
  switch (b) {
    case Benchmark::kIdc: return "IDC";
    case Benchmark::kIsac: return "ISAC";
    case Benchmark::kIcrc: return "ICRC";
    case Benchmark::kMdiuc: return "MDIUC";
  }
  return "";
}

std::string_view title(Benchmark b) {
  switch (b) {
    case Benchmark::kIdc: return "Image Depiction Capability";
    case Benchmark::kIsac: return "Image Sentiment Analysis Capability";
    case Benchmark::kIcrc: return "Image Content Recognition Capability";
    case Benchmark::kMdiuc: return "Multi-round Dialogue Image Understanding Capability";
  }
  return "";
}

std::size_t item_count(Benchmark b) {
  switch (b) {
    case Benchmark::kIdc: return 10;
    case Benchmark::kIsac: return 10;
    case Benchmark::kIcrc: return 5;
    case Benchmark::kMdiuc: return 2;
  }
  return 0;
}

const std::array<std::string_view, 6>& levels(Benchmark b) {
  static const std::array<std::string_view, 6> kIdc = {
      "No image description capability",
      "Description does not match real image representation",
      "Partial image description",
      "Complete image description without appreciation information",
      "Complete image description at the human level of appreciation",
      "Complete image description surpassing the human level of appreciation, "
      "such as an artist.",
  };
  static const std::array<std::string_view, 6> kIsac = {
      "Can't describe the feelings about the picture",
      "Can describe the relevant emotion but no logical proof (e.g.: the picture "
      "is seen... So people will have a kind of... emotion)",
      "Can describe the relevant emotion and justify it. But the description is "
      "not perfect",
      "The individuals in the images or the viewer's emotions can be described "
      "perfectly and justified.",
      "Can describe all the emotions as an ordinary person and justify them.",
      "Can describe all emotions perfectly and justifiably and full of art.",
  };
  static const std::array<std::string_view, 6> kIcrc = {
      "No image content recognition capability",
      "Some objects/scenes are recognized but with significant errors or omissions",
      "Most objects/scenes are recognized with some errors or omissions",
      "All objects/scenes are recognized with few errors or omissions",
      "All objects/scenes are recognized with high accuracy and speed, comparable "
      "to a human observer",
      "All objects/scenes are recognized with high accuracy, speed, and contextual "
      "understanding, surpassing the performance of a human observer.",
  };
  static const std::array<std::string_view, 6> kMdiuc = {
      "No image understanding capability in the dialogue",
      "Partial image understanding, but unable to carry on the dialogue smoothly",
      "Able to understand the image to some extent and carry on the dialogue with "
      "some coherence, but lacks understanding of some key points",
      "Can understand the image and carry on the dialogue smoothly, but with some "
      "minor misunderstandings or mistakes",
      "Can understand the image and carry on the dialogue smoothly, with accurate "
      "understanding and good coherence",
      "Can understand the image and carry on the dialogue smoothly, with accurate "
      "understanding, good coherence, and creative responses.",
  };
  switch (b) {
    case Benchmark::kIdc: return kIdc;
    case Benchmark::kIsac: return kIsac;
    case Benchmark::kIcrc: return kIcrc;
    case Benchmark::kMdiuc: return kMdiuc;
  }
  return kIdc;
}

const std::vector<int>& ScoreSheet::scores(Benchmark b) const {
  switch (b) {
    case Benchmark::kIdc: return idc;
    case Benchmark::kIsac: return isac;
    case Benchmark::kIcrc: return icrc;
    case Benchmark::kMdiuc: return mdiuc;
  }
  return idc;
}

std::string Violation::to_string() const {
  std::string out = benchmark;
  if (index >= 0) out += "[" + std::to_string(index) + "]";
  out += ": " + message;
  if (!value.empty()) out += " (got " + value + ")";
  return out;
}

namespace {

std::string join_violations(const std::string& model,
                            const std::vector<Violation>& violations) {
  std::string out = "invalid scoresheet";
  if (!model.empty()) out += " '" + model + "'";
  out += ":";
  for (const auto& v : violations) out += "\n  " + v.to_string();
  return out;
}

std::vector<int>* field(ScoreSheet& s, Benchmark b) {
  return const_cast<std::vector<int>*>(&s.scores(b));
}

}  // namespace

ValidationError::ValidationError(std::string model, std::vector<Violation> violations)
    : std::runtime_error(join_violations(model, violations)),
      violations_(std::move(violations)) {}

ScoreSheet validate_scoresheet(const json& raw) {
  std::vector<Violation> violations;
  ScoreSheet sheet;
  if (!raw.is_object()) {
    throw ValidationError("", {{"scoresheet", -1, raw.dump(), "expected a JSON object"}});
  }
  static const std::set<std::string> kKeys = {"model_name", "idc", "isac", "icrc",
                                              "mdiuc", "reported_overall"};
  for (const auto& [k, v] : raw.items()) {
    if (!kKeys.count(k)) violations.push_back({k, -1, "", "unexpected key"});
  }
  if (!raw.contains("model_name") || !raw["model_name"].is_string() ||
      raw["model_name"].get<std::string>().empty()) {
    violations.push_back({"model_name", -1,
                          raw.contains("model_name") ? raw["model_name"].dump() : "",
                          "must be a non-empty string"});
  } else {
    sheet.model_name = raw["model_name"].get<std::string>();
  }
  if (raw.contains("reported_overall")) {
    const json& r = raw["reported_overall"];
    if (!r.is_number() || r.get<double>() < kMinScore || r.get<double>() > kMaxScore) {
      violations.push_back({"reported_overall", -1, r.dump(), "must be a number in [0, 5]"});
    } else {
      sheet.reported_overall = r.get<double>();
    }
  }
  for (Benchmark b : kBenchmarks) {
    const std::string k(key(b));
    if (!raw.contains(k)) {
      violations.push_back({k, -1, "", "missing benchmark"});
      continue;
    }
    const json& list = raw[k];
    if (!list.is_array()) {
      violations.push_back({k, -1, list.dump(), "expected a list of scores"});
      continue;
    }
    if (list.size() != item_count(b)) {
      violations.push_back({k, -1, std::to_string(list.size()),
                            "expected exactly " + std::to_string(item_count(b)) +
                                " items"});
    }
    auto* out = field(sheet, b);
    for (std::size_t i = 0; i < list.size(); ++i) {
      const json& v = list[i];
      const int idx = static_cast<int>(i);
      if (!v.is_number_integer()) {
        // 3.0 parses as a float; only whole JSON integers are scores.
        violations.push_back({k, idx, v.dump(), "score must be an integer"});
        continue;
      }
      const auto s = v.get<std::int64_t>();
      if (s < kMinScore || s > kMaxScore) {
        violations.push_back({k, idx, v.dump(), "score outside [0, 5]"});
        continue;
      }
      out->push_back(static_cast<int>(s));
    }
  }
  if (!violations.empty()) throw ValidationError(sheet.model_name, std::move(violations));
  return sheet;
}

ScoreSheet load_scoresheet(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scoresheet '" + path + "'");
  json raw;
  try {
    raw = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("", {{"scoresheet", -1, "", path + ": invalid JSON: " + e.what()}});
  }
  return validate_scoresheet(raw);
}

Fraction benchmark_average_exact(const std::vector<int>& scores) {
  if (scores.empty()) throw std::invalid_argument("benchmark_average: empty score list");
  std::int64_t total = 0;
  for (int s : scores) total += s;
  return {total, static_cast<std::int64_t>(scores.size())};
}

double benchmark_average(const std::vector<int>& scores) {
  return benchmark_average_exact(scores).value();
}

Fraction overall_score_exact(const ScoreSheet& sheet) {
  // sum_b (S_b / n_b) / 4 over a common denominator.
  std::int64_t den = 1;
  for (Benchmark b : kBenchmarks) {
    den = std::lcm(den, benchmark_average_exact(sheet.scores(b)).den);
  }
  std::int64_t num = 0;
  for (Benchmark b : kBenchmarks) {
    const Fraction f = benchmark_average_exact(sheet.scores(b));
    num += f.num * (den / f.den);
  }
  return {num, den * static_cast<std::int64_t>(kBenchmarks.size())};
}

double overall_score(const ScoreSheet& sheet) {
  double total = 0.0;
  for (Benchmark b : kBenchmarks) total += benchmark_average(sheet.scores(b));
  return total / static_cast<double>(kBenchmarks.size());
}

std::string format_half_up(const Fraction& f, int decimals) {
  if (f.num < 0 || f.den <= 0) throw std::invalid_argument("format_half_up: negative value");
  std::int64_t scale = 1;
  for (int i = 0; i < decimals; ++i) scale *= 10;
  // round(num * scale / den) with ties upward, in integers.
  const std::int64_t scaled = (2 * f.num * scale + f.den) / (2 * f.den);
  std::string out = std::to_string(scaled / scale);
  if (decimals > 0) {
    std::string frac = std::to_string(scaled % scale);
    out += "." + std::string(decimals - frac.size(), '0') + frac;
  }
  return out;
}

std::string format_overall(const Fraction& f) {
  std::string s = format_half_up(f, 2);
  if (s.back() == '0') s.pop_back();
  return s;
}

namespace {

std::string pad(const std::string& s, std::size_t width, bool left = true) {
  if (s.size() >= width) return s;
  return left ? s + std::string(width - s.size(), ' ')
              : std::string(width - s.size(), ' ') + s;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string signed_fraction(const Fraction& a, const Fraction& b) {
  // a - b, both over possibly different denominators.
  const std::int64_t den = std::lcm(a.den, b.den);
  const std::int64_t num = a.num * (den / a.den) - b.num * (den / b.den);
  const Fraction mag{num < 0 ? -num : num, den};
  return (num < 0 ? "-" : "+") + format_overall(mag);
}

}  // namespace

BenchmarkReport render_report(const std::vector<ScoreSheet>& sheets) {
  if (sheets.empty()) throw std::invalid_argument("render_report: no scoresheets");
  std::set<std::string> names;
  for (const auto& s : sheets) {
    if (!names.insert(s.model_name).second) {
      throw std::invalid_argument("render_report: duplicate model_name '" +
                                  s.model_name + "'");
    }
  }
  std::size_t name_w = 5;
  for (const auto& s : sheets) name_w = std::max(name_w, s.model_name.size());

  BenchmarkReport report;
  std::ostringstream text;
  std::ostringstream items("model,benchmark,item,score\n", std::ios::ate);
  std::ostringstream summary("model,benchmark,average\n", std::ios::ate);

  for (const auto& s : sheets) {
    ModelSummary m;
    m.model_name = s.model_name;
    for (std::size_t i = 0; i < kBenchmarks.size(); ++i) {
      m.averages[i] = benchmark_average(s.scores(kBenchmarks[i]));
    }
    m.overall = overall_score(s);
    report.models.push_back(m);
  }

  for (Benchmark b : kBenchmarks) {
    const std::size_t n = item_count(b);
    text << label(b) << " - " << title(b) << "\n";
    text << pad("Items", name_w);
    for (std::size_t i = 1; i <= n; ++i) text << "  " << pad(std::to_string(i), 2, false);
    text << "  Average\n";
    for (const auto& s : sheets) {
      const auto& scores = s.scores(b);
      text << pad(s.model_name, name_w);
      for (std::size_t i = 0; i < scores.size(); ++i) {
        text << "  " << pad(std::to_string(scores[i]), 2, false);
        items << csv_field(s.model_name) << ',' << key(b) << ',' << (i + 1) << ','
              << scores[i] << '\n';
      }
      const std::string avg = format_half_up(benchmark_average_exact(scores), 1);
      text << "  " << pad(avg, 7, false) << "\n";
      summary << csv_field(s.model_name) << ',' << key(b) << ',' << avg << '\n';
    }
    text << "\n";
  }

  text << "Overall (mean of the four benchmark averages)\n";
  text << pad("Model", name_w);
  for (Benchmark b : kBenchmarks) text << "  " << pad(std::string(label(b)), 5, false);
  text << "  Overall\n";
  std::size_t best = 0;
  for (std::size_t k = 0; k < sheets.size(); ++k) {
    const auto& s = sheets[k];
    text << pad(s.model_name, name_w);
    for (Benchmark b : kBenchmarks) {
      text << "  " << pad(format_half_up(benchmark_average_exact(s.scores(b)), 1), 5, false);
    }
    const Fraction overall = overall_score_exact(s);
    text << "  " << pad(format_overall(overall), 7, false) << "\n";
    summary << csv_field(s.model_name) << ",overall," << format_overall(overall) << '\n';
    if (report.models[k].overall > report.models[best].overall) best = k;
  }

  std::ostringstream notes;
  for (const auto& s : sheets) {
    if (!s.reported_overall) continue;
    const Fraction overall = overall_score_exact(s);
    const double reported = *s.reported_overall;
    if (std::abs(reported - overall.value()) > 1e-9) {
      std::ostringstream r;
      r << reported;
      notes << "  " << s.model_name << ": reported overall " << r.str()
            << " differs from the recomputed " << format_overall(overall) << "\n";
    }
  }
  if (sheets.size() > 1) {
    const Fraction top = overall_score_exact(sheets[best]);
    for (std::size_t k = 0; k < sheets.size(); ++k) {
      if (k == best) continue;
      notes << "  " << sheets[k].model_name << " vs " << sheets[best].model_name << ": "
            << signed_fraction(overall_score_exact(sheets[k]), top) << "\n";
    }
  }
  if (!notes.str().empty()) text << "\nNotes\n" << notes.str();

  report.text = text.str();
  report.items_csv = items.str();
  report.summary_csv = summary.str();
  return report;
}

}  // namespace ag4::rubric
