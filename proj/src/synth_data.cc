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

#include "ag4/synth_data.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "ag4/rng.h"
#include "json.hpp"

namespace ag4 {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

InstructionPool default_instruction_pool() {
  // describe image / what see / tell about / caption this
  const int w = kFirstInstructionToken;
  return {{w + 0, w + 1}, {w + 2, w + 3}, {w + 4, w + 5}, {w + 6, w + 7}};
}

SyntheticImage render_image(int class_id, int intensity_id, int n_levels,
                            std::uint64_t noise_seed, std::size_t size) {
  if (class_id < 0 || class_id >= kMaxClasses || intensity_id < 0 ||
      intensity_id >= n_levels) {
    throw std::invalid_argument("render_image: class " + std::to_string(class_id) +
                                " / level " + std::to_string(intensity_id) +
                                " out of range");
  }
  const double fx = 1.0 + class_id % 4;
  const double fy = static_cast<double>(class_id / 4);
  const double amplitude = 0.9 * (intensity_id + 1) / n_levels;
  const double n = static_cast<double>(size);
  Rng rng(noise_seed);
  SyntheticImage img;
  img.height = size;
  img.width = size;
  img.class_id = class_id;
  img.intensity_id = intensity_id;
  img.pixels.resize(size * size);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double phase = 2.0 * std::numbers::pi * (fx * x + fy * y) / n;
      img.pixels[y * size + x] =
          amplitude * 0.5 * (1.0 + std::cos(phase)) + 0.05 * rng.uniform();
    }
  }
  return img;
}

std::string to_string(Split split) {
  return split == Split::kStage1 ? "stage1" : "stage2";
}

Split split_from_string(const std::string& name) {
  if (name == "stage1") return Split::kStage1;
  if (name == "stage2") return Split::kStage2;
  throw std::invalid_argument("unknown split '" + name + "'");
}

namespace {

std::string item_id(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%04zu", prefix, i);
  return buf;
}

}  // namespace

GeneratedDataset generate_dataset(const GenerateOptions& options) {
  if (options.n_items == 0) {
    throw std::invalid_argument("generate_dataset: n_items must be positive");
  }
  if (options.n_classes <= 0 || options.n_levels <= 0 ||
      options.n_classes * options.n_levels < 2) {
    throw std::invalid_argument(
        "generate_dataset: need n_classes * n_levels >= 2");
  }
  if (options.n_classes > kMaxClasses) {
    throw std::invalid_argument("generate_dataset: at most " +
                                std::to_string(kMaxClasses) + " classes");
  }
  const TokenLayout layout{options.n_classes, options.n_levels};
  if (layout.required_vocab() > options.vocab_size) {
    throw std::invalid_argument(
        "generate_dataset: vocabulary of " + std::to_string(options.vocab_size) +
        " cannot hold " + std::to_string(layout.required_vocab()) +
        " tokens (specials, instruction words, class and level labels)");
  }

  const std::size_t n_stage2 = options.n_items / 4;
  const std::size_t n_stage1 = options.n_items - n_stage2;
  Rng label_rng(mix_seed(options.seed, 0));

  GeneratedDataset out;
  for (std::size_t i = 0; i < n_stage1; ++i) {
    const int c = static_cast<int>(label_rng.below(options.n_classes));
    const int l = static_cast<int>(label_rng.below(options.n_levels));
    Example ex;
    ex.id = item_id("s1", i);
    ex.image = render_image(c, l, options.n_levels, mix_seed(options.seed, 1000 + i));
    ex.caption = {kBosToken, layout.class_token(c), layout.level_token(l), kEosToken};
    ex.split = Split::kStage1;
    out.manifest.items.push_back(
        {ex.id, "features/" + ex.id + ".feat", ex.caption, ex.split});
    out.examples.push_back(std::move(ex));
  }
  for (std::size_t j = 0; j < n_stage2; ++j) {
    const std::size_t src = j % n_stage1;
    Example ex = out.examples[src];
    ex.id = item_id("s2", j);
    ex.split = Split::kStage2;
    out.manifest.items.push_back({ex.id, out.manifest.items[src].feature_file,
                                  ex.caption, ex.split});
    out.examples.push_back(std::move(ex));
  }
  return out;
}

void write_dataset(const GeneratedDataset& data, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "features", ec);
  if (ec) {
    throw std::runtime_error("cannot create directory '" + dir + "': " + ec.message());
  }
  for (std::size_t i = 0; i < data.examples.size(); ++i) {
    const auto& item = data.manifest.items[i];
    if (data.examples[i].split == Split::kStage2) continue;  // shared file
    const auto& img = data.examples[i].image;
    write_feature_file((fs::path(dir) / item.feature_file).string(),
                       Tensor::from({img.height, img.width}, img.pixels));
  }
  const std::string text = manifest_to_jsonl(data.manifest);
  std::ofstream out(fs::path(dir) / "manifest.jsonl", std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write manifest in '" + dir + "'");
  out << text;
}

std::string manifest_to_jsonl(const DatasetManifest& manifest) {
  std::string out;
  for (const auto& item : manifest.items) {
    ordered_json j;
    j["id"] = item.id;
    j["feature_file"] = item.feature_file;
    j["caption_tokens"] = item.caption_tokens;
    j["split"] = to_string(item.split);
    out += j.dump();
    out += '\n';
  }
  return out;
}

DatasetManifest parse_manifest(const std::string& text, std::size_t vocab_size) {
  static const std::set<std::string> kKeys = {"id", "feature_file",
                                              "caption_tokens", "split"};
  DatasetManifest manifest;
  std::set<std::string> ids;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "manifest line " + std::to_string(line_no);
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ManifestError(where + ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) throw ManifestError(where + ": expected an object");
    for (const auto& [key, value] : j.items()) {
      if (!kKeys.count(key)) throw ManifestError(where + ": unexpected key '" + key + "'");
    }
    for (const auto& key : kKeys) {
      if (!j.contains(key)) throw ManifestError(where + ": missing key '" + key + "'");
    }
    ManifestItem item;
    try {
      item.id = j.at("id").get<std::string>();
      item.feature_file = j.at("feature_file").get<std::string>();
      item.caption_tokens = j.at("caption_tokens").get<std::vector<int>>();
      item.split = split_from_string(j.at("split").get<std::string>());
    } catch (const std::exception& e) {
      throw ManifestError(where + ": " + e.what());
    }
    if (!ids.insert(item.id).second) {
      throw ManifestError("manifest item '" + item.id + "': duplicate id");
    }
    for (int t : item.caption_tokens) {
      if (t < 0 || static_cast<std::size_t>(t) >= vocab_size) {
        throw ManifestError("manifest item '" + item.id + "': token id " +
                            std::to_string(t) + " outside vocabulary of " +
                            std::to_string(vocab_size));
      }
    }
    manifest.items.push_back(std::move(item));
  }
  return manifest;
}

DatasetManifest load_manifest(const std::string& path, std::size_t vocab_size) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ManifestError("cannot open manifest '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  DatasetManifest manifest = parse_manifest(buf.str(), vocab_size);
  const fs::path base = fs::path(path).parent_path();
  for (const auto& item : manifest.items) {
    if (!fs::is_regular_file(base / item.feature_file)) {
      throw ManifestError("manifest item '" + item.id + "': missing feature file '" +
                          item.feature_file + "'");
    }
  }
  return manifest;
}

std::vector<Example> load_examples(const DatasetManifest& manifest,
                                   const std::string& manifest_dir) {
  std::vector<Example> out;
  for (const auto& item : manifest.items) {
    Tensor grid = read_feature_file((fs::path(manifest_dir) / item.feature_file).string());
    Example ex;
    ex.id = item.id;
    ex.image.height = grid.rows();
    ex.image.width = grid.cols();
    ex.image.pixels.assign(grid.data().begin(), grid.data().end());
    ex.image.class_id = -1;  // not recorded in the manifest
    ex.image.intensity_id = -1;
    ex.caption = item.caption_tokens;
    ex.split = item.split;
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<Example> select_split(const std::vector<Example>& examples, Split split) {
  std::vector<Example> out;
  for (const auto& ex : examples) {
    if (ex.split == split) out.push_back(ex);
  }
  return out;
}

}  // namespace ag4
