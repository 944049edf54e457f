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

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ag4/vision_bridge.h"

namespace ag4 {

// Token layout of the toy vocabulary.
inline constexpr int kPadToken = 0;
inline constexpr int kBosToken = 1;
inline constexpr int kEosToken = 2;
inline constexpr int kFirstInstructionToken = 3;
inline constexpr int kInstructionWordCount = 8;
inline constexpr int kFirstLabelToken = kFirstInstructionToken + kInstructionWordCount;
inline constexpr int kMaxClasses = 32;

struct TokenLayout {
  int n_classes = 4;
  int n_levels = 4;

  int class_token(int class_id) const { return kFirstLabelToken + class_id; }
  int level_token(int level_id) const {
    return kFirstLabelToken + n_classes + level_id;
  }
  // Smallest vocabulary holding specials, instruction words and labels.
  std::size_t required_vocab() const {
    return static_cast<std::size_t>(kFirstLabelToken + n_classes + n_levels);
  }
};

using InstructionPool = std::vector<std::vector<int>>;

// The four caption-style instructions used for templated training.
InstructionPool default_instruction_pool();

// Class picks a cosine grating (frequency pair), intensity scales its
// amplitude, and `noise_seed` adds a small fixed jitter.
SyntheticImage render_image(int class_id, int intensity_id, int n_levels,
                            std::uint64_t noise_seed,
                            std::size_t size = 16);

enum class Split { kStage1, kStage2 };
std::string to_string(Split split);
Split split_from_string(const std::string& name);

struct Example {
  std::string id;
  SyntheticImage image;
  std::vector<int> caption;  // [BOS, class, level, EOS]
  Split split = Split::kStage1;
};

struct ManifestItem {
  std::string id;
  std::string feature_file;  // relative to the manifest's directory
  std::vector<int> caption_tokens;
  Split split = Split::kStage1;
};

struct DatasetManifest {
  std::vector<ManifestItem> items;
};

struct GenerateOptions {
  std::uint64_t seed = 7;
  std::size_t n_items = 64;
  int n_classes = 4;
  int n_levels = 4;
  std::size_t vocab_size = 32;
};

struct GeneratedDataset {
  DatasetManifest manifest;
  std::vector<Example> examples;  // parallel to manifest.items
};

// A quarter of the items (rounded down) are stage-2 items that reuse the
// images and captions of the first stage-1 items.
GeneratedDataset generate_dataset(const GenerateOptions& options);

// Writes <dir>/manifest.jsonl and the referenced feature files.
void write_dataset(const GeneratedDataset& data, const std::string& dir);

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string manifest_to_jsonl(const DatasetManifest& manifest);
// Parses and validates ids and token ranges.
DatasetManifest parse_manifest(const std::string& text, std::size_t vocab_size);
// parse_manifest plus a check that every feature file exists.
DatasetManifest load_manifest(const std::string& path, std::size_t vocab_size);

// Reads the feature files into examples. Pixel grids are square.
std::vector<Example> load_examples(const DatasetManifest& manifest,
                                   const std::string& manifest_dir);

std::vector<Example> select_split(const std::vector<Example>& examples, Split split);

}  // namespace ag4
