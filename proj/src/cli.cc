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

#include "ag4/cli.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "ag4/config.h"
#include "ag4/freeze_policy.h"
#include "ag4/gradcheck.h"
#include "ag4/rubric.h"
#include "ag4/synth_data.h"
#include "ag4/trainer.h"

namespace ag4::cli {

namespace fs = std::filesystem;

namespace {

// Configuration or argument problems detected after parsing; exit 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw std::runtime_error("cannot create output directory '" + dir.string() +
                             "'" + (ec ? ": " + ec.message() : ""));
  }
}

RunConfig resolve_config(const std::string& path) {
  if (path.empty()) return profile_defaults("toy");
  if (!fs::is_regular_file(path)) throw UsageError("config file not found: " + path);
  try {
    return load_run_config(path);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
}

// ---- gen-data ---------------------------------------------------------------------

struct GenDataArgs {
  std::uint64_t seed = 7;
  long long items = 64;
  int classes = 4;
  int levels = 4;
  std::size_t vocab = 32;
  std::string out;
};

int cmd_gen_data(const GenDataArgs& a, std::ostream& out) {
  if (a.items <= 0) throw UsageError("--items must be positive");
  GenerateOptions opt;
  opt.seed = a.seed;
  opt.n_items = static_cast<std::size_t>(a.items);
  opt.n_classes = a.classes;
  opt.n_levels = a.levels;
  opt.vocab_size = a.vocab;
  GeneratedDataset data;
  try {
    data = generate_dataset(opt);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const fs::path dir = resolve_output_dir(a.out);
  ensure_dir(dir);
  write_dataset(data, dir.string());
  out << "wrote " << data.manifest.items.size() << " items to "
      << (dir / "manifest.jsonl").string() << "\n";
  return kExitOk;
}

// ---- train ------------------------------------------------------------------------

struct TrainArgs {
  int stage = 1;
  std::string config;
  std::string data;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool from_scratch = false;
  std::string init;
  std::string resume;
  std::optional<std::int64_t> steps;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig config = resolve_config(a.config);
  if (!a.preset.empty()) {
    try {
      config.preset = preset_from_string(a.preset);
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
  }
  if (a.seed) config.train.seed = *a.seed;

  const fs::path dir = resolve_output_dir(a.out);
  const fs::path manifest_path = a.data.empty() ? dir / "manifest.jsonl" : fs::path(a.data);
  if (!fs::is_regular_file(manifest_path)) {
    throw UsageError("dataset manifest not found: " + manifest_path.string());
  }
  DatasetManifest manifest;
  try {
    manifest = load_manifest(manifest_path.string(), config.model.vocab_size);
  } catch (const ManifestError& e) {
    throw UsageError(e.what());
  }
  const Split split = a.stage == 1 ? Split::kStage1 : Split::kStage2;
  auto examples =
      select_split(load_examples(manifest, manifest_path.parent_path().string()), split);
  if (examples.empty()) {
    throw UsageError("dataset has no " + to_string(split) + " items");
  }

  const Stage stage = a.stage == 1 ? Stage::kStage1 : Stage::kStage2;
  Model model = init_model(config.model, config.vision, config.train.seed);
  if (stage == Stage::kStage2 && a.resume.empty() && !a.from_scratch) {
    const fs::path init = a.init.empty() ? dir / "stage1.ckpt" : fs::path(a.init);
    if (!fs::is_regular_file(init)) {
      throw UsageError("stage 2 needs a stage-1 checkpoint (looked for " +
                       init.string() + "); pass --init or --from-scratch");
    }
    Checkpoint c = load_checkpoint(init.string());
    if (c.stage != Stage::kStage1) {
      throw UsageError(init.string() + " is not a stage-1 checkpoint");
    }
    load_weights(model, c.weights);
  }

  ParamPolicy policy = build_policy(config.model, config.vision, config.preset);
  Trainer trainer(model, policy, config, stage);
  if (!a.resume.empty()) {
    if (!fs::is_regular_file(a.resume)) throw UsageError("checkpoint not found: " + a.resume);
    try {
      trainer.resume(load_checkpoint(a.resume));
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  if (a.steps && (*a.steps < trainer.step() || *a.steps > trainer.total_steps())) {
    throw UsageError("--steps must lie in [" + std::to_string(trainer.step()) + ", " +
                     std::to_string(trainer.total_steps()) + "]");
  }

  const WeightSnapshot before = snapshot_weights(model);
  auto trace = trainer.run(examples, a.steps);
  if (!assert_frozen_unchanged(before, snapshot_weights(model), policy)) {
    throw std::logic_error("frozen parameters changed during training");
  }

  ensure_dir(dir);
  const std::string tag = "stage" + std::to_string(a.stage);
  save_checkpoint(trainer.checkpoint(), (dir / (tag + ".ckpt")).string());
  write_text(dir / (tag + "_loss.csv"), loss_trace_csv(trace));
  write_text(dir / (tag + "_params.json"), render_policy_json(policy));

  out << tag << " preset=" << to_string(config.preset) << " steps " << trainer.step()
      << "/" << trainer.total_steps() << " trainable=" << policy.trainable_count() << "\n";
  if (!trace.empty()) {
    out << "loss " << trace.front().loss << " -> " << trace.back().loss << "\n";
  }
  out << "wrote " << (dir / (tag + ".ckpt")).string() << "\n";
  return kExitOk;
}

// ---- gradcheck --------------------------------------------------------------------

struct GradcheckArgs {
  std::string config;
  double tol = kGradcheckTolerance;
  std::uint64_t seed = 0;
  std::string fault;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  RunConfig config = resolve_config(a.config);
  GradcheckFixture fx = make_gradcheck_fixture(config, a.seed);
  std::optional<ScopedBackwardFault> fault;
  if (!a.fault.empty()) fault.emplace(a.fault, 1.5);
  const auto result = gradient_check(fx.model, fx.policy, [&] { return fx.loss(); });

  std::size_t width = 5;
  for (const auto& g : result.groups) width = std::max(width, g.path.size());
  for (const auto& g : result.groups) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3e", g.max_rel_error);
    out << g.path << std::string(width - g.path.size() + 2, ' ') << buf
        << (g.max_rel_error < a.tol ? "" : "  FAIL") << "\n";
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", result.max_rel_error);
  out << "checked " << result.scalars << " scalars, max relative error " << buf
      << " (tol " << a.tol << ")\n";
  const auto failing = result.failing(a.tol);
  if (failing.empty()) return kExitOk;
  out << "failing groups:";
  for (const auto& f : failing) out << " " << f;
  out << "\n";
  return kExitCheckFailed;
}

// ---- params -----------------------------------------------------------------------

int cmd_params(const std::string& config_path, const std::string& preset, bool json,
               std::ostream& out) {
  RunConfig config = resolve_config(config_path);
  if (!preset.empty()) {
    try {
      config.preset = preset_from_string(preset);
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
  }
  ParamPolicy policy = build_policy(config.model, config.vision, config.preset);
  out << (json ? render_policy_json(policy) : render_policy_table(policy));
  return kExitOk;
}

// ---- score ------------------------------------------------------------------------

int cmd_score(const std::vector<std::string>& files, const std::string& out_flag,
              std::ostream& out, std::ostream& err) {
  if (files.empty()) throw UsageError("score: at least one scoresheet is required");
  std::vector<rubric::ScoreSheet> sheets;
  bool ok = true;
  for (const auto& f : files) {
    if (!fs::is_regular_file(f)) throw UsageError("scoresheet not found: " + f);
    try {
      sheets.push_back(rubric::load_scoresheet(f));
    } catch (const rubric::ValidationError& e) {
      err << f << ": " << e.what() << "\n";
      ok = false;
    }
  }
  if (!ok) return kExitCheckFailed;
  rubric::BenchmarkReport report;
  try {
    report = rubric::render_report(sheets);
  } catch (const std::invalid_argument& e) {
    err << e.what() << "\n";
    return kExitCheckFailed;
  }
  const fs::path dir = resolve_output_dir(out_flag);
  ensure_dir(dir);
  write_text(dir / "report.txt", report.text);
  write_text(dir / "report_items.csv", report.items_csv);
  write_text(dir / "report_summary.csv", report.summary_csv);
  out << report.text;
  return kExitOk;
}

}  // namespace

std::string resolve_output_dir(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("AG4_OUT"); env && *env) return env;
  return "ag4_out";
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adapter-tuned vision-language toy model: data, training, checks, scoring"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic image-caption dataset");
  gen_cmd->add_option("--seed", gen.seed, "Generator seed");
  gen_cmd->add_option("--items", gen.items, "Number of manifest items");
  gen_cmd->add_option("--classes", gen.classes, "Number of pattern classes");
  gen_cmd->add_option("--levels", gen.levels, "Number of intensity levels");
  gen_cmd->add_option("--vocab", gen.vocab, "Vocabulary size the captions must fit");
  gen_cmd->add_option("--out", gen.out, "Output directory (default $AG4_OUT or ag4_out)");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Run stage-1 or stage-2 training");
  train_cmd->add_option("--stage", train.stage, "Training stage")
      ->check(CLI::IsMember({1, 2}));
  train_cmd->add_option("--config", train.config, "JSON run config (default: toy profile)");
  train_cmd->add_option("--data", train.data, "Manifest path (default <out>/manifest.jsonl)");
  train_cmd->add_option("--preset", train.preset, "artgpt4 or minigpt4");
  train_cmd->add_option("--seed", train.seed, "Overrides train.seed");
  train_cmd->add_option("--out", train.out, "Output directory");
  train_cmd->add_flag("--from-scratch", train.from_scratch,
                      "Stage 2 without a stage-1 checkpoint");
  train_cmd->add_option("--init", train.init, "Stage-1 checkpoint for stage 2");
  train_cmd->add_option("--resume", train.resume, "Checkpoint of this stage to resume");
  train_cmd->add_option("--steps", train.steps, "Stop after this schedule step");

  GradcheckArgs grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  grad_cmd->add_option("--config", grad.config, "JSON run config (default: toy profile)");
  grad_cmd->add_option("--tol", grad.tol, "Maximum relative error");
  grad_cmd->add_option("--seed", grad.seed, "Model and data seed");
  grad_cmd->add_option("--inject-fault", grad.fault,
                       "Corrupt the backward rule of an op (negative control)");

  std::string params_config, params_preset;
  bool params_json = false;
  auto* params_cmd = app.add_subcommand("params", "Print the parameter policy table");
  params_cmd->add_option("--config", params_config, "JSON run config (default: toy profile)");
  params_cmd->add_option("--preset", params_preset, "artgpt4 or minigpt4");
  params_cmd->add_flag("--json", params_json, "Emit JSON instead of a table");

  std::vector<std::string> score_files;
  std::string score_out;
  auto* score_cmd = app.add_subcommand("score", "Validate scoresheets and render the report");
  score_cmd->add_option("sheets", score_files, "Scoresheet JSON files");
  score_cmd->add_option("--out", score_out, "Output directory");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen_data(gen, out);
    if (train_cmd->parsed()) return cmd_train(train, out);
    if (grad_cmd->parsed()) return cmd_gradcheck(grad, out);
    if (params_cmd->parsed()) return cmd_params(params_config, params_preset, params_json, out);
    if (score_cmd->parsed()) return cmd_score(score_files, score_out, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace ag4::cli
