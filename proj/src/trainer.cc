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

#include "ag4/trainer.h"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include "ag4/binary_io.h"
#include "ag4/rng.h"

namespace ag4 {

// ---- schedule ------------------------------------------------------------------

namespace schedule_detail {

double warmup_branch(std::int64_t step, const TrainConfig& cfg) {
  if (cfg.warmup_steps == 0) return cfg.init_lr;
  const double frac = static_cast<double>(cfg.warmup_steps - step) /
                      static_cast<double>(cfg.warmup_steps);
  return cfg.init_lr - (cfg.init_lr - cfg.warmup_lr) * frac;
}

double cosine_branch(std::int64_t step, std::int64_t total_steps,
                     const TrainConfig& cfg) {
  const double progress = static_cast<double>(step - cfg.warmup_steps) /
                          static_cast<double>(total_steps - cfg.warmup_steps);
  const double cosv = std::cos(std::numbers::pi * progress);
  return cfg.init_lr - (cfg.init_lr - cfg.min_lr) * 0.5 * (1.0 - cosv);
}

}  // namespace schedule_detail

double lr_at(std::int64_t step, std::int64_t total_steps, const TrainConfig& cfg) {
  if (total_steps <= cfg.warmup_steps) {
    throw std::invalid_argument("lr_at: total_steps " + std::to_string(total_steps) +
                                " must exceed warmup_steps " +
                                std::to_string(cfg.warmup_steps));
  }
  if (step < 0 || step > total_steps) {
    throw std::out_of_range("lr_at: step " + std::to_string(step) + " outside [0, " +
                            std::to_string(total_steps) + "]");
  }
  if (step < cfg.warmup_steps) return schedule_detail::warmup_branch(step, cfg);
  return schedule_detail::cosine_branch(step, total_steps, cfg);
}

// ---- optimizer ------------------------------------------------------------------

void adamw_step(std::span<NamedTensor> params, AdamState& state, double lr,
                const TrainConfig& cfg) {
  const std::int64_t t = state.t + 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (auto& [path, tensor] : params) {
    const std::size_t n = tensor.numel();
    auto [it, inserted] = state.moments.try_emplace(path);
    Moments& mom = it->second;
    if (inserted) {
      mom.m.assign(n, 0.0);
      mom.v.assign(n, 0.0);
    }
    if (mom.m.size() != n || mom.v.size() != n) {
      throw ShapeError("adamw_step: moments for " + path + " hold " +
                       std::to_string(mom.m.size()) + " values, parameter has " +
                       std::to_string(n));
    }
    if (tensor.has_grad() && tensor.grad().size() != n) {
      throw ShapeError("adamw_step: gradient shape mismatch for " + path);
    }
    const bool has_grad = tensor.has_grad();
    std::span<const double> g = has_grad ? tensor.grad() : std::span<const double>{};
    auto p = tensor.mutable_data();
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = has_grad ? g[i] : 0.0;
      mom.m[i] = cfg.beta1 * mom.m[i] + (1.0 - cfg.beta1) * gi;
      mom.v[i] = cfg.beta2 * mom.v[i] + (1.0 - cfg.beta2) * gi * gi;
      const double m_hat = mom.m[i] / bc1;
      const double v_hat = mom.v[i] / bc2;
      p[i] -= lr * (m_hat / (std::sqrt(v_hat) + cfg.adam_eps) + cfg.weight_decay * p[i]);
    }
  }
  state.t = t;
}

// ---- sequences ------------------------------------------------------------------

std::string to_string(Stage stage) {
  return stage == Stage::kStage1 ? "stage1" : "stage2";
}

SequenceInput stage1_sequence(const Model& model, const Example& ex) {
  return caption_sequence(visual_prefix(model, ex.image), ex.caption);
}

SequenceInput stage2_sequence(const Model& model, const Example& ex,
                              const std::vector<int>& instruction) {
  std::vector<int> lead{kBosToken};
  lead.insert(lead.end(), instruction.begin(), instruction.end());
  // The response is the caption without its leading BOS.
  std::vector<int> response(ex.caption.begin() + (ex.caption.empty() ? 0 : 1),
                            ex.caption.end());
  return templated_sequence(std::move(lead), visual_prefix(model, ex.image),
                            std::move(response));
}

// ---- trainer ----------------------------------------------------------------------

Trainer::Trainer(Model& model, ParamPolicy policy, RunConfig config, Stage stage,
                 InstructionPool pool)
    : model_(model),
      policy_(std::move(policy)),
      config_(std::move(config)),
      stage_(stage),
      pool_(std::move(pool)) {
  config_.train.validate();
  if (stage_ == Stage::kStage2 && pool_.empty()) {
    throw std::invalid_argument("stage 2 training needs a non-empty instruction pool");
  }
  apply_policy(model_, policy_);
}

void Trainer::resume(const Checkpoint& ckpt) {
  if (ckpt.stage != stage_) {
    throw std::invalid_argument("resume: checkpoint is " + to_string(ckpt.stage) +
                                ", trainer runs " + to_string(stage_));
  }
  if (ckpt.config_digest != config_digest(config_)) {
    throw std::invalid_argument("resume: checkpoint config digest " +
                                to_hex(ckpt.config_digest) +
                                " does not match this run's configuration");
  }
  load_weights(model_, ckpt.weights);
  state_ = ckpt.optimizer;
  if (state_.t != ckpt.step) {
    throw std::invalid_argument("resume: optimizer step disagrees with checkpoint step");
  }
}

SequenceInput Trainer::sequence_for(const Example& ex, std::size_t instruction) const {
  if (stage_ == Stage::kStage1) return stage1_sequence(model_, ex);
  return stage2_sequence(model_, ex, pool_[instruction]);
}

LossRecord Trainer::train_step(std::span<const Example> data) {
  if (data.empty()) throw std::invalid_argument("training dataset is empty");
  const std::int64_t step = state_.t;
  if (step >= total_steps()) {
    throw std::out_of_range("train_step: schedule of " + std::to_string(total_steps()) +
                            " steps is exhausted");
  }
  const double lr = lr_at(step, total_steps(), config_.train);

  // Batch composition depends only on (seed, stage, step), which makes
  // resumed runs replay exactly.
  Rng rng(mix_seed(mix_seed(config_.train.seed, static_cast<std::uint64_t>(stage_)),
                   static_cast<std::uint64_t>(step)));
  auto params = model_.named_parameters();
  std::vector<NamedTensor> trainable;
  for (auto& p : params) {
    if (policy_.trainable(p.path)) {
      p.tensor.clear_grad();
      trainable.push_back(p);
    }
  }

  const auto batch = static_cast<std::size_t>(config_.train.batch_size);
  Tensor total;
  for (std::size_t b = 0; b < batch; ++b) {
    const auto idx = static_cast<std::size_t>(rng.below(data.size()));
    const std::size_t instr = stage_ == Stage::kStage2 ? rng.below(pool_.size()) : 0;
    Tensor loss = model_forward(model_.lm, sequence_for(data[idx], instr)).loss;
    total = total.defined() ? add(total, loss) : loss;
  }
  total = scale(total, 1.0 / static_cast<double>(batch));
  backward(total);
  adamw_step(trainable, state_, lr, config_.train);
  for (auto& p : trainable) p.tensor.clear_grad();
  return LossRecord{step, stage_, lr, total.item()};
}

std::vector<LossRecord> Trainer::run(std::span<const Example> data,
                                     std::optional<std::int64_t> until) {
  const std::int64_t end = until.value_or(total_steps());
  if (end > total_steps()) {
    throw std::out_of_range("run: requested step " + std::to_string(end) +
                            " beyond schedule of " + std::to_string(total_steps()));
  }
  if (data.empty()) throw std::invalid_argument("training dataset is empty");
  std::vector<LossRecord> trace;
  while (state_.t < end) trace.push_back(train_step(data));
  return trace;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.stage = stage_;
  c.step = state_.t;
  c.config_digest = config_digest(config_);
  c.weights = collect_weights(model_);
  c.optimizer = state_;
  return c;
}

double Trainer::evaluate(std::span<const Example> data) const {
  if (data.empty()) throw std::invalid_argument("evaluate: dataset is empty");
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    total += model_forward(model_.lm, sequence_for(data[i], i % pool_.size()))
                 .loss.item();
  }
  return total / static_cast<double>(data.size());
}

double Trainer::token_accuracy(std::span<const Example> data) const {
  std::size_t hits = 0, count = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    SequenceInput in = sequence_for(data[i], i % pool_.size());
    Tensor logits = model_forward(model_.lm, in).logits;
    const std::size_t v = logits.cols();
    for (std::size_t r = 0; r < in.targets.size(); ++r) {
      if (in.targets[r] < 0) continue;
      std::size_t best = 0;
      for (std::size_t j = 1; j < v; ++j) {
        if (logits.at(r, j) > logits.at(r, best)) best = j;
      }
      hits += static_cast<int>(best) == in.targets[r];
      ++count;
    }
  }
  return count ? static_cast<double>(hits) / static_cast<double>(count) : 0.0;
}

TrainResult train_stage1(Model& model, const ParamPolicy& policy,
                         std::span<const Example> data, const RunConfig& config) {
  if (data.empty()) throw std::invalid_argument("train_stage1: dataset is empty");
  Trainer trainer(model, policy, config, Stage::kStage1);
  auto trace = trainer.run(data);
  return {trainer.checkpoint(), std::move(trace)};
}

TrainResult train_stage2(Model& model, const ParamPolicy& policy,
                         std::span<const Example> data, const RunConfig& config,
                         const InstructionPool& pool) {
  if (data.empty()) throw std::invalid_argument("train_stage2: dataset is empty");
  Trainer trainer(model, policy, config, Stage::kStage2, pool);
  auto trace = trainer.run(data);
  return {trainer.checkpoint(), std::move(trace)};
}

void load_weights(Model& model, const std::vector<NamedArray>& weights) {
  auto params = model.named_parameters();
  if (params.size() != weights.size()) {
    throw std::invalid_argument("load_weights: checkpoint holds " +
                                std::to_string(weights.size()) +
                                " arrays, model has " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [path, tensor] = params[i];
    if (weights[i].path != path || weights[i].shape != tensor.shape()) {
      throw std::invalid_argument("load_weights: expected " + path + " " +
                                  shape_to_string(tensor.shape()) + ", found " +
                                  weights[i].path + " " +
                                  shape_to_string(weights[i].shape));
    }
    std::copy(weights[i].data.begin(), weights[i].data.end(),
              tensor.mutable_data().begin());
  }
}

std::vector<NamedArray> collect_weights(const Model& model) {
  std::vector<NamedArray> out;
  for (const auto& [path, tensor] : model.named_parameters()) {
    out.push_back({path, tensor.shape(),
                   std::vector<double>(tensor.data().begin(), tensor.data().end())});
  }
  return out;
}

std::string loss_trace_csv(const std::vector<LossRecord>& trace) {
  std::string out = "step,stage,lr,loss\n";
  char buf[128];
  for (const auto& r : trace) {
    std::snprintf(buf, sizeof buf, "%lld,%s,%.17g,%.17g\n",
                  static_cast<long long>(r.step), to_string(r.stage).c_str(), r.lr,
                  r.loss);
    out += buf;
  }
  return out;
}

// ---- checkpoint files ----------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[] = "AG4CKPT1";
constexpr const char* kWeightPrefix = "model/";
constexpr const char* kMomentMPrefix = "adam.m/";
constexpr const char* kMomentVPrefix = "adam.v/";

void write_array(ByteWriter& w, const std::string& path, const Shape& shape,
                 std::span<const double> data) {
  w.u32(static_cast<std::uint32_t>(path.size()));
  w.text(path);
  w.u32(static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) w.u32(static_cast<std::uint32_t>(d));
  for (double v : data) w.f64(v);
}

bool starts_with(const std::string& s, const char* prefix) {
  return s.rfind(prefix, 0) == 0;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.text({kCheckpointMagic, 8});
  w.u8(kCheckpointVersion);
  w.bytes(ckpt.config_digest);
  w.u8(static_cast<std::uint8_t>(ckpt.stage));
  w.u64(static_cast<std::uint64_t>(ckpt.step));
  w.u64(static_cast<std::uint64_t>(ckpt.optimizer.t));
  const auto n_arrays = ckpt.weights.size() + 2 * ckpt.optimizer.moments.size();
  w.u32(static_cast<std::uint32_t>(n_arrays));
  for (const auto& a : ckpt.weights) write_array(w, kWeightPrefix + a.path, a.shape, a.data);
  for (const auto& [path, mom] : ckpt.optimizer.moments) {
    write_array(w, kMomentMPrefix + path, {mom.m.size()}, mom.m);
  }
  for (const auto& [path, mom] : ckpt.optimizer.moments) {
    write_array(w, kMomentVPrefix + path, {mom.v.size()}, mom.v);
  }
  const Digest check = sha256(w.buffer());
  w.bytes(check);
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.text(8, "magic") != std::string_view(kCheckpointMagic, 8)) {
    throw FormatError("checkpoint: bad magic (section 'magic')");
  }
  const auto version = r.u8("version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version) +
                      " (section 'version')");
  }
  Checkpoint c;
  auto digest = r.bytes(32, "config digest");
  std::copy(digest.begin(), digest.end(), c.config_digest.begin());
  const auto tag = r.u8("stage tag");
  if (tag != 1 && tag != 2) {
    throw FormatError("checkpoint: invalid stage tag " + std::to_string(tag) +
                      " (section 'stage tag')");
  }
  c.stage = static_cast<Stage>(tag);
  c.step = static_cast<std::int64_t>(r.u64("step"));
  c.optimizer.t = static_cast<std::int64_t>(r.u64("optimizer step"));
  const std::uint32_t n_arrays = r.u32("array count");
  for (std::uint32_t i = 0; i < n_arrays; ++i) {
    const std::string where = "array " + std::to_string(i);
    const std::uint32_t len = r.u32(where + " path");
    const std::string path = r.text(len, where + " path");
    const std::string named = "array '" + path + "'";
    const std::uint32_t rank = r.u32(named + " rank");
    if (rank > 8) throw FormatError("checkpoint: implausible rank in " + named);
    Shape shape(rank);
    for (auto& d : shape) d = r.u32(named + " dims");
    std::vector<double> data(shape_numel(shape));
    if (r.remaining() < data.size() * 8) {
      throw FormatError("checkpoint: truncated data in section '" + named + "'");
    }
    for (auto& v : data) v = r.f64(named + " data");
    if (starts_with(path, kWeightPrefix)) {
      c.weights.push_back({path.substr(6), std::move(shape), std::move(data)});
    } else if (starts_with(path, kMomentMPrefix)) {
      c.optimizer.moments[path.substr(7)].m = std::move(data);
    } else if (starts_with(path, kMomentVPrefix)) {
      c.optimizer.moments[path.substr(7)].v = std::move(data);
    } else {
      throw FormatError("checkpoint: unknown array " + named);
    }
  }
  const std::size_t body = r.position();
  auto stored = r.bytes(32, "payload checksum");
  const Digest actual = sha256(bytes.first(body));
  if (!std::equal(actual.begin(), actual.end(), stored.begin())) {
    throw FormatError("checkpoint: payload checksum mismatch (section 'payload checksum')");
  }
  if (r.remaining() != 0) {
    throw FormatError("checkpoint: trailing bytes after payload checksum");
  }
  for (const auto& [path, mom] : c.optimizer.moments) {
    if (mom.m.size() != mom.v.size()) {
      throw FormatError("checkpoint: moment arrays for '" + path + "' disagree");
    }
  }
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  write_file_bytes(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace ag4
