/*
 * Copyright 2026 The milsed Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "milsed/data.h"
#include "milsed/model.h"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace milsed {

struct TrainConfig {
  ModelConfig model;
  double lr = 0.0018;
  int batch_size = 64;
  double lr_decay = 0.8;  // multiplier applied every `decay_every` epochs
  int decay_every = 10;
  int patience = 10;
  int max_epochs = 100;
  std::uint64_t seed = 0;

  void validate() const;
  /// Learning rate used during 1-based `epoch`.
  double lr_at(int epoch) const;
};

/// A training example: input features plus 0/1 clip targets (1 x C).
struct Sample {
  std::string clip_id;
  Matrix features;
  RowVector targets;
};

std::vector<Sample> load_samples(const DatasetManifest& manifest);

/// Mean over classes of -[y log p + (1 - y) log(1 - p)], p clamped to
/// [1e-7, 1 - 1e-7].
double bce_loss(const RowVector& clip_probs, const RowVector& targets);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long long step = 0;
  std::map<std::string, std::pair<Matrix, Matrix>> moments;
};

/// One bias-corrected Adam update of every trainable parameter from its
/// accumulated gradient.
void adam_step(ParameterSet& params, AdamState& state, double lr);

/// Tracks the best validation score; stops after `patience` epochs without a
/// strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  /// Returns true if `score` is a new best.
  bool update(double score);
  bool should_stop() const { return since_best_ >= patience_; }
  double best() const { return best_; }
  int since_best() const { return since_best_; }

 private:
  int patience_;
  double best_ = -1.0;
  int since_best_ = 0;
  bool seen_ = false;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_macro_f1 = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  Model model;  // best-validation snapshot
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_macro_f1 = 0.0;
};

/// Optional per-epoch observer (epoch record, current model).
using EpochCallback = std::function<void(const EpochRecord&, const Model&)>;

/// Clip-level macro F1 of `model` on `samples` at threshold alpha.
double clip_macro_f1(Model& model, const std::vector<Sample>& samples,
                     double alpha = kDefaultAlpha);

/// Trains from scratch. `alloc` must be consistent with config.model (use
/// make_allocation).
TrainResult train(const TrainConfig& config, const DFAllocation& alloc,
                  const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const EpochCallback& on_epoch = nullptr);

/// DF allocation from training weak labels (or the trivial one when DF is off).
DFAllocation make_allocation(const ModelConfig& config,
                             const std::vector<std::vector<int>>& train_weak);

/// History CSV "epoch,train_loss,val_macro_f1,lr".
std::string format_history(const std::vector<EpochRecord>& history);

struct Checkpoint {
  TrainConfig config;
  std::vector<std::string> class_names;
  DFAllocation allocation;
  std::vector<double> durations;  // per-class mean event length, may be empty
  double frame_hop = 0.02;
  ParameterSet params;

  Model model() const;
};

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Config echo as JSON text (stable key order).
std::string config_to_json(const TrainConfig& config);
TrainConfig config_from_json(const std::string& text);

}  // namespace milsed
