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

// Differentiable MIL pipeline: encoder -> pooling -> classifier, plus the
// frame-level surface used at prediction time.
//
// Parameters: "enc.*" (encoder), "cls.weight" (d x C) and "cls.bias" (1 x C)
// for the per-class classifiers G_c, "att.weight" (d x C) for the attention
// detectors w_c (atp only). Under disentangling, column c of cls.weight and
// att.weight only uses its first k_c rows; the rest is held at zero by the
// forward masks.

#pragma once

#include "milsed/decision.h"
#include "milsed/disentangle.h"
#include "milsed/encoder.h"

#include <cstdint>
#include <span>
#include <vector>

namespace milsed {

struct ModelConfig {
  EncoderConfig encoder = EncoderConfig::identity(64);
  PoolingSpec pooling;
  Index num_classes = 1;
  bool sds = false;
  /// Divide the SDS logit by the feature dimension (off: sigmoid(w . x)).
  bool sds_scaled_logits = false;
  DfMode df = DfMode::kNone;
  double m = 0.0;

  /// Rejects combinations the pipeline does not define (SDS without atp,
  /// DF outside embedding-level atp).
  void validate() const;
  DecisionSurface surface() const { return sds ? DecisionSurface::kSds : DecisionSurface::kShared; }
};

class Model {
 public:
  struct Output {
    Var clip_probs;   // 1 x C
    Var frame_probs;  // T x C, from the configured decision surface
    Var attention;    // T x C for gsp / atp, invalid otherwise
    Var reps;         // T x d
  };

  struct Inference {
    RowVector clip_probs;
    Matrix frame_probs;
    Matrix attention;
    Matrix reps;
  };

  /// Parameters drawn from `seed`. `alloc` must match the config's class count
  /// and the encoder's output dimension.
  Model(ModelConfig config, DFAllocation alloc, std::uint64_t seed);
  /// Adopts existing parameters (e.g. from a checkpoint).
  Model(ModelConfig config, DFAllocation alloc, ParameterSet params);

  Model(const Model& other);
  Model& operator=(const Model& other);

  const ModelConfig& config() const { return config_; }
  const DFAllocation& allocation() const { return alloc_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  Index dim() const { return alloc_.d; }

  std::vector<Output> forward(Graph& graph, std::span<const Matrix> batch, EncoderMode mode,
                              BatchNormStats* stats = nullptr);

  /// Inference-mode evaluation of one clip.
  Inference infer(const Matrix& features);

 private:
  Output head(Graph& graph, Var reps);

  ModelConfig config_;
  DFAllocation alloc_;
  ParameterSet params_;
  Matrix mask_;       // C x d
  RowVector scales_;  // attention logit denominators, 1 x C
};

}  // namespace milsed
