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

// Frame encoders: map a T x F feature matrix to T x d high-level
// representations without touching the time axis.

#pragma once

#include "milsed/graph.h"

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace milsed {

/// A clip's input features: one row per frame.
struct FeatureSequence {
  std::string clip_id;
  Matrix frames;
  double frame_hop = 0.02;  // seconds

  Index length() const { return frames.rows(); }
  Index bands() const { return frames.cols(); }
};

/// Encoder output x_1..x_T, one row per frame.
struct HighLevelSequence {
  std::string clip_id;
  Matrix reps;

  Index dim() const { return reps.cols(); }
};

enum class EncoderKind { kIdentity, kMlp, kCnn };
enum class Activation { kRelu, kTanh, kLinear };

std::string to_string(EncoderKind kind);
std::string to_string(Activation act);
EncoderKind parse_encoder_kind(std::string_view s);
Activation parse_activation(std::string_view s);

struct EncoderConfig {
  EncoderKind kind = EncoderKind::kCnn;
  Index input_bands = 64;
  /// cnn: output channels per block. mlp: width of each dense layer.
  std::vector<Index> channels{64, 128, 160};
  /// cnn only: frequency max-pooling factor per block.
  std::vector<Index> freq_pool{4, 4, 4};
  Activation activation = Activation::kRelu;
  double bn_eps = 1e-5;
  double bn_momentum = 0.9;

  /// Throws if the configuration cannot produce a representation.
  void validate() const;
  Index output_dim() const;

  static EncoderConfig identity(Index bands);
  static EncoderConfig mlp(Index bands, std::vector<Index> widths, Activation act);
};

enum class EncoderMode { kTrain, kInfer };

/// Batch statistics produced by a training-mode pass, one entry per block.
struct BatchNormStats {
  std::vector<RowVector> mean;
  std::vector<RowVector> var;
};

/// Adds the encoder's parameters (prefixed "enc.") to `params`. Weights are
/// uniform(-s, s) with s = sqrt(1 / fan_in).
void add_encoder_params(const EncoderConfig& config, std::mt19937_64& rng, ParameterSet& params);

/// Fresh parameter set for an encoder, deterministic in `seed`.
ParameterSet init_encoder_params(const EncoderConfig& config, std::uint64_t seed);

/// Encodes a batch of clips. Batch normalisation pools statistics over every
/// frame and band of the batch in train mode and uses the running statistics
/// in infer mode. Returns one T_n x d node per clip.
std::vector<Var> encode(Graph& graph, const EncoderConfig& config, ParameterSet& params,
                        std::span<const Matrix> inputs, EncoderMode mode,
                        BatchNormStats* stats = nullptr);

/// Inference-mode convenience wrapper for a single clip.
HighLevelSequence encode(const EncoderConfig& config, ParameterSet& params,
                         const FeatureSequence& input);

/// running = momentum * running + (1 - momentum) * batch.
void update_running_stats(const EncoderConfig& config, ParameterSet& params,
                          const BatchNormStats& stats);

}  // namespace milsed
