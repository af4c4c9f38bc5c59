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

#include "milsed/encoder.h"

#include <cmath>

namespace milsed {

std::string to_string(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::kIdentity: return "identity";
    case EncoderKind::kMlp: return "mlp";
    case EncoderKind::kCnn: return "cnn";
  }
  return "?";
}

std::string to_string(Activation act) {
  switch (act) {
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kLinear: return "linear";
  }
  return "?";
}

EncoderKind parse_encoder_kind(std::string_view s) {
  if (s == "identity") return EncoderKind::kIdentity;
  if (s == "mlp") return EncoderKind::kMlp;
  if (s == "cnn") return EncoderKind::kCnn;
  throw Error("unknown encoder kind '" + std::string(s) + "' (identity|mlp|cnn)");
}

Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  if (s == "linear") return Activation::kLinear;
  throw Error("unknown activation '" + std::string(s) + "' (relu|tanh|linear)");
}

EncoderConfig EncoderConfig::identity(Index bands) {
  EncoderConfig c;
  c.kind = EncoderKind::kIdentity;
  c.input_bands = bands;
  c.channels.clear();
  c.freq_pool.clear();
  return c;
}

EncoderConfig EncoderConfig::mlp(Index bands, std::vector<Index> widths, Activation act) {
  EncoderConfig c;
  c.kind = EncoderKind::kMlp;
  c.input_bands = bands;
  c.channels = std::move(widths);
  c.freq_pool.clear();
  c.activation = act;
  return c;
}

void EncoderConfig::validate() const {
  if (input_bands < 1) {
    throw Error("encoder: input bands must be >= 1");
  }
  for (Index c : channels) {
    if (c < 1) throw Error("encoder: channel/width counts must be >= 1");
  }
  switch (kind) {
    case EncoderKind::kIdentity:
      return;
    case EncoderKind::kMlp:
      if (channels.empty()) throw Error("encoder: mlp needs at least one layer width");
      return;
    case EncoderKind::kCnn: {
      if (channels.empty() || channels.size() != freq_pool.size()) {
        throw Error("encoder: cnn needs one frequency-pooling factor per block");
      }
      Index product = 1;
      for (Index p : freq_pool) {
        if (p < 1) throw Error("encoder: pooling factors must be >= 1");
        product *= p;
      }
      if (input_bands % product != 0) {
        std::string factors;
        for (Index p : freq_pool) {
          factors += (factors.empty() ? "" : "*") + std::to_string(p);
        }
        throw Error("encoder: input bands F=" + std::to_string(input_bands) +
                    " must be divisible by the product of frequency-pooling factors " +
                    factors + "=" + std::to_string(product));
      }
      return;
    }
  }
}

Index EncoderConfig::output_dim() const {
  validate();
  switch (kind) {
    case EncoderKind::kIdentity:
      return input_bands;
    case EncoderKind::kMlp:
      return channels.back();
    case EncoderKind::kCnn: {
      Index bands = input_bands;
      for (Index p : freq_pool) bands /= p;
      return bands * channels.back();
    }
  }
  return 0;
}

namespace {

Matrix uniform_fan_in(Index rows, Index cols, Index fan_in, std::mt19937_64& rng) {
  const double s = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-s, s);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) {
      m(i, j) = dist(rng);
    }
  }
  return m;
}

std::string block_name(std::size_t i, const char* what) {
  return "enc." + std::to_string(i) + "." + what;
}

Var activate(Var x, Activation act) {
  switch (act) {
    case Activation::kRelu: return relu(x);
    case Activation::kTanh: return tanh(x);
    case Activation::kLinear: return x;
  }
  return x;
}

}  // namespace

void add_encoder_params(const EncoderConfig& config, std::mt19937_64& rng,
                        ParameterSet& params) {
  config.validate();
  switch (config.kind) {
    case EncoderKind::kIdentity:
      return;
    case EncoderKind::kMlp: {
      Index in = config.input_bands;
      for (std::size_t i = 0; i < config.channels.size(); ++i) {
        const Index out = config.channels[i];
        params.add(block_name(i, "weight"), uniform_fan_in(in, out, in, rng));
        params.add(block_name(i, "bias"), Matrix::Zero(1, out));
        in = out;
      }
      return;
    }
    case EncoderKind::kCnn: {
      Index in = 1;
      for (std::size_t i = 0; i < config.channels.size(); ++i) {
        const Index out = config.channels[i];
        // No conv bias: batch norm removes it.
        params.add(block_name(i, "weight"), uniform_fan_in(9 * in, out, 9 * in, rng));
        params.add(block_name(i, "bn_gamma"), Matrix::Ones(1, out));
        params.add(block_name(i, "bn_beta"), Matrix::Zero(1, out));
        params.add(block_name(i, "bn_mean"), Matrix::Zero(1, out), false);
        params.add(block_name(i, "bn_var"), Matrix::Ones(1, out), false);
        in = out;
      }
      return;
    }
  }
}

ParameterSet init_encoder_params(const EncoderConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParameterSet params;
  add_encoder_params(config, rng, params);
  return params;
}

std::vector<Var> encode(Graph& graph, const EncoderConfig& config, ParameterSet& params,
                        std::span<const Matrix> inputs, EncoderMode mode,
                        BatchNormStats* stats) {
  config.validate();
  for (const Matrix& x : inputs) {
    if (x.rows() < 1) {
      throw Error("encoder: clip has no frames");
    }
    if (x.cols() != config.input_bands) {
      throw ShapeError("encoder: expected " + std::to_string(config.input_bands) +
                       " bands, got " + shape_string(x));
    }
  }
  std::vector<Var> out;
  out.reserve(inputs.size());

  if (config.kind == EncoderKind::kIdentity) {
    for (const Matrix& x : inputs) out.push_back(graph.constant(x));
    return out;
  }

  if (config.kind == EncoderKind::kMlp) {
    std::vector<Var> weights, biases;
    for (std::size_t i = 0; i < config.channels.size(); ++i) {
      weights.push_back(graph.parameter(params.at(block_name(i, "weight"))));
      biases.push_back(graph.parameter(params.at(block_name(i, "bias"))));
    }
    for (const Matrix& x : inputs) {
      Var h = graph.constant(x);
      for (std::size_t i = 0; i < weights.size(); ++i) {
        h = activate(add_row(matmul(h, weights[i]), biases[i]), config.activation);
      }
      out.push_back(h);
    }
    return out;
  }

  // cnn: stack the batch as (clip, t, f) rows x channel columns.
  std::vector<Index> lengths;
  Index total = 0;
  for (const Matrix& x : inputs) {
    lengths.push_back(x.rows());
    total += x.size();
  }
  if (inputs.empty()) return out;
  Matrix stacked(total, 1);
  Index at = 0;
  for (const Matrix& x : inputs) {
    for (Index t = 0; t < x.rows(); ++t) {
      for (Index f = 0; f < x.cols(); ++f) stacked(at++, 0) = x(t, f);
    }
  }
  if (stats != nullptr) {
    stats->mean.clear();
    stats->var.clear();
  }
  Var h = graph.constant(std::move(stacked));
  Index bands = config.input_bands;
  for (std::size_t i = 0; i < config.channels.size(); ++i) {
    Var w = graph.parameter(params.at(block_name(i, "weight")));
    Var gamma = graph.parameter(params.at(block_name(i, "bn_gamma")));
    Var beta = graph.parameter(params.at(block_name(i, "bn_beta")));
    h = matmul(im2col3x3(h, lengths, bands), w);
    if (mode == EncoderMode::kTrain) {
      RowVector mean, var;
      h = batch_norm(h, gamma, beta, config.bn_eps, &mean, &var);
      if (stats != nullptr) {
        stats->mean.push_back(std::move(mean));
        stats->var.push_back(std::move(var));
      }
    } else {
      const Matrix& rm = params.at(block_name(i, "bn_mean")).value;
      const Matrix& rv = params.at(block_name(i, "bn_var")).value;
      const Matrix inv_std = (rv.array() + config.bn_eps).rsqrt().matrix();
      h = add_row(h, graph.constant(-rm));
      h = mul_row(h, graph.constant(inv_std));
      h = add_row(mul_row(h, gamma), beta);
    }
    h = max_pool_rows(h, config.freq_pool[i]);
    bands /= config.freq_pool[i];
    h = activate(h, config.activation);
  }
  h = fold_rows(h, bands);
  at = 0;
  for (Index len : lengths) {
    out.push_back(row_block(h, at, len));
    at += len;
  }
  return out;
}

HighLevelSequence encode(const EncoderConfig& config, ParameterSet& params,
                         const FeatureSequence& input) {
  Graph g;
  std::vector<Matrix> batch{input.frames};
  std::vector<Var> reps = encode(g, config, params, batch, EncoderMode::kInfer);
  return {input.clip_id, reps.front().value()};
}

void update_running_stats(const EncoderConfig& config, ParameterSet& params,
                          const BatchNormStats& stats) {
  if (config.kind != EncoderKind::kCnn) return;
  if (stats.mean.size() != config.channels.size()) {
    throw Error("update_running_stats: batch statistics do not match the encoder blocks");
  }
  const double m = config.bn_momentum;
  for (std::size_t i = 0; i < stats.mean.size(); ++i) {
    Matrix& rm = params.at(block_name(i, "bn_mean")).value;
    Matrix& rv = params.at(block_name(i, "bn_var")).value;
    rm = m * rm + (1.0 - m) * Matrix(stats.mean[i]);
    rv = m * rv + (1.0 - m) * Matrix(stats.var[i]);
  }
}

}  // namespace milsed
