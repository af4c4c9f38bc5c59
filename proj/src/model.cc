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

#include "milsed/model.h"

#include <cmath>
#include <random>

namespace milsed {

void ModelConfig::validate() const {
  encoder.validate();
  if (num_classes < 1) throw Error("model: need at least one class");
  if (sds && pooling.kind != PoolingKind::kAtp) {
    throw Error("SDS requires atp pooling (got " + pooling.name() + ")");
  }
  if (df != DfMode::kNone &&
      (pooling.level != PoolingLevel::kEmbedding || pooling.kind != PoolingKind::kAtp)) {
    throw Error("DF requires embedding-level atp pooling (got " + pooling.name() + ")");
  }
  if (!(m >= 0.0 && m <= 1.0)) throw Error("model: m must lie in [0, 1]");
  if (!(pooling.psi_scale > 0.0)) throw Error("model: psi scale must be positive");
}

namespace {

Matrix uniform_fan_in(Index rows, Index cols, std::mt19937_64& rng) {
  const double s = std::sqrt(1.0 / static_cast<double>(rows));
  std::uniform_real_distribution<double> dist(-s, s);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  }
  return m;
}

void check_alloc(const ModelConfig& config, const DFAllocation& alloc) {
  config.validate();
  if (alloc.num_classes() != config.num_classes || alloc.d != config.encoder.output_dim()) {
    throw Error("model: DF allocation is for " + std::to_string(alloc.num_classes()) +
                " classes x d=" + std::to_string(alloc.d) + ", model has " +
                std::to_string(config.num_classes) + " x d=" +
                std::to_string(config.encoder.output_dim()));
  }
  if (config.df == DfMode::kNone && !alloc.degenerate()) {
    throw Error("model: DF disabled but allocation restricts subspaces");
  }
}

}  // namespace

Model::Model(ModelConfig config, DFAllocation alloc, std::uint64_t seed)
    : config_(std::move(config)), alloc_(std::move(alloc)) {
  check_alloc(config_, alloc_);
  std::mt19937_64 rng(seed);
  add_encoder_params(config_.encoder, rng, params_);
  const Index d = alloc_.d, c = config_.num_classes;
  mask_ = alloc_.mask_matrix();
  params_.add("cls.weight", uniform_fan_in(d, c, rng).cwiseProduct(mask_.transpose()));
  params_.add("cls.bias", Matrix::Zero(1, c));
  if (config_.pooling.kind == PoolingKind::kAtp) {
    params_.add("att.weight", uniform_fan_in(d, c, rng).cwiseProduct(mask_.transpose()));
  }
  scales_.resize(c);
  for (Index k = 0; k < c; ++k) {
    scales_(k) = config_.df == DfMode::kNone ? config_.pooling.scale_for(d) : double(alloc_.k[k]);
  }
}

Model::Model(ModelConfig config, DFAllocation alloc, ParameterSet params)
    : Model(config, alloc, std::uint64_t{0}) {
  params_.assign_values(params);
}

Model::Model(const Model& other)
    : config_(other.config_), alloc_(other.alloc_), mask_(other.mask_), scales_(other.scales_) {
  for (const Parameter& p : other.params_) params_.add(p.name, p.value, p.trainable);
}

Model& Model::operator=(const Model& other) {
  if (this != &other) {
    config_ = other.config_;
    alloc_ = other.alloc_;
    mask_ = other.mask_;
    scales_ = other.scales_;
    params_ = ParameterSet();
    for (const Parameter& p : other.params_) params_.add(p.name, p.value, p.trainable);
  }
  return *this;
}

Model::Output Model::head(Graph& g, Var x) {
  const PoolingSpec& spec = config_.pooling;
  Var v = g.parameter(params_.at("cls.weight"));
  Var b = g.parameter(params_.at("cls.bias"));
  Output out;
  out.reps = x;

  auto classify_rows = [&](Var h, Var weight) {  // rows of h are per-class h_c
    return transpose(sum_cols(cwise_mul(h, transpose(weight))));
  };

  if (spec.level == PoolingLevel::kInstance) {
    Var p = sigmoid(add_row(matmul(x, v), b));
    out.frame_probs = p;
    switch (spec.kind) {
      case PoolingKind::kGmp:
        out.clip_probs = max_rows(p);
        break;
      case PoolingKind::kGap:
        out.clip_probs = mean_rows(p);
        break;
      case PoolingKind::kGsp:
        out.attention = softmax_rows(scale(p, spec.psi_scale));
        out.clip_probs = sum_rows(cwise_mul(out.attention, p));
        break;
      case PoolingKind::kAtp: {
        Var w = g.parameter(params_.at("att.weight"));
        Var xw = matmul(x, w);
        out.attention = softmax_rows(div_row(xw, g.constant(scales_)));
        out.clip_probs = sum_rows(cwise_mul(out.attention, p));
        if (config_.sds) {
          out.frame_probs = config_.sds_scaled_logits ? sigmoid(scale(xw, 1.0 / double(dim())))
                                                      : sigmoid(xw);
        }
        break;
      }
    }
    return out;
  }

  switch (spec.kind) {
    case PoolingKind::kGmp:
    case PoolingKind::kGap: {
      Var h = spec.kind == PoolingKind::kGmp ? max_rows(x) : mean_rows(x);
      out.clip_probs = sigmoid(add_row(matmul(h, v), b));
      out.frame_probs = sigmoid(add_row(matmul(x, v), b));
      break;
    }
    case PoolingKind::kGsp: {
      Var p = sigmoid(add_row(matmul(x, v), b));
      out.attention = softmax_rows(scale(p, spec.psi_scale));
      Var h = matmul(transpose(out.attention), x);
      out.clip_probs = sigmoid(add(classify_rows(h, v), b));
      out.frame_probs = p;
      break;
    }
    case PoolingKind::kAtp: {
      Var mask = g.constant(mask_);
      Var mask_t = g.constant(mask_.transpose());
      Var w = cwise_mul(g.parameter(params_.at("att.weight")), mask_t);
      Var vm = cwise_mul(v, mask_t);
      Var xw = matmul(x, w);
      out.attention = softmax_rows(div_row(xw, g.constant(scales_)));
      Var h = cwise_mul(matmul(transpose(out.attention), x), mask);
      out.clip_probs = sigmoid(add(classify_rows(h, vm), b));
      if (config_.sds) {
        if (config_.sds_scaled_logits) {
          out.frame_probs = sigmoid(div_row(xw, g.constant(scales_)));
        } else {
          out.frame_probs = sigmoid(xw);
        }
      } else {
        out.frame_probs = sigmoid(add_row(matmul(x, vm), b));
      }
      break;
    }
  }
  return out;
}

std::vector<Model::Output> Model::forward(Graph& graph, std::span<const Matrix> batch,
                                          EncoderMode mode, BatchNormStats* stats) {
  std::vector<Var> reps = encode(graph, config_.encoder, params_, batch, mode, stats);
  std::vector<Output> out;
  out.reserve(reps.size());
  for (Var x : reps) out.push_back(head(graph, x));
  return out;
}

Model::Inference Model::infer(const Matrix& features) {
  Graph g;
  std::vector<Matrix> batch{features};
  Output o = forward(g, batch, EncoderMode::kInfer).front();
  Inference r;
  r.clip_probs = o.clip_probs.value();
  r.frame_probs = o.frame_probs.value();
  if (o.attention.valid()) r.attention = o.attention.value();
  r.reps = o.reps.value();
  return r;
}

}  // namespace milsed
