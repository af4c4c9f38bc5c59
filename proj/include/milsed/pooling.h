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

// The eight MIL pooling modules, evaluated on plain Eigen values.
//
// Instance level: frame probabilities p_1..p_T -> clip probability.
//   gmp  max_t p_t
//   gap  mean_t p_t
//   gsp  sum_t a_t p_t,  a = softmax(psi(p))
//   atp  sum_t a_t p_t,  a = softmax(X w / d)
// Embedding level: frame representations x_1..x_T -> h_c.
//   gmp  coordinatewise max
//   gap  mean
//   gsp  sum_t a_t x_t,  a = softmax(psi(G_c(x_t)))
//   atp  sum_t a_t x_t,  a = softmax(X w / d)
//
// The differentiable versions used for training live in model.h; these are
// the reference evaluations.

#pragma once

#include "milsed/classifier.h"

#include <optional>
#include <string>
#include <string_view>

namespace milsed {

enum class PoolingLevel { kInstance, kEmbedding };
enum class PoolingKind { kGmp, kGap, kGsp, kAtp };

struct PoolingSpec {
  PoolingLevel level = PoolingLevel::kEmbedding;
  PoolingKind kind = PoolingKind::kAtp;
  /// psi(p) = psi_scale * p for GSP.
  double psi_scale = 1.0;
  /// Attention logit denominator; <= 0 means "dimension of x_t".
  double scale_d = 0.0;

  bool weighted() const { return kind == PoolingKind::kGsp || kind == PoolingKind::kAtp; }
  double scale_for(Index dim) const { return scale_d > 0.0 ? scale_d : double(dim); }

  /// Short name: i/e prefix + kind, e.g. "eatp".
  std::string name() const;
  static PoolingSpec parse(std::string_view name);
};

template <typename Scalar>
struct InstancePooled {
  Scalar prob;
  std::optional<VectorX<Scalar>> weights;  // gsp / atp only
};

template <typename Scalar>
struct EmbeddingPooled {
  VectorX<Scalar> h;
  std::optional<VectorX<Scalar>> weights;  // gsp / atp only
};

/// a_t = softmax_t(x_t . w / scale_d).
template <typename Scalar>
VectorX<Scalar> attention_weights(const MatrixX<Scalar>& reps, const VectorX<Scalar>& w,
                                  Scalar scale_d) {
  if (reps.rows() == 0) throw Error("attention_weights: empty sequence");
  if (w.size() != reps.cols()) {
    throw ShapeError("attention_weights: w has " + std::to_string(w.size()) +
                     " entries, representations have " + std::to_string(reps.cols()));
  }
  if (!(scale_d > Scalar(0))) throw Error("attention_weights: scale_d must be positive");
  VectorX<Scalar> logits = reps * w / scale_d;
  return softmax(logits);
}

/// a_t = softmax_t(psi_scale * p_t).
template <typename Scalar>
VectorX<Scalar> softmax_pool_weights(const VectorX<Scalar>& frame_probs, Scalar psi_scale) {
  return softmax(VectorX<Scalar>(frame_probs * psi_scale));
}

template <typename Scalar>
InstancePooled<Scalar> pool_instance(const PoolingSpec& spec, const VectorX<Scalar>& frame_probs,
                                     const MatrixX<Scalar>* reps = nullptr,
                                     const VectorX<Scalar>* w = nullptr) {
  if (frame_probs.size() == 0) throw Error("pool_instance: empty sequence");
  for (Index t = 0; t < frame_probs.size(); ++t) {
    if (!(frame_probs(t) >= Scalar(0) && frame_probs(t) <= Scalar(1))) {
      throw Error("pool_instance: frame probability outside [0, 1] at t=" + std::to_string(t));
    }
  }
  switch (spec.kind) {
    case PoolingKind::kGmp: {
      Index best = 0;
      for (Index t = 1; t < frame_probs.size(); ++t) {
        if (frame_probs(t) > frame_probs(best)) best = t;
      }
      return {frame_probs(best), std::nullopt};
    }
    case PoolingKind::kGap:
      return {frame_probs.mean(), std::nullopt};
    case PoolingKind::kGsp: {
      VectorX<Scalar> a = softmax_pool_weights(frame_probs, Scalar(spec.psi_scale));
      return {a.dot(frame_probs), std::move(a)};
    }
    case PoolingKind::kAtp: {
      if (reps == nullptr || w == nullptr) {
        throw Error("pool_instance: atp requires frame representations and attention weights w_c");
      }
      if (reps->rows() != frame_probs.size()) {
        throw ShapeError("pool_instance: representations and probabilities differ in length");
      }
      VectorX<Scalar> a =
          attention_weights(*reps, *w, Scalar(spec.scale_for(reps->cols())));
      return {a.dot(frame_probs), std::move(a)};
    }
  }
  throw Error("pool_instance: unknown kind");
}

template <typename Scalar>
EmbeddingPooled<Scalar> pool_embedding(const PoolingSpec& spec, const MatrixX<Scalar>& reps,
                                       const VectorX<Scalar>* w = nullptr,
                                       const LinearClassifier<Scalar>* classifier = nullptr) {
  if (reps.rows() == 0) throw Error("pool_embedding: empty sequence");
  switch (spec.kind) {
    case PoolingKind::kGmp: {
      VectorX<Scalar> h(reps.cols());
      for (Index z = 0; z < reps.cols(); ++z) h(z) = reps.col(z).maxCoeff();
      return {std::move(h), std::nullopt};
    }
    case PoolingKind::kGap:
      return {reps.colwise().mean().transpose(), std::nullopt};
    case PoolingKind::kGsp: {
      if (classifier == nullptr) {
        throw Error("pool_embedding: gsp requires the shared classifier G_c");
      }
      VectorX<Scalar> p = frame_probs_shared(*classifier, reps);
      VectorX<Scalar> a = softmax_pool_weights(p, Scalar(spec.psi_scale));
      return {reps.transpose() * a, std::move(a)};
    }
    case PoolingKind::kAtp: {
      if (w == nullptr) throw Error("pool_embedding: atp requires attention weights w_c");
      VectorX<Scalar> a = attention_weights(reps, *w, Scalar(spec.scale_for(reps.cols())));
      return {reps.transpose() * a, std::move(a)};
    }
  }
  throw Error("pool_embedding: unknown kind");
}

}  // namespace milsed
