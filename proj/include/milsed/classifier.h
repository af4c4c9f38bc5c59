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

#include "milsed/numerics.h"

#include <string>

namespace milsed {

/// Per-class logistic classifier G_c(h) = sigmoid(v . h + b); the 1x1
/// convolution with sigmoid used on top of the encoder.
template <typename Scalar>
struct LinearClassifier {
  VectorX<Scalar> weight;
  Scalar bias = Scalar(0);

  Index dim() const { return weight.size(); }
};

/// Probability the classifier assigns to a single representation.
template <typename Scalar, typename Derived>
Scalar clip_probability(const LinearClassifier<Scalar>& g, const Eigen::MatrixBase<Derived>& h) {
  if (h.size() != g.dim()) {
    throw ShapeError("clip_probability: classifier has dimension " + std::to_string(g.dim()) +
                     ", representation has " + std::to_string(h.size()));
  }
  Scalar z = g.bias;
  for (Index i = 0; i < h.size(); ++i) {
    z += g.weight(i) * h(i);
  }
  return logistic(z);
}

/// G_c applied to every row of `reps` (T x d), giving T frame probabilities.
template <typename Scalar>
VectorX<Scalar> frame_probs_shared(const LinearClassifier<Scalar>& g, const MatrixX<Scalar>& reps) {
  VectorX<Scalar> out(reps.rows());
  for (Index t = 0; t < reps.rows(); ++t) {
    out(t) = clip_probability(g, reps.row(t));
  }
  return out;
}

}  // namespace milsed
