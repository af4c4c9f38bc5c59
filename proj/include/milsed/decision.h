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

// Clip- and frame-level decisions.
//
// Clip label:  phi_c = [P(y_c|x) >= alpha]
// Frame label: [s_ct * phi_c >= gamma], where s_ct comes either from the
// shared surface G_c(x_t) or from the specialised surface
// S_c(x_t) = sigmoid(w_c . x_t) built on the attention detector.

#pragma once

#include "milsed/classifier.h"
#include "milsed/pooling.h"

#include <string_view>

namespace milsed {

enum class DecisionSurface { kShared, kSds };

inline constexpr double kDefaultAlpha = 0.5;
inline constexpr double kDefaultGamma = 0.5;

/// S_c(x_t) = sigmoid(w_c . x_t) per frame. No bias and no 1/d scaling
/// unless `scaled_logits`, which divides by the dimension of x_t.
template <typename Scalar>
VectorX<Scalar> frame_probs_sds(const PoolingSpec& spec, const VectorX<Scalar>& w,
                                const MatrixX<Scalar>& reps, bool scaled_logits = false) {
  if (spec.kind != PoolingKind::kAtp) {
    throw Error("SDS requires attention parameters (atp pooling), got " + spec.name());
  }
  if (w.size() != reps.cols()) {
    throw ShapeError("frame_probs_sds: w has " + std::to_string(w.size()) +
                     " entries, representations have " + std::to_string(reps.cols()));
  }
  const Scalar denom = scaled_logits ? Scalar(reps.cols()) : Scalar(1);
  VectorX<Scalar> out(reps.rows());
  for (Index t = 0; t < reps.rows(); ++t) {
    out(t) = logistic(Scalar(reps.row(t).dot(w.transpose()) / denom));
  }
  return out;
}

struct ClipPrediction {
  RowVector probs;  // 1 x C
  BoolVector labels;
  double alpha = kDefaultAlpha;
};

/// Frame decisions, one row per frame and one column per class.
struct FramePrediction {
  Matrix probs;  // T x C
  BoolMatrix labels;
  double gamma = kDefaultGamma;
  DecisionSurface surface = DecisionSurface::kShared;
};

ClipPrediction predict_clip(const RowVector& probs, double alpha = kDefaultAlpha);

/// labels(t, c) = frame_probs(t, c) * phi_c >= gamma.
FramePrediction predict(const ClipPrediction& clip, const Matrix& frame_probs,
                        double gamma = kDefaultGamma,
                        DecisionSurface surface = DecisionSurface::kShared);

std::string to_string(DecisionSurface s);

}  // namespace milsed
