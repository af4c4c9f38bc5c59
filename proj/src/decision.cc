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

#include "milsed/decision.h"

namespace milsed {

ClipPrediction predict_clip(const RowVector& probs, double alpha) {
  ClipPrediction out;
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error("predict: alpha must lie in (0, 1)");
  out.probs = probs;
  out.alpha = alpha;
  out.labels = (probs.transpose().array() >= alpha);
  return out;
}

FramePrediction predict(const ClipPrediction& clip, const Matrix& frame_probs, double gamma,
                        DecisionSurface surface) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw Error("predict: gamma must lie in (0, 1)");
  if (frame_probs.cols() != clip.labels.size()) {
    throw ShapeError("predict: " + std::to_string(clip.labels.size()) + " clip labels vs " +
                     shape_string(frame_probs) + " frame probabilities");
  }
  FramePrediction out;
  out.probs = frame_probs;
  out.gamma = gamma;
  out.surface = surface;
  out.labels.resize(frame_probs.rows(), frame_probs.cols());
  for (Index c = 0; c < frame_probs.cols(); ++c) {
    const double gate = clip.labels(c) ? 1.0 : 0.0;
    for (Index t = 0; t < frame_probs.rows(); ++t) {
      out.labels(t, c) = frame_probs(t, c) * gate >= gamma;
    }
  }
  return out;
}

std::string to_string(DecisionSurface s) {
  return s == DecisionSurface::kSds ? "sds" : "shared";
}

}  // namespace milsed
