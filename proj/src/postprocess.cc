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

#include "milsed/postprocess.h"

#include <cmath>
#include <tuple>

namespace milsed {

void sort_events(EventList& events) {
  std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    return std::tie(a.clip_id, a.class_index, a.onset, a.offset) <
           std::tie(b.clip_id, b.class_index, b.onset, b.offset);
  });
}

Index window_size(double duration, double beta, double frame_hop) {
  if (!(duration > 0.0 && beta > 0.0 && frame_hop > 0.0)) {
    throw Error("window_size: duration, beta and frame hop must be positive");
  }
  Index w = static_cast<Index>(std::llround(duration * beta / frame_hop));
  if (w % 2 == 0) --w;
  return std::max<Index>(w, 1);
}

std::vector<Index> SmoothingConfig::windows(Index num_classes) const {
  if (fixed_window) {
    if (*fixed_window < 1 || *fixed_window % 2 == 0) {
      throw Error("fixed window must be a positive odd integer, got " +
                  std::to_string(*fixed_window));
    }
    return std::vector<Index>(static_cast<std::size_t>(num_classes), *fixed_window);
  }
  if (static_cast<Index>(durations.size()) != num_classes) {
    throw Error("smoothing: need one mean duration per class (" + std::to_string(num_classes) +
                "), got " + std::to_string(durations.size()));
  }
  std::vector<Index> out;
  for (double d : durations) out.push_back(window_size(d, beta, frame_hop));
  return out;
}

BoolMatrix smooth_pipeline(const Matrix& frame_probs, const BoolVector& clip_labels,
                           const std::vector<Index>& windows, double gamma) {
  const Index num_classes = frame_probs.cols();
  if (clip_labels.size() != num_classes || static_cast<Index>(windows.size()) != num_classes) {
    throw ShapeError("smooth_pipeline: " + shape_string(frame_probs) +
                     " probabilities need one clip label and one window per class");
  }
  BoolMatrix out(frame_probs.rows(), num_classes);
  for (Index c = 0; c < num_classes; ++c) {
    const Index w = windows[static_cast<std::size_t>(c)];
    const Vector smoothed = median_filter(Vector(frame_probs.col(c)), w);
    const double gate = clip_labels(c) ? 1.0 : 0.0;
    Vector binary(smoothed.size());
    for (Index t = 0; t < smoothed.size(); ++t) {
      binary(t) = smoothed(t) * gate >= gamma ? 1.0 : 0.0;
    }
    const Vector again = median_filter(binary, w);
    out.col(c) = again.array() > 0.5;
  }
  return out;
}

EventList frames_to_events(const BoolMatrix& labels, double frame_hop,
                           const std::string& clip_id) {
  EventList out;
  for (Index c = 0; c < labels.cols(); ++c) {
    Index t = 0;
    while (t < labels.rows()) {
      if (!labels(t, c)) {
        ++t;
        continue;
      }
      const Index start = t;
      while (t < labels.rows() && labels(t, c)) ++t;
      out.push_back({clip_id, static_cast<int>(c), double(start) * frame_hop,
                     double(t) * frame_hop});
    }
  }
  return out;
}

BoolMatrix events_to_frames(const EventList& events, Index num_frames, Index num_classes,
                            double frame_hop, const std::string& clip_id) {
  BoolMatrix out = BoolMatrix::Constant(num_frames, num_classes, false);
  for (const Event& e : events) {
    if (e.clip_id != clip_id) continue;
    if (e.class_index < 0 || e.class_index >= num_classes) {
      throw Error("events_to_frames: class index out of range");
    }
    for (Index t = 0; t < num_frames; ++t) {
      const double centre = (double(t) + 0.5) * frame_hop;
      if (centre >= e.onset && centre < e.offset) out(t, e.class_index) = true;
    }
  }
  return out;
}

}  // namespace milsed
