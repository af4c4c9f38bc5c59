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

// Class-adaptive median smoothing and frame -> event conversion.

#pragma once

#include "milsed/decision.h"

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

namespace milsed {

/// One detected or annotated event. Times in seconds, onset < offset.
struct Event {
  std::string clip_id;
  int class_index = 0;
  double onset = 0.0;
  double offset = 0.0;

  double length() const { return offset - onset; }
  friend bool operator==(const Event&, const Event&) = default;
};

using EventList = std::vector<Event>;

/// Sorts by (clip, class, onset, offset).
void sort_events(EventList& events);

struct SmoothingConfig {
  double beta = 1.0 / 3.0;
  std::vector<double> durations;  // mean event duration per class, seconds
  double frame_hop = 0.02;
  std::optional<Index> fixed_window;

  /// Per-class median window in frames.
  std::vector<Index> windows(Index num_classes) const;
};

/// round(duration * beta / hop), pulled down to an odd number, at least 1.
Index window_size(double duration, double beta, double frame_hop);

/// Centered running median; windows are truncated at the sequence ends and an
/// even-sized truncated window takes the lower median.
template <typename Scalar>
VectorX<Scalar> median_filter(const VectorX<Scalar>& series, Index window) {
  if (window < 1 || window % 2 == 0) {
    throw Error("median_filter: window must be a positive odd integer, got " +
                std::to_string(window));
  }
  const Index n = series.size();
  const Index half = window / 2;
  VectorX<Scalar> out(n);
  std::vector<Scalar> buf;
  buf.reserve(static_cast<std::size_t>(window));
  for (Index t = 0; t < n; ++t) {
    const Index lo = std::max<Index>(0, t - half);
    const Index hi = std::min<Index>(n - 1, t + half);
    buf.assign(series.data() + lo, series.data() + hi + 1);
    auto mid = buf.begin() + static_cast<std::ptrdiff_t>((buf.size() - 1) / 2);
    std::nth_element(buf.begin(), mid, buf.end());
    out(t) = *mid;
  }
  return out;
}

/// Per class: median-filter the probabilities, threshold at gamma with clip
/// gating, then median-filter the binary decisions with the same window.
/// `frame_probs` is T x C; result is T x C.
BoolMatrix smooth_pipeline(const Matrix& frame_probs, const BoolVector& clip_labels,
                           const std::vector<Index>& windows, double gamma = kDefaultGamma);

/// Maximal runs of positive frames; frame t covers [t*hop, (t+1)*hop).
EventList frames_to_events(const BoolMatrix& labels, double frame_hop,
                           const std::string& clip_id);

/// Marks frame t positive when its centre lies inside an event of the clip.
BoolMatrix events_to_frames(const EventList& events, Index num_frames, Index num_classes,
                            double frame_hop, const std::string& clip_id);

}  // namespace milsed
