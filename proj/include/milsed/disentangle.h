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

// Disentangled feature subspaces.
//
// Each class c gets the first k_c coordinates of the d-dimensional encoder
// output, with
//
//   k_c = ceil(((1 - m) * f_c + m) * d),
//   f_c = sum_i r_i N_ci / R,   R = max_c sum_i r_i N_ci,
//
// where N_ci counts training clips holding exactly i classes, one of them c,
// and r_i = 1/i (dfw) or [i == 1] (df1). Classes seen mostly alone get a
// wide subspace; classes that only ever co-occur get a narrow one.

#pragma once

#include "milsed/pooling.h"

#include <string>
#include <string_view>
#include <vector>

namespace milsed {

enum class DfMode { kNone, kDf1, kDfw };

std::string to_string(DfMode mode);
DfMode parse_df_mode(std::string_view s);

/// N(c, i - 1) = number of clips with exactly i classes, including c.
struct CooccurrenceCounts {
  Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic> n;

  Index num_classes() const { return n.rows(); }
};

struct InterferenceScore {
  Vector weighted;  // sum_i r_i N_ci
  Vector f;         // weighted / R
  double r = 0.0;   // R
};

struct DFAllocation {
  DfMode mode = DfMode::kNone;
  double m = 0.0;
  Index d = 0;
  std::vector<Index> k;
  InterferenceScore score;

  Index num_classes() const { return static_cast<Index>(k.size()); }
  /// C x d, 1 on the first k_c coordinates of row c.
  Matrix mask_matrix() const;
  BoolVector mask(Index c) const;
  bool degenerate() const;  // every k_c == d

  /// No disentangling: every class sees all d coordinates.
  static DFAllocation none(Index num_classes, Index d);
};

/// Importance of a clip holding `class_count` classes.
double compute_r(DfMode mode, Index class_count, Index num_classes);

DFAllocation allocate(const CooccurrenceCounts& counts, DfMode mode, double m, Index d);

/// Builds N from per-clip class index sets (duplicates within a clip count once).
CooccurrenceCounts count_cooccurrence(const std::vector<std::vector<int>>& weak_labels,
                                      Index num_classes);

/// Attention pooling restricted to class c's subspace: logits use the first
/// k_c coordinates scaled by 1 / k_c; h_c has k_c entries.
EmbeddingPooled<double> masked_attention(const DFAllocation& alloc, const Matrix& reps, Index c,
                                         const Vector& w);

/// Text table "class f_c k_c", one row per class.
std::string allocation_report(const DFAllocation& alloc, const std::vector<std::string>& names);

}  // namespace milsed
