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

#include "milsed/disentangle.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

namespace milsed {

std::string to_string(DfMode mode) {
  switch (mode) {
    case DfMode::kNone: return "none";
    case DfMode::kDf1: return "df1";
    case DfMode::kDfw: return "dfw";
  }
  return "?";
}

DfMode parse_df_mode(std::string_view s) {
  if (s == "none") return DfMode::kNone;
  if (s == "df1") return DfMode::kDf1;
  if (s == "dfw") return DfMode::kDfw;
  throw Error("unknown DF mode '" + std::string(s) + "' (none|df1|dfw)");
}

Matrix DFAllocation::mask_matrix() const {
  Matrix out = Matrix::Zero(num_classes(), d);
  for (Index c = 0; c < num_classes(); ++c) {
    out.row(c).head(k[c]).setOnes();
  }
  return out;
}

BoolVector DFAllocation::mask(Index c) const {
  BoolVector out = BoolVector::Constant(d, false);
  out.head(k.at(c)).setConstant(true);
  return out;
}

bool DFAllocation::degenerate() const {
  return std::all_of(k.begin(), k.end(), [this](Index kc) { return kc == d; });
}

DFAllocation DFAllocation::none(Index num_classes, Index d) {
  if (d < 1) throw Error("DF allocation: d must be >= 1");
  DFAllocation a;
  a.mode = DfMode::kNone;
  a.m = 1.0;
  a.d = d;
  a.k.assign(static_cast<std::size_t>(num_classes), d);
  a.score.weighted = Vector::Ones(num_classes);
  a.score.f = Vector::Ones(num_classes);
  a.score.r = 1.0;
  return a;
}

double compute_r(DfMode mode, Index class_count, Index num_classes) {
  if (class_count < 1 || class_count > num_classes) {
    throw Error("compute_r: class count " + std::to_string(class_count) + " outside [1, " +
                std::to_string(num_classes) + "]");
  }
  switch (mode) {
    case DfMode::kDfw: return 1.0 / static_cast<double>(class_count);
    case DfMode::kDf1: return class_count == 1 ? 1.0 : 0.0;
    case DfMode::kNone: return 1.0;
  }
  return 0.0;
}

DFAllocation allocate(const CooccurrenceCounts& counts, DfMode mode, double m, Index d) {
  const Index num_classes = counts.num_classes();
  if (d < 1) throw Error("DF allocation: d must be >= 1");
  if (counts.n.cols() != num_classes) {
    throw ShapeError("DF allocation: co-occurrence counts must be C x C, got " +
                     shape_string(counts.n));
  }
  if (!(m >= 0.0 && m <= 1.0)) throw Error("DF allocation: m must lie in [0, 1]");
  if ((counts.n.array() < 0).any()) throw Error("DF allocation: negative co-occurrence count");
  if (mode == DfMode::kNone) return DFAllocation::none(num_classes, d);

  DFAllocation a;
  a.mode = mode;
  a.m = m;
  a.d = d;
  a.score.weighted = Vector::Zero(num_classes);
  for (Index c = 0; c < num_classes; ++c) {
    for (Index i = 1; i <= num_classes; ++i) {
      a.score.weighted(c) += compute_r(mode, i, num_classes) * double(counts.n(c, i - 1));
    }
  }
  a.score.r = num_classes > 0 ? a.score.weighted.maxCoeff() : 0.0;
  if (m == 0.0) {
    for (Index c = 0; c < num_classes; ++c) {
      if (a.score.weighted(c) == 0.0) {
        throw Error("DF allocation: class " + std::to_string(c) +
                    " has no clips with weight under " + to_string(mode) +
                    ", so k_c would be 0; set m > 0");
      }
    }
  }
  const double r = a.score.r > 0.0 ? a.score.r : 1.0;
  a.score.f = a.score.weighted / r;
  const double dd = static_cast<double>(d);
  for (Index c = 0; c < num_classes; ++c) {
    // Same quantity as ((1 - m) f_c + m) d, ordered so exact cases stay exact;
    // the slack absorbs rounding in inexact weights such as 1/3.
    const double x = ((1.0 - m) * a.score.weighted(c) * dd + m * r * dd) / r;
    const Index kc = static_cast<Index>(std::ceil(x - 1e-9));
    a.k.push_back(std::clamp<Index>(kc, 1, d));
  }
  return a;
}

CooccurrenceCounts count_cooccurrence(const std::vector<std::vector<int>>& weak_labels,
                                      Index num_classes) {
  CooccurrenceCounts out;
  out.n.setZero(num_classes, num_classes);
  for (std::size_t clip = 0; clip < weak_labels.size(); ++clip) {
    const std::set<int> classes(weak_labels[clip].begin(), weak_labels[clip].end());
    if (classes.empty()) {
      throw Error("count_cooccurrence: clip #" + std::to_string(clip) + " has no labels");
    }
    const Index i = static_cast<Index>(classes.size());
    for (int c : classes) {
      if (c < 0 || c >= num_classes) {
        throw Error("count_cooccurrence: class index " + std::to_string(c) + " out of range");
      }
      out.n(c, i - 1) += 1;
    }
  }
  return out;
}

EmbeddingPooled<double> masked_attention(const DFAllocation& alloc, const Matrix& reps, Index c,
                                         const Vector& w) {
  if (c < 0 || c >= alloc.num_classes()) throw Error("masked_attention: class out of range");
  const Index kc = alloc.k[c];
  if (w.size() != kc) {
    throw ShapeError("masked_attention: w_c has " + std::to_string(w.size()) +
                     " entries, subspace has k_c=" + std::to_string(kc));
  }
  if (reps.cols() != alloc.d) {
    throw ShapeError("masked_attention: representations have " + std::to_string(reps.cols()) +
                     " dims, allocation expects " + std::to_string(alloc.d));
  }
  const Matrix sub = reps.leftCols(kc);
  Vector a = attention_weights(sub, w, double(kc));
  Vector h = sub.transpose() * a;
  return {std::move(h), std::move(a)};
}

std::string allocation_report(const DFAllocation& alloc, const std::vector<std::string>& names) {
  std::ostringstream os;
  std::size_t width = 5;
  for (const auto& n : names) width = std::max(width, n.size());
  os << std::left << std::setw(int(width)) << "class" << "  " << std::setw(8) << "f_c"
     << "  k_c\n";
  for (Index c = 0; c < alloc.num_classes(); ++c) {
    const std::string name = c < Index(names.size()) ? names[c] : std::to_string(c);
    os << std::left << std::setw(int(width)) << name << "  " << std::fixed
       << std::setprecision(4) << std::setw(8) << alloc.score.f(c) << "  " << alloc.k[c]
       << '\n';
  }
  os << "mode " << to_string(alloc.mode) << ", m " << alloc.m << ", d " << alloc.d << '\n';
  return os.str();
}

}  // namespace milsed
