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

#include "milsed/postprocess.h"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace milsed {

struct CollarConfig {
  double onset_collar = 0.2;
  double offset_collar_abs = 0.2;
  double offset_collar_rel = 0.2;
};

struct ClassCounts {
  long long tp = 0;
  long long fp = 0;
  long long fn = 0;

  bool empty() const { return tp == 0 && fp == 0 && fn == 0; }
  ClassCounts& operator+=(const ClassCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
};

using ClasswiseCounts = std::vector<ClassCounts>;

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Precision, recall and F1; each is 0 when its denominator is 0.
Prf f1(long long tp, long long fp, long long fn);
inline Prf f1(const ClassCounts& c) { return f1(c.tp, c.fp, c.fn); }

/// Onset within onset_collar and offset within
/// max(offset_collar_abs, offset_collar_rel * reference length).
bool events_match(const Event& ref, const Event& pred, const CollarConfig& collars);

/// Greedy one-to-one matching per (clip, class): predictions in onset order
/// take the earliest unmatched reference they match.
ClasswiseCounts match_events(const EventList& refs, const EventList& preds, Index num_classes,
                             const CollarConfig& collars = {});

/// Mean per-class F1 over classes with at least one reference or prediction.
double macro_f1(const ClasswiseCounts& counts);
double micro_f1(const ClasswiseCounts& counts);

/// clip id -> set of class indices.
using WeakLabels = std::map<std::string, std::set<int>>;

struct ClipScores {
  ClasswiseCounts counts;
  double macro = 0.0;
  double micro = 0.0;
};

/// Audio tagging scores; both maps must cover the same clips.
ClipScores clip_f1(const WeakLabels& refs, const WeakLabels& preds, Index num_classes);

/// Per-class P/R/F1 table with a trailing macro row.
std::string format_report(const std::string& title, const ClasswiseCounts& counts,
                          const std::vector<std::string>& class_names);

/// CSV "task,class,tp,fp,fn,precision,recall,f1" rows (no header), macro row last.
std::string format_report_csv(const std::string& task, const ClasswiseCounts& counts,
                              const std::vector<std::string>& class_names);

}  // namespace milsed
