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

#include "milsed/metrics.h"

#include <cmath>
#include <iomanip>
#include <sstream>
#include <utility>

namespace milsed {

namespace {

// Absorbs binary rounding of decimal times such as 1.2 - 1.0.
constexpr double kTimeSlack = 1e-9;

}  // namespace

Prf f1(long long tp, long long fp, long long fn) {
  Prf r;
  if (tp + fp > 0) r.precision = double(tp) / double(tp + fp);
  if (tp + fn > 0) r.recall = double(tp) / double(tp + fn);
  if (r.precision + r.recall > 0.0) {
    r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  }
  return r;
}

bool events_match(const Event& ref, const Event& pred, const CollarConfig& collars) {
  if (std::abs(pred.onset - ref.onset) > collars.onset_collar + kTimeSlack) return false;
  const double off_collar =
      std::max(collars.offset_collar_abs, collars.offset_collar_rel * ref.length());
  return std::abs(pred.offset - ref.offset) <= off_collar + kTimeSlack;
}

ClasswiseCounts match_events(const EventList& refs, const EventList& preds, Index num_classes,
                             const CollarConfig& collars) {
  using Key = std::pair<std::string, int>;
  std::map<Key, std::pair<std::vector<Event>, std::vector<Event>>> groups;
  auto check = [num_classes](const Event& e) {
    if (!(e.onset < e.offset)) {
      throw Error("match_events: malformed event in clip '" + e.clip_id +
                  "' (onset must precede offset)");
    }
    if (e.class_index < 0 || e.class_index >= num_classes) {
      throw Error("match_events: class index out of range in clip '" + e.clip_id + "'");
    }
  };
  for (const Event& e : refs) {
    check(e);
    groups[{e.clip_id, e.class_index}].first.push_back(e);
  }
  for (const Event& e : preds) {
    check(e);
    groups[{e.clip_id, e.class_index}].second.push_back(e);
  }

  ClasswiseCounts counts(static_cast<std::size_t>(num_classes));
  for (auto& [key, lists] : groups) {
    auto& [r, p] = lists;
    auto by_onset = [](const Event& a, const Event& b) {
      return a.onset < b.onset || (a.onset == b.onset && a.offset < b.offset);
    };
    std::stable_sort(r.begin(), r.end(), by_onset);
    std::stable_sort(p.begin(), p.end(), by_onset);
    std::vector<bool> used(r.size(), false);
    long long tp = 0;
    for (const Event& pe : p) {
      for (std::size_t j = 0; j < r.size(); ++j) {
        if (!used[j] && events_match(r[j], pe, collars)) {
          used[j] = true;
          ++tp;
          break;
        }
      }
    }
    ClassCounts& c = counts[static_cast<std::size_t>(key.second)];
    c.tp += tp;
    c.fp += static_cast<long long>(p.size()) - tp;
    c.fn += static_cast<long long>(r.size()) - tp;
  }
  return counts;
}

double macro_f1(const ClasswiseCounts& counts) {
  double sum = 0.0;
  int active = 0;
  for (const ClassCounts& c : counts) {
    if (c.empty()) continue;
    sum += f1(c).f1;
    ++active;
  }
  return active > 0 ? sum / active : 0.0;
}

double micro_f1(const ClasswiseCounts& counts) {
  ClassCounts total;
  for (const ClassCounts& c : counts) total += c;
  return f1(total).f1;
}

ClipScores clip_f1(const WeakLabels& refs, const WeakLabels& preds, Index num_classes) {
  if (refs.size() != preds.size()) {
    throw Error("clip_f1: reference has " + std::to_string(refs.size()) +
                " clips, prediction has " + std::to_string(preds.size()));
  }
  ClipScores out;
  out.counts.resize(static_cast<std::size_t>(num_classes));
  for (const auto& [clip, ref] : refs) {
    auto it = preds.find(clip);
    if (it == preds.end()) {
      throw Error("clip_f1: clip '" + clip + "' missing from predictions");
    }
    const std::set<int>& pred = it->second;
    for (int c = 0; c < num_classes; ++c) {
      const bool r = ref.count(c) != 0, p = pred.count(c) != 0;
      ClassCounts& k = out.counts[static_cast<std::size_t>(c)];
      if (r && p) ++k.tp;
      if (!r && p) ++k.fp;
      if (r && !p) ++k.fn;
    }
  }
  out.macro = macro_f1(out.counts);
  out.micro = micro_f1(out.counts);
  return out;
}

namespace {

std::string class_label(const std::vector<std::string>& names, std::size_t c) {
  return c < names.size() ? names[c] : std::to_string(c);
}

}  // namespace

std::string format_report(const std::string& title, const ClasswiseCounts& counts,
                          const std::vector<std::string>& class_names) {
  std::size_t width = 5;
  for (const auto& n : class_names) width = std::max(width, n.size());
  std::ostringstream os;
  os << title << '\n';
  os << std::left << std::setw(int(width)) << "class" << std::right << std::setw(7) << "tp"
     << std::setw(7) << "fp" << std::setw(7) << "fn" << std::setw(8) << "P" << std::setw(8)
     << "R" << std::setw(8) << "F1" << '\n';
  os << std::fixed << std::setprecision(3);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    const Prf s = f1(counts[c]);
    os << std::left << std::setw(int(width)) << class_label(class_names, c) << std::right
       << std::setw(7) << counts[c].tp << std::setw(7) << counts[c].fp << std::setw(7)
       << counts[c].fn << std::setw(8) << s.precision << std::setw(8) << s.recall
       << std::setw(8) << s.f1 << '\n';
  }
  os << std::left << std::setw(int(width)) << "macro" << std::right << std::setw(45)
     << macro_f1(counts) << '\n';
  return os.str();
}

std::string format_report_csv(const std::string& task, const ClasswiseCounts& counts,
                              const std::vector<std::string>& class_names) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6);
  double p_sum = 0.0, r_sum = 0.0;
  int active = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    const Prf s = f1(counts[c]);
    os << task << ',' << class_label(class_names, c) << ',' << counts[c].tp << ','
       << counts[c].fp << ',' << counts[c].fn << ',' << s.precision << ',' << s.recall << ','
       << s.f1 << '\n';
    if (!counts[c].empty()) {
      p_sum += s.precision;
      r_sum += s.recall;
      ++active;
    }
  }
  const double n = active > 0 ? active : 1;
  os << task << ",macro,,,," << p_sum / n << ',' << r_sum / n << ',' << macro_f1(counts)
     << '\n';
  return os.str();
}

}  // namespace milsed
