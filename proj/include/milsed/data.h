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

// Dataset files.
//
// A dataset directory holds
//   classes.txt            one class name per line; index = line number
//   dataset.json           optional, {"frame_hop": seconds}
//   <split>.csv            header "clip_id,feature_path,labels"; labels are
//                          class names joined with ';'
//   <split>_strong.csv     optional strong labels, see events CSV below
//   features/...           feature files, paths relative to the directory
//
// Feature file: first line "T d", then T lines of d space-separated numbers
// in shortest round-trip form.
//
// Events CSV: header "clip_id,class,onset_s,offset_s", times with six
// decimals. Weak labels CSV: header "clip_id,labels".
//
// Features are expected to be precomputed log-mel magnitudes; the reference
// front end used 64 mel bands at 44.1 kHz, 40 ms frames with 50% overlap and
// a 2048-point FFT (500 frames per 10 s clip).

#pragma once

#include "milsed/encoder.h"
#include "milsed/metrics.h"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace milsed {

enum class Split { kTrain, kValidation, kTest };

std::string to_string(Split split);
Split parse_split(std::string_view s);

struct ManifestEntry {
  std::string clip_id;
  std::string feature_path;  // relative to the dataset directory
  std::set<int> weak;
  EventList strong;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<std::string> class_names;
  Split split = Split::kTrain;
  double frame_hop = 0.02;
  bool has_strong = false;
  std::vector<ManifestEntry> entries;

  Index num_classes() const { return static_cast<Index>(class_names.size()); }
  std::filesystem::path feature_file(const ManifestEntry& e) const { return root / e.feature_path; }
  EventList all_strong() const;
  WeakLabels weak_labels() const;
  std::vector<std::vector<int>> weak_label_lists() const;
};

/// Shortest decimal string that reads back to the same double.
std::string format_double(double x);
/// Fixed six-decimal seconds.
std::string format_seconds(double x);
double parse_double(std::string_view s, const std::string& context);

FeatureSequence load_features(const std::filesystem::path& path, const std::string& clip_id = "",
                              double frame_hop = 0.02);
void save_features(const std::filesystem::path& path, const Matrix& frames);
void write_matrix_text(std::ostream& os, const Matrix& m);
/// Reads "rows cols" then the body; `context` prefixes error messages.
Matrix read_matrix_text(std::istream& is, const std::string& context, int* line_no = nullptr);

std::vector<std::string> load_classes(const std::filesystem::path& path);
void save_classes(const std::filesystem::path& path, const std::vector<std::string>& names);
int class_index(const std::vector<std::string>& names, std::string_view name);

EventList read_events_csv(const std::filesystem::path& path,
                          const std::vector<std::string>& class_names);
void write_events_csv(std::ostream& os, const EventList& events,
                      const std::vector<std::string>& class_names);
void write_events_csv(const std::filesystem::path& path, const EventList& events,
                      const std::vector<std::string>& class_names);

/// Reads "clip_id,labels", or a split manifest "clip_id,feature_path,labels".
WeakLabels read_weak_csv(const std::filesystem::path& path,
                         const std::vector<std::string>& class_names);
void write_weak_csv(const std::filesystem::path& path, const WeakLabels& labels,
                    const std::vector<std::string>& class_names);

DatasetManifest load_manifest(const std::filesystem::path& dir, Split split);
void save_manifest(const DatasetManifest& manifest);
/// Every feature file exists and every strong event's class is a weak label.
void check_manifest(const DatasetManifest& manifest);

/// Mean event length per class.
std::vector<double> class_durations(const EventList& events,
                                    const std::vector<std::string>& class_names);

struct ClusterSpec {
  Vector mean;
  double spread = 0.5;
};

struct DurationSpec {
  double mean = 1.0;  // seconds
  double jitter = 0.0;
};

struct ComboCount {
  std::vector<int> classes;
  int count = 0;
};

/// Synthetic weakly-labelled dataset description.
struct SyntheticSpec {
  std::vector<std::string> class_names;
  Index dim = 32;
  Index frames = 200;
  double frame_hop = 0.05;
  double noise = 0.1;
  std::uint64_t seed = 0;
  ClusterSpec background;
  std::vector<ClusterSpec> clusters;
  std::vector<DurationSpec> durations;
  std::vector<ComboCount> train, validation, test;

  Index num_classes() const { return static_cast<Index>(class_names.size()); }
  const std::vector<ComboCount>& combos(Split s) const;
  void validate() const;
};

/// Parses the JSON form (see README). Cluster means not given explicitly are
/// drawn as separation * N(0, I / d) from `seed`.
SyntheticSpec parse_synthetic_spec(const std::string& json_text);
SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);

struct GeneratedClip {
  ManifestEntry entry;
  Matrix frames;
};

/// Draws the clips of one split, deterministic in (spec.seed, split).
std::vector<GeneratedClip> generate_clips(const SyntheticSpec& spec, Split split);

/// Writes the full dataset directory; returns the three manifests.
std::vector<DatasetManifest> generate(const SyntheticSpec& spec, const std::filesystem::path& dir);

}  // namespace milsed
