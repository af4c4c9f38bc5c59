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

#include "milsed/data.h"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

namespace milsed {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "validation") return Split::kValidation;
  if (s == "test") return Split::kTest;
  throw Error("unknown split '" + std::string(s) + "' (train|validation|test)");
}

EventList DatasetManifest::all_strong() const {
  EventList out;
  for (const ManifestEntry& e : entries) out.insert(out.end(), e.strong.begin(), e.strong.end());
  return out;
}

WeakLabels DatasetManifest::weak_labels() const {
  WeakLabels out;
  for (const ManifestEntry& e : entries) out[e.clip_id] = e.weak;
  return out;
}

std::vector<std::vector<int>> DatasetManifest::weak_label_lists() const {
  std::vector<std::vector<int>> out;
  for (const ManifestEntry& e : entries) out.emplace_back(e.weak.begin(), e.weak.end());
  return out;
}

std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

std::string format_seconds(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", x);
  return buf;
}

double parse_double(std::string_view s, const std::string& context) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error(context + ": cannot parse number '" + std::string(s) + "'");
  }
  return v;
}

namespace {

std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open '" + path.string() + "'");
  return is;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write '" + path.string() + "'");
  return os;
}

std::set<int> parse_label_set(const std::string& field, const std::vector<std::string>& names,
                              const std::string& context) {
  std::set<int> out;
  if (field.empty()) return out;
  for (const std::string& name : split_fields(field, ';')) {
    if (name.empty()) continue;
    const int c = class_index(names, name);
    if (c < 0) throw Error(context + ": unknown class name '" + name + "'");
    out.insert(c);
  }
  return out;
}

std::string join_labels(const std::set<int>& labels, const std::vector<std::string>& names) {
  std::string out;
  for (int c : labels) {
    if (!out.empty()) out += ';';
    out += names.at(static_cast<std::size_t>(c));
  }
  return out;
}

}  // namespace

void write_matrix_text(std::ostream& os, const Matrix& m) {
  os << m.rows() << ' ' << m.cols() << '\n';
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      if (c > 0) os << ' ';
      os << format_double(m(r, c));
    }
    os << '\n';
  }
}

Matrix read_matrix_text(std::istream& is, const std::string& context, int* line_no) {
  int local_line = 0;
  int& line = line_no != nullptr ? *line_no : local_line;
  std::string text;
  if (!std::getline(is, text)) throw Error(context + ": missing header line");
  ++line;
  const auto head = split_fields(text, ' ');
  if (head.size() != 2) {
    throw Error(context + ": line " + std::to_string(line) + ": header must be 'rows cols'");
  }
  const double rows_d = parse_double(head[0], context + ": line " + std::to_string(line));
  const double cols_d = parse_double(head[1], context + ": line " + std::to_string(line));
  if (rows_d < 0 || cols_d < 0 || rows_d != std::floor(rows_d) || cols_d != std::floor(cols_d)) {
    throw Error(context + ": line " + std::to_string(line) + ": bad dimensions");
  }
  const Index rows = static_cast<Index>(rows_d), cols = static_cast<Index>(cols_d);
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    if (!std::getline(is, text)) {
      throw Error(context + ": expected " + std::to_string(rows) + " rows, found " +
                  std::to_string(r));
    }
    ++line;
    const auto fields = split_fields(text, ' ');
    if (static_cast<Index>(fields.size()) != cols) {
      throw Error(context + ": line " + std::to_string(line) + ": expected " +
                  std::to_string(cols) + " values, found " + std::to_string(fields.size()));
    }
    for (Index c = 0; c < cols; ++c) {
      const double v = parse_double(fields[static_cast<std::size_t>(c)],
                                    context + ": line " + std::to_string(line));
      if (!std::isfinite(v)) {
        throw Error(context + ": line " + std::to_string(line) + ": non-finite value");
      }
      m(r, c) = v;
    }
  }
  return m;
}

FeatureSequence load_features(const fs::path& path, const std::string& clip_id,
                              double frame_hop) {
  std::ifstream is = open_in(path);
  FeatureSequence seq;
  seq.clip_id = clip_id.empty() ? path.stem().string() : clip_id;
  seq.frame_hop = frame_hop;
  seq.frames = read_matrix_text(is, path.string());
  std::string rest;
  while (std::getline(is, rest)) {
    if (!rest.empty() && rest != "\r") {
      throw Error(path.string() + ": trailing data after " + std::to_string(seq.frames.rows()) +
                  " rows");
    }
  }
  if (seq.frames.rows() < 1 || seq.frames.cols() < 1) {
    throw Error(path.string() + ": feature matrix must have T >= 1 and d >= 1");
  }
  return seq;
}

void save_features(const fs::path& path, const Matrix& frames) {
  std::ofstream os = open_out(path);
  write_matrix_text(os, frames);
}

std::vector<std::string> load_classes(const fs::path& path) {
  std::ifstream is = open_in(path);
  std::vector<std::string> names;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (class_index(names, line) >= 0) {
      throw Error(path.string() + ": duplicate class '" + line + "'");
    }
    names.push_back(line);
  }
  if (names.empty()) throw Error(path.string() + ": no classes");
  return names;
}

void save_classes(const fs::path& path, const std::vector<std::string>& names) {
  std::ofstream os = open_out(path);
  for (const auto& n : names) os << n << '\n';
}

int class_index(const std::vector<std::string>& names, std::string_view name) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<int>(i);
  }
  return -1;
}

EventList read_events_csv(const fs::path& path, const std::vector<std::string>& class_names) {
  std::ifstream is = open_in(path);
  EventList out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_fields(line, ',');
    const std::string ctx = path.string() + ": line " + std::to_string(line_no);
    if (line_no == 1 && !f.empty() && f[0] == "clip_id") continue;
    if (f.size() != 4) throw Error(ctx + ": expected clip_id,class,onset_s,offset_s");
    Event e;
    e.clip_id = f[0];
    e.class_index = class_index(class_names, f[1]);
    if (e.class_index < 0) throw Error(ctx + ": unknown class name '" + f[1] + "'");
    e.onset = parse_double(f[2], ctx);
    e.offset = parse_double(f[3], ctx);
    if (!(e.onset < e.offset)) throw Error(ctx + ": onset must precede offset");
    out.push_back(std::move(e));
  }
  return out;
}

void write_events_csv(std::ostream& os, const EventList& events,
                      const std::vector<std::string>& class_names) {
  os << "clip_id,class,onset_s,offset_s\n";
  for (const Event& e : events) {
    os << e.clip_id << ',' << class_names.at(static_cast<std::size_t>(e.class_index)) << ','
       << format_seconds(e.onset) << ',' << format_seconds(e.offset) << '\n';
  }
}

void write_events_csv(const fs::path& path, const EventList& events,
                      const std::vector<std::string>& class_names) {
  std::ofstream os = open_out(path);
  write_events_csv(os, events, class_names);
}

WeakLabels read_weak_csv(const fs::path& path, const std::vector<std::string>& class_names) {
  std::ifstream is = open_in(path);
  WeakLabels out;
  std::string line;
  int line_no = 0;
  bool manifest = false;  // a split manifest also carries feature paths
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_fields(line, ',');
    const std::string ctx = path.string() + ": line " + std::to_string(line_no);
    if (line_no == 1 && !f.empty() && f[0] == "clip_id") {
      manifest = f.size() == 3;
      continue;
    }
    if (f.size() != (manifest ? 3u : 2u)) {
      throw Error(ctx + (manifest ? ": expected clip_id,feature_path,labels" : ": expected clip_id,labels"));
    }
    if (out.count(f[0]) != 0) throw Error(ctx + ": duplicate clip '" + f[0] + "'");
    out[f[0]] = parse_label_set(f.back(), class_names, ctx);
  }
  return out;
}

void write_weak_csv(const fs::path& path, const WeakLabels& labels,
                    const std::vector<std::string>& class_names) {
  std::ofstream os = open_out(path);
  os << "clip_id,labels\n";
  for (const auto& [clip, set] : labels) os << clip << ',' << join_labels(set, class_names) << '\n';
}

DatasetManifest load_manifest(const fs::path& dir, Split split) {
  DatasetManifest m;
  m.root = dir;
  m.split = split;
  m.class_names = load_classes(dir / "classes.txt");
  if (fs::exists(dir / "dataset.json")) {
    std::ifstream is = open_in(dir / "dataset.json");
    try {
      const json meta = json::parse(is);
      m.frame_hop = meta.value("frame_hop", 0.02);
    } catch (const json::exception& e) {
      throw Error((dir / "dataset.json").string() + ": " + e.what());
    }
    if (!(m.frame_hop > 0.0)) throw Error("dataset.json: frame_hop must be positive");
  }
  const fs::path csv = dir / (to_string(split) + ".csv");
  std::ifstream is = open_in(csv);
  std::string line;
  int line_no = 0;
  std::map<std::string, std::size_t> by_id;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_fields(line, ',');
    const std::string ctx = csv.string() + ": line " + std::to_string(line_no);
    if (line_no == 1 && !f.empty() && f[0] == "clip_id") continue;
    if (f.size() != 3) throw Error(ctx + ": expected clip_id,feature_path,labels");
    if (by_id.count(f[0]) != 0) throw Error(ctx + ": duplicate clip '" + f[0] + "'");
    ManifestEntry e;
    e.clip_id = f[0];
    e.feature_path = f[1];
    e.weak = parse_label_set(f[2], m.class_names, ctx);
    by_id[e.clip_id] = m.entries.size();
    m.entries.push_back(std::move(e));
  }
  const fs::path strong = dir / (to_string(split) + "_strong.csv");
  if (fs::exists(strong)) {
    m.has_strong = true;
    for (Event& e : read_events_csv(strong, m.class_names)) {
      auto it = by_id.find(e.clip_id);
      if (it == by_id.end()) {
        throw Error(strong.string() + ": event for unknown clip '" + e.clip_id + "'");
      }
      m.entries[it->second].strong.push_back(std::move(e));
    }
  }
  return m;
}

void save_manifest(const DatasetManifest& m) {
  fs::create_directories(m.root);
  save_classes(m.root / "classes.txt", m.class_names);
  {
    std::ofstream os = open_out(m.root / "dataset.json");
    os << json{{"frame_hop", m.frame_hop}}.dump() << '\n';
  }
  std::ofstream os = open_out(m.root / (to_string(m.split) + ".csv"));
  os << "clip_id,feature_path,labels\n";
  for (const ManifestEntry& e : m.entries) {
    os << e.clip_id << ',' << e.feature_path << ',' << join_labels(e.weak, m.class_names) << '\n';
  }
  if (m.has_strong) {
    write_events_csv(m.root / (to_string(m.split) + "_strong.csv"), m.all_strong(),
                     m.class_names);
  }
}

void check_manifest(const DatasetManifest& m) {
  for (const ManifestEntry& e : m.entries) {
    if (!fs::exists(m.feature_file(e))) {
      throw Error("manifest: feature file '" + m.feature_file(e).string() + "' for clip '" +
                  e.clip_id + "' does not exist");
    }
    for (const Event& ev : e.strong) {
      if (e.weak.count(ev.class_index) == 0) {
        throw Error("manifest: clip '" + e.clip_id + "' has a strong event of class '" +
                    m.class_names.at(static_cast<std::size_t>(ev.class_index)) +
                    "' missing from its weak labels");
      }
    }
  }
}

std::vector<double> class_durations(const EventList& events,
                                    const std::vector<std::string>& class_names) {
  std::vector<double> sum(class_names.size(), 0.0);
  std::vector<int> count(class_names.size(), 0);
  for (const Event& e : events) {
    const auto c = static_cast<std::size_t>(e.class_index);
    sum.at(c) += e.length();
    ++count.at(c);
  }
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    if (count[c] == 0) {
      throw Error("class_durations: class '" + class_names[c] + "' has no events");
    }
    sum[c] /= count[c];
  }
  return sum;
}

// ---------------------------------------------------------------------------
// Synthetic data

const std::vector<ComboCount>& SyntheticSpec::combos(Split s) const {
  switch (s) {
    case Split::kTrain: return train;
    case Split::kValidation: return validation;
    case Split::kTest: return test;
  }
  return train;
}

void SyntheticSpec::validate() const {
  const Index c = num_classes();
  if (c < 1) throw Error("synthetic spec: need at least one class");
  if (dim < 1 || frames < 1 || !(frame_hop > 0.0)) {
    throw Error("synthetic spec: d, frames and frame_hop must be positive");
  }
  if (noise < 0.0) throw Error("synthetic spec: noise must be >= 0");
  if (background.mean.size() != dim) throw Error("synthetic spec: background mean must have d entries");
  if (static_cast<Index>(clusters.size()) != c || static_cast<Index>(durations.size()) != c) {
    throw Error("synthetic spec: need one cluster and one duration per class");
  }
  const double clip_len = double(frames) * frame_hop;
  for (Index i = 0; i < c; ++i) {
    const auto& cl = clusters[static_cast<std::size_t>(i)];
    if (cl.mean.size() != dim) throw Error("synthetic spec: cluster mean must have d entries");
    for (Index j = 0; j < i; ++j) {
      if (clusters[static_cast<std::size_t>(j)].mean == cl.mean) {
        throw Error("synthetic spec: cluster means of classes " + std::to_string(j) + " and " +
                    std::to_string(i) + " coincide");
      }
    }
    const auto& du = durations[static_cast<std::size_t>(i)];
    if (!(du.mean > 0.0) || du.jitter < 0.0 || du.jitter >= du.mean) {
      throw Error("synthetic spec: durations need mean > jitter >= 0");
    }
    if (du.mean + du.jitter > clip_len + 1e-9) {
      throw Error("synthetic spec: event duration of class '" + class_names[std::size_t(i)] +
                  "' can exceed the clip length " + format_double(clip_len) + " s");
    }
  }
  for (Split s : {Split::kTrain, Split::kValidation, Split::kTest}) {
    for (const ComboCount& cc : combos(s)) {
      if (cc.classes.empty()) throw Error("synthetic spec: empty class combination");
      if (cc.count < 0) throw Error("synthetic spec: negative clip count");
      std::set<int> seen;
      for (int k : cc.classes) {
        if (k < 0 || k >= c || !seen.insert(k).second) {
          throw Error("synthetic spec: bad class in combination");
        }
      }
    }
  }
}

namespace {

Vector json_vector(const json& j, Index dim, const char* what) {
  if (j.is_number()) return Vector::Constant(dim, j.get<double>());
  if (!j.is_array() || static_cast<Index>(j.size()) != dim) {
    throw Error(std::string("synthetic spec: ") + what + " must be a number or " +
                std::to_string(dim) + " numbers");
  }
  Vector v(dim);
  for (Index i = 0; i < dim; ++i) v(i) = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}

std::vector<ComboCount> parse_combos(const json& arr, const std::vector<std::string>& names) {
  std::vector<ComboCount> out;
  if (arr.is_null()) return out;
  for (const json& item : arr) {
    ComboCount cc;
    for (const json& n : item.at("classes")) {
      const int c = class_index(names, n.get<std::string>());
      if (c < 0) throw Error("synthetic spec: unknown class '" + n.get<std::string>() + "'");
      cc.classes.push_back(c);
    }
    cc.count = item.at("count").get<int>();
    out.push_back(std::move(cc));
  }
  return out;
}

}  // namespace

SyntheticSpec parse_synthetic_spec(const std::string& json_text) {
  SyntheticSpec s;
  try {
    const json j = json::parse(json_text);
    s.class_names = j.at("classes").get<std::vector<std::string>>();
    s.dim = j.value("d", Index(32));
    s.frames = j.value("frames", Index(200));
    s.frame_hop = j.value("frame_hop", 0.05);
    s.noise = j.value("noise", 0.1);
    s.seed = j.value("seed", std::uint64_t(0));
    const Index c = s.num_classes();
    if (s.dim < 1) throw Error("synthetic spec: d must be positive");

    const json bg = j.value("background", json::object());
    s.background.mean = json_vector(bg.value("mean", json(0.0)), s.dim, "background mean");
    s.background.spread = bg.value("spread", 0.5);

    const double separation = j.value("separation", 3.0);
    std::mt19937_64 rng(s.seed ^ 0x5bd1e995ULL);
    std::normal_distribution<double> normal(0.0, 1.0);
    const json clusters = j.value("clusters", json::array());
    for (Index i = 0; i < c; ++i) {
      ClusterSpec cl;
      Vector drawn(s.dim);
      for (Index k = 0; k < s.dim; ++k) drawn(k) = normal(rng) * separation / std::sqrt(double(s.dim));
      const json item = i < Index(clusters.size()) ? clusters[std::size_t(i)] : json::object();
      cl.mean = item.contains("mean") ? json_vector(item["mean"], s.dim, "cluster mean") : drawn;
      cl.spread = item.value("spread", 0.5);
      s.clusters.push_back(std::move(cl));
    }

    const json durs = j.value("durations", json::array());
    const json dflt = j.value("duration", json{{"mean", 1.0}, {"jitter", 0.0}});
    for (Index i = 0; i < c; ++i) {
      const json item = i < Index(durs.size()) ? durs[std::size_t(i)] : dflt;
      s.durations.push_back({item.value("mean", 1.0), item.value("jitter", 0.0)});
    }

    const json splits = j.at("splits");
    s.train = parse_combos(splits.value("train", json()), s.class_names);
    s.validation = parse_combos(splits.value("validation", json()), s.class_names);
    s.test = parse_combos(splits.value("test", json()), s.class_names);
  } catch (const json::exception& e) {
    throw Error(std::string("synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

SyntheticSpec load_synthetic_spec(const fs::path& path) {
  std::ifstream is = open_in(path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_synthetic_spec(ss.str());
}

std::vector<GeneratedClip> generate_clips(const SyntheticSpec& spec, Split split) {
  spec.validate();
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(split)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const Index T = spec.frames, d = spec.dim, C = spec.num_classes();
  std::vector<GeneratedClip> out;
  int serial = 0;
  for (const ComboCount& cc : spec.combos(split)) {
    for (int n = 0; n < cc.count; ++n) {
      GeneratedClip clip;
      char id[64];
      std::snprintf(id, sizeof(id), "%s_%05d", to_string(split).c_str(), serial++);
      clip.entry.clip_id = id;
      clip.entry.feature_path = "features/" + clip.entry.clip_id + ".txt";
      clip.entry.weak = std::set<int>(cc.classes.begin(), cc.classes.end());

      BoolMatrix active = BoolMatrix::Constant(T, C, false);
      for (int c : clip.entry.weak) {
        const DurationSpec& du = spec.durations[static_cast<std::size_t>(c)];
        const double dur = du.mean + du.jitter * (2.0 * unit(rng) - 1.0);
        const Index len = std::clamp<Index>(std::llround(dur / spec.frame_hop), 1, T);
        const Index start = std::min<Index>(
            static_cast<Index>(unit(rng) * double(T - len + 1)), T - len);
        active.col(c).segment(start, len).setConstant(true);
        clip.entry.strong.push_back({clip.entry.clip_id, c, double(start) * spec.frame_hop,
                                     double(start + len) * spec.frame_hop});
      }
      sort_events(clip.entry.strong);

      clip.frames.resize(T, d);
      for (Index t = 0; t < T; ++t) {
        Vector x = Vector::Zero(d);
        bool any = false;
        for (Index c = 0; c < C; ++c) {
          if (!active(t, c)) continue;
          any = true;
          const ClusterSpec& cl = spec.clusters[static_cast<std::size_t>(c)];
          for (Index k = 0; k < d; ++k) x(k) += cl.mean(k) + cl.spread * normal(rng);
        }
        if (!any) {
          for (Index k = 0; k < d; ++k) {
            x(k) = spec.background.mean(k) + spec.background.spread * normal(rng);
          }
        }
        for (Index k = 0; k < d; ++k) x(k) += spec.noise * normal(rng);
        clip.frames.row(t) = x.transpose();
      }
      out.push_back(std::move(clip));
    }
  }
  return out;
}

std::vector<DatasetManifest> generate(const SyntheticSpec& spec, const fs::path& dir) {
  std::vector<DatasetManifest> out;
  for (Split split : {Split::kTrain, Split::kValidation, Split::kTest}) {
    DatasetManifest m;
    m.root = dir;
    m.class_names = spec.class_names;
    m.split = split;
    m.frame_hop = spec.frame_hop;
    m.has_strong = true;
    for (GeneratedClip& clip : generate_clips(spec, split)) {
      save_features(dir / clip.entry.feature_path, clip.frames);
      m.entries.push_back(std::move(clip.entry));
    }
    save_manifest(m);
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace milsed
