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

// milsed command-line tool: gen / train / predict / eval / alloc.
//
// Exit codes: 0 success, 2 usage or validation error, 1 internal error.
// Reports go to stdout, progress and warnings to stderr.

#include "milsed/data.h"
#include "milsed/metrics.h"
#include "milsed/postprocess.h"
#include "milsed/trainer.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace milsed;

namespace {

// Thrown for problems with the command line itself.
struct UsageError : Error {
  using Error::Error;
};

constexpr const char* kFormats = R"(File formats
  classes.txt        one class name per line
  <split>.csv        clip_id,feature_path,labels   (labels joined by ';')
  <split>_strong.csv clip_id,class,onset_s,offset_s
  dataset.json       optional {"frame_hop": seconds}
  features/*.txt     "T d" header, then T rows of d numbers
  clip CSV           clip_id,labels
  event CSV          clip_id,class,onset_s,offset_s
  history CSV        epoch,train_loss,val_macro_f1,lr
)";

double parse_beta(const std::string& s) {
  const auto slash = s.find('/');
  double v;
  if (slash == std::string::npos) {
    v = parse_double(s, "--beta");
  } else {
    const double num = parse_double(s.substr(0, slash), "--beta");
    const double den = parse_double(s.substr(slash + 1), "--beta");
    if (den == 0.0) throw UsageError("--beta: zero denominator");
    v = num / den;
  }
  if (!(v > 0.0)) throw UsageError("--beta must be positive, got " + s);
  return v;
}

std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write '" + path.string() + "'");
  os << text;
}

// ---------------------------------------------------------------------------

struct GenArgs {
  std::string spec;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int cmd_gen(const GenArgs& a) {
  if (!fs::exists(a.spec)) throw UsageError("spec file '" + a.spec + "' does not exist");
  SyntheticSpec spec;
  if (a.seed) {
    // Re-parse so that the seed also draws cluster means the file leaves open.
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(a.spec));
    } catch (const nlohmann::json::exception& e) {
      throw Error(std::string("synthetic spec: ") + e.what());
    }
    j["seed"] = *a.seed;
    spec = parse_synthetic_spec(j.dump());
  } else {
    spec = load_synthetic_spec(a.spec);
  }
  const auto manifests = generate(spec, a.out);
  for (const auto& m : manifests) {
    std::cout << to_string(m.split) << ": " << m.entries.size() << " clips\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string out;
  std::string pooling = "eatp";
  bool sds = false;
  bool sds_scaled = false;
  std::string df = "none";
  double m = 0.0;
  double lr = 0.0018;
  int batch = 64;
  std::uint64_t seed = 0;
  int max_epochs = 100;
  int patience = 10;
  double lr_decay = 0.8;
  int decay_every = 10;
  std::string encoder = "cnn";
  std::vector<Index> widths;
  std::vector<Index> freq_pool;
  std::string activation = "relu";
  bool quiet = false;
};

TrainConfig make_train_config(const TrainArgs& a, Index bands, Index num_classes) {
  TrainConfig c;
  ModelConfig& mc = c.model;
  const EncoderKind kind = parse_encoder_kind(a.encoder);
  const Activation act = parse_activation(a.activation);
  if (kind == EncoderKind::kIdentity) {
    mc.encoder = EncoderConfig::identity(bands);
  } else if (kind == EncoderKind::kMlp) {
    mc.encoder = EncoderConfig::mlp(bands, a.widths.empty() ? std::vector<Index>{64} : a.widths, act);
  } else {
    mc.encoder.kind = EncoderKind::kCnn;
    mc.encoder.input_bands = bands;
    mc.encoder.activation = act;
    if (!a.widths.empty()) mc.encoder.channels = a.widths;
    if (!a.freq_pool.empty()) mc.encoder.freq_pool = a.freq_pool;
  }
  mc.pooling = PoolingSpec::parse(a.pooling);
  mc.num_classes = num_classes;
  mc.sds = a.sds;
  mc.sds_scaled_logits = a.sds_scaled;
  mc.df = parse_df_mode(a.df);
  mc.m = a.m;
  c.lr = a.lr;
  c.batch_size = a.batch;
  c.seed = a.seed;
  c.max_epochs = a.max_epochs;
  c.patience = a.patience;
  c.lr_decay = a.lr_decay;
  c.decay_every = a.decay_every;
  c.validate();
  return c;
}

int cmd_train(const TrainArgs& a) {
  // Cheap checks first so a bad combination fails before any data is read.
  {
    ModelConfig probe;
    probe.pooling = PoolingSpec::parse(a.pooling);
    probe.sds = a.sds;
    probe.df = parse_df_mode(a.df);
    probe.m = a.m;
    probe.validate();
  }
  const DatasetManifest train_m = load_manifest(a.data, Split::kTrain);
  const DatasetManifest val_m = load_manifest(a.data, Split::kValidation);
  check_manifest(train_m);
  check_manifest(val_m);
  const std::vector<Sample> train_set = load_samples(train_m);
  const std::vector<Sample> val_set = load_samples(val_m);
  if (train_set.empty()) throw UsageError("training split is empty");
  const Index bands = train_set.front().features.cols();

  const TrainConfig config = make_train_config(a, bands, train_m.num_classes());
  if (config.model.df != DfMode::kNone && config.model.m == 1.0) {
    std::cerr << "warning: m = 1, DF degenerates to general feature\n";
  }
  const DFAllocation alloc = make_allocation(config.model, train_m.weak_label_lists());

  std::vector<double> durations;
  if (val_m.has_strong) {
    try {
      durations = class_durations(val_m.all_strong(), val_m.class_names);
    } catch (const Error& e) {
      std::cerr << "warning: no class durations stored (" << e.what() << ")\n";
    }
  } else {
    std::cerr << "warning: validation split has no strong labels, no class durations stored\n";
  }

  auto progress = [&](const EpochRecord& r, const Model&) {
    if (a.quiet) return;
    std::cerr << "epoch " << r.epoch << " loss " << r.train_loss << " val_macro_f1 "
              << r.val_macro_f1 << " lr " << r.lr << '\n';
  };
  TrainResult result = train(config, alloc, train_set, val_set, progress);

  Checkpoint ck{config, train_m.class_names, alloc, durations, train_m.frame_hop,
                result.model.params()};
  const fs::path out(a.out);
  save_checkpoint(out / "checkpoint.txt", ck);
  write_file(out / "history.csv", format_history(result.history));
  write_file(out / "allocation.txt", allocation_report(alloc, train_m.class_names));

  std::cout << "best_epoch " << result.best_epoch << '\n'
            << "val_macro_f1 " << format_double(result.best_val_macro_f1) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct PredictArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::string out;
  std::string beta = "1/3";
  std::optional<Index> fixed_window;
  std::string durations;  // strong-label CSV overriding the stored durations
  double alpha = kDefaultAlpha;
  double gamma = kDefaultGamma;
  std::string dump_probs;
  std::string dump_features;
};

int cmd_predict(const PredictArgs& a) {
  SmoothingConfig smoothing;
  smoothing.beta = parse_beta(a.beta);
  smoothing.fixed_window = a.fixed_window;
  if (a.fixed_window && (*a.fixed_window < 1 || *a.fixed_window % 2 == 0)) {
    throw UsageError("--fixed-window must be a positive odd integer");
  }
  if (!(a.alpha > 0.0 && a.alpha < 1.0) || !(a.gamma > 0.0 && a.gamma < 1.0)) {
    throw UsageError("--alpha and --gamma must lie in (0, 1)");
  }

  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const DatasetManifest manifest = load_manifest(a.data, parse_split(a.split));
  if (manifest.class_names != ck.class_names) {
    throw UsageError("class list of '" + a.data + "' does not match the checkpoint");
  }
  check_manifest(manifest);
  smoothing.frame_hop = manifest.frame_hop;
  smoothing.durations = ck.durations;
  if (!a.durations.empty()) {
    smoothing.durations = class_durations(read_events_csv(a.durations, ck.class_names),
                                          ck.class_names);
  }
  const Index C = Index(ck.class_names.size());
  if (!smoothing.fixed_window && Index(smoothing.durations.size()) != C) {
    throw UsageError("no class durations available; pass --durations or --fixed-window");
  }
  const std::vector<Index> windows = smoothing.windows(C);

  Model model = ck.model();
  WeakLabels clips;
  EventList events;
  std::ostringstream probs_csv, feats_csv;
  probs_csv << "clip_id,frame";
  for (const auto& n : ck.class_names) probs_csv << ',' << n;
  probs_csv << '\n';
  bool feats_header = false;

  for (const ManifestEntry& e : manifest.entries) {
    const FeatureSequence seq = load_features(manifest.feature_file(e), e.clip_id,
                                              manifest.frame_hop);
    const Model::Inference r = model.infer(seq.frames);
    const ClipPrediction clip = predict_clip(r.clip_probs, a.alpha);
    std::set<int>& labels = clips[e.clip_id];
    for (Index c = 0; c < C; ++c) {
      if (clip.labels(c)) labels.insert(int(c));
    }
    const BoolMatrix frames = smooth_pipeline(r.frame_probs, clip.labels, windows, a.gamma);
    EventList ev = frames_to_events(frames, manifest.frame_hop, e.clip_id);
    events.insert(events.end(), ev.begin(), ev.end());

    if (!a.dump_probs.empty()) {
      for (Index t = 0; t < r.frame_probs.rows(); ++t) {
        probs_csv << e.clip_id << ',' << t;
        for (Index c = 0; c < C; ++c) probs_csv << ',' << format_double(r.frame_probs(t, c));
        probs_csv << '\n';
      }
    }
    if (!a.dump_features.empty()) {
      if (!feats_header) {
        feats_csv << "clip_id,frame";
        for (Index j = 0; j < r.reps.cols(); ++j) feats_csv << ",f" << j;
        feats_csv << '\n';
        feats_header = true;
      }
      for (Index t = 0; t < r.reps.rows(); ++t) {
        feats_csv << e.clip_id << ',' << t;
        for (Index j = 0; j < r.reps.cols(); ++j) feats_csv << ',' << format_double(r.reps(t, j));
        feats_csv << '\n';
      }
    }
  }
  sort_events(events);

  const fs::path out(a.out);
  fs::create_directories(out);
  write_weak_csv(out / "clips.csv", clips, ck.class_names);
  write_events_csv(out / "events.csv", events, ck.class_names);
  if (!a.dump_probs.empty()) write_file(a.dump_probs, probs_csv.str());
  if (!a.dump_features.empty()) {
    if (!feats_header) feats_csv << "clip_id,frame\n";
    write_file(a.dump_features, feats_csv.str());
  }
  std::cout << "clips " << clips.size() << '\n' << "events " << events.size() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string classes;
  std::string ref_strong, ref_weak, pred_events, pred_clips;
  std::string csv;
  CollarConfig collars;
};

int cmd_eval(const EvalArgs& a) {
  const std::vector<std::string> names = load_classes(a.classes);
  const Index C = Index(names.size());
  std::string csv = "task,class,tp,fp,fn,precision,recall,f1\n";
  bool any = false;
  if (!a.ref_weak.empty() || !a.pred_clips.empty()) {
    if (a.ref_weak.empty() || a.pred_clips.empty()) {
      throw UsageError("tagging needs both --ref-weak and --pred-clips");
    }
    const WeakLabels ref = read_weak_csv(a.ref_weak, names);
    const WeakLabels pred = read_weak_csv(a.pred_clips, names);
    const ClipScores s = clip_f1(ref, pred, C);
    std::cout << format_report("Audio tagging", s.counts, names) << '\n';
    csv += format_report_csv("tagging", s.counts, names);
    any = true;
  }
  if (!a.ref_strong.empty() || !a.pred_events.empty()) {
    if (a.ref_strong.empty() || a.pred_events.empty()) {
      throw UsageError("event detection needs both --ref-strong and --pred-events");
    }
    const EventList ref = read_events_csv(a.ref_strong, names);
    const EventList pred = read_events_csv(a.pred_events, names);
    const ClasswiseCounts counts = match_events(ref, pred, C, a.collars);
    std::cout << format_report("Event detection", counts, names);
    csv += format_report_csv("events", counts, names);
    any = true;
  }
  if (!any) throw UsageError("nothing to evaluate");
  if (!a.csv.empty()) write_file(a.csv, csv);
  return 0;
}

// ---------------------------------------------------------------------------

struct AllocArgs {
  std::string data;
  std::string df = "dfw";
  double m = 0.0;
  Index d = 160;
};

int cmd_alloc(const AllocArgs& a) {
  const DatasetManifest train_m = load_manifest(a.data, Split::kTrain);
  const DfMode mode = parse_df_mode(a.df);
  if (mode == DfMode::kNone) throw UsageError("--df must be df1 or dfw");
  if (a.m == 1.0) std::cerr << "warning: m = 1, DF degenerates to general feature\n";
  const DFAllocation alloc = allocate(
      count_cooccurrence(train_m.weak_label_lists(), train_m.num_classes()), mode, a.m, a.d);
  std::cout << allocation_report(alloc, train_m.class_names);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly-supervised MIL sound event detection"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML/INI file with one [section] per subcommand (flags take precedence)");
  app.footer(kFormats);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic dataset from a JSON spec");
  g->add_option("spec", gen.spec, "Synthetic dataset spec (JSON)")->required();
  g->add_option("-o,--out", gen.out, "Output dataset directory")->required();
  g->add_option("--seed", gen.seed, "Override the spec's seed");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model; writes checkpoint.txt, history.csv and allocation.txt");
  t->add_option("-d,--data", tr.data, "Dataset directory (train and validation splits)")->required();
  t->add_option("-o,--out", tr.out, "Output directory")->required();
  t->add_option("--pooling", tr.pooling, "Pooling module")
      ->check(CLI::IsMember({"igmp", "igap", "igsp", "iatp", "egmp", "egap", "egsp", "eatp"}))
      ->capture_default_str();
  t->add_flag("--sds", tr.sds, "Specialized decision surface for frame predictions (atp only)");
  t->add_flag("--sds-scaled", tr.sds_scaled, "Divide SDS logits by the feature dimension");
  t->add_option("--df", tr.df, "Disentangled features")
      ->check(CLI::IsMember({"none", "df1", "dfw"}))
      ->capture_default_str();
  t->add_option("--m", tr.m, "Minimum subspace fraction in [0, 1]")->capture_default_str();
  t->add_option("--lr", tr.lr, "Adam learning rate")->capture_default_str();
  t->add_option("--batch", tr.batch, "Batch size")->capture_default_str();
  t->add_option("--seed", tr.seed, "Random seed")->capture_default_str();
  t->add_option("--max-epochs", tr.max_epochs, "Maximum epochs")->capture_default_str();
  t->add_option("--patience", tr.patience, "Early-stopping patience")->capture_default_str();
  t->add_option("--lr-decay", tr.lr_decay, "Learning-rate multiplier")->capture_default_str();
  t->add_option("--decay-every", tr.decay_every, "Epochs between decays")->capture_default_str();
  t->add_option("--encoder", tr.encoder, "Encoder kind")
      ->check(CLI::IsMember({"identity", "mlp", "cnn"}))
      ->capture_default_str();
  t->add_option("--widths", tr.widths, "mlp layer widths or cnn channels, comma separated")->delimiter(',');
  t->add_option("--freq-pool", tr.freq_pool, "cnn frequency pooling per block, comma separated")->delimiter(',');
  t->add_option("--activation", tr.activation, "Encoder activation")
      ->check(CLI::IsMember({"relu", "tanh", "linear"}))
      ->capture_default_str();
  t->add_flag("-q,--quiet", tr.quiet, "No per-epoch progress");

  PredictArgs pr;
  auto* p = app.add_subcommand("predict", "Clip labels and events for one split; writes clips.csv and events.csv");
  p->add_option("-c,--checkpoint", pr.checkpoint, "Checkpoint file")->required();
  p->add_option("-d,--data", pr.data, "Dataset directory")->required();
  p->add_option("--split", pr.split, "Split to predict")
      ->check(CLI::IsMember({"train", "validation", "test"}))
      ->capture_default_str();
  p->add_option("-o,--out", pr.out, "Output directory")->required();
  p->add_option("--beta", pr.beta, "Median window fraction (1/2, 1/3, 1/4, 1/5 or a number)")
      ->capture_default_str();
  p->add_option("--fixed-window", pr.fixed_window, "Same odd window for every class");
  p->add_option("--durations", pr.durations, "Strong-label CSV for class durations");
  p->add_option("--alpha", pr.alpha, "Clip threshold")->capture_default_str();
  p->add_option("--gamma", pr.gamma, "Frame threshold")->capture_default_str();
  p->add_option("--dump-probs", pr.dump_probs, "Write clip_id,frame,<class...> probabilities");
  p->add_option("--dump-features", pr.dump_features, "Write clip_id,frame,f0.. high-level features");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Tagging and event-based P/R/F1");
  e->add_option("--classes", ev.classes, "classes.txt")->required();
  e->add_option("--ref-strong", ev.ref_strong, "Reference event CSV");
  e->add_option("--ref-weak", ev.ref_weak, "Reference clip CSV or split manifest");
  e->add_option("--pred-events", ev.pred_events, "Predicted event CSV");
  e->add_option("--pred-clips", ev.pred_clips, "Predicted clip CSV");
  e->add_option("--csv", ev.csv, "Also write the report as CSV");
  e->add_option("--onset-collar", ev.collars.onset_collar, "Seconds")->capture_default_str();
  e->add_option("--offset-collar", ev.collars.offset_collar_abs, "Seconds")->capture_default_str();
  e->add_option("--offset-collar-rel", ev.collars.offset_collar_rel, "Fraction of reference length")
      ->capture_default_str();

  AllocArgs al;
  auto* a = app.add_subcommand("alloc", "Print the DF subspace allocation for a training split");
  a->add_option("-d,--data", al.data, "Dataset directory")->required();
  a->add_option("--df", al.df, "df1 or dfw")->check(CLI::IsMember({"df1", "dfw"}))->capture_default_str();
  a->add_option("--m", al.m, "Minimum subspace fraction")->capture_default_str();
  a->add_option("--dim", al.d, "Feature dimension")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*g) return cmd_gen(gen);
    if (*t) return cmd_train(tr);
    if (*p) return cmd_predict(pr);
    if (*e) return cmd_eval(ev);
    if (*a) return cmd_alloc(al);
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "internal error: " << err.what() << '\n';
    return 1;
  }
  return 2;
}
