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

#include "milsed/trainer.h"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace milsed {

namespace fs = std::filesystem;
using json = nlohmann::json;

void TrainConfig::validate() const {
  model.validate();
  if (!(lr > 0.0)) throw Error("train: learning rate must be positive");
  if (batch_size < 1) throw Error("train: batch size must be >= 1");
  if (!(lr_decay > 0.0) || decay_every < 1) throw Error("train: bad learning-rate decay");
  if (patience < 1) throw Error("train: patience must be >= 1");
  if (max_epochs < 1) throw Error("train: max epochs must be >= 1");
}

double TrainConfig::lr_at(int epoch) const {
  return lr * std::pow(lr_decay, double((epoch - 1) / decay_every));
}

std::vector<Sample> load_samples(const DatasetManifest& manifest) {
  std::vector<Sample> out;
  out.reserve(manifest.entries.size());
  for (const ManifestEntry& e : manifest.entries) {
    Sample s;
    s.clip_id = e.clip_id;
    s.features = load_features(manifest.feature_file(e), e.clip_id, manifest.frame_hop).frames;
    s.targets = RowVector::Zero(manifest.num_classes());
    for (int c : e.weak) s.targets(c) = 1.0;
    out.push_back(std::move(s));
  }
  return out;
}

double bce_loss(const RowVector& clip_probs, const RowVector& targets) {
  Graph g;
  Var p = g.constant(clip_probs);
  return binary_cross_entropy(p, targets).value()(0, 0);
}

void adam_step(ParameterSet& params, AdamState& state, double lr) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (Parameter& p : params) {
    if (!p.trainable) continue;
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
      throw ShapeError("adam_step: gradient of '" + p.name + "' is " + shape_string(p.grad) +
                       ", parameter is " + shape_string(p.value));
    }
    auto [it, inserted] = state.moments.try_emplace(p.name);
    auto& [m, v] = it->second;
    if (inserted) {
      m = Matrix::Zero(p.value.rows(), p.value.cols());
      v = Matrix::Zero(p.value.rows(), p.value.cols());
    }
    m = state.beta1 * m + (1.0 - state.beta1) * p.grad;
    v = state.beta2 * v + (1.0 - state.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.eps);
  }
}

bool EarlyStopping::update(double score) {
  if (!seen_ || score > best_) {
    seen_ = true;
    best_ = score;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

double clip_macro_f1(Model& model, const std::vector<Sample>& samples, double alpha) {
  WeakLabels ref, pred;
  for (const Sample& s : samples) {
    const Model::Inference r = model.infer(s.features);
    std::set<int>& p = pred[s.clip_id];
    std::set<int>& t = ref[s.clip_id];
    for (Index c = 0; c < r.clip_probs.size(); ++c) {
      if (r.clip_probs(c) >= alpha) p.insert(int(c));
      if (s.targets(c) > 0.5) t.insert(int(c));
    }
  }
  return clip_f1(ref, pred, model.config().num_classes).macro;
}

DFAllocation make_allocation(const ModelConfig& config,
                             const std::vector<std::vector<int>>& train_weak) {
  const Index d = config.encoder.output_dim();
  if (config.df == DfMode::kNone) return DFAllocation::none(config.num_classes, d);
  return allocate(count_cooccurrence(train_weak, config.num_classes), config.df, config.m, d);
}

TrainResult train(const TrainConfig& config, const DFAllocation& alloc,
                  const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.empty()) throw Error("train: empty training set");
  if (val_set.empty()) throw Error("train: empty validation set");
  for (const Sample& s : train_set) {
    if (s.targets.size() != config.model.num_classes) {
      throw Error("train: clip '" + s.clip_id + "' has the wrong number of targets");
    }
  }

  Model model(config.model, alloc, config.seed);
  TrainResult result{model, {}, 0, 0.0};
  AdamState adam;
  EarlyStopping stopper(config.patience);
  std::mt19937_64 shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const double lr = config.lr_at(epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += std::size_t(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + std::size_t(config.batch_size));
      std::vector<Matrix> inputs;
      Matrix targets(Index(end - start), config.model.num_classes);
      for (std::size_t i = start; i < end; ++i) {
        inputs.push_back(train_set[order[i]].features);
        targets.row(Index(i - start)) = train_set[order[i]].targets;
      }
      Graph g;
      BatchNormStats stats;
      std::vector<Model::Output> outs = model.forward(g, inputs, EncoderMode::kTrain, &stats);
      std::vector<Var> probs;
      for (const auto& o : outs) probs.push_back(o.clip_probs);
      Var loss = binary_cross_entropy(vcat(probs), targets);
      model.params().zero_grad();
      g.backward(loss);
      adam_step(model.params(), adam, lr);
      update_running_stats(config.model.encoder, model.params(), stats);
      loss_sum += loss.value()(0, 0) * double(end - start);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / double(train_set.size());
    rec.val_macro_f1 = clip_macro_f1(model, val_set);
    if (stopper.update(rec.val_macro_f1)) {
      result.model = model;
      result.best_epoch = epoch;
      result.best_val_macro_f1 = rec.val_macro_f1;
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec, model);
    if (stopper.should_stop()) break;
  }
  return result;
}

std::string format_history(const std::vector<EpochRecord>& history) {
  std::ostringstream os;
  os << "epoch,train_loss,val_macro_f1,lr\n";
  for (const EpochRecord& r : history) {
    os << r.epoch << ',' << format_double(r.train_loss) << ',' << format_double(r.val_macro_f1)
       << ',' << format_double(r.lr) << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Checkpoints

std::string config_to_json(const TrainConfig& c) {
  const ModelConfig& m = c.model;
  json enc = {{"kind", to_string(m.encoder.kind)},
              {"input_bands", m.encoder.input_bands},
              {"channels", m.encoder.channels},
              {"freq_pool", m.encoder.freq_pool},
              {"activation", to_string(m.encoder.activation)},
              {"bn_eps", m.encoder.bn_eps},
              {"bn_momentum", m.encoder.bn_momentum}};
  json model = {{"encoder", enc},
                {"pooling", m.pooling.name()},
                {"psi_scale", m.pooling.psi_scale},
                {"scale_d", m.pooling.scale_d},
                {"num_classes", m.num_classes},
                {"sds", m.sds},
                {"sds_scaled_logits", m.sds_scaled_logits},
                {"df", to_string(m.df)},
                {"m", m.m}};
  json j = {{"model", model},          {"lr", c.lr},
            {"batch_size", c.batch_size}, {"lr_decay", c.lr_decay},
            {"decay_every", c.decay_every}, {"patience", c.patience},
            {"max_epochs", c.max_epochs}, {"seed", c.seed}};
  return j.dump();
}

TrainConfig config_from_json(const std::string& text) {
  TrainConfig c;
  try {
    const json j = json::parse(text);
    const json& m = j.at("model");
    const json& e = m.at("encoder");
    c.model.encoder.kind = parse_encoder_kind(e.at("kind").get<std::string>());
    c.model.encoder.input_bands = e.at("input_bands").get<Index>();
    c.model.encoder.channels = e.at("channels").get<std::vector<Index>>();
    c.model.encoder.freq_pool = e.at("freq_pool").get<std::vector<Index>>();
    c.model.encoder.activation = parse_activation(e.at("activation").get<std::string>());
    c.model.encoder.bn_eps = e.at("bn_eps").get<double>();
    c.model.encoder.bn_momentum = e.at("bn_momentum").get<double>();
    c.model.pooling = PoolingSpec::parse(m.at("pooling").get<std::string>());
    c.model.pooling.psi_scale = m.at("psi_scale").get<double>();
    c.model.pooling.scale_d = m.at("scale_d").get<double>();
    c.model.num_classes = m.at("num_classes").get<Index>();
    c.model.sds = m.at("sds").get<bool>();
    c.model.sds_scaled_logits = m.at("sds_scaled_logits").get<bool>();
    c.model.df = parse_df_mode(m.at("df").get<std::string>());
    c.model.m = m.at("m").get<double>();
    c.lr = j.at("lr").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.lr_decay = j.at("lr_decay").get<double>();
    c.decay_every = j.at("decay_every").get<int>();
    c.patience = j.at("patience").get<int>();
    c.max_epochs = j.at("max_epochs").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& ex) {
    throw Error(std::string("checkpoint config: ") + ex.what());
  }
  return c;
}

Model Checkpoint::model() const { return Model(config.model, allocation, params); }

void save_checkpoint(const fs::path& path, const Checkpoint& ck) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write checkpoint '" + path.string() + "'");
  os << "milsed-checkpoint " << kCheckpointVersion << '\n';
  os << "config " << config_to_json(ck.config) << '\n';
  os << "frame_hop " << format_double(ck.frame_hop) << '\n';
  os << "classes " << ck.class_names.size() << '\n';
  for (const auto& n : ck.class_names) os << n << '\n';
  os << "df " << to_string(ck.allocation.mode) << ' ' << format_double(ck.allocation.m) << ' '
     << ck.allocation.d;
  for (Index k : ck.allocation.k) os << ' ' << k;
  os << '\n';
  os << "durations " << ck.durations.size();
  for (double d : ck.durations) os << ' ' << format_double(d);
  os << '\n';
  os << "params " << ck.params.size() << '\n';
  for (const Parameter& p : ck.params) {
    os << "param " << p.name << ' ' << (p.trainable ? 1 : 0) << '\n';
    write_matrix_text(os, p.value);
  }
}

namespace {

std::vector<std::string> words(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> out;
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

}  // namespace

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint '" + path.string() + "'");
  const std::string ctx = path.string();
  int line_no = 0;
  auto next = [&](const char* expect) {
    std::string line;
    if (!std::getline(is, line)) throw Error(ctx + ": truncated, expected " + expect);
    ++line_no;
    return line;
  };
  auto fail = [&](const std::string& what) {
    return Error(ctx + ": line " + std::to_string(line_no) + ": " + what);
  };

  Checkpoint ck;
  auto head = words(next("header"));
  if (head.size() != 2 || head[0] != "milsed-checkpoint") throw fail("not a milsed checkpoint");
  if (head[1] != std::to_string(kCheckpointVersion)) {
    throw fail("unsupported checkpoint version " + head[1]);
  }
  std::string line = next("config");
  if (line.rfind("config ", 0) != 0) throw fail("expected config");
  ck.config = config_from_json(line.substr(7));

  auto hop = words(next("frame_hop"));
  if (hop.size() != 2 || hop[0] != "frame_hop") throw fail("expected frame_hop");
  ck.frame_hop = parse_double(hop[1], ctx);

  auto cls = words(next("classes"));
  if (cls.size() != 2 || cls[0] != "classes") throw fail("expected classes");
  const int n_classes = std::stoi(cls[1]);
  for (int i = 0; i < n_classes; ++i) {
    std::string name = next("class name");
    if (!name.empty() && name.back() == '\r') name.pop_back();
    ck.class_names.push_back(name);
  }

  auto df = words(next("df"));
  if (df.size() < 4 || df[0] != "df") throw fail("expected df");
  ck.allocation.mode = parse_df_mode(df[1]);
  ck.allocation.m = parse_double(df[2], ctx);
  ck.allocation.d = std::stol(df[3]);
  for (std::size_t i = 4; i < df.size(); ++i) ck.allocation.k.push_back(std::stol(df[i]));
  if (Index(ck.allocation.k.size()) != ck.config.model.num_classes) {
    throw fail("df line has the wrong number of classes");
  }
  ck.allocation.score.weighted = Vector::Ones(ck.allocation.num_classes());
  ck.allocation.score.f = Vector::Ones(ck.allocation.num_classes());
  for (Index c = 0; c < ck.allocation.num_classes(); ++c) {
    ck.allocation.score.f(c) = double(ck.allocation.k[c]) / double(ck.allocation.d);
  }
  ck.allocation.score.r = 1.0;

  auto dur = words(next("durations"));
  if (dur.size() < 2 || dur[0] != "durations") throw fail("expected durations");
  for (std::size_t i = 2; i < dur.size(); ++i) ck.durations.push_back(parse_double(dur[i], ctx));
  if (ck.durations.size() != std::size_t(std::stoul(dur[1]))) throw fail("duration count mismatch");

  auto pr = words(next("params"));
  if (pr.size() != 2 || pr[0] != "params") throw fail("expected params");
  const int n_params = std::stoi(pr[1]);
  for (int i = 0; i < n_params; ++i) {
    auto p = words(next("param"));
    if (p.size() != 3 || p[0] != "param") throw fail("expected param");
    Matrix value = read_matrix_text(is, ctx + " (" + p[1] + ")", &line_no);
    ck.params.add(p[1], std::move(value), p[2] == "1");
  }
  if (Index(ck.class_names.size()) != ck.config.model.num_classes) {
    throw Error(ctx + ": class list does not match the model");
  }
  return ck;
}

}  // namespace milsed
