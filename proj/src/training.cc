// avsr/training.cc

// Copyright 2026  The avsr Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "avsr/training.h"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace avsr {

// ---------------------------------------------------------------------------
// Adam

void Adam::Step(ParamStore<float> &store) {
  for (const auto &[name, e] : store.params()) {
    if (store.IsFrozen(e.group)) continue;
    if (e.param.grad.null()) continue;
    if (!e.param.grad.AllFinite())
      throw DivergenceError("non-finite gradient for " + name);
  }
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1 - std::pow(b2, static_cast<double>(steps_));
  for (auto &[name, e] : store.params()) {
    if (store.IsFrozen(e.group)) continue;
    Parameter<float> &p = e.param;
    if (p.grad.null()) continue;
    Moments &mo = moments_[name];
    if (mo.m.null()) {
      mo.m = Tensor<float>(p.value.shape());
      mo.v = Tensor<float>(p.value.shape());
    }
    AVSR_ASSERT(mo.m.shape() == p.value.shape());
    float *theta = p.value.data(), *m = mo.m.data(), *v = mo.v.data();
    const float *g = p.grad.data();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double gi = g[i];
      const double mi = b1 * m[i] + (1 - b1) * gi;
      const double vi = b2 * v[i] + (1 - b2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      theta[i] = static_cast<float>(
          theta[i] - config_.lr * (mi / c1) / (std::sqrt(vi / c2) + config_.epsilon));
    }
  }
}

void Adam::Save(Checkpoint *ckpt) const {
  ckpt->meta["adam.step"] = std::to_string(steps_);
  ckpt->meta["adam.lr"] = FormatDouble(config_.lr);
  for (const auto &[name, mo] : moments_) {
    ckpt->tensors["adam.m/" + name] = mo.m;
    ckpt->tensors["adam.v/" + name] = mo.v;
  }
}

void Adam::Load(const Checkpoint &ckpt) {
  steps_ = ParseInt(ckpt.Meta("adam.step"), "adam.step");
  config_.lr = ParseDouble(ckpt.Meta("adam.lr"), "adam.lr");
  moments_.clear();
  for (const auto &[key, t] : ckpt.tensors) {
    if (key.rfind("adam.m/", 0) != 0) continue;
    const std::string name = key.substr(7);
    moments_[name].m = t;
    moments_[name].v = ckpt.Get("adam.v/" + name);
  }
}

bool ShouldStopEarly(const std::vector<double> &history, int delay) {
  AVSR_ASSERT(delay >= 1);
  if (history.empty()) return false;
  std::size_t best = 0;
  for (std::size_t i = 1; i < history.size(); ++i)
    if (history[i] > history[best]) best = i;
  return history.size() - 1 - best >= static_cast<std::size_t>(delay);
}

// ---------------------------------------------------------------------------
// Schedules

void TrainingSchedule::Validate(const ParamStore<float> &store) const {
  if (stages.empty()) AVSR_INVALID("training schedule has no stages");
  for (const StageSpec &s : stages) {
    if (s.trainable.empty())
      AVSR_INVALID("stage " << s.name << " trains no parameter group");
    for (const std::string &g : s.trainable)
      if (!store.HasGroup(g))
        AVSR_INVALID("stage " << s.name << " names unknown group '" << g << "'");
    if (s.batch_size < 1)
      AVSR_INVALID("stage " << s.name << ": batch size must be >= 1");
    if (!(s.lr >= 0)) AVSR_INVALID("stage " << s.name << ": negative lr");
    if (s.stop == StopRule::kFixedEpochs && s.epochs < 1)
      AVSR_INVALID("stage " << s.name << ": epochs must be >= 1");
    if (s.stop == StopRule::kEarlyStop && s.delay < 1)
      AVSR_INVALID("stage " << s.name << ": early-stop delay must be >= 1");
    if (s.max_epochs < 0)
      AVSR_INVALID("stage " << s.name << ": max_epochs must be >= 0");
  }
}

std::uint64_t TrainingSchedule::Fingerprint() const {
  std::ostringstream os;
  for (const StageSpec &s : stages) {
    os << s.name << ';' << static_cast<int>(s.head) << ';' << s.batch_size
       << ';' << FormatDouble(s.lr) << ';' << static_cast<int>(s.stop) << ';'
       << s.epochs << ';' << s.delay << ';' << s.max_epochs << ';';
    for (const std::string &g : s.trainable) os << g << ',';
    os << '\n';
  }
  Fnv1a h;
  h.Update(os.str());
  return h.digest();
}

TrainingSchedule StreamSchedule(StreamKind kind, const ScheduleConfig &c) {
  const std::string n = StreamName(kind);
  TrainingSchedule s;
  StageSpec tcn;
  tcn.name = n + "_tcn";
  tcn.trainable = {n + ".frontend", n + ".resnet", n + ".tcn"};
  tcn.head = Head::kTemporalConv;
  tcn.batch_size = c.stream_batch;
  tcn.lr = c.stream_lr;
  tcn.delay = c.delay;
  tcn.max_epochs = c.max_epochs;
  StageSpec bgru;
  bgru.name = n + "_bgru";
  bgru.trainable = {n + ".bgru", n + ".head"};
  bgru.batch_size = c.stream_batch;
  bgru.lr = c.stream_lr;
  bgru.stop = StopRule::kFixedEpochs;
  bgru.epochs = c.head_epochs;
  StageSpec full = tcn;
  full.name = n + "_full";
  full.trainable = {n + ".frontend", n + ".resnet", n + ".bgru", n + ".head"};
  full.head = Head::kRecurrent;
  s.stages = {tcn, bgru, full};
  return s;
}

TrainingSchedule FusionSchedule(const ScheduleConfig &c) {
  TrainingSchedule s;
  StageSpec head;
  head.name = "fusion_bgru";
  head.trainable = {"fusion.bgru", "fusion.head"};
  head.batch_size = c.fusion_batch;
  head.lr = c.fusion_lr;
  head.stop = StopRule::kFixedEpochs;
  head.epochs = c.head_epochs;
  StageSpec joint;
  joint.name = "fusion_joint";
  joint.trainable = {"audio.frontend", "audio.resnet", "audio.bgru",
                     "video.frontend", "video.resnet", "video.bgru",
                     "fusion.bgru",    "fusion.head"};
  joint.batch_size = c.fusion_batch;
  joint.lr = c.fusion_lr;
  joint.delay = c.delay;
  joint.max_epochs = c.max_epochs;
  s.stages = {head, joint};
  return s;
}

TrainingSchedule MfccSchedule(const ScheduleConfig &c) {
  StageSpec full;
  full.name = "mfcc_full";
  full.trainable = {"mfcc.input_bn", "mfcc.bgru", "mfcc.head"};
  full.batch_size = c.stream_batch;
  full.lr = c.mfcc_lr;
  full.delay = c.delay;
  full.max_epochs = c.max_epochs;
  TrainingSchedule s;
  s.stages = {full};
  return s;
}

TrainingSchedule ScheduleFor(Target target, const ScheduleConfig &c) {
  switch (target) {
    case Target::kAudio: return StreamSchedule(StreamKind::kAudio, c);
    case Target::kVideo: return StreamSchedule(StreamKind::kVideo, c);
    case Target::kAv: return FusionSchedule(c);
    case Target::kMfcc: return MfccSchedule(c);
  }
  AVSR_ERR("unreachable");
}

// ---------------------------------------------------------------------------
// Metrics

std::string MetricsCsv(const std::vector<EpochMetrics> &rows,
                       bool with_wall_seconds) {
  std::string out = "stage,epoch,train_loss,train_cr,val_cr";
  out += with_wall_seconds ? ",wall_seconds\n" : "\n";
  char buf[160];
  for (const EpochMetrics &m : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%d,%.6f,%.4f,%.4f", m.stage.c_str(),
                  m.epoch, m.train_loss, m.train_cr, m.val_cr);
    out += buf;
    if (with_wall_seconds) {
      std::snprintf(buf, sizeof(buf), ",%.2f", m.wall_seconds);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

void WriteMetricsCsv(const std::string &path,
                     const std::vector<EpochMetrics> &rows) {
  WriteFileBytes(path, MetricsCsv(rows));
}

// ---------------------------------------------------------------------------
// Epochs

namespace {

constexpr std::uint64_t kOrderTag = 1, kSampleTag = 2;

double GradNorm(const ParamStore<float> &store) {
  double sum = 0;
  for (const auto &[name, e] : store.params()) {
    if (store.IsFrozen(e.group) || e.param.grad.null()) continue;
    for (float g : e.param.grad.flat()) sum += static_cast<double>(g) * g;
  }
  return std::sqrt(sum);
}

void ScaleGrads(ParamStore<float> &store, double factor) {
  for (auto &[name, e] : store.params()) {
    if (store.IsFrozen(e.group) || e.param.grad.null()) continue;
    for (float &g : e.param.grad.flat()) g = static_cast<float>(g * factor);
  }
}

std::set<std::string> FrozenGroups(const ParamStore<float> &store,
                                   const StageSpec &stage) {
  std::set<std::string> out;
  for (const std::string &g : store.Groups())
    if (!stage.trainable.count(g)) out.insert(g);
  return out;
}

std::uint64_t FrozenHash(const ParamStore<float> &store,
                         const std::set<std::string> &frozen) {
  return frozen.empty() ? 0 : store.Hash(frozen);
}

}  // namespace

EpochMetrics TrainEpoch(Model &model, const std::vector<Sample> &train,
                        const StageSpec &stage, Adam &adam,
                        const TrainOptions &options, int stage_index,
                        int epoch) {
  if (train.empty()) AVSR_INVALID("cannot train on an empty split");
  const ModelSpec &spec = model.spec;
  const int n = static_cast<int>(train.size());
  const int batch = std::min(stage.batch_size, n);
  const std::uint64_t order_seed =
      DeriveRng(options.seed, {kOrderTag, static_cast<std::uint64_t>(stage_index),
                               static_cast<std::uint64_t>(epoch)})();
  AugmentConfig aug;
  aug.crop_size = spec.image_size;
  aug.jitter = DefaultJitter(spec.image_size);

  EpochMetrics out;
  out.stage = stage.name;
  out.epoch = epoch;
  double loss_sum = 0;
  int correct = 0;
  for (const std::vector<int> &idx : BatchOrder(n, batch, order_seed)) {
    std::vector<ClipInput> clips(idx.size());
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const Sample &s = train[idx[j]];
      Rng rng = DeriveRng(options.seed,
                          {kSampleTag, static_cast<std::uint64_t>(stage_index),
                           static_cast<std::uint64_t>(epoch),
                           static_cast<std::uint64_t>(idx[j])});
      ClipInput &c = clips[j];
      c.label = s.label;
      if (spec.UsesVideo())
        c.video = options.augment ? AugmentClip(s.video, aug, rng)
                                  : CenterCrop(s.video, spec.image_size);
      if (spec.UsesWaveform())
        c.audio = options.augment ? AugmentNoise(s.audio, options.noise, rng)
                                  : s.audio;
    }
    ModelInput<float> in = AssembleInput(spec, clips, model.video_stats);

    model.store.ZeroGrad();
    Tape<float> tape;
    ForwardContext<float> ctx(tape, model.store, NormMode::kTrain);
    Var<float> logits = ForwardLogits(ctx, spec, in, stage.head);
    LossOutput<float> loss =
        FrameLoss(logits, std::span<const int>(in.labels));
    const double lv = loss.loss.value()[0];
    if (!std::isfinite(lv))
      throw DivergenceError("non-finite loss in stage " + stage.name +
                            " epoch " + std::to_string(epoch));
    tape.Backward(loss.loss);

    const double norm = GradNorm(model.store);
    if (!std::isfinite(norm))
      throw DivergenceError("non-finite gradient in stage " + stage.name +
                            " epoch " + std::to_string(epoch));
    if (options.clip_norm > 0 && norm > options.clip_norm) {
      ScaleGrads(model.store, options.clip_norm / norm);
      ++out.clipped_batches;
      AVSR_LOG("gradient norm " << norm << " clipped to " << options.clip_norm
               << " (stage " << stage.name << ", epoch " << epoch << ")");
    }
    try {
      adam.Step(model.store);
    } catch (const DivergenceError &e) {
      throw DivergenceError(std::string(e.what()) + " in stage " + stage.name +
                            " epoch " + std::to_string(epoch));
    }

    const int b = static_cast<int>(idx.size());
    out.samples += b;
    loss_sum += lv * b;
    std::vector<Classification> cls =
        ClassifyFrames(loss.probs, logits.dim(0), b);
    for (int j = 0; j < b; ++j) correct += cls[j].label == in.labels[j];
  }
  out.train_loss = loss_sum / n;
  out.train_cr = static_cast<double>(correct) / n;
  return out;
}

// ---------------------------------------------------------------------------
// Schedules end to end

namespace {

// Progress through a schedule, persisted in checkpoints.
struct RunState {
  int stage = 0;
  int epoch = 0;  // completed epochs of the current stage
  std::vector<double> history;
  double best_cr = -1;
  int best_epoch = 0;
  std::uint64_t frozen_hash = 0;
  int clipped = 0;
  std::vector<EpochMetrics> metrics;
  std::vector<StageRecord> records;
};

std::string JoinDoubles(const std::vector<double> &v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i)
    s += (i ? "," : "") + FormatDouble(v[i]);
  return s;
}

std::vector<std::string> Split(const std::string &s, char sep) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

void SaveState(const Model &model, const Adam &adam,
               const ParamStore<float> *best, const RunState &st,
               const TrainingSchedule &schedule, const TrainOptions &options,
               const std::string &path) {
  Checkpoint c;
  PutModel(model, &c);
  adam.Save(&c);
  if (best) PutStoreTensors(*best, "best/", &c);
  c.meta["train.seed"] = std::to_string(options.seed);
  c.meta["train.schedule"] = HexDigest(schedule.Fingerprint());
  c.meta["train.stage"] = std::to_string(st.stage);
  c.meta["train.epoch"] = std::to_string(st.epoch);
  c.meta["train.history"] = JoinDoubles(st.history);
  c.meta["train.best_cr"] = FormatDouble(st.best_cr);
  c.meta["train.best_epoch"] = std::to_string(st.best_epoch);
  c.meta["train.frozen_hash"] = HexDigest(st.frozen_hash);
  c.meta["train.clipped"] = std::to_string(st.clipped);
  std::string rows;
  for (const EpochMetrics &m : st.metrics)
    rows += m.stage + ";" + std::to_string(m.epoch) + ";" +
            FormatDouble(m.train_loss) + ";" + FormatDouble(m.train_cr) + ";" +
            FormatDouble(m.val_cr) + ";" + FormatDouble(m.wall_seconds) + ";" +
            std::to_string(m.clipped_batches) + "\n";
  c.meta["train.metrics"] = rows;
  std::string recs;
  for (const StageRecord &r : st.records)
    recs += r.stage + ";" + std::to_string(r.epochs) + ";" +
            FormatDouble(r.best_val_cr) + ";" + std::to_string(r.best_epoch) +
            ";" + HexDigest(r.frozen_hash_before) + ";" +
            HexDigest(r.frozen_hash_after) + "\n";
  c.meta["train.records"] = recs;
  WriteCheckpoint(c, path);
}

std::uint64_t ParseHex(const std::string &s) {
  return std::stoull(s, nullptr, 16);
}

RunState LoadState(const Checkpoint &c, Model &model, Adam &adam,
                   ParamStore<float> &best, bool &have_best,
                   const TrainingSchedule &schedule,
                   const TrainOptions &options) {
  if (c.fingerprint != model.spec.Fingerprint())
    AVSR_INVALID("resume checkpoint was written for a different model ("
                 << HexDigest(c.fingerprint) << " vs "
                 << HexDigest(model.spec.Fingerprint()) << ")");
  if (c.Meta("train.schedule") != HexDigest(schedule.Fingerprint()))
    AVSR_INVALID("resume checkpoint was written for a different schedule");
  if (c.Meta("train.seed") != std::to_string(options.seed))
    AVSR_INVALID("resume checkpoint used seed " << c.Meta("train.seed")
                 << ", this run uses " << options.seed);
  const int expected = static_cast<int>(model.store.params().size() +
                                        2 * model.store.stats().size());
  if (LoadStoreTensors(c, "", &model.store) != expected)
    AVSR_INVALID("resume checkpoint lacks model tensors");
  model.video_stats.mean = ParseDouble(c.Meta("video.norm_mean"), "video.norm_mean");
  model.video_stats.std = ParseDouble(c.Meta("video.norm_std"), "video.norm_std");
  adam.Load(c);
  best = model.store;
  have_best = LoadStoreTensors(c, "best/", &best) == expected;

  RunState st;
  st.stage = static_cast<int>(ParseInt(c.Meta("train.stage"), "train.stage"));
  st.epoch = static_cast<int>(ParseInt(c.Meta("train.epoch"), "train.epoch"));
  for (const std::string &v : Split(c.Meta("train.history"), ','))
    st.history.push_back(ParseDouble(v, "train.history"));
  st.best_cr = ParseDouble(c.Meta("train.best_cr"), "train.best_cr");
  st.best_epoch =
      static_cast<int>(ParseInt(c.Meta("train.best_epoch"), "train.best_epoch"));
  st.frozen_hash = ParseHex(c.Meta("train.frozen_hash"));
  st.clipped = static_cast<int>(ParseInt(c.Meta("train.clipped"), "train.clipped"));
  for (const std::string &line : Split(c.Meta("train.metrics"), '\n')) {
    if (line.empty()) continue;
    std::vector<std::string> f = Split(line, ';');
    if (f.size() != 7) AVSR_INVALID("malformed metrics record in checkpoint");
    EpochMetrics m;
    m.stage = f[0];
    m.epoch = static_cast<int>(ParseInt(f[1], "epoch"));
    m.train_loss = ParseDouble(f[2], "train_loss");
    m.train_cr = ParseDouble(f[3], "train_cr");
    m.val_cr = ParseDouble(f[4], "val_cr");
    m.wall_seconds = ParseDouble(f[5], "wall_seconds");
    m.clipped_batches = static_cast<int>(ParseInt(f[6], "clipped"));
    st.metrics.push_back(m);
  }
  for (const std::string &line : Split(c.Meta("train.records"), '\n')) {
    if (line.empty()) continue;
    std::vector<std::string> f = Split(line, ';');
    if (f.size() != 6) AVSR_INVALID("malformed stage record in checkpoint");
    StageRecord r;
    r.stage = f[0];
    r.epochs = static_cast<int>(ParseInt(f[1], "epochs"));
    r.best_val_cr = ParseDouble(f[2], "best_val_cr");
    r.best_epoch = static_cast<int>(ParseInt(f[3], "best_epoch"));
    r.frozen_hash_before = ParseHex(f[4]);
    r.frozen_hash_after = ParseHex(f[5]);
    st.records.push_back(r);
  }
  if (st.stage < 0 || st.stage >= static_cast<int>(schedule.stages.size()))
    AVSR_INVALID("resume checkpoint names stage " << st.stage);
  return st;
}

}  // namespace

TrainResult RunSchedule(Model model, const Dataset &data,
                        const TrainingSchedule &schedule,
                        const TrainOptions &options, const Checkpoint *resume) {
  schedule.Validate(model.store);
  if (data.train.empty()) AVSR_INVALID("training split is empty");
  if (data.val.empty()) AVSR_INVALID("validation split is empty");
  if (data.num_classes() != model.spec.n_classes)
    AVSR_INVALID("dataset has " << data.num_classes() << " classes, model has "
                 << model.spec.n_classes);

  Adam adam;
  ParamStore<float> best;
  bool have_best = false;
  RunState st;
  if (resume) {
    st = LoadState(*resume, model, adam, best, have_best, schedule, options);
    AVSR_LOG("resuming at stage " << schedule.stages[st.stage].name
             << ", epoch " << st.epoch);
  }

  TrainResult result;
  int run_epochs = 0;
  const int n_stages = static_cast<int>(schedule.stages.size());
  for (; st.stage < n_stages; ++st.stage) {
    const StageSpec &stage = schedule.stages[st.stage];
    const std::set<std::string> frozen = FrozenGroups(model.store, stage);
    model.store.SetFrozenGroups(frozen);
    if (st.epoch == 0) {
      adam = Adam(AdamConfig{stage.lr});
      st.history.clear();
      st.best_cr = -1;
      st.best_epoch = 0;
      st.clipped = 0;
      have_best = false;
      st.frozen_hash = FrozenHash(model.store, frozen);
      std::string groups;
      for (const std::string &g : stage.trainable) groups += " " + g;
      AVSR_LOG("stage " << st.stage + 1 << "/" << n_stages << " " << stage.name
               << ": training" << groups << "; frozen hash "
               << HexDigest(st.frozen_hash));
    }

    while (true) {
      if (stage.stop == StopRule::kFixedEpochs) {
        if (st.epoch >= stage.epochs) break;
      } else {
        if (ShouldStopEarly(st.history, stage.delay)) break;
        if (stage.max_epochs > 0 && st.epoch >= stage.max_epochs) {
          AVSR_LOG("stage " << stage.name << " reached its cap of "
                   << stage.max_epochs << " epochs");
          break;
        }
      }
      const auto t0 = std::chrono::steady_clock::now();
      EpochMetrics m =
          TrainEpoch(model, data.train, stage, adam, options, st.stage,
                     st.epoch + 1);
      EvalOptions eo;
      eo.batch_size = options.eval_batch;
      eo.head = stage.head;
      m.val_cr = Evaluate(model, data.val, eo).cr();
      m.wall_seconds = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
      ++st.epoch;
      st.history.push_back(m.val_cr);
      st.metrics.push_back(m);
      st.clipped += m.clipped_batches;
      if (m.val_cr > st.best_cr) {
        st.best_cr = m.val_cr;
        st.best_epoch = st.epoch;
        if (stage.stop == StopRule::kEarlyStop) {
          best = model.store;
          have_best = true;
        }
      }
      AVSR_LOG(stage.name << " epoch " << st.epoch << ": loss " << m.train_loss
               << ", train CR " << m.train_cr << ", val CR " << m.val_cr
               << " (" << m.wall_seconds << " s)");
      if (!options.state_path.empty())
        SaveState(model, adam, have_best ? &best : nullptr, st, schedule,
                  options, options.state_path);
      ++run_epochs;
      if (options.interrupt_after > 0 && run_epochs >= options.interrupt_after) {
        model.store.SetFrozenGroups({});
        result.model = std::move(model);
        result.metrics = st.metrics;
        result.stages = st.records;
        return result;
      }
    }

    if (stage.stop == StopRule::kEarlyStop) {
      AVSR_ASSERT(have_best);
      model.store.CopyMatching(best);
    }
    StageRecord rec;
    rec.stage = stage.name;
    rec.epochs = st.epoch;
    rec.best_val_cr = st.best_cr;
    rec.best_epoch = st.best_epoch;
    rec.frozen_hash_before = st.frozen_hash;
    rec.frozen_hash_after = FrozenHash(model.store, frozen);
    if (rec.frozen_hash_after != rec.frozen_hash_before)
      AVSR_ERR("frozen parameters changed during stage " << stage.name);
    if (st.clipped > 0)
      AVSR_LOG("stage " << stage.name << ": gradient clipping was active in "
               << st.clipped << " batches");
    AVSR_LOG("stage " << stage.name << " done after " << rec.epochs
             << " epochs; best val CR " << rec.best_val_cr << " at epoch "
             << rec.best_epoch);
    st.records.push_back(rec);
    st.epoch = 0;
    st.history.clear();
  }

  model.store.SetFrozenGroups({});
  result.model = std::move(model);
  result.metrics = st.metrics;
  result.stages = st.records;
  for (std::size_t i = 0; i < result.stages.size(); ++i) {
    result.stages[i].trainable = schedule.stages[i].trainable;
    result.stages[i].frozen =
        FrozenGroups(result.model.store, schedule.stages[i]);
  }
  result.finished = true;
  return result;
}

NormStats TrainingVideoStats(const Dataset &data) {
  std::vector<const VideoClip *> clips;
  for (const Sample &s : data.train) clips.push_back(&s.video);
  if (clips.empty()) AVSR_INVALID("training split is empty");
  return ComputeNormStats(clips);
}

Model InitFusionFromStreams(const ModelSpec &spec, const Model &audio,
                            const Model &video, std::uint64_t seed) {
  if (spec.target != Target::kAv) AVSR_INVALID("fusion spec must target av");
  if (audio.spec.target != Target::kAudio)
    AVSR_INVALID("audio checkpoint holds a " << TargetName(audio.spec.target)
                 << " model");
  if (video.spec.target != Target::kVideo)
    AVSR_INVALID("video checkpoint holds a " << TargetName(video.spec.target)
                 << " model");
  if (audio.spec.frames != video.spec.frames || audio.spec.frames != spec.frames)
    AVSR_INVALID("frame-count mismatch between streams: audio "
                 << audio.spec.frames << ", video " << video.spec.frames
                 << ", fusion " << spec.frames);
  if (audio.spec.n_classes != spec.n_classes ||
      video.spec.n_classes != spec.n_classes)
    AVSR_INVALID("stream checkpoints were trained for a different class count");
  Model m = CreateModel(spec, seed);
  auto copy = [&](const Model &src, const char *prefix) {
    int need = 0;
    for (const auto &[name, e] : m.store.params())
      need += name.rfind(prefix, 0) == 0;
    for (const auto &[name, e] : m.store.stats())
      need += name.rfind(prefix, 0) == 0;
    int got = 0;
    try {
      got = m.store.CopyMatching(src.store, prefix);
    } catch (const Error &e) {
      AVSR_INVALID("stream checkpoint does not fit the fusion model: "
                   << e.what());
    }
    if (got != need)
      AVSR_INVALID(prefix << " stream checkpoint provides " << got << " of "
                   << need << " tensors");
  };
  copy(audio, "audio.");
  copy(video, "video.");
  m.video_stats = video.video_stats;
  return m;
}

}  // namespace avsr
