// tests/training-test.cc

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>

#include "avsr/training.h"
#include "test-util.h"

using namespace avsr;
using avsr::testing::RandomTensor;

namespace {

ParamStore<float> TwoGroupStore(Rng &rng) {
  ParamStore<float> s;
  s.Add("a.w", "a", RandomTensor<float>(Shape{3, 4}, rng));
  s.Add("b.w", "b", RandomTensor<float>(Shape{5}, rng));
  return s;
}

void RandomGrads(ParamStore<float> &s, Rng &rng) {
  for (auto &[name, e] : s.params())
    e.param.grad = RandomTensor<float>(e.param.value.shape(), rng);
}

// Small generated dataset shared by the schedule tests.
const Dataset &TinyData() {
  static const Dataset data = [] {
    SynthConfig c;
    c.n_classes = 3;
    c.train_per_class = 4;
    c.val_per_class = 2;
    c.test_per_class = 2;
    c.image_size = 16;
    auto dir = avsr::testing::TempDir("training-data");
    DatasetInfo info = GenerateDataset(c, dir);
    return LoadDataset(ReadManifest(info.manifest_path));
  }();
  return data;
}

ModelSpec TinySpec(Target t) {
  ModelSpec s;
  s.target = t;
  s.n_classes = 3;
  s.width = 0.125;
  s.cells = 4;
  s.fusion_cells = 4;
  s.image_size = 16;
  return s;
}

ScheduleConfig QuickSchedule() {
  ScheduleConfig c;
  c.stream_batch = 6;
  c.fusion_batch = 6;
  c.head_epochs = 2;
  c.delay = 1;
  c.max_epochs = 2;
  return c;
}

Model TinyModel(Target t, std::uint64_t seed = 3) {
  Model m = CreateModel(TinySpec(t), seed);
  m.video_stats = TrainingVideoStats(TinyData());
  return m;
}

}  // namespace

TEST_CASE("adam") {
  Rng rng(1);
  SUBCASE("zero gradient leaves parameters alone but counts the step") {
    ParamStore<float> s = TwoGroupStore(rng);
    const std::uint64_t before = s.Hash();
    s.ZeroGrad();
    Adam adam;
    adam.Step(s);
    adam.Step(s);
    CHECK(s.Hash() == before);
    CHECK(adam.steps() == 2);
  }
  SUBCASE("first step moves each coordinate by lr g / (|g| + eps)") {
    ParamStore<float> s = TwoGroupStore(rng);
    ParamStore<float> start = s;
    s.ZeroGrad();
    for (float &g : s.Get("a.w").grad.flat()) g = 0.37f;
    for (float &g : s.Get("b.w").grad.flat()) g = -2.5f;
    Adam adam(AdamConfig{0.01});
    adam.Step(s);
    for (const char *n : {"a.w", "b.w"}) {
      const auto &now = s.Get(n).value, &was = start.Get(n).value;
      const double g = s.Get(n).grad[0];
      const double expect = -0.01 * g / (std::abs(g) + 1e-8);
      for (std::size_t i = 0; i < now.size(); ++i)
        CHECK(now[i] - was[i] == doctest::Approx(expect).epsilon(1e-4));
    }
  }
  SUBCASE("ten steps against a scalar reference") {
    ParamStore<float> s = TwoGroupStore(rng);
    std::vector<double> theta(s.Get("a.w").value.vec().begin(),
                              s.Get("a.w").value.vec().end());
    std::vector<double> m(theta.size()), v(theta.size());
    Adam adam(AdamConfig{0.05});
    for (int t = 1; t <= 10; ++t) {
      RandomGrads(s, rng);
      const auto &g = s.Get("a.w").grad;
      for (std::size_t i = 0; i < theta.size(); ++i) {
        m[i] = 0.9 * m[i] + 0.1 * g[i];
        v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
        const double mh = m[i] / (1 - std::pow(0.9, t));
        const double vh = v[i] / (1 - std::pow(0.999, t));
        theta[i] -= 0.05 * mh / (std::sqrt(vh) + 1e-8);
      }
      adam.Step(s);
    }
    for (std::size_t i = 0; i < theta.size(); ++i)
      CHECK(s.Get("a.w").value[i] == doctest::Approx(theta[i]).epsilon(1e-5));
  }
  SUBCASE("zero learning rate is a no-op for any gradient") {
    ParamStore<float> s = TwoGroupStore(rng);
    const std::uint64_t before = s.Hash();
    Adam adam(AdamConfig{0.0});
    for (int i = 0; i < 5; ++i) {
      RandomGrads(s, rng);
      adam.Step(s);
    }
    CHECK(s.Hash() == before);
  }
  SUBCASE("frozen groups are skipped") {
    ParamStore<float> s = TwoGroupStore(rng);
    s.SetFrozenGroups({"b"});
    const std::uint64_t b_before = s.Hash({"b"});
    const std::uint64_t a_before = s.Hash({"a"});
    RandomGrads(s, rng);
    Adam adam;
    adam.Step(s);
    CHECK(s.Hash({"b"}) == b_before);
    CHECK(s.Hash({"a"}) != a_before);
  }
  SUBCASE("a NaN gradient fails before any update") {
    ParamStore<float> s = TwoGroupStore(rng);
    RandomGrads(s, rng);
    s.Get("b.w").grad[2] = std::numeric_limits<float>::quiet_NaN();
    const std::uint64_t before = s.Hash();
    Adam adam;
    CHECK_THROWS_WITH_AS(adam.Step(s), doctest::Contains("b.w"), DivergenceError);
    CHECK(s.Hash() == before);
  }
  SUBCASE("state round trip") {
    ParamStore<float> s = TwoGroupStore(rng);
    Adam a(AdamConfig{0.02});
    for (int i = 0; i < 3; ++i) {
      RandomGrads(s, rng);
      a.Step(s);
    }
    Checkpoint c;
    a.Save(&c);
    Adam b;
    b.Load(c);
    ParamStore<float> s2 = s;
    RandomGrads(s, rng);
    for (auto &[name, e] : s2.params()) e.param.grad = s.Get(name).grad;
    a.Step(s);
    b.Step(s2);
    CHECK(s.Hash() == s2.Hash());
    CHECK(b.steps() == 4);
  }
}

TEST_CASE("early stopping") {
  const std::vector<double> canonical{0.5, 0.6, 0.6, 0.6, 0.6, 0.6, 0.6};
  for (std::size_t n = 1; n <= canonical.size(); ++n) {
    std::vector<double> h(canonical.begin(), canonical.begin() + n);
    CHECK(ShouldStopEarly(h, 5) == (n == 7));
  }
  std::vector<double> rising;
  for (int i = 0; i < 40; ++i) {
    rising.push_back(0.01 * i);
    CHECK_FALSE(ShouldStopEarly(rising, 5));
  }
  CHECK_FALSE(ShouldStopEarly({0.3}, 1));
  CHECK_FALSE(ShouldStopEarly({}, 5));
  CHECK(ShouldStopEarly({0.3, 0.2}, 1));
  // A later tie is not an improvement.
  CHECK(ShouldStopEarly({0.1, 0.4, 0.4}, 1));
}

TEST_CASE("schedules") {
  ScheduleConfig c;
  TrainingSchedule v = StreamSchedule(StreamKind::kVideo, c);
  REQUIRE(v.stages.size() == 3);
  CHECK(v.stages[0].head == Head::kTemporalConv);
  CHECK(v.stages[0].stop == StopRule::kEarlyStop);
  CHECK(v.stages[0].trainable ==
        std::set<std::string>{"video.frontend", "video.resnet", "video.tcn"});
  CHECK(v.stages[1].trainable == std::set<std::string>{"video.bgru", "video.head"});
  CHECK(v.stages[1].stop == StopRule::kFixedEpochs);
  CHECK(v.stages[1].epochs == 5);
  CHECK(v.stages[2].batch_size == 36);
  CHECK(v.stages[2].lr == 3e-4);
  CHECK(v.stages[2].delay == 5);

  TrainingSchedule f = FusionSchedule(c);
  REQUIRE(f.stages.size() == 2);
  CHECK(f.stages[0].stop == StopRule::kFixedEpochs);
  CHECK(f.stages[0].epochs == 5);
  CHECK(f.stages[1].batch_size == 18);
  CHECK(f.stages[1].lr == 1e-4);
  CHECK(f.stages[1].trainable.size() == 8);

  Model m = CreateModel(TinySpec(Target::kAudio), 1);
  CHECK_NOTHROW(ScheduleFor(Target::kAudio, c).Validate(m.store));
  CHECK_THROWS_WITH_AS(v.Validate(m.store), doctest::Contains("unknown group"),
                       ValidationError);
  CHECK(StreamSchedule(StreamKind::kAudio, c).Fingerprint() !=
        StreamSchedule(StreamKind::kVideo, c).Fingerprint());
}

TEST_CASE("train epoch") {
  const Dataset &data = TinyData();
  TrainOptions opts;
  opts.seed = 9;
  StageSpec stage = FusionSchedule(QuickSchedule()).stages[1];

  SUBCASE("one pass covers the split") {
    Model m = TinyModel(Target::kAv);
    m.store.SetFrozenGroups({});
    Adam adam(AdamConfig{stage.lr});
    EpochMetrics e = TrainEpoch(m, data.train, stage, adam, opts, 1, 1);
    CHECK(e.samples == 12);
    CHECK(std::isfinite(e.train_loss));
    CHECK(e.train_cr >= 0);
    CHECK(adam.steps() == 2);
  }

  SUBCASE("no augmentation and zero lr give the same loss every epoch") {
    Model m = TinyModel(Target::kAv);
    stage.lr = 0;
    stage.batch_size = 12;  // one batch, so batch norm sees the same set
    opts.augment = false;
    Adam adam(AdamConfig{0.0});
    const double first = TrainEpoch(m, data.train, stage, adam, opts, 1, 1).train_loss;
    for (int epoch = 2; epoch <= 3; ++epoch)
      CHECK(TrainEpoch(m, data.train, stage, adam, opts, 1, epoch).train_loss ==
            doctest::Approx(first).epsilon(1e-6));
  }

  SUBCASE("fixed seed reproduces the epoch exactly") {
    Model a = TinyModel(Target::kAudio), b = TinyModel(Target::kAudio);
    StageSpec s = StreamSchedule(StreamKind::kAudio, QuickSchedule()).stages[0];
    Adam aa(AdamConfig{s.lr}), ab(AdamConfig{s.lr});
    EpochMetrics ea = TrainEpoch(a, data.train, s, aa, opts, 0, 1);
    EpochMetrics eb = TrainEpoch(b, data.train, s, ab, opts, 0, 1);
    CHECK(ea.train_loss == eb.train_loss);
    CHECK(a.store.Hash() == b.store.Hash());
  }

  SUBCASE("divergence names the stage and epoch") {
    Model m = TinyModel(Target::kAudio);
    m.store.Get("audio.head.bias").value[0] = std::numeric_limits<float>::quiet_NaN();
    StageSpec s = StreamSchedule(StreamKind::kAudio, QuickSchedule()).stages[2];
    Adam adam;
    CHECK_THROWS_WITH_AS(TrainEpoch(m, data.train, s, adam, opts, 2, 4),
                         doctest::Contains("stage audio_full epoch 4"),
                         DivergenceError);
  }

  CHECK_THROWS_AS(
      [&] {
        Model m = TinyModel(Target::kAudio);
        Adam adam;
        TrainEpoch(m, {}, stage, adam, opts, 0, 1);
      }(),
      ValidationError);
}

TEST_CASE("stream schedule") {
  const Dataset &data = TinyData();
  TrainOptions opts;
  opts.seed = 5;
  const TrainingSchedule sched =
      StreamSchedule(StreamKind::kVideo, QuickSchedule());
  TrainResult r = RunSchedule(TinyModel(Target::kVideo), data, sched, opts);
  REQUIRE(r.finished);
  REQUIRE(r.stages.size() == 3);
  CHECK(r.stages[0].stage == "video_tcn");
  CHECK(r.stages[1].epochs == 2);
  CHECK(r.stages[1].frozen.count("video.frontend"));
  CHECK(r.stages[1].frozen.count("video.resnet"));
  CHECK(r.stages[1].frozen_hash_before != 0);
  CHECK(r.stages[1].frozen_hash_before == r.stages[1].frozen_hash_after);
  int rows = 0;
  for (const StageRecord &s : r.stages) rows += s.epochs;
  CHECK(static_cast<int>(r.metrics.size()) == rows);
  CHECK(r.model.store.frozen_groups().empty());

  // The final parameters are the best validation epoch of the last stage.
  EvalOptions eo;
  CHECK(Evaluate(r.model, data.val, eo).cr() ==
        doctest::Approx(r.stages[2].best_val_cr));
}

TEST_CASE("resume reproduces the uninterrupted run") {
  const Dataset &data = TinyData();
  auto dir = avsr::testing::TempDir("training-resume");
  TrainOptions opts;
  opts.seed = 12;
  const TrainingSchedule sched =
      StreamSchedule(StreamKind::kAudio, QuickSchedule());
  TrainResult full = RunSchedule(TinyModel(Target::kAudio), data, sched, opts);

  for (int cut : {1, 3, 5}) {
    CAPTURE(cut);
    TrainOptions part = opts;
    part.state_path = (dir / "state.ckpt").string();
    part.interrupt_after = cut;
    TrainResult first = RunSchedule(TinyModel(Target::kAudio), data, sched, part);
    CHECK_FALSE(first.finished);
    CHECK(static_cast<int>(first.metrics.size()) == cut);
    Checkpoint state = ReadCheckpoint(part.state_path);
    part.interrupt_after = 0;
    TrainResult rest =
        RunSchedule(TinyModel(Target::kAudio, 77), data, sched, part, &state);
    REQUIRE(rest.finished);
    CHECK(MetricsCsv(rest.metrics, false) == MetricsCsv(full.metrics, false));
    CHECK(rest.model.store.Hash() == full.model.store.Hash());
    CHECK(rest.stages.size() == 3);
  }

  SUBCASE("a state from another seed is refused") {
    TrainOptions part = opts;
    part.state_path = (dir / "other.ckpt").string();
    part.interrupt_after = 1;
    RunSchedule(TinyModel(Target::kAudio), data, sched, part);
    Checkpoint state = ReadCheckpoint(part.state_path);
    part.seed = 13;
    CHECK_THROWS_WITH_AS(
        RunSchedule(TinyModel(Target::kAudio), data, sched, part, &state),
        doctest::Contains("seed"), ValidationError);
  }
}

TEST_CASE("fusion initialization and head stage") {
  const Dataset &data = TinyData();
  Model audio = TinyModel(Target::kAudio, 1);
  Model video = TinyModel(Target::kVideo, 2);
  Model av = InitFusionFromStreams(TinySpec(Target::kAv), audio, video, 3);

  // Each stream of the fresh fusion model reproduces its standalone stream.
  std::vector<ClipInput> clips(2);
  for (int i = 0; i < 2; ++i) {
    clips[i].audio = data.val[i].audio;
    clips[i].video = CenterCrop(data.val[i].video, 16);
  }
  ModelInput<float> in = AssembleInput(av.spec, clips, av.video_stats);
  for (auto [kind, single] : {std::pair{StreamKind::kAudio, &audio},
                              std::pair{StreamKind::kVideo, &video}}) {
    Tape<float> t1, t2;
    ForwardContext<float> c1(t1, av.store, NormMode::kEval, false);
    ForwardContext<float> c2(t2, single->store, NormMode::kEval, false);
    CHECK(StreamForward(c1, av.spec, kind, in).value() ==
          StreamForward(c2, single->spec, kind, in).value());
  }

  ScheduleConfig c = QuickSchedule();
  c.head_epochs = 5;
  c.max_epochs = 1;
  TrainOptions opts;
  TrainResult r = RunSchedule(av, data, FusionSchedule(c), opts);
  REQUIRE(r.stages.size() == 2);
  CHECK(r.stages[0].epochs == 5);
  CHECK(r.stages[0].frozen.size() == 6);
  CHECK(r.stages[0].frozen_hash_before == r.stages[0].frozen_hash_after);
  CHECK(r.stages[1].frozen.empty());
  int head_rows = 0;
  for (const EpochMetrics &m : r.metrics) head_rows += m.stage == "fusion_bgru";
  CHECK(head_rows == 5);

  SUBCASE("mismatched streams are rejected") {
    ModelSpec short_spec = TinySpec(Target::kVideo);
    short_spec.frames = 25;
    Model short_video = CreateModel(short_spec, 1);
    CHECK_THROWS_WITH_AS(
        InitFusionFromStreams(TinySpec(Target::kAv), audio, short_video, 3),
        doctest::Contains("frame-count mismatch"), ValidationError);
    CHECK_THROWS_AS(InitFusionFromStreams(TinySpec(Target::kAv), video, audio, 3),
                    ValidationError);
    ModelSpec wide = TinySpec(Target::kAudio);
    wide.cells = 6;
    CHECK_THROWS_AS(InitFusionFromStreams(TinySpec(Target::kAv),
                                          CreateModel(wide, 1), video, 3),
                    ValidationError);
  }
}

TEST_CASE("metrics csv") {
  std::vector<EpochMetrics> rows(2);
  rows[0] = {"audio_tcn", 1, 1.25, 0.5, 0.625, 3.5, 0, 12};
  rows[1] = {"audio_tcn", 2, 0.75, 0.75, 0.875, 3.25, 1, 12};
  CHECK(MetricsCsv(rows) ==
        "stage,epoch,train_loss,train_cr,val_cr,wall_seconds\n"
        "audio_tcn,1,1.250000,0.5000,0.6250,3.50\n"
        "audio_tcn,2,0.750000,0.7500,0.8750,3.25\n");
  CHECK(MetricsCsv(rows, false).find("wall") == std::string::npos);
}
