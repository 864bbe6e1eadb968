// tests/cli-test.cc

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

#include <iostream>
#include <sstream>

#include "avsr/cli.h"
#include "test-util.h"

using namespace avsr;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = 0;
  std::string out, err;
};

CliRun Run(std::vector<std::string> args) {
  args.insert(args.begin(), "avsr");
  std::vector<char *> argv;
  for (std::string &a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  auto *old_out = std::cout.rdbuf(out.rdbuf());
  auto *old_err = std::cerr.rdbuf(err.rdbuf());
  CliRun r;
  r.code = RunCli(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// A pipeline small enough to train every model in seconds.
const char *kTinyConfig =
    "# tiny pipeline\n"
    "data_dir = data\n"
    "n_classes = 3\n"
    "train_per_class = 3\n"
    "val_per_class = 2\n"
    "test_per_class = 2\n"
    "image_size = 16\n"
    "cells = 4\n"
    "fusion_cells = 4\n"
    "stream_batch = 9\n"
    "fusion_batch = 9\n"
    "head_epochs = 1\n"
    "early_stop_delay = 1\n"
    "max_epochs = 1\n"
    "verbose = 0\n";

fs::path TinyConfig(const fs::path &dir) {
  fs::path cfg = dir / "tiny.cfg";
  WriteFileBytes(cfg.string(), kTinyConfig);
  return cfg;
}

int CountLines(const std::string &s) {
  return static_cast<int>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST_CASE("config parsing") {
  RunConfig c = RunConfig::Parse("# comment\nseed = 7  # trailing\n\ncells=16\n",
                                 "t.cfg", "/base");
  CHECK(c.Int("seed") == 7);
  CHECK(c.Int("cells") == 16);
  CHECK(c.Int("n_classes") == 10);
  CHECK(c.DoubleList("snr_grid") == std::vector<double>{-5, 0, 5, 10, 15, 20});
  CHECK(c.Path("data_dir") == fs::path("/base/data"));
  CHECK(c.Path("audio_checkpoint").empty());
  CHECK(c.Echo().find("seed=7\n") != std::string::npos);

  CHECK_THROWS_WITH_AS(RunConfig::Parse("seed=1\nbogus=3\n", "t.cfg", "/"),
                       "t.cfg line 2: unknown key 'bogus'", ValidationError);
  CHECK_THROWS_WITH_AS(RunConfig::Parse("seed=1\nseed=2\n", "t.cfg", "/"),
                       doctest::Contains("line 2: duplicate key 'seed'"),
                       ValidationError);
  CHECK_THROWS_WITH_AS(RunConfig::Parse("n_classes=0\n", "t.cfg", "/"),
                       "t.cfg line 1: n_classes must be >= 2, got 0",
                       ValidationError);
  CHECK_THROWS_WITH_AS(RunConfig::Parse("\nseed\n", "t.cfg", "/"),
                       doctest::Contains("line 2: expected key=value"),
                       ValidationError);
  CHECK_THROWS_AS(RunConfig::Parse("augment=maybe\n", "t.cfg", "/"),
                  ValidationError);
  CHECK_THROWS_AS(RunConfig::Parse("cells=4.5\n", "t.cfg", "/"), ValidationError);
  CHECK_THROWS_AS(RunConfig::Parse("snr_grid=1,,2\n", "t.cfg", "/"),
                  ValidationError);

  RunConfig d;
  d.Set("max_epochs", "3");
  CHECK(d.Schedule().max_epochs == 3);
  CHECK(d.Spec(Target::kAv).target == Target::kAv);
  CHECK(d.Training().noise.snr_grid.size() == 6);
}

TEST_CASE("exit codes") {
  auto dir = avsr::testing::TempDir("cli-codes");
  const fs::path cfg = TinyConfig(dir);

  CHECK(Run({}).code == 1);
  CHECK(Run({"fly"}).code == 1);
  CHECK(Run({"train", "--no-such-flag"}).code == 1);

  CliRun r = Run({"train", "--config", cfg.string(), "--set", "n_classes=0",
                  "--target", "audio"});
  CHECK(r.code == 1);
  CHECK(r.err.find("n_classes must be >= 2") != std::string::npos);

  r = Run({"train", "--config", cfg.string(), "--target", "speech"});
  CHECK(r.code == 1);
  CHECK(r.err.find("speech") != std::string::npos);

  r = Run({"eval", "--config", cfg.string(), "--checkpoint",
           (dir / "missing.ckpt").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("does not exist") != std::string::npos);

  r = Run({"train", "--config", cfg.string(), "--target", "audio"});
  CHECK(r.code == 1);
  CHECK(r.err.find("run gen-data first") != std::string::npos);

  r = Run({"sweep-snr", "--config", cfg.string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("--subset") != std::string::npos);

  // Failures that are not about the input map to 2.
  WriteFileBytes((dir / "blocker").string(), "x");
  r = Run({"gen-data", "--config", cfg.string(), "--out",
           (dir / "blocker" / "data").string()});
  CHECK(r.code == 2);
}

TEST_CASE("pipeline") {
  auto dir = avsr::testing::TempDir("cli-pipeline");
  const fs::path cfg = TinyConfig(dir);
  const std::string c = cfg.string();

  CliRun r = Run({"gen-data", "--config", c});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("# n_classes=3\n") != std::string::npos);
  CHECK(r.out.find("clips 21\n") != std::string::npos);
  CHECK(fs::exists(dir / "data" / "manifest.csv"));

  const fs::path runs = dir / "runs";
  for (const char *t : {"audio", "video", "mfcc"}) {
    CAPTURE(t);
    r = Run({"train", "--config", c, "--target", t, "--out", runs.string()});
    REQUIRE(r.code == 0);
    CHECK(fs::exists(runs / (std::string(t) + ".ckpt")));
    CHECK(r.out.find("checkpoint ") != std::string::npos);
  }
  const std::string metrics = ReadFileBytes((runs / "audio-metrics.csv").string());
  CHECK(metrics.rfind("stage,epoch,train_loss,train_cr,val_cr,wall_seconds\n", 0) == 0);
  CHECK(CountLines(metrics) == 1 + 3);

  SUBCASE("av needs both streams") {
    r = Run({"train", "--config", c, "--target", "av", "--set",
             "audio_checkpoint=runs/audio.ckpt", "--out", runs.string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("video_checkpoint (not set)") != std::string::npos);
    CHECK(r.err.find("audio_checkpoint") == std::string::npos);
  }

  SUBCASE("train av, evaluate and sweep") {
    r = Run({"train", "--config", c, "--target", "av", "--out", runs.string(),
             "--set", "audio_checkpoint=runs/audio.ckpt", "--set",
             "video_checkpoint=runs/video.ckpt"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("stage fusion_bgru epochs 1") != std::string::npos);

    r = Run({"eval", "--config", c, "--checkpoint", (runs / "av.ckpt").string(),
             "--snr", "0", "--out", runs.string()});
    REQUIRE(r.code == 0);
    const std::string pred =
        ReadFileBytes((runs / "av-test-snr0-predictions.csv").string());
    CHECK(pred.rfind("id,true,predicted,confidence\n", 0) == 0);
    CHECK(CountLines(pred) == 1 + 6);
    CHECK(r.out.find("\ncr ") != std::string::npos);

    r = Run({"eval", "--config", c, "--checkpoint", (runs / "av.ckpt").string(),
             "--target", "audio"});
    CHECK(r.code == 1);

    std::vector<std::string> args = {
        "sweep-snr", "--config", c, "--out", runs.string(),
        "--set", "audio_checkpoint=runs/audio.ckpt",
        "--set", "video_checkpoint=runs/video.ckpt",
        "--set", "av_checkpoint=runs/av.ckpt",
        "--set", "mfcc_checkpoint=runs/mfcc.ckpt"};
    r = Run(args);
    REQUIRE(r.code == 0);
    const std::string sweep = ReadFileBytes((runs / "sweep.csv").string());
    CHECK(sweep.rfind("snr_db,model,cr\n", 0) == 0);
    CHECK(CountLines(sweep) == 1 + 7 * 4);
    CHECK(sweep.find("\nclean,av,") != std::string::npos);
    CHECK(sweep.find("\n-5,mfcc,") != std::string::npos);
    // The video model ignores audio so its rate is the same at every level.
    std::set<std::string> video_rates;
    std::stringstream ss(sweep);
    std::string line;
    while (std::getline(ss, line))
      if (line.find(",video,") != std::string::npos)
        video_rates.insert(line.substr(line.rfind(',')));
    CHECK(video_rates.size() == 1);

    // A config that disagrees with the checkpoint is refused.
    r = Run({"eval", "--config", c, "--set", "cells=5", "--checkpoint",
             (runs / "audio.ckpt").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("fingerprint") != std::string::npos);
  }

  SUBCASE("rerun and resume are deterministic") {
    std::ostringstream sink;
    const std::string first = ReadFileBytes((runs / "audio.ckpt").string());
    const fs::path again = dir / "again";
    TrainOutputs a = CmdTrain(RunConfig::Load(c), Target::kAudio, again,
                              std::nullopt, sink);
    CHECK(ReadFileBytes(a.checkpoint.string()) == first);

    const fs::path cut = dir / "cut";
    TrainOutputs part = CmdTrain(RunConfig::Load(c), Target::kAudio, cut,
                                 std::nullopt, sink, 2);
    CHECK_FALSE(part.result.finished);
    CHECK_FALSE(fs::exists(part.checkpoint));
    r = Run({"train", "--config", c, "--target", "audio", "--out", cut.string(),
             "--checkpoint", part.state.string()});
    REQUIRE(r.code == 0);
    CHECK(ReadFileBytes((cut / "audio.ckpt").string()) == first);
    CHECK(MetricsCsv(a.result.metrics, false) ==
          MetricsCsv(CmdTrain(RunConfig::Load(c), Target::kAudio, dir / "third",
                              std::nullopt, sink)
                         .result.metrics,
                     false));
  }
}
