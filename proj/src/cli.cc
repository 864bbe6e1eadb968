// avsr/cli.cc

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

#include "avsr/cli.h"

#include <cstdio>
#include <iostream>

#include "CLI11.hpp"

namespace avsr {

namespace fs = std::filesystem;

namespace {

void EchoConfig(const RunConfig &config, std::ostream &os) {
  std::string echo = config.Echo();
  std::size_t start = 0;
  while (start < echo.size()) {
    std::size_t end = echo.find('\n', start);
    os << "# " << echo.substr(start, end - start) << "\n";
    start = end + 1;
  }
}

Dataset LoadConfiguredDataset(const RunConfig &config, std::uint64_t *fp) {
  const std::string path = config.ManifestPath().string();
  if (!fs::exists(path))
    AVSR_INVALID("no dataset at " << path << " (run gen-data first)");
  Manifest manifest = ReadManifest(path);
  for (const std::string &w : manifest.warnings) AVSR_WARN(w);
  Dataset data = LoadDataset(manifest);
  if (data.num_classes() != config.Int("n_classes"))
    AVSR_INVALID("dataset " << path << " has " << data.num_classes()
                 << " classes but the config says n_classes="
                 << config.Int("n_classes"));
  if (fp) *fp = DatasetFingerprint(path);
  return data;
}

std::string FileHash(const fs::path &p) {
  Fnv1a h;
  h.Update(ReadFileBytes(p.string()));
  return HexDigest(h.digest());
}

std::string SnrTag(std::optional<double> snr) {
  if (!snr) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "-snr%g", *snr);
  return buf;
}

std::string FormatCr(double cr) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", cr);
  return buf;
}

EvalOptions ConfiguredEval(const RunConfig &config) {
  EvalOptions o;
  o.noise = config.TrainingNoise();
  o.noise_seed = static_cast<std::uint64_t>(config.Int("eval_seed"));
  o.batch_size = config.Int("eval_batch");
  return o;
}

}  // namespace

DatasetInfo CmdGenData(const RunConfig &config, const fs::path &out_dir,
                       std::ostream &os) {
  EchoConfig(config, os);
  SynthConfig synth = config.Synth();
  DatasetInfo info = GenerateDataset(synth, out_dir);
  os << "manifest " << info.manifest_path << "\n"
     << "fingerprint " << HexDigest(info.fingerprint) << "\n"
     << "clips " << info.num_clips << "\n";
  return info;
}

Model LoadCompatibleModel(const RunConfig &config, const fs::path &checkpoint) {
  if (!fs::exists(checkpoint))
    AVSR_INVALID("checkpoint " << checkpoint.string() << " does not exist");
  Model m = GetModel(ReadCheckpoint(checkpoint.string()));
  const std::uint64_t expected = config.Spec(m.spec.target).Fingerprint();
  if (m.spec.Fingerprint() != expected)
    AVSR_INVALID("checkpoint " << checkpoint.string() << " has fingerprint "
                 << HexDigest(m.spec.Fingerprint())
                 << " but the config describes " << HexDigest(expected)
                 << " for a " << TargetName(m.spec.target) << " model");
  return m;
}

TrainOutputs CmdTrain(const RunConfig &config, Target target,
                      const fs::path &out_dir,
                      const std::optional<fs::path> &resume, std::ostream &os,
                      int interrupt_after) {
  EchoConfig(config, os);
  const ModelSpec spec = config.Spec(target);

  // Check the fusion prerequisites before loading any data.
  Model model;
  if (target == Target::kAv) {
    std::vector<std::string> missing;
    for (const char *key : {"audio_checkpoint", "video_checkpoint"}) {
      fs::path p = config.Path(key);
      if (p.empty())
        missing.push_back(std::string(key) + " (not set)");
      else if (!fs::exists(p))
        missing.push_back(std::string(key) + " (" + p.string() + " not found)");
    }
    if (!missing.empty()) {
      std::string list;
      for (const std::string &m : missing) list += (list.empty() ? "" : ", ") + m;
      AVSR_INVALID("training the av model needs both trained streams; missing "
                   << list << ". Train them with --target audio and --target "
                   "video and set the keys in the config");
    }
    model = InitFusionFromStreams(
        spec, LoadCompatibleModel(config, config.Path("audio_checkpoint")),
        LoadCompatibleModel(config, config.Path("video_checkpoint")),
        static_cast<std::uint64_t>(config.Int("seed")));
  }

  std::uint64_t data_fp = 0;
  Dataset data = LoadConfiguredDataset(config, &data_fp);
  if (target != Target::kAv) {
    model = CreateModel(spec, static_cast<std::uint64_t>(config.Int("seed")));
    if (spec.UsesVideo()) model.video_stats = TrainingVideoStats(data);
  }
  os << "dataset fingerprint " << HexDigest(data_fp) << "\n";

  fs::create_directories(out_dir);
  TrainOutputs out;
  const std::string name = TargetName(target);
  out.checkpoint = out_dir / (name + ".ckpt");
  out.metrics = out_dir / (name + "-metrics.csv");
  out.state = out_dir / (name + "-state.ckpt");

  TrainOptions options = config.Training();
  options.state_path = out.state.string();
  options.interrupt_after = interrupt_after;
  const TrainingSchedule schedule = ScheduleFor(target, config.Schedule());
  std::optional<Checkpoint> state;
  if (resume) {
    if (!fs::exists(*resume))
      AVSR_INVALID("resume checkpoint " << resume->string() << " does not exist");
    state = ReadCheckpoint(resume->string());
  }
  out.result = RunSchedule(std::move(model), data, schedule, options,
                           state ? &*state : nullptr);
  WriteMetricsCsv(out.metrics.string(), out.result.metrics);

  for (const StageRecord &r : out.result.stages)
    os << "stage " << r.stage << " epochs " << r.epochs << " best_val_cr "
       << FormatCr(r.best_val_cr) << " frozen_hash "
       << HexDigest(r.frozen_hash_before) << " -> "
       << HexDigest(r.frozen_hash_after) << "\n";
  os << "metrics " << out.metrics.string() << "\n";
  if (!out.result.finished) {
    os << "interrupted; resume with --checkpoint " << out.state.string() << "\n";
    return out;
  }
  Checkpoint c;
  PutModel(out.result.model, &c);
  c.meta["run.dataset"] = HexDigest(data_fp);
  c.meta["run.seed"] = config.Raw("seed");
  WriteCheckpoint(c, out.checkpoint.string());
  os << "checkpoint " << out.checkpoint.string() << " hash "
     << FileHash(out.checkpoint) << "\n";
  return out;
}

EvalReport CmdEval(const RunConfig &config, const fs::path &checkpoint,
                   const std::string &split, std::optional<double> snr_db,
                   const fs::path &out_dir, std::ostream &os) {
  EchoConfig(config, os);
  if (!IsSplitName(split))
    AVSR_INVALID("unknown split '" << split << "' (train, val or test)");
  Model model = LoadCompatibleModel(config, checkpoint);
  Dataset data = LoadConfiguredDataset(config, nullptr);
  EvalOptions options = ConfiguredEval(config);
  options.snr_db = snr_db;
  EvalReport report = Evaluate(model, data.Split(split), options);

  fs::create_directories(out_dir);
  const fs::path csv = out_dir / (std::string(TargetName(model.spec.target)) +
                                  "-" + split + SnrTag(snr_db) +
                                  "-predictions.csv");
  std::string text = "id,true,predicted,confidence\n";
  char buf[32];
  for (const ClipPrediction &p : report.predictions) {
    std::snprintf(buf, sizeof(buf), "%.6f", p.confidence);
    text += p.id + "," + data.labels[p.truth] + "," + data.labels[p.predicted] +
            "," + buf + "\n";
  }
  WriteFileBytes(csv.string(), text);
  os << "predictions " << csv.string() << "\n";
  os << "cr " << FormatCr(report.cr()) << "\n";
  return report;
}

std::vector<SweepRow> CmdSweepSnr(
    const RunConfig &config, const std::map<Target, fs::path> &checkpoints,
    const fs::path &out_dir, std::ostream &os) {
  EchoConfig(config, os);
  if (checkpoints.empty()) AVSR_INVALID("no models to sweep");
  std::vector<std::pair<Target, Model>> models;
  for (const auto &[target, path] : checkpoints) {
    Model m = LoadCompatibleModel(config, path);
    if (m.spec.target != target)
      AVSR_INVALID("checkpoint " << path.string() << " holds a "
                   << TargetName(m.spec.target) << " model, expected "
                   << TargetName(target));
    models.emplace_back(target, std::move(m));
  }
  Dataset data = LoadConfiguredDataset(config, nullptr);
  std::vector<std::optional<double>> levels;
  for (double s : config.DoubleList("snr_grid")) levels.push_back(s);
  levels.push_back(std::nullopt);

  std::vector<SweepRow> rows;
  for (const std::optional<double> &snr : levels) {
    for (auto &[target, model] : models) {
      EvalOptions options = ConfiguredEval(config);
      options.snr_db = snr;
      const double cr = Evaluate(model, data.test, options).cr();
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%g", snr ? *snr : 0.0);
      rows.push_back({snr ? buf : "clean", TargetName(target), cr});
      AVSR_LOG("sweep " << rows.back().snr << " " << rows.back().model << " "
               << cr);
    }
  }
  fs::create_directories(out_dir);
  std::string text = "snr_db,model,cr\n";
  for (const SweepRow &r : rows)
    text += r.snr + "," + r.model + "," + FormatCr(r.cr) + "\n";
  const fs::path csv = out_dir / "sweep.csv";
  WriteFileBytes(csv.string(), text);
  os << text << "sweep " << csv.string() << "\n";
  return rows;
}

int RunCli(int argc, char **argv) {
  CLI::App app{"Audiovisual word recognition: data generation, staged "
               "training, evaluation and noise sweeps"};
  app.require_subcommand(1);

  std::string config_path, out_dir, target_name, checkpoint, split = "test";
  std::optional<std::int64_t> seed;
  std::optional<double> snr;
  std::vector<std::string> overrides;
  bool subset = false;

  auto common = [&](CLI::App *sub) {
    sub->add_option("--config", config_path, "key=value run configuration");
    sub->add_option("--seed", seed, "overrides the config's seed");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--set", overrides, "extra key=value settings")
        ->take_all();
  };
  CLI::App *gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
  common(gen);
  CLI::App *train = app.add_subcommand("train", "run a staged training schedule");
  common(train);
  train->add_option("--target", target_name, "audio, video, av or mfcc")
      ->required();
  train->add_option("--checkpoint", checkpoint, "state checkpoint to resume");
  CLI::App *eval = app.add_subcommand("eval", "classification rate of a model");
  common(eval);
  eval->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  eval->add_option("--target", target_name, "expected model target");
  eval->add_option("--snr", snr, "mix babble at this SNR (dB)");
  eval->add_option("--split", split, "train, val or test");
  CLI::App *sweep = app.add_subcommand(
      "sweep-snr", "classification rate against SNR for every model");
  common(sweep);
  sweep->add_flag("--subset", subset,
                  "sweep whichever of the four checkpoints are configured");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return 1;
  }

  try {
    RunConfig config = config_path.empty() ? RunConfig() : RunConfig::Load(config_path);
    for (const std::string &kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos)
        AVSR_INVALID("--set expects key=value, got '" << kv << "'");
      config.Set(kv.substr(0, eq), kv.substr(eq + 1), "--set");
    }
    if (seed) config.Set("seed", std::to_string(*seed), "--seed");
    SetVerboseLevel(config.Int("verbose"));
    const fs::path out = out_dir.empty() ? fs::path("runs") : fs::path(out_dir);

    if (gen->parsed()) {
      CmdGenData(config, out_dir.empty() ? config.Path("data_dir") : out,
                 std::cout);
    } else if (train->parsed()) {
      std::optional<fs::path> resume;
      if (!checkpoint.empty()) resume = checkpoint;
      TrainOutputs r =
          CmdTrain(config, ParseTarget(target_name), out, resume, std::cout);
      (void)r;
    } else if (eval->parsed()) {
      if (!target_name.empty()) {
        Model m = LoadCompatibleModel(config, checkpoint);
        if (m.spec.target != ParseTarget(target_name))
          AVSR_INVALID("checkpoint holds a " << TargetName(m.spec.target)
                       << " model, not " << target_name);
      }
      CmdEval(config, checkpoint, split, snr, out, std::cout);
    } else if (sweep->parsed()) {
      std::map<Target, fs::path> ckpts;
      std::vector<std::string> missing;
      const std::pair<Target, const char *> keys[] = {
          {Target::kAudio, "audio_checkpoint"},
          {Target::kVideo, "video_checkpoint"},
          {Target::kAv, "av_checkpoint"},
          {Target::kMfcc, "mfcc_checkpoint"}};
      for (const auto &[t, key] : keys) {
        fs::path p = config.Path(key);
        if (p.empty())
          missing.push_back(key);
        else
          ckpts[t] = p;
      }
      if (!missing.empty() && !subset) {
        std::string list;
        for (const std::string &m : missing) list += (list.empty() ? "" : ", ") + m;
        AVSR_INVALID("sweep-snr needs all four checkpoints; not set: "
                     << list << " (pass --subset to sweep the others)");
      }
      CmdSweepSnr(config, ckpts, out, std::cout);
    }
  } catch (const ValidationError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace avsr
