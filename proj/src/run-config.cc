// avsr/run-config.cc

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

#include "avsr/run-config.h"

#include <algorithm>
#include <set>
#include <sstream>

namespace avsr {

namespace fs = std::filesystem;

const std::vector<ConfigKey> &ConfigSchema() {
  using T = ConfigType;
  static const std::vector<ConfigKey> schema = {
      // Dataset.
      {"data_dir", T::kPath, "data", 0, "dataset directory (holds manifest.csv)"},
      {"n_classes", T::kInt, "10", 2, "synthetic words"},
      {"train_per_class", T::kInt, "200", 1, "training clips per word"},
      {"val_per_class", T::kInt, "50", 1, "validation clips per word"},
      {"test_per_class", T::kInt, "50", 1, "test clips per word"},
      {"image_size", T::kInt, "32", 16, "square crop seen by the visual stream"},
      {"audio_background_snr", T::kDouble, "-3", -20,
       "dB of word over its background babble"},
      {"visual_noise", T::kDouble, "8", 0, "pixel noise std in grey levels"},
      {"data_seed", T::kInt, "1", 0, "generator seed"},
      // Model.
      {"width", T::kDouble, "0.125", 1e-3, "channel width multiplier"},
      {"cells", T::kInt, "32", 1, "BGRU cells per layer in each stream"},
      {"fusion_cells", T::kInt, "32", 1, "BGRU cells per layer after fusion"},
      // Training.
      {"seed", T::kInt, "1", 0, "initialization, shuffling and augmentation"},
      {"eval_seed", T::kInt, "1234", 0, "noise added during evaluation"},
      {"stream_batch", T::kInt, "36", 1, "single-stream batch size"},
      {"stream_lr", T::kDouble, "0.0003", 0, "single-stream learning rate"},
      {"fusion_batch", T::kInt, "18", 1, "fusion batch size"},
      {"fusion_lr", T::kDouble, "0.0001", 0, "fusion learning rate"},
      {"mfcc_lr", T::kDouble, "0.001", 0, "MFCC baseline learning rate"},
      {"head_epochs", T::kInt, "5", 1, "epochs of the head-only stages"},
      {"early_stop_delay", T::kInt, "5", 1, "epochs without improvement"},
      {"max_epochs", T::kInt, "0", 0, "cap on early-stopped stages, 0 = none"},
      {"augment", T::kBool, "1", 0, "crop/flip and babble augmentation"},
      {"clip_norm", T::kDouble, "5", 0, "global gradient norm clip, 0 = off"},
      {"eval_batch", T::kInt, "50", 1, "evaluation batch size"},
      // Noise.
      {"snr_grid", T::kDoubleList, "-5,0,5,10,15,20", -100,
       "SNRs (dB) for augmentation and the sweep"},
      {"babble_voices", T::kInt, "6", 3, "talkers in synthesized babble"},
      // Checkpoints used by av training and the sweep.
      {"audio_checkpoint", T::kPath, "", 0, "trained audio-only model"},
      {"video_checkpoint", T::kPath, "", 0, "trained video-only model"},
      {"av_checkpoint", T::kPath, "", 0, "trained audiovisual model"},
      {"mfcc_checkpoint", T::kPath, "", 0, "trained MFCC baseline"},
      {"verbose", T::kInt, "1", 0, "0 warnings, 1 progress, 2 debug"},
  };
  return schema;
}

namespace {

const ConfigKey *FindKey(const std::string &name) {
  for (const ConfigKey &k : ConfigSchema())
    if (name == k.name) return &k;
  return nullptr;
}

std::string Trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<double> ParseList(const std::string &s, const std::string &what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    out.push_back(ParseDouble(Trim(item), what));
  return out;
}

}  // namespace

RunConfig::RunConfig() : base_dir_(fs::current_path()) {
  for (const ConfigKey &k : ConfigSchema()) values_[k.name] = k.default_value;
}

RunConfig RunConfig::Load(const std::string &path) {
  const fs::path p(path);
  fs::path base = fs::absolute(p).parent_path();
  return Parse(ReadFileBytes(path), path, base);
}

RunConfig RunConfig::Parse(const std::string &text, const std::string &what,
                           const fs::path &base_dir) {
  RunConfig c;
  c.base_dir_ = base_dir;
  std::set<std::string> seen;
  std::stringstream ss(text);
  std::string line;
  int n = 0;
  while (std::getline(ss, line)) {
    ++n;
    const std::string where = what + " line " + std::to_string(n);
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      AVSR_INVALID(where << ": expected key=value, got '" << line << "'");
    const std::string key = Trim(line.substr(0, eq));
    const std::string value = Trim(line.substr(eq + 1));
    if (!seen.insert(key).second)
      AVSR_INVALID(where << ": duplicate key '" << key << "'");
    c.Set(key, value, where);
  }
  return c;
}

void RunConfig::Set(const std::string &key, const std::string &value,
                    const std::string &where) {
  const std::string at = where.empty() ? "config" : where;
  const ConfigKey *k = FindKey(key);
  if (!k) AVSR_INVALID(at << ": unknown key '" << key << "'");
  auto check_min = [&](double v) {
    if (v < k->min)
      AVSR_INVALID(at << ": " << key << " must be >= " << k->min << ", got "
                   << value);
  };
  switch (k->type) {
    case ConfigType::kInt:
      check_min(static_cast<double>(ParseInt(value, at + ": " + key)));
      break;
    case ConfigType::kDouble:
      check_min(ParseDouble(value, at + ": " + key));
      break;
    case ConfigType::kBool:
      if (value != "0" && value != "1" && value != "true" && value != "false")
        AVSR_INVALID(at << ": " << key << " must be 0, 1, true or false, got '"
                     << value << "'");
      break;
    case ConfigType::kDoubleList: {
      std::vector<double> v = ParseList(value, at + ": " + key);
      if (v.empty()) AVSR_INVALID(at << ": " << key << " is empty");
      for (double x : v) check_min(x);
      break;
    }
    case ConfigType::kString:
    case ConfigType::kPath:
      break;
  }
  values_[key] = value;
}

const std::string &RunConfig::Raw(const std::string &key) const {
  auto it = values_.find(key);
  AVSR_ASSERT(it != values_.end());
  return it->second;
}

int RunConfig::Int(const std::string &key) const {
  return static_cast<int>(ParseInt(Raw(key), key));
}

double RunConfig::Double(const std::string &key) const {
  return ParseDouble(Raw(key), key);
}

bool RunConfig::Bool(const std::string &key) const {
  const std::string &v = Raw(key);
  return v == "1" || v == "true";
}

std::vector<double> RunConfig::DoubleList(const std::string &key) const {
  return ParseList(Raw(key), key);
}

fs::path RunConfig::Path(const std::string &key) const {
  const std::string &v = Raw(key);
  if (v.empty()) return {};
  fs::path p(v);
  return p.is_absolute() ? p : base_dir_ / p;
}

std::string RunConfig::Echo() const {
  std::string out;
  for (const ConfigKey &k : ConfigSchema())
    out += std::string(k.name) + "=" + Raw(k.name) + "\n";
  return out;
}

SynthConfig RunConfig::Synth() const {
  SynthConfig s;
  s.n_classes = Int("n_classes");
  s.train_per_class = Int("train_per_class");
  s.val_per_class = Int("val_per_class");
  s.test_per_class = Int("test_per_class");
  s.image_size = Int("image_size");
  s.audio_background_snr = Double("audio_background_snr");
  s.visual_noise = Double("visual_noise");
  s.seed = static_cast<std::uint64_t>(Int("data_seed"));
  s.Validate();
  return s;
}

ModelSpec RunConfig::Spec(Target target) const {
  ModelSpec m;
  m.target = target;
  m.n_classes = Int("n_classes");
  m.width = Double("width");
  m.cells = Int("cells");
  m.fusion_cells = Int("fusion_cells");
  m.image_size = Int("image_size");
  m.Validate();
  return m;
}

ScheduleConfig RunConfig::Schedule() const {
  ScheduleConfig c;
  c.stream_batch = Int("stream_batch");
  c.stream_lr = Double("stream_lr");
  c.fusion_batch = Int("fusion_batch");
  c.fusion_lr = Double("fusion_lr");
  c.mfcc_lr = Double("mfcc_lr");
  c.head_epochs = Int("head_epochs");
  c.delay = Int("early_stop_delay");
  c.max_epochs = Int("max_epochs");
  return c;
}

NoiseConfig RunConfig::TrainingNoise() const {
  NoiseConfig n;
  n.snr_grid = DoubleList("snr_grid");
  n.babble_voices = Int("babble_voices");
  n.seed = static_cast<std::uint64_t>(Int("seed"));
  n.Validate();
  return n;
}

TrainOptions RunConfig::Training() const {
  TrainOptions o;
  o.seed = static_cast<std::uint64_t>(Int("seed"));
  o.noise = TrainingNoise();
  o.augment = Bool("augment");
  o.clip_norm = Double("clip_norm");
  o.eval_batch = Int("eval_batch");
  return o;
}

fs::path RunConfig::ManifestPath() const {
  return Path("data_dir") / "manifest.csv";
}

}  // namespace avsr
