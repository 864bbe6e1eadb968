// avsr/data.cc

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

#include "avsr/data.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

namespace avsr {

namespace fs = std::filesystem;

namespace {

void PutU32(std::string &s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t GetU32(std::string_view s, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[off + i]);
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// AVF1

std::string EncodeVideo(const VideoClip &clip) {
  clip.Validate();
  std::string s = "AVF1";
  PutU32(s, clip.frames);
  PutU32(s, clip.height);
  PutU32(s, clip.width);
  s.append(reinterpret_cast<const char *>(clip.pixels.data()), clip.pixels.size());
  return s;
}

VideoClip DecodeVideo(std::string_view bytes, const std::string &what) {
  if (bytes.size() < kVideoHeaderBytes)
    AVSR_INVALID(what << ": truncated AVF1 header, expected " << kVideoHeaderBytes
                      << " bytes but file has " << bytes.size()
                      << " (offset " << bytes.size() << ")");
  if (bytes.substr(0, 4) != "AVF1")
    AVSR_INVALID(what << ": bad magic at offset 0, expected \"AVF1\"");
  const std::uint32_t T = GetU32(bytes, 4), H = GetU32(bytes, 8),
                      W = GetU32(bytes, 12);
  const char *names[3] = {"T", "H", "W"};
  const std::uint32_t dims[3] = {T, H, W};
  for (int i = 0; i < 3; ++i)
    if (dims[i] == 0 || dims[i] > static_cast<std::uint32_t>(std::numeric_limits<int>::max()))
      AVSR_INVALID(what << ": invalid dimension " << names[i] << " = " << dims[i]
                        << " at offset " << 4 + 4 * i);
  const unsigned __int128 payload = static_cast<unsigned __int128>(T) * H * W;
  if (payload > (static_cast<unsigned __int128>(1) << 40))
    AVSR_INVALID(what << ": dimensions " << T << "x" << H << "x" << W
                      << " overflow the payload size (offset 4)");
  const std::size_t need = static_cast<std::size_t>(payload);
  const std::size_t have = bytes.size() - kVideoHeaderBytes;
  if (have != need)
    AVSR_INVALID(what << ": payload length mismatch at offset " << kVideoHeaderBytes
                      << ": expected " << need << " bytes, found " << have);
  VideoClip clip(T, H, W);
  std::copy(bytes.begin() + kVideoHeaderBytes, bytes.end(),
            reinterpret_cast<char *>(clip.pixels.data()));
  return clip;
}

void WriteVideoFile(const VideoClip &clip, const std::string &path) {
  WriteFileBytes(path, EncodeVideo(clip));
}

VideoClip ReadVideoFile(const std::string &path) {
  return DecodeVideo(ReadFileBytes(path), path);
}

// ---------------------------------------------------------------------------
// Manifest

bool IsSplitName(std::string_view s) {
  return s == "train" || s == "val" || s == "test";
}

std::vector<std::string> Manifest::Labels() const {
  std::set<std::string> s;
  for (const auto &r : rows) s.insert(r.label);
  return {s.begin(), s.end()};
}

std::vector<int> Manifest::SplitRows(const std::string &split) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (rows[i].split == split) out.push_back(i);
  return out;
}

Manifest ReadManifest(const std::string &path) {
  std::ifstream is(path);
  if (!is) AVSR_INVALID("cannot open manifest " << path);
  Manifest m;
  m.base_dir = fs::path(path).parent_path();
  std::string line;
  int lineno = 0;
  auto strip_cr = [](std::string &s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
  };
  if (!std::getline(is, line)) AVSR_INVALID(path << ": empty manifest");
  ++lineno;
  strip_cr(line);
  if (line != kManifestHeader)
    AVSR_INVALID(path << ": row 1: header must be '" << kManifestHeader
                      << "', got '" << line << "'");
  std::set<std::string> ids;
  while (std::getline(is, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (!line.empty() && line.back() == ',') f.push_back("");
    if (f.size() != 5)
      AVSR_INVALID(path << ": row " << lineno << ": expected 5 fields, got " << f.size());
    ManifestRow r{f[0], f[1], f[2], f[3], f[4]};
    if (r.id.empty() || r.label.empty())
      AVSR_INVALID(path << ": row " << lineno << ": empty id or label");
    if (!ids.insert(r.id).second)
      AVSR_INVALID(path << ": row " << lineno << ": duplicate id '" << r.id << "'");
    if (!IsSplitName(r.split))
      AVSR_INVALID(path << ": row " << lineno << ": unknown split '" << r.split
                        << "' (expected train, val or test)");
    for (const std::string *p : {&r.audio_path, &r.video_path})
      if (p->empty() || !fs::exists(m.Resolve(*p)))
        AVSR_INVALID(path << ": row " << lineno << ": missing file '" << *p << "'");
    m.rows.push_back(std::move(r));
  }
  if (m.rows.empty()) AVSR_INVALID(path << ": manifest has no rows");

  std::map<std::string, std::set<std::string>> by_split;
  for (const auto &r : m.rows) by_split[r.split].insert(r.label);
  const auto all = m.Labels();
  for (const auto &[split, labels] : by_split)
    for (const auto &l : all)
      if (!labels.count(l)) {
        m.warnings.push_back("label '" + l + "' is absent from the " + split + " split");
        AVSR_WARN(path << ": " << m.warnings.back());
      }
  return m;
}

void WriteManifest(const std::string &path, const Manifest &manifest) {
  std::ostringstream os;
  os << kManifestHeader << "\n";
  for (const auto &r : manifest.rows) {
    for (const std::string *f : {&r.id, &r.label, &r.split, &r.audio_path, &r.video_path})
      if (f->find_first_of(",\n\r") != std::string::npos)
        AVSR_INVALID("manifest field '" << *f << "' contains a separator");
    os << r.id << "," << r.label << "," << r.split << "," << r.audio_path << ","
       << r.video_path << "\n";
  }
  WriteFileBytes(path, os.str());
}

std::uint64_t DatasetFingerprint(const std::string &manifest_path) {
  Manifest m = ReadManifest(manifest_path);
  Fnv1a h;
  h.Update(ReadFileBytes(manifest_path));
  for (const auto &r : m.rows) {
    h.Update(ReadFileBytes(m.Resolve(r.audio_path).string()));
    h.Update(ReadFileBytes(m.Resolve(r.video_path).string()));
  }
  return h.digest();
}

// ---------------------------------------------------------------------------
// Synthetic words

namespace {

// Tone grid shared by the first and second syllable of every word.
// It spans the first and second formant region, where babble is densest.
constexpr double kToneGrid[] = {400, 500, 620, 770, 950, 1180, 1460, 1800};
constexpr int kNumTones = 8;
constexpr int kTrajectories = 16;  // 4 cycle counts x 4 phases
constexpr int kBackgroundVoices = 3;
constexpr double kGlide = 0.08;

const char *kSplitNames[3] = {"train", "val", "test"};

double Envelope(double t, double start, double len) {
  // Raised-cosine edges of 25 ms.
  const double ramp = 0.025;
  if (t < start || t > start + len) return 0;
  const double a = std::min(t - start, start + len - t);
  if (a >= ramp) return 1;
  return 0.5 - 0.5 * std::cos(std::numbers::pi * a / ramp);
}

}  // namespace

int MaxSynthClasses() { return kTrajectories; }

void SynthConfig::Validate() const {
  if (n_classes < 2)
    AVSR_INVALID("n_classes must be >= 2, got " << n_classes);
  if (n_classes > MaxSynthClasses())
    AVSR_INVALID("n_classes " << n_classes << " exceeds the " << MaxSynthClasses()
                              << " distinguishable synthetic words");
  if (train_per_class < 1 || val_per_class < 1 || test_per_class < 1)
    AVSR_INVALID("every split needs at least one sample per class");
  if (sample_rate < 8000)
    AVSR_INVALID("sample rate must be >= 8000 Hz, got " << sample_rate);
  if (!(duration > 0) || !(fps > 0)) AVSR_INVALID("duration and fps must be positive");
  if (image_size < 16) AVSR_INVALID("image size must be >= 16, got " << image_size);
  if (!(visual_noise >= 0)) AVSR_INVALID("visual noise must be >= 0");
  if (!std::isfinite(audio_background_snr))
    AVSR_INVALID("audio background SNR must be finite");
}

int SynthConfig::Frames() const {
  return static_cast<int>(std::lround(duration * fps));
}

int SynthConfig::Samples() const {
  return static_cast<int>(std::lround(duration * sample_rate));
}

SynthClass SynthClassParams(const SynthConfig &config, int c) {
  if (c < 0 || c >= config.n_classes)
    AVSR_INVALID("class " << c << " out of range");
  SynthClass k;
  char buf[16];
  std::snprintf(buf, sizeof buf, "w%02d", c);
  k.label = buf;
  // Ordered tone pairs, visited with a stride coprime to their count so
  // neighbouring classes share few tones.
  const int pair = (c * 23) % (kNumTones * (kNumTones - 1));
  const int a = pair / (kNumTones - 1);
  int b = pair % (kNumTones - 1);
  if (b >= a) ++b;
  k.tone_a = kToneGrid[a];
  k.tone_b = kToneGrid[b];
  k.onset = 0.15 + 0.1 * (c % 3);
  k.syllable = 0.18 + 0.06 * ((c / 3) % 3);
  k.gap = 0.06 + 0.08 * ((c / 9) % 2);
  k.cycles = 1 + c % 4;
  k.phase = std::numbers::pi / 2 * ((c / 4) % 4);
  return k;
}

GeneratedSample GenerateSample(const SynthConfig &config, int c, int split,
                               int index) {
  const SynthClass k = SynthClassParams(config, c);
  Rng rng = DeriveRng(config.seed, {static_cast<std::uint64_t>(split),
                                    static_cast<std::uint64_t>(c),
                                    static_cast<std::uint64_t>(index)});
  const double shift = UniformRange(rng, -0.04, 0.04);
  const double start_a = k.onset + shift;
  const double start_b = start_a + k.syllable + k.gap;

  GeneratedSample out;
  // Audio: two tonal syllables over a background of three babbling voices
  // at the configured SNR.  Each tone glides across +-kGlide of its nominal
  // frequency, up or down per clip.
  const int n = config.Samples(), sr = config.sample_rate;
  const double fa = k.tone_a * UniformRange(rng, 0.98, 1.02);
  const double fb = k.tone_b * UniformRange(rng, 0.98, 1.02);
  const double amp = UniformRange(rng, 0.6, 1.0);
  const double dir = UniformUnit(rng) < 0.5 ? -1.0 : 1.0;
  std::vector<double> word(n);
  double power = 0;
  double pa = UniformRange(rng, 0, 2 * std::numbers::pi);
  double pb = UniformRange(rng, 0, 2 * std::numbers::pi);
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    double v = 0;
    const double ea = Envelope(t, start_a, k.syllable);
    const double eb = Envelope(t, start_b, k.syllable);
    if (ea > 0) {
      const double u = 2 * (t - start_a) / k.syllable - 1;
      pa += 2 * std::numbers::pi * fa * (1 + dir * kGlide * u) / sr;
      v += ea * std::sin(pa);
    }
    if (eb > 0) {
      const double u = 2 * (t - start_b) / k.syllable - 1;
      pb += 2 * std::numbers::pi * fb * (1 + dir * kGlide * u) / sr;
      v += eb * std::sin(pb);
    }
    word[i] = amp * v;
    power += word[i] * word[i];
  }
  power /= n;
  NoiseConfig background;
  background.babble_voices = kBackgroundVoices;
  const WaveformClip bg_audio = SynthBabble(n, sr, background, rng);
  // The babble has unit power.
  const double bg_gain =
      std::sqrt(power / std::pow(10.0, config.audio_background_snr / 10));
  double peak = 0;
  for (int i = 0; i < n; ++i) {
    word[i] += bg_gain * bg_audio.samples[i];
    peak = std::max(peak, std::abs(word[i]));
  }
  out.audio.sample_rate = sr;
  out.audio.samples.resize(n);
  const double g = peak > 0 ? 0.7 / peak : 1.0;
  for (int i = 0; i < n; ++i) out.audio.samples[i] = static_cast<float>(g * word[i]);

  // Video: a bright horizontally centred ellipse whose height follows the
  // syllables and whose vertical position oscillates.  The picture is
  // symmetric under horizontal flips, so flip augmentation keeps the class.
  const int T = config.Frames(), S = config.StoredSize();
  const double phase = k.phase + UniformRange(rng, -0.3, 0.3);
  const double swing = 0.12 * S * UniformRange(rng, 0.8, 1.2);
  const double bg = 70 + UniformRange(rng, -15, 15);
  const double peak_px = 190 + UniformRange(rng, -25, 25);
  const double cx = (S - 1) / 2.0, rx = 0.22 * S;
  out.video = VideoClip(T, S, S);
  out.video.fps = config.fps;
  for (int f = 0; f < T; ++f) {
    const double t = (f + 0.5) / config.fps;
    const double open = std::max(Envelope(t, start_a, k.syllable),
                                 Envelope(t, start_b, k.syllable));
    const double cy = S / 2.0 +
                      swing * std::sin(2 * std::numbers::pi * k.cycles * t /
                                           config.duration + phase);
    const double ry = S * (0.05 + 0.10 * open);
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) {
        const double dx = (x - cx) / rx, dy = (y - cy) / ry;
        double v = bg + (peak_px - bg) * std::exp(-0.5 * (dx * dx + dy * dy)) +
                   config.visual_noise * Gaussian(rng);
        out.video.at(f, y, x) =
            static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
  }
  return out;
}

DatasetInfo GenerateDataset(const SynthConfig &config, const fs::path &out_dir) {
  config.Validate();
  fs::create_directories(out_dir / "audio");
  fs::create_directories(out_dir / "video");
  Manifest m;
  m.base_dir = out_dir;
  const int per_split[3] = {config.train_per_class, config.val_per_class,
                            config.test_per_class};
  for (int split = 0; split < 3; ++split)
    for (int c = 0; c < config.n_classes; ++c) {
      const std::string label = SynthClassParams(config, c).label;
      for (int i = 0; i < per_split[split]; ++i) {
        char id[64];
        std::snprintf(id, sizeof id, "%s_%s_%04d", kSplitNames[split], label.c_str(), i);
        GeneratedSample s = GenerateSample(config, c, split, i);
        ManifestRow r{id, label, kSplitNames[split], std::string("audio/") + id + ".wav",
                      std::string("video/") + id + ".avf"};
        WriteWav((out_dir / r.audio_path).string(), s.audio);
        WriteVideoFile(s.video, (out_dir / r.video_path).string());
        m.rows.push_back(std::move(r));
      }
    }
  DatasetInfo info;
  info.manifest_path = (out_dir / "manifest.csv").string();
  WriteManifest(info.manifest_path, m);
  info.fingerprint = DatasetFingerprint(info.manifest_path);
  info.num_clips = static_cast<int>(m.rows.size());
  return info;
}

// ---------------------------------------------------------------------------
// In-memory splits

const std::vector<Sample> &Dataset::Split(const std::string &name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  AVSR_INVALID("unknown split '" << name << "'");
}

Dataset LoadDataset(const Manifest &manifest) {
  Dataset d;
  d.labels = manifest.Labels();
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < d.labels.size(); ++i) index[d.labels[i]] = i;
  for (const auto &r : manifest.rows) {
    Sample s;
    s.id = r.id;
    s.label = index.at(r.label);
    s.audio = ReadWav(manifest.Resolve(r.audio_path).string());
    s.video = ReadVideoFile(manifest.Resolve(r.video_path).string());
    if (r.split == "train") d.train.push_back(std::move(s));
    else if (r.split == "val") d.val.push_back(std::move(s));
    else d.test.push_back(std::move(s));
  }
  return d;
}

std::vector<std::vector<int>> BatchOrder(int n, int batch_size,
                                         std::uint64_t seed, bool shuffle) {
  if (batch_size < 1) AVSR_INVALID("batch size must be >= 1, got " << batch_size);
  if (n < 1) AVSR_INVALID("cannot iterate an empty split");
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  if (shuffle) {
    Rng rng(seed);
    for (int i = n - 1; i > 0; --i) std::swap(order[i], order[UniformInt(rng, 0, i)]);
  }
  std::vector<std::vector<int>> batches;
  for (int s = 0; s < n; s += batch_size)
    batches.emplace_back(order.begin() + s, order.begin() + std::min(n, s + batch_size));
  return batches;
}

}  // namespace avsr
