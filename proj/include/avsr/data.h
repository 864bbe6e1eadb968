// avsr/data.h

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

// On-disk data: AVF1 frame files, CSV manifests, the seeded synthetic word
// dataset and split iteration.
//
// AVF1 layout: "AVF1", little-endian u32 T, H, W, then T*H*W grayscale bytes
// (frame-major, then row-major).

#ifndef AVSR_DATA_H_
#define AVSR_DATA_H_

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "avsr/audio-front.h"
#include "avsr/video-front.h"

namespace avsr {

// ---------------------------------------------------------------------------
// AVF1

inline constexpr std::size_t kVideoHeaderBytes = 16;

std::string EncodeVideo(const VideoClip &clip);
// `what` names the source in error messages.
VideoClip DecodeVideo(std::string_view bytes, const std::string &what);
void WriteVideoFile(const VideoClip &clip, const std::string &path);
VideoClip ReadVideoFile(const std::string &path);

// ---------------------------------------------------------------------------
// Manifest

inline constexpr const char *kManifestHeader = "id,label,split,audio_path,video_path";

struct ManifestRow {
  std::string id, label, split, audio_path, video_path;
};

struct Manifest {
  std::filesystem::path base_dir;  // paths are relative to this
  std::vector<ManifestRow> rows;
  std::vector<std::string> warnings;

  // Sorted label set; a label's class index is its position here.
  std::vector<std::string> Labels() const;
  std::vector<int> SplitRows(const std::string &split) const;
  std::filesystem::path Resolve(const std::string &relative) const {
    return base_dir / relative;
  }
};

bool IsSplitName(std::string_view s);

// Validates the header, ids, split tokens and file existence.  Labels that
// appear in some split but not in train are reported in `warnings`.
Manifest ReadManifest(const std::string &path);
void WriteManifest(const std::string &path, const Manifest &manifest);

// FNV-1a over the manifest text and every referenced file, in row order.
std::uint64_t DatasetFingerprint(const std::string &manifest_path);

// ---------------------------------------------------------------------------
// Synthetic words

struct SynthConfig {
  int n_classes = 10;
  int train_per_class = 200;
  int val_per_class = 50;
  int test_per_class = 50;
  int sample_rate = kSampleRate;
  double duration = 1.16;
  double fps = 25;
  int image_size = 32;          // crop size seen by the model
  double audio_background_snr = -3;  // word to background-babble SNR, dB
  double visual_noise = 8;      // pixel noise std, grey levels
  std::uint64_t seed = 1;

  void Validate() const;
  int Frames() const;
  int Samples() const;
  // Stored frames leave room for the crop jitter on each side.
  int StoredSize() const { return image_size + 2 * DefaultJitter(image_size); }
};

// Largest class count the pattern tables can keep distinct.
int MaxSynthClasses();

// Per-class generative parameters, exposed for oracle checks.
struct SynthClass {
  std::string label;
  double tone_a = 0, tone_b = 0;  // Hz, first and second syllable
  double onset = 0, gap = 0, syllable = 0;  // seconds
  int cycles = 1;                 // vertical oscillation periods per clip
  double phase = 0;               // radians
};
SynthClass SynthClassParams(const SynthConfig &config, int c);

struct GeneratedSample {
  WaveformClip audio;
  VideoClip video;
};
// Deterministic in (config.seed, split, class, index).
GeneratedSample GenerateSample(const SynthConfig &config, int c, int split,
                               int index);

struct DatasetInfo {
  std::string manifest_path;
  std::uint64_t fingerprint = 0;
  int num_clips = 0;
};
// Writes audio/*.wav, video/*.avf and manifest.csv under `out_dir`.
DatasetInfo GenerateDataset(const SynthConfig &config,
                            const std::filesystem::path &out_dir);

// ---------------------------------------------------------------------------
// In-memory splits

struct Sample {
  std::string id;
  int label = 0;
  WaveformClip audio;
  VideoClip video;
};

struct Dataset {
  std::vector<std::string> labels;
  std::vector<Sample> train, val, test;

  const std::vector<Sample> &Split(const std::string &name) const;
  int num_classes() const { return static_cast<int>(labels.size()); }
};

Dataset LoadDataset(const Manifest &manifest);

// One epoch of mini-batches over `n` samples: a seeded permutation cut into
// ceil(n / batch_size) batches, the last one possibly short.
std::vector<std::vector<int>> BatchOrder(int n, int batch_size,
                                         std::uint64_t seed, bool shuffle = true);

}  // namespace avsr

#endif  // AVSR_DATA_H_
