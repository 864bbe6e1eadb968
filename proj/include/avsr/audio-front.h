// avsr/audio-front.h

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

// Waveform preprocessing: z-normalization, synthesized babble noise, mixing
// at an exact SNR, the training-time noise augmenter, MFCC + delta features
// and 16-bit PCM WAV files.

#ifndef AVSR_AUDIO_FRONT_H_
#define AVSR_AUDIO_FRONT_H_

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "avsr/common.h"
#include "avsr/tensor.h"

namespace avsr {

inline constexpr int kSampleRate = 16000;

struct WaveformClip {
  std::vector<float> samples;
  int sample_rate = kSampleRate;
  std::optional<double> snr_applied;  // set when noise was mixed in

  double Duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

struct NoiseConfig {
  std::vector<double> snr_grid{-5, 0, 5, 10, 15, 20};
  int babble_voices = 6;
  std::uint64_t seed = 0;

  void Validate() const;
};

struct MfccConfig {
  double window_seconds = 0.040;
  double step_seconds = 0.010;
  int n_coeffs = 13;
  int n_mel_filters = 26;
  bool include_deltas = true;
  double preemphasis = 0.97;
  int delta_window = 2;
  double log_floor = 1e-10;

  void Validate() const;
  int WindowSamples(int sample_rate) const;
  int StepSamples(int sample_rate) const;
  int NumFeatures() const { return include_deltas ? 2 * n_coeffs : n_coeffs; }
  // floor((L - win) / step) + 1, or 0 when L < win.
  int NumFrames(int num_samples, int sample_rate) const;
};

// Mean square.
double SignalPower(std::span<const float> x);

// (x - mean) / (population std + 1e-8).
WaveformClip ZNormalize(const WaveformClip &clip);

// Sum of `config.babble_voices` speech-like voices: pulse-train or noise
// excitation through three formant resonators, with syllable-rate (2-8 Hz)
// amplitude modulation.  Scaled to unit power.
WaveformClip SynthBabble(int num_samples, int sample_rate,
                         const NoiseConfig &config, Rng &rng);
// Seeded by config.seed.
WaveformClip SynthBabble(double duration, const NoiseConfig &config,
                         int sample_rate = kSampleRate);

// sqrt(P_clean / (P_noise 10^(db / 10))).
double SnrNoiseScale(std::span<const float> clean, std::span<const float> noise,
                     double target_db);
// clean + alpha noise with alpha from SnrNoiseScale.
WaveformClip MixAtSnr(const WaveformClip &clean, const WaveformClip &noise,
                      double target_db);

// Picks one of the grid SNRs or the clean signal with equal probability and
// mixes in freshly synthesized babble.
WaveformClip AugmentNoise(const WaveformClip &clean, const NoiseConfig &config,
                          Rng &rng);

// (frames, NumFeatures()) matrix: pre-emphasis, Hamming window, magnitude
// spectrum, mel filterbank, log, orthonormal DCT-II, then regression deltas
// with edge replication.
Tensor<double> MfccExtract(const WaveformClip &clip, const MfccConfig &config);

// Mono 16-bit PCM.  Samples are clipped to [-1, 1] and scaled by 32767.
void WriteWav(const std::string &path, const WaveformClip &clip);
WaveformClip ReadWav(const std::string &path);

}  // namespace avsr

#endif  // AVSR_AUDIO_FRONT_H_
