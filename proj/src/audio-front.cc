// avsr/audio-front.cc

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

#include "avsr/audio-front.h"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>

namespace avsr {

void NoiseConfig::Validate() const {
  if (snr_grid.empty()) AVSR_INVALID("noise SNR grid is empty");
  for (double s : snr_grid)
    if (!std::isfinite(s)) AVSR_INVALID("noise SNR grid has a non-finite value");
  if (babble_voices < 3)
    AVSR_INVALID("babble needs at least 3 voices, got " << babble_voices);
}

void MfccConfig::Validate() const {
  if (!(window_seconds > 0) || !(step_seconds > 0))
    AVSR_INVALID("MFCC window and step must be positive");
  if (window_seconds < step_seconds)
    AVSR_INVALID("MFCC window (" << window_seconds << " s) is shorter than the step ("
                                 << step_seconds << " s)");
  if (n_coeffs < 1 || n_coeffs > n_mel_filters)
    AVSR_INVALID("MFCC needs 1 <= coefficients <= filters, got "
                 << n_coeffs << " and " << n_mel_filters);
  if (delta_window < 1) AVSR_INVALID("delta window must be >= 1");
  if (!(log_floor > 0)) AVSR_INVALID("log floor must be positive");
}

int MfccConfig::WindowSamples(int sample_rate) const {
  return static_cast<int>(std::lround(window_seconds * sample_rate));
}

int MfccConfig::StepSamples(int sample_rate) const {
  return static_cast<int>(std::lround(step_seconds * sample_rate));
}

int MfccConfig::NumFrames(int num_samples, int sample_rate) const {
  const int win = WindowSamples(sample_rate);
  if (num_samples < win) return 0;
  return (num_samples - win) / StepSamples(sample_rate) + 1;
}

double SignalPower(std::span<const float> x) {
  if (x.empty()) return 0;
  double s = 0;
  for (float v : x) s += static_cast<double>(v) * v;
  return s / x.size();
}

WaveformClip ZNormalize(const WaveformClip &clip) {
  if (clip.samples.empty()) AVSR_INVALID("cannot z-normalize an empty clip");
  double mean = 0;
  for (float v : clip.samples) mean += v;
  mean /= clip.samples.size();
  double var = 0;
  for (float v : clip.samples) var += (v - mean) * (v - mean);
  var /= clip.samples.size();
  const double scale = 1.0 / (std::sqrt(var) + 1e-8);
  WaveformClip out = clip;
  for (float &v : out.samples) v = static_cast<float>((v - mean) * scale);
  return out;
}

namespace {

// Two-pole resonator y[n] = g x[n] + a1 y[n-1] + a2 y[n-2].
struct Resonator {
  double a1 = 0, a2 = 0, gain = 1, y1 = 0, y2 = 0;

  void Tune(double freq, double bandwidth, int sample_rate) {
    const double r = std::exp(-std::numbers::pi * bandwidth / sample_rate);
    const double theta = 2 * std::numbers::pi * freq / sample_rate;
    a1 = 2 * r * std::cos(theta);
    a2 = -r * r;
    gain = 1 - r;
  }
  double Step(double x) {
    const double y = gain * x + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

std::vector<double> SynthVoice(int n, int sample_rate, Rng &rng) {
  std::vector<double> out(n);
  const double nyquist = 0.45 * sample_rate;
  const double f0 = UniformRange(rng, 90, 250);
  const double rate = UniformRange(rng, 2, 8);  // syllables per second
  Resonator formant[3];
  double pulse_phase = UniformUnit(rng);
  int pos = -static_cast<int>(UniformUnit(rng) * sample_rate / rate);
  while (pos < n) {
    const int len = std::max(
        8, static_cast<int>(sample_rate / rate * UniformRange(rng, 0.7, 1.3)));
    const bool voiced = UniformUnit(rng) < 0.8;
    const double amp = UniformRange(rng, 0.4, 1.0);
    formant[0].Tune(UniformRange(rng, 300, 900), 90, sample_rate);
    formant[1].Tune(std::min(nyquist, UniformRange(rng, 900, 2500)), 120,
                    sample_rate);
    formant[2].Tune(std::min(nyquist, UniformRange(rng, 2400, 3400)), 180,
                    sample_rate);
    const double pitch = f0 * UniformRange(rng, 0.9, 1.1);
    // Samples before t = 0 are never heard; start the syllable there.
    for (int i = std::max(0, -pos); i < len && pos + i < n; ++i) {
      double e;
      if (voiced) {
        pulse_phase += pitch / sample_rate;
        e = 0.1 * Gaussian(rng);
        if (pulse_phase >= 1) {
          pulse_phase -= 1;
          e += 8.0;
        }
      } else {
        e = Gaussian(rng);
      }
      const double y = formant[0].Step(e) + 0.7 * formant[1].Step(e) +
                       0.4 * formant[2].Step(e);
      const double s = std::sin(std::numbers::pi * (i + 0.5) / len);
      out[pos + i] = amp * s * s * y;
    }
    pos += len;
  }
  return out;
}

}  // namespace

WaveformClip SynthBabble(int num_samples, int sample_rate,
                         const NoiseConfig &config, Rng &rng) {
  config.Validate();
  if (num_samples < 1) AVSR_INVALID("babble duration must be positive");
  std::vector<double> acc(num_samples, 0.0);
  for (int v = 0; v < config.babble_voices; ++v) {
    std::vector<double> voice = SynthVoice(num_samples, sample_rate, rng);
    double p = 0;
    for (double s : voice) p += s * s;
    p /= num_samples;
    if (p <= 0) continue;
    const double w = UniformRange(rng, 0.6, 1.0) / std::sqrt(p);
    for (int i = 0; i < num_samples; ++i) acc[i] += w * voice[i];
  }
  double p = 0;
  for (double s : acc) p += s * s;
  p /= num_samples;
  if (!(p > 0)) AVSR_ERR("babble synthesis produced silence");
  const double g = 1.0 / std::sqrt(p);
  WaveformClip out;
  out.sample_rate = sample_rate;
  out.samples.resize(num_samples);
  for (int i = 0; i < num_samples; ++i)
    out.samples[i] = static_cast<float>(g * acc[i]);
  return out;
}

WaveformClip SynthBabble(double duration, const NoiseConfig &config,
                         int sample_rate) {
  if (!(duration > 0)) AVSR_INVALID("babble duration must be positive");
  Rng rng(config.seed);
  return SynthBabble(static_cast<int>(std::lround(duration * sample_rate)),
                     sample_rate, config, rng);
}

double SnrNoiseScale(std::span<const float> clean, std::span<const float> noise,
                     double target_db) {
  if (clean.size() != noise.size())
    AVSR_INVALID("SNR mixing needs equal lengths, got " << clean.size()
                                                        << " and " << noise.size());
  const double pc = SignalPower(clean), pn = SignalPower(noise);
  if (!(pc > 0)) AVSR_INVALID("clean signal has zero power");
  if (!(pn > 0)) AVSR_INVALID("noise signal has zero power");
  return std::sqrt(pc / (pn * std::pow(10.0, target_db / 10.0)));
}

WaveformClip MixAtSnr(const WaveformClip &clean, const WaveformClip &noise,
                      double target_db) {
  if (clean.sample_rate != noise.sample_rate)
    AVSR_INVALID("sample rates differ: " << clean.sample_rate << " vs "
                                         << noise.sample_rate);
  const double alpha = SnrNoiseScale(clean.samples, noise.samples, target_db);
  WaveformClip out = clean;
  for (std::size_t i = 0; i < out.samples.size(); ++i)
    out.samples[i] = static_cast<float>(clean.samples[i] + alpha * noise.samples[i]);
  out.snr_applied = target_db;
  return out;
}

WaveformClip AugmentNoise(const WaveformClip &clean, const NoiseConfig &config,
                          Rng &rng) {
  config.Validate();
  const int n = static_cast<int>(config.snr_grid.size());
  const int pick = UniformInt(rng, 0, n);
  if (pick == n) return clean;
  WaveformClip noise = SynthBabble(static_cast<int>(clean.samples.size()),
                                   clean.sample_rate, config, rng);
  return MixAtSnr(clean, noise, config.snr_grid[pick]);
}

namespace {

double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double MelToHz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// (filters, nfft / 2 + 1) triangular weights, equally spaced on the mel scale
// between 0 Hz and Nyquist.
std::vector<std::vector<double>> MelFilterbank(int filters, int nfft,
                                               int sample_rate) {
  const int bins = nfft / 2 + 1;
  const double top = HzToMel(sample_rate / 2.0);
  std::vector<double> edges(filters + 2);
  for (int i = 0; i < filters + 2; ++i)
    edges[i] = MelToHz(top * i / (filters + 1));
  std::vector<std::vector<double>> fb(filters, std::vector<double>(bins, 0.0));
  for (int m = 0; m < filters; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / nfft;
      if (f > lo && f < mid) fb[m][k] = (f - lo) / (mid - lo);
      else if (f >= mid && f < hi) fb[m][k] = (hi - f) / (hi - mid);
    }
  }
  return fb;
}

}  // namespace

Tensor<double> MfccExtract(const WaveformClip &clip, const MfccConfig &config) {
  config.Validate();
  const int sr = clip.sample_rate;
  const int win = config.WindowSamples(sr), step = config.StepSamples(sr);
  const int L = static_cast<int>(clip.samples.size());
  const int frames = config.NumFrames(L, sr);
  if (frames < 1)
    AVSR_INVALID("clip of " << L << " samples is shorter than one MFCC window ("
                            << win << " samples)");
  int nfft = 1;
  while (nfft < win) nfft *= 2;
  const int bins = nfft / 2 + 1;
  const int M = config.n_mel_filters, K = config.n_coeffs;

  std::vector<double> emph(L);
  for (int i = 0; i < L; ++i)
    emph[i] = clip.samples[i] - (i > 0 ? config.preemphasis * clip.samples[i - 1] : 0.0);
  std::vector<double> hamming(win);
  for (int i = 0; i < win; ++i)
    hamming[i] = 0.54 - 0.46 * std::cos(2 * std::numbers::pi * i / (win - 1));
  const auto fb = MelFilterbank(M, nfft, sr);

  std::vector<std::vector<double>> dct(K, std::vector<double>(M));
  for (int k = 0; k < K; ++k)
    for (int m = 0; m < M; ++m)
      dct[k][m] = std::sqrt((k == 0 ? 1.0 : 2.0) / M) *
                  std::cos(std::numbers::pi * k * (m + 0.5) / M);

  Eigen::FFT<double> fft;
  std::vector<double> buf(nfft);
  std::vector<std::complex<double>> spec;
  std::vector<double> mag(bins), logmel(M);
  std::vector<std::vector<double>> ceps(frames, std::vector<double>(K));
  for (int f = 0; f < frames; ++f) {
    std::fill(buf.begin(), buf.end(), 0.0);
    for (int i = 0; i < win; ++i) buf[i] = emph[f * step + i] * hamming[i];
    fft.fwd(spec, buf);
    for (int k = 0; k < bins; ++k) mag[k] = std::abs(spec[k]);
    for (int m = 0; m < M; ++m) {
      double e = 0;
      for (int k = 0; k < bins; ++k) e += fb[m][k] * mag[k];
      logmel[m] = std::log(std::max(e, config.log_floor));
    }
    for (int k = 0; k < K; ++k) {
      double c = 0;
      for (int m = 0; m < M; ++m) c += dct[k][m] * logmel[m];
      ceps[f][k] = c;
    }
  }

  Tensor<double> out(Shape{frames, config.NumFeatures()});
  const int D = config.delta_window;
  double norm = 0;
  for (int n = 1; n <= D; ++n) norm += 2.0 * n * n;
  for (int f = 0; f < frames; ++f)
    for (int k = 0; k < K; ++k) {
      out.at({f, k}) = ceps[f][k];
      if (!config.include_deltas) continue;
      double d = 0;
      for (int n = 1; n <= D; ++n) {
        const int ahead = std::min(frames - 1, f + n);
        const int behind = std::max(0, f - n);
        d += n * (ceps[ahead][k] - ceps[behind][k]);
      }
      out.at({f, K + k}) = d / norm;
    }
  return out;
}

// ---------------------------------------------------------------------------
// WAV

namespace {

void PutU32(std::string &s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void PutU16(std::string &s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}
std::uint32_t GetU32(const std::string &s, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[off + i]);
  return v;
}
std::uint16_t GetU16(const std::string &s, std::size_t off) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(s[off]) |
                                    (static_cast<unsigned char>(s[off + 1]) << 8));
}

}  // namespace

void WriteWav(const std::string &path, const WaveformClip &clip) {
  if (clip.sample_rate <= 0) AVSR_INVALID("sample rate must be positive");
  const std::uint32_t data_bytes = 2 * clip.samples.size();
  std::string s;
  s.reserve(44 + data_bytes);
  s += "RIFF";
  PutU32(s, 36 + data_bytes);
  s += "WAVEfmt ";
  PutU32(s, 16);
  PutU16(s, 1);  // PCM
  PutU16(s, 1);  // mono
  PutU32(s, clip.sample_rate);
  PutU32(s, 2 * clip.sample_rate);
  PutU16(s, 2);
  PutU16(s, 16);
  s += "data";
  PutU32(s, data_bytes);
  for (float v : clip.samples) {
    const double c = std::clamp(static_cast<double>(v), -1.0, 1.0);
    PutU16(s, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32767))));
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) AVSR_ERR("cannot open " << path << " for writing");
  os.write(s.data(), s.size());
  if (!os) AVSR_ERR("failed writing " << path);
}

WaveformClip ReadWav(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) AVSR_INVALID("cannot open WAV file " << path);
  std::string s((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (s.size() < 12 || s.compare(0, 4, "RIFF") != 0 || s.compare(8, 4, "WAVE") != 0)
    AVSR_INVALID(path << ": not a RIFF/WAVE file (offset 0)");
  std::size_t off = 12;
  bool have_fmt = false;
  int rate = 0;
  while (off + 8 <= s.size()) {
    const std::string id = s.substr(off, 4);
    const std::uint32_t len = GetU32(s, off + 4);
    const std::size_t body = off + 8;
    if (body + len > s.size())
      AVSR_INVALID(path << ": chunk '" << id << "' at offset " << off << " declares "
                        << len << " bytes but only " << s.size() - body
                        << " remain");
    if (id == "fmt ") {
      if (len < 16) AVSR_INVALID(path << ": fmt chunk too short at offset " << off);
      const int format = GetU16(s, body), channels = GetU16(s, body + 2);
      const int bits = GetU16(s, body + 14);
      rate = static_cast<int>(GetU32(s, body + 4));
      if (format != 1 || channels != 1 || bits != 16)
        AVSR_INVALID(path << ": only mono 16-bit PCM is supported (format "
                          << format << ", " << channels << " channels, " << bits
                          << " bits at offset " << body << ")");
      if (rate <= 0) AVSR_INVALID(path << ": sample rate 0 at offset " << body + 4);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) AVSR_INVALID(path << ": data chunk before fmt at offset " << off);
      if (len % 2) AVSR_INVALID(path << ": odd data length at offset " << off + 4);
      WaveformClip clip;
      clip.sample_rate = rate;
      clip.samples.resize(len / 2);
      for (std::size_t i = 0; i < clip.samples.size(); ++i)
        clip.samples[i] =
            static_cast<std::int16_t>(GetU16(s, body + 2 * i)) / 32767.0f;
      return clip;
    }
    off = body + len + (len & 1);
  }
  AVSR_INVALID(path << ": no data chunk found");
}

}  // namespace avsr
