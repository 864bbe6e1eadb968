// tests/audio-front-test.cc

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
#include <fstream>
#include <map>
#include <numbers>

#include "avsr/audio-front.h"
#include "test-util.h"

using namespace avsr;

namespace {

WaveformClip Sine(int n, double freq, double amp = std::sqrt(2.0)) {
  WaveformClip c;
  c.samples.resize(n);
  for (int i = 0; i < n; ++i)
    c.samples[i] = amp * std::sin(2 * std::numbers::pi * freq * i / c.sample_rate);
  return c;
}

WaveformClip WhiteNoise(int n, Rng &rng, double sd = 1.0) {
  WaveformClip c;
  c.samples.resize(n);
  for (auto &v : c.samples) v = sd * Gaussian(rng);
  return c;
}

// Welch-averaged spectral flatness with a naive DFT over 256-sample
// segments: geometric over arithmetic mean of the power spectrum.
double Flatness(const std::vector<float> &x) {
  const int N = 256;
  const int bins = N / 2;
  std::vector<double> psd(bins, 0.0);
  int segs = 0;
  for (std::size_t start = 0; start + N <= x.size(); start += N, ++segs)
    for (int k = 1; k <= bins; ++k) {
      double re = 0, im = 0;
      for (int i = 0; i < N; ++i) {
        const double w = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * i / N);
        re += w * x[start + i] * std::cos(2 * std::numbers::pi * k * i / N);
        im -= w * x[start + i] * std::sin(2 * std::numbers::pi * k * i / N);
      }
      psd[k - 1] += re * re + im * im;
    }
  double log_sum = 0, sum = 0;
  for (double p : psd) {
    log_sum += std::log(p / segs + 1e-30);
    sum += p / segs;
  }
  return std::exp(log_sum / bins) / (sum / bins);
}

double MeasuredSnr(const WaveformClip &clean, const WaveformClip &mix) {
  double pc = 0, pn = 0;
  for (std::size_t i = 0; i < clean.samples.size(); ++i) {
    const double n = static_cast<double>(mix.samples[i]) - clean.samples[i];
    pc += static_cast<double>(clean.samples[i]) * clean.samples[i];
    pn += n * n;
  }
  return 10 * std::log10(pc / pn);
}

// Reference MFCC for one frame, computed with a direct DFT.
std::vector<double> ReferenceCepstrum(const std::vector<double> &frame, int sr) {
  const int nfft = 1024, bins = nfft / 2 + 1, M = 26, K = 13;
  const int win = frame.size();
  std::vector<double> mag(bins);
  for (int k = 0; k < bins; ++k) {
    double re = 0, im = 0;
    for (int i = 0; i < win; ++i) {
      const double w = 0.54 - 0.46 * std::cos(2 * std::numbers::pi * i / (win - 1));
      re += w * frame[i] * std::cos(2 * std::numbers::pi * k * i / nfft);
      im -= w * frame[i] * std::sin(2 * std::numbers::pi * k * i / nfft);
    }
    mag[k] = std::hypot(re, im);
  }
  auto mel = [](double f) { return 2595 * std::log10(1 + f / 700); };
  auto hz = [](double m) { return 700 * (std::pow(10, m / 2595) - 1); };
  std::vector<double> logmel(M);
  for (int m = 0; m < M; ++m) {
    const double lo = hz(mel(sr / 2.0) * m / (M + 1));
    const double mid = hz(mel(sr / 2.0) * (m + 1) / (M + 1));
    const double hi = hz(mel(sr / 2.0) * (m + 2) / (M + 1));
    double e = 0;
    for (int k = 0; k < bins; ++k) {
      const double f = k * double(sr) / nfft;
      double w = 0;
      if (f > lo && f < mid) w = (f - lo) / (mid - lo);
      else if (f >= mid && f < hi) w = (hi - f) / (hi - mid);
      e += w * mag[k];
    }
    logmel[m] = std::log(std::max(e, 1e-10));
  }
  std::vector<double> c(K);
  for (int k = 0; k < K; ++k) {
    for (int m = 0; m < M; ++m)
      c[k] += logmel[m] * std::cos(std::numbers::pi * k * (m + 0.5) / M);
    c[k] *= std::sqrt((k == 0 ? 1.0 : 2.0) / M);
  }
  return c;
}

}  // namespace

TEST_CASE("z-normalization") {
  WaveformClip c;
  c.samples = {1, 2, 3};
  auto z = ZNormalize(c);
  CHECK(z.samples[0] == doctest::Approx(-1.224744871).epsilon(1e-6));
  CHECK(std::abs(z.samples[1]) < 1e-7);
  CHECK(z.samples[2] == doctest::Approx(1.224744871).epsilon(1e-6));

  c.samples.assign(50, 0.7f);
  for (float v : ZNormalize(c).samples) CHECK(v == 0.0f);

  Rng rng(1);
  auto noise = WhiteNoise(5000, rng, 3.0);
  for (auto &v : noise.samples) v += 2.0f;
  auto once = ZNormalize(noise), twice = ZNormalize(once);
  double mean = 0, var = 0;
  for (float v : once.samples) mean += v;
  mean /= once.samples.size();
  for (float v : once.samples) var += (v - mean) * (v - mean);
  CHECK(std::abs(mean) < 1e-6);
  CHECK(std::sqrt(var / once.samples.size()) == doctest::Approx(1).epsilon(1e-4));
  for (std::size_t i = 0; i < once.samples.size(); ++i)
    CHECK(std::abs(twice.samples[i] - once.samples[i]) < 1e-6);

  CHECK_THROWS_AS(ZNormalize(WaveformClip{}), ValidationError);
}

TEST_CASE("babble synthesis") {
  NoiseConfig cfg;
  cfg.seed = 42;
  auto a = SynthBabble(1.16, cfg), b = SynthBabble(1.16, cfg);
  REQUIRE(a.samples.size() == 18560);
  CHECK(a.samples == b.samples);
  CHECK(SignalPower(a.samples) == doctest::Approx(1.0).epsilon(1e-3));

  cfg.seed = 43;
  CHECK(SynthBabble(1.16, cfg).samples != a.samples);

  Rng rng(5);
  const double tone = Flatness(Sine(18560, 440).samples);
  const double white = Flatness(WhiteNoise(18560, rng).samples);
  const double babble = Flatness(a.samples);
  MESSAGE("flatness tone " << tone << " babble " << babble << " white " << white);
  CHECK(tone < babble);
  CHECK(babble < white);

  cfg.babble_voices = 2;
  CHECK_THROWS_AS(SynthBabble(1.0, cfg), ValidationError);
  cfg.babble_voices = 3;
  CHECK_THROWS_AS(SynthBabble(0.0, cfg), ValidationError);
}

TEST_CASE("mixing at a target SNR") {
  Rng rng(2);
  auto sine = Sine(16000, 300);
  auto noise = WhiteNoise(16000, rng);
  // Rescale the noise to exactly unit power.
  const double p = SignalPower(noise.samples);
  for (auto &v : noise.samples) v /= std::sqrt(p);
  const double ps = SignalPower(sine.samples);
  CHECK(SnrNoiseScale(sine.samples, noise.samples, 0) ==
        doctest::Approx(std::sqrt(ps / SignalPower(noise.samples))));
  CHECK(SnrNoiseScale(sine.samples, noise.samples, 0) == doctest::Approx(1).epsilon(1e-3));
  CHECK(SnrNoiseScale(sine.samples, noise.samples, 20) == doctest::Approx(0.1).epsilon(1e-3));

  auto mix = MixAtSnr(sine, noise, -5);
  REQUIRE(mix.snr_applied.has_value());
  double pn = 0;
  for (std::size_t i = 0; i < mix.samples.size(); ++i) {
    const double d = static_cast<double>(mix.samples[i]) - sine.samples[i];
    pn += d * d;
  }
  pn /= mix.samples.size();
  CHECK(pn / ps == doctest::Approx(std::pow(10.0, 0.5)).epsilon(1e-4));

  for (int rep = 0; rep < 200; ++rep) {
    const int n = 200 + rep * 7;
    auto c = WhiteNoise(n, rng, UniformRange(rng, 0.01, 10));
    auto z = WhiteNoise(n, rng, UniformRange(rng, 0.01, 10));
    const double target = UniformRange(rng, -10, 25);
    CHECK(std::abs(MeasuredSnr(c, MixAtSnr(c, z, target)) - target) < 0.01);
  }

  WaveformClip silent;
  silent.samples.assign(16000, 0.0f);
  CHECK_THROWS_AS(MixAtSnr(silent, noise, 0), ValidationError);
  CHECK_THROWS_AS(MixAtSnr(sine, silent, 0), ValidationError);
  CHECK_THROWS_AS(MixAtSnr(Sine(100, 300), noise, 0), ValidationError);
}

TEST_CASE("noise augmentation") {
  NoiseConfig cfg;
  cfg.babble_voices = 3;
  Rng rng(3);
  auto clean = Sine(64, 500);
  std::map<double, int> counts;
  int clean_count = 0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    auto out = AugmentNoise(clean, cfg, rng);
    if (out.snr_applied) {
      ++counts[*out.snr_applied];
      if (i < 200) CHECK(std::abs(MeasuredSnr(clean, out) - *out.snr_applied) < 0.01);
    } else {
      ++clean_count;
      CHECK(out.samples == clean.samples);
    }
  }
  REQUIRE(counts.size() == 6);
  CHECK(std::abs(clean_count / double(draws) - 1.0 / 7) < 0.01);
  for (auto [snr, n] : counts) CHECK(std::abs(n / double(draws) - 1.0 / 7) < 0.01);

  cfg.snr_grid.clear();
  CHECK_THROWS_AS(cfg.Validate(), ValidationError);
  CHECK_THROWS_AS(AugmentNoise(clean, cfg, rng), ValidationError);
}

TEST_CASE("mfcc features") {
  MfccConfig cfg;
  Rng rng(4);
  auto speechy = ZNormalize(SynthBabble(18560, kSampleRate, NoiseConfig{}, rng));
  auto f = MfccExtract(speechy, cfg);
  CHECK(f.shape() == Shape{113, 26});
  CHECK(cfg.NumFrames(18560, 16000) == 113);

  SUBCASE("matches a direct DFT reference") {
    std::vector<double> emph(speechy.samples.size());
    for (std::size_t i = 0; i < emph.size(); ++i)
      emph[i] = speechy.samples[i] - (i ? 0.97 * speechy.samples[i - 1] : 0.0);
    for (int frame : {0, 17, 112}) {
      std::vector<double> seg(emph.begin() + frame * 160,
                              emph.begin() + frame * 160 + 640);
      auto ref = ReferenceCepstrum(seg, 16000);
      for (int k = 0; k < 13; ++k)
        CHECK(f.at({frame, k}) == doctest::Approx(ref[k]).epsilon(1e-8));
    }
  }

  SUBCASE("deltas are regression slopes with edge replication") {
    auto c = [&](int t, int k) { return f.at({std::clamp(t, 0, 112), k}); };
    for (int t : {0, 1, 50, 111, 112})
      for (int k = 0; k < 13; ++k) {
        const double d = (c(t + 1, k) - c(t - 1, k) + 2 * (c(t + 2, k) - c(t - 2, k))) / 10;
        CHECK(f.at({t, 13 + k}) == doctest::Approx(d).epsilon(1e-9));
      }
  }

  SUBCASE("silence gives constant frames and zero deltas") {
    WaveformClip silence;
    silence.samples.assign(18560, 0.0f);
    auto s = MfccExtract(silence, cfg);
    for (int t = 0; t < 113; ++t)
      for (int k = 0; k < 26; ++k) {
        CHECK(s.at({t, k}) == s.at({0, k}));
        if (k >= 13) CHECK(s.at({t, k}) == 0.0);
      }
    CHECK(s.at({0, 0}) == doctest::Approx(std::log(1e-10) * std::sqrt(26.0)));
  }

  SUBCASE("amplitude scaling only moves c0") {
    auto twice = speechy;
    for (auto &v : twice.samples) v *= 2;
    auto g = MfccExtract(twice, cfg);
    const double shift = std::log(2.0) * std::sqrt(26.0);
    for (int t = 0; t < 113; ++t)
      for (int k = 0; k < 26; ++k) {
        const double expect = f.at({t, k}) + (k == 0 ? shift : 0.0);
        CHECK(std::abs(g.at({t, k}) - expect) < 1e-6);
      }
  }

  WaveformClip short_clip;
  short_clip.samples.assign(639, 0.1f);
  CHECK_THROWS_AS(MfccExtract(short_clip, cfg), ValidationError);
  MfccConfig bad;
  bad.n_coeffs = 30;
  CHECK_THROWS_AS(bad.Validate(), ValidationError);
  bad = MfccConfig{};
  bad.window_seconds = 0.005;
  CHECK_THROWS_AS(bad.Validate(), ValidationError);
}

TEST_CASE("wav files") {
  auto dir = avsr::testing::TempDir("wav");
  Rng rng(6);
  WaveformClip c;
  for (int i = 0; i < 1000; ++i)
    c.samples.push_back(static_cast<std::int16_t>(UniformInt(rng, -32767, 32767)) / 32767.0f);
  const std::string path = (dir / "a.wav").string();
  WriteWav(path, c);
  auto back = ReadWav(path);
  CHECK(back.sample_rate == 16000);
  CHECK(back.samples == c.samples);
  WriteWav((dir / "b.wav").string(), back);
  std::ifstream fa(path, std::ios::binary), fb(dir / "b.wav", std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(fa)), {}),
      sb((std::istreambuf_iterator<char>(fb)), {});
  CHECK(sa == sb);
  CHECK(sa.size() == 44 + 2000);

  auto write = [&](const std::string &name, const std::string &bytes) {
    std::ofstream os(dir / name, std::ios::binary);
    os << bytes;
    return (dir / name).string();
  };
  CHECK_THROWS_WITH_AS(ReadWav(write("junk.wav", "hello world, not a wav")),
                       doctest::Contains("offset 0"), ValidationError);
  CHECK_THROWS_WITH_AS(ReadWav(write("cut.wav", sa.substr(0, 100))),
                       doctest::Contains("offset 36"), ValidationError);
  std::string stereo = sa;
  stereo[22] = 2;
  CHECK_THROWS_WITH_AS(ReadWav(write("stereo.wav", stereo)),
                       doctest::Contains("mono"), ValidationError);
  CHECK_THROWS_AS(ReadWav((dir / "missing.wav").string()), ValidationError);
}
