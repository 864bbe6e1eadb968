// avsr/video-front.cc

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

#include "avsr/video-front.h"

#include <algorithm>
#include <array>
#include <cmath>

namespace avsr {

void VideoClip::Validate() const {
  if (frames < 1 || height < 1 || width < 1)
    AVSR_INVALID("video clip must have positive dimensions, got "
                 << frames << "x" << height << "x" << width);
  if (pixels.size() != static_cast<std::size_t>(frames) * height * width)
    AVSR_INVALID("video clip holds " << pixels.size() << " pixels, expected "
                                     << static_cast<std::size_t>(frames) * height * width);
}

void NormStats::Validate() const {
  if (!std::isfinite(mean) || !(std > 0) || !std::isfinite(std))
    AVSR_INVALID("invalid normalization stats: mean " << mean << ", std " << std);
}

int DefaultJitter(int crop_size) {
  return static_cast<int>(std::lround(4.0 * crop_size / 96.0));
}

VideoClip Crop(const VideoClip &clip, int top, int left, int size) {
  clip.Validate();
  if (top < 0 || left < 0 || top + size > clip.height || left + size > clip.width)
    AVSR_INVALID("crop " << size << "x" << size << " at (" << top << ", " << left
                         << ") does not fit a " << clip.height << "x"
                         << clip.width << " frame");
  VideoClip out(clip.frames, size, size);
  out.fps = clip.fps;
  for (int t = 0; t < clip.frames; ++t)
    for (int y = 0; y < size; ++y)
      std::copy_n(&clip.pixels[(static_cast<std::size_t>(t) * clip.height + top + y) *
                                   clip.width + left],
                  size, &out.at(t, y, 0));
  return out;
}

VideoClip CenterCrop(const VideoClip &clip, int size) {
  if (clip.height < size || clip.width < size)
    AVSR_INVALID("frames of " << clip.height << "x" << clip.width
                              << " are smaller than the " << size << "x" << size
                              << " crop");
  return Crop(clip, (clip.height - size) / 2, (clip.width - size) / 2, size);
}

VideoClip HorizontalFlip(const VideoClip &clip) {
  VideoClip out = clip;
  for (int t = 0; t < clip.frames; ++t)
    for (int y = 0; y < clip.height; ++y)
      std::reverse(&out.at(t, y, 0), &out.at(t, y, 0) + clip.width);
  return out;
}

CropDecision SampleCrop(const VideoClip &clip, const AugmentConfig &config,
                        Rng &rng) {
  const int need = config.crop_size + 2 * config.jitter;
  if (clip.height < need || clip.width < need)
    AVSR_INVALID("augmentation needs frames of at least " << need << "x" << need
                                                          << ", got " << clip.height
                                                          << "x" << clip.width);
  CropDecision d;
  d.top = (clip.height - config.crop_size) / 2 +
          UniformInt(rng, -config.jitter, config.jitter);
  d.left = (clip.width - config.crop_size) / 2 +
           UniformInt(rng, -config.jitter, config.jitter);
  d.flip = UniformUnit(rng) < config.flip_prob;
  return d;
}

VideoClip ApplyCrop(const VideoClip &clip, const CropDecision &d,
                    const AugmentConfig &config) {
  VideoClip out = Crop(clip, d.top, d.left, config.crop_size);
  return d.flip ? HorizontalFlip(out) : out;
}

VideoClip AugmentClip(const VideoClip &clip, const AugmentConfig &config,
                      Rng &rng) {
  return ApplyCrop(clip, SampleCrop(clip, config, rng), config);
}

Tensor<float> NormalizeClip(const VideoClip &clip, const NormStats &stats) {
  clip.Validate();
  stats.Validate();
  // Every pixel value maps through the same affine function.
  std::array<float, 256> lut;
  for (int v = 0; v < 256; ++v)
    lut[v] = static_cast<float>((v - stats.mean) / stats.std);
  Tensor<float> out(Shape{1, clip.frames, clip.height, clip.width});
  float *o = out.data();
  for (std::size_t i = 0; i < clip.pixels.size(); ++i) o[i] = lut[clip.pixels[i]];
  return out;
}

Tensor<float> PreprocessClip(const VideoClip &clip, const NormStats &stats,
                             int size) {
  return NormalizeClip(CenterCrop(clip, size), stats);
}

NormStats ComputeNormStats(const std::vector<const VideoClip *> &clips) {
  if (clips.empty()) AVSR_INVALID("normalization stats need at least one clip");
  std::array<std::uint64_t, 256> hist{};
  std::uint64_t n = 0;
  for (const VideoClip *c : clips) {
    for (std::uint8_t p : c->pixels) ++hist[p];
    n += c->pixels.size();
  }
  if (n == 0) AVSR_INVALID("normalization stats over zero pixels");
  double mean = 0;
  for (int v = 0; v < 256; ++v) mean += static_cast<double>(v) * hist[v];
  mean /= n;
  double var = 0;
  for (int v = 0; v < 256; ++v) var += hist[v] * (v - mean) * (v - mean);
  var /= n;
  if (!(var > 0))
    AVSR_INVALID("training clips have zero pixel variance (every pixel is "
                 << mean << ")");
  return NormStats{mean, std::sqrt(var)};
}

}  // namespace avsr
