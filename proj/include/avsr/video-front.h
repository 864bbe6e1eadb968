// avsr/video-front.h

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

// Mouth-ROI clips: cropping, dataset-level normalization and clip-consistent
// crop / flip augmentation.

#ifndef AVSR_VIDEO_FRONT_H_
#define AVSR_VIDEO_FRONT_H_

#include <cstdint>
#include <vector>

#include "avsr/common.h"
#include "avsr/tensor.h"

namespace avsr {

// T grayscale frames, frame-major then row-major.
struct VideoClip {
  int frames = 0, height = 0, width = 0;
  double fps = 25;
  std::vector<std::uint8_t> pixels;

  VideoClip() = default;
  VideoClip(int t, int h, int w, std::uint8_t fill = 0)
      : frames(t), height(h), width(w),
        pixels(static_cast<std::size_t>(t) * h * w, fill) {}

  std::uint8_t &at(int t, int y, int x) {
    return pixels[(static_cast<std::size_t>(t) * height + y) * width + x];
  }
  std::uint8_t at(int t, int y, int x) const {
    return pixels[(static_cast<std::size_t>(t) * height + y) * width + x];
  }
  void Validate() const;
  bool operator==(const VideoClip &) const = default;
};

// Dataset-level pixel statistics.
struct NormStats {
  double mean = 0;
  double std = 1;
  void Validate() const;
};

// Crop jitter that scales the +-4 px used at 96x96 to other sizes.
int DefaultJitter(int crop_size);

struct AugmentConfig {
  int crop_size = 96;
  int jitter = 4;          // max offset from the centred crop, each axis
  double flip_prob = 0.5;
};

// One geometric transform, shared by every frame of a clip.
struct CropDecision {
  int top = 0, left = 0;
  bool flip = false;
};

VideoClip Crop(const VideoClip &clip, int top, int left, int size);
VideoClip CenterCrop(const VideoClip &clip, int size);
VideoClip HorizontalFlip(const VideoClip &clip);

CropDecision SampleCrop(const VideoClip &clip, const AugmentConfig &config,
                        Rng &rng);
VideoClip ApplyCrop(const VideoClip &clip, const CropDecision &d,
                    const AugmentConfig &config);
VideoClip AugmentClip(const VideoClip &clip, const AugmentConfig &config,
                      Rng &rng);

// (x - mean) / std as a (1, T, H, W) tensor.
Tensor<float> NormalizeClip(const VideoClip &clip, const NormStats &stats);
// Centre crop to `size` followed by NormalizeClip.
Tensor<float> PreprocessClip(const VideoClip &clip, const NormStats &stats,
                             int size = 96);

// Mean and population std over every pixel of every clip.
NormStats ComputeNormStats(const std::vector<const VideoClip *> &clips);

}  // namespace avsr

#endif  // AVSR_VIDEO_FRONT_H_
