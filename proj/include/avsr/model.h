// avsr/model.h

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

// The four word classifiers: audio-only, video-only, audiovisual fusion and
// the MFCC baseline.  Also per-frame loss, sequence labelling, evaluation
// and the checkpoint container.
//
// Parameter groups:
//   <stream>.frontend  <stream>.resnet  <stream>.bgru   (stream = audio|video)
//   <stream>.head      <stream>.tcn                     (single-stream models)
//   fusion.bgru  fusion.head                            (audiovisual model)
//   mfcc.input_bn  mfcc.bgru  mfcc.head                 (MFCC baseline)

#ifndef AVSR_MODEL_H_
#define AVSR_MODEL_H_

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "avsr/audio-front.h"
#include "avsr/data.h"
#include "avsr/layers.h"
#include "avsr/video-front.h"

namespace avsr {

enum class Target { kAudio, kVideo, kAv, kMfcc };

const char *TargetName(Target t);
Target ParseTarget(const std::string &name);  // throws ValidationError

// Which back-end sits on top of a single stream.  The temporal-conv head is
// only used while pretraining a stream.
enum class Head { kRecurrent, kTemporalConv };

struct ModelSpec {
  Target target = Target::kAv;
  int n_classes = 10;
  double width = 0.125;
  int cells = 32;         // per stream, and for the MFCC baseline
  int fusion_cells = 32;
  int image_size = 32;
  int frames = 29;
  int sample_rate = kSampleRate;
  MfccConfig mfcc;

  bool UsesWaveform() const { return target != Target::kVideo; }
  bool UsesVideo() const {
    return target == Target::kVideo || target == Target::kAv;
  }
  bool HasStream(StreamKind kind) const;
  StreamSpec Stream(StreamKind kind) const;
  std::vector<StreamKind> Streams() const;
  // Frames the MFCC front-end yields for a clip of `frames` video frames.
  int MfccFrames() const;
  int ClipSamples() const;

  void Validate() const;
  // Flat key/value description, enough to rebuild the spec.
  std::vector<std::pair<std::string, std::string>> Describe() const;
  static ModelSpec FromDescription(
      const std::map<std::string, std::string> &fields);
  // FNV-1a over Describe().
  std::uint64_t Fingerprint() const;
  // The same spec with another target; used to line up stream checkpoints
  // with a fusion model.
  ModelSpec WithTarget(Target t) const;
};

// Batched network input.  Only the members the target needs are set.
template <typename Real>
struct ModelInput {
  Tensor<Real> audio;  // (B, 1, L), z-normalized
  Tensor<Real> video;  // (B, 1, T, S, S), normalized
  Tensor<Real> mfcc;   // (T_mfcc, B, F)
  std::vector<int> labels;
  int batch() const { return static_cast<int>(labels.size()); }
};

// One clip after augmentation or evaluation-time noise: the waveform as it
// enters the network (before z-normalization) and the already cropped video.
struct ClipInput {
  WaveformClip audio;
  VideoClip video;
  int label = 0;
};

ModelInput<float> AssembleInput(const ModelSpec &spec,
                                const std::vector<ClipInput> &clips,
                                const NormStats &video_stats);

template <typename Real>
void InitModel(ParamStore<Real> &store, const ModelSpec &spec, Rng &rng);

// Front-end and ResNet of one stream: (T, B, FeatureDim).
template <typename Real>
Var<Real> StreamFeatures(ForwardContext<Real> &ctx, const ModelSpec &spec,
                         StreamKind kind, const ModelInput<Real> &input);
// Whole stream including its BGRU: (T, B, 2 cells).
template <typename Real>
Var<Real> StreamForward(ForwardContext<Real> &ctx, const ModelSpec &spec,
                        StreamKind kind, const ModelInput<Real> &input);
// Audio embedding first, then visual, concatenated per frame, a 2-layer
// BGRU and the shared per-frame linear head: (T, B, n_classes).
template <typename Real>
Var<Real> FusionForward(ForwardContext<Real> &ctx, const ModelSpec &spec,
                        const Var<Real> &audio_emb, const Var<Real> &video_emb);
// Per-frame logits (T, B, C).  The temporal-conv head yields one frame.
template <typename Real>
Var<Real> ForwardLogits(ForwardContext<Real> &ctx, const ModelSpec &spec,
                        const ModelInput<Real> &input,
                        Head head = Head::kRecurrent);

// Mean over frames and batch of the per-frame cross-entropy against the
// clip label.  probs are (T B, C) with row t B + b.
template <typename Real>
LossOutput<Real> FrameLoss(const Var<Real> &logits,
                           std::span<const int> labels);

struct Classification {
  int label = 0;
  double confidence = 0;
};

// probs (T, C): argmax of the mean over frames, lowest index on ties.
Classification ClassifySequence(const Tensor<double> &probs);
// Rows of FrameLoss probabilities, regrouped per clip.
std::vector<Classification> ClassifyFrames(const Tensor<float> &probs,
                                           int frames, int batch);

// A model's spec, parameters and the video statistics it was trained with.
struct Model {
  ModelSpec spec;
  ParamStore<float> store;
  NormStats video_stats;
};

Model CreateModel(const ModelSpec &spec, std::uint64_t seed);

// Babble for clip `index` of an evaluation run.  Depends only on the seed,
// the index and the length, so every model sees the same noise.
WaveformClip EvalNoise(const NoiseConfig &noise, std::uint64_t seed,
                       int index, int num_samples, int sample_rate);

struct EvalOptions {
  std::optional<double> snr_db;  // clean when empty
  std::uint64_t noise_seed = 0;
  NoiseConfig noise;
  int batch_size = 50;
  Head head = Head::kRecurrent;
};

struct ClipPrediction {
  std::string id;
  int truth = 0;
  int predicted = 0;
  double confidence = 0;
};

struct EvalReport {
  int correct = 0;
  int total = 0;
  std::vector<ClipPrediction> predictions;
  double cr() const { return total ? static_cast<double>(correct) / total : 0; }
};

// Eval-mode batch norm, centre-cropped video and, when an SNR is given,
// babble mixed into every clip at exactly that SNR.
EvalReport Evaluate(Model &model, const std::vector<Sample> &split,
                    const EvalOptions &options);

// ---------------------------------------------------------------------------
// Checkpoints
//
//   "AVCK", u32 version, u64 config fingerprint,
//   u32 n_meta,    n_meta    x (u32 len, key, u32 len, value),
//   u32 n_tensors, n_tensors x (u32 len, name, u32 rank, rank x u32 dim),
//   then every tensor's data as little-endian float32, in table order.
// Entries are stored in name order, so equal contents give equal bytes.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint64_t fingerprint = 0;
  std::map<std::string, std::string> meta;
  std::map<std::string, Tensor<float>> tensors;

  const std::string &Meta(const std::string &key) const;  // throws if absent
  const Tensor<float> &Get(const std::string &name) const;
  bool operator==(const Checkpoint &) const = default;
};

std::string EncodeCheckpoint(const Checkpoint &ckpt);
Checkpoint DecodeCheckpoint(std::string_view bytes, const std::string &what);
void WriteCheckpoint(const Checkpoint &ckpt, const std::string &path);
Checkpoint ReadCheckpoint(const std::string &path);

// Stores the spec as "model.*" metadata, parameters as "param/<name>" and
// running statistics as "stats/<name>.mean|var".
void PutModel(const Model &model, Checkpoint *ckpt);
// Rebuilds the spec from metadata and checks every tensor is present with
// the right shape.
Model GetModel(const Checkpoint &ckpt);
// Copies tensors stored under `prefix` into the store.  Names in the store
// without a stored counterpart are left alone.  Returns the number copied.
int LoadStoreTensors(const Checkpoint &ckpt, const std::string &prefix,
                     ParamStore<float> *store);
void PutStoreTensors(const ParamStore<float> &store, const std::string &prefix,
                     Checkpoint *ckpt);

std::string FormatDouble(double v);  // round-trips exactly
double ParseDouble(const std::string &s, const std::string &what);
std::int64_t ParseInt(const std::string &s, const std::string &what);

}  // namespace avsr

#endif  // AVSR_MODEL_H_
