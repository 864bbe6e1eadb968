// avsr/layers.h

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

// Network building blocks: GRU / BGRU stacks, identity-mapping residual
// blocks, the spatiotemporal visual front-end, the 2D ResNet-34 and 1D
// ResNet-18 streams and the temporal-convolution back-end.
//
// Parameters live in a ParamStore under dotted names.  Each block has an
// Init* function that creates its parameters and a forward function that
// reads them through a ForwardContext.

#ifndef AVSR_LAYERS_H_
#define AVSR_LAYERS_H_

#include <map>
#include <string>
#include <vector>

#include "avsr/ops.h"
#include "avsr/param-store.h"

namespace avsr {

// Binds a tape to a parameter store for one forward pass.  Parameters of
// frozen groups enter the tape as constants and their batch norms run in
// eval mode.  With `record_grads` false every parameter is a constant, so
// nothing is kept for a backward pass.
template <typename Real>
class ForwardContext {
 public:
  ForwardContext(Tape<Real> &tape, ParamStore<Real> &store, NormMode mode,
                 bool record_grads = true)
      : tape_(tape), store_(store), mode_(mode), record_grads_(record_grads) {}

  Tape<Real> &tape() { return tape_; }
  ParamStore<Real> &store() { return store_; }
  NormMode mode() const { return mode_; }

  // One tape node per parameter, however often it is used.
  Var<Real> P(const std::string &name);
  // BatchNorm with parameters name.gamma / name.beta and statistics `name`.
  Var<Real> BatchNormLayer(const std::string &name, const Var<Real> &x);

 private:
  Tape<Real> &tape_;
  ParamStore<Real> &store_;
  NormMode mode_;
  bool record_grads_;
  std::map<std::string, Var<Real>> cache_;
};

// He (fan-in) normal initialization.
template <typename Real>
Tensor<Real> HeNormal(const Shape &shape, int fan_in, Rng &rng);
template <typename Real>
Tensor<Real> UniformInit(const Shape &shape, double bound, Rng &rng);

template <typename Real>
void InitBatchNorm(ParamStore<Real> &store, const std::string &name,
                   const std::string &group, int channels);
template <typename Real>
void InitLinear(ParamStore<Real> &store, const std::string &name,
                const std::string &group, int in, int out, Rng &rng);

// ---------------------------------------------------------------------------
// GRU

// Standard gated recurrent unit:
//   z  = sigmoid(x W_z' + b_z + h U_z')
//   r  = sigmoid(x W_r' + b_r + h U_r')
//   c  = tanh(x W_h' + b_h + (r * h) U_h')
//   h' = (1 - z) * h + z * c
template <typename Real>
struct GruWeights {
  Var<Real> w_z, w_r, w_h;  // (hidden, input)
  Var<Real> u_z, u_r, u_h;  // (hidden, hidden)
  Var<Real> b_z, b_r, b_h;  // (hidden)
  int hidden() const { return w_z.dim(0); }
  int input_dim() const { return w_z.dim(1); }
};

template <typename Real>
void InitGru(ParamStore<Real> &store, const std::string &prefix,
             const std::string &group, int input_dim, int hidden, Rng &rng);
template <typename Real>
GruWeights<Real> LoadGru(ForwardContext<Real> &ctx, const std::string &prefix);

// x (B, input), h_prev (B, hidden) -> (B, hidden).
template <typename Real>
Var<Real> GruCellStep(const Var<Real> &x, const Var<Real> &h_prev,
                      const GruWeights<Real> &p);

// seq (T, B, F) -> (T, B, 2 hidden).  Step t holds the forward state after
// frames 0..t followed by the backward state after frames T-1..t.  Both
// directions start from zero.
template <typename Real>
Var<Real> BgruLayer(const Var<Real> &seq, const GruWeights<Real> &fwd,
                    const GruWeights<Real> &bwd);

// Parameters prefix.l<i>.fwd.* / prefix.l<i>.bwd.*
template <typename Real>
void InitBgruStack(ParamStore<Real> &store, const std::string &prefix,
                   const std::string &group, int input_dim, int cells,
                   int layers, Rng &rng);
template <typename Real>
Var<Real> BgruStack(ForwardContext<Real> &ctx, const std::string &prefix,
                    const Var<Real> &seq, int layers);

// ---------------------------------------------------------------------------
// Residual blocks

struct ResidualBlockSpec {
  int dims = 2;  // 1 or 2
  int in_channels = 0;
  int out_channels = 0;
  int stride = 1;
  // A 1x1 (strided) projection on the skip path is needed whenever the
  // block changes channels or resolution.
  bool NeedsProjection() const {
    return in_channels != out_channels || stride != 1;
  }
};

// Creates prefix.bn1, prefix.conv1, prefix.bn2, prefix.conv2 and, when
// `with_projection`, prefix.proj.  Passing false for a block that needs a
// projection is allowed so the forward pass can reject it.
template <typename Real>
void InitResidualBlock(ParamStore<Real> &store, const std::string &prefix,
                       const std::string &group, const ResidualBlockSpec &spec,
                       Rng &rng, bool with_projection = true);

// Pre-activation block: x + conv2(relu(bn2(conv1(relu(bn1(x)))))), with the
// skip path projected by a bias-free 1x1 convolution when required.
template <typename Real>
Var<Real> ResidualBlock(ForwardContext<Real> &ctx, const std::string &prefix,
                        const Var<Real> &x, const ResidualBlockSpec &spec);

// ---------------------------------------------------------------------------
// Streams

enum class StreamKind { kAudio, kVideo };

const char *StreamName(StreamKind kind);

struct StreamSpec {
  StreamKind kind = StreamKind::kVideo;
  double width = 1.0;                          // w
  std::vector<int> channel_plan{64, 128, 256, 512};
  std::vector<int> blocks{3, 4, 6, 3};
  int cells = 1024;                            // BGRU cells per layer
  int bgru_layers = 2;
  int frames = 29;                             // T
  int image_size = 96;                         // video only
  int sample_rate = 16000;                     // audio only

  static StreamSpec Video(double width, int cells, int image_size);
  static StreamSpec Audio(double width, int cells, int sample_rate = 16000);

  // round(w * base); throws if that is zero.
  int ScaledChannels(int base) const;
  int FrontendChannels() const { return ScaledChannels(64); }
  int StageChannels(int stage) const {
    return ScaledChannels(channel_plan.at(stage));
  }
  int FeatureDim() const { return StageChannels(channel_plan.size() - 1); }
  int EmbeddingDim() const { return 2 * cells; }
  // Audio first layer: 5 ms kernel, 0.25 ms stride.
  int AudioKernel() const { return sample_rate / 200; }
  int AudioStride() const { return sample_rate / 4000; }
  int MinWaveformLength() const {
    return AudioKernel() + AudioStride() * (frames - 1);
  }
  std::string Name() const { return StreamName(kind); }
  void Validate() const;
};

// Spatial size after the front-end and after each ResNet stage.
std::vector<int> VisualSpatialPlan(const StreamSpec &spec, int image_size);

// clip (B, 1, T, H, W) -> (B, 64w, T, H', W').  Kernel 5x7x7, temporal
// stride 1 / pad 2, spatial stride 2 / pad 3, then BN and ReLU.
template <typename Real>
void InitVisualFrontend(ParamStore<Real> &store, const StreamSpec &spec,
                        Rng &rng);
template <typename Real>
Var<Real> VisualFrontend(ForwardContext<Real> &ctx, const StreamSpec &spec,
                         const Var<Real> &clip);

// Front-end features -> (T, B, 512w).  Each time step goes through the 2D
// ResNet-34 stages independently and is globally average pooled.
template <typename Real>
void InitVisualResnet(ParamStore<Real> &store, const StreamSpec &spec,
                      Rng &rng);
template <typename Real>
Var<Real> VisualResnet(ForwardContext<Real> &ctx, const StreamSpec &spec,
                       const Var<Real> &features);

// wave (B, 1, L) -> (T, B, 512w).  First convolution, BN, ReLU and average
// pooling to T frames form the front-end; the 1D ResNet-18 stages follow at
// stride 1.
template <typename Real>
void InitAudioResnet(ParamStore<Real> &store, const StreamSpec &spec,
                     Rng &rng);
template <typename Real>
Var<Real> AudioResnet(ForwardContext<Real> &ctx, const StreamSpec &spec,
                      const Var<Real> &wave);

// seq (T, B, F) -> per-clip logits (B, n_classes).  Two k=5 temporal
// convolutions with BN+ReLU, mean over time and a linear layer.
template <typename Real>
void InitTemporalConvBackend(ParamStore<Real> &store, const std::string &prefix,
                             const std::string &group, int features,
                             int n_classes, Rng &rng);
template <typename Real>
Var<Real> TemporalConvBackend(ForwardContext<Real> &ctx,
                              const std::string &prefix, const Var<Real> &seq);

inline constexpr int kTemporalKernel = 5;

}  // namespace avsr

#endif  // AVSR_LAYERS_H_
