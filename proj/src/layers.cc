// avsr/layers.cc

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

#include "avsr/layers.h"

#include <cmath>

namespace avsr {

template <typename Real>
Var<Real> ForwardContext<Real>::P(const std::string &name) {
  auto it = cache_.find(name);
  if (it != cache_.end()) return it->second;
  Parameter<Real> &p = store_.Get(name);
  const bool trainable =
      record_grads_ && !store_.IsFrozen(store_.GroupOf(name));
  Var<Real> v = tape_.Param(p, trainable);
  cache_.emplace(name, v);
  return v;
}

template <typename Real>
Var<Real> ForwardContext<Real>::BatchNormLayer(const std::string &name,
                                               const Var<Real> &x) {
  const bool frozen = store_.IsFrozen(store_.StatsGroupOf(name));
  const NormMode mode = frozen ? NormMode::kEval : mode_;
  return BatchNorm(x, P(name + ".gamma"), P(name + ".beta"),
                   store_.Stats(name), mode);
}

template <typename Real>
Tensor<Real> HeNormal(const Shape &shape, int fan_in, Rng &rng) {
  Tensor<Real> t(shape);
  const double sd = std::sqrt(2.0 / fan_in);
  for (auto &v : t.flat()) v = static_cast<Real>(sd * Gaussian(rng));
  return t;
}

template <typename Real>
Tensor<Real> UniformInit(const Shape &shape, double bound, Rng &rng) {
  Tensor<Real> t(shape);
  for (auto &v : t.flat()) v = static_cast<Real>(UniformRange(rng, -bound, bound));
  return t;
}

template <typename Real>
void InitBatchNorm(ParamStore<Real> &store, const std::string &name,
                   const std::string &group, int channels) {
  store.Add(name + ".gamma", group, Tensor<Real>(Shape{channels}, Real(1)));
  store.Add(name + ".beta", group, Tensor<Real>(Shape{channels}, Real(0)));
  store.AddStats(name, group, channels);
}

template <typename Real>
void InitLinear(ParamStore<Real> &store, const std::string &name,
                const std::string &group, int in, int out, Rng &rng) {
  store.Add(name + ".weight", group, HeNormal<Real>(Shape{out, in}, in, rng));
  store.Add(name + ".bias", group, Tensor<Real>(Shape{out}));
}

namespace {

template <typename Real>
void InitConv(ParamStore<Real> &store, const std::string &name,
              const std::string &group, const Shape &shape, Rng &rng) {
  int fan_in = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
  store.Add(name, group, HeNormal<Real>(shape, fan_in, rng));
}

Shape KernelShape(int dims, int out, int in, int k) {
  Shape s{out, in};
  for (int i = 0; i < dims; ++i) s.push_back(k);
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// GRU

template <typename Real>
void InitGru(ParamStore<Real> &store, const std::string &prefix,
             const std::string &group, int input_dim, int hidden, Rng &rng) {
  if (input_dim < 1 || hidden < 1)
    AVSR_INVALID("GRU needs positive input and hidden sizes, got "
                 << input_dim << " and " << hidden);
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (const char *g : {"z", "r", "h"}) {
    store.Add(prefix + ".w_" + g, group,
              UniformInit<Real>(Shape{hidden, input_dim}, bound, rng));
    store.Add(prefix + ".u_" + g, group,
              UniformInit<Real>(Shape{hidden, hidden}, bound, rng));
    store.Add(prefix + ".b_" + g, group, Tensor<Real>(Shape{hidden}));
  }
}

template <typename Real>
GruWeights<Real> LoadGru(ForwardContext<Real> &ctx, const std::string &prefix) {
  GruWeights<Real> w;
  w.w_z = ctx.P(prefix + ".w_z");
  w.w_r = ctx.P(prefix + ".w_r");
  w.w_h = ctx.P(prefix + ".w_h");
  w.u_z = ctx.P(prefix + ".u_z");
  w.u_r = ctx.P(prefix + ".u_r");
  w.u_h = ctx.P(prefix + ".u_h");
  w.b_z = ctx.P(prefix + ".b_z");
  w.b_r = ctx.P(prefix + ".b_r");
  w.b_h = ctx.P(prefix + ".b_h");
  return w;
}

template <typename Real>
Var<Real> GruCellStep(const Var<Real> &x, const Var<Real> &h_prev,
                      const GruWeights<Real> &p) {
  if (x.value().rank() != 2 || h_prev.value().rank() != 2)
    AVSR_ERR("GRU step expects (B, input) and (B, hidden), got "
             << ShapeString(x.shape()) << " and " << ShapeString(h_prev.shape()));
  if (x.dim(1) != p.input_dim())
    AVSR_ERR("GRU step: input width " << x.dim(1) << " but weights expect "
                                      << p.input_dim());
  if (h_prev.dim(1) != p.hidden() || h_prev.dim(0) != x.dim(0))
    AVSR_ERR("GRU step: hidden state " << ShapeString(h_prev.shape())
                                       << " does not match batch " << x.dim(0)
                                       << " / hidden " << p.hidden());
  Var<Real> z = Sigmoid(Add(Linear(x, p.w_z, {p.b_z}), Linear(h_prev, p.u_z, {})));
  Var<Real> r = Sigmoid(Add(Linear(x, p.w_r, {p.b_r}), Linear(h_prev, p.u_r, {})));
  Var<Real> c = Tanh(
      Add(Linear(x, p.w_h, {p.b_h}), Linear(Mul(r, h_prev), p.u_h, {})));
  return Add(h_prev, Mul(z, Sub(c, h_prev)));
}

template <typename Real>
Var<Real> BgruLayer(const Var<Real> &seq, const GruWeights<Real> &fwd,
                    const GruWeights<Real> &bwd) {
  if (seq.value().rank() != 3)
    AVSR_ERR("BGRU expects (T, B, F), got " << ShapeString(seq.shape()));
  const int T = seq.dim(0), B = seq.dim(1);
  if (fwd.input_dim() != bwd.input_dim())
    AVSR_ERR("BGRU: forward and backward input widths differ");
  Tape<Real> &tape = *seq.tape();
  std::vector<Var<Real>> xs;
  xs.reserve(T);
  for (int t = 0; t < T; ++t) xs.push_back(Select(seq, t));

  std::vector<Var<Real>> hf(T), hb(T);
  Var<Real> h = tape.Constant(Tensor<Real>(Shape{B, fwd.hidden()}));
  for (int t = 0; t < T; ++t) hf[t] = h = GruCellStep(xs[t], h, fwd);
  h = tape.Constant(Tensor<Real>(Shape{B, bwd.hidden()}));
  for (int t = T - 1; t >= 0; --t) hb[t] = h = GruCellStep(xs[t], h, bwd);

  std::vector<Var<Real>> steps;
  steps.reserve(T);
  for (int t = 0; t < T; ++t) steps.push_back(Concat<Real>({hf[t], hb[t]}, 1));
  return Stack(steps);
}

template <typename Real>
void InitBgruStack(ParamStore<Real> &store, const std::string &prefix,
                   const std::string &group, int input_dim, int cells,
                   int layers, Rng &rng) {
  if (layers < 1) AVSR_INVALID("BGRU stack needs at least one layer");
  for (int l = 0; l < layers; ++l) {
    const int in = l == 0 ? input_dim : 2 * cells;
    const std::string p = prefix + ".l" + std::to_string(l);
    InitGru(store, p + ".fwd", group, in, cells, rng);
    InitGru(store, p + ".bwd", group, in, cells, rng);
  }
}

template <typename Real>
Var<Real> BgruStack(ForwardContext<Real> &ctx, const std::string &prefix,
                    const Var<Real> &seq, int layers) {
  Var<Real> x = seq;
  for (int l = 0; l < layers; ++l) {
    const std::string p = prefix + ".l" + std::to_string(l);
    x = BgruLayer(x, LoadGru(ctx, p + ".fwd"), LoadGru(ctx, p + ".bwd"));
  }
  return x;
}

// ---------------------------------------------------------------------------
// Residual blocks

template <typename Real>
void InitResidualBlock(ParamStore<Real> &store, const std::string &prefix,
                       const std::string &group, const ResidualBlockSpec &spec,
                       Rng &rng, bool with_projection) {
  if (spec.dims != 1 && spec.dims != 2)
    AVSR_ERR("residual block must be 1D or 2D, got " << spec.dims);
  InitBatchNorm(store, prefix + ".bn1", group, spec.in_channels);
  InitConv(store, prefix + ".conv1", group,
           KernelShape(spec.dims, spec.out_channels, spec.in_channels, 3), rng);
  InitBatchNorm(store, prefix + ".bn2", group, spec.out_channels);
  InitConv(store, prefix + ".conv2", group,
           KernelShape(spec.dims, spec.out_channels, spec.out_channels, 3), rng);
  if (with_projection && spec.NeedsProjection())
    InitConv(store, prefix + ".proj", group,
             KernelShape(spec.dims, spec.out_channels, spec.in_channels, 1), rng);
}

template <typename Real>
Var<Real> ResidualBlock(ForwardContext<Real> &ctx, const std::string &prefix,
                        const Var<Real> &x, const ResidualBlockSpec &spec) {
  if (x.value().rank() != spec.dims + 2 || x.dim(1) != spec.in_channels)
    AVSR_ERR("residual block " << prefix << ": input " << ShapeString(x.shape())
                               << " does not match " << spec.in_channels
                               << "-channel " << spec.dims << "D block");
  const bool has_proj = ctx.store().Has(prefix + ".proj");
  if (spec.NeedsProjection() && !has_proj)
    AVSR_ERR("residual block " << prefix << " changes shape ("
                               << spec.in_channels << "->" << spec.out_channels
                               << " channels, stride " << spec.stride
                               << ") but has no projection");
  Var<Real> a = Relu(ctx.BatchNormLayer(prefix + ".bn1", x));
  Var<Real> y = Conv(a, ctx.P(prefix + ".conv1"), {},
                     ConvGeometry{{spec.stride}, {1}});
  y = Relu(ctx.BatchNormLayer(prefix + ".bn2", y));
  y = Conv(y, ctx.P(prefix + ".conv2"), {}, ConvGeometry{{1}, {1}});
  Var<Real> skip = spec.NeedsProjection()
                       ? Conv(x, ctx.P(prefix + ".proj"), {},
                              ConvGeometry{{spec.stride}, {0}})
                       : x;
  return Add(skip, y);
}

// ---------------------------------------------------------------------------
// Streams

const char *StreamName(StreamKind kind) {
  return kind == StreamKind::kAudio ? "audio" : "video";
}

StreamSpec StreamSpec::Video(double width, int cells, int image_size) {
  StreamSpec s;
  s.kind = StreamKind::kVideo;
  s.width = width;
  s.cells = cells;
  s.image_size = image_size;
  s.blocks = {3, 4, 6, 3};
  return s;
}

StreamSpec StreamSpec::Audio(double width, int cells, int sample_rate) {
  StreamSpec s;
  s.kind = StreamKind::kAudio;
  s.width = width;
  s.cells = cells;
  s.sample_rate = sample_rate;
  s.blocks = {2, 2, 2, 2};
  return s;
}

int StreamSpec::ScaledChannels(int base) const {
  const long c = std::lround(base * width);
  if (c < 1)
    AVSR_INVALID("width multiplier " << width << " gives 0 channels for a "
                                     << base << "-channel layer");
  return static_cast<int>(c);
}

void StreamSpec::Validate() const {
  if (!(width > 0 && width <= 1))
    AVSR_INVALID("width multiplier must be in (0, 1], got " << width);
  if (channel_plan.empty() || channel_plan.size() != blocks.size())
    AVSR_INVALID("channel plan and block counts must have the same length");
  for (int b : blocks)
    if (b < 1) AVSR_INVALID("every ResNet stage needs at least one block");
  FrontendChannels();
  for (std::size_t i = 0; i < channel_plan.size(); ++i) StageChannels(i);
  if (cells < 1) AVSR_INVALID("BGRU cells must be >= 1, got " << cells);
  if (bgru_layers < 1) AVSR_INVALID("BGRU layers must be >= 1");
  if (frames < 1) AVSR_INVALID("frame count must be >= 1");
  if (kind == StreamKind::kVideo) {
    if (image_size < 7)
      AVSR_INVALID("image size " << image_size << " is below the 7x7 front-end kernel");
    VisualSpatialPlan(*this, image_size);
  } else {
    if (AudioKernel() < 1 || AudioStride() < 1)
      AVSR_INVALID("sample rate " << sample_rate
                                  << " Hz is too low for a 0.25 ms stride");
  }
}

std::vector<int> VisualSpatialPlan(const StreamSpec &spec, int image_size) {
  std::vector<int> plan;
  int s = ConvOutputLength(image_size, 7, 2, 3);
  plan.push_back(s);
  for (std::size_t stage = 0; stage < spec.channel_plan.size(); ++stage) {
    if (stage > 0) s = ConvOutputLength(s, 3, 2, 1);
    if (s < 1)
      AVSR_INVALID("spatial size reaches zero at ResNet stage "
                   << stage << " for " << image_size << "x" << image_size
                   << " input");
    plan.push_back(s);
  }
  return plan;
}

namespace {

int StageStride(const StreamSpec &spec, int stage) {
  return spec.kind == StreamKind::kVideo && stage > 0 ? 2 : 1;
}

std::string BlockName(const StreamSpec &spec, int stage, int block) {
  return spec.Name() + ".resnet.s" + std::to_string(stage) + ".b" +
         std::to_string(block);
}

ResidualBlockSpec BlockSpec(const StreamSpec &spec, int stage, int block) {
  ResidualBlockSpec b;
  b.dims = spec.kind == StreamKind::kVideo ? 2 : 1;
  b.out_channels = spec.StageChannels(stage);
  b.in_channels = block > 0 ? b.out_channels
                  : stage > 0 ? spec.StageChannels(stage - 1)
                              : spec.FrontendChannels();
  b.stride = block == 0 ? StageStride(spec, stage) : 1;
  return b;
}

template <typename Real>
void InitStages(ParamStore<Real> &store, const StreamSpec &spec, Rng &rng) {
  const std::string group = spec.Name() + ".resnet";
  for (std::size_t s = 0; s < spec.blocks.size(); ++s)
    for (int b = 0; b < spec.blocks[s]; ++b)
      InitResidualBlock(store, BlockName(spec, s, b), group,
                        BlockSpec(spec, s, b), rng);
}

template <typename Real>
Var<Real> RunStages(ForwardContext<Real> &ctx, const StreamSpec &spec,
                    Var<Real> x) {
  for (std::size_t s = 0; s < spec.blocks.size(); ++s)
    for (int b = 0; b < spec.blocks[s]; ++b)
      x = ResidualBlock(ctx, BlockName(spec, s, b), x, BlockSpec(spec, s, b));
  return x;
}

}  // namespace

template <typename Real>
void InitVisualFrontend(ParamStore<Real> &store, const StreamSpec &spec,
                        Rng &rng) {
  spec.Validate();
  const std::string group = "video.frontend";
  const int c = spec.FrontendChannels();
  InitConv(store, "video.frontend.conv", group, Shape{c, 1, 5, 7, 7}, rng);
  InitBatchNorm(store, "video.frontend.bn", group, c);
}

template <typename Real>
Var<Real> VisualFrontend(ForwardContext<Real> &ctx, const StreamSpec &spec,
                         const Var<Real> &clip) {
  const Shape &s = clip.shape();
  if (s.size() != 5 || s[1] != 1)
    AVSR_ERR("visual front-end expects (B, 1, T, H, W), got " << ShapeString(s));
  if (s[3] < 7 || s[4] < 7)
    AVSR_ERR("visual front-end needs frames of at least 7x7, got "
             << s[3] << "x" << s[4]);
  if (s[2] != spec.frames)
    AVSR_INVALID("visual front-end expects " << spec.frames << " frames, got "
                                         << s[2]);
  Var<Real> y = Conv(clip, ctx.P("video.frontend.conv"), {},
                     ConvGeometry{{1, 2, 2}, {2, 3, 3}});
  return Relu(ctx.BatchNormLayer("video.frontend.bn", y));
}

template <typename Real>
void InitVisualResnet(ParamStore<Real> &store, const StreamSpec &spec,
                      Rng &rng) {
  spec.Validate();
  InitStages(store, spec, rng);
}

template <typename Real>
Var<Real> VisualResnet(ForwardContext<Real> &ctx, const StreamSpec &spec,
                       const Var<Real> &features) {
  const Shape &s = features.shape();
  if (s.size() != 5 || s[1] != spec.FrontendChannels())
    AVSR_ERR("visual ResNet expects (B, " << spec.FrontendChannels()
                                          << ", T, H, W), got " << ShapeString(s));
  const int B = s[0], C = s[1], T = s[2], H = s[3], W = s[4];
  Var<Real> x = Reshape(Permute(features, {0, 2, 1, 3, 4}), Shape{B * T, C, H, W});
  x = RunStages(ctx, spec, x);
  const int F = x.dim(1);
  const int hw = x.dim(2) * x.dim(3);
  x = AdaptiveAvgPool(Reshape(x, Shape{B * T, F, hw}), 1);
  return Permute(Reshape(x, Shape{B, T, F}), {1, 0, 2});
}

template <typename Real>
void InitAudioResnet(ParamStore<Real> &store, const StreamSpec &spec,
                     Rng &rng) {
  spec.Validate();
  const int c = spec.FrontendChannels();
  InitConv(store, "audio.frontend.conv", "audio.frontend",
           Shape{c, 1, spec.AudioKernel()}, rng);
  InitBatchNorm(store, "audio.frontend.bn", "audio.frontend", c);
  InitStages(store, spec, rng);
}

template <typename Real>
Var<Real> AudioResnet(ForwardContext<Real> &ctx, const StreamSpec &spec,
                      const Var<Real> &wave) {
  const Shape &s = wave.shape();
  if (s.size() != 3 || s[1] != 1)
    AVSR_ERR("audio ResNet expects (B, 1, L), got " << ShapeString(s));
  if (s[2] < spec.MinWaveformLength())
    AVSR_ERR("waveform of " << s[2] << " samples is too short; at least "
                            << spec.MinWaveformLength()
                            << " are needed for " << spec.frames << " frames");
  Var<Real> x = Conv(wave, ctx.P("audio.frontend.conv"), {},
                     ConvGeometry{{spec.AudioStride()}, {0}});
  x = Relu(ctx.BatchNormLayer("audio.frontend.bn", x));
  x = AdaptiveAvgPool(x, spec.frames);
  x = RunStages(ctx, spec, x);
  return Permute(x, {2, 0, 1});
}

template <typename Real>
void InitTemporalConvBackend(ParamStore<Real> &store, const std::string &prefix,
                             const std::string &group, int features,
                             int n_classes, Rng &rng) {
  for (const char *n : {".conv1", ".conv2"}) {
    InitConv(store, prefix + n, group,
             Shape{features, features, kTemporalKernel}, rng);
  }
  InitBatchNorm(store, prefix + ".bn1", group, features);
  InitBatchNorm(store, prefix + ".bn2", group, features);
  InitLinear(store, prefix + ".out", group, features, n_classes, rng);
}

template <typename Real>
Var<Real> TemporalConvBackend(ForwardContext<Real> &ctx,
                              const std::string &prefix, const Var<Real> &seq) {
  if (seq.value().rank() != 3)
    AVSR_ERR("temporal back-end expects (T, B, F), got "
             << ShapeString(seq.shape()));
  const int T = seq.dim(0), B = seq.dim(1), F = seq.dim(2);
  if (T < kTemporalKernel)
    AVSR_ERR("temporal back-end needs at least " << kTemporalKernel
                                                 << " frames, got " << T);
  const ConvGeometry geo{{1}, {kTemporalKernel / 2}};
  Var<Real> x = Permute(seq, {1, 2, 0});
  x = Relu(ctx.BatchNormLayer(prefix + ".bn1",
                              Conv(x, ctx.P(prefix + ".conv1"), {}, geo)));
  x = Relu(ctx.BatchNormLayer(prefix + ".bn2",
                              Conv(x, ctx.P(prefix + ".conv2"), {}, geo)));
  x = Reshape(AdaptiveAvgPool(x, 1), Shape{B, F});
  return Linear(x, ctx.P(prefix + ".out.weight"), {ctx.P(prefix + ".out.bias")});
}

#define AVSR_INSTANTIATE_LAYERS(Real)                                          \
  template class ForwardContext<Real>;                                         \
  template Tensor<Real> HeNormal<Real>(const Shape &, int, Rng &);             \
  template Tensor<Real> UniformInit<Real>(const Shape &, double, Rng &);       \
  template void InitBatchNorm(ParamStore<Real> &, const std::string &,         \
                              const std::string &, int);                       \
  template void InitLinear(ParamStore<Real> &, const std::string &,            \
                           const std::string &, int, int, Rng &);              \
  template void InitGru(ParamStore<Real> &, const std::string &,               \
                        const std::string &, int, int, Rng &);                 \
  template GruWeights<Real> LoadGru(ForwardContext<Real> &,                    \
                                    const std::string &);                      \
  template Var<Real> GruCellStep(const Var<Real> &, const Var<Real> &,         \
                                 const GruWeights<Real> &);                    \
  template Var<Real> BgruLayer(const Var<Real> &, const GruWeights<Real> &,    \
                               const GruWeights<Real> &);                      \
  template void InitBgruStack(ParamStore<Real> &, const std::string &,         \
                              const std::string &, int, int, int, Rng &);      \
  template Var<Real> BgruStack(ForwardContext<Real> &, const std::string &,    \
                               const Var<Real> &, int);                        \
  template void InitResidualBlock(ParamStore<Real> &, const std::string &,     \
                                  const std::string &,                         \
                                  const ResidualBlockSpec &, Rng &, bool);     \
  template Var<Real> ResidualBlock(ForwardContext<Real> &,                     \
                                   const std::string &, const Var<Real> &,     \
                                   const ResidualBlockSpec &);                 \
  template void InitVisualFrontend(ParamStore<Real> &, const StreamSpec &,     \
                                   Rng &);                                     \
  template Var<Real> VisualFrontend(ForwardContext<Real> &,                    \
                                    const StreamSpec &, const Var<Real> &);    \
  template void InitVisualResnet(ParamStore<Real> &, const StreamSpec &,       \
                                 Rng &);                                       \
  template Var<Real> VisualResnet(ForwardContext<Real> &, const StreamSpec &,  \
                                  const Var<Real> &);                          \
  template void InitAudioResnet(ParamStore<Real> &, const StreamSpec &,        \
                                Rng &);                                        \
  template Var<Real> AudioResnet(ForwardContext<Real> &, const StreamSpec &,   \
                                 const Var<Real> &);                           \
  template void InitTemporalConvBackend(ParamStore<Real> &,                    \
                                        const std::string &,                   \
                                        const std::string &, int, int, Rng &); \
  template Var<Real> TemporalConvBackend(ForwardContext<Real> &,               \
                                         const std::string &,                  \
                                         const Var<Real> &);

AVSR_INSTANTIATE_LAYERS(float)
AVSR_INSTANTIATE_LAYERS(double)

}  // namespace avsr
