// avsr/model.cc

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

#include "avsr/model.h"

#include <bit>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <set>

namespace avsr {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

const char *TargetName(Target t) {
  switch (t) {
    case Target::kAudio: return "audio";
    case Target::kVideo: return "video";
    case Target::kAv: return "av";
    case Target::kMfcc: return "mfcc";
  }
  return "?";
}

Target ParseTarget(const std::string &name) {
  for (Target t : {Target::kAudio, Target::kVideo, Target::kAv, Target::kMfcc})
    if (name == TargetName(t)) return t;
  AVSR_INVALID("unknown target '" << name
               << "' (expected audio, video, av or mfcc)");
}

std::string FormatDouble(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double ParseDouble(const std::string &s, const std::string &what) {
  errno = 0;
  char *end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0' || errno == ERANGE || !std::isfinite(v))
    AVSR_INVALID(what << ": expected a number, got '" << s << "'");
  return v;
}

std::int64_t ParseInt(const std::string &s, const std::string &what) {
  errno = 0;
  char *end = nullptr;
  long long v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || *end != '\0' || errno == ERANGE)
    AVSR_INVALID(what << ": expected an integer, got '" << s << "'");
  return v;
}

// ---------------------------------------------------------------------------
// ModelSpec

bool ModelSpec::HasStream(StreamKind kind) const {
  if (kind == StreamKind::kAudio)
    return target == Target::kAudio || target == Target::kAv;
  return UsesVideo();
}

StreamSpec ModelSpec::Stream(StreamKind kind) const {
  StreamSpec s = kind == StreamKind::kAudio
                     ? StreamSpec::Audio(width, cells, sample_rate)
                     : StreamSpec::Video(width, cells, image_size);
  s.frames = frames;
  return s;
}

std::vector<StreamKind> ModelSpec::Streams() const {
  std::vector<StreamKind> out;
  for (StreamKind k : {StreamKind::kAudio, StreamKind::kVideo})
    if (HasStream(k)) out.push_back(k);
  return out;
}

int ModelSpec::ClipSamples() const {
  return static_cast<int>(std::lround(frames / 25.0 * sample_rate));
}

int ModelSpec::MfccFrames() const {
  return mfcc.NumFrames(ClipSamples(), sample_rate);
}

void ModelSpec::Validate() const {
  if (n_classes < 2) AVSR_INVALID("n_classes must be >= 2, got " << n_classes);
  if (!(width > 0)) AVSR_INVALID("width must be positive, got " << width);
  if (cells < 1) AVSR_INVALID("cells must be >= 1, got " << cells);
  if (fusion_cells < 1)
    AVSR_INVALID("fusion_cells must be >= 1, got " << fusion_cells);
  if (frames < kTemporalKernel)
    AVSR_INVALID("frames must be >= " << kTemporalKernel << ", got "
                 << frames);
  if (sample_rate < 4000)
    AVSR_INVALID("sample_rate must be >= 4000, got " << sample_rate);
  for (StreamKind k : Streams()) Stream(k).Validate();
  if (target == Target::kMfcc) {
    mfcc.Validate();
    if (MfccFrames() < 1) AVSR_INVALID("clip too short for one MFCC frame");
  }
}

std::vector<std::pair<std::string, std::string>> ModelSpec::Describe() const {
  return {
      {"target", TargetName(target)},
      {"n_classes", std::to_string(n_classes)},
      {"width", FormatDouble(width)},
      {"cells", std::to_string(cells)},
      {"fusion_cells", std::to_string(fusion_cells)},
      {"image_size", std::to_string(image_size)},
      {"frames", std::to_string(frames)},
      {"sample_rate", std::to_string(sample_rate)},
      {"mfcc_window", FormatDouble(mfcc.window_seconds)},
      {"mfcc_step", FormatDouble(mfcc.step_seconds)},
      {"mfcc_coeffs", std::to_string(mfcc.n_coeffs)},
      {"mfcc_filters", std::to_string(mfcc.n_mel_filters)},
      {"mfcc_deltas", mfcc.include_deltas ? "1" : "0"},
      {"mfcc_preemphasis", FormatDouble(mfcc.preemphasis)},
      {"mfcc_delta_window", std::to_string(mfcc.delta_window)},
      {"mfcc_log_floor", FormatDouble(mfcc.log_floor)},
  };
}

ModelSpec ModelSpec::FromDescription(
    const std::map<std::string, std::string> &fields) {
  ModelSpec spec;
  std::set<std::string> known;
  for (const auto &[k, v] : spec.Describe()) known.insert(k);
  for (const auto &[k, v] : fields)
    if (!known.count(k)) AVSR_INVALID("unknown model field '" << k << "'");
  auto get = [&](const std::string &key) -> const std::string & {
    auto it = fields.find(key);
    if (it == fields.end()) AVSR_INVALID("model field '" << key << "' missing");
    return it->second;
  };
  auto get_int = [&](const std::string &key) {
    return static_cast<int>(ParseInt(get(key), key));
  };
  spec.target = ParseTarget(get("target"));
  spec.n_classes = get_int("n_classes");
  spec.width = ParseDouble(get("width"), "width");
  spec.cells = get_int("cells");
  spec.fusion_cells = get_int("fusion_cells");
  spec.image_size = get_int("image_size");
  spec.frames = get_int("frames");
  spec.sample_rate = get_int("sample_rate");
  spec.mfcc.window_seconds = ParseDouble(get("mfcc_window"), "mfcc_window");
  spec.mfcc.step_seconds = ParseDouble(get("mfcc_step"), "mfcc_step");
  spec.mfcc.n_coeffs = get_int("mfcc_coeffs");
  spec.mfcc.n_mel_filters = get_int("mfcc_filters");
  spec.mfcc.include_deltas = get_int("mfcc_deltas") != 0;
  spec.mfcc.preemphasis =
      ParseDouble(get("mfcc_preemphasis"), "mfcc_preemphasis");
  spec.mfcc.delta_window = get_int("mfcc_delta_window");
  spec.mfcc.log_floor = ParseDouble(get("mfcc_log_floor"), "mfcc_log_floor");
  spec.Validate();
  return spec;
}

std::uint64_t ModelSpec::Fingerprint() const {
  Fnv1a h;
  for (const auto &[k, v] : Describe()) {
    h.Update(k);
    h.Update("=");
    h.Update(v);
    h.Update("\n");
  }
  return h.digest();
}

ModelSpec ModelSpec::WithTarget(Target t) const {
  ModelSpec s = *this;
  s.target = t;
  return s;
}

// ---------------------------------------------------------------------------
// Inputs

ModelInput<float> AssembleInput(const ModelSpec &spec,
                                const std::vector<ClipInput> &clips,
                                const NormStats &video_stats) {
  const int b = static_cast<int>(clips.size());
  if (b == 0) AVSR_INVALID("empty batch");
  ModelInput<float> in;
  for (const ClipInput &c : clips) in.labels.push_back(c.label);

  if (spec.UsesWaveform()) {
    const int len = static_cast<int>(clips[0].audio.samples.size());
    std::vector<WaveformClip> waves;
    waves.reserve(b);
    for (const ClipInput &c : clips) {
      if (c.audio.sample_rate != spec.sample_rate)
        AVSR_INVALID("audio at " << c.audio.sample_rate << " Hz, model expects "
                     << spec.sample_rate);
      if (static_cast<int>(c.audio.samples.size()) != len)
        AVSR_INVALID("audio lengths differ within a batch ("
                     << c.audio.samples.size() << " vs " << len << ")");
      waves.push_back(ZNormalize(c.audio));
    }
    if (spec.target == Target::kMfcc) {
      Tensor<double> first = MfccExtract(waves[0], spec.mfcc);
      const int t = first.dim(0), f = first.dim(1);
      if (t < 1) AVSR_INVALID("clip too short for one MFCC frame");
      in.mfcc = Tensor<float>(Shape{t, b, f});
      for (int i = 0; i < b; ++i) {
        Tensor<double> m = i == 0 ? first : MfccExtract(waves[i], spec.mfcc);
        for (int r = 0; r < t; ++r)
          for (int k = 0; k < f; ++k)
            in.mfcc[(static_cast<std::size_t>(r) * b + i) * f + k] =
                static_cast<float>(m[static_cast<std::size_t>(r) * f + k]);
      }
    } else {
      in.audio = Tensor<float>(Shape{b, 1, len});
      for (int i = 0; i < b; ++i)
        std::copy(waves[i].samples.begin(), waves[i].samples.end(),
                  in.audio.data() + static_cast<std::size_t>(i) * len);
    }
  }

  if (spec.UsesVideo()) {
    const int s = spec.image_size, t = spec.frames;
    in.video = Tensor<float>(Shape{b, 1, t, s, s});
    const std::size_t per = static_cast<std::size_t>(t) * s * s;
    for (int i = 0; i < b; ++i) {
      const VideoClip &v = clips[i].video;
      if (v.frames != t || v.height != s || v.width != s)
        AVSR_INVALID("video clip is " << v.frames << "x" << v.height << "x"
                     << v.width << ", model expects " << t << "x" << s << "x"
                     << s);
      Tensor<float> x = NormalizeClip(v, video_stats);
      std::copy(x.data(), x.data() + per, in.video.data() + i * per);
    }
  }
  return in;
}

// ---------------------------------------------------------------------------
// Network

namespace {

std::string Prefix(StreamKind kind, const char *part) {
  return std::string(StreamName(kind)) + "." + part;
}

// seq (T, B, D) -> (T, B, C) through one linear layer applied per frame.
template <typename Real>
Var<Real> PerFrameHead(ForwardContext<Real> &ctx, const std::string &prefix,
                       const Var<Real> &seq) {
  const int t = seq.dim(0), b = seq.dim(1), d = seq.dim(2);
  Var<Real> flat = Reshape(seq, Shape{t * b, d});
  Var<Real> y = Linear(flat, ctx.P(prefix + ".weight"),
                       std::optional<Var<Real>>(ctx.P(prefix + ".bias")));
  return Reshape(y, Shape{t, b, y.dim(1)});
}

}  // namespace

template <typename Real>
void InitModel(ParamStore<Real> &store, const ModelSpec &spec, Rng &rng) {
  spec.Validate();
  const bool single =
      spec.target == Target::kAudio || spec.target == Target::kVideo;
  for (StreamKind kind : spec.Streams()) {
    const StreamSpec s = spec.Stream(kind);
    if (kind == StreamKind::kAudio) {
      InitAudioResnet(store, s, rng);
    } else {
      InitVisualFrontend(store, s, rng);
      InitVisualResnet(store, s, rng);
    }
    const std::string bgru = Prefix(kind, "bgru");
    InitBgruStack(store, bgru, bgru, s.FeatureDim(), s.cells, s.bgru_layers,
                  rng);
    if (single) {
      const std::string head = Prefix(kind, "head"), tcn = Prefix(kind, "tcn");
      InitLinear(store, head, head, s.EmbeddingDim(), spec.n_classes, rng);
      InitTemporalConvBackend(store, tcn, tcn, s.FeatureDim(), spec.n_classes,
                              rng);
    }
  }
  if (spec.target == Target::kAv) {
    const int in = spec.Stream(StreamKind::kAudio).EmbeddingDim() +
                   spec.Stream(StreamKind::kVideo).EmbeddingDim();
    InitBgruStack(store, "fusion.bgru", "fusion.bgru", in, spec.fusion_cells, 2,
                  rng);
    InitLinear(store, "fusion.head", "fusion.head", 2 * spec.fusion_cells,
               spec.n_classes, rng);
  } else if (spec.target == Target::kMfcc) {
    const int f = spec.mfcc.NumFeatures();
    InitBatchNorm(store, "mfcc.input_bn", "mfcc.input_bn", f);
    InitBgruStack(store, "mfcc.bgru", "mfcc.bgru", f, spec.cells, 2, rng);
    InitLinear(store, "mfcc.head", "mfcc.head", 2 * spec.cells, spec.n_classes,
               rng);
  }
}

template <typename Real>
Var<Real> StreamFeatures(ForwardContext<Real> &ctx, const ModelSpec &spec,
                         StreamKind kind, const ModelInput<Real> &input) {
  if (!spec.HasStream(kind))
    AVSR_INVALID(TargetName(spec.target) << " model has no "
                 << StreamName(kind) << " stream");
  const StreamSpec s = spec.Stream(kind);
  if (kind == StreamKind::kAudio) {
    if (input.audio.null()) AVSR_INVALID("audio input missing");
    return AudioResnet(ctx, s, ctx.tape().Constant(input.audio));
  }
  if (input.video.null()) AVSR_INVALID("video input missing");
  Var<Real> front = VisualFrontend(ctx, s, ctx.tape().Constant(input.video));
  return VisualResnet(ctx, s, front);
}

template <typename Real>
Var<Real> StreamForward(ForwardContext<Real> &ctx, const ModelSpec &spec,
                        StreamKind kind, const ModelInput<Real> &input) {
  Var<Real> feats = StreamFeatures(ctx, spec, kind, input);
  if (feats.dim(0) != spec.frames)
    AVSR_INVALID(StreamName(kind) << " stream produced " << feats.dim(0)
                 << " frames, expected " << spec.frames);
  return BgruStack(ctx, Prefix(kind, "bgru"), feats,
                   spec.Stream(kind).bgru_layers);
}

template <typename Real>
Var<Real> FusionForward(ForwardContext<Real> &ctx, const ModelSpec &spec,
                        const Var<Real> &audio_emb,
                        const Var<Real> &video_emb) {
  (void)spec;
  if (audio_emb.value().rank() != 3 || video_emb.value().rank() != 3)
    AVSR_INVALID("stream embeddings must be (T, B, D)");
  if (audio_emb.dim(0) != video_emb.dim(0))
    AVSR_INVALID("frame-count mismatch between streams: audio "
                 << audio_emb.dim(0) << ", video " << video_emb.dim(0));
  if (audio_emb.dim(1) != video_emb.dim(1))
    AVSR_INVALID("batch mismatch between streams: audio " << audio_emb.dim(1)
                 << ", video " << video_emb.dim(1));
  Var<Real> joint = Concat<Real>({audio_emb, video_emb}, 2);
  Var<Real> fused = BgruStack(ctx, "fusion.bgru", joint, 2);
  return PerFrameHead(ctx, "fusion.head", fused);
}

template <typename Real>
Var<Real> ForwardLogits(ForwardContext<Real> &ctx, const ModelSpec &spec,
                        const ModelInput<Real> &input, Head head) {
  switch (spec.target) {
    case Target::kAudio:
    case Target::kVideo: {
      const StreamKind kind = spec.target == Target::kAudio
                                  ? StreamKind::kAudio
                                  : StreamKind::kVideo;
      if (head == Head::kTemporalConv) {
        Var<Real> feats = StreamFeatures(ctx, spec, kind, input);
        Var<Real> logits = TemporalConvBackend(ctx, Prefix(kind, "tcn"), feats);
        return Reshape(logits, Shape{1, logits.dim(0), logits.dim(1)});
      }
      return PerFrameHead(ctx, Prefix(kind, "head"),
                          StreamForward(ctx, spec, kind, input));
    }
    case Target::kAv: {
      if (head != Head::kRecurrent)
        AVSR_INVALID("the audiovisual model has no temporal-conv head");
      Var<Real> a = StreamForward(ctx, spec, StreamKind::kAudio, input);
      Var<Real> v = StreamForward(ctx, spec, StreamKind::kVideo, input);
      return FusionForward(ctx, spec, a, v);
    }
    case Target::kMfcc: {
      if (head != Head::kRecurrent)
        AVSR_INVALID("the MFCC model has no temporal-conv head");
      if (input.mfcc.null()) AVSR_INVALID("MFCC input missing");
      const int t = input.mfcc.dim(0), b = input.mfcc.dim(1),
                f = input.mfcc.dim(2);
      Var<Real> x = Reshape(ctx.tape().Constant(input.mfcc), Shape{t * b, f});
      x = Reshape(ctx.BatchNormLayer("mfcc.input_bn", x), Shape{t, b, f});
      return PerFrameHead(ctx, "mfcc.head", BgruStack(ctx, "mfcc.bgru", x, 2));
    }
  }
  AVSR_ERR("unreachable");
}

template <typename Real>
LossOutput<Real> FrameLoss(const Var<Real> &logits,
                           std::span<const int> labels) {
  const int t = logits.dim(0), b = logits.dim(1), c = logits.dim(2);
  if (static_cast<int>(labels.size()) != b)
    AVSR_INVALID("got " << labels.size() << " labels for a batch of " << b);
  std::vector<int> per_frame(static_cast<std::size_t>(t) * b);
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < b; ++j) per_frame[i * b + j] = labels[j];
  return SoftmaxCrossEntropy(Reshape(logits, Shape{t * b, c}),
                             std::span<const int>(per_frame));
}

Classification ClassifySequence(const Tensor<double> &probs) {
  AVSR_ASSERT(probs.rank() == 2 && probs.dim(0) >= 1);
  const int t = probs.dim(0), c = probs.dim(1);
  std::vector<double> mean(c, 0.0);
  for (int i = 0; i < t; ++i)
    for (int k = 0; k < c; ++k) mean[k] += probs[static_cast<std::size_t>(i) * c + k];
  Classification out;
  for (int k = 0; k < c; ++k) {
    mean[k] /= t;
    if (k == 0 || mean[k] > out.confidence) {
      out.label = k;
      out.confidence = mean[k];
    }
  }
  return out;
}

std::vector<Classification> ClassifyFrames(const Tensor<float> &probs,
                                           int frames, int batch) {
  AVSR_ASSERT(probs.rank() == 2 && probs.dim(0) == frames * batch);
  const int c = probs.dim(1);
  std::vector<Classification> out;
  Tensor<double> clip(Shape{frames, c});
  for (int b = 0; b < batch; ++b) {
    for (int t = 0; t < frames; ++t)
      for (int k = 0; k < c; ++k)
        clip[static_cast<std::size_t>(t) * c + k] =
            probs[(static_cast<std::size_t>(t) * batch + b) * c + k];
    out.push_back(ClassifySequence(clip));
  }
  return out;
}

Model CreateModel(const ModelSpec &spec, std::uint64_t seed) {
  Model m;
  m.spec = spec;
  Rng rng = DeriveRng(seed, {0x6d6f64656cULL});
  InitModel(m.store, spec, rng);
  return m;
}

// ---------------------------------------------------------------------------
// Evaluation

WaveformClip EvalNoise(const NoiseConfig &noise, std::uint64_t seed,
                       int index, int num_samples, int sample_rate) {
  Rng rng = DeriveRng(seed, {static_cast<std::uint64_t>(index)});
  return SynthBabble(num_samples, sample_rate, noise, rng);
}

EvalReport Evaluate(Model &model, const std::vector<Sample> &split,
                    const EvalOptions &options) {
  if (split.empty()) AVSR_INVALID("cannot evaluate an empty split");
  if (options.batch_size < 1)
    AVSR_INVALID("batch size must be >= 1, got " << options.batch_size);
  const ModelSpec &spec = model.spec;
  const int n = static_cast<int>(split.size());
  EvalReport report;
  for (int start = 0; start < n; start += options.batch_size) {
    const int end = std::min(n, start + options.batch_size);
    std::vector<ClipInput> clips(end - start);
    for (int i = start; i < end; ++i) {
      const Sample &s = split[i];
      ClipInput &c = clips[i - start];
      c.label = s.label;
      if (spec.UsesWaveform()) {
        if (options.snr_db) {
          WaveformClip noise =
              EvalNoise(options.noise, options.noise_seed, i,
                        static_cast<int>(s.audio.samples.size()),
                        s.audio.sample_rate);
          c.audio = MixAtSnr(s.audio, noise, *options.snr_db);
        } else {
          c.audio = s.audio;
        }
      }
      if (spec.UsesVideo()) c.video = CenterCrop(s.video, spec.image_size);
    }
    ModelInput<float> in = AssembleInput(spec, clips, model.video_stats);
    Tape<float> tape;
    ForwardContext<float> ctx(tape, model.store, NormMode::kEval, false);
    Var<float> logits = ForwardLogits(ctx, spec, in, options.head);
    const int t = logits.dim(0), b = logits.dim(1), c = logits.dim(2);
    Tensor<float> probs =
        SoftmaxRows(logits.value().Reshaped(Shape{t * b, c}));
    std::vector<Classification> cls = ClassifyFrames(probs, t, b);
    for (int j = 0; j < b; ++j) {
      const Sample &s = split[start + j];
      report.predictions.push_back(
          {s.id, s.label, cls[j].label, cls[j].confidence});
      report.correct += cls[j].label == s.label;
      ++report.total;
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Checkpoints

const std::string &Checkpoint::Meta(const std::string &key) const {
  auto it = meta.find(key);
  if (it == meta.end()) AVSR_INVALID("checkpoint has no '" << key << "' entry");
  return it->second;
}

const Tensor<float> &Checkpoint::Get(const std::string &name) const {
  auto it = tensors.find(name);
  if (it == tensors.end())
    AVSR_INVALID("checkpoint has no tensor '" << name << "'");
  return it->second;
}

namespace {

constexpr char kCheckpointMagic[4] = {'A', 'V', 'C', 'K'};
constexpr std::uint32_t kMaxName = 1 << 16;
constexpr std::uint32_t kMaxRank = 8;

template <typename T>
void PutLe(std::string &out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void PutString(std::string &out, const std::string &s) {
  PutLe<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

// Bounds-checked little-endian reader that reports the failing offset.
class Reader {
 public:
  Reader(std::string_view bytes, const std::string &what)
      : bytes_(bytes), what_(what) {}

  void Need(std::size_t n, const char *field) const {
    if (bytes_.size() - pos_ < n)
      AVSR_INVALID(what_ << ": truncated " << field << " at offset " << pos_
                   << ": need " << n << " bytes, have "
                   << bytes_.size() - pos_);
  }
  template <typename T>
  T Get(const char *field) {
    Need(sizeof(T), field);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string GetString(const char *field) {
    const std::size_t at = pos_;
    std::uint32_t n = Get<std::uint32_t>(field);
    if (n > kMaxName)
      AVSR_INVALID(what_ << ": " << field << " length " << n
                   << " too large at offset " << at);
    Need(n, field);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  const char *here() const { return bytes_.data() + pos_; }
  void Skip(std::size_t n) { pos_ += n; }
  [[noreturn]] void Fail(std::size_t at, const std::string &msg) const {
    AVSR_INVALID(what_ << ": " << msg << " at offset " << at);
  }

 private:
  std::string_view bytes_;
  const std::string &what_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string EncodeCheckpoint(const Checkpoint &ckpt) {
  std::string out(kCheckpointMagic, 4);
  PutLe<std::uint32_t>(out, kCheckpointVersion);
  PutLe<std::uint64_t>(out, ckpt.fingerprint);
  PutLe<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.meta.size()));
  for (const auto &[k, v] : ckpt.meta) {
    PutString(out, k);
    PutString(out, v);
  }
  PutLe<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto &[name, t] : ckpt.tensors) {
    PutString(out, name);
    PutLe<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) PutLe<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  }
  for (const auto &[name, t] : ckpt.tensors)
    out.append(reinterpret_cast<const char *>(t.data()),
               t.size() * sizeof(float));
  return out;
}

Checkpoint DecodeCheckpoint(std::string_view bytes, const std::string &what) {
  Reader r(bytes, what);
  r.Need(4, "magic");
  if (std::memcmp(r.here(), kCheckpointMagic, 4) != 0)
    r.Fail(0, "bad magic (expected AVCK)");
  r.Skip(4);
  const std::size_t version_at = r.pos();
  std::uint32_t version = r.Get<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    r.Fail(version_at, "unsupported version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.fingerprint = r.Get<std::uint64_t>("fingerprint");

  std::uint32_t n_meta = r.Get<std::uint32_t>("metadata count");
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    const std::size_t at = r.pos();
    std::string key = r.GetString("metadata key");
    std::string value = r.GetString("metadata value");
    if (!ckpt.meta.empty() && key <= ckpt.meta.rbegin()->first)
      r.Fail(at, "metadata key '" + key + "' out of order or duplicated");
    ckpt.meta.emplace(std::move(key), std::move(value));
  }

  std::uint32_t n_tensors = r.Get<std::uint32_t>("tensor count");
  std::vector<std::pair<std::string, Shape>> table;
  std::size_t total = 0;
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const std::size_t at = r.pos();
    std::string name = r.GetString("tensor name");
    const std::size_t rank_at = r.pos();
    std::uint32_t rank = r.Get<std::uint32_t>("tensor rank");
    if (rank > kMaxRank)
      r.Fail(rank_at, "tensor '" + name + "' has rank " + std::to_string(rank));
    Shape shape;
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::size_t dim_at = r.pos();
      std::uint32_t dim = r.Get<std::uint32_t>("tensor dimension");
      if (dim == 0 || dim > (1u << 30))
        r.Fail(dim_at, "invalid dimension " + std::to_string(dim) +
                           " of tensor '" + name + "'");
      n *= dim;
      if (n > bytes.size()) r.Fail(dim_at, "tensor '" + name + "' too large");
      shape.push_back(static_cast<int>(dim));
    }
    if (!table.empty() && name <= table.back().first)
      r.Fail(at, "tensor '" + name + "' out of order or duplicated");
    total += n;
    if (total > bytes.size()) r.Fail(at, "tensor table exceeds file size");
    table.emplace_back(std::move(name), std::move(shape));
  }
  const std::size_t data_at = r.pos();
  if (r.remaining() != total * sizeof(float))
    AVSR_INVALID(what << ": payload length mismatch at offset " << data_at
                 << ": expected " << total * sizeof(float) << " bytes, found "
                 << r.remaining());
  for (auto &[name, shape] : table) {
    Tensor<float> t(shape);
    std::memcpy(t.data(), r.here(), t.size() * sizeof(float));
    r.Skip(t.size() * sizeof(float));
    ckpt.tensors.emplace(name, std::move(t));
  }
  return ckpt;
}

void WriteCheckpoint(const Checkpoint &ckpt, const std::string &path) {
  // Write then rename, so an interrupted run never leaves a torn file.
  const std::string tmp = path + ".tmp";
  WriteFileBytes(tmp, EncodeCheckpoint(ckpt));
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    AVSR_ERR("cannot rename " << tmp << " to " << path);
}

Checkpoint ReadCheckpoint(const std::string &path) {
  return DecodeCheckpoint(ReadFileBytes(path), path);
}

void PutStoreTensors(const ParamStore<float> &store, const std::string &prefix,
                     Checkpoint *ckpt) {
  for (const auto &[name, e] : store.params())
    ckpt->tensors[prefix + "param/" + name] = e.param.value;
  for (const auto &[name, e] : store.stats()) {
    ckpt->tensors[prefix + "stats/" + name + ".mean"] = e.stats.running_mean;
    ckpt->tensors[prefix + "stats/" + name + ".var"] = e.stats.running_var;
  }
}

int LoadStoreTensors(const Checkpoint &ckpt, const std::string &prefix,
                     ParamStore<float> *store) {
  int copied = 0;
  auto copy = [&](const std::string &key, Tensor<float> &dst) {
    auto it = ckpt.tensors.find(key);
    if (it == ckpt.tensors.end()) return;
    if (it->second.shape() != dst.shape())
      AVSR_INVALID("checkpoint tensor '" << key << "' has shape "
                   << ShapeString(it->second.shape()) << ", model expects "
                   << ShapeString(dst.shape()));
    dst = it->second;
    ++copied;
  };
  for (auto &[name, e] : store->params())
    copy(prefix + "param/" + name, e.param.value);
  for (auto &[name, e] : store->stats()) {
    copy(prefix + "stats/" + name + ".mean", e.stats.running_mean);
    copy(prefix + "stats/" + name + ".var", e.stats.running_var);
  }
  return copied;
}

void PutModel(const Model &model, Checkpoint *ckpt) {
  ckpt->fingerprint = model.spec.Fingerprint();
  for (const auto &[k, v] : model.spec.Describe()) ckpt->meta["model." + k] = v;
  ckpt->meta["video.norm_mean"] = FormatDouble(model.video_stats.mean);
  ckpt->meta["video.norm_std"] = FormatDouble(model.video_stats.std);
  PutStoreTensors(model.store, "", ckpt);
}

Model GetModel(const Checkpoint &ckpt) {
  std::map<std::string, std::string> fields;
  for (const auto &[k, v] : ckpt.meta)
    if (k.rfind("model.", 0) == 0) fields[k.substr(6)] = v;
  if (fields.empty()) AVSR_INVALID("checkpoint holds no model description");
  ModelSpec spec = ModelSpec::FromDescription(fields);
  if (spec.Fingerprint() != ckpt.fingerprint)
    AVSR_INVALID("checkpoint fingerprint " << HexDigest(ckpt.fingerprint)
                 << " does not match its model description ("
                 << HexDigest(spec.Fingerprint()) << ")");
  Model m = CreateModel(spec, 0);
  const int expected = static_cast<int>(m.store.params().size() +
                                        2 * m.store.stats().size());
  const int got = LoadStoreTensors(ckpt, "", &m.store);
  if (got != expected)
    AVSR_INVALID("checkpoint has " << got << " of the " << expected
                 << " model tensors");
  m.video_stats.mean = ParseDouble(ckpt.Meta("video.norm_mean"), "video.norm_mean");
  m.video_stats.std = ParseDouble(ckpt.Meta("video.norm_std"), "video.norm_std");
  return m;
}

#define AVSR_INSTANTIATE(Real)                                                \
  template void InitModel<Real>(ParamStore<Real> &, const ModelSpec &, Rng &); \
  template Var<Real> StreamFeatures<Real>(ForwardContext<Real> &,             \
                                          const ModelSpec &, StreamKind,      \
                                          const ModelInput<Real> &);          \
  template Var<Real> StreamForward<Real>(ForwardContext<Real> &,              \
                                         const ModelSpec &, StreamKind,       \
                                         const ModelInput<Real> &);           \
  template Var<Real> FusionForward<Real>(ForwardContext<Real> &,              \
                                         const ModelSpec &, const Var<Real> &, \
                                         const Var<Real> &);                  \
  template Var<Real> ForwardLogits<Real>(ForwardContext<Real> &,              \
                                         const ModelSpec &,                   \
                                         const ModelInput<Real> &, Head);     \
  template LossOutput<Real> FrameLoss<Real>(const Var<Real> &,                \
                                            std::span<const int>);

AVSR_INSTANTIATE(float)
AVSR_INSTANTIATE(double)

#undef AVSR_INSTANTIATE

}  // namespace avsr
