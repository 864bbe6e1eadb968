// avsr/training.h

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

// Adam, early stopping and the staged schedules.
//
// A stream is trained in three stages: front-end + ResNet under a
// temporal-conv back-end until validation accuracy stops improving, then the
// BGRU head alone for five epochs, then everything end to end.  The fusion
// model starts from two trained streams, trains its BGRU for five epochs with
// the streams fixed and then trains jointly.

#ifndef AVSR_TRAINING_H_
#define AVSR_TRAINING_H_

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "avsr/model.h"

namespace avsr {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam over the parameters of non-frozen groups.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  // theta -= lr m_hat / (sqrt(v_hat) + eps).  Throws DivergenceError on a
  // non-finite gradient before touching anything.
  void Step(ParamStore<float> &store);

  const AdamConfig &config() const { return config_; }
  std::int64_t steps() const { return steps_; }

  void Save(Checkpoint *ckpt) const;  // "adam.m/<name>", "adam.v/<name>"
  void Load(const Checkpoint &ckpt);

 private:
  struct Moments {
    Tensor<float> m, v;
  };
  AdamConfig config_;
  std::int64_t steps_ = 0;
  std::map<std::string, Moments> moments_;
};

// True once the best value has not strictly improved for `delay` epochs.
bool ShouldStopEarly(const std::vector<double> &history, int delay);

enum class StopRule { kFixedEpochs, kEarlyStop };

struct StageSpec {
  std::string name;
  std::set<std::string> trainable;  // parameter groups; the rest are frozen
  Head head = Head::kRecurrent;
  int batch_size = 36;
  double lr = 3e-4;
  StopRule stop = StopRule::kEarlyStop;
  int epochs = 5;       // kFixedEpochs
  int delay = 5;        // kEarlyStop
  int max_epochs = 0;   // kEarlyStop cap, 0 = none
};

struct TrainingSchedule {
  std::vector<StageSpec> stages;
  void Validate(const ParamStore<float> &store) const;
  std::uint64_t Fingerprint() const;
};

// Batch sizes, rates and caps that a run may override.
struct ScheduleConfig {
  int stream_batch = 36;
  double stream_lr = 3e-4;
  int fusion_batch = 18;
  double fusion_lr = 1e-4;
  double mfcc_lr = 1e-3;
  int head_epochs = 5;  // stream stage 2 and fusion stage 1
  int delay = 5;
  int max_epochs = 0;
};

TrainingSchedule StreamSchedule(StreamKind kind, const ScheduleConfig &c);
TrainingSchedule FusionSchedule(const ScheduleConfig &c);
TrainingSchedule MfccSchedule(const ScheduleConfig &c);
TrainingSchedule ScheduleFor(Target target, const ScheduleConfig &c);

struct TrainOptions {
  std::uint64_t seed = 1;
  NoiseConfig noise;       // training-time babble augmentation
  bool augment = true;     // crop/flip and noise; centre crop and clean otherwise
  double clip_norm = 5.0;  // global gradient norm
  int eval_batch = 50;
  // Written after every epoch so a run can resume.  Empty disables.
  std::string state_path;
  // Stop (as if interrupted) once this many epochs in total have run.
  int interrupt_after = 0;
};

struct EpochMetrics {
  std::string stage;
  int epoch = 0;  // 1-based within the stage
  double train_loss = 0;
  double train_cr = 0;
  double val_cr = 0;
  double wall_seconds = 0;
  int clipped_batches = 0;
  int samples = 0;
};

// One row per epoch: stage,epoch,train_loss,train_cr,val_cr,wall_seconds.
std::string MetricsCsv(const std::vector<EpochMetrics> &rows,
                       bool with_wall_seconds = true);
void WriteMetricsCsv(const std::string &path,
                     const std::vector<EpochMetrics> &rows);

struct StageRecord {
  std::string stage;
  std::set<std::string> trainable, frozen;
  std::uint64_t frozen_hash_before = 0, frozen_hash_after = 0;
  int epochs = 0;
  double best_val_cr = 0;
  int best_epoch = 0;
};

struct TrainResult {
  Model model;  // parameters selected at the end of the last stage
  std::vector<EpochMetrics> metrics;
  std::vector<StageRecord> stages;
  bool finished = false;  // false when interrupted
};

// One pass over the shuffled split with per-sample augmentation.
// `stage_index` and `epoch` key the random streams.
EpochMetrics TrainEpoch(Model &model, const std::vector<Sample> &train,
                        const StageSpec &stage, Adam &adam,
                        const TrainOptions &options, int stage_index,
                        int epoch);

// Runs (or resumes) a schedule.  Early-stopped stages end on their best
// validation parameters.
TrainResult RunSchedule(Model model, const Dataset &data,
                        const TrainingSchedule &schedule,
                        const TrainOptions &options,
                        const Checkpoint *resume = nullptr);

// Pixel statistics of the training split, computed on the stored frames.
NormStats TrainingVideoStats(const Dataset &data);

// Builds the fusion model with each stream copied from its trained model.
// Rejects streams whose frame counts or shapes disagree with `spec`.
Model InitFusionFromStreams(const ModelSpec &spec, const Model &audio,
                            const Model &video, std::uint64_t seed);

}  // namespace avsr

#endif  // AVSR_TRAINING_H_
