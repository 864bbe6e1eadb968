// avsr/cli.h

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

// The avsr command: gen-data, train, eval and sweep-snr.  Each subcommand is
// also callable as a function so tests can drive the pipeline in process.

#ifndef AVSR_CLI_H_
#define AVSR_CLI_H_

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "avsr/run-config.h"

namespace avsr {

DatasetInfo CmdGenData(const RunConfig &config,
                       const std::filesystem::path &out_dir, std::ostream &os);

struct TrainOutputs {
  std::filesystem::path checkpoint;  // <out>/<target>.ckpt
  std::filesystem::path metrics;     // <out>/<target>-metrics.csv
  std::filesystem::path state;       // <out>/<target>-state.ckpt
  TrainResult result;
};

// `resume` is a state checkpoint written by an earlier, interrupted run.
TrainOutputs CmdTrain(const RunConfig &config, Target target,
                      const std::filesystem::path &out_dir,
                      const std::optional<std::filesystem::path> &resume,
                      std::ostream &os, int interrupt_after = 0);

// Writes <out>/<target>-<split>[-snr<db>]-predictions.csv.
EvalReport CmdEval(const RunConfig &config,
                   const std::filesystem::path &checkpoint,
                   const std::string &split, std::optional<double> snr_db,
                   const std::filesystem::path &out_dir, std::ostream &os);

struct SweepRow {
  std::string snr;  // dB, or "clean"
  std::string model;
  double cr = 0;
};

// Evaluates every model on the test split at each grid SNR and clean, with
// the same noise for every model.  Writes <out>/sweep.csv.
std::vector<SweepRow> CmdSweepSnr(
    const RunConfig &config,
    const std::map<Target, std::filesystem::path> &checkpoints,
    const std::filesystem::path &out_dir, std::ostream &os);

// Loads the model in `checkpoint` and checks it matches `config`.
Model LoadCompatibleModel(const RunConfig &config,
                          const std::filesystem::path &checkpoint);

// argv entry point.  Returns 0, 1 for invalid input, 2 for runtime errors.
int RunCli(int argc, char **argv);

}  // namespace avsr

#endif  // AVSR_CLI_H_
