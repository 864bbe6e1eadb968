// avsr/run-config.h

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

// Line-based key=value run configuration.  Every key is declared in a fixed
// schema with a type, a default and a lower bound; unknown keys, duplicates
// and malformed values are rejected with the line they came from.

#ifndef AVSR_RUN_CONFIG_H_
#define AVSR_RUN_CONFIG_H_

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "avsr/training.h"

namespace avsr {

enum class ConfigType { kInt, kDouble, kBool, kString, kPath, kDoubleList };

struct ConfigKey {
  const char *name;
  ConfigType type;
  const char *default_value;
  double min;  // ignored for strings, paths and bools
  const char *help;
};

const std::vector<ConfigKey> &ConfigSchema();

class RunConfig {
 public:
  // All defaults; relative paths resolve against the working directory.
  RunConfig();

  // Relative paths in the file resolve against the file's directory.
  static RunConfig Load(const std::string &path);
  static RunConfig Parse(const std::string &text, const std::string &what,
                         const std::filesystem::path &base_dir);

  // Validates and stores one value; `where` prefixes error messages.
  void Set(const std::string &key, const std::string &value,
           const std::string &where = "");

  const std::string &Raw(const std::string &key) const;
  int Int(const std::string &key) const;
  double Double(const std::string &key) const;
  bool Bool(const std::string &key) const;
  std::vector<double> DoubleList(const std::string &key) const;
  // Empty when unset, otherwise resolved against the base directory.
  std::filesystem::path Path(const std::string &key) const;

  // "key=value" lines in schema order.
  std::string Echo() const;

  SynthConfig Synth() const;
  ModelSpec Spec(Target target) const;
  ScheduleConfig Schedule() const;
  NoiseConfig TrainingNoise() const;
  TrainOptions Training() const;
  std::filesystem::path ManifestPath() const;

 private:
  std::map<std::string, std::string> values_;
  std::filesystem::path base_dir_;
};

}  // namespace avsr

#endif  // AVSR_RUN_CONFIG_H_
