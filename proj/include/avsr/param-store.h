// avsr/param-store.h

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

#ifndef AVSR_PARAM_STORE_H_
#define AVSR_PARAM_STORE_H_

#include <map>
#include <set>
#include <string>
#include <vector>

#include "avsr/ops.h"
#include "avsr/tape.h"

namespace avsr {

// Named learnable parameters and batch-norm running statistics, grouped by
// submodule ("video.resnet", "fusion.bgru", ...).  Iteration order is the
// lexicographic name order, which fixes the layout of checkpoints and the
// order of optimizer updates.
template <typename Real>
class ParamStore {
 public:
  struct ParamEntry {
    Parameter<Real> param;
    std::string group;
  };
  struct StatsEntry {
    BatchNormStats<Real> stats;
    std::string group;
  };

  Parameter<Real> &Add(const std::string &name, const std::string &group,
                       Tensor<Real> init);
  BatchNormStats<Real> &AddStats(const std::string &name,
                                 const std::string &group, int channels);

  bool Has(const std::string &name) const { return params_.count(name) > 0; }
  bool HasStats(const std::string &name) const {
    return stats_.count(name) > 0;
  }
  Parameter<Real> &Get(const std::string &name);
  const Parameter<Real> &Get(const std::string &name) const;
  BatchNormStats<Real> &Stats(const std::string &name);
  const BatchNormStats<Real> &Stats(const std::string &name) const;
  const std::string &GroupOf(const std::string &name) const;
  const std::string &StatsGroupOf(const std::string &name) const;

  std::map<std::string, ParamEntry> &params() { return params_; }
  const std::map<std::string, ParamEntry> &params() const { return params_; }
  std::map<std::string, StatsEntry> &stats() { return stats_; }
  const std::map<std::string, StatsEntry> &stats() const { return stats_; }

  std::set<std::string> Groups() const;
  bool HasGroup(const std::string &group) const;

  // The freeze mask.  Frozen groups are registered on tapes as constants and
  // their batch norms run in eval mode, so neither values nor running
  // statistics change while frozen.
  void SetFrozenGroups(const std::set<std::string> &groups);
  void FreezeAllExcept(const std::set<std::string> &trainable);
  bool IsFrozen(const std::string &group) const {
    return frozen_.count(group) > 0;
  }
  const std::set<std::string> &frozen_groups() const { return frozen_; }

  // FNV-1a over names, shapes and bytes of parameters and statistics in the
  // given groups (all groups when empty).
  std::uint64_t Hash(const std::set<std::string> &groups = {}) const;

  void ZeroGrad();
  std::int64_t NumScalars() const;

  // Copies every tensor of `other` whose name exists in this store.
  // Returns the number of tensors copied.  Shapes must agree.
  int CopyMatching(const ParamStore &other, const std::string &prefix = "");

  template <typename Other>
  ParamStore<Other> Cast() const {
    ParamStore<Other> out;
    for (const auto &[name, e] : params_)
      out.Add(name, e.group, e.param.value.template Cast<Other>());
    for (const auto &[name, e] : stats_) {
      auto &s = out.AddStats(name, e.group, e.stats.running_mean.dim(0));
      s.running_mean = e.stats.running_mean.template Cast<Other>();
      s.running_var = e.stats.running_var.template Cast<Other>();
    }
    out.SetFrozenGroups(frozen_);
    return out;
  }

 private:
  std::map<std::string, ParamEntry> params_;
  std::map<std::string, StatsEntry> stats_;
  std::set<std::string> frozen_;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;

}  // namespace avsr

#endif  // AVSR_PARAM_STORE_H_
