// avsr/param-store.cc

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

#include "avsr/param-store.h"

namespace avsr {

template <typename Real>
Parameter<Real> &ParamStore<Real>::Add(const std::string &name,
                                       const std::string &group,
                                       Tensor<Real> init) {
  if (params_.count(name) || stats_.count(name))
    AVSR_ERR("parameter name '" << name << "' is already in use");
  if (group.empty()) AVSR_ERR("parameter '" << name << "' has no group");
  ParamEntry &e = params_[name];
  e.param.value = std::move(init);
  e.group = group;
  return e.param;
}

template <typename Real>
BatchNormStats<Real> &ParamStore<Real>::AddStats(const std::string &name,
                                                 const std::string &group,
                                                 int channels) {
  if (params_.count(name) || stats_.count(name))
    AVSR_ERR("parameter name '" << name << "' is already in use");
  StatsEntry &e = stats_[name];
  e.stats = BatchNormStats<Real>(channels);
  e.group = group;
  return e.stats;
}

template <typename Real>
Parameter<Real> &ParamStore<Real>::Get(const std::string &name) {
  auto it = params_.find(name);
  if (it == params_.end()) AVSR_ERR("no parameter named '" << name << "'");
  return it->second.param;
}

template <typename Real>
const Parameter<Real> &ParamStore<Real>::Get(const std::string &name) const {
  auto it = params_.find(name);
  if (it == params_.end()) AVSR_ERR("no parameter named '" << name << "'");
  return it->second.param;
}

template <typename Real>
BatchNormStats<Real> &ParamStore<Real>::Stats(const std::string &name) {
  auto it = stats_.find(name);
  if (it == stats_.end())
    AVSR_ERR("no batch-norm statistics named '" << name << "'");
  return it->second.stats;
}

template <typename Real>
const BatchNormStats<Real> &ParamStore<Real>::Stats(
    const std::string &name) const {
  auto it = stats_.find(name);
  if (it == stats_.end())
    AVSR_ERR("no batch-norm statistics named '" << name << "'");
  return it->second.stats;
}

template <typename Real>
const std::string &ParamStore<Real>::GroupOf(const std::string &name) const {
  auto it = params_.find(name);
  if (it == params_.end()) AVSR_ERR("no parameter named '" << name << "'");
  return it->second.group;
}

template <typename Real>
const std::string &ParamStore<Real>::StatsGroupOf(
    const std::string &name) const {
  auto it = stats_.find(name);
  if (it == stats_.end())
    AVSR_ERR("no batch-norm statistics named '" << name << "'");
  return it->second.group;
}

template <typename Real>
std::set<std::string> ParamStore<Real>::Groups() const {
  std::set<std::string> g;
  for (const auto &[n, e] : params_) g.insert(e.group);
  for (const auto &[n, e] : stats_) g.insert(e.group);
  return g;
}

template <typename Real>
bool ParamStore<Real>::HasGroup(const std::string &group) const {
  return Groups().count(group) > 0;
}

template <typename Real>
void ParamStore<Real>::SetFrozenGroups(const std::set<std::string> &groups) {
  frozen_ = groups;
}

template <typename Real>
void ParamStore<Real>::FreezeAllExcept(const std::set<std::string> &trainable) {
  const std::set<std::string> all = Groups();
  for (const auto &g : trainable)
    if (!all.count(g)) AVSR_ERR("unknown parameter group '" << g << "'");
  frozen_.clear();
  for (const auto &g : all)
    if (!trainable.count(g)) frozen_.insert(g);
}

template <typename Real>
std::uint64_t ParamStore<Real>::Hash(const std::set<std::string> &groups) const {
  Fnv1a h;
  auto hash_tensor = [&](const std::string &name, const Tensor<Real> &t) {
    h.Update(name);
    for (int d : t.shape()) h.UpdateValue(d);
    h.Update(t.data(), t.size() * sizeof(Real));
  };
  for (const auto &[name, e] : params_)
    if (groups.empty() || groups.count(e.group))
      hash_tensor(name, e.param.value);
  for (const auto &[name, e] : stats_)
    if (groups.empty() || groups.count(e.group)) {
      hash_tensor(name + ".running_mean", e.stats.running_mean);
      hash_tensor(name + ".running_var", e.stats.running_var);
    }
  return h.digest();
}

template <typename Real>
void ParamStore<Real>::ZeroGrad() {
  for (auto &[name, e] : params_) e.param.ZeroGrad();
}

template <typename Real>
std::int64_t ParamStore<Real>::NumScalars() const {
  std::int64_t n = 0;
  for (const auto &[name, e] : params_) n += e.param.value.size();
  return n;
}

template <typename Real>
int ParamStore<Real>::CopyMatching(const ParamStore &other,
                                   const std::string &prefix) {
  int copied = 0;
  for (const auto &[name, e] : other.params_) {
    if (name.compare(0, prefix.size(), prefix) != 0) continue;
    auto it = params_.find(name);
    if (it == params_.end()) continue;
    if (it->second.param.value.shape() != e.param.value.shape())
      AVSR_ERR("parameter '" << name << "' has shape "
                             << ShapeString(it->second.param.value.shape())
                             << " but the source has "
                             << ShapeString(e.param.value.shape()));
    it->second.param.value = e.param.value;
    ++copied;
  }
  for (const auto &[name, e] : other.stats_) {
    if (name.compare(0, prefix.size(), prefix) != 0) continue;
    auto it = stats_.find(name);
    if (it == stats_.end()) continue;
    if (it->second.stats.running_mean.shape() != e.stats.running_mean.shape())
      AVSR_ERR("batch-norm statistics '" << name << "' differ in size");
    it->second.stats = e.stats;
    ++copied;
  }
  return copied;
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace avsr
