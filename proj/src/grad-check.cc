// avsr/grad-check.cc

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

#include "avsr/grad-check.h"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace avsr {

template <typename Real>
GradCheckReport CheckGradients(
    const std::function<Var<Real>(Tape<Real> &)> &f,
    const std::vector<std::pair<std::string, Parameter<Real> *>> &params,
    const GradCheckOptions &opts) {
  for (auto &[name, p] : params) p->ZeroGrad();
  {
    Tape<Real> tape;
    Var<Real> root = f(tape);
    tape.Backward(root);
  }
  auto eval = [&]() {
    Tape<Real> tape;
    return static_cast<double>(f(tape).value()[0]);
  };

  GradCheckReport report;
  Rng rng(opts.seed);
  for (auto &[name, p] : params) {
    const std::size_t n = p->value.size();
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), 0);
    if (static_cast<std::size_t>(opts.samples_per_param) < n) {
      // Partial Fisher-Yates.
      for (int i = 0; i < opts.samples_per_param; ++i) {
        std::size_t j = i + static_cast<std::size_t>(UniformUnit(rng) * (n - i));
        std::swap(coords[i], coords[std::min(j, n - 1)]);
      }
      coords.resize(opts.samples_per_param);
    }
    for (std::size_t k : coords) {
      const Real saved = p->value[k];
      p->value[k] = static_cast<Real>(saved + opts.step);
      const double up = eval();
      p->value[k] = static_cast<Real>(saved - opts.step);
      const double down = eval();
      p->value[k] = saved;
      const double numeric = (up - down) / (2 * opts.step);
      const double analytic = p->grad[k];
      const double denom =
          std::max({std::abs(numeric), std::abs(analytic), opts.floor});
      const double err = std::abs(numeric - analytic) / denom;
      ++report.checked;
      if (!(err <= report.max_rel_error)) {
        report.max_rel_error = std::isnan(err) ? INFINITY : err;
        report.worst = name + "[" + std::to_string(k) +
                       "]: analytic " + std::to_string(analytic) +
                       " vs numeric " + std::to_string(numeric);
      }
    }
  }
  return report;
}

template GradCheckReport CheckGradients<double>(
    const std::function<Var<double>(Tape<double> &)> &,
    const std::vector<std::pair<std::string, Parameter<double> *>> &,
    const GradCheckOptions &);
template GradCheckReport CheckGradients<float>(
    const std::function<Var<float>(Tape<float> &)> &,
    const std::vector<std::pair<std::string, Parameter<float> *>> &,
    const GradCheckOptions &);

}  // namespace avsr
