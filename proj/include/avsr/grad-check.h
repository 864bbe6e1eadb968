// avsr/grad-check.h

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

#ifndef AVSR_GRAD_CHECK_H_
#define AVSR_GRAD_CHECK_H_

#include <functional>
#include <string>
#include <vector>

#include "avsr/tape.h"

namespace avsr {

struct GradCheckOptions {
  double step = 1e-5;
  // Denominator floor of the relative error, so coordinates whose true
  // gradient is ~0 are judged on absolute error.
  double floor = 1e-6;
  int samples_per_param = 8;
  std::uint64_t seed = 7;
};

struct GradCheckReport {
  double max_rel_error = 0;
  std::string worst;  // "param[index]: analytic vs numeric"
  int checked = 0;
  bool Passed(double tolerance) const { return max_rel_error < tolerance; }
};

// Compares reverse-mode gradients of the scalar `f` against central
// differences for a random sample of coordinates of every parameter.  `f`
// must register the parameters on the tape it is given and be
// deterministic.  Intended for Real = double; the float instantiation is
// only useful for coarse smoke checks.
template <typename Real>
GradCheckReport CheckGradients(
    const std::function<Var<Real>(Tape<Real> &)> &f,
    const std::vector<std::pair<std::string, Parameter<Real> *>> &params,
    const GradCheckOptions &opts = {});

extern template GradCheckReport CheckGradients<double>(
    const std::function<Var<double>(Tape<double> &)> &,
    const std::vector<std::pair<std::string, Parameter<double> *>> &,
    const GradCheckOptions &);
extern template GradCheckReport CheckGradients<float>(
    const std::function<Var<float>(Tape<float> &)> &,
    const std::vector<std::pair<std::string, Parameter<float> *>> &,
    const GradCheckOptions &);

}  // namespace avsr

#endif  // AVSR_GRAD_CHECK_H_
