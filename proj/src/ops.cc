// avsr/ops.cc

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

#include "avsr/ops.h"

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace avsr {

namespace {

template <typename Real>
using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>;
template <typename Real>
using MatMap = Eigen::Map<RowMat<Real>>;
template <typename Real>
using ConstMatMap = Eigen::Map<const RowMat<Real>>;

// Upper bound on im2col buffer elements per chunk.
constexpr std::int64_t kColumnBudget = 1 << 22;

void CheckSameShape(const Shape &a, const Shape &b, const char *op) {
  if (a != b)
    AVSR_ERR(op << ": shape mismatch " << ShapeString(a) << " vs "
                << ShapeString(b));
}

// Convolution problem with 1D/2D inputs lifted to 3 spatial dimensions.
struct ConvProblem {
  int n = 0, c = 0, cout = 0;
  std::array<int, 3> in{1, 1, 1}, k{1, 1, 1}, stride{1, 1, 1}, pad{0, 0, 0},
      out{1, 1, 1};
  int in_size() const { return in[0] * in[1] * in[2]; }
  int out_size() const { return out[0] * out[1] * out[2]; }
  int col_rows() const { return c * k[0] * k[1] * k[2]; }
};

// Range [lo, hi) of output positions whose input index o * stride - pad + k
// falls inside [0, in).
inline void ValidRange(int out, int in, int stride, int pad, int k, int *lo,
                       int *hi) {
  const int first = pad - k;  // need o * stride >= first
  *lo = first <= 0 ? 0 : (first + stride - 1) / stride;
  const int last = in - 1 + pad - k;  // need o * stride <= last
  *hi = last < 0 ? 0 : std::min(out, last / stride + 1);
  if (*lo > out) *lo = out;
  if (*hi < *lo) *hi = *lo;
}

template <typename Real>
void Im2Col(const ConvProblem &pb, const Real *x, int nb, Real *col) {
  const int P = pb.out_size();
  const std::int64_t NP = static_cast<std::int64_t>(nb) * P;
  const int ow_n = pb.out[2], sw = pb.stride[2];
  int row = 0;
  for (int c = 0; c < pb.c; ++c)
    for (int a = 0; a < pb.k[0]; ++a)
      for (int b = 0; b < pb.k[1]; ++b)
        for (int e = 0; e < pb.k[2]; ++e, ++row) {
          int lo, hi;
          ValidRange(ow_n, pb.in[2], sw, pb.pad[2], e, &lo, &hi);
          const int base = lo * sw - pb.pad[2] + e;
          Real *dst = col + row * NP;
          for (int n = 0; n < nb; ++n) {
            const Real *img =
                x + (static_cast<std::int64_t>(n) * pb.c + c) * pb.in_size();
            for (int od = 0; od < pb.out[0]; ++od) {
              const int id = od * pb.stride[0] - pb.pad[0] + a;
              const bool dok = id >= 0 && id < pb.in[0];
              for (int oh = 0; oh < pb.out[1]; ++oh, dst += ow_n) {
                const int ih = oh * pb.stride[1] - pb.pad[1] + b;
                if (!dok || ih < 0 || ih >= pb.in[1]) {
                  std::fill(dst, dst + ow_n, Real(0));
                  continue;
                }
                const Real *src = img + (id * pb.in[1] + ih) * pb.in[2] + base;
                std::fill(dst, dst + lo, Real(0));
                if (sw == 1) {
                  std::copy(src, src + (hi - lo), dst + lo);
                } else {
                  for (int ow = lo, j = 0; ow < hi; ++ow, j += sw) dst[ow] = src[j];
                }
                std::fill(dst + hi, dst + ow_n, Real(0));
              }
            }
          }
        }
}

template <typename Real>
void Col2Im(const ConvProblem &pb, const Real *col, int nb, Real *x) {
  const int P = pb.out_size();
  const std::int64_t NP = static_cast<std::int64_t>(nb) * P;
  const int ow_n = pb.out[2], sw = pb.stride[2];
  int row = 0;
  for (int c = 0; c < pb.c; ++c)
    for (int a = 0; a < pb.k[0]; ++a)
      for (int b = 0; b < pb.k[1]; ++b)
        for (int e = 0; e < pb.k[2]; ++e, ++row) {
          int lo, hi;
          ValidRange(ow_n, pb.in[2], sw, pb.pad[2], e, &lo, &hi);
          const int base = lo * sw - pb.pad[2] + e;
          const Real *src = col + row * NP;
          for (int n = 0; n < nb; ++n) {
            Real *img =
                x + (static_cast<std::int64_t>(n) * pb.c + c) * pb.in_size();
            for (int od = 0; od < pb.out[0]; ++od) {
              const int id = od * pb.stride[0] - pb.pad[0] + a;
              const bool dok = id >= 0 && id < pb.in[0];
              for (int oh = 0; oh < pb.out[1]; ++oh, src += ow_n) {
                const int ih = oh * pb.stride[1] - pb.pad[1] + b;
                if (!dok || ih < 0 || ih >= pb.in[1]) continue;
                Real *dst = img + (id * pb.in[1] + ih) * pb.in[2] + base;
                if (sw == 1) {
                  for (int ow = lo; ow < hi; ++ow) dst[ow - lo] += src[ow];
                } else {
                  for (int ow = lo, j = 0; ow < hi; ++ow, j += sw) dst[j] += src[ow];
                }
              }
            }
          }
        }
}

ConvProblem MakeConvProblem(const Shape &xs, const Shape &ks,
                            const ConvGeometry &geo) {
  const int dims = static_cast<int>(ks.size()) - 2;
  if (dims < 1 || dims > 3)
    AVSR_ERR("conv: kernel must have rank 3, 4 or 5, got shape "
             << ShapeString(ks));
  if (static_cast<int>(xs.size()) != dims + 2)
    AVSR_ERR("conv: input " << ShapeString(xs) << " does not match "
                            << dims << "D kernel " << ShapeString(ks));
  if (xs[1] != ks[1])
    AVSR_ERR("conv: input has " << xs[1] << " channels but kernel expects "
                                << ks[1] << " (dimension 1)");
  auto pick = [&](const std::vector<int> &v, int i, const char *what) {
    if (v.size() == 1) return v[0];
    if (static_cast<int>(v.size()) != dims)
      AVSR_ERR("conv: " << what << " has " << v.size() << " entries for a "
                        << dims << "D convolution");
    return v[i];
  };
  ConvProblem pb;
  pb.n = xs[0];
  pb.c = xs[1];
  pb.cout = ks[0];
  const int off = 3 - dims;
  for (int i = 0; i < dims; ++i) {
    const int s = pick(geo.stride, i, "stride");
    const int p = pick(geo.padding, i, "padding");
    if (s < 1) AVSR_ERR("conv: stride must be >= 1 in spatial dim " << i);
    if (p < 0) AVSR_ERR("conv: padding must be >= 0 in spatial dim " << i);
    pb.in[off + i] = xs[2 + i];
    pb.k[off + i] = ks[2 + i];
    pb.stride[off + i] = s;
    pb.pad[off + i] = p;
    if (ks[2 + i] > xs[2 + i] + 2 * p)
      AVSR_ERR("conv: kernel extent " << ks[2 + i] << " exceeds padded input "
                                      << xs[2 + i] + 2 * p
                                      << " in spatial dim " << i
                                      << " (tensor dimension " << 2 + i
                                      << ")");
    pb.out[off + i] = ConvOutputLength(xs[2 + i], ks[2 + i], s, p);
  }
  return pb;
}

}  // namespace

int ConvOutputLength(int in, int kernel, int stride, int pad) {
  const int span = in + 2 * pad - kernel;
  if (span < 0) return 0;
  return span / stride + 1;
}

template <typename Real>
Var<Real> Conv(const Var<Real> &input, const Var<Real> &kernel,
               const std::optional<Var<Real>> &bias, const ConvGeometry &geo) {
  const Tensor<Real> &x = input.value();
  const Tensor<Real> &w = kernel.value();
  const ConvProblem pb = MakeConvProblem(x.shape(), w.shape(), geo);
  if (bias && (bias->value().rank() != 1 || bias->value().dim(0) != pb.cout))
    AVSR_ERR("conv: bias shape " << ShapeString(bias->shape())
                                 << " does not match " << pb.cout
                                 << " output channels");
  Shape out_shape{pb.n, pb.cout};
  const int dims = w.rank() - 2;
  for (int i = 0; i < dims; ++i) out_shape.push_back(pb.out[3 - dims + i]);
  Tensor<Real> y(out_shape);

  const int P = pb.out_size();
  const int CK = pb.col_rows();
  const int nb_max = static_cast<int>(std::clamp<std::int64_t>(
      kColumnBudget / (static_cast<std::int64_t>(CK) * P), 1, pb.n));
  std::vector<Real> col(static_cast<std::size_t>(CK) * nb_max * P);
  std::vector<Real> prod(static_cast<std::size_t>(pb.cout) * nb_max * P);
  ConstMatMap<Real> W(w.data(), pb.cout, CK);
  for (int n0 = 0; n0 < pb.n; n0 += nb_max) {
    const int nb = std::min(nb_max, pb.n - n0);
    const std::int64_t NP = static_cast<std::int64_t>(nb) * P;
    Im2Col(pb, x.data() + static_cast<std::int64_t>(n0) * pb.c * pb.in_size(),
           nb, col.data());
    MatMap<Real> out(prod.data(), pb.cout, NP);
    out.noalias() = W * ConstMatMap<Real>(col.data(), CK, NP);
    for (int n = 0; n < nb; ++n)
      for (int co = 0; co < pb.cout; ++co) {
        Real *dst = y.data() + (static_cast<std::int64_t>(n0 + n) * pb.cout +
                                co) * P;
        const Real *src = prod.data() + co * NP + static_cast<std::int64_t>(n) * P;
        const Real b = bias ? bias->value()[co] : Real(0);
        for (int p = 0; p < P; ++p) dst[p] = src[p] + b;
      }
  }

  std::vector<Var<Real>> inputs{input, kernel};
  if (bias) inputs.push_back(*bias);
  const int xid = input.id(), wid = kernel.id();
  const int bid = bias ? bias->id() : -1;
  return input.tape()->Record(
      std::move(y), inputs, [pb, xid, wid, bid, nb_max](Tape<Real> &t, int self) {
        const Tensor<Real> &g = t.grad(self);
        const Tensor<Real> &x = t.value(xid);
        const Tensor<Real> &w = t.value(wid);
        const int P = pb.out_size();
        const int CK = pb.col_rows();
        const bool need_x = t.requires_grad(xid);
        const bool need_w = t.requires_grad(wid);
        if (bid >= 0 && t.requires_grad(bid)) {
          Tensor<Real> &gb = t.GradSink(bid);
          for (int n = 0; n < pb.n; ++n)
            for (int co = 0; co < pb.cout; ++co) {
              const Real *src =
                  g.data() + (static_cast<std::int64_t>(n) * pb.cout + co) * P;
              Real s = 0;
              for (int p = 0; p < P; ++p) s += src[p];
              gb[co] += s;
            }
        }
        if (!need_x && !need_w) return;
        std::vector<Real> col(static_cast<std::size_t>(CK) * nb_max * P);
        std::vector<Real> gmat(static_cast<std::size_t>(pb.cout) * nb_max * P);
        ConstMatMap<Real> W(w.data(), pb.cout, CK);
        Tensor<Real> *gx = need_x ? &t.GradSink(xid) : nullptr;
        Tensor<Real> *gw = need_w ? &t.GradSink(wid) : nullptr;
        for (int n0 = 0; n0 < pb.n; n0 += nb_max) {
          const int nb = std::min(nb_max, pb.n - n0);
          const std::int64_t NP = static_cast<std::int64_t>(nb) * P;
          for (int n = 0; n < nb; ++n)
            for (int co = 0; co < pb.cout; ++co) {
              const Real *src =
                  g.data() +
                  (static_cast<std::int64_t>(n0 + n) * pb.cout + co) * P;
              std::copy(src, src + P,
                        gmat.data() + co * NP + static_cast<std::int64_t>(n) * P);
            }
          ConstMatMap<Real> G(gmat.data(), pb.cout, NP);
          if (need_w) {
            Im2Col(pb,
                   x.data() + static_cast<std::int64_t>(n0) * pb.c * pb.in_size(),
                   nb, col.data());
            MatMap<Real> GW(gw->data(), pb.cout, CK);
            GW.noalias() += G * ConstMatMap<Real>(col.data(), CK, NP).transpose();
          }
          if (need_x) {
            MatMap<Real> dcol(col.data(), CK, NP);
            dcol.noalias() = W.transpose() * G;
            Col2Im(pb, col.data(), nb,
                   gx->data() + static_cast<std::int64_t>(n0) * pb.c * pb.in_size());
          }
        }
      });
}

template <typename Real>
Var<Real> BatchNorm(const Var<Real> &x, const Var<Real> &gamma,
                    const Var<Real> &beta, BatchNormStats<Real> &stats,
                    NormMode mode) {
  const Tensor<Real> &xv = x.value();
  if (xv.rank() < 2)
    AVSR_ERR("batch norm: input must be (N, C, ...), got "
             << ShapeString(xv.shape()));
  const int N = xv.dim(0), C = xv.dim(1);
  const std::int64_t S = static_cast<std::int64_t>(xv.size()) / (N * C);
  const std::int64_t M = N * S;
  if (gamma.value().shape() != Shape{C} || beta.value().shape() != Shape{C})
    AVSR_ERR("batch norm: gamma/beta must have shape (" << C << "), got "
                                                        << ShapeString(gamma.shape())
                                                        << " and "
                                                        << ShapeString(beta.shape()));
  if (stats.running_mean.shape() != Shape{C} ||
      stats.running_var.shape() != Shape{C})
    AVSR_ERR("batch norm: running statistics do not have " << C
                                                           << " channels");
  if (mode == NormMode::kTrain && M < 2)
    AVSR_ERR("batch norm: train mode needs at least 2 values per channel, got "
             << M);

  std::vector<Real> mean(C), invstd(C);
  if (mode == NormMode::kTrain) {
    for (int c = 0; c < C; ++c) {
      double s = 0, ss = 0;
      for (int n = 0; n < N; ++n) {
        const Real *p = xv.data() + (static_cast<std::int64_t>(n) * C + c) * S;
        for (std::int64_t i = 0; i < S; ++i) s += p[i];
      }
      const double mu = s / M;
      for (int n = 0; n < N; ++n) {
        const Real *p = xv.data() + (static_cast<std::int64_t>(n) * C + c) * S;
        for (std::int64_t i = 0; i < S; ++i) {
          const double d = p[i] - mu;
          ss += d * d;
        }
      }
      const double var = ss / M;
      mean[c] = static_cast<Real>(mu);
      invstd[c] = static_cast<Real>(1.0 / std::sqrt(var + kBatchNormEpsilon));
      const double m = kBatchNormMomentum;
      stats.running_mean[c] =
          static_cast<Real>((1 - m) * stats.running_mean[c] + m * mu);
      stats.running_var[c] = static_cast<Real>(
          (1 - m) * stats.running_var[c] + m * var * M / (M - 1));
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mean[c] = stats.running_mean[c];
      invstd[c] = static_cast<Real>(
          1.0 / std::sqrt(static_cast<double>(stats.running_var[c]) +
                          kBatchNormEpsilon));
    }
  }

  Tensor<Real> y(xv.shape());
  const Tensor<Real> &gv = gamma.value(), &bv = beta.value();
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const std::int64_t off = (static_cast<std::int64_t>(n) * C + c) * S;
      const Real a = gv[c] * invstd[c];
      const Real b = bv[c] - mean[c] * a;
      const Real *src = xv.data() + off;
      Real *dst = y.data() + off;
      for (std::int64_t i = 0; i < S; ++i) dst[i] = src[i] * a + b;
    }

  const int xid = x.id(), gid = gamma.id(), bid = beta.id();
  const bool train = mode == NormMode::kTrain;
  return x.tape()->Record(
      std::move(y), {x, gamma, beta},
      [=, mean = std::move(mean), invstd = std::move(invstd)](Tape<Real> &t,
                                                               int self) {
        const Tensor<Real> &g = t.grad(self);
        const Tensor<Real> &xv = t.value(xid);
        const Tensor<Real> &gv = t.value(gid);
        std::vector<double> sum_g(C, 0.0), sum_gx(C, 0.0);
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < C; ++c) {
            const std::int64_t off = (static_cast<std::int64_t>(n) * C + c) * S;
            double sg = 0, sgx = 0;
            for (std::int64_t i = 0; i < S; ++i) {
              const double xhat = (xv[off + i] - mean[c]) * invstd[c];
              sg += g[off + i];
              sgx += g[off + i] * xhat;
            }
            sum_g[c] += sg;
            sum_gx[c] += sgx;
          }
        if (t.requires_grad(gid)) {
          Tensor<Real> &gg = t.GradSink(gid);
          for (int c = 0; c < C; ++c) gg[c] += static_cast<Real>(sum_gx[c]);
        }
        if (t.requires_grad(bid)) {
          Tensor<Real> &gb = t.GradSink(bid);
          for (int c = 0; c < C; ++c) gb[c] += static_cast<Real>(sum_g[c]);
        }
        if (!t.requires_grad(xid)) return;
        Tensor<Real> &gx = t.GradSink(xid);
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < C; ++c) {
            const std::int64_t off = (static_cast<std::int64_t>(n) * C + c) * S;
            const Real scale = gv[c] * invstd[c];
            if (!train) {
              for (std::int64_t i = 0; i < S; ++i) gx[off + i] += g[off + i] * scale;
              continue;
            }
            const Real mg = static_cast<Real>(sum_g[c] / M);
            const Real mgx = static_cast<Real>(sum_gx[c] / M);
            for (std::int64_t i = 0; i < S; ++i) {
              const Real xhat = (xv[off + i] - mean[c]) * invstd[c];
              gx[off + i] += scale * (g[off + i] - mg - xhat * mgx);
            }
          }
      });
}

template <typename Real>
Var<Real> Activation(const Var<Real> &x, ActivationKind kind) {
  const Tensor<Real> &xv = x.value();
  Tensor<Real> y(xv.shape());
  const std::size_t n = xv.size();
  switch (kind) {
    case ActivationKind::kRelu:
      for (std::size_t i = 0; i < n; ++i) y[i] = xv[i] > 0 ? xv[i] : Real(0);
      break;
    case ActivationKind::kSigmoid:
      for (std::size_t i = 0; i < n; ++i) {
        // Split by sign so exp never overflows.
        const Real v = xv[i];
        if (v >= 0) {
          y[i] = Real(1) / (Real(1) + std::exp(-v));
        } else {
          const Real e = std::exp(v);
          y[i] = e / (Real(1) + e);
        }
      }
      break;
    case ActivationKind::kTanh:
      for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(xv[i]);
      break;
  }
  const int xid = x.id();
  return x.tape()->Record(std::move(y), {x}, [xid, kind](Tape<Real> &t, int self) {
    const Tensor<Real> &g = t.grad(self);
    const Tensor<Real> &y = t.value(self);
    Tensor<Real> &gx = t.GradSink(xid);
    const std::size_t n = y.size();
    switch (kind) {
      case ActivationKind::kRelu:
        for (std::size_t i = 0; i < n; ++i) gx[i] += y[i] > 0 ? g[i] : Real(0);
        break;
      case ActivationKind::kSigmoid:
        for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * y[i] * (1 - y[i]);
        break;
      case ActivationKind::kTanh:
        for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * (1 - y[i] * y[i]);
        break;
    }
  });
}

template <typename Real>
Var<Real> Linear(const Var<Real> &x, const Var<Real> &weight,
                 const std::optional<Var<Real>> &bias) {
  const Tensor<Real> &xv = x.value();
  const Tensor<Real> &wv = weight.value();
  if (xv.rank() != 2 || wv.rank() != 2)
    AVSR_ERR("linear: expected 2D input and weight, got "
             << ShapeString(xv.shape()) << " and " << ShapeString(wv.shape()));
  const int N = xv.dim(0), in = xv.dim(1), out = wv.dim(0);
  if (wv.dim(1) != in)
    AVSR_ERR("linear: input width " << in << " does not match weight "
                                    << ShapeString(wv.shape()));
  if (bias && bias->value().shape() != Shape{out})
    AVSR_ERR("linear: bias shape " << ShapeString(bias->shape())
                                   << " does not match " << out << " outputs");
  Tensor<Real> y(Shape{N, out});
  MatMap<Real> Y(y.data(), N, out);
  Y.noalias() = ConstMatMap<Real>(xv.data(), N, in) *
                ConstMatMap<Real>(wv.data(), out, in).transpose();
  if (bias) {
    const Real *b = bias->value().data();
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < out; ++j) y[static_cast<std::size_t>(i) * out + j] += b[j];
  }
  std::vector<Var<Real>> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  const int xid = x.id(), wid = weight.id(), bid = bias ? bias->id() : -1;
  return x.tape()->Record(
      std::move(y), inputs, [=](Tape<Real> &t, int self) {
        ConstMatMap<Real> G(t.grad(self).data(), N, out);
        if (t.requires_grad(xid)) {
          MatMap<Real> GX(t.GradSink(xid).data(), N, in);
          GX.noalias() += G * ConstMatMap<Real>(t.value(wid).data(), out, in);
        }
        if (t.requires_grad(wid)) {
          MatMap<Real> GW(t.GradSink(wid).data(), out, in);
          GW.noalias() +=
              G.transpose() * ConstMatMap<Real>(t.value(xid).data(), N, in);
        }
        if (bid >= 0 && t.requires_grad(bid)) {
          Tensor<Real> &gb = t.GradSink(bid);
          for (int i = 0; i < N; ++i)
            for (int j = 0; j < out; ++j) gb[j] += G(i, j);
        }
      });
}

template <typename Real>
Var<Real> Add(const Var<Real> &a, const Var<Real> &b) {
  CheckSameShape(a.shape(), b.shape(), "add");
  Tensor<Real> y = a.value();
  const Tensor<Real> &bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  const int aid = a.id(), bid = b.id();
  return a.tape()->Record(std::move(y), {a, b}, [aid, bid](Tape<Real> &t, int self) {
    const Tensor<Real> &g = t.grad(self);
    for (int id : {aid, bid}) {
      if (!t.requires_grad(id)) continue;
      Tensor<Real> &gi = t.GradSink(id);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

template <typename Real>
Var<Real> Sub(const Var<Real> &a, const Var<Real> &b) {
  CheckSameShape(a.shape(), b.shape(), "sub");
  Tensor<Real> y = a.value();
  const Tensor<Real> &bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  const int aid = a.id(), bid = b.id();
  return a.tape()->Record(std::move(y), {a, b}, [aid, bid](Tape<Real> &t, int self) {
    const Tensor<Real> &g = t.grad(self);
    if (t.requires_grad(aid)) {
      Tensor<Real> &ga = t.GradSink(aid);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(bid)) {
      Tensor<Real> &gb = t.GradSink(bid);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

template <typename Real>
Var<Real> Mul(const Var<Real> &a, const Var<Real> &b) {
  CheckSameShape(a.shape(), b.shape(), "mul");
  Tensor<Real> y = a.value();
  const Tensor<Real> &bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  const int aid = a.id(), bid = b.id();
  return a.tape()->Record(std::move(y), {a, b}, [aid, bid](Tape<Real> &t, int self) {
    const Tensor<Real> &g = t.grad(self);
    if (t.requires_grad(aid)) {
      Tensor<Real> &ga = t.GradSink(aid);
      const Tensor<Real> &bv = t.value(bid);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(bid)) {
      Tensor<Real> &gb = t.GradSink(bid);
      const Tensor<Real> &av = t.value(aid);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <typename Real>
Var<Real> Scale(const Var<Real> &a, Real factor) {
  Tensor<Real> y = a.value();
  for (auto &v : y.flat()) v *= factor;
  const int aid = a.id();
  return a.tape()->Record(std::move(y), {a}, [aid, factor](Tape<Real> &t, int self) {
    const Tensor<Real> &g = t.grad(self);
    Tensor<Real> &ga = t.GradSink(aid);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

template <typename Real>
Var<Real> AdaptiveAvgPool(const Var<Real> &x, int target) {
  const Tensor<Real> &xv = x.value();
  if (xv.rank() < 1) AVSR_ERR("adaptive pool: scalar input");
  const int L = xv.dim(-1);
  if (target < 1) AVSR_ERR("adaptive pool: target length must be >= 1");
  if (L < target)
    AVSR_ERR("adaptive pool: input length " << L << " is shorter than target "
                                            << target);
  const std::int64_t rows = static_cast<std::int64_t>(xv.size()) / L;
  Shape out_shape = xv.shape();
  out_shape.back() = target;
  Tensor<Real> y(out_shape);
  std::vector<int> bounds(target + 1);
  for (int i = 0; i <= target; ++i)
    bounds[i] = static_cast<int>(static_cast<std::int64_t>(i) * L / target);
  for (std::int64_t r = 0; r < rows; ++r) {
    const Real *src = xv.data() + r * L;
    Real *dst = y.data() + r * target;
    for (int i = 0; i < target; ++i) {
      Real s = 0;
      for (int j = bounds[i]; j < bounds[i + 1]; ++j) s += src[j];
      dst[i] = s / static_cast<Real>(bounds[i + 1] - bounds[i]);
    }
  }
  const int xid = x.id();
  return x.tape()->Record(
      std::move(y), {x},
      [xid, rows, L, target, bounds = std::move(bounds)](Tape<Real> &t, int self) {
        const Tensor<Real> &g = t.grad(self);
        Tensor<Real> &gx = t.GradSink(xid);
        for (std::int64_t r = 0; r < rows; ++r)
          for (int i = 0; i < target; ++i) {
            const Real v =
                g[r * target + i] / static_cast<Real>(bounds[i + 1] - bounds[i]);
            for (int j = bounds[i]; j < bounds[i + 1]; ++j) gx[r * L + j] += v;
          }
      });
}

template <typename Real>
Var<Real> Reshape(const Var<Real> &x, const Shape &shape) {
  Tensor<Real> y = x.value().Reshaped(shape);
  const int xid = x.id();
  return x.tape()->Record(std::move(y), {x}, [xid](Tape<Real> &t, int self) {
    const Tensor<Real> &g = t.grad(self);
    Tensor<Real> &gx = t.GradSink(xid);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

namespace {

// Visits (input offset, output offset) pairs of a permutation in output
// order, in runs of `run` contiguous elements.
template <typename F>
void ForEachPermuted(const Shape &in_shape, const std::vector<int> &axes, F f) {
  const int r = static_cast<int>(in_shape.size());
  std::vector<std::int64_t> in_stride(r, 1);
  for (int i = r - 2; i >= 0; --i) in_stride[i] = in_stride[i + 1] * in_shape[i + 1];
  Shape out_shape(r);
  std::vector<std::int64_t> step(r);
  for (int i = 0; i < r; ++i) {
    out_shape[i] = in_shape[axes[i]];
    step[i] = in_stride[axes[i]];
  }
  // Innermost output axis moves through the input with stride step[r-1];
  // when that is 1 we can copy runs.
  const int inner = out_shape[r - 1];
  const std::int64_t inner_step = step[r - 1];
  const std::int64_t outer = NumElements(out_shape) / inner;
  std::vector<int> idx(r, 0);
  std::int64_t out_off = 0;
  for (std::int64_t o = 0; o < outer; ++o) {
    std::int64_t in_off = 0;
    for (int i = 0; i < r - 1; ++i) in_off += idx[i] * step[i];
    f(in_off, inner_step, out_off, inner);
    out_off += inner;
    for (int i = r - 2; i >= 0; --i) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
}

}  // namespace

template <typename Real>
Var<Real> Permute(const Var<Real> &x, const std::vector<int> &axes) {
  const Tensor<Real> &xv = x.value();
  const int r = xv.rank();
  if (static_cast<int>(axes.size()) != r)
    AVSR_ERR("permute: " << axes.size() << " axes for rank " << r);
  std::vector<int> seen(r, 0);
  for (int a : axes) {
    if (a < 0 || a >= r || seen[a]++)
      AVSR_ERR("permute: axes are not a permutation of 0.." << r - 1);
  }
  Shape out_shape(r);
  for (int i = 0; i < r; ++i) out_shape[i] = xv.dim(axes[i]);
  Tensor<Real> y(out_shape);
  const Real *src = xv.data();
  Real *dst = y.data();
  ForEachPermuted(xv.shape(), axes,
                  [&](std::int64_t in_off, std::int64_t st, std::int64_t out_off, int n) {
                    for (int i = 0; i < n; ++i) dst[out_off + i] = src[in_off + i * st];
                  });
  const int xid = x.id();
  Shape in_shape = xv.shape();
  return x.tape()->Record(
      std::move(y), {x}, [xid, axes, in_shape](Tape<Real> &t, int self) {
        const Real *g = t.grad(self).data();
        Real *gx = t.GradSink(xid).data();
        ForEachPermuted(in_shape, axes,
                        [&](std::int64_t in_off, std::int64_t st,
                            std::int64_t out_off, int n) {
                          for (int i = 0; i < n; ++i) gx[in_off + i * st] += g[out_off + i];
                        });
      });
}

template <typename Real>
Var<Real> Concat(const std::vector<Var<Real>> &parts, int axis) {
  if (parts.empty()) AVSR_ERR("concat: no inputs");
  const Shape &s0 = parts[0].shape();
  const int r = static_cast<int>(s0.size());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) AVSR_ERR("concat: axis " << axis << " out of range");
  Shape out_shape = s0;
  out_shape[a] = 0;
  for (const auto &p : parts) {
    const Shape &s = p.shape();
    if (static_cast<int>(s.size()) != r)
      AVSR_ERR("concat: rank mismatch " << ShapeString(s) << " vs "
                                        << ShapeString(s0));
    for (int i = 0; i < r; ++i)
      if (i != a && s[i] != s0[i])
        AVSR_ERR("concat: dimension " << i << " differs: " << ShapeString(s)
                                      << " vs " << ShapeString(s0));
    out_shape[a] += s[a];
  }
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < a; ++i) outer *= s0[i];
  for (int i = a + 1; i < r; ++i) inner *= s0[i];
  Tensor<Real> y(out_shape);
  const std::int64_t row = out_shape[a] * inner;
  std::vector<std::int64_t> widths, offsets;
  std::int64_t off = 0;
  for (const auto &p : parts) {
    const std::int64_t w = p.shape()[a] * inner;
    widths.push_back(w);
    offsets.push_back(off);
    const Real *src = p.value().data();
    for (std::int64_t o = 0; o < outer; ++o)
      std::copy(src + o * w, src + (o + 1) * w, y.data() + o * row + off);
    off += w;
  }
  std::vector<int> ids;
  for (const auto &p : parts) ids.push_back(p.id());
  return parts[0].tape()->Record(
      std::move(y), parts,
      [=](Tape<Real> &t, int self) {
        const Real *g = t.grad(self).data();
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (!t.requires_grad(ids[k])) continue;
          Real *gp = t.GradSink(ids[k]).data();
          const std::int64_t w = widths[k];
          for (std::int64_t o = 0; o < outer; ++o)
            for (std::int64_t i = 0; i < w; ++i)
              gp[o * w + i] += g[o * row + offsets[k] + i];
        }
      });
}

template <typename Real>
Var<Real> Select(const Var<Real> &x, int index) {
  const Tensor<Real> &xv = x.value();
  if (xv.rank() < 1) AVSR_ERR("select: scalar input");
  if (index < 0 || index >= xv.dim(0))
    AVSR_ERR("select: index " << index << " out of range for "
                              << ShapeString(xv.shape()));
  Shape out_shape(xv.shape().begin() + 1, xv.shape().end());
  const std::int64_t n = NumElements(out_shape);
  std::vector<Real> data(xv.data() + index * n, xv.data() + (index + 1) * n);
  const int xid = x.id();
  return x.tape()->Record(
      Tensor<Real>(out_shape, std::move(data)), {x},
      [xid, index, n](Tape<Real> &t, int self) {
        const Tensor<Real> &g = t.grad(self);
        Real *gx = t.GradSink(xid).data() + index * n;
        for (std::int64_t i = 0; i < n; ++i) gx[i] += g[i];
      });
}

template <typename Real>
Var<Real> Stack(const std::vector<Var<Real>> &parts) {
  if (parts.empty()) AVSR_ERR("stack: no inputs");
  const Shape &s0 = parts[0].shape();
  for (const auto &p : parts) CheckSameShape(p.shape(), s0, "stack");
  Shape out_shape{static_cast<int>(parts.size())};
  out_shape.insert(out_shape.end(), s0.begin(), s0.end());
  const std::int64_t n = NumElements(s0);
  Tensor<Real> y(out_shape);
  for (std::size_t k = 0; k < parts.size(); ++k)
    std::copy(parts[k].value().data(), parts[k].value().data() + n,
              y.data() + k * n);
  std::vector<int> ids;
  for (const auto &p : parts) ids.push_back(p.id());
  return parts[0].tape()->Record(std::move(y), parts, [ids, n](Tape<Real> &t, int self) {
    const Real *g = t.grad(self).data();
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.requires_grad(ids[k])) continue;
      Real *gp = t.GradSink(ids[k]).data();
      for (std::int64_t i = 0; i < n; ++i) gp[i] += g[k * n + i];
    }
  });
}

template <typename Real>
Var<Real> Sum(const Var<Real> &x) {
  double s = 0;
  for (Real v : x.value().flat()) s += v;
  const int xid = x.id();
  return x.tape()->Record(Tensor<Real>::Scalar(static_cast<Real>(s)), {x},
                          [xid](Tape<Real> &t, int self) {
                            const Real g = t.grad(self)[0];
                            for (auto &v : t.GradSink(xid).flat()) v += g;
                          });
}

template <typename Real>
Var<Real> WeightedSum(const Var<Real> &x, const Tensor<Real> &weights) {
  CheckSameShape(x.shape(), weights.shape(), "weighted sum");
  double s = 0;
  const Tensor<Real> &xv = x.value();
  for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i] * weights[i];
  const int xid = x.id();
  return x.tape()->Record(Tensor<Real>::Scalar(static_cast<Real>(s)), {x},
                          [xid, weights](Tape<Real> &t, int self) {
                            const Real g = t.grad(self)[0];
                            Tensor<Real> &gx = t.GradSink(xid);
                            for (std::size_t i = 0; i < gx.size(); ++i)
                              gx[i] += g * weights[i];
                          });
}

template <typename Real>
Tensor<Real> SoftmaxRows(const Tensor<Real> &logits) {
  if (logits.rank() != 2)
    AVSR_ERR("softmax: expected (N, C), got " << ShapeString(logits.shape()));
  const int N = logits.dim(0), C = logits.dim(1);
  Tensor<Real> p(logits.shape());
  for (int i = 0; i < N; ++i) {
    const Real *z = logits.data() + static_cast<std::int64_t>(i) * C;
    Real *q = p.data() + static_cast<std::int64_t>(i) * C;
    const Real mx = *std::max_element(z, z + C);
    double s = 0;
    for (int c = 0; c < C; ++c) s += std::exp(static_cast<double>(z[c] - mx));
    for (int c = 0; c < C; ++c)
      q[c] = static_cast<Real>(std::exp(static_cast<double>(z[c] - mx)) / s);
  }
  return p;
}

template <typename Real>
LossOutput<Real> SoftmaxCrossEntropy(const Var<Real> &logits,
                                     std::span<const int> labels) {
  const Tensor<Real> &z = logits.value();
  if (z.rank() != 2)
    AVSR_ERR("cross entropy: expected (N, C) logits, got "
             << ShapeString(z.shape()));
  const int N = z.dim(0), C = z.dim(1);
  if (static_cast<int>(labels.size()) != N)
    AVSR_ERR("cross entropy: " << labels.size() << " labels for " << N
                               << " rows");
  double loss = 0;
  for (int i = 0; i < N; ++i) {
    const int y = labels[i];
    if (y < 0 || y >= C)
      AVSR_ERR("cross entropy: label " << y << " out of range for " << C
                                       << " classes");
    const Real *row = z.data() + static_cast<std::int64_t>(i) * C;
    const double mx = *std::max_element(row, row + C);
    double s = 0;
    for (int c = 0; c < C; ++c) s += std::exp(row[c] - mx);
    loss += std::log(s) + mx - row[y];
  }
  LossOutput<Real> out;
  out.probs = SoftmaxRows(z);
  const int lid = logits.id();
  std::vector<int> lab(labels.begin(), labels.end());
  out.loss = logits.tape()->Record(
      Tensor<Real>::Scalar(static_cast<Real>(loss / N)), {logits},
      [lid, lab = std::move(lab), probs = out.probs, N, C](Tape<Real> &t, int self) {
        const Real g = t.grad(self)[0] / static_cast<Real>(N);
        Tensor<Real> &gz = t.GradSink(lid);
        for (int i = 0; i < N; ++i)
          for (int c = 0; c < C; ++c) {
            const std::size_t k = static_cast<std::size_t>(i) * C + c;
            gz[k] += g * (probs[k] - (c == lab[i] ? Real(1) : Real(0)));
          }
      });
  return out;
}

#define AVSR_INSTANTIATE_OPS(Real)                                            \
  template Var<Real> Conv(const Var<Real> &, const Var<Real> &,               \
                          const std::optional<Var<Real>> &,                   \
                          const ConvGeometry &);                              \
  template Var<Real> BatchNorm(const Var<Real> &, const Var<Real> &,          \
                               const Var<Real> &, BatchNormStats<Real> &,     \
                               NormMode);                                     \
  template Var<Real> Activation(const Var<Real> &, ActivationKind);           \
  template Var<Real> Linear(const Var<Real> &, const Var<Real> &,             \
                            const std::optional<Var<Real>> &);                \
  template Var<Real> Add(const Var<Real> &, const Var<Real> &);               \
  template Var<Real> Sub(const Var<Real> &, const Var<Real> &);               \
  template Var<Real> Mul(const Var<Real> &, const Var<Real> &);               \
  template Var<Real> Scale(const Var<Real> &, Real);                          \
  template Var<Real> AdaptiveAvgPool(const Var<Real> &, int);                 \
  template Var<Real> Reshape(const Var<Real> &, const Shape &);               \
  template Var<Real> Permute(const Var<Real> &, const std::vector<int> &);    \
  template Var<Real> Concat(const std::vector<Var<Real>> &, int);             \
  template Var<Real> Select(const Var<Real> &, int);                          \
  template Var<Real> Stack(const std::vector<Var<Real>> &);                   \
  template Var<Real> Sum(const Var<Real> &);                                  \
  template Var<Real> WeightedSum(const Var<Real> &, const Tensor<Real> &);    \
  template LossOutput<Real> SoftmaxCrossEntropy(const Var<Real> &,            \
                                                std::span<const int>);        \
  template Tensor<Real> SoftmaxRows(const Tensor<Real> &);

AVSR_INSTANTIATE_OPS(float)
AVSR_INSTANTIATE_OPS(double)

}  // namespace avsr
