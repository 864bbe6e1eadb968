// tests/tensor-test.cc

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>

#include "avsr/grad-check.h"
#include "avsr/ops.h"
#include "test-util.h"

using namespace avsr;
using avsr::testing::MaxAbsDiff;
using avsr::testing::RandomTensor;

namespace {

// Counts window placements by sliding a kernel over the padded input.
int SlidingWindowCount(int in, int k, int stride, int pad) {
  int count = 0;
  for (int start = -pad; start + k <= in + pad; start += stride) ++count;
  return count;
}

// Direct nested-loop convolution over 1-3 spatial dims (lifted to 3).
Tensor<double> ReferenceConv(const Tensor<double> &x, const Tensor<double> &w,
                             const std::vector<int> &stride,
                             const std::vector<int> &pad) {
  const int dims = w.rank() - 2;
  int in[3] = {1, 1, 1}, k[3] = {1, 1, 1}, s[3] = {1, 1, 1}, p[3] = {0, 0, 0},
      o[3] = {1, 1, 1};
  Shape out_shape{x.dim(0), w.dim(0)};
  for (int i = 0; i < dims; ++i) {
    const int j = 3 - dims + i;
    in[j] = x.dim(2 + i);
    k[j] = w.dim(2 + i);
    s[j] = stride[i];
    p[j] = pad[i];
    o[j] = SlidingWindowCount(in[j], k[j], s[j], p[j]);
    out_shape.push_back(o[j]);
  }
  const int N = x.dim(0), C = x.dim(1), CO = w.dim(0);
  Tensor<double> y(out_shape);
  std::size_t idx = 0;
  for (int n = 0; n < N; ++n)
    for (int co = 0; co < CO; ++co)
      for (int a = 0; a < o[0]; ++a)
        for (int b = 0; b < o[1]; ++b)
          for (int c = 0; c < o[2]; ++c, ++idx) {
            double acc = 0;
            for (int ci = 0; ci < C; ++ci)
              for (int u = 0; u < k[0]; ++u)
                for (int v = 0; v < k[1]; ++v)
                  for (int q = 0; q < k[2]; ++q) {
                    const int d0 = a * s[0] - p[0] + u;
                    const int d1 = b * s[1] - p[1] + v;
                    const int d2 = c * s[2] - p[2] + q;
                    if (d0 < 0 || d0 >= in[0] || d1 < 0 || d1 >= in[1] ||
                        d2 < 0 || d2 >= in[2])
                      continue;
                    acc += x[((static_cast<std::size_t>(n) * C + ci) * in[0] + d0) *
                                 in[1] * in[2] +
                             d1 * in[2] + d2] *
                           w[(((static_cast<std::size_t>(co) * C + ci) * k[0] + u) *
                                  k[1] + v) * k[2] + q];
                  }
            y[idx] = acc;
          }
  return y;
}

}  // namespace

TEST_CASE("tensor invariants") {
  Tensor<float> t(Shape{2, 3}, 1.5f);
  CHECK(t.size() == 6);
  CHECK(t.dim(-1) == 3);
  CHECK_THROWS(Tensor<float>(Shape{2, 0}));
  CHECK_THROWS(Tensor<float>(Shape{2, 2}, std::vector<float>(3)));
  CHECK_THROWS(t.Reshape(Shape{4}));
  t.Reshape(Shape{3, 2});
  CHECK(t.shape() == Shape{3, 2});
  CHECK(Tensor<float>::Scalar(2).size() == 1);
}

TEST_CASE("conv output length matches sliding-window oracle on random shapes") {
  Rng rng(11);
  int cases = 0;
  for (int i = 0; i < 1200; ++i) {
    const int dims = UniformInt(rng, 1, 3);
    Shape xs{UniformInt(rng, 1, 2), UniformInt(rng, 1, 3)};
    Shape ks{UniformInt(rng, 1, 3), xs[1]};
    std::vector<int> stride, pad;
    for (int d = 0; d < dims; ++d) {
      xs.push_back(UniformInt(rng, 1, dims == 1 ? 40 : 9));
      pad.push_back(UniformInt(rng, 0, 2));
      ks.push_back(UniformInt(rng, 1, xs.back() + 2 * pad.back()));
      stride.push_back(UniformInt(rng, 1, 3));
    }
    Tape<double> tape;
    auto x = tape.Constant(Tensor<double>(xs));
    auto w = tape.Constant(Tensor<double>(ks));
    auto y = Conv(x, w, {}, ConvGeometry{stride, pad});
    for (int d = 0; d < dims; ++d) {
      REQUIRE(y.dim(2 + d) ==
              SlidingWindowCount(xs[2 + d], ks[2 + d], stride[d], pad[d]));
    }
    ++cases;
  }
  CHECK(cases >= 1000);
}

TEST_CASE("conv values match direct convolution") {
  Rng rng(12);
  for (int i = 0; i < 150; ++i) {
    const int dims = UniformInt(rng, 1, 3);
    Shape xs{UniformInt(rng, 1, 3), UniformInt(rng, 1, 3)};
    Shape ks{UniformInt(rng, 1, 4), xs[1]};
    std::vector<int> stride, pad;
    for (int d = 0; d < dims; ++d) {
      xs.push_back(UniformInt(rng, 2, dims == 1 ? 30 : 7));
      pad.push_back(UniformInt(rng, 0, 2));
      ks.push_back(UniformInt(rng, 1, std::min(5, xs.back() + 2 * pad.back())));
      stride.push_back(UniformInt(rng, 1, 2));
    }
    auto xv = RandomTensor<double>(xs, rng);
    auto wv = RandomTensor<double>(ks, rng);
    Tape<double> tape;
    auto y = Conv(tape.Constant(xv), tape.Constant(wv), {},
                  ConvGeometry{stride, pad});
    REQUIRE(MaxAbsDiff(y.value(), ReferenceConv(xv, wv, stride, pad)) < 1e-10);
  }
}

TEST_CASE("conv examples") {
  Tape<float> tape;
  auto x = tape.Constant(Tensor<float>(Shape{1, 1, 100}));
  auto w = tape.Constant(Tensor<float>(Shape{1, 1, 5}));
  CHECK(Conv(x, w, {}, ConvGeometry{{2}, {0}}).dim(2) == 48);

  auto wave = tape.Constant(Tensor<float>(Shape{1, 1, 18560}));
  auto w80 = tape.Constant(Tensor<float>(Shape{1, 1, 80}));
  CHECK(Conv(wave, w80, {}, ConvGeometry{{4}, {0}}).dim(2) == 4621);

  // Identity delta kernel per channel, padding preserving size.
  Rng rng(3);
  auto img = RandomTensor<float>(Shape{2, 3, 6, 5}, rng);
  Tensor<float> delta(Shape{3, 3, 3, 3});
  for (int c = 0; c < 3; ++c) delta.at({c, c, 1, 1}) = 1;
  auto y = Conv(tape.Constant(img), tape.Constant(delta), {},
                ConvGeometry{{1}, {1}});
  CHECK(y.value() == img);
}

TEST_CASE("conv rejects bad shapes with the offending dimension") {
  Tape<float> tape;
  auto x = tape.Constant(Tensor<float>(Shape{1, 2, 10}));
  auto wrong_c = tape.Constant(Tensor<float>(Shape{1, 3, 3}));
  CHECK_THROWS_WITH(Conv(x, wrong_c, {}, ConvGeometry{}),
                    doctest::Contains("dimension 1"));
  auto too_big = tape.Constant(Tensor<float>(Shape{1, 2, 13}));
  CHECK_THROWS_WITH(Conv(x, too_big, {}, ConvGeometry{{1}, {1}}),
                    doctest::Contains("spatial dim 0"));
}

TEST_CASE("batch norm") {
  Rng rng(5);
  auto xv = RandomTensor<double>(Shape{4, 3, 10}, rng, 3.0);
  for (auto &v : xv.flat()) v += 7;
  Tape<double> tape;
  BatchNormStats<double> stats(3);
  auto x = tape.Constant(xv);
  auto y = BatchNorm(x, tape.Constant(Tensor<double>(Shape{3}, 1.0)),
                     tape.Constant(Tensor<double>(Shape{3}, 0.0)), stats,
                     NormMode::kTrain);
  for (int c = 0; c < 3; ++c) {
    double s = 0, ss = 0;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 10; ++i) s += y.value().at({n, c, i});
    const double mean = s / 40;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 10; ++i) ss += std::pow(y.value().at({n, c, i}) - mean, 2);
    CHECK(std::abs(mean) < 1e-4);
    CHECK(std::abs(ss / 40 - 1) < 1e-4);
  }
  // Running statistics moved towards the batch statistics.
  CHECK(stats.running_mean[0] > 0.1);

  // gamma=2, beta=3 on the standardized output.
  BatchNormStats<double> stats2(3);
  auto z = BatchNorm(y, tape.Constant(Tensor<double>(Shape{3}, 2.0)),
                     tape.Constant(Tensor<double>(Shape{3}, 3.0)), stats2,
                     NormMode::kTrain);
  double s = 0, ss = 0;
  for (double v : z.value().flat()) s += v;
  const double mean = s / z.value().size();
  for (double v : z.value().flat()) ss += (v - mean) * (v - mean);
  CHECK(mean == doctest::Approx(3).epsilon(1e-4));
  CHECK(std::sqrt(ss / z.value().size()) == doctest::Approx(2).epsilon(1e-4));

  // Eval mode is a pure function of the running statistics.
  auto before = stats.running_mean;
  auto e1 = BatchNorm(x, tape.Constant(Tensor<double>(Shape{3}, 1.0)),
                      tape.Constant(Tensor<double>(Shape{3}, 0.0)), stats,
                      NormMode::kEval);
  auto e2 = BatchNorm(x, tape.Constant(Tensor<double>(Shape{3}, 1.0)),
                      tape.Constant(Tensor<double>(Shape{3}, 0.0)), stats,
                      NormMode::kEval);
  CHECK(e1.value() == e2.value());
  CHECK(stats.running_mean == before);

  auto single = tape.Constant(Tensor<double>(Shape{1, 3}));
  CHECK_THROWS(BatchNorm(single, tape.Constant(Tensor<double>(Shape{3}, 1.0)),
                         tape.Constant(Tensor<double>(Shape{3}, 0.0)), stats,
                         NormMode::kTrain));
}

TEST_CASE("activations") {
  Tape<float> tape;
  auto x = tape.Constant(Tensor<float>(Shape{3}, {-1, 0, 2}));
  CHECK(Relu(x).value() == Tensor<float>(Shape{3}, {0, 0, 2}));
  auto zero = tape.Constant(Tensor<float>(Shape{1}));
  CHECK(Sigmoid(zero).value()[0] == 0.5f);
  CHECK(Tanh(zero).value()[0] == 0.0f);
  auto big = tape.Constant(Tensor<float>(Shape{2}, {-1000, 1000}));
  CHECK(Sigmoid(big).value().AllFinite());
}

TEST_CASE("linear") {
  Tape<float> tape;
  auto x = tape.Constant(Tensor<float>(Shape{1, 2}, {1, 2}));
  auto w = tape.Constant(Tensor<float>(Shape{2, 2}, {1, 0, 1, 1}));
  auto b = tape.Constant(Tensor<float>(Shape{2}, {0, 1}));
  CHECK(Linear(x, w, {b}).value() == Tensor<float>(Shape{1, 2}, {1, 4}));
  auto eye = tape.Constant(Tensor<float>(Shape{2, 2}, {1, 0, 0, 1}));
  auto zb = tape.Constant(Tensor<float>(Shape{2}));
  CHECK(Linear(x, eye, {zb}).value() == x.value());
  auto bad = tape.Constant(Tensor<float>(Shape{2, 3}));
  CHECK_THROWS(Linear(x, bad, {}));
}

TEST_CASE("adaptive average pooling") {
  Tape<double> tape;
  Rng rng(1);
  auto x29 = tape.Constant(RandomTensor<double>(Shape{2, 3, 29}, rng));
  CHECK(AdaptiveAvgPool(x29, 29).value() == x29.value());

  auto x58 = tape.Constant(RandomTensor<double>(Shape{1, 1, 58}, rng));
  auto p = AdaptiveAvgPool(x58, 29);
  for (int i = 0; i < 29; ++i)
    CHECK(p.value()[i] ==
          doctest::Approx((x58.value()[2 * i] + x58.value()[2 * i + 1]) / 2));

  // 4621 -> 29: windows of 159 or 160 that tile the input exactly.  The
  // oracle pools a ramp, whose window means are the window midpoints.
  Tensor<double> ramp(Shape{1, 1, 4621});
  for (int i = 0; i < 4621; ++i) ramp[i] = i;
  auto pooled = AdaptiveAvgPool(tape.Constant(ramp), 29);
  int total = 0, prev_end = 0;
  for (int i = 0; i < 29; ++i) {
    const int start = i * 4621 / 29, end = (i + 1) * 4621 / 29;
    CHECK(start == prev_end);
    CHECK((end - start == 159 || end - start == 160));
    CHECK(pooled.value()[i] == doctest::Approx((start + end - 1) / 2.0));
    total += end - start;
    prev_end = end;
  }
  CHECK(total == 4621);
  CHECK_THROWS(AdaptiveAvgPool(tape.Constant(Tensor<double>(Shape{1, 1, 20})), 29));
}

TEST_CASE("softmax cross entropy") {
  Tape<double> tape;
  auto uniform = tape.Leaf(Tensor<double>(Shape{1, 5}));
  const int label[] = {2};
  auto out = SoftmaxCrossEntropy(uniform, label);
  CHECK(out.loss.value()[0] == doctest::Approx(std::log(5.0)));
  for (double p : out.probs.flat()) CHECK(p == doctest::Approx(0.2));

  auto extreme = tape.Leaf(Tensor<double>(Shape{1, 2}, {1000, 0}));
  const int l1[] = {1};
  auto e = SoftmaxCrossEntropy(extreme, l1);
  CHECK(std::isfinite(e.loss.value()[0]));
  CHECK(e.loss.value()[0] == doctest::Approx(1000));

  const int bad[] = {5};
  CHECK_THROWS(SoftmaxCrossEntropy(uniform, bad));

  Rng rng(4);
  auto logits = tape.Leaf(RandomTensor<double>(Shape{6, 4}, rng, 3));
  const int labels[] = {0, 1, 2, 3, 1, 0};
  auto r = SoftmaxCrossEntropy(logits, labels);
  for (int i = 0; i < 6; ++i) {
    double s = 0;
    for (int c = 0; c < 4; ++c) s += r.probs.at({i, c});
    CHECK(std::abs(s - 1) < 1e-6);
  }
  tape.Backward(r.loss);
  // Gradient is (probs - one_hot) / N.
  for (int i = 0; i < 6; ++i)
    for (int c = 0; c < 4; ++c)
      CHECK(logits.grad().at({i, c}) ==
            doctest::Approx((r.probs.at({i, c}) - (c == labels[i])) / 6.0));
}

TEST_CASE("backward rules") {
  {
    Tape<double> tape;
    auto x = tape.Leaf(Tensor<double>::Scalar(3));
    tape.Backward(x);
    CHECK(x.grad()[0] == 1);
  }
  {
    Tape<double> tape;
    auto x = tape.Leaf(Tensor<double>(Shape{1}, 3));
    auto y = Add(x, x);
    tape.Backward(y);
    CHECK(x.grad()[0] == 2);
    CHECK_THROWS_WITH(tape.Backward(y), doctest::Contains("twice"));
  }
  {
    Tape<double> tape;
    auto x = tape.Leaf(Tensor<double>(Shape{2}, 1));
    CHECK_THROWS_WITH(tape.Backward(x), doctest::Contains("scalar"));
  }
  {
    // Parameters accumulate across tapes until zeroed.
    Parameter<double> p{Tensor<double>(Shape{2}, 1.0), {}};
    p.ZeroGrad();
    for (int i = 0; i < 2; ++i) {
      Tape<double> tape;
      tape.Backward(Sum(tape.Param(p)));
    }
    CHECK(p.grad[0] == 2);
    // Frozen parameters are constants.
    Tape<double> tape;
    auto frozen = tape.Param(p, false);
    CHECK_FALSE(frozen.requires_grad());
  }
}

TEST_CASE("shape ops round trip gradients") {
  Rng rng(9);
  Parameter<double> a{RandomTensor<double>(Shape{2, 3, 4}, rng), {}};
  Parameter<double> b{RandomTensor<double>(Shape{2, 3, 2}, rng), {}};
  Tensor<double> weights = RandomTensor<double>(Shape{6, 2, 3}, rng);
  auto f = [&](Tape<double> &t) {
    auto x = Concat<double>({t.Param(a), t.Param(b)}, 2);  // (2,3,6)
    auto y = Permute(x, {2, 0, 1});                       // (6,2,3)
    std::vector<Var<double>> rows;
    for (int i = 5; i >= 0; --i) rows.push_back(Select(y, i));
    auto z = Reshape(Stack(rows), Shape{6, 2, 3});
    return WeightedSum(Mul(z, z), weights);
  };
  auto report = CheckGradients<double>(f, {{"a", &a}, {"b", &b}},
                                       {.samples_per_param = 100});
  CHECK_MESSAGE(report.Passed(1e-7), report.worst);
}

TEST_CASE("gradient check of every primitive") {
  Rng rng(21);
  GradCheckOptions opts;
  opts.samples_per_param = 30;
  auto run = [&](const char *what, auto f, auto params) {
    auto report = CheckGradients<double>(f, params, opts);
    INFO(what << ": " << report.worst);
    CHECK(report.Passed(1e-4));
  };

  for (int dims = 1; dims <= 3; ++dims) {
    Shape xs{2, 2}, ks{3, 2};
    for (int d = 0; d < dims; ++d) {
      xs.push_back(dims == 1 ? 11 : 5);
      ks.push_back(3);
    }
    Parameter<double> x{RandomTensor<double>(xs, rng), {}};
    Parameter<double> w{RandomTensor<double>(ks, rng), {}};
    Parameter<double> b{RandomTensor<double>(Shape{3}, rng), {}};
    Tensor<double> probe;
    auto f = [&](Tape<double> &t) {
      auto y = Conv(t.Param(x), t.Param(w), {t.Param(b)},
                    ConvGeometry{{2}, {1}});
      if (probe.null()) probe = RandomTensor<double>(y.shape(), rng);
      return WeightedSum(y, probe);
    };
    run("conv", f, std::vector<std::pair<std::string, Parameter<double> *>>{
                       {"x", &x}, {"w", &w}, {"b", &b}});
  }
  {
    Parameter<double> x{RandomTensor<double>(Shape{3, 4, 5}, rng, 2), {}};
    Parameter<double> g{RandomTensor<double>(Shape{4}, rng), {}};
    Parameter<double> be{RandomTensor<double>(Shape{4}, rng), {}};
    BatchNormStats<double> stats(4);
    Tensor<double> probe = RandomTensor<double>(Shape{3, 4, 5}, rng);
    for (NormMode mode : {NormMode::kTrain, NormMode::kEval}) {
      auto f = [&](Tape<double> &t) {
        return WeightedSum(
            BatchNorm(t.Param(x), t.Param(g), t.Param(be), stats, mode), probe);
      };
      run("batch norm", f, std::vector<std::pair<std::string, Parameter<double> *>>{
                               {"x", &x}, {"gamma", &g}, {"beta", &be}});
    }
  }
  for (ActivationKind kind :
       {ActivationKind::kRelu, ActivationKind::kSigmoid, ActivationKind::kTanh}) {
    Parameter<double> x{RandomTensor<double>(Shape{20}, rng, 2), {}};
    Tensor<double> probe = RandomTensor<double>(Shape{20}, rng);
    auto f = [&](Tape<double> &t) {
      return WeightedSum(Activation(t.Param(x), kind), probe);
    };
    run("activation", f,
        std::vector<std::pair<std::string, Parameter<double> *>>{{"x", &x}});
  }
  {
    Parameter<double> x{RandomTensor<double>(Shape{4, 3}, rng), {}};
    Parameter<double> w{RandomTensor<double>(Shape{5, 3}, rng), {}};
    Parameter<double> b{RandomTensor<double>(Shape{5}, rng), {}};
    const int labels[] = {0, 4, 2, 2};
    auto f = [&](Tape<double> &t) {
      return SoftmaxCrossEntropy(Linear(t.Param(x), t.Param(w), {t.Param(b)}),
                                 labels)
          .loss;
    };
    run("linear+xent", f, std::vector<std::pair<std::string, Parameter<double> *>>{
                              {"x", &x}, {"w", &w}, {"b", &b}});
  }
  {
    Parameter<double> x{RandomTensor<double>(Shape{2, 3, 61}, rng), {}};
    Tensor<double> probe = RandomTensor<double>(Shape{2, 3, 7}, rng);
    auto f = [&](Tape<double> &t) {
      return WeightedSum(AdaptiveAvgPool(t.Param(x), 7), probe);
    };
    run("pool", f, std::vector<std::pair<std::string, Parameter<double> *>>{{"x", &x}});
  }
  {
    Parameter<double> a{RandomTensor<double>(Shape{3, 4}, rng), {}};
    Parameter<double> b{RandomTensor<double>(Shape{3, 4}, rng), {}};
    Tensor<double> probe = RandomTensor<double>(Shape{3, 4}, rng);
    auto f = [&](Tape<double> &t) {
      auto x = t.Param(a), y = t.Param(b);
      return WeightedSum(Scale(Sub(Mul(x, y), Add(x, y)), 0.5), probe);
    };
    run("elementwise", f, std::vector<std::pair<std::string, Parameter<double> *>>{
                              {"a", &a}, {"b", &b}});
  }
}

TEST_CASE("gradient check: linear function is exact, corrupted rule fails") {
  Rng rng(2);
  Parameter<double> w{RandomTensor<double>(Shape{3}, rng), {}};
  Tensor<double> c = RandomTensor<double>(Shape{3}, rng);
  auto linear = [&](Tape<double> &t) { return WeightedSum(t.Param(w), c); };
  auto report = CheckGradients<double>(linear, {{"w", &w}});
  CHECK(report.max_rel_error < 1e-9);

  // Square with a backward rule that forgets the factor 2.
  auto bad_square = [&](Tape<double> &t) {
    Var<double> x = t.Param(w);
    Tensor<double> y = x.value();
    for (auto &v : y.flat()) v *= v;
    const int xid = x.id();
    Var<double> sq = t.Record(std::move(y), {x}, [xid](Tape<double> &tp, int self) {
      const auto &g = tp.grad(self);
      const auto &xv = tp.value(xid);
      auto &gx = tp.GradSink(xid);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * xv[i];
    });
    return Sum(sq);
  };
  CHECK_FALSE(CheckGradients<double>(bad_square, {{"w", &w}}).Passed(1e-4));
}

TEST_CASE("composite conv-bn-relu-linear-loss gradients") {
  Rng rng(31);
  Parameter<double> x{RandomTensor<double>(Shape{3, 2, 12}, rng), {}};
  Parameter<double> w{RandomTensor<double>(Shape{4, 2, 3}, rng), {}};
  Parameter<double> g{RandomTensor<double>(Shape{4}, rng), {}};
  Parameter<double> b{RandomTensor<double>(Shape{4}, rng), {}};
  Parameter<double> lw{RandomTensor<double>(Shape{5, 4 * 5}, rng), {}};
  Parameter<double> lb{RandomTensor<double>(Shape{5}, rng), {}};
  BatchNormStats<double> stats(4);
  const int labels[] = {1, 3, 4};
  auto f = [&](Tape<double> &t) {
    auto y = Conv(t.Param(x), t.Param(w), {}, ConvGeometry{{2}, {0}});
    y = Relu(BatchNorm(y, t.Param(g), t.Param(b), stats, NormMode::kTrain));
    y = Reshape(y, Shape{3, 20});
    return SoftmaxCrossEntropy(Linear(y, t.Param(lw), {t.Param(lb)}), labels).loss;
  };
  auto report = CheckGradients<double>(
      f, {{"x", &x}, {"w", &w}, {"gamma", &g}, {"beta", &b}, {"lw", &lw}, {"lb", &lb}},
      {.samples_per_param = 40});
  CHECK_MESSAGE(report.Passed(1e-5), report.worst);
}
