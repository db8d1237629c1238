#include <cmath>
#include <limits>

#include <doctest.h>

#include "error.hpp"
#include "gradcheck_suite.hpp"
#include "nn/grad_check.hpp"
#include "nn/layers.hpp"
#include "nn/losses.hpp"
#include "nn/optim.hpp"

using namespace shaftpose;
using namespace shaftpose::nn;
using doctest::Approx;

TEST_CASE("relu forward and the zero subgradient") {
  Tensor<double> x({1, 1, 1, 3}), y;
  x[0] = -1;
  x[1] = 0;
  x[2] = 2;
  Relu<double> r;
  r.forward(x, y);
  CHECK(y[0] == 0);
  CHECK(y[1] == 0);
  CHECK(y[2] == 2);
  std::fill(y.grads().begin(), y.grads().end(), 1.0);
  r.backward(x, y);
  CHECK(x.grad()[0] == 0);
  CHECK(x.grad()[1] == 0);
  CHECK(x.grad()[2] == 1);
}

TEST_CASE("identity 1x1 convolution copies its input") {
  const int c = 3;
  Conv2d<double> conv(c, c, 1, 1);
  for (int i = 0; i < c; ++i) conv.weight().values()[i * c + i] = 1.0;
  Tensor<double> x({2, 5, 4, c}), y;
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(0.37 * i);
  conv.forward(x, y);
  CHECK(y.shape() == x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("strided same-padded convolution output extents") {
  Conv2d<float> conv(2, 4, 3, 2);
  Tensor<float> x({1, 7, 8, 2}), y;
  conv.forward(x, y);
  CHECK(y.shape() == Shape{1, 4, 4, 4});
  CHECK_THROWS_AS(conv.forward(Tensor<float>({1, 4, 4, 3}), y), Error);
  CHECK_THROWS_AS((Conv2d<float>(2, 2, 5, 1)), Error);
}

TEST_CASE("batchnorm eval mode is a fixed affine map") {
  BatchNorm<double> bn(2);
  Tensor<double> x({4, 3, 3, 2}), y;
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::cos(1.3 * i) * 4 + 1;
  bn.forward(x, y);  // updates running statistics
  bn.set_training(false);
  Tensor<double> one({1, 3, 3, 2}), y1, y2;
  for (std::size_t i = 0; i < one.size(); ++i) one[i] = x[i];
  bn.forward(one, y1);
  bn.forward(x, y2);
  for (std::size_t i = 0; i < one.size(); ++i) CHECK(y1[i] == y2[i]);
  for (int c = 0; c < 2; ++c) {
    const double expect = (one[c] - bn.running_mean()[c]) / std::sqrt(bn.running_var()[c] + 1e-5);
    CHECK(y1[c] == Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("maxpool and concat shapes") {
  MaxPool2<double> pool;
  Tensor<double> x({1, 5, 4, 2}), y;
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i);
  pool.forward(x, y);
  CHECK(y.shape() == Shape{1, 2, 2, 2});
  CHECK(y.at(0, 0, 0, 0) == x.at(0, 1, 1, 0));

  ConcatChannels<double> cat;
  Tensor<double> a({2, 2, 2, 1}, 1.0), b({2, 2, 2, 3}, 2.0), out;
  const Tensor<double>* ins[] = {&a, &b};
  cat.forward(ins, out);
  CHECK(out.shape() == Shape{2, 2, 2, 4});
  CHECK(out.at(1, 1, 1, 0) == 1.0);
  CHECK(out.at(1, 1, 1, 3) == 2.0);
  Tensor<double> bad({2, 3, 2, 1});
  const Tensor<double>* mism[] = {&a, &bad};
  CHECK_THROWS_AS(cat.forward(mism, out), Error);
}

TEST_CASE("softmax cross-entropy values") {
  const std::vector<double> logits{0, 0, 100, -100, 3, 1};
  const std::vector<double> onehot{1, 0, 1, 0, 0, 1};
  const std::vector<std::uint8_t> mask{1, 1, 0};
  std::vector<double> loss(3);
  softmax_cross_entropy<double>(logits, onehot, mask, 2, loss);
  CHECK(loss[0] == Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(loss[1] < 1e-40);
  CHECK(loss[2] == 0.0);
  const std::vector<double> nan{std::numeric_limits<double>::quiet_NaN(), 0};
  std::vector<double> l1(1);
  const std::vector<std::uint8_t> m1{1};
  try {
    softmax_cross_entropy<double>(nan, std::vector<double>{1, 0}, m1, 2, l1);
    FAIL("expected numeric error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNumeric);
  }
}

TEST_CASE("smooth L1 values") {
  CHECK(smooth_l1(0.0) == 0.0);
  CHECK(smooth_l1(0.5) == 0.125);
  CHECK(smooth_l1(-0.5) == 0.125);
  CHECK(smooth_l1(2.0) == 1.5);
  CHECK(smooth_l1(-2.0) == 1.5);
  CHECK(smooth_l1_grad(0.3) == 0.3);
  CHECK(smooth_l1_grad(-4.0) == -1.0);
}

TEST_CASE("polynomial decay schedule") {
  LrSchedule s;
  s.base_lr = 1e-3;
  s.total_steps = 1000;
  CHECK(poly_decay_lr(0, s) == 1e-3);
  CHECK(poly_decay_lr(500, s) == Approx(2.5e-4).epsilon(1e-12));
  CHECK(poly_decay_lr(1000, s) == 0.0);
  CHECK(poly_decay_lr(5000, s) == 0.0);
  double prev = 1;
  for (std::int64_t k = 0; k <= 1000; ++k) {
    const double lr = poly_decay_lr(k, s);
    CHECK(lr <= prev);
    prev = lr;
  }
  CHECK_THROWS_AS(poly_decay_lr(-1, s), Error);
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  Tensor<double> p({1, 1, 1, 4});
  for (std::size_t i = 0; i < 4; ++i) p[i] = 0.1 * i - 0.2;
  const auto before = std::vector<double>(p.values().begin(), p.values().end());
  Tensor<double>* params[] = {&p};
  AdamState<double> st;
  for (int k = 0; k < 10; ++k) adam_step<double>(params, st, 1e-2);
  for (std::size_t i = 0; i < 4; ++i) CHECK(p[i] == before[i]);
}

TEST_CASE("adam: the first step moves each parameter by about lr") {
  Tensor<double> p({1, 1, 1, 3});
  const double g[] = {0.5, -3.0, 1e-3};
  for (int i = 0; i < 3; ++i) p.grad()[i] = g[i];
  Tensor<double>* params[] = {&p};
  AdamState<double> st;
  adam_step<double>(params, st, 1e-3);
  for (int i = 0; i < 3; ++i) CHECK(-p[i] / std::copysign(1.0, g[i]) == Approx(1e-3).epsilon(1e-4));
}

TEST_CASE("adam: identical runs are bit-identical; non-finite gradients are rejected") {
  auto run = [] {
    Tensor<float> p({1, 1, 1, 5}, 0.3f);
    Tensor<float>* params[] = {&p};
    AdamState<float> st;
    for (int k = 0; k < 50; ++k) {
      for (std::size_t i = 0; i < 5; ++i) p.grad()[i] = std::sin(0.7f * k + i) * p[i];
      adam_step<float>(params, st, 1e-2);
    }
    return std::vector<float>(p.values().begin(), p.values().end());
  };
  CHECK(run() == run());

  Tensor<float> p({1, 1, 1, 1});
  p.grad()[0] = std::numeric_limits<float>::infinity();
  Tensor<float>* params[] = {&p};
  AdamState<float> st;
  CHECK_THROWS_AS(adam_step<float>(params, st, 1e-3), Error);
}

TEST_CASE("grad_check oracle on trivial computations") {
  const Computation identity = [](std::span<const double> x, std::span<double> g) {
    if (!g.empty()) g[0] = 1.0;
    return x[0];
  };
  CHECK(grad_check(identity, {0.7}).max_rel_error == 0.0);
  const Computation linear = [](std::span<const double> x, std::span<double> g) {
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      s += (i + 1.5) * x[i];
      if (!g.empty()) g[i] = i + 1.5;
    }
    return s;
  };
  CHECK(grad_check(linear, {0.1, -2, 3, 0.4}).max_rel_error < 1e-10);
  const Computation wrong = [](std::span<const double> x, std::span<double> g) {
    if (!g.empty()) g[0] = 3.0 * x[0];
    return x[0] * x[0];
  };
  CHECK(grad_check(wrong, {1.0}).max_rel_error > 0.3);
}

TEST_CASE("gradient suite: every op within tolerance, each listed once") {
  GradCheckOptions opt;
  opt.trials = 3;
  const auto report = run_grad_checks(opt);
  CHECK(report.passed());
  const auto ops = grad_check_ops();
  REQUIRE(report.entries.size() == ops.size());
  for (std::size_t i = 0; i < ops.size(); ++i) {
    CHECK(report.entries[i].op == ops[i]);
    CHECK(std::count(ops.begin(), ops.end(), ops[i]) == 1);
    CHECK(report.text().find(ops[i]) != std::string::npos);
  }
}

TEST_CASE("gradient suite detects a corrupted backward") {
  GradCheckOptions opt;
  opt.trials = 2;
  opt.inject_fault = "conv3x3_s2";
  const auto report = run_grad_checks(opt);
  CHECK_FALSE(report.passed());
  for (const auto& e : report.entries) CHECK(e.passed() == (e.op != "conv3x3_s2"));
  opt.inject_fault = "no_such_op";
  CHECK_THROWS_AS(run_grad_checks(opt), Error);
}
