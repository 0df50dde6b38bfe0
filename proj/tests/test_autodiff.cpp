#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "del/autodiff.hpp"
#include "del/rng.hpp"
#include "del/tensor.hpp"
#include "support/gradcheck.hpp"

using del::Rng;
using del::Tape;
using del::Tensor;
using del::TensorError;
using del::Var;
using testsupport::fd_gradient;
using testsupport::gradient_relative_error;

namespace {

Tensor random_tensor(Rng& rng, std::vector<std::int64_t> shape, double lo = -3.0,
                     double hi = 3.0) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

/// Checks d(build(x))/dx against central differences; build must return a
/// scalar Var from the leaf it is given.
void expect_gradient_matches(Tensor x,
                             const std::function<Var(Tape&, Var)>& build,
                             double tol = 1e-5) {
  Tape tape;
  const Var leaf = tape.leaf(x);
  const Var loss = build(tape, leaf);
  tape.backward(loss);
  const Tensor analytic = tape.grad(leaf);
  const Tensor fd = fd_gradient(x, [&] {
    Tape t2;
    return build(t2, t2.leaf(x)).value().item();
  });
  EXPECT_LT(gradient_relative_error(analytic, fd), tol);
}

}  // namespace

TEST(TapeForward, ElementwiseValues) {
  Tape tape;
  const Var a = tape.leaf(Tensor({2}, {1.0, -2.0}));
  const Var b = tape.leaf(Tensor({2}, {3.0, 5.0}));
  EXPECT_EQ(tape.add(a, b).value()[0], 4.0);
  EXPECT_EQ(tape.sub(a, b).value()[1], -7.0);
  EXPECT_EQ(tape.mul(a, b).value()[1], -10.0);
  EXPECT_EQ(tape.neg(a).value()[0], -1.0);
  EXPECT_EQ(tape.scale(a, 2.0).value()[1], -4.0);
  EXPECT_EQ(tape.shift(a, 1.5).value()[0], 2.5);
}

TEST(TapeForward, SigmoidAndExp) {
  Tape tape;
  const Var x = tape.leaf(Tensor({3}, {0.0, 2.0, -2.0}));
  const Tensor s = tape.sigmoid(x).value();
  EXPECT_DOUBLE_EQ(s[0], 0.5);
  EXPECT_NEAR(s[1], 0.8807970779778823, 1e-15);
  EXPECT_NEAR(s[1] + s[2], 1.0, 1e-15);
  const Tensor e = tape.exp(x).value();
  EXPECT_DOUBLE_EQ(e[0], 1.0);
  EXPECT_NEAR(e[1], std::exp(2.0), 1e-15);
}

TEST(TapeForward, ExpClampsInsteadOfOverflowing) {
  Tape tape;
  const Var x = tape.leaf(Tensor({2}, {800.0, -800.0}));
  const Tensor e = tape.exp(x).value();
  EXPECT_DOUBLE_EQ(e[0], std::exp(700.0));
  EXPECT_DOUBLE_EQ(e[1], std::exp(-700.0));
}

TEST(TapeForward, ScalarBroadcastsAgainstAnyShape) {
  Tape tape;
  const Var m = tape.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
  const Var s = tape.leaf(Tensor::scalar(10.0));
  EXPECT_EQ(tape.add(m, s).value().at(1, 1), 14.0);
  EXPECT_EQ(tape.add(s, m).value().at(0, 0), 11.0);
  EXPECT_EQ(tape.mul(m, s).value().at(1, 0), 30.0);
}

TEST(TapeForward, RejectsShapeMismatch) {
  Tape tape;
  const Var a = tape.leaf(Tensor({2, 3}));
  const Var b = tape.leaf(Tensor({3, 2}));
  EXPECT_THROW(tape.add(a, b), TensorError);
  EXPECT_THROW(tape.mul(a, b), TensorError);
}

TEST(TapeForward, MinMaxDiffSliceSum) {
  Tape tape;
  const Var a = tape.leaf(Tensor({3}, {1.0, 5.0, 2.0}));
  const Var b = tape.leaf(Tensor({3}, {4.0, 0.0, 2.0}));
  EXPECT_EQ(tape.vmin(a, b).value()[0], 1.0);
  EXPECT_EQ(tape.vmax(a, b).value()[1], 5.0);
  const Tensor d = tape.diff_last(a).value();
  ASSERT_EQ(d.size(), 2);
  EXPECT_EQ(d[0], 4.0);
  EXPECT_EQ(d[1], -3.0);
  EXPECT_EQ(tape.sum_last(a).value().item(), 8.0);
  const Tensor sl = tape.slice_last(a, 1, 3).value();
  ASSERT_EQ(sl.size(), 2);
  EXPECT_EQ(sl[0], 5.0);
  EXPECT_EQ(tape.sum_all(a).value().item(), 8.0);
  EXPECT_NEAR(tape.mean_all(a).value().item(), 8.0 / 3.0, 1e-15);
}

TEST(TapeForward, ReciprocalValues) {
  Tape tape;
  const Var x = tape.leaf(Tensor({2}, {4.0, 0.5}));
  const Tensor r = tape.reciprocal(x).value();
  EXPECT_DOUBLE_EQ(r[0], 0.25);
  EXPECT_DOUBLE_EQ(r[1], 2.0);
}

TEST(TapeForward, SoftmaxCrossEntropyHandValues) {
  Tape tape;
  // Uniform logits over 10 classes: loss is ln 10 regardless of labels.
  const Var uniform = tape.leaf(Tensor({2, 10}));
  const std::vector<int> labels10{3, 7};
  EXPECT_NEAR(tape.softmax_cross_entropy(uniform, labels10).value().item(), std::log(10.0),
              1e-12);
  // Two classes, logits [1, 0], label 0: -ln(e / (e + 1)).
  const Var two = tape.leaf(Tensor({1, 2}, {1.0, 0.0}));
  const std::vector<int> label0{0};
  EXPECT_NEAR(tape.softmax_cross_entropy(two, label0).value().item(),
              -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0)), 1e-12);
}

TEST(TapeForward, SoftmaxCrossEntropyVanishesWithMargin) {
  Tape tape;
  const Var logits = tape.leaf(Tensor({1, 3}, {60.0, 0.0, 0.0}));
  const std::vector<int> labels{0};
  EXPECT_NEAR(tape.softmax_cross_entropy(logits, labels).value().item(), 0.0, 1e-12);
}

TEST(TapeForward, SoftmaxCrossEntropyValidatesLabels) {
  Tape tape;
  const Var logits = tape.leaf(Tensor({1, 3}));
  const std::vector<int> bad{3};
  EXPECT_THROW(tape.softmax_cross_entropy(logits, bad), TensorError);
  const std::vector<int> negative{-1};
  EXPECT_THROW(tape.softmax_cross_entropy(logits, negative), TensorError);
  const std::vector<int> short_batch{0};
  const Var two_rows = tape.leaf(Tensor({2, 3}));
  EXPECT_THROW(tape.softmax_cross_entropy(two_rows, short_batch), TensorError);
}

TEST(TapeBackward, RootMustBeScalar) {
  Tape tape;
  const Var x = tape.leaf(Tensor({3}));
  EXPECT_THROW(tape.backward(x), TensorError);
}

TEST(TapeBackward, SumGivesOnes) {
  Tape tape;
  const Var x = tape.leaf(Tensor({3}, {1, 2, 3}));
  tape.backward(tape.sum_all(x));
  const Tensor g = tape.grad(x);
  for (std::int64_t i = 0; i < 3; ++i) EXPECT_EQ(g[i], 1.0);
}

TEST(TapeBackward, SigmoidDerivativeAtZero) {
  Tape tape;
  const Var x = tape.leaf(Tensor::scalar(0.0));
  tape.backward(tape.sum_all(tape.sigmoid(x)));
  EXPECT_DOUBLE_EQ(tape.grad(x).item(), 0.25);
}

TEST(TapeBackward, AccumulatesOverPaths) {
  Tape tape;
  const Var x = tape.leaf(Tensor({2}, {0.5, -1.0}));
  // y = sum(x*x + x): dy/dx = 2x + 1 exactly.
  tape.backward(tape.sum_all(tape.add(tape.mul(x, x), x)));
  const Tensor g = tape.grad(x);
  EXPECT_DOUBLE_EQ(g[0], 2.0);
  EXPECT_DOUBLE_EQ(g[1], -1.0);
}

TEST(TapeBackward, UnusedLeafGetsZeros) {
  Tape tape;
  const Var used = tape.leaf(Tensor({2}, {1, 2}));
  const Var unused = tape.leaf(Tensor({3}, {1, 2, 3}));
  tape.backward(tape.sum_all(used));
  const Tensor g = tape.grad(unused);
  ASSERT_EQ(g.size(), 3);
  for (std::int64_t i = 0; i < 3; ++i) EXPECT_EQ(g[i], 0.0);
}

TEST(TapeBackward, ScalarBroadcastGradient) {
  Tape tape;
  Tensor tv({2, 3}, {1, 2, 3, 4, 5, 6});
  const Var t = tape.leaf(tv);
  const Var s = tape.leaf(Tensor::scalar(2.0));
  tape.backward(tape.sum_all(tape.mul(t, s)));
  // d/ds sum(t * s) = sum(t); d/dt = s everywhere.
  EXPECT_DOUBLE_EQ(tape.grad(s).item(), 21.0);
  EXPECT_DOUBLE_EQ(tape.grad(t)[4], 2.0);
}

TEST(TapeGradcheck, ElementwiseChain) {
  Rng rng(11);
  expect_gradient_matches(random_tensor(rng, {2, 3}), [](Tape& t, Var x) {
    const Var y = t.mul(t.sigmoid(x), t.exp(t.scale(x, 0.3)));
    return t.sum_all(t.add(y, t.shift(t.neg(x), 0.7)));
  });
}

TEST(TapeGradcheck, ReciprocalChain) {
  Rng rng(12);
  expect_gradient_matches(random_tensor(rng, {4}, 0.5, 3.0), [](Tape& t, Var x) {
    return t.sum_all(t.reciprocal(t.shift(t.mul(x, x), 0.1)));
  });
}

TEST(TapeGradcheck, MinMaxAwayFromTies) {
  Rng rng(13);
  Tensor x = random_tensor(rng, {5});
  // Push values away from the fixed threshold so the FD step cannot cross it.
  for (std::int64_t i = 0; i < x.size(); ++i)
    if (std::abs(x[i]) < 0.05) x[i] += 0.1;
  expect_gradient_matches(x, [](Tape& t, Var v) {
    const Var zero = t.constant(Tensor::zeros({5}));
    return t.sum_all(t.add(t.vmax(v, zero), t.scale(t.vmin(v, zero), 0.5)));
  });
}

TEST(TapeGradcheck, DiffSliceSumChain) {
  Rng rng(14);
  expect_gradient_matches(random_tensor(rng, {2, 5}), [](Tape& t, Var x) {
    const Var d = t.diff_last(x);
    const Var s = t.slice_last(d, 1, 4);
    return t.mean_all(t.mul(s, s));
  });
}

TEST(TapeGradcheck, ReshapePermuteChain) {
  Rng rng(15);
  expect_gradient_matches(random_tensor(rng, {2, 3, 4}), [](Tape& t, Var x) {
    const Var p = t.permute(x, {2, 0, 1});
    const Var r = t.reshape(p, {4, 6});
    return t.sum_all(t.mul(r, r));
  });
}

TEST(TapeGradcheck, ContractBothSides) {
  Rng rng(16);
  Tensor a = random_tensor(rng, {2, 3, 4});
  const Tensor b = random_tensor(rng, {2, 4, 5});
  del::ContractSpec spec;
  spec.shared = {{0, 0}};
  spec.sum = {{2, 1}};

  // Gradient with respect to the first operand.
  expect_gradient_matches(a, [&](Tape& t, Var x) {
    return t.sum_all(t.mul(t.contract(x, t.constant(b), spec),
                           t.constant(Tensor::full({2, 3, 5}, 0.3))));
  });

  // And the second, reusing the same spec.
  Tensor b2 = b;
  Tape tape;
  const Var leaf_b = tape.leaf(b2);
  const Var out = tape.contract(tape.constant(a), leaf_b, spec);
  tape.backward(tape.sum_all(tape.mul(out, tape.constant(Tensor::full({2, 3, 5}, 0.3)))));
  const Tensor analytic = tape.grad(leaf_b);
  const Tensor fd = fd_gradient(b2, [&] {
    Tape t2;
    const Var o = t2.contract(t2.constant(a), t2.leaf(b2), spec);
    return t2.sum_all(t2.mul(o, t2.constant(Tensor::full({2, 3, 5}, 0.3)))).value().item();
  });
  EXPECT_LT(gradient_relative_error(analytic, fd), 1e-5);
}

TEST(TapeGradcheck, MatmulAndOuter) {
  Rng rng(17);
  expect_gradient_matches(random_tensor(rng, {3, 4}), [](Tape& t, Var x) {
    const Var w = t.constant(Tensor::full({4, 2}, 0.25));
    return t.sum_all(t.matmul(x, w));
  });
  expect_gradient_matches(random_tensor(rng, {3}), [](Tape& t, Var x) {
    const Var y = t.constant(Tensor({2}, {0.5, -1.5}));
    const Var o = t.outer(x, y);
    return t.sum_all(t.mul(o, o));
  });
}

TEST(TapeGradcheck, SoftmaxCrossEntropy) {
  Rng rng(18);
  const std::vector<int> labels{2, 0, 4};
  expect_gradient_matches(random_tensor(rng, {3, 5}), [&](Tape& t, Var x) {
    return t.softmax_cross_entropy(x, labels);
  });
}

TEST(TapeGradcheck, VminVmaxBetweenTwoVariables) {
  Rng rng(19);
  Tensor a = random_tensor(rng, {6});
  Tensor b = random_tensor(rng, {6});
  for (std::int64_t i = 0; i < a.size(); ++i)
    if (std::abs(a[i] - b[i]) < 0.05) b[i] += 0.2;
  Tape tape;
  const Var va = tape.leaf(a);
  const Var vb = tape.leaf(b);
  tape.backward(tape.sum_all(tape.add(tape.vmax(va, vb), tape.mul(tape.vmin(va, vb),
                                                                  tape.constant_scalar(2.0)))));
  const Tensor ga = tape.grad(va);
  const Tensor fd = fd_gradient(a, [&] {
    Tape t2;
    const Var x = t2.leaf(a);
    const Var y = t2.leaf(b);
    return t2.sum_all(t2.add(t2.vmax(x, y), t2.mul(t2.vmin(x, y), t2.constant_scalar(2.0))))
        .value()
        .item();
  });
  EXPECT_LT(gradient_relative_error(ga, fd), 1e-5);
}

TEST(TapeGradcheck, RandomCompositeGraphs) {
  Rng rng(20);
  for (int trial = 0; trial < 5; ++trial) {
    const std::int64_t n = 2 + static_cast<std::int64_t>(rng.below(4));
    expect_gradient_matches(random_tensor(rng, {2, n}), [n](Tape& t, Var x) {
      const Var s = t.sigmoid(x);
      const Var e = t.exp(t.scale(x, -0.5));
      const Var mixed = t.add(t.mul(s, e), t.shift(s, 0.25));
      return t.mean_all(t.mul(mixed, mixed));
    });
  }
}
