#include <gtest/gtest.h>

#include <cmath>

#include "convdial/tensor/gradcheck.hpp"
#include "convdial/tensor/nn.hpp"
#include "convdial/tensor/ops.hpp"
#include "convdial/tensor/optim.hpp"
#include "convdial/util/error.hpp"

using namespace convdial;

namespace {

Tensor random_tensor(const Shape& shape, Rng& rng, bool requires_grad = true) {
  Tensor t(shape, rng.normal_vector(shape_numel(shape)), requires_grad);
  return t;
}

// Weighted sum so every output element carries a distinct gradient.
Tensor probe_loss(const Tensor& y, const Tensor& w) { return sum(mul(y, w)); }

}  // namespace

TEST(Tensor, SumOfSquaresGradient) {
  Tensor x({2}, {1.0, 2.0}, true);
  backward(sum(square(x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 4.0);
}

TEST(Tensor, UnusedParameterGetsZeroGradient) {
  Tensor x({2}, {1.0, 2.0}, true);
  Tensor p({3}, {1.0, 1.0, 1.0}, true);
  backward(sum(x));
  for (double g : p.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Tensor, SecondBackwardIsAnError) {
  Tensor x({2}, {1.0, 2.0}, true);
  Tensor loss = sum(square(x));
  backward(loss);
  EXPECT_THROW(backward(loss), StateError);
}

TEST(Tensor, BackwardNeedsScalar) {
  Tensor x({2}, {1.0, 2.0}, true);
  EXPECT_THROW(backward(square(x)), ShapeError);
}

TEST(Tensor, ShapeMismatchThrows) {
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0}), ShapeError);
  EXPECT_THROW(add(Tensor({2}), Tensor({3})), ShapeError);
}

TEST(Tensor, ScalarFactory) {
  Tensor s = Tensor::scalar(3.5);
  EXPECT_EQ(s.numel(), 1u);
  EXPECT_EQ(s.item(), 3.5);
  EXPECT_FALSE(s.requires_grad());
}

TEST(Tensor, ReluGradientAtZeroIsZero) {
  Tensor x({3}, {-1.0, 0.0, 2.0}, true);
  backward(sum(relu(x)));
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_EQ(x.grad()[1], 0.0);
  EXPECT_EQ(x.grad()[2], 1.0);
}

TEST(Layers, IdentityOneByOneConv) {
  Rng rng(1);
  Tensor x = random_tensor({2, 1, 3, 4}, rng, false);
  Tensor w({1, 1, 1, 1}, {1.0});
  Tensor y = conv2d(x, w, Tensor(), {});
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.at(i), x.at(i));
}

TEST(Layers, TwoByTwoOnesConv) {
  Tensor x = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor w = Tensor::full({1, 1, 2, 2}, 1.0);
  Tensor y = conv2d(x, w, Tensor({1}), {});
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  for (double v : y.values()) EXPECT_EQ(v, 4.0);
}

TEST(Layers, BatchNormOnPlusMinusOne) {
  ParameterStore store;
  LayerParams bn = make_batchnorm(store, "bn", 2);
  Tensor x({2, 2, 1, 1}, {-1.0, 1.0, 1.0, -1.0});
  Tensor y = layer_forward(bn, x, Mode::kTrain);
  const double expected = 1.0 / std::sqrt(1.0 + kBatchNormEps);
  EXPECT_NEAR(y.at(0), -expected, 1e-12);
  EXPECT_NEAR(y.at(1), expected, 1e-12);
  EXPECT_NEAR(y.at(2), expected, 1e-12);
  EXPECT_NEAR(y.at(3), -expected, 1e-12);
}

TEST(Layers, BatchNormRunningStatsMomentum) {
  ParameterStore store;
  LayerParams bn = make_batchnorm(store, "bn", 1);
  Tensor x({4, 1, 1, 1}, {1.0, 2.0, 3.0, 4.0});
  layer_forward(bn, x, Mode::kTrain);
  // batch mean 2.5, unbiased variance 5/3
  EXPECT_NEAR(bn.stats->running_mean.at(0), 0.001 * 2.5, 1e-15);
  EXPECT_NEAR(bn.stats->running_var.at(0), 0.999 + 0.001 * (5.0 / 3.0), 1e-15);
}

TEST(Layers, EvalBatchNormNeedsInitializedStats) {
  ParameterStore store;
  LayerParams bn = make_batchnorm(store, "bn", 1);
  bn.stats->initialized = false;
  Tensor x({1, 1, 1, 1}, {0.5});
  EXPECT_THROW(layer_forward(bn, x, Mode::kEval), StateError);
  EXPECT_NO_THROW(layer_forward(bn, x, Mode::kTrain));
}

TEST(Layers, ConvTransposeRestoresExtent) {
  for (std::size_t in : {4u, 7u, 16u}) {
    for (std::size_t k : {1u, 2u, 3u}) {
      for (std::size_t s : {1u, 2u}) {
        const std::size_t out = conv_out_extent(in, k, s, 0);
        if ((in - k) % s != 0) continue;
        EXPECT_EQ(conv_transpose_out_extent(out, k, s, 0), in);
      }
    }
  }
}

TEST(Layers, ConvTransposeIsAdjoint) {
  Rng rng(7);
  ConvGeometry geo{2, 1, 1, 0};
  Tensor x = random_tensor({2, 3, 5, 4}, rng, false);
  Tensor w = random_tensor({4, 3, 3, 2}, rng, false);
  Tensor y = conv2d(x, w, Tensor(), geo);
  Tensor u = random_tensor(y.shape(), rng, false);
  Tensor v = conv_transpose2d(u, w, Tensor(), geo);
  ASSERT_EQ(v.shape(), x.shape());
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < y.numel(); ++i) lhs += y.at(i) * u.at(i);
  for (std::size_t i = 0; i < x.numel(); ++i) rhs += x.at(i) * v.at(i);
  EXPECT_NEAR(lhs, rhs, 1e-10 * std::abs(lhs));
}

TEST(Layers, MaskBIdentityCentre) {
  Rng rng(3);
  ParameterStore store;
  LayerParams layer = make_masked_conv(store, "ar", 3, 5, MaskType::kB, rng);
  auto w = layer.weight.mutable_values();
  std::fill(w.begin(), w.end(), 0.0);
  for (std::size_t c = 0; c < 3; ++c) w[(c * 3 + c) * 5 + 2] = 1.0;
  Tensor x = random_tensor({1, 3, 1, 9}, rng, false);
  Tensor y = layer_forward(layer, x, Mode::kEval);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.at(i), x.at(i));
}

TEST(Layers, MaskAFirstRowHasNoInputs) {
  Rng rng(4);
  ParameterStore store;
  LayerParams layer = make_masked_conv(store, "ar", 2, 3, MaskType::kA, rng);
  Tensor x = random_tensor({1, 2, 1, 6}, rng, true);
  Tensor y = layer_forward(layer, x, Mode::kEval);
  // loss touches only row 0 of every channel
  std::vector<double> pick(y.numel(), 0.0);
  pick[0] = 1.0;
  pick[6] = 1.0;
  backward(sum(mul(y, Tensor(y.shape(), pick))));
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Layers, MaskedConvFutureRowsDoNotLeak) {
  for (MaskType type : {MaskType::kA, MaskType::kB}) {
    Rng rng(5);
    ParameterStore store;
    LayerParams layer = make_masked_conv(store, "ar", 2, 5, type, rng);
    Tensor x = random_tensor({1, 2, 1, 10}, rng, false);
    Tensor y0 = layer_forward(layer, x, Mode::kEval);
    Tensor x2 = x.detach();
    x2.mutable_values()[5] += 3.0;
    x2.mutable_values()[15] -= 2.0;
    Tensor y1 = layer_forward(layer, x2, Mode::kEval);
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t r = 0; r < 5; ++r) EXPECT_EQ(y0.at(c * 10 + r), y1.at(c * 10 + r));
    }
  }
}

TEST(Layers, NonBinaryMaskRejected) {
  Rng rng(6);
  ParameterStore store;
  LayerParams layer = make_masked_conv(store, "ar", 1, 3, MaskType::kB, rng);
  layer.mask[0] = 0.5;
  EXPECT_THROW(layer_forward(layer, Tensor({1, 1, 1, 4}), Mode::kEval), InvalidArgument);
}

TEST(Layers, EmbeddingRejectsOutOfRangeId) {
  Tensor table({3, 2});
  std::vector<std::int32_t> ids{0, 3};
  EXPECT_THROW(embedding(table, ids, {2}), InvalidArgument);
}

TEST(GradCheck, Conv) {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    ConvGeometry geo{1 + rng.index(2), 1 + rng.index(2), rng.index(2), rng.index(2)};
    Tensor x = random_tensor({2, 2, 5, 6}, rng);
    Tensor w = random_tensor({3, 2, 3, 2}, rng);
    Tensor b = random_tensor({3}, rng);
    Tensor y0 = conv2d(x.detach(), w.detach(), b.detach(), geo);
    Tensor probe = random_tensor(y0.shape(), rng, false);
    auto r = check_gradients([&] { return probe_loss(conv2d(x, w, b, geo), probe); }, {x, w, b});
    EXPECT_LT(r.max_relative_error, 1e-6) << "input " << r.worst_input;
  }
}

TEST(GradCheck, TransposeConv) {
  Rng rng(12);
  ConvGeometry geo{2, 1, 0, 1};
  Tensor x = random_tensor({2, 3, 3, 4}, rng);
  Tensor w = random_tensor({3, 2, 2, 3}, rng);
  Tensor b = random_tensor({2}, rng);
  Tensor probe = random_tensor(conv_transpose2d(x.detach(), w.detach(), b.detach(), geo).shape(), rng, false);
  auto r = check_gradients([&] { return probe_loss(conv_transpose2d(x, w, b, geo), probe); }, {x, w, b});
  EXPECT_LT(r.max_relative_error, 1e-6);
}

TEST(GradCheck, BatchNormTrain) {
  Rng rng(13);
  ParameterStore store;
  LayerParams bn = make_batchnorm(store, "bn", 3);
  kaiming_uniform(bn.weight, 1, rng);
  Tensor x = random_tensor({4, 3, 2, 2}, rng);
  Tensor probe = random_tensor(x.shape(), rng, false);
  auto r = check_gradients([&] { return probe_loss(layer_forward(bn, x, Mode::kTrain), probe); },
                           {x, bn.weight, bn.bias});
  EXPECT_LT(r.max_relative_error, 1e-5);
}

TEST(GradCheck, SoftmaxCrossEntropyAndKl) {
  Rng rng(14);
  Tensor logits = random_tensor({2, 3, 5}, rng);
  std::vector<std::int32_t> targets{0, 4, 2, 1, 1, 3};
  auto r = check_gradients([&] { return sum(softmax_cross_entropy(logits, targets)); }, {logits});
  EXPECT_LT(r.max_relative_error, 1e-6);

  Tensor mq = random_tensor({2, 4}, rng), lq = random_tensor({2, 4}, rng);
  Tensor mp = random_tensor({2, 4}, rng), lp = random_tensor({2, 4}, rng);
  auto rk = check_gradients([&] { return sum(kl_diag_gaussian(mq, lq, mp, lp)); }, {mq, lq, mp, lp});
  EXPECT_LT(rk.max_relative_error, 1e-6);
}

TEST(Kl, ClosedFormExamples) {
  Tensor zero({1, 1}, {0.0});
  EXPECT_NEAR(kl_diag_gaussian(Tensor({1, 1}, {1.0}), zero, zero, zero).item(), 0.5, 1e-15);
  Rng rng(2);
  Tensor m = random_tensor({3, 6}, rng, false), lv = random_tensor({3, 6}, rng, false);
  Tensor kl = kl_diag_gaussian(m, lv, m, lv);
  for (double v : kl.values()) EXPECT_EQ(v, 0.0);
}

TEST(Reparameterize, Basics) {
  Tensor mu({1, 3}, {0.5, -1.0, 2.0}, true);
  Tensor lv({1, 3}, {0.0, 1.0, -2.0}, true);
  Tensor z0 = reparameterize(mu, lv, Tensor({1, 3}));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(z0.at(i), mu.at(i));
  Tensor eps({1, 3}, {0.3, -0.7, 1.1});
  Tensor z = reparameterize(Tensor({1, 3}), Tensor({1, 3}), eps);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(z.at(i), eps.at(i));
  backward(sum(reparameterize(mu, lv, eps)));
  for (double g : mu.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Adam, ZeroGradientLeavesParameter) {
  Tensor p({2}, {1.0, -2.0}, true);
  p.mutable_grad();
  std::vector<Tensor> ps{p};
  AdamState state(ps);
  adam_step(ps, state, {});
  EXPECT_EQ(p.at(0), 1.0);
  EXPECT_EQ(p.at(1), -2.0);
  EXPECT_EQ(state.step, 1u);
}

TEST(Adam, ZeroLearningRateStillMovesMoments) {
  Tensor p({1}, {1.0}, true);
  p.mutable_grad()[0] = 2.0;
  std::vector<Tensor> ps{p};
  AdamState state(ps);
  AdamConfig cfg;
  cfg.lr = 0.0;
  adam_step(ps, state, cfg);
  EXPECT_EQ(p.at(0), 1.0);
  EXPECT_NEAR(state.first_moment[0].at(0), 0.2, 1e-15);
  EXPECT_NEAR(state.second_moment[0].at(0), 0.004, 1e-15);
}

TEST(Adam, SingleStep) {
  Tensor p({1}, {1.0}, true);
  p.mutable_grad()[0] = 1.0;
  std::vector<Tensor> ps{p};
  AdamState state(ps);
  adam_step(ps, state, {});
  // m_hat = 1, v_hat = 1
  EXPECT_NEAR(p.at(0), 1.0 - 1e-3 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, NonFiniteGradientRejected) {
  Tensor p({1}, {1.0}, true);
  p.mutable_grad()[0] = std::nan("");
  std::vector<Tensor> ps{p};
  AdamState state(ps);
  EXPECT_THROW(adam_step(ps, state, {}), NumericError);
  EXPECT_EQ(p.at(0), 1.0);
}

TEST(Determinism, RepeatedForwardBackwardIsBitIdentical) {
  auto run = [] {
    Rng rng(99);
    ParameterStore store;
    ConvBlock block = make_conv_block(store, "b", 2, 3, 3, 3, {1, 1, 1, 1}, rng);
    Tensor x = random_tensor({2, 2, 4, 4}, rng, false);
    backward(sum(square(block.forward(x, Mode::kTrain))));
    std::vector<double> out;
    for (const auto& p : store.parameters()) {
      auto g = p.tensor.grad();
      out.insert(out.end(), g.begin(), g.end());
    }
    return out;
  };
  EXPECT_EQ(run(), run());
}
