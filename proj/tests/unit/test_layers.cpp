#include <gtest/gtest.h>

#include <cmath>

#include "cdee/layer_stack.hpp"
#include "cdee/layers.hpp"
#include "common/gradcheck.hpp"
#include "common/oracles.hpp"

using namespace cdee;
using namespace cdee::testing;

namespace {

Conv2dLayer<double> random_conv(std::size_t in, std::size_t out, Rng& rng) {
  Conv2dLayer<double> c(in, out);
  for (auto& v : c.kernels.storage()) v = rng.uniform(-1, 1);
  for (auto& v : c.bias.storage()) v = rng.uniform(-1, 1);
  return c;
}

}  // namespace

TEST(Tensor, RejectsZeroDimsAndBadLengths) {
  EXPECT_THROW(Tensor({2, 0, 3}), std::invalid_argument);
  EXPECT_THROW(Tensor({2, 3}, std::vector<float>(5)), std::invalid_argument);
  Tensor t({2, 3}, 1.5f);
  EXPECT_THROW(t.reshape({4}), std::invalid_argument);
  t.reshape({3, 2});
  EXPECT_EQ(t.shape(), (Shape{3, 2}));
}

TEST(Conv2d, MatchesNestedLoopOracle) {
  Rng rng(11);
  for (std::size_t ks : {1u, 3u, 5u}) {
    Conv2dLayer<double> c(3, 4, ks);
    for (auto& v : c.kernels.storage()) v = rng.uniform(-1, 1);
    for (auto& v : c.bias.storage()) v = rng.uniform(-1, 1);
    const TensorD x = random_tensor({2, 7, 5, 3}, rng);
    const TensorD y = conv2d_forward(x, c);
    const TensorD ref = naive_conv(x, c.kernels, c.bias);
    ASSERT_EQ(y.shape(), ref.shape());
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
  }
}

TEST(Conv2d, SinglePixelKernelPicksNeighbours) {
  // A kernel with one active tap at (ky, kx) shifts the image.
  Conv2dLayer<double> c(1, 1, 3);
  c.kernels[0 * 3 + 2] = 1.0;  // ky = 0, kx = 2: reads (y-1, x+1)
  TensorD x({1, 3, 3, 1});
  for (std::size_t i = 0; i < 9; ++i) x[i] = double(i + 1);
  const TensorD y = conv2d_forward(x, c);
  EXPECT_EQ(y.at(0, 1, 1, 0), x.at(0, 0, 2, 0));
  EXPECT_EQ(y.at(0, 2, 0, 0), x.at(0, 1, 1, 0));
  EXPECT_EQ(y.at(0, 0, 0, 0), 0.0);
}

TEST(Conv2d, RejectsChannelMismatch) {
  Rng rng(1);
  const auto c = random_conv(3, 2, rng);
  EXPECT_THROW(conv2d_forward(TensorD({1, 4, 4, 2}), c), std::invalid_argument);
}

TEST(MaxPool, TakesWindowMaximaAndRoutesGradient) {
  TensorD x({1, 4, 4, 1});
  for (std::size_t i = 0; i < 16; ++i) x[i] = double((i * 7) % 16);
  const auto r = maxpool_forward(x, MaxPoolLayer{2, 2});
  ASSERT_EQ(r.output.shape(), (Shape{1, 2, 2, 1}));
  for (std::size_t oy = 0; oy < 2; ++oy)
    for (std::size_t ox = 0; ox < 2; ++ox) {
      double m = -1;
      for (std::size_t dy = 0; dy < 2; ++dy)
        for (std::size_t dx = 0; dx < 2; ++dx)
          m = std::max(m, x.at(0, 2 * oy + dy, 2 * ox + dx, 0));
      EXPECT_EQ(r.output.at(0, oy, ox, 0), m);
    }
  const TensorD g = maxpool_backward(r.indices, TensorD({1, 2, 2, 1}, 1.0));
  double sum = 0;
  for (std::size_t i = 0; i < 16; ++i) {
    sum += g[i];
    if (g[i] != 0) EXPECT_EQ(g[i], 1.0);
  }
  EXPECT_EQ(sum, 4.0);
}

TEST(MaxPool, TieGoesToFirstElement) {
  TensorD x({1, 2, 2, 1}, 3.0);
  const auto r = maxpool_forward(x, MaxPoolLayer{2, 2});
  const TensorD g = maxpool_backward(r.indices, TensorD({1, 1, 1, 1}, 1.0));
  EXPECT_EQ(g[0], 1.0);
  EXPECT_EQ(g[1] + g[2] + g[3], 0.0);
}

TEST(MaxPool, RejectsIndivisibleInput) {
  EXPECT_THROW(maxpool_forward(TensorD({1, 5, 4, 1}), MaxPoolLayer{2, 2}),
               std::invalid_argument);
}

TEST(Dense, MatchesMatrixProduct) {
  Rng rng(5);
  DenseLayer<double> d(4, 3);
  for (auto& v : d.weights.storage()) v = rng.uniform(-1, 1);
  for (auto& v : d.bias.storage()) v = rng.uniform(-1, 1);
  const TensorD x = random_tensor({2, 4}, rng);
  const TensorD y = dense_forward(x, d);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t o = 0; o < 3; ++o) {
      double acc = d.bias[o];
      for (std::size_t i = 0; i < 4; ++i) acc += x.at(n, i) * d.weights.at(i, o);
      EXPECT_NEAR(y.at(n, o), acc, 1e-12);
    }
}

TEST(Activations, SoftmaxRowsSumToOneAndResistOverflow) {
  TensorD z({2, 3}, std::vector<double>{1000, 1001, 1002, -5, 0, 5});
  const TensorD p = softmax(z);
  for (std::size_t r = 0; r < 2; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_TRUE(std::isfinite(p.at(r, c)));
      s += p.at(r, c);
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  EXPECT_NEAR(p.at(0, 2), 1.0 / (1.0 + std::exp(-1.0) + std::exp(-2.0)), 1e-12);
}

TEST(Activations, SigmoidIsStableAtExtremes) {
  const TensorD y = sigmoid(TensorD({3}, std::vector<double>{-800, 0, 800}));
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 0.5);
  EXPECT_EQ(y[2], 1.0);
}

TEST(Upsample, RepeatsPixels) {
  TensorD x({1, 1, 2, 1}, std::vector<double>{1, 2});
  const TensorD y = upsample_forward(x, 2);
  ASSERT_EQ(y.shape(), (Shape{1, 2, 4, 1}));
  EXPECT_EQ(y.storage(), (std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2}));
  const TensorD g = upsample_backward(TensorD(y.shape(), 1.0), 2);
  EXPECT_EQ(g.storage(), (std::vector<double>{4, 4}));
}

TEST(Loss, CrossEntropyValueAndLabelChecks) {
  TensorD z({1, 3}, std::vector<double>{0, 0, 0});
  const std::vector<int> y{1};
  EXPECT_NEAR(sparse_ce_loss<double>(z, y).loss, std::log(3.0), 1e-12);
  const std::vector<int> bad{3};
  EXPECT_THROW(sparse_ce_loss<double>(z, bad), std::invalid_argument);
}

TEST(Loss, GradientsMatchFiniteDifferences) {
  Rng rng(21);
  TensorD z = random_tensor({4, 3}, rng, -2, 2);
  const std::vector<int> y{0, 2, 1, 2};
  const auto ce = sparse_ce_loss<double>(z, y);
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double num = central_difference(&z[i], [&] {
      return sparse_ce_loss<double>(z, y).loss;
    });
    EXPECT_LT(relative_error(ce.grad[i], num), 1e-6);
  }
  TensorD p = random_tensor({2, 5}, rng);
  const TensorD t = random_tensor({2, 5}, rng);
  const auto mse = mse_loss<double>(p, t);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double num = central_difference(&p[i], [&] {
      return mse_loss<double>(p, t).loss;
    });
    EXPECT_LT(relative_error(mse.grad[i], num), 1e-6);
  }
}

TEST(GradientCheck, EveryLayerKind) {
  for (auto& c : layer_kind_cases(2024)) {
    const GradCheck r = check_stack(c.stack, c.input, 7);
    EXPECT_LT(r.max_error, 1e-4) << c.name << ": " << r.worst;
    EXPECT_GT(r.checked, 0u) << c.name;
  }
}

TEST(LayerStack, ShapeChainRejectsIncompatibleLayers) {
  LayerStack<float> s({8, 8, 3});
  s.add(make_conv2d<float>(3, 4)).add(make_maxpool<float>(3));
  EXPECT_THROW(s.shape_chain(), std::invalid_argument);
  LayerStack<float> d({8, 8, 3});
  d.add(make_dense<float>(10, 2));
  EXPECT_THROW(d.shape_chain(), std::invalid_argument);
}

TEST(LayerStack, CopyIsDeepAndCastRoundTrips) {
  Rng rng(3);
  LayerStack<double> s({4, 4, 2});
  s.add(make_conv2d<double>(2, 3)).add(make_activation<double>(LayerKind::relu));
  s.add(make_flatten<double>()).add(make_dense<double>(48, 2));
  randomize_params(s, rng);
  LayerStack<double> copy = s;
  (*copy.params()[0].value)[0] += 1.0;
  EXPECT_NE((*copy.params()[0].value)[0], (*s.params()[0].value)[0]);

  const LayerStack<double> back = s.cast<float>().cast<double>();
  LayerStack<double> b = back;
  auto pa = s.params();
  auto pb = b.params();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (std::size_t j = 0; j < pa[i].value->size(); ++j)
      EXPECT_EQ(static_cast<float>((*pa[i].value)[j]), (*pb[i].value)[j]);
}

TEST(LayerStack, MakeLayerRejectsBadConfig) {
  EXPECT_THROW(make_layer<float>(LayerKind::conv2d, {3, 4}), std::invalid_argument);
  EXPECT_THROW(make_layer<float>(LayerKind::dense, {0, 4}), std::invalid_argument);
  EXPECT_THROW(make_layer<float>(static_cast<LayerKind>(42), {}), std::invalid_argument);
}
