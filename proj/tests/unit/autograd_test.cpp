#include <gtest/gtest.h>

#include <random>

#include "jras/autograd.hpp"
#include "jras/errors.hpp"
#include "test_support.hpp"

namespace jras {
namespace {

using testing::check_gradients;
using testing::random_tensor;

// Scalarises any output with a fixed random projection so every output
// element contributes a distinct weight to the gradient.
ag::Var project(const ag::Var& y, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  const Tensor w = random_tensor(y.shape(), rng);
  return ag::sum(ag::mul(y, ag::constant(w)));
}

class OpGradient : public ::testing::Test {
 protected:
  std::mt19937_64 rng{1234};
  ag::Var leaf(Shape s) { return ag::parameter(random_tensor(std::move(s), rng)); }
};

TEST_F(OpGradient, Elementwise) {
  auto a = leaf({3, 4}), b = leaf({3, 4});
  EXPECT_LT(check_gradients([&] { return project(ag::add(a, b)); }, {a, b}).relative_error, 1e-7);
  EXPECT_LT(check_gradients([&] { return project(ag::sub(a, b)); }, {a, b}).relative_error, 1e-7);
  EXPECT_LT(check_gradients([&] { return project(ag::mul(a, b)); }, {a, b}).relative_error, 1e-7);
  EXPECT_LT(check_gradients([&] { return project(ag::scale(a, -2.5)); }, {a}).relative_error, 1e-7);
  EXPECT_LT(check_gradients([&] { return project(ag::relu(a)); }, {a}).relative_error, 1e-7);
  EXPECT_LT(check_gradients([&] { return ag::mean(ag::mul(a, a)); }, {a}).relative_error, 1e-7);
}

TEST_F(OpGradient, ShapeOps) {
  auto a = leaf({4, 3}), b = leaf({2, 3});
  EXPECT_LT(check_gradients([&] { return project(ag::transpose(a)); }, {a}).relative_error, 1e-7);
  EXPECT_LT(check_gradients([&] { return project(ag::reshape(a, {12})); }, {a}).relative_error, 1e-7);
  EXPECT_LT(check_gradients([&] { return project(ag::concat({a, b})); }, {a, b}).relative_error, 1e-7);
  EXPECT_LT(check_gradients([&] { return project(ag::slice(a, 1, 3)); }, {a}).relative_error, 1e-7);
  auto v = leaf({5});
  EXPECT_LT(check_gradients([&] { return project(ag::gather(v, {4, 0, 4})); }, {v}).relative_error, 1e-7);
}

TEST_F(OpGradient, LinearAlgebra) {
  auto a = leaf({3, 4}), b = leaf({4, 2});
  EXPECT_LT(check_gradients([&] { return project(ag::matmul(a, b)); }, {a, b}).relative_error, 1e-7);
  auto x = leaf({5, 4}), w = leaf({3, 4}), bias = leaf({3});
  EXPECT_LT(check_gradients([&] { return project(ag::linear(x, w, bias)); }, {x, w, bias}).relative_error, 1e-7);
  auto x1 = leaf({4});
  EXPECT_LT(check_gradients([&] { return project(ag::linear(x1, w, ag::Var{})); }, {x1, w}).relative_error, 1e-7);
}

TEST_F(OpGradient, Normalisation) {
  auto v = leaf({6});
  EXPECT_LT(check_gradients([&] { return project(ag::l2_normalize(v)); }, {v}).relative_error, 1e-6);
  EXPECT_LT(check_gradients([&] { return project(ag::softmax(v)); }, {v}).relative_error, 1e-6);
  auto m = leaf({3, 5}), gain = leaf({5}), bias = leaf({5});
  EXPECT_LT(check_gradients([&] { return project(ag::softmax_rows(m)); }, {m}).relative_error, 1e-6);
  EXPECT_LT(check_gradients([&] { return project(ag::layer_norm_rows(m, gain, bias)); }, {m, gain, bias})
                .relative_error,
            1e-6);
}

TEST_F(OpGradient, ImageOps) {
  auto x = leaf({2, 6, 6}), w = leaf({3, 2, 3, 3}), b = leaf({3});
  EXPECT_LT(check_gradients([&] { return project(ag::conv2d(x, w, b, 1, 1)); }, {x, w, b}).relative_error, 1e-7);
  EXPECT_LT(check_gradients([&] { return project(ag::conv2d(x, w, b, 2, 1)); }, {x, w, b}).relative_error, 1e-7);
  auto w1 = leaf({3, 2, 1, 1});
  EXPECT_LT(check_gradients([&] { return project(ag::conv2d(x, w1, ag::Var{}, 1, 0)); }, {x, w1}).relative_error,
            1e-7);
  EXPECT_LT(check_gradients([&] { return project(ag::upsample_nearest(x, 2)); }, {x}).relative_error, 1e-7);
  EXPECT_LT(check_gradients([&] { return project(ag::avg_pool(x, 2)); }, {x}).relative_error, 1e-7);
  EXPECT_LT(check_gradients([&] { return project(ag::global_avg_pool(x)); }, {x}).relative_error, 1e-7);
  auto m = leaf({1, 6, 6});
  EXPECT_LT(check_gradients([&] { return project(ag::mul_channels(x, m)); }, {x, m}).relative_error, 1e-7);
  auto wts = leaf({2});
  const Tensor i0 = random_tensor({2, 3}, rng), i1 = random_tensor({2, 3}, rng);
  EXPECT_LT(check_gradients([&] { return project(ag::weighted_sum(wts, {i0, i1})); }, {wts}).relative_error, 1e-7);
}

TEST(Conv2d, MatchesDirectLoop) {
  std::mt19937_64 rng(5);
  const Tensor x = random_tensor({2, 5, 7}, rng), w = random_tensor({3, 2, 3, 3}, rng), b = random_tensor({3}, rng);
  for (int stride : {1, 2}) {
    const Tensor y = ag::conv2d(ag::constant(x), ag::constant(w), ag::constant(b), stride, 1).value();
    const int ho = (5 + 2 - 3) / stride + 1, wo = (7 + 2 - 3) / stride + 1;
    ASSERT_EQ(y.shape(), (Shape{3, ho, wo}));
    for (int o = 0; o < 3; ++o)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          double acc = b[o];
          for (int c = 0; c < 2; ++c)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int iy = oy * stride - 1 + ky, ix = ox * stride - 1 + kx;
                if (iy >= 0 && iy < 5 && ix >= 0 && ix < 7) acc += w[((o * 2 + c) * 3 + ky) * 3 + kx] * x.at(c, iy, ix);
              }
          EXPECT_NEAR(y.at(o, oy, ox), acc, 1e-12);
        }
  }
}

TEST(Autograd, SharedSubexpressionAccumulates) {
  auto a = ag::parameter(Tensor({1}, 3.0));
  const auto y = ag::mul(a, a);  // reused twice below
  ag::backward(ag::add(y, y));
  EXPECT_DOUBLE_EQ(a.grad()[0], 12.0);
}

TEST(Autograd, NoGradGuardRecordsNothing) {
  auto a = ag::parameter(Tensor({2}, 1.0));
  ag::Var y;
  {
    ag::NoGradGuard guard;
    EXPECT_FALSE(ag::grad_enabled());
    y = ag::scale(a, 2.0);
  }
  EXPECT_TRUE(ag::grad_enabled());
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.node()->inputs.empty());
}

TEST(Autograd, DetachBlocksGradient) {
  auto a = ag::parameter(Tensor({2}, 1.0));
  ag::backward(ag::sum(ag::add(ag::detach(a), ag::constant(Tensor({2}, 1.0)))));
  EXPECT_FALSE(a.has_grad());
}

TEST(Autograd, BackwardCountsCalls) {
  auto a = ag::parameter(Tensor({1}, 1.0));
  const auto before = ag::backward_call_count();
  ag::backward(ag::sum(a));
  ag::backward(ag::sum(a));
  EXPECT_EQ(ag::backward_call_count() - before, 2u);
}

TEST(Autograd, NonScalarRootNeedsSeed) {
  auto a = ag::parameter(Tensor({2}, 1.0));
  EXPECT_THROW(ag::backward(ag::scale(a, 2.0)), ArgumentError);
}

TEST(Autograd, PointwiseOverridePassesOnlyMarkedPixels) {
  auto a = ag::parameter(Tensor({3}, std::vector<double>{0.2, 0.4, 0.6}));
  const auto y = ag::pointwise_override(a, Tensor({3}, std::vector<double>{0.2, 1.0, 0.6}),
                                        Tensor({3}, std::vector<double>{1, 0, 1}));
  EXPECT_DOUBLE_EQ(y.value()[1], 1.0);
  ag::backward(ag::sum(y));
  EXPECT_EQ(a.grad()[0], 1.0);
  EXPECT_EQ(a.grad()[1], 0.0);
  EXPECT_EQ(a.grad()[2], 1.0);
}

TEST(Autograd, ShapeMismatchThrows) {
  auto a = ag::constant(Tensor({2, 3})), b = ag::constant(Tensor({3, 2}));
  EXPECT_THROW(ag::add(a, b), ArgumentError);
  EXPECT_THROW(ag::matmul(a, a), ArgumentError);
  EXPECT_THROW(ag::avg_pool(ag::constant(Tensor({1, 3, 3})), 2), ArgumentError);
}

}  // namespace
}  // namespace jras
