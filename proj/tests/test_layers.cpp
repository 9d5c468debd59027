#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>

#include "dvk/layers.hpp"
#include "dvk/losses.hpp"
#include "dvk/rng.hpp"
#include "support/gradcheck.hpp"

using namespace dvk;
using dvk::testing::finite_diff_check;
using dvk::testing::inner;
using dvk::testing::random_projection;
using dvk::testing::random_tensor;

namespace {

// Projection-based gradient check of one layer: phi = <G, forward(x)>.
void check_layer_input_grad(Layer& layer, Tensor& x, Rng& rng, double tol = 1e-5,
                            Mode mode = Mode::train) {
  Tensor out = layer.forward(x, mode);
  Tensor g = random_projection(out.shape(), rng);
  Tensor analytic = layer.backward(g);
  auto loss = [&] { return inner(layer.forward(x, mode), g); };
  auto r = finite_diff_check(loss, x.raw(), x.size(), analytic.raw());
  CAPTURE(layer.name());
  CHECK(r.max_rel <= tol);
}

void check_layer_param_grads(Layer& layer, Tensor& x, Rng& rng, double tol = 1e-5,
                             Mode mode = Mode::train) {
  Tensor out = layer.forward(x, mode);
  Tensor g = random_projection(out.shape(), rng);
  layer.backward(g);
  auto loss = [&] { return inner(layer.forward(x, mode), g); };
  for (ParamRef& ref : layer.params()) {
    auto r = finite_diff_check(loss, ref.value->raw(), ref.value->size(), ref.grad->raw());
    CAPTURE(ref.name);
    CHECK(r.max_rel <= tol);
  }
}

}  // namespace

TEST_CASE("conv2d: delta kernel is the identity on the valid region") {
  Rng rng(1);
  Conv2DLayer conv(3, 3, 1, 1);
  conv.weights.at(1, 1, 0, 0) = 1.0;  // centered delta

  Tensor x = random_tensor({5, 5, 1}, rng);
  Tensor y = conv.forward(x, Mode::train);
  REQUIRE(y.shape() == Shape{3, 3, 1});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(y.at(i, j, 0) == x.at(i + 1, j + 1, 0));
}

TEST_CASE("conv2d: all-ones kernel sums the window") {
  Conv2DLayer conv(3, 3, 1, 1);
  conv.weights.fill(1.0);
  Tensor x = Tensor::full({4, 4, 1}, 2.0);
  Tensor y = conv.forward(x, Mode::train);
  REQUIRE(y.shape() == Shape{2, 2, 1});
  for (double v : y.data()) CHECK(v == doctest::Approx(18.0));
}

TEST_CASE("conv2d: table shapes for the first stage") {
  Conv2DLayer conv(3, 3, 1, 8);
  CHECK(conv.weights.size() + conv.bias.size() == 80);
  Tensor x({2, 54, 54, 1});
  CHECK(conv.forward(x, Mode::train).shape() == Shape{2, 52, 52, 8});
}

TEST_CASE("conv2d rejections") {
  CHECK_THROWS_AS(Conv2DLayer(2, 3, 1, 1), ValueError);
  Conv2DLayer conv(5, 5, 1, 1);
  Tensor tiny({3, 3, 1});
  CHECK_THROWS_AS(conv.forward(tiny, Mode::train), ValueError);
  CHECK_THROWS_AS(conv.backward(tiny), ValueError);  // no forward yet
}

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(2);
  for (int trial = 0; trial < 3; ++trial) {
    Conv2DLayer conv(3, 3, 2, 3);
    conv.weights = init_lecun({3, 3, 2, 3}, 18, rng, InitKind::lecun_uniform);
    conv.bias = random_tensor({3}, rng, -0.5, 0.5);
    Tensor x = random_tensor({6, 6, 2}, rng);
    check_layer_input_grad(conv, x, rng, 1e-6);
    check_layer_param_grads(conv, x, rng, 1e-6);
  }
}

TEST_CASE("conv2d: zero upstream gradient produces zero gradients") {
  Rng rng(3);
  Conv2DLayer conv(3, 3, 1, 2);
  conv.weights = random_tensor({3, 3, 1, 2}, rng);
  Tensor x = random_tensor({5, 5, 1}, rng);
  Tensor y = conv.forward(x, Mode::train);
  Tensor gx = conv.backward(Tensor(y.shape()));
  for (double v : gx.data()) CHECK(v == 0.0);
  for (double v : conv.grad_weights.data()) CHECK(v == 0.0);
  for (double v : conv.grad_bias.data()) CHECK(v == 0.0);
}

TEST_CASE("conv2d 1x1 on a single pixel is the scalar chain rule") {
  Conv2DLayer conv(1, 1, 1, 1);
  conv.weights.fill(0.7);
  Tensor x({1, 1, 1}, {3.0});
  conv.forward(x, Mode::train);
  Tensor g({1, 1, 1}, {2.0});
  Tensor gx = conv.backward(g);
  CHECK(conv.grad_weights[0] == 2.0 * 3.0);
  CHECK(conv.grad_bias[0] == 2.0);
  CHECK(gx[0] == 2.0 * 0.7);
}

TEST_CASE("leaky relu") {
  LeakyReLULayer relu(5.5);
  Tensor x({4}, {2.0, -1.0, 0.0, 3.5});
  Tensor y = relu.forward(x, Mode::train);
  CHECK(y[0] == 2.0);
  CHECK(y[1] == -5.5);
  CHECK(y[2] == 0.0);

  Tensor g({4}, {1.0, 1.0, 1.0, 1.0});
  Tensor gx = relu.backward(g);
  CHECK(gx[0] == 1.0);
  CHECK(gx[1] == 5.5);
  CHECK(gx[2] == 1.0);  // subgradient at 0 takes the positive branch

  Rng rng(4);
  Tensor xr = random_tensor({3, 7}, rng);
  check_layer_input_grad(relu, xr, rng);

  CHECK_THROWS_AS(LeakyReLULayer(std::nan("")), ValueError);
}

TEST_CASE("sigmoid") {
  SigmoidLayer sig;
  Tensor x({3}, {0.0, 710.0, -710.0});  // extremes must not overflow
  Tensor y = sig.forward(x, Mode::train);
  CHECK(y[0] == 0.5);
  CHECK(y[1] > 0.0);
  CHECK(y[1] <= 1.0);
  CHECK(y[2] >= 0.0);

  Rng rng(5);
  Tensor xr = random_tensor({2, 6}, rng, -3.0, 3.0);
  check_layer_input_grad(sig, xr, rng);
}

TEST_CASE("softmax") {
  SoftmaxLayer sm;
  SUBCASE("uniform stays uniform, rows sum to one") {
    Tensor x = Tensor::full({2, 5}, 3.25);
    Tensor y = sm.forward(x, Mode::train);
    for (double v : y.data()) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));
  }
  SUBCASE("huge inputs do not overflow") {
    Tensor x({1, 2}, {1000.0, 1000.0});
    Tensor y = sm.forward(x, Mode::train);
    CHECK(y[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(y[1] == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("shift invariance and normalization") {
    Rng rng(6);
    Tensor x = random_tensor({4, 7}, rng, -2.0, 2.0);
    Tensor y = sm.forward(x, Mode::train);
    Tensor shifted = x;
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 7; ++c) shifted.at(r, c) += 17.5;
    Tensor y2 = sm.forward(shifted, Mode::train);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(y[i] - y2[i]) <= 1e-12);
    for (std::size_t r = 0; r < 4; ++r) {
      double row = 0.0;
      for (std::size_t c = 0; c < 7; ++c) row += y.at(r, c);
      CHECK(std::abs(row - 1.0) <= 1e-12);
    }
  }
  SUBCASE("gradient") {
    Rng rng(7);
    Tensor x = random_tensor({3, 5}, rng, -2.0, 2.0);
    check_layer_input_grad(sm, x, rng);
  }
}

TEST_CASE("batchnorm forward statistics") {
  SUBCASE("hand example, eps = 0") {
    BatchNormLayer bn(1, 0.0);
    Tensor x({3, 1}, {1.0, 2.0, 3.0});
    Tensor y = bn.forward(x, Mode::train);
    const double r = std::sqrt(1.5);
    CHECK(y[0] == doctest::Approx(-r).epsilon(1e-12));
    CHECK(y[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(y[2] == doctest::Approx(r).epsilon(1e-12));

    bn.gamma.fill(2.0);
    bn.beta.fill(5.0);
    Tensor y2 = bn.forward(x, Mode::train);
    CHECK(y2[0] == doctest::Approx(5.0 - 2.0 * r).epsilon(1e-12));
    CHECK(y2[1] == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(y2[2] == doctest::Approx(5.0 + 2.0 * r).epsilon(1e-12));
  }
  SUBCASE("constant batch collapses to beta") {
    BatchNormLayer bn(2, 1e-3);
    bn.beta = Tensor({2}, {0.25, -1.5});
    Tensor x = Tensor::full({4, 2}, 7.0);
    Tensor y = bn.forward(x, Mode::train);
    for (std::size_t s = 0; s < 4; ++s) {
      CHECK(y.at(s, 0ul) == doctest::Approx(0.25).epsilon(1e-12));
      CHECK(y.at(s, 1ul) == doctest::Approx(-1.5).epsilon(1e-12));
    }
  }
  SUBCASE("train-mode output mean is beta, std matches the shrunk variance") {
    Rng rng(8);
    BatchNormLayer bn(3, 1e-3);
    bn.gamma = Tensor({3}, {0.5, 2.0, 1.0});
    bn.beta = Tensor({3}, {1.0, -0.5, 0.0});
    Tensor x = random_tensor({6, 4, 4, 3}, rng, -2.0, 5.0);
    Tensor y = bn.forward(x, Mode::train);

    const std::size_t m = 6 * 4 * 4;
    for (std::size_t ch = 0; ch < 3; ++ch) {
      double mean = 0.0;
      for (std::size_t pos = 0; pos < m; ++pos) mean += y[pos * 3 + ch];
      mean /= double(m);
      CHECK(std::abs(mean - bn.beta[ch]) <= 1e-9);

      double xm = 0.0, var_in = 0.0, var_out = 0.0;
      for (std::size_t pos = 0; pos < m; ++pos) xm += x[pos * 3 + ch];
      xm /= double(m);
      for (std::size_t pos = 0; pos < m; ++pos) {
        var_in += (x[pos * 3 + ch] - xm) * (x[pos * 3 + ch] - xm);
        var_out += (y[pos * 3 + ch] - mean) * (y[pos * 3 + ch] - mean);
      }
      var_in /= double(m);
      var_out /= double(m);
      const double expected_std =
          std::abs(bn.gamma[ch]) * std::sqrt(var_in / (var_in + bn.eps()));
      CHECK(std::abs(std::sqrt(var_out) - expected_std) <= 1e-9);
    }
  }
  SUBCASE("infer before any training update fails") {
    BatchNormLayer bn(2);
    Tensor x({3, 2});
    CHECK_THROWS_AS(bn.forward(x, Mode::infer), ValueError);
  }
  SUBCASE("infer uses running statistics") {
    Rng rng(9);
    BatchNormLayer bn(2, 1e-3, 0.0);  // momentum 0: running stats = last batch
    Tensor x = random_tensor({50, 2}, rng);
    Tensor y_train = bn.forward(x, Mode::train);
    Tensor y_infer = bn.forward(x, Mode::infer);
    for (std::size_t i = 0; i < y_train.size(); ++i)
      CHECK(y_infer[i] == doctest::Approx(y_train[i]).epsilon(1e-12));
  }
}

TEST_CASE("batchnorm backward") {
  SUBCASE("finite differences over a (8, 4) batch") {
    Rng rng(10);
    BatchNormLayer bn(4, 1e-3);
    bn.gamma = random_tensor({4}, rng, 0.5, 2.0);
    bn.beta = random_tensor({4}, rng, -1.0, 1.0);
    Tensor x = random_tensor({8, 4}, rng, -2.0, 2.0);
    check_layer_input_grad(bn, x, rng);
    check_layer_param_grads(bn, x, rng);
  }
  SUBCASE("zero upstream gradient") {
    Rng rng(11);
    BatchNormLayer bn(2);
    Tensor x = random_tensor({5, 2}, rng);
    Tensor y = bn.forward(x, Mode::train);
    Tensor gx = bn.backward(Tensor(y.shape()));
    for (double v : gx.data()) CHECK(v == 0.0);
    for (double v : bn.grad_gamma.data()) CHECK(v == 0.0);
    for (double v : bn.grad_beta.data()) CHECK(v == 0.0);
  }
  SUBCASE("gamma gradient for grad_out = xhat is sum of xhat^2") {
    Rng rng(12);
    BatchNormLayer bn(2, 1e-3);
    Tensor x = random_tensor({7, 2}, rng, -3.0, 3.0);
    bn.forward(x, Mode::train);

    // reconstruct xhat = (y - beta) / gamma with identity gamma/beta
    Tensor y = bn.forward(x, Mode::train);
    bn.backward(y);
    for (std::size_t ch = 0; ch < 2; ++ch) {
      double expected = 0.0;
      for (std::size_t s = 0; s < 7; ++s) expected += y.at(s, ch) * y.at(s, ch);
      CHECK(bn.grad_gamma[ch] == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("dropout") {
  SUBCASE("p = 0 is the identity in both modes") {
    Rng rng(13);
    DropoutLayer drop(0.0, 7);
    Tensor x = random_tensor({4, 4}, rng);
    Tensor y = drop.forward(x, Mode::train);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
    Tensor y2 = drop.forward(x, Mode::infer);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y2[i] == x[i]);
  }
  SUBCASE("infer mode is bitwise the input for any p") {
    Rng rng(14);
    DropoutLayer drop(0.35, 8);
    Tensor x = random_tensor({3, 9}, rng);
    Tensor y = drop.forward(x, Mode::infer);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
    Tensor g = random_projection(x.shape(), rng);
    Tensor gx = drop.backward(g);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(gx[i] == g[i]);
  }
  SUBCASE("inverted scaling keeps the expectation at 1") {
    DropoutLayer drop(0.2, 99);
    Tensor ones = Tensor::full({8}, 1.0);
    double acc = 0.0;
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) {
      Tensor y = drop.forward(ones, Mode::train);
      acc += y.sum() / 8.0;
    }
    CHECK(std::abs(acc / draws - 1.0) <= 0.01);
  }
  SUBCASE("frozen mask gradient check") {
    Rng rng(15);
    DropoutLayer drop(0.4, 100);
    Tensor x = random_tensor({5, 5}, rng);
    drop.forward(x, Mode::train);
    drop.freeze_mask(true);
    check_layer_input_grad(drop, x, rng);
  }
  SUBCASE("p = 1 rejected") {
    CHECK_THROWS_AS(DropoutLayer(1.0, 1), ValueError);
  }
}

TEST_CASE("average pooling") {
  AvgPoolLayer pool(2, 2, 2, 2);
  SUBCASE("table shape 42 -> 21") {
    Tensor x({1, 42, 42, 3});
    CHECK(pool.forward(x, Mode::train).shape() == Shape{1, 21, 21, 3});
  }
  SUBCASE("constant input stays constant") {
    Tensor x = Tensor::full({1, 4, 4, 2}, 3.75);
    Tensor y = pool.forward(x, Mode::train);
    for (double v : y.data()) CHECK(v == doctest::Approx(3.75));
  }
  SUBCASE("non-integral output size rejected") {
    Tensor x({1, 5, 4, 1});
    CHECK_THROWS_AS(pool.forward(x, Mode::train), ValueError);
  }
  SUBCASE("gradient") {
    Rng rng(16);
    Tensor x = random_tensor({2, 6, 6, 2}, rng);
    check_layer_input_grad(pool, x, rng);
  }
}

TEST_CASE("max pooling") {
  MaxPoolLayer pool(2, 2, 2, 2);
  SUBCASE("routes gradient to the argmax") {
    Tensor x({1, 2, 2, 1}, {1.0, 2.0, 3.0, 4.0});
    Tensor y = pool.forward(x, Mode::train);
    CHECK(y[0] == 4.0);
    Tensor g({1, 1, 1, 1}, {1.0});
    Tensor gx = pool.backward(g);
    CHECK(gx[0] == 0.0);
    CHECK(gx[1] == 0.0);
    CHECK(gx[2] == 0.0);
    CHECK(gx[3] == 1.0);
  }
  SUBCASE("ties go to the first occurrence in row-major order") {
    Tensor x = Tensor::full({1, 2, 2, 1}, 5.0);
    pool.forward(x, Mode::train);
    Tensor gx = pool.backward(Tensor({1, 1, 1, 1}, {1.0}));
    CHECK(gx[0] == 1.0);
    CHECK(gx[1] == 0.0);
  }
  SUBCASE("gradient") {
    Rng rng(17);
    Tensor x = random_tensor({2, 4, 4, 3}, rng);
    check_layer_input_grad(pool, x, rng);
  }
}

TEST_CASE("upsample") {
  SUBCASE("table shapes") {
    UpsampleLayer up2(2, 2);
    Tensor a({1, 27, 27, 1});
    CHECK(up2.forward(a, Mode::train).shape() == Shape{1, 54, 54, 1});
    UpsampleLayer up6(6, 6);
    Tensor b({1, 7, 7, 32});
    CHECK(up6.forward(b, Mode::train).shape() == Shape{1, 42, 42, 32});
  }
  SUBCASE("factor 1 is the identity") {
    Rng rng(18);
    UpsampleLayer up(1, 1);
    Tensor x = random_tensor({1, 3, 3, 2}, rng);
    Tensor y = up.forward(x, Mode::train);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
  }
  SUBCASE("replicates values and sums gradients") {
    UpsampleLayer up(2, 3);
    Tensor x({1, 1, 1, 1}, {2.5});
    Tensor y = up.forward(x, Mode::train);
    REQUIRE(y.shape() == Shape{1, 2, 3, 1});
    for (double v : y.data()) CHECK(v == 2.5);
    Tensor g = Tensor::full({1, 2, 3, 1}, 1.0);
    CHECK(up.backward(g)[0] == 6.0);
  }
  SUBCASE("gradient") {
    Rng rng(19);
    UpsampleLayer up(2, 2);
    Tensor x = random_tensor({2, 3, 3, 2}, rng);
    check_layer_input_grad(up, x, rng);
  }
}

TEST_CASE("reshape and crop layers") {
  SUBCASE("reshape round trip through the network convention") {
    Rng rng(20);
    ReshapeLayer to_img({27, 27, 1});
    Tensor x = random_tensor({2, 9, 9, 9}, rng);
    Tensor y = to_img.forward(x, Mode::train);
    CHECK(y.shape() == Shape{2, 27, 27, 1});
    Tensor g = random_projection(y.shape(), rng);
    Tensor gx = to_img.backward(g);
    CHECK(gx.shape() == x.shape());
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(gx[i] == g[i]);
  }
  SUBCASE("center crop gradient") {
    Rng rng(21);
    CenterCropLayer crop(3, 3);
    Tensor x = random_tensor({2, 6, 6, 2}, rng);
    check_layer_input_grad(crop, x, rng);
  }
}

TEST_CASE("add skip: zero residual branch is the identity with exact gradients") {
  Rng rng(22);
  Network net;
  net.add(std::make_unique<LeakyReLULayer>(1.0));  // slope-1 pass-through, skip source
  auto conv = std::make_unique<Conv2DLayer>(1, 1, 2, 2);
  conv->weights.fill(0.0);  // residual branch contributes nothing
  net.add(std::move(conv));
  net.add(std::make_unique<AddSkipLayer>(0));

  Tensor x = random_tensor({1, 3, 3, 2}, rng);
  Tensor y = net.forward(x);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);

  Tensor g = random_projection(y.shape(), rng);
  Tensor gx = net.backward(g);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(gx[i] == g[i]);
}

TEST_CASE("add skip rejects shape mismatch") {
  AddSkipLayer add(0);
  Tensor a({1, 2, 2, 1});
  Tensor b({1, 2, 2, 2});
  Tensor unused;
  CHECK_THROWS_AS(add.forward_skip(a, b, Mode::train), ValueError);
}

TEST_CASE("concat skip stacks channels and splits gradients") {
  ConcatSkipLayer cat(0);
  Rng rng(23);
  Tensor deep = random_tensor({1, 3, 3, 2}, rng);
  Tensor skip = random_tensor({1, 3, 3, 2}, rng);
  Tensor y = cat.forward_skip(deep, skip, Mode::train);
  REQUIRE(y.shape() == Shape{1, 3, 3, 4});
  CHECK(y.at(0, 1, 1, 0ul) == deep.at(0, 1, 1, 0ul));
  CHECK(y.at(0, 1, 1, 2) == skip.at(0, 1, 1, 0ul));

  Tensor ones = Tensor::full(y.shape(), 1.0);
  Tensor g_skip;
  Tensor g_deep = cat.backward_skip(ones, g_skip);
  for (double v : g_deep.data()) CHECK(v == 1.0);
  for (double v : g_skip.data()) CHECK(v == 1.0);
}

TEST_CASE("concat skip crops a larger skip branch and zero-pads its gradient") {
  ConcatSkipLayer cat(0);
  Rng rng(24);
  Tensor deep = random_tensor({1, 3, 3, 1}, rng);
  Tensor skip = random_tensor({1, 6, 6, 1}, rng);
  Tensor y = cat.forward_skip(deep, skip, Mode::train);
  REQUIRE(y.shape() == Shape{1, 3, 3, 2});
  // offset floor((6-3)/2) = 1
  CHECK(y.at(0, 0, 0ul, 1) == skip.at(0, 1, 1, 0ul));

  Tensor g = Tensor::full(y.shape(), 2.0);
  Tensor g_skip;
  cat.backward_skip(g, g_skip);
  REQUIRE(g_skip.shape() == skip.shape());
  CHECK(g_skip.at(0, 0, 0ul, 0ul) == 0.0);
  CHECK(g_skip.at(0, 1, 1, 0ul) == 2.0);
  CHECK(g_skip.at(0, 3, 3, 0ul) == 2.0);
  CHECK(g_skip.at(0, 5, 5, 0ul) == 0.0);
}

TEST_CASE("dense layer") {
  SUBCASE("hand examples") {
    DenseLayer dense(2, 1);
    dense.weights = Tensor({1, 2}, {1.0, 2.0});
    Tensor x({2}, {3.0, 4.0});
    CHECK(dense.forward(x, Mode::train)[0] == 11.0);

    DenseLayer zero(3, 2);
    Tensor any({3}, {9.0, -4.0, 2.0});
    Tensor out = zero.forward(any, Mode::train);
    CHECK(out[0] == 0.0);
    CHECK(out[1] == 0.0);
  }
  SUBCASE("shape rejection") {
    DenseLayer dense(4, 2);
    Tensor bad({3});
    CHECK_THROWS_AS(dense.forward(bad, Mode::train), ValueError);
  }
  SUBCASE("two-layer sigmoid net with mse matches finite differences") {
    Rng rng(25);
    Network net;
    auto d1 = std::make_unique<DenseLayer>(4, 6, DenseLayer::Activation::sigmoid);
    d1->weights = init_lecun({6, 4}, 4, rng, InitKind::lecun_uniform);
    d1->bias = random_tensor({6}, rng, -0.1, 0.1);
    auto d2 = std::make_unique<DenseLayer>(6, 3, DenseLayer::Activation::sigmoid);
    d2->weights = init_lecun({3, 6}, 6, rng, InitKind::lecun_uniform);
    net.add(std::move(d1));
    net.add(std::move(d2));

    Tensor x = random_tensor({5, 4}, rng);
    const Tensor tgt = random_tensor({5, 3}, rng, 0.0, 1.0);

    auto loss = [&] { return mse(net.forward(x), tgt).value; };
    Tensor out = net.forward(x);
    net.backward(*mse(out, tgt).grad);
    for (ParamRef& ref : net.trainable_params()) {
      auto r = finite_diff_check(loss, ref.value->raw(), ref.value->size(), ref.grad->raw());
      CAPTURE(ref.name);
      CHECK(r.max_rel <= 1e-6);
    }
  }
}

TEST_CASE("network end-to-end: conv + sigmoid + mse") {
  Rng rng(26);
  Network net;
  auto conv = std::make_unique<Conv2DLayer>(3, 3, 1, 2);
  conv->weights = init_lecun({3, 3, 1, 2}, 9, rng, InitKind::lecun_uniform);
  net.add(std::move(conv));
  net.add(std::make_unique<SigmoidLayer>());

  Tensor x = random_tensor({2, 5, 5, 1}, rng);
  const Tensor tgt = random_tensor({2, 3, 3, 2}, rng, 0.0, 1.0);

  Tensor out = net.forward(x);
  net.backward(*mse(out, tgt).grad);
  auto loss = [&] { return mse(net.forward(x), tgt).value; };
  for (ParamRef& ref : net.trainable_params()) {
    auto r = finite_diff_check(loss, ref.value->raw(), ref.value->size(), ref.grad->raw());
    CHECK(r.max_rel <= 1e-5);
  }

  SUBCASE("zero loss gradient zeroes every parameter gradient") {
    Tensor out2 = net.forward(x);
    net.backward(Tensor(out2.shape()));
    for (ParamRef& ref : net.trainable_params())
      for (double v : ref.grad->data()) CHECK(v == 0.0);
  }
  SUBCASE("stale trace is rejected") {
    Tensor out2 = net.forward(x);
    net.backward(Tensor(out2.shape()));
    CHECK_THROWS_AS(net.backward(Tensor(out2.shape())), ValueError);
  }
  SUBCASE("mode switch invalidates the trace") {
    Tensor out2 = net.forward(x);
    net.set_mode(Mode::infer);
    CHECK_THROWS_AS(net.backward(Tensor(out2.shape())), ValueError);
    net.set_mode(Mode::train);
  }
}

TEST_CASE("lecun initialization") {
  SUBCASE("uniform bound at fan_in = 3") {
    Rng rng(27);
    Tensor t = init_lecun({1000}, 3, rng, InitKind::lecun_uniform);
    CHECK(t.min() >= -1.0);
    CHECK(t.max() <= 1.0);
  }
  SUBCASE("uniform variance 1/fan_in over 1e6 draws") {
    Rng rng(28);
    Tensor t = init_lecun({1000, 1000}, 9, rng, InitKind::lecun_uniform);
    double mean = t.sum() / t.size();
    double var = 0.0;
    for (double v : t.data()) var += (v - mean) * (v - mean);
    var /= t.size();
    CHECK(var == doctest::Approx(1.0 / 9.0).epsilon(0.05));
  }
  SUBCASE("normal variance 1/fan_in") {
    Rng rng(29);
    Tensor t = init_lecun({1000, 500}, 16, rng, InitKind::lecun_normal);
    double mean = t.sum() / t.size();
    double var = 0.0;
    for (double v : t.data()) var += (v - mean) * (v - mean);
    var /= t.size();
    CHECK(var == doctest::Approx(1.0 / 16.0).epsilon(0.05));
  }
  SUBCASE("same seed reproduces bitwise") {
    Rng a(30), b(30);
    Tensor ta = init_lecun({64}, 8, a, InitKind::lecun_normal);
    Tensor tb = init_lecun({64}, 8, b, InitKind::lecun_normal);
    for (std::size_t i = 0; i < ta.size(); ++i) CHECK(ta[i] == tb[i]);
  }
  SUBCASE("fan_in 0 rejected") {
    Rng rng(31);
    CHECK_THROWS_AS(init_lecun({4}, 0, rng, InitKind::lecun_uniform), ValueError);
  }
}

TEST_CASE("forward/backward determinism with identical seeds") {
  auto build = [](std::uint64_t seed) {
    Rng rng(seed);
    Network net;
    auto conv = std::make_unique<Conv2DLayer>(3, 3, 1, 4);
    conv->weights = init_lecun({3, 3, 1, 4}, 9, rng, InitKind::lecun_uniform);
    net.add(std::move(conv));
    net.add(std::make_unique<LeakyReLULayer>(5.5));
    net.add(std::make_unique<BatchNormLayer>(4));
    net.add(std::make_unique<DropoutLayer>(0.2, seed + 1));
    return net;
  };
  Network a = build(77), b = build(77);
  Rng rng(32);
  Tensor x = random_tensor({3, 7, 7, 1}, rng);
  Tensor ya = a.forward(x);
  Tensor yb = b.forward(x);
  for (std::size_t i = 0; i < ya.size(); ++i) CHECK(ya[i] == yb[i]);

  Tensor g = random_projection(ya.shape(), rng);
  a.backward(g);
  b.backward(g);
  auto pa = a.trainable_params();
  auto pb = b.trainable_params();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t k = 0; k < pa.size(); ++k)
    for (std::size_t i = 0; i < pa[k].grad->size(); ++i)
      CHECK((*pa[k].grad)[i] == (*pb[k].grad)[i]);
}
