#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dvk/losses.hpp"
#include "dvk/rng.hpp"
#include "support/gradcheck.hpp"

using namespace dvk;
using dvk::testing::finite_diff_check;
using dvk::testing::random_tensor;

TEST_CASE("mse and mae values") {
  Tensor a({2}, {1.0, 3.0});
  CHECK(mse(a, a).value == 0.0);
  CHECK(mae(a, a).value == 0.0);

  Tensor pred({2}, {0.0, 0.0});
  Tensor tgt({2}, {1.0, 3.0});
  CHECK(mse(pred, tgt).value == doctest::Approx(5.0));
  CHECK(mae(pred, tgt).value == doctest::Approx(2.0));

  Tensor shorter({3});
  CHECK_THROWS_AS(mse(pred, shorter), ValueError);
}

TEST_CASE("mse/mae gradients match finite differences") {
  Rng rng(41);
  Tensor pred = random_tensor({3, 4}, rng, -2.0, 2.0);
  const Tensor tgt = random_tensor({3, 4}, rng, -2.0, 2.0);

  auto mse_loss = [&] { return mse(pred, tgt).value; };
  auto r = finite_diff_check(mse_loss, pred.raw(), pred.size(), mse(pred, tgt).grad->raw());
  CHECK(r.max_rel <= 1e-7);

  auto mae_loss = [&] { return mae(pred, tgt).value; };
  auto r2 = finite_diff_check(mae_loss, pred.raw(), pred.size(), mae(pred, tgt).grad->raw());
  CHECK(r2.max_rel <= 1e-7);  // random reals: ties have measure zero
}

TEST_CASE("mse vs mae size relationship") {
  // all |errors| in (0, 1): squaring shrinks
  Tensor p({4}, {0.1, 0.2, 0.3, 0.4});
  Tensor t({4}, {0.0, 0.0, 0.0, 0.0});
  CHECK(mse(p, t).value < mae(p, t).value);

  // all |errors| >= 1: squaring grows
  Tensor p2({4}, {1.5, -2.0, 3.0, 1.0});
  CHECK(mse(p2, t).value > mae(p2, t).value);
}

TEST_CASE("kl divergence") {
  Tensor p({3}, {0.2, 0.3, 0.5});
  CHECK(kl_divergence(p, p).value == doctest::Approx(0.0));
  CHECK_FALSE(kl_divergence(p, p).grad.has_value());

  Tensor q({3}, {0.5, 0.25, 0.25});
  CHECK(kl_divergence(p, q).value > 0.0);

  Tensor not_dist({3}, {0.2, 0.3, 0.6});
  CHECK_THROWS_AS(kl_divergence(p, not_dist), ValueError);
  Tensor neg({3}, {-0.2, 0.7, 0.5});
  CHECK_THROWS_AS(kl_divergence(neg, p), ValueError);
}

TEST_CASE("entropy-like loss gradient equals the closed form") {
  SUBCASE("zero at x = y = 0.5") {
    Tensor x({1}, {0.5});
    auto l = entropy_like(x, x);
    CHECK((*l.grad)[0] == 0.0);
  }
  SUBCASE("closed form and finite differences") {
    Rng rng(42);
    Tensor x = random_tensor({2, 5}, rng, 0.05, 0.95);
    Tensor y = random_tensor({2, 5}, rng, 0.05, 0.95);
    auto l = entropy_like(x, y);
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double closed = (y[i] - x[i]) / (y[i] * (1.0 - y[i]));
      CHECK((*l.grad)[i] == doctest::Approx(closed).epsilon(1e-14));
    }
    auto loss = [&] { return entropy_like(x, y).value; };
    auto r = finite_diff_check(loss, y.raw(), y.size(), l.grad->raw());
    CHECK(r.max_rel <= 1e-7);
  }
  SUBCASE("domain enforcement") {
    Tensor x({1}, {0.5});
    Tensor bad({1}, {1.5});
    CHECK_THROWS_AS(entropy_like(x, bad), ValueError);
    CHECK_THROWS_AS(entropy_like(bad, x), ValueError);
  }
}

TEST_CASE("log loss value") {
  Tensor x({2}, {0.3, 0.7});
  CHECK(log_loss(x, x).value == doctest::Approx(0.0));
  Tensor y({2}, {0.5, 0.5});
  CHECK(log_loss(x, y).value > 0.0);
}

TEST_CASE("soft iou") {
  SUBCASE("self similarity is 1") {
    Rng rng(43);
    Tensor x = random_tensor({9, 9, 9}, rng, 0.0, 2.0);
    CHECK(soft_iou(x, x).value == 1.0);
  }
  SUBCASE("hand example") {
    Tensor x({2}, {0.2, 0.8});
    Tensor y({2}, {0.4, 0.4});
    CHECK(soft_iou(x, y).value == doctest::Approx(0.5));
  }
  SUBCASE("symmetry and range") {
    Rng rng(44);
    for (int i = 0; i < 50; ++i) {
      Tensor x = random_tensor({20}, rng, 0.0, 3.0);
      Tensor y = random_tensor({20}, rng, 0.0, 3.0);
      const double jxy = soft_iou(x, y).value;
      CHECK(jxy == soft_iou(y, x).value);
      CHECK(jxy >= 0.0);
      CHECK(jxy <= 1.0);
    }
  }
  SUBCASE("gradient of 1 - J matches finite differences away from ties") {
    Rng rng(45);
    Tensor pred = random_tensor({4, 4}, rng, 0.1, 2.0);
    const Tensor tgt = random_tensor({4, 4}, rng, 0.1, 2.0);
    auto l = iou_loss(pred, tgt);
    auto loss = [&] { return iou_loss(pred, tgt).value; };
    auto r = finite_diff_check(loss, pred.raw(), pred.size(), l.grad->raw());
    CHECK(r.max_rel <= 1e-6);
  }
  SUBCASE("rejections") {
    Tensor x({2}, {0.0, 0.0});
    CHECK_THROWS_AS(soft_iou(x, x), ValueError);
    Tensor neg({2}, {-1.0, 1.0});
    Tensor pos({2}, {1.0, 1.0});
    CHECK_THROWS_AS(soft_iou(neg, pos), ValueError);
  }
}

TEST_CASE("clinical losses") {
  SUBCASE("zero at perfect prediction") {
    Rng rng(46);
    Tensor x = random_tensor({9, 9, 9}, rng, 0.0, 1.0);
    CHECK(clinical_loss(x, x).value == 0.0);
    CHECK(clinical_loss_inverse(x, x, 0.9).value == 0.0);
  }
  SUBCASE("identity L + L' = c * SSE over 1000 random pairs") {
    Rng rng(47);
    for (double c : {0.9, 1.0}) {
      double worst = 0.0;
      for (int i = 0; i < 500; ++i) {
        Tensor x = random_tensor({30}, rng, 0.0, 1.0);
        Tensor y = random_tensor({30}, rng, 0.0, 1.0);
        double sse = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k)
          sse += (x[k] - y[k]) * (x[k] - y[k]);
        const double lhs = clinical_loss(x, y).value + clinical_loss_inverse(x, y, c).value;
        worst = std::max(worst, std::abs(lhs - c * sse) / std::max(1e-30, c * sse));
      }
      CHECK(worst <= 1e-12);
    }
  }
  SUBCASE("center error outweighs corner error on a center-peaked truth") {
    Tensor x({3, 3, 3});
    x.fill(0.01);
    x.at(1, 1, 1) = 1.0;  // center-concentrated ground truth

    Tensor y_center = x;
    y_center.at(1, 1, 1) += 0.1;
    Tensor y_corner = x;
    y_corner.at(0, 0, 0) += 0.1;

    CHECK(clinical_loss(x, y_center).value > clinical_loss(x, y_corner).value);
  }
  SUBCASE("gradient check") {
    Rng rng(48);
    const Tensor x = random_tensor({10}, rng, 0.1, 1.0);
    Tensor y = random_tensor({10}, rng, 0.0, 1.0);
    auto l = clinical_loss(x, y);
    auto loss = [&] { return clinical_loss(x, y).value; };
    auto r = finite_diff_check(loss, y.raw(), y.size(), l.grad->raw());
    CHECK(r.max_rel <= 1e-6);
  }
  SUBCASE("zero-sum truth rejected") {
    Tensor x({2}, {0.0, 0.0});
    Tensor y({2}, {0.1, 0.1});
    CHECK_THROWS_AS(clinical_loss(x, y), ValueError);
  }
}

TEST_CASE("training loss dispatch") {
  Tensor pred({2}, {0.4, 0.6});
  Tensor tgt({2}, {0.5, 0.5});
  for (const char* name : {"mse", "mae", "iou", "entropy", "clinical", "clinical_inv"}) {
    auto l = training_loss(name, pred, tgt);
    CHECK(std::isfinite(l.value));
    CHECK(l.grad.has_value());
  }
  CHECK_THROWS_AS(training_loss("dice", pred, tgt), ValueError);
}
