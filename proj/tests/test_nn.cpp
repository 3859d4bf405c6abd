#include <catch2/catch_amalgamated.hpp>

#include "bsc/nn/layers.hpp"
#include "bsc/nn/optim.hpp"
#include "support/oracles.hpp"

using bsc::Vol;
using bsc::nn::Conv2D;
using bsc::nn::ConvCtx;
using bsc::nn::output_size;

namespace {

Vol<double> random_vol(int c, int h, int w, std::uint64_t seed) {
  bsc::Rng rng(seed);
  Vol<double> v(c, h, w);
  for (auto& x : v.v) x = rng.gaussian();
  return v;
}

// scalar loss for gradient checks: fixed random projection of the output
double proj_loss(const Vol<double>& y, const std::vector<double>& coeffs) {
  double s = 0;
  for (std::size_t i = 0; i < y.v.size(); ++i) s += y.v[i] * coeffs[i];
  return s;
}

std::vector<double> random_coeffs(std::size_t n, std::uint64_t seed) {
  bsc::Rng rng(seed);
  std::vector<double> c(n);
  for (auto& x : c) x = rng.gaussian();
  return c;
}

}  // namespace

TEST_CASE("output_size: the size equation") {
  // published worked example: 224 through three 2x2/2 pools, then the
  // 8x8 and 1x1 head convolutions -> 21
  int n = 224;
  for (int i = 0; i < 3; ++i) n = output_size(n, 0, 2, 2);
  REQUIRE(n == 28);
  n = output_size(n, 0, 8, 1);
  REQUIRE(n == 21);
  REQUIRE(output_size(n, 0, 1, 1) == 21);

  // the 64 -> 1 patch decision chain
  int p = 64;
  for (int i = 0; i < 3; ++i) p = output_size(p, 0, 2, 2);
  REQUIRE(p == 8);
  REQUIRE(output_size(p, 0, 8, 1) == 1);

  // same-size convolution identity
  REQUIRE(output_size(7, 1, 3, 1) == 7);

  REQUIRE_THROWS_AS(output_size(4, 0, 8, 1), bsc::DomainError);
  REQUIRE_THROWS_AS(output_size(0, 0, 1, 1), bsc::DomainError);
}

TEST_CASE("conv2d matches finite differences") {
  Conv2D<double> conv;
  conv.init(2, 3, 3, 1, 1, "c");
  bsc::Rng rng(31);
  conv.init_he(rng);
  const Vol<double> x = random_vol(2, 6, 5, 7);
  const auto coeffs = random_coeffs(3 * 6 * 5, 8);

  ConvCtx<double> ctx;
  Vol<double> y = conv.forward_train(x, ctx);
  Vol<double> dy(y.c, y.h, y.w);
  for (std::size_t i = 0; i < dy.v.size(); ++i) dy.v[i] = coeffs[i];
  conv.w.zero_grad();
  conv.b.zero_grad();
  Vol<double> dx = conv.backward(dy, ctx);

  auto f = [&]() { return proj_loss(conv.forward(x), coeffs); };

  SECTION("weights") {
    const auto fd = oracle::central_diff(
        f, [&](std::size_t i) { return conv.w.value[i]; },
        [&](std::size_t i, double v) { conv.w.value[i] = v; }, conv.w.value.size());
    REQUIRE(oracle::max_rel_err(fd, std::vector<double>(conv.w.grad.begin(), conv.w.grad.end())) < 1e-6);
  }
  SECTION("bias") {
    const auto fd = oracle::central_diff(
        f, [&](std::size_t i) { return conv.b.value[i]; },
        [&](std::size_t i, double v) { conv.b.value[i] = v; }, conv.b.value.size());
    REQUIRE(oracle::max_rel_err(fd, std::vector<double>(conv.b.grad.begin(), conv.b.grad.end())) < 1e-6);
  }
  SECTION("input") {
    Vol<double> xm = x;
    auto fx = [&]() { return proj_loss(conv.forward(xm), coeffs); };
    const auto fd = oracle::central_diff(
        fx, [&](std::size_t i) { return xm.v[i]; }, [&](std::size_t i, double v) { xm.v[i] = v; },
        xm.v.size());
    REQUIRE(oracle::max_rel_err(fd, std::vector<double>(dx.v.begin(), dx.v.end())) < 1e-6);
  }
}

TEST_CASE("strided valid conv output placement") {
  Conv2D<double> conv;
  conv.init(1, 1, 2, 2, 0, "s");
  // kernel picks the top-left of each 2x2 block
  conv.w.value = {1, 0, 0, 0};
  conv.b.value = {0.5};
  Vol<double> x(1, 4, 6);
  for (std::size_t i = 0; i < x.v.size(); ++i) x.v[i] = static_cast<double>(i);
  const Vol<double> y = conv.forward(x);
  REQUIRE(y.h == 2);
  REQUIRE(y.w == 3);
  REQUIRE(y.at(0, 0, 0) == Catch::Approx(0.5));
  REQUIRE(y.at(0, 0, 1) == Catch::Approx(2.5));
  REQUIRE(y.at(0, 1, 2) == Catch::Approx(16.5));
}

TEST_CASE("max pool forward/backward") {
  Vol<double> x = random_vol(2, 6, 6, 17);
  bsc::nn::PoolCtx<double> ctx;
  const Vol<double> y = bsc::nn::MaxPool2<double>::forward(x, &ctx);
  REQUIRE(y.h == 3);
  REQUIRE(y.w == 3);
  // each output is the max of its 2x2 window
  for (int c = 0; c < 2; ++c)
    for (int oy = 0; oy < 3; ++oy)
      for (int ox = 0; ox < 3; ++ox) {
        double m = -1e30;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) m = std::max(m, x.at(c, oy * 2 + dy, ox * 2 + dx));
        REQUIRE(y.at(c, oy, ox) == Catch::Approx(m));
      }
  // backward routes gradients to the argmax only
  Vol<double> dy(2, 3, 3);
  for (std::size_t i = 0; i < dy.v.size(); ++i) dy.v[i] = static_cast<double>(i + 1);
  const Vol<double> dx = bsc::nn::MaxPool2<double>::backward(dy, ctx);
  double sum_dx = 0, sum_dy = 0;
  for (const auto v : dx.v) sum_dx += v;
  for (const auto v : dy.v) sum_dy += v;
  REQUIRE(sum_dx == Catch::Approx(sum_dy));
}

TEST_CASE("linear layer matches finite differences") {
  bsc::nn::Linear<double> fc;
  fc.init(5, 4, "fc");
  bsc::Rng rng(3);
  fc.init_he(rng);
  bsc::nn::RowMat<double> x(3, 5);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.gaussian();
  const auto coeffs = random_coeffs(12, 4);

  auto loss_of = [&](const bsc::nn::RowMat<double>& y) {
    double s = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) s += y.data()[i] * coeffs[static_cast<std::size_t>(i)];
    return s;
  };
  bsc::nn::RowMat<double> dy(3, 4);
  for (Eigen::Index i = 0; i < dy.size(); ++i) dy.data()[i] = coeffs[static_cast<std::size_t>(i)];

  fc.w.zero_grad();
  fc.b.zero_grad();
  const bsc::nn::RowMat<double> dx = fc.backward(x, dy);

  auto f = [&]() { return loss_of(fc.forward(x)); };
  const auto fd_w = oracle::central_diff(
      f, [&](std::size_t i) { return fc.w.value[i]; }, [&](std::size_t i, double v) { fc.w.value[i] = v; },
      fc.w.value.size());
  REQUIRE(oracle::max_rel_err(fd_w, std::vector<double>(fc.w.grad.begin(), fc.w.grad.end())) < 1e-6);

  auto fx = [&]() { return loss_of(fc.forward(x)); };
  std::vector<double> dx_flat(dx.data(), dx.data() + dx.size());
  const auto fd_x = oracle::central_diff(
      fx, [&](std::size_t i) { return x.data()[i]; }, [&](std::size_t i, double v) { x.data()[i] = v; },
      static_cast<std::size_t>(x.size()));
  REQUIRE(oracle::max_rel_err(fd_x, dx_flat) < 1e-6);
}

TEST_CASE("softmax pair sums to one and is stable") {
  Vol<double> logits(2, 3, 3);
  bsc::Rng rng(5);
  for (auto& v : logits.v) v = rng.gaussian(0, 50);  // large magnitudes
  const Vol<double> p = bsc::nn::softmax_pair(logits);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) {
      const double s = p.at(0, y, x) + p.at(1, y, x);
      REQUIRE(s == Catch::Approx(1.0).margin(1e-12));
      REQUIRE(p.at(0, y, x) >= 0.0);
    }
}

TEST_CASE("optimizers reduce a quadratic") {
  bsc::nn::ParamTensor<double> p;
  p.resize({4}, "p");
  p.value = {4, -3, 2, -1};
  auto loss = [&]() {
    double s = 0;
    for (const auto v : p.value) s += v * v;
    return s;
  };
  SECTION("sgd") {
    bsc::nn::Sgd<double> opt;
    opt.lr = 0.1;
    for (int i = 0; i < 200; ++i) {
      for (std::size_t j = 0; j < 4; ++j) p.grad[j] = 2 * p.value[j];
      opt.step({&p});
    }
    REQUIRE(loss() < 1e-8);
  }
  SECTION("adam") {
    bsc::nn::Adam<double> opt;
    opt.lr = 0.1;
    for (int i = 0; i < 400; ++i) {
      for (std::size_t j = 0; j < 4; ++j) p.grad[j] = 2 * p.value[j];
      opt.step({&p});
    }
    REQUIRE(loss() < 1e-6);
  }
}

TEST_CASE("dropout scales and masks only in training") {
  bsc::Rng rng(11);
  bsc::nn::DropoutMask<double> m;
  m.sample(50, 40, 0.6, rng);
  bsc::nn::RowMat<double> a = bsc::nn::RowMat<double>::Ones(50, 40);
  m.apply(a);
  std::size_t zeros = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a.data()[i] == 0.0) {
      ++zeros;
    } else {
      REQUIRE(a.data()[i] == Catch::Approx(1.0 / 0.4));
    }
  }
  const double frac = static_cast<double>(zeros) / static_cast<double>(a.size());
  REQUIRE(frac > 0.55);
  REQUIRE(frac < 0.65);
}
