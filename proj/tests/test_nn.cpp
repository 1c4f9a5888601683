#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "msfcn/error.hpp"
#include "msfcn/nn/checkpoint.hpp"
#include "msfcn/nn/graph.hpp"
#include "msfcn/nn/loss.hpp"
#include "msfcn/nn/sgd.hpp"
#include "support/gradcheck.hpp"

using namespace msfcn;
using namespace msfcn::nn;
using msfcn::testing::check_layer;
using msfcn::testing::random_tensor;

namespace {

constexpr double kTol = 1e-4;
const RunContext kInferCtx{Mode::infer, nullptr};

int pick(std::mt19937_64& rng, int lo, int hi) { return lo + static_cast<int>(rng() % (hi - lo + 1)); }

}  // namespace

TEST_SUITE("gradients") {
  TEST_CASE("conv2d") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 5; ++trial) {
      const int k = pick(rng, 1, 3), stride = pick(rng, 1, 2), pad = pick(rng, 0, k / 2);
      const Shape in{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, k + 2, 7), pick(rng, k + 2, 7)};
      Conv2d<double> conv(in.c, pick(rng, 1, 3), k, stride, pad);
      conv.init(FillMode::he_normal, rng);
      for (auto& v : conv.bias().value.values()) v = uniform(rng, -0.5, 0.5);
      const auto r = check_layer(conv, {random_tensor(in, rng)}, kInferCtx, rng);
      INFO(to_string(in) << " k=" << k << " s=" << stride << " p=" << pad);
      CHECK(r.worst < kTol);
    }
  }

  TEST_CASE("deconv2d") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 5; ++trial) {
      const int stride = trial % 2 == 0 ? 2 : 4;
      const Shape in{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 4)};
      Deconv2d<double> deconv(in.c, pick(rng, 1, 3), 2 * stride, stride);
      deconv.init(trial < 2 ? FillMode::bilinear : FillMode::he_normal, rng);
      const auto r = check_layer(deconv, {random_tensor(in, rng)}, kInferCtx, rng);
      INFO(to_string(in) << " stride=" << stride);
      CHECK(r.worst < kTol);
    }
  }

  TEST_CASE("maxpool and relu") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 5; ++trial) {
      const Shape in{pick(rng, 1, 2), pick(rng, 1, 3), 2 * pick(rng, 1, 4), 2 * pick(rng, 1, 4)};
      MaxPool2d<double> pool(2, 2);
      CHECK(check_layer(pool, {random_tensor(in, rng)}, kInferCtx, rng).worst < kTol);
      Relu<double> relu;
      CHECK(check_layer(relu, {random_tensor(in, rng)}, kInferCtx, rng).worst < kTol);
    }
  }

  TEST_CASE("crop") {
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 5; ++trial) {
      const Shape in{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 4, 9), pick(rng, 4, 9)};
      const int th = pick(rng, 1, in.h - 1), tw = pick(rng, 1, in.w - 1);
      const int oh = pick(rng, 0, in.h - th), ow = pick(rng, 0, in.w - tw);
      Crop<double> fixed(oh, ow, th, tw);
      CHECK(check_layer(fixed, {random_tensor(in, rng)}, kInferCtx, rng).worst < kTol);
      // Reference form: the second input only provides the extent.
      Crop<double> ref(oh, ow);
      const auto r = check_layer(ref, {random_tensor(in, rng), random_tensor({in.n, 1, th, tw}, rng)}, kInferCtx, rng);
      CHECK(r.worst < kTol);
    }
  }

  TEST_CASE("weighted sum") {
    std::mt19937_64 rng(15);
    for (int trial = 0; trial < 5; ++trial) {
      const Shape in{pick(rng, 1, 2), pick(rng, 1, 4), pick(rng, 1, 6), pick(rng, 1, 6)};
      const int count = pick(rng, 1, 3);
      std::vector<double> weights;
      std::vector<TensorD> inputs;
      for (int i = 0; i < count; ++i) {
        weights.push_back(uniform(rng, -1.5, 1.5));
        inputs.push_back(random_tensor(in, rng));
      }
      WeightedSum<double> ws(weights);
      CHECK(check_layer(ws, inputs, kInferCtx, rng).worst < kTol);
    }
  }

  TEST_CASE("dropout") {
    std::mt19937_64 rng(16);
    for (int trial = 0; trial < 5; ++trial) {
      const Shape in{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 2, 6), pick(rng, 2, 6)};
      Dropout<double> drop(0.5);
      // Off: inference is the identity.
      CHECK(check_layer(drop, {random_tensor(in, rng)}, kInferCtx, rng).worst < kTol);
      // On, with the mask pinned by reseeding before each forward pass.
      std::mt19937_64 mask_rng;
      const RunContext train{Mode::train, &mask_rng};
      const auto r = check_layer(drop, {random_tensor(in, rng)}, train, rng, [&] { mask_rng.seed(99 + trial); });
      CHECK(r.worst < kTol);
    }
  }

  TEST_CASE("softmax multinomial loss") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 5; ++trial) {
      const Shape s{pick(rng, 1, 2), pick(rng, 2, 5), pick(rng, 1, 5), pick(rng, 1, 5)};
      TensorD scores = random_tensor(s, rng, 3.0);
      std::vector<std::uint8_t> labels(static_cast<std::size_t>(s.n) * s.h * s.w);
      for (auto& l : labels) l = static_cast<std::uint8_t>(rng() % s.c);
      const auto res = softmax_multinomial_loss<double>(scores, labels);
      std::vector<double> analytic(res.grad.values().begin(), res.grad.values().end());
      std::vector<double> numeric(scores.size());
      const double h = 1e-6;
      for (std::size_t i = 0; i < scores.size(); ++i) {
        const double keep = scores[i];
        scores[i] = keep + h;
        const double up = softmax_multinomial_loss<double>(scores, labels).loss;
        scores[i] = keep - h;
        const double down = softmax_multinomial_loss<double>(scores, labels).loss;
        scores[i] = keep;
        numeric[i] = (up - down) / (2 * h);
      }
      CHECK(msfcn::testing::relative_error(analytic, numeric) < kTol);
    }
  }

  TEST_CASE("small graph end to end") {
    std::mt19937_64 rng(18);
    NetworkGraph<double> g;
    g.emplace<Conv2d<double>>("conv", {"data"}, 2, 3, 3, 1, 1).init(FillMode::he_normal, rng);
    g.emplace<Relu<double>>("relu", {"conv"});
    g.emplace<MaxPool2d<double>>("pool", {"relu"}, 2, 2);
    g.emplace<Deconv2d<double>>("up", {"pool"}, 3, 3, 4, 2).init(FillMode::bilinear, rng);
    g.emplace<Crop<double>>("crop", {"up", "data"}, 1, 1);
    g.emplace<WeightedSum<double>>("out", {"crop", "conv"}, std::vector<double>{0.7, 0.3});
    g.set_output("out");
    TensorD x = random_tensor({1, 2, 6, 6}, rng);
    const TensorD probe = random_tensor({1, 3, 6, 6}, rng);
    g.zero_grad();
    g.forward(x, kInferCtx);
    g.backward(probe, true);
    std::vector<double> analytic(g.input_grad().values().begin(), g.input_grad().values().end());
    std::vector<double> numeric(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double keep = x[i];
      x[i] = keep + 1e-6;
      const double up = msfcn::testing::dot(g.forward(x, kInferCtx), probe);
      x[i] = keep - 1e-6;
      const double down = msfcn::testing::dot(g.forward(x, kInferCtx), probe);
      x[i] = keep;
      numeric[i] = (up - down) / 2e-6;
    }
    CHECK(msfcn::testing::relative_error(analytic, numeric) < kTol);
  }
}

TEST_SUITE("layers") {
  TEST_CASE("bilinear taps") {
    CHECK(bilinear_tap(4, 0) == doctest::Approx(0.25));
    CHECK(bilinear_tap(4, 1) == doctest::Approx(0.75));
    CHECK(bilinear_tap(4, 2) == doctest::Approx(0.75));
    CHECK(bilinear_tap(4, 3) == doctest::Approx(0.25));
    double sum = 0.0;
    for (int i = 0; i < 64; ++i) sum += bilinear_tap(64, i);
    CHECK(sum == doctest::Approx(32.0));
  }

  TEST_CASE("bilinear deconvolution upsamples a constant field to a constant interior") {
    std::mt19937_64 rng(1);
    Deconv2d<double> up(1, 1, 4, 2);
    up.init(FillMode::bilinear, rng);
    const TensorD x({1, 1, 4, 4}, 1.0);
    const TensorD* in[] = {&x};
    const TensorD y = up.forward(in, kInferCtx);
    CHECK(y.shape() == Shape{1, 1, 10, 10});
    for (int h = 2; h < 8; ++h) {
      for (int w = 2; w < 8; ++w) CHECK(y.at(0, 0, h, w) == doctest::Approx(1.0));
    }
  }

  TEST_CASE("deconv rejects unsupported strides and crop rejects oversize targets") {
    CHECK_THROWS_AS(Deconv2d<float>(1, 1, 6, 3), Error);
    const Tensor x({1, 1, 4, 4});
    CHECK_THROWS_AS(nn::crop(x, 5, 4, 0, 0), Error);
    try {
      nn::crop(x, 4, 4, 1, 0);
      FAIL("expected TargetTooLarge");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::target_too_large);
    }
  }

  TEST_CASE("dropout keeps expectation and is identity at inference") {
    std::mt19937_64 rng(3);
    Dropout<double> drop(0.75);
    const TensorD x({1, 1, 200, 200}, 1.0);
    const TensorD* in[] = {&x};
    CHECK(drop.forward(in, kInferCtx) == x);
    const RunContext train{Mode::train, &rng};
    const TensorD y = drop.forward(in, train);
    double mean = 0.0;
    for (double v : y.values()) mean += v;
    mean /= static_cast<double>(y.size());
    CHECK(mean == doctest::Approx(1.0).epsilon(0.05));
  }

  TEST_CASE("argmax breaks ties toward the lower channel") {
    Tensor s({1, 3, 1, 2}, 0.0f);
    s.at(0, 2, 0, 1) = 1.0f;
    const auto cls = argmax_channels(s);
    CHECK(cls[0] == 0);
    CHECK(cls[1] == 2);
  }

  TEST_CASE("loss ignores a class when asked") {
    TensorD s({1, 2, 1, 2}, 0.0);
    const std::vector<std::uint8_t> labels{0, 1};
    const auto all = softmax_multinomial_loss<double>(s, labels);
    const auto some = softmax_multinomial_loss<double>(s, labels, 1);
    CHECK(all.counted == 2);
    CHECK(some.counted == 1);
    CHECK(all.loss == doctest::Approx(std::log(2.0)));
    CHECK(some.grad.at(0, 0, 0, 1) == 0.0);
  }
}

TEST_SUITE("sgd") {
  TEST_CASE("schedule endpoints and midpoint") {
    SgdConfig c;
    const long T = 10000;
    CHECK(std::abs(learning_rate(c, 0, T) - 1e-4) / 1e-4 < 0.005);
    CHECK(std::abs(learning_rate(c, T, T) - 1e-5) / 1e-5 < 0.005);
    CHECK(learning_rate(c, T / 2, T) == 5.5e-5);
    double prev = learning_rate(c, 0, T);
    for (long t = 1; t <= T; t += 97) {
      const double lr = learning_rate(c, t, T);
      CHECK(lr <= prev);
      prev = lr;
    }
  }

  TEST_CASE("momentum update follows v = mu v - lr g; w += v") {
    SgdConfig c;
    c.lr_start = 0.1;
    c.lr_end = 0.01;
    SgdOptimizer<double> opt(c);
    Parameter<double> p{"w", TensorD({1, 1, 1, 1}, 1.0), TensorD({1, 1, 1, 1}, 2.0), true};
    Parameter<double> frozen{"f", TensorD({1, 1, 1, 1}, 5.0), TensorD({1, 1, 1, 1}, 2.0), false};
    Parameter<double>* params[] = {&p, &frozen};
    const double lr0 = learning_rate(c, 0, 10), lr1 = learning_rate(c, 1, 10);
    opt.step(params, 0, 10);
    const double v1 = -lr0 * 2.0;
    CHECK(p.value[0] == doctest::Approx(1.0 + v1));
    opt.step(params, 1, 10);
    const double v2 = 0.9 * v1 - lr1 * 2.0;
    CHECK(p.value[0] == doctest::Approx(1.0 + v1 + v2));
    CHECK(frozen.value[0] == 5.0);
  }

  TEST_CASE("invalid configs are rejected") {
    SgdConfig c;
    c.lr_end = c.lr_start * 2;
    CHECK_THROWS_AS(c.validate(), Error);
    c = {};
    c.minibatch = 0;
    CHECK_THROWS_AS(c.validate(), Error);
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("round trip and mismatch detection") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "msfcn_test_ckpt";
    fs::remove_all(dir);
    std::mt19937_64 rng(5);
    NetworkGraph<float> a;
    a.emplace<Conv2d<float>>("conv", {"data"}, 3, 4, 3, 1, 1).init(FillMode::he_normal, rng);
    a.set_output("conv");
    save_checkpoint(dir / "a.ckpt", {{"note", "x"}}, a);
    const auto data = load_checkpoint(dir / "a.ckpt");
    CHECK(data.header.at("note") == "x");

    NetworkGraph<float> b;
    b.emplace<Conv2d<float>>("conv", {"data"}, 3, 4, 3, 1, 1);
    b.set_output("conv");
    apply_checkpoint(data, b);
    CHECK(b.find_parameter("conv/weight")->value == a.find_parameter("conv/weight")->value);

    NetworkGraph<float> c;
    c.emplace<Conv2d<float>>("conv", {"data"}, 3, 5, 3, 1, 1);
    c.set_output("conv");
    try {
      apply_checkpoint(data, c);
      FAIL("expected CheckpointMismatch");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::checkpoint_mismatch);
    }
    fs::remove_all(dir);
  }
}
