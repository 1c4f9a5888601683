#include <doctest.h>

#include <random>

#include "msfcn/error.hpp"
#include "msfcn/network.hpp"
#include "msfcn/nn/loss.hpp"
#include "msfcn/trainer.hpp"
#include "support/fusion.hpp"
#include "support/tempdir.hpp"

using namespace msfcn;
using msfcn::testing::TempDir;

namespace {

const nn::RunContext kInfer{nn::Mode::infer, nullptr};

long conv_params(int k, int cin, int cout) { return static_cast<long>(k) * k * cin * cout + cout; }

// Horizontal bands: background, epidermis, dermis with a tumour square.
std::pair<RgbRaster, LabelMask> toy_patch(int size, int offset) {
  RgbRaster img(size, size);
  LabelMask mask(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      TissueClass c = y < size / 4 + offset ? TissueClass::background
                      : y < size / 2        ? TissueClass::epidermis
                                            : TissueClass::dermis;
      if (c == TissueClass::dermis && x > size / 2 && y > 3 * size / 4) c = TissueClass::tumour;
      mask.at(x, y) = static_cast<std::uint8_t>(c);
      const Rgb col = palette_color(c);
      std::uint8_t* px = img.px(x, y);
      px[0] = col.r;
      px[1] = col.g;
      px[2] = col.b;
    }
  }
  return {img, mask};
}

train::PatchSet toy_set(int n, int size) {
  train::PatchSet set;
  for (int i = 0; i < n; ++i) {
    auto [img, mask] = toy_patch(size, i % 5);
    patch::PatchRecord r;
    r.slide_id = "toy";
    r.grid_x = i;
    r.size = size;
    r.valid_width = r.valid_height = size;
    set.records.push_back(r);
    set.features.push_back(img);
    set.labels.push_back(mask);
  }
  return set;
}

net::MsfcnConfig small_config(int size) {
  net::MsfcnConfig c;
  c.backbone.patch_size = size;
  c.backbone.widths = {8, 8, 16, 16, 16};
  c.backbone.fc_width = 32;
  return c;
}

}  // namespace

TEST_CASE("score maps match the input size") {
  for (int size : {64, 96, 128}) {
    net::MsfcnConfig c;
    c.backbone.patch_size = size;
    auto g = net::build<float>(c);
    const auto& y = g.forward(nn::Tensor({2, 3, size, size}), kInfer);
    CHECK(y.shape() == nn::Shape{2, 5, size, size});
    for (int stride : {32, 16, 8}) CHECK(g.blob(net::block_output(stride)).shape() == y.shape());
  }
}

TEST_CASE("parameter count") {
  net::MsfcnConfig c;
  auto g = net::build<float>(c);
  const int k = c.classes;
  long want = conv_params(3, 3, 16) + conv_params(3, 16, 16) + conv_params(3, 16, 32) + conv_params(3, 32, 32) +
              conv_params(3, 32, 64) + conv_params(3, 64, 64) + conv_params(3, 64, 128) +
              conv_params(3, 128, 128) + 2 * conv_params(3, 128, 128);
  want += conv_params(3, 128, 256) + conv_params(1, 256, 256) + conv_params(1, 256, k);
  want += conv_params(1, 128, k) + conv_params(1, 64, k);     // skip scores on pool4, pool3
  want += 2L * 4 * 4 * k * k;                                  // x2 upsamplers
  want += (64L * 64 + 32L * 32 + 16L * 16) * k * k;            // per-block upsamplers
  CHECK(static_cast<long>(g.parameter_count()) == want);
}

TEST_CASE("config validation and JSON round trip") {
  net::MsfcnConfig c;
  c.init_seed = 17;
  c.blocks[1].fusion_weight = 0.25;
  const nlohmann::json j = c;
  const auto back = j.get<net::MsfcnConfig>();
  CHECK(nlohmann::json(back) == j);

  auto bad = c;
  bad.backbone.patch_size = 100;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.blocks[2].skip_source = "pool9";
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("fusion weights (1, 0, 0) reduce to the stride-32 network") {
  CHECK(testing::fusion_degeneracy_gap(64, 3, 41) == 0.0);
}

TEST_CASE("argmax is invariant to a positive scaling of the fusion weights") {
  std::mt19937_64 rng(42);
  net::MsfcnConfig a;
  a.backbone.patch_size = 64;
  auto ga = net::build<float>(a);
  testing::randomize_parameters(ga, rng);
  auto b = a;
  for (auto& blk : b.blocks) blk.fusion_weight *= 4.0;  // powers of two keep the sums exact
  auto gb = net::build<float>(b);
  net::copy_shared_parameters(ga, gb);
  nn::Tensor x({1, 3, 64, 64});
  for (auto& v : x.values()) v = static_cast<float>(static_cast<int>(rng() % 256) - 128);
  const auto ca = nn::argmax_channels(ga.forward(x, kInfer));
  const auto cb = nn::argmax_channels(gb.forward(x, kInfer));
  CHECK(ca == cb);
}

TEST_CASE("one epoch of training, checkpoint round trip and inference") {
  TempDir dir("network_train");
  const int size = 64;
  const auto set = toy_set(8, size);
  const auto mean = patch::compute_mean_image(set.features);
  const auto config = small_config(size);

  train::Trainer trainer(config, mean);
  train::TrainOptions opts;
  opts.sgd.epochs = 1;
  opts.sgd.minibatch = 2;
  opts.sgd.lr_start = 1e-3;
  opts.sgd.lr_end = 1e-4;
  int callbacks = 0;
  opts.on_epoch = [&](const train::EpochLog&) { ++callbacks; };
  const auto result = trainer.fit(set, set, opts);
  REQUIRE(result.curve.size() == 1);
  CHECK(callbacks == 1);
  CHECK(result.iterations == 4);
  CHECK(std::isfinite(result.curve[0].train_loss));
  REQUIRE(result.curve[0].val_miou.has_value());

  trainer.save(dir / "model.ckpt", result, opts.sgd);
  const auto ckpt = nn::load_checkpoint(dir / "model.ckpt");
  CHECK(train::config_from_checkpoint(ckpt).backbone.widths == config.backbone.widths);
  CHECK(ckpt.header.at("iteration") == 4);

  // A checkpoint-backed predictor agrees with the in-memory model.
  train::Predictor from_disk(config, ckpt, mean);
  train::Predictor in_memory(config, trainer.graph(), mean);
  for (std::size_t i = 0; i < set.size(); ++i)
    CHECK(from_disk.predict_patch(set.features[i]) == in_memory.predict_patch(set.features[i]));

  // Whole-slide inference does not depend on the thread count.
  RgbRaster slide(150, 100, {128, 100, 90});
  std::mt19937_64 rng(43);
  for (auto& v : slide.pixels) v = static_cast<std::uint8_t>(rng());
  const auto one = from_disk.infer_slide(slide, 1);
  const auto three = from_disk.infer_slide(slide, 3);
  CHECK(one.width == 150);
  CHECK(one.height == 100);
  CHECK(one == three);

  // Warm start copies parameters without training.
  train::Trainer warm(config, mean);
  warm.warm_start(ckpt);
  for (auto* p : warm.graph().parameters()) CHECK(p->value == trainer.graph().find_parameter(p->name)->value);
}

TEST_CASE("training is reproducible from the seed") {
  const int size = 64;
  const auto set = toy_set(4, size);
  const auto mean = patch::compute_mean_image(set.features);
  train::TrainOptions opts;
  opts.sgd.epochs = 1;
  opts.validate_each_epoch = false;
  train::Trainer a(small_config(size), mean), b(small_config(size), mean);
  const auto ra = a.fit(set, {}, opts);
  const auto rb = b.fit(set, {}, opts);
  CHECK(ra.curve[0].train_loss == rb.curve[0].train_loss);
  CHECK(ra.rng_state == rb.rng_state);
  for (auto* p : a.graph().parameters()) CHECK(p->value == b.graph().find_parameter(p->name)->value);
}

TEST_CASE("trainer preconditions") {
  const auto set = toy_set(2, 64);
  const auto mean = patch::compute_mean_image(set.features);
  CHECK_THROWS_AS(train::Trainer(small_config(128), mean), Error);
  train::Trainer t(small_config(64), mean);
  train::TrainOptions opts;
  opts.sgd.epochs = 1;
  try {
    t.fit({}, {}, opts);
    FAIL("expected EmptyTrainingSet");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::empty_training_set);
  }
}
