#include <doctest.h>

#include <json.hpp>

#include "msfcn/raster.hpp"
#include "support/cli_pipeline.hpp"
#include "support/tempdir.hpp"

using namespace msfcn;
using msfcn::testing::run_cli;
using msfcn::testing::slurp;
using msfcn::testing::TempDir;
namespace fs = std::filesystem;

namespace {

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

void small_synth_config(const fs::path& p) {
  testing::write_text(p, R"({"spec":{"width":256,"height":256,"surface_y":64}})");
}

}  // namespace

TEST_CASE("synth is byte-reproducible for a seed") {
  TempDir dir("cli_synth");
  small_synth_config(dir / "c.json");
  for (const char* out : {"a", "b"})
    REQUIRE(run_cli("--seed 5 synth --n 3 --config " + q(dir / "c.json") + " --out " + q(dir / out)) == 0);
  CHECK(slurp(dir / "a/dataset.json") == slurp(dir / "b/dataset.json"));
  for (const char* f : {"slide_000.png", "slide_001.label.png", "slide_002.meta.json"})
    CHECK(slurp(dir / "a/slides" / f) == slurp(dir / "b/slides" / f));
  CHECK(read_json(dir / "a/run_config.json").at("globals").at("seed") == 5);
}

TEST_CASE("patchify then stitch restores the label masks") {
  TempDir dir("cli_stitch");
  small_synth_config(dir / "c.json");
  REQUIRE(run_cli("--seed 6 synth --n 3 --config " + q(dir / "c.json") + " --out " + q(dir / "data")) == 0);
  REQUIRE(run_cli("patchify --dataset " + q(dir / "data/dataset.json") + " --patch-size 96 --out " +
                  q(dir / "patches")) == 0);
  REQUIRE(run_cli("stitch --manifest " + q(dir / "patches/manifest.jsonl") + " --out " + q(dir / "stitched")) == 0);
  for (const char* id : {"slide_000", "slide_001", "slide_002"}) {
    const auto orig = load_label_mask(dir / "data/slides" / (std::string(id) + ".label.png"));
    CHECK(load_label_mask(dir / "stitched" / (std::string(id) + ".label.png")) == orig);
  }
}

TEST_CASE("evaluate scores a perfect pair as one") {
  TempDir dir("cli_eval");
  small_synth_config(dir / "c.json");
  REQUIRE(run_cli("--seed 7 synth --n 3 --config " + q(dir / "c.json") + " --out " + q(dir / "data")) == 0);
  const auto mask = dir / "data/slides/slide_000.label.png";
  REQUIRE(run_cli("evaluate --truth " + q(mask) + " --pred " + q(mask) + " --out " + q(dir / "eval.json")) == 0);
  const auto j = read_json(dir / "eval.json");
  CHECK(j.at("pooled").at("score").get<double>() == 1.0);
  CHECK(j.at("pooled").at("miou").get<double>() == 1.0);

  REQUIRE(run_cli("breslow --mask " + q(mask) + " --out " + q(dir / "breslow.json")) == 0);
  const auto b = read_json(dir / "breslow.json");
  const auto meta = read_json(dir / "data/dataset.json").at("slides").at(0);
  CHECK(std::abs(b.at("thickness_um").get<double>() - meta.at("analytic_breslow_um").get<double>()) <= 1.5 * 0.25);

  REQUIRE(run_cli("overlay --truth " + q(mask) + " --pred " + q(mask) + " --class epidermis --out " +
                  q(dir / "overlay.png")) == 0);
  CHECK(fs::exists(dir / "overlay.png"));
}

TEST_CASE("kappa from observed agreement and from a rating table") {
  TempDir dir("cli_kappa");
  REQUIRE(run_cli("kappa --p-observed 0.75 --categories 2 --out " + q(dir / "k.json")) == 0);
  CHECK(read_json(dir / "k.json").at("kappa").get<double>() == 0.5);
  testing::write_text(dir / "r.csv", "1,1,2,2\n2,1,2,1\n");
  REQUIRE(run_cli("kappa --ratings " + q(dir / "r.csv") + " --categories 2 --out " + q(dir / "k2.json")) == 0);
  CHECK(read_json(dir / "k2.json").at("kappa").get<double>() == doctest::Approx(-1.0 / 3.0));
}

TEST_CASE("small end-to-end pipeline") {
  TempDir dir("cli_pipeline");
  testing::PipelineOptions opts;
  opts.synth_config = testing::small_slides_config(256);
  opts.seed = 11;
  opts.train_args = "--lr-start 1e-3 --lr-end 1e-4";
  REQUIRE(testing::run_pipeline(dir.path(), opts) == 0);
  CHECK(fs::exists(dir / "model/model.ckpt"));
  CHECK(fs::exists(dir / "model/loss_curve.csv"));
  CHECK(fs::exists(dir / "balanced/balance_report.json"));
  const auto eval = read_json(dir / "eval.json");
  CHECK(eval.at("per_slide").size() == 1);
  // A second balance of the balanced manifest is refused as a data error.
  CHECK(run_cli("balance --manifest " + q(dir / "balanced/manifest.jsonl") + " --out " + q(dir / "again")) == 3);
}

TEST_CASE("exit codes") {
  TempDir dir("cli_codes");
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("synth") == 2);                                           // missing --out
  CHECK(run_cli("nosuchcommand") == 2);
  CHECK(run_cli("synth --n 2 --out " + q(dir / "x")) == 3);               // too few patients
  CHECK(run_cli("breslow --mask " + q(dir / "missing.png")) == 3);
  CHECK(run_cli("kappa --p-observed 0.5 --categories 1") == 3);          // degenerate table
  CHECK(run_cli("--isa sse9 synth --n 3 --out " + q(dir / "y")) == 2);
  testing::write_text(dir / "bad.json", "{not json");
  CHECK(run_cli("synth --n 3 --config " + q(dir / "bad.json") + " --out " + q(dir / "z")) == 2);
}
