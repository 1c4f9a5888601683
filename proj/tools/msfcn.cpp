// msfcn: command-line front end for the segmentation pipeline.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "msfcn/balance.hpp"
#include "msfcn/breslow.hpp"
#include "msfcn/error.hpp"
#include "msfcn/metrics.hpp"
#include "msfcn/simd/kernels.hpp"
#include "msfcn/synth.hpp"
#include "msfcn/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace msfcn;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  int threads = 0;
  bool deterministic = false;
  bool seed_given = false;

  int worker_threads() const {
    if (deterministic) return 1;
    if (threads > 0) return threads;
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  }
};

void log(const std::string& msg) { std::cerr << msg << "\n"; }

json read_json_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(Errc::invalid_config, "cannot open config " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw Error(Errc::invalid_config, path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(Errc::io, "cannot write " + path.string());
  os << j.dump(2) << "\n";
}

// Result JSON goes to --out when it names a file, otherwise to stdout.
void emit(const json& result, const fs::path& out_file) {
  if (!out_file.empty()) write_json_file(out_file, result);
  std::cout << result.dump(2) << "\n";
}

json globals_json(const Globals& g) {
  return {{"seed", g.seed}, {"threads", g.worker_threads()}, {"deterministic", g.deterministic}};
}

void write_run_config(const fs::path& dir, const std::string& command, json config, const Globals& g) {
  config["command"] = command;
  config["globals"] = globals_json(g);
  write_json_file(dir / "run_config.json", config);
}

// Provenance for a single-file output: <out>.run_config.json.
void write_run_config_beside(const fs::path& out_file, const std::string& command, json config, const Globals& g) {
  config["command"] = command;
  config["globals"] = globals_json(g);
  write_json_file(fs::path(out_file.string() + ".run_config.json"), config);
}

json histogram_json(const ClassHistogram& h) {
  json o = json::object();
  for (TissueClass c : kAllClasses) o[std::string(class_name(c))] = h[class_id(c)];
  return o;
}

TissueClass parse_class(const std::string& name) {
  const auto c = class_from_name(name);
  if (!c) throw Error(Errc::invalid_config, "unknown class " + name);
  return *c;
}

patch::MeanImage mean_for_checkpoint(const nn::CheckpointData& ckpt, const fs::path& ckpt_path,
                                     const fs::path& override_path) {
  fs::path p = override_path;
  if (p.empty()) {
    const std::string ref = ckpt.header.value("mean_image", std::string());
    if (ref.empty()) throw Error(Errc::invalid_config, "checkpoint names no mean image; pass --mean");
    p = ckpt_path.parent_path() / ref;
  }
  return patch::load_mean_image(p);
}

std::vector<SlideRecord> select_slides(const fs::path& dataset, const std::string& split,
                                       const std::vector<std::string>& slide_paths) {
  std::vector<SlideRecord> out;
  if (!dataset.empty()) {
    for (auto& s : synth::load_dataset(dataset)) {
      if (split == "all" || split_name(s.split) == split) out.push_back(std::move(s));
    }
  }
  for (const auto& p : slide_paths) {
    SlideRecord r;
    r.feature_path = p;
    r.slide_id = fs::path(p).stem().string();
    if (const auto meta = load_sidecar(p)) {
      if (!meta->slide_id.empty()) r.slide_id = meta->slide_id;
      r.microns_per_pixel = meta->microns_per_pixel;
    }
    out.push_back(std::move(r));
  }
  if (out.empty()) throw Error(Errc::invalid_config, "no slides selected");
  return out;
}

// ------------------------------------------------------------------ commands

struct SynthArgs {
  int n = 10;
  fs::path out;
  fs::path config;
  bool fixed_geometry = false;
};

int cmd_synth(const SynthArgs& a, const Globals& g) {
  synth::SynthSpec spec;
  synth::DatasetOptions opts;
  json cfg = json::object();
  if (!a.config.empty()) {
    cfg = read_json_file(a.config);
    spec = cfg.value("spec", json::object()).get<synth::SynthSpec>();
    if (cfg.contains("ratios")) {
      const auto& r = cfg.at("ratios");
      opts.ratios = {r.value("train", 0.70), r.value("val", 0.15), r.value("test", 0.15)};
    }
    opts.vary_geometry = cfg.value("vary_geometry", true);
  }
  if (a.fixed_geometry) opts.vary_geometry = false;
  if (a.out.empty()) throw Error(Errc::invalid_config, "synth needs --out");
  const auto slides = synth::generate_dataset(a.n, spec, g.seed, a.out, opts);
  std::map<std::string, int> splits{{"train", 0}, {"val", 0}, {"test", 0}};
  for (const auto& s : slides) ++splits[std::string(split_name(s.split))];
  write_run_config(a.out, "synth",
                   {{"n", a.n},
                    {"spec", spec},
                    {"ratios", {{"train", opts.ratios.train}, {"val", opts.ratios.val}, {"test", opts.ratios.test}}},
                    {"vary_geometry", opts.vary_geometry}},
                   g);
  emit({{"slides", slides.size()}, {"splits", splits}, {"dataset", "dataset.json"}}, {});
  return 0;
}

struct PatchifyArgs {
  fs::path dataset;
  int patch_size = patch::kDefaultPatchSize;
  fs::path out;
};

int cmd_patchify(const PatchifyArgs& a, const Globals& g) {
  if (a.out.empty()) throw Error(Errc::invalid_config, "patchify needs --out");
  const auto slides = synth::load_dataset(a.dataset);
  const auto manifest = patch::patchify(slides, a.patch_size, a.out);
  patch::save_manifest(a.out / "manifest.jsonl", manifest);
  write_run_config(a.out, "patchify", {{"dataset", a.dataset.generic_string()}, {"patch_size", a.patch_size}}, g);
  json totals = json::object();
  for (const auto& [split, h] : manifest.class_totals()) totals[std::string(split_name(split))] = histogram_json(h);
  emit({{"patches", manifest.records.size()}, {"manifest", "manifest.jsonl"}, {"class_totals", totals}}, {});
  return 0;
}

struct BalanceArgs {
  fs::path manifest;
  fs::path out;
  double bg_threshold = balance::kDefaultBackgroundThreshold;
};

int cmd_balance(const BalanceArgs& a, const Globals& g) {
  if (a.out.empty()) throw Error(Errc::invalid_config, "balance needs --out");
  const auto manifest = patch::load_manifest(a.manifest);
  auto result = balance::balance_dataset(manifest, {a.bg_threshold}, a.out);
  const auto mean = patch::compute_mean_image(result.manifest);
  patch::save_mean_image(a.out / "mean.bin", mean);
  result.manifest.mean_image_ref = a.out / "mean.bin";
  patch::save_manifest(a.out / "manifest.jsonl", result.manifest);
  const json report = result.report;
  write_json_file(a.out / "balance_report.json", report);
  write_run_config(a.out, "balance", {{"manifest", a.manifest.generic_string()}, {"bg_threshold", a.bg_threshold}},
                   g);
  std::cerr << balance::format_report(result.report);
  emit(report, {});
  return 0;
}

struct TrainArgs {
  fs::path manifest;
  fs::path config;
  fs::path out;
  fs::path warm_start;
  std::optional<int> epochs;
  std::optional<double> lr_start;
  std::optional<double> lr_end;
  std::optional<int> minibatch;
  bool no_val = false;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a, const Globals& g) {
  if (a.out.empty()) throw Error(Errc::invalid_config, "train needs --out");
  const auto manifest = patch::load_manifest(a.manifest);
  if (!manifest.balanced) log("warning: training on an unbalanced manifest");

  net::MsfcnConfig model;
  nn::SgdConfig sgd;
  if (!a.config.empty()) {
    const json cfg = read_json_file(a.config);
    try {
      if (cfg.contains("model")) model = cfg.at("model").get<net::MsfcnConfig>();
      if (cfg.contains("sgd")) cfg.at("sgd").get_to(sgd);
    } catch (const json::exception& e) {
      throw Error(Errc::invalid_config, a.config.string() + ": " + e.what());
    }
    if (cfg.contains("model") && cfg.at("model").contains("backbone") &&
        cfg.at("model").at("backbone").contains("patch_size") && model.backbone.patch_size != manifest.patch_size) {
      throw Error(Errc::invalid_config, "model patch_size differs from the manifest's");
    }
  }
  model.backbone.patch_size = manifest.patch_size;
  if (a.epochs) sgd.epochs = *a.epochs;
  if (a.lr_start) sgd.lr_start = *a.lr_start;
  if (a.lr_end) sgd.lr_end = *a.lr_end;
  if (a.minibatch) sgd.minibatch = *a.minibatch;
  if (g.seed_given || a.config.empty()) {
    sgd.seed = g.seed;
    model.init_seed = g.seed;
  }
  model.validate();
  sgd.validate();

  fs::create_directories(a.out);
  patch::MeanImage mean = manifest.mean_image_ref.empty() ? patch::compute_mean_image(manifest)
                                                          : patch::load_mean_image(manifest.mean_image_ref);
  patch::save_mean_image(a.out / "mean.bin", mean);
  mean = patch::load_mean_image(a.out / "mean.bin");

  train::Trainer trainer(model, mean);
  if (!a.warm_start.empty()) {
    trainer.warm_start(nn::load_checkpoint(a.warm_start));
    log("warm start from " + a.warm_start.string());
  }
  const auto train_set = train::load_patches(manifest, Split::train);
  const auto val_set = a.no_val ? train::PatchSet{} : train::load_patches(manifest, Split::val);
  log("training on " + std::to_string(train_set.size()) + " patches, validating on " +
      std::to_string(val_set.size()));

  train::TrainOptions opts;
  opts.sgd = sgd;
  opts.validate_each_epoch = !a.no_val;
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<double> epoch_seconds;
  opts.on_epoch = [&](const train::EpochLog& e) {
    epoch_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    if (a.quiet) return;
    char line[160];
    std::snprintf(line, sizeof line, "epoch %3d  iter %6ld  lr %.3e  loss %.5f  val_miou %s", e.epoch, e.iteration,
                  e.lr, e.train_loss, e.val_miou ? std::to_string(*e.val_miou).c_str() : "-");
    log(line);
  };
  const auto result = trainer.fit(train_set, val_set, opts);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  json extra = {{"mean_image", "mean.bin"}};
  if (!a.warm_start.empty()) extra["warm_start"] = true;
  trainer.save(a.out / "model.ckpt", result, sgd, extra);
  train::write_loss_curve(a.out / "loss_curve.csv", result.curve);

  json curve = json::array();
  for (const auto& e : result.curve) {
    curve.push_back({{"epoch", e.epoch},
                     {"iteration", e.iteration},
                     {"lr", e.lr},
                     {"train_loss", e.train_loss},
                     {"val_miou", e.val_miou ? json(*e.val_miou) : json(nullptr)}});
  }
  const json report = {{"iterations", result.iterations},
                       {"train_patches", train_set.size()},
                       {"val_patches", val_set.size()},
                       {"parameters", trainer.graph().parameter_count()},
                       {"curve", curve},
                       {"checkpoint", "model.ckpt"}};
  write_json_file(a.out / "train_report.json", report);
  write_json_file(a.out / "timing.json", {{"train_seconds", seconds}, {"epoch_end_seconds", epoch_seconds}});
  write_run_config(a.out, "train",
                   {{"manifest", a.manifest.generic_string()},
                    {"model", model},
                    {"sgd", sgd},
                    {"warm_start", a.warm_start.generic_string()},
                    {"validate", !a.no_val}},
                   g);
  emit(report, {});
  return 0;
}

struct InferArgs {
  fs::path checkpoint;
  fs::path mean;
  fs::path dataset;
  std::string split = "test";
  std::vector<std::string> slides;
  fs::path out;
};

int cmd_infer(const InferArgs& a, const Globals& g) {
  if (a.out.empty()) throw Error(Errc::invalid_config, "infer needs --out");
  const auto ckpt = nn::load_checkpoint(a.checkpoint);
  const auto config = train::config_from_checkpoint(ckpt);
  train::Predictor predictor(config, ckpt, mean_for_checkpoint(ckpt, a.checkpoint, a.mean));
  const auto slides = select_slides(a.dataset, a.split, a.slides);
  fs::create_directories(a.out);

  json items = json::array();
  json timing = json::array();
  double total_seconds = 0.0;
  for (const auto& s : slides) {
    const RgbRaster raster = load_raster(s.feature_path);
    train::InferenceTiming t;
    const auto wall0 = std::chrono::steady_clock::now();
    const LabelMask mask = predictor.infer_slide(raster, g.worker_threads(), &t);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
    const std::string name = s.slide_id + ".pred.png";
    save_label_mask(a.out / name, mask);
    items.push_back({{"slide_id", s.slide_id},
                     {"width", raster.width},
                     {"height", raster.height},
                     {"patches", t.patches},
                     {"prediction", name},
                     {"histogram", histogram_json(class_histogram(mask))}});
    timing.push_back({{"slide_id", s.slide_id}, {"network_seconds", t.network_seconds}, {"wall_seconds", wall}});
    total_seconds += t.network_seconds;
    log("inferred " + s.slide_id + " (" + std::to_string(t.patches) + " patches)");
  }
  const json report = {{"slides", items}};
  write_json_file(a.out / "infer_report.json", report);
  write_json_file(a.out / "timing.json", {{"slides", timing}, {"network_seconds", total_seconds}});
  write_run_config(a.out, "infer",
                   {{"checkpoint", a.checkpoint.generic_string()},
                    {"dataset", a.dataset.generic_string()},
                    {"split", a.split},
                    {"slides", a.slides}},
                   g);
  emit(report, {});
  return 0;
}

struct StitchArgs {
  fs::path manifest;
  std::string slide;
  fs::path out;
};

int cmd_stitch(const StitchArgs& a, const Globals& g) {
  if (a.out.empty()) throw Error(Errc::invalid_config, "stitch needs --out");
  const auto manifest = patch::load_manifest(a.manifest);
  std::map<std::string, std::vector<std::pair<patch::PatchRecord, LabelMask>>> by_slide;
  for (const auto& r : manifest.records) {
    if (r.augmentation != patch::Augmentation::none) continue;
    if (!a.slide.empty() && r.slide_id != a.slide) continue;
    by_slide[r.slide_id].emplace_back(r, load_label_mask(r.label_path));
  }
  if (by_slide.empty()) throw Error(Errc::missing_tile, "no tiles selected");
  fs::create_directories(a.out);
  json items = json::array();
  for (const auto& [id, tiles] : by_slide) {
    const LabelMask mask = patch::stitch(tiles);
    save_label_mask(a.out / (id + ".label.png"), mask);
    items.push_back({{"slide_id", id}, {"width", mask.width}, {"height", mask.height}, {"tiles", tiles.size()}});
  }
  write_run_config(a.out, "stitch", {{"manifest", a.manifest.generic_string()}, {"slide", a.slide}}, g);
  emit({{"slides", items}}, {});
  return 0;
}

struct EvaluateArgs {
  std::vector<std::string> truth;
  std::vector<std::string> pred;
  fs::path dataset;
  fs::path pred_dir;
  std::string split = "test";
  fs::path timing;
  fs::path out;
};

int cmd_evaluate(const EvaluateArgs& a, const Globals& g) {
  std::vector<std::tuple<std::string, fs::path, fs::path>> pairs;
  if (a.truth.size() != a.pred.size()) throw Error(Errc::invalid_config, "--truth and --pred must pair up");
  for (std::size_t i = 0; i < a.truth.size(); ++i) {
    pairs.emplace_back(fs::path(a.truth[i]).stem().stem().string(), a.truth[i], a.pred[i]);
  }
  if (!a.dataset.empty()) {
    if (a.pred_dir.empty()) throw Error(Errc::invalid_config, "--dataset needs --pred-dir");
    for (const auto& s : synth::load_dataset(a.dataset)) {
      if (a.split != "all" && split_name(s.split) != a.split) continue;
      pairs.emplace_back(s.slide_id, s.label_path, a.pred_dir / (s.slide_id + ".pred.png"));
    }
  }
  if (pairs.empty()) throw Error(Errc::invalid_config, "nothing to evaluate");
  std::vector<std::pair<std::string, eval::ConfusionMatrix>> matrices;
  for (const auto& [id, t, p] : pairs) {
    eval::ConfusionMatrix cm;
    cm.accumulate(load_label_mask(t), load_label_mask(p));
    matrices.emplace_back(id, cm);
  }
  auto report = eval::evaluate(matrices);
  if (!a.timing.empty()) report.wall_time_s = read_json_file(a.timing).value("network_seconds", 0.0);
  std::cerr << eval::format_table(report);
  const json j = report;
  if (!a.out.empty()) {
    write_run_config_beside(a.out, "evaluate",
                            {{"truth", a.truth},
                             {"pred", a.pred},
                             {"dataset", a.dataset.generic_string()},
                             {"pred_dir", a.pred_dir.generic_string()},
                             {"split", a.split}},
                            g);
  }
  emit(j, a.out);
  return 0;
}

struct BreslowArgs {
  fs::path mask;
  std::optional<double> mpp;
  double window = morph::kDefaultWindowRadius;
  fs::path out;
};

int cmd_breslow(const BreslowArgs& a, const Globals& g) {
  const LabelMask mask = load_label_mask(a.mask);
  double mpp = kDefaultMicronsPerPixel;
  if (a.mpp) {
    mpp = *a.mpp;
  } else if (const auto meta = load_sidecar(a.mask)) {
    mpp = meta->microns_per_pixel;
  }
  const auto r = morph::breslow(mask, mpp, a.window);
  char line[96];
  std::snprintf(line, sizeof line, "Breslow thickness: %.1f um%s", r.thickness_um, r.clamped ? " (clamped)" : "");
  log(line);
  json j = r;
  j["microns_per_pixel"] = mpp;
  if (!a.out.empty()) {
    write_run_config_beside(a.out, "breslow", {{"mask", a.mask.generic_string()}, {"mpp", mpp}, {"window", a.window}},
                            g);
  }
  emit(j, a.out);
  return 0;
}

struct KappaArgs {
  fs::path ratings;
  int categories = 0;
  std::optional<double> p_observed;
  fs::path out;
};

eval::RaterTable read_ratings(const fs::path& path, int categories) {
  std::ifstream is(path);
  if (!is) throw Error(Errc::io, "cannot open " + path.string());
  eval::RaterTable t;
  t.categories = categories;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    std::vector<int> row;
    for (std::string tok; ss >> tok;) {
      try {
        row.push_back(std::stoi(tok));
      } catch (const std::exception&) {
        throw Error(Errc::decode, path.string() + ": bad rating '" + tok + "'");
      }
    }
    t.assignments.push_back(std::move(row));
  }
  return t;
}

int cmd_kappa(const KappaArgs& a, const Globals& g) {
  json j;
  if (a.p_observed) {
    j = {{"p_observed", *a.p_observed}, {"kappa", eval::free_marginal_kappa(*a.p_observed, a.categories)}};
  } else {
    if (a.ratings.empty()) throw Error(Errc::invalid_config, "kappa needs --ratings or --p-observed");
    const auto t = read_ratings(a.ratings, a.categories);
    const auto r = eval::randolph_kappa(t);
    j = {{"p_observed", r.p_observed},
         {"kappa", r.kappa},
         {"cases", t.assignments.size()},
         {"raters", t.assignments.front().size()}};
  }
  j["categories"] = a.categories;
  if (!a.out.empty()) {
    write_run_config_beside(a.out, "kappa",
                            {{"ratings", a.ratings.generic_string()},
                             {"categories", a.categories},
                             {"p_observed", a.p_observed ? json(*a.p_observed) : json(nullptr)}},
                            g);
  }
  emit(j, a.out);
  return 0;
}

struct OverlayArgs {
  fs::path truth;
  fs::path pred;
  std::string cls = "tumour";
  fs::path out;
};

int cmd_overlay(const OverlayArgs& a, const Globals& g) {
  if (a.out.empty()) throw Error(Errc::invalid_config, "overlay needs --out");
  const TissueClass cls = parse_class(a.cls);
  const auto truth = load_label_mask(a.truth);
  const auto pred = load_label_mask(a.pred);
  save_raster(a.out, morph::error_overlay(truth, pred, cls));
  std::uint64_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < truth.labels.size(); ++i) {
    const bool t = truth.labels[i] == class_id(cls), p = pred.labels[i] == class_id(cls);
    tp += t && p;
    fp += p && !t;
    fn += t && !p;
  }
  write_run_config_beside(a.out, "overlay",
                          {{"truth", a.truth.generic_string()}, {"pred", a.pred.generic_string()}, {"class", a.cls}},
                          g);
  emit({{"class", a.cls}, {"true_positive", tp}, {"false_positive", fp}, {"false_negative", fn}}, {});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-stride FCN tissue segmentation pipeline"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random stream");
  app.add_option("--threads", g.threads, "Worker threads (default: logical cores)")->check(CLI::NonNegativeNumber);
  app.add_flag("--deterministic", g.deterministic, "Single-threaded, bit-reproducible run");
  std::string isa;
  app.add_option("--isa", isa, "Kernel set: scalar or avx2 (default: best available)");

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a seeded synthetic slide dataset");
  synth_cmd->add_option("--n", synth_args.n, "Number of slides")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--out", synth_args.out, "Output directory")->required();
  synth_cmd->add_option("--config", synth_args.config, "JSON {spec, ratios, vary_geometry}");
  synth_cmd->add_flag("--fixed-geometry", synth_args.fixed_geometry, "Use the base spec for every slide");

  PatchifyArgs patchify_args;
  auto* patchify_cmd = app.add_subcommand("patchify", "Tile slides into patch pairs and a manifest");
  patchify_cmd->add_option("--dataset", patchify_args.dataset, "dataset.json")->required();
  patchify_cmd->add_option("--patch-size", patchify_args.patch_size, "Patch edge in pixels");
  patchify_cmd->add_option("--out", patchify_args.out, "Output directory")->required();

  BalanceArgs balance_args;
  auto* balance_cmd = app.add_subcommand("balance", "Undersample and augment the training split");
  balance_cmd->add_option("--manifest", balance_args.manifest, "Input manifest.jsonl")->required();
  balance_cmd->add_option("--out", balance_args.out, "Output directory")->required();
  balance_cmd->add_option("--bg-threshold", balance_args.bg_threshold, "Background fraction for removal");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train the network on a patch manifest");
  train_cmd->add_option("--manifest", train_args.manifest, "Balanced manifest.jsonl")->required();
  train_cmd->add_option("--config", train_args.config, "JSON {model, sgd}");
  train_cmd->add_option("--out", train_args.out, "Output directory")->required();
  train_cmd->add_option("--warm-start", train_args.warm_start, "Checkpoint to start from");
  train_cmd->add_option("--epochs", train_args.epochs, "Epochs");
  train_cmd->add_option("--lr-start", train_args.lr_start, "Initial learning rate");
  train_cmd->add_option("--lr-end", train_args.lr_end, "Final learning rate");
  train_cmd->add_option("--minibatch", train_args.minibatch, "Patches per update");
  train_cmd->add_flag("--no-val", train_args.no_val, "Skip per-epoch validation");
  train_cmd->add_flag("--quiet", train_args.quiet, "No per-epoch log lines");

  InferArgs infer_args;
  auto* infer_cmd = app.add_subcommand("infer", "Predict class masks for whole slides");
  infer_cmd->add_option("--checkpoint", infer_args.checkpoint, "model.ckpt")->required();
  infer_cmd->add_option("--mean", infer_args.mean, "Mean image (default: the checkpoint's)");
  infer_cmd->add_option("--dataset", infer_args.dataset, "dataset.json");
  infer_cmd->add_option("--split", infer_args.split, "train, val, test or all");
  infer_cmd->add_option("--slide", infer_args.slides, "Slide PNG (repeatable)");
  infer_cmd->add_option("--out", infer_args.out, "Output directory")->required();

  StitchArgs stitch_args;
  auto* stitch_cmd = app.add_subcommand("stitch", "Reassemble label patches into slide masks");
  stitch_cmd->add_option("--manifest", stitch_args.manifest, "manifest.jsonl")->required();
  stitch_cmd->add_option("--slide", stitch_args.slide, "Only this slide id");
  stitch_cmd->add_option("--out", stitch_args.out, "Output directory")->required();

  EvaluateArgs eval_args;
  auto* eval_cmd = app.add_subcommand("evaluate", "Segmentation metrics against ground truth");
  eval_cmd->add_option("--truth", eval_args.truth, "Ground-truth mask (repeatable)");
  eval_cmd->add_option("--pred", eval_args.pred, "Predicted mask (repeatable)");
  eval_cmd->add_option("--dataset", eval_args.dataset, "dataset.json");
  eval_cmd->add_option("--pred-dir", eval_args.pred_dir, "Directory of <slide>.pred.png");
  eval_cmd->add_option("--split", eval_args.split, "Split to evaluate with --dataset");
  eval_cmd->add_option("--timing", eval_args.timing, "timing.json from infer");
  eval_cmd->add_option("--out", eval_args.out, "Report JSON path");

  BreslowArgs breslow_args;
  auto* breslow_cmd = app.add_subcommand("breslow", "Estimate Breslow thickness from a mask");
  breslow_cmd->add_option("--mask", breslow_args.mask, "Label mask PNG")->required();
  breslow_cmd->add_option("--mpp", breslow_args.mpp, "Microns per pixel (default: sidecar or 0.25)");
  breslow_cmd->add_option("--window", breslow_args.window, "Surface window radius in pixels");
  breslow_cmd->add_option("--out", breslow_args.out, "Result JSON path");

  KappaArgs kappa_args;
  auto* kappa_cmd = app.add_subcommand("kappa", "Free-marginal multirater kappa");
  kappa_cmd->add_option("--ratings", kappa_args.ratings, "CSV: one case per row, one rater per column");
  kappa_cmd->add_option("--categories", kappa_args.categories, "Number of categories q")->required();
  kappa_cmd->add_option("--p-observed", kappa_args.p_observed, "Known observed agreement");
  kappa_cmd->add_option("--out", kappa_args.out, "Result JSON path");

  OverlayArgs overlay_args;
  auto* overlay_cmd = app.add_subcommand("overlay", "TP/FP/FN error overlay for one class");
  overlay_cmd->add_option("--truth", overlay_args.truth, "Ground-truth mask")->required();
  overlay_cmd->add_option("--pred", overlay_args.pred, "Predicted mask")->required();
  overlay_cmd->add_option("--class", overlay_args.cls, "Class name");
  overlay_cmd->add_option("--out", overlay_args.out, "Overlay PNG path")->required();

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorClass::config);
  }
  g.seed_given = app.count("--seed") > 0;

  try {
    if (isa == "scalar") {
      simd::set_active_isa(simd::Isa::scalar);
    } else if (isa == "avx2") {
      simd::set_active_isa(simd::Isa::avx2);
    } else if (!isa.empty()) {
      throw Error(Errc::invalid_config, "unknown --isa " + isa);
    }
    if (*synth_cmd) return cmd_synth(synth_args, g);
    if (*patchify_cmd) return cmd_patchify(patchify_args, g);
    if (*balance_cmd) return cmd_balance(balance_args, g);
    if (*train_cmd) return cmd_train(train_args, g);
    if (*infer_cmd) return cmd_infer(infer_args, g);
    if (*stitch_cmd) return cmd_stitch(stitch_args, g);
    if (*eval_cmd) return cmd_evaluate(eval_args, g);
    if (*breslow_cmd) return cmd_breslow(breslow_args, g);
    if (*kappa_cmd) return cmd_kappa(kappa_args, g);
    if (*overlay_cmd) return cmd_overlay(overlay_args, g);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(error_class(e.code()));
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorClass::config);
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorClass::data);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorClass::data);
  }
  return 0;
}
