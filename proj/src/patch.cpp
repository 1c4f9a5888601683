#include "msfcn/patch.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include "msfcn/error.hpp"

namespace msfcn::patch {
namespace fs = std::filesystem;

namespace {

constexpr std::array<std::string_view, 5> kAugNames{"none", "flip_lr", "flip_tb", "rot90", "rot270"};

// Both paths are taken relative to the working directory when not absolute.
fs::path relative_to(const fs::path& p, const fs::path& base) {
  if (p.empty()) return p;
  return fs::absolute(p).lexically_normal().lexically_relative(
      (base.empty() ? fs::current_path() : fs::absolute(base)).lexically_normal());
}

}  // namespace

std::string_view augmentation_name(Augmentation a) noexcept { return kAugNames[static_cast<int>(a)]; }

Augmentation augmentation_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kAugNames.size(); ++i) {
    if (kAugNames[i] == name) return static_cast<Augmentation>(i);
  }
  throw Error(Errc::decode, "unknown augmentation: " + std::string(name));
}

std::string PatchRecord::key() const {
  std::string k = slide_id + "/" + std::to_string(grid_x) + "_" + std::to_string(grid_y);
  if (augmentation != Augmentation::none) k += "_" + std::string(augmentation_name(augmentation));
  return k;
}

void to_json(nlohmann::json& j, const PatchRecord& r) {
  j = {{"type", "patch"},
       {"slide_id", r.slide_id},
       {"grid_x", r.grid_x},
       {"grid_y", r.grid_y},
       {"origin", {r.origin_x, r.origin_y}},
       {"size", r.size},
       {"valid", {r.valid_width, r.valid_height}},
       {"slide_size", {r.slide_width, r.slide_height}},
       {"padded", r.padded()},
       {"histogram", r.histogram},
       {"augmentation", augmentation_name(r.augmentation)},
       {"split", split_name(r.split)},
       {"source", r.source},
       {"feature_path", r.feature_path.generic_string()},
       {"label_path", r.label_path.generic_string()}};
}

void from_json(const nlohmann::json& j, PatchRecord& r) {
  r.slide_id = j.at("slide_id").get<std::string>();
  r.grid_x = j.at("grid_x").get<int>();
  r.grid_y = j.at("grid_y").get<int>();
  const auto origin = j.at("origin").get<std::array<int, 2>>();
  r.origin_x = origin[0];
  r.origin_y = origin[1];
  r.size = j.at("size").get<int>();
  const auto valid = j.at("valid").get<std::array<int, 2>>();
  r.valid_width = valid[0];
  r.valid_height = valid[1];
  const auto slide = j.at("slide_size").get<std::array<int, 2>>();
  r.slide_width = slide[0];
  r.slide_height = slide[1];
  r.histogram = j.at("histogram").get<ClassHistogram>();
  r.augmentation = augmentation_from_name(j.value("augmentation", std::string("none")));
  r.split = split_from_name(j.value("split", std::string("train")));
  r.source = j.value("source", std::string());
  r.feature_path = j.value("feature_path", std::string());
  r.label_path = j.value("label_path", std::string());
}

SplitTotals PatchManifest::class_totals() const {
  SplitTotals totals;
  for (Split s : {Split::train, Split::val, Split::test}) totals[s] = {};
  for (const auto& r : records) {
    auto& t = totals[r.split];
    for (int c = 0; c < kNumClasses; ++c) t[c] += r.histogram[c];
  }
  return totals;
}

std::vector<const PatchRecord*> PatchManifest::in_split(Split s) const {
  std::vector<const PatchRecord*> out;
  for (const auto& r : records) {
    if (r.split == s) out.push_back(&r);
  }
  return out;
}

void save_manifest(const fs::path& path, const PatchManifest& manifest) {
  const fs::path dir = path.parent_path();
  if (!dir.empty()) fs::create_directories(dir);
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(Errc::io, "cannot write " + path.string());
  nlohmann::json totals = nlohmann::json::object();
  for (const auto& [split, hist] : manifest.class_totals()) totals[std::string(split_name(split))] = hist;
  const nlohmann::json header = {{"type", "header"},
                                 {"patch_size", manifest.patch_size},
                                 {"balanced", manifest.balanced},
                                 {"class_totals", totals},
                                 {"mean_image", relative_to(manifest.mean_image_ref, dir).generic_string()}};
  os << header.dump() << "\n";
  for (PatchRecord r : manifest.records) {
    r.feature_path = relative_to(r.feature_path, dir);
    r.label_path = relative_to(r.label_path, dir);
    os << nlohmann::json(r).dump() << "\n";
  }
  if (!os) throw Error(Errc::io, "short write on " + path.string());
}

PatchManifest load_manifest(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(Errc::io, "cannot open " + path.string());
  const fs::path dir = path.parent_path();
  PatchManifest m;
  std::string line;
  bool have_header = false;
  try {
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      if (j.value("type", std::string()) == "header") {
        m.patch_size = j.at("patch_size").get<int>();
        m.balanced = j.value("balanced", false);
        const std::string mean = j.value("mean_image", std::string());
        if (!mean.empty()) m.mean_image_ref = dir / mean;
        have_header = true;
        continue;
      }
      PatchRecord r = j.get<PatchRecord>();
      if (!r.feature_path.empty() && r.feature_path.is_relative()) r.feature_path = dir / r.feature_path;
      if (!r.label_path.empty() && r.label_path.is_relative()) r.label_path = dir / r.label_path;
      m.records.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::decode, path.string() + ": " + e.what());
  }
  if (!have_header) throw Error(Errc::decode, path.string() + ": missing manifest header");
  for (const auto& r : m.records) {
    if (r.size != m.patch_size) throw Error(Errc::decode, "record " + r.key() + " has a different patch size");
  }
  return m;
}

std::vector<PatchRecord> tile_grid(const std::string& slide_id, int width, int height, int patch_size) {
  if (patch_size < 32 || patch_size % 32 != 0) {
    throw Error(Errc::invalid_config, "patch size must be a positive multiple of 32");
  }
  if (width < patch_size || height < patch_size) {
    throw Error(Errc::slide_smaller_than_patch, slide_id + " is " + std::to_string(width) + "x" +
                                                    std::to_string(height) + ", patch " + std::to_string(patch_size));
  }
  const int nx = (width + patch_size - 1) / patch_size;
  const int ny = (height + patch_size - 1) / patch_size;
  std::vector<PatchRecord> tiles;
  tiles.reserve(static_cast<std::size_t>(nx) * ny);
  for (int gy = 0; gy < ny; ++gy) {
    for (int gx = 0; gx < nx; ++gx) {
      PatchRecord r;
      r.slide_id = slide_id;
      r.grid_x = gx;
      r.grid_y = gy;
      r.origin_x = gx * patch_size;
      r.origin_y = gy * patch_size;
      r.size = patch_size;
      r.valid_width = std::min(patch_size, width - r.origin_x);
      r.valid_height = std::min(patch_size, height - r.origin_y);
      r.slide_width = width;
      r.slide_height = height;
      tiles.push_back(std::move(r));
    }
  }
  return tiles;
}

RgbRaster crop_raster(const RgbRaster& raster, const PatchRecord& tile) {
  RgbRaster out(tile.size, tile.size);
  out.microns_per_pixel = raster.microns_per_pixel;
  for (int y = 0; y < tile.valid_height; ++y) {
    const std::uint8_t* src = raster.px(tile.origin_x, tile.origin_y + y);
    std::copy(src, src + static_cast<std::size_t>(tile.valid_width) * 3, out.px(0, y));
  }
  return out;
}

LabelMask crop_mask(const LabelMask& mask, const PatchRecord& tile) {
  LabelMask out(tile.size, tile.size);
  for (int y = 0; y < tile.valid_height; ++y) {
    const std::uint8_t* src = &mask.labels[static_cast<std::size_t>(tile.origin_y + y) * mask.width + tile.origin_x];
    std::copy(src, src + tile.valid_width, &out.at(0, y));
  }
  return out;
}

std::vector<PatchRecord> extract_patches(const std::string& slide_id, Split split, const LabelMask& mask,
                                         int patch_size) {
  auto tiles = tile_grid(slide_id, mask.width, mask.height, patch_size);
  for (auto& t : tiles) {
    t.split = split;
    t.histogram = class_histogram(crop_mask(mask, t));
  }
  return tiles;
}

std::vector<PatchRecord> extract_patches(const SlideRecord& slide, int patch_size) {
  const LabelMask mask = load_label_mask(slide.label_path);
  return extract_patches(slide.slide_id, slide.split, mask, patch_size);
}

PatchManifest patchify(const std::vector<SlideRecord>& slides, int patch_size, const fs::path& out_root) {
  PatchManifest manifest;
  manifest.patch_size = patch_size;
  for (const auto& slide : slides) {
    const RgbRaster raster = load_raster(slide.feature_path);
    const LabelMask mask = load_label_mask(slide.label_path);
    if (raster.width != mask.width || raster.height != mask.height) {
      throw Error(Errc::shape_mismatch, slide.slide_id + ": feature and label sizes differ");
    }
    const fs::path dir = fs::path("patches") / split_name(slide.split) / slide.slide_id;
    for (auto& t : extract_patches(slide.slide_id, slide.split, mask, patch_size)) {
      const std::string stem = std::to_string(t.grid_x) + "_" + std::to_string(t.grid_y);
      t.feature_path = out_root / dir / (stem + ".png");
      t.label_path = out_root / dir / (stem + ".label.png");
      save_raster(t.feature_path, crop_raster(raster, t));
      save_label_mask(t.label_path, crop_mask(mask, t));
      manifest.records.push_back(std::move(t));
    }
  }
  return manifest;
}

LabelMask stitch(const std::vector<std::pair<PatchRecord, LabelMask>>& predictions) {
  if (predictions.empty()) throw Error(Errc::missing_tile, "no tiles to stitch");
  const PatchRecord& first = predictions.front().first;
  const int size = first.size;
  const int nx = (first.slide_width + size - 1) / size;
  const int ny = (first.slide_height + size - 1) / size;
  std::vector<char> seen(static_cast<std::size_t>(nx) * ny, 0);
  LabelMask out(first.slide_width, first.slide_height);
  for (const auto& [rec, tile] : predictions) {
    if (rec.augmentation != Augmentation::none) {
      throw Error(Errc::shape_mismatch, "cannot stitch augmented tile " + rec.key());
    }
    if (rec.slide_id != first.slide_id || rec.size != size || rec.slide_width != first.slide_width ||
        rec.slide_height != first.slide_height) {
      throw Error(Errc::shape_mismatch, "tile " + rec.key() + " belongs to a different grid");
    }
    if (tile.width != size || tile.height != size) {
      throw Error(Errc::shape_mismatch, "tile " + rec.key() + " is not " + std::to_string(size) + " px square");
    }
    if (rec.grid_x < 0 || rec.grid_x >= nx || rec.grid_y < 0 || rec.grid_y >= ny) {
      throw Error(Errc::shape_mismatch, "tile " + rec.key() + " lies outside the slide grid");
    }
    char& flag = seen[static_cast<std::size_t>(rec.grid_y) * nx + rec.grid_x];
    if (flag != 0) throw Error(Errc::duplicate_tile, rec.key());
    flag = 1;
    const int ox = rec.grid_x * size;
    const int oy = rec.grid_y * size;
    const int vw = std::min(size, first.slide_width - ox);
    const int vh = std::min(size, first.slide_height - oy);
    for (int y = 0; y < vh; ++y) {
      std::copy(&tile.labels[static_cast<std::size_t>(y) * size], &tile.labels[static_cast<std::size_t>(y) * size] + vw,
                &out.at(ox, oy + y));
    }
  }
  for (int gy = 0; gy < ny; ++gy) {
    for (int gx = 0; gx < nx; ++gx) {
      if (seen[static_cast<std::size_t>(gy) * nx + gx] == 0) {
        throw Error(Errc::missing_tile, first.slide_id + "/" + std::to_string(gx) + "_" + std::to_string(gy));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------- mean image

MeanImage compute_mean_image(const std::vector<RgbRaster>& patches) {
  if (patches.empty()) throw Error(Errc::empty_training_set, "no training patches for the mean image");
  const int size = patches.front().width;
  MeanImage mean;
  mean.size = size;
  mean.values.assign(static_cast<std::size_t>(3) * size * size, 0.0);
  for (const auto& p : patches) {
    if (p.width != size || p.height != size) throw Error(Errc::shape_mismatch, "mean image patches differ in size");
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const std::uint8_t* px = p.px(x, y);
        for (int c = 0; c < 3; ++c) mean.values[(static_cast<std::size_t>(c) * size + y) * size + x] += px[c];
      }
    }
  }
  const double n = static_cast<double>(patches.size());
  for (auto& v : mean.values) v /= n;
  return mean;
}

MeanImage compute_mean_image(const PatchManifest& manifest) {
  const auto train = manifest.in_split(Split::train);
  if (train.empty()) throw Error(Errc::empty_training_set, "manifest has no training patches");
  const int size = manifest.patch_size;
  MeanImage mean;
  mean.size = size;
  mean.values.assign(static_cast<std::size_t>(3) * size * size, 0.0);
  for (const auto* rec : train) {
    const RgbRaster p = load_raster(rec->feature_path);
    if (p.width != size || p.height != size) throw Error(Errc::shape_mismatch, rec->key() + " has the wrong size");
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const std::uint8_t* px = p.px(x, y);
        for (int c = 0; c < 3; ++c) mean.values[(static_cast<std::size_t>(c) * size + y) * size + x] += px[c];
      }
    }
  }
  const double n = static_cast<double>(train.size());
  for (auto& v : mean.values) v /= n;
  return mean;
}

void save_mean_image(const fs::path& path, const MeanImage& mean) {
  static_assert(std::endian::native == std::endian::little, "mean image I/O assumes little-endian");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(Errc::io, "cannot write " + path.string());
  for (double v : mean.values) {
    const float f = static_cast<float>(v);
    os.write(reinterpret_cast<const char*>(&f), sizeof(f));
  }
  std::ofstream meta(fs::path(path.string() + ".json"), std::ios::trunc);
  meta << nlohmann::json{{"width", mean.size}, {"height", mean.size}, {"channels", 3}}.dump() << "\n";
  if (!os || !meta) throw Error(Errc::io, "short write on " + path.string());
}

MeanImage load_mean_image(const fs::path& path) {
  std::ifstream meta(fs::path(path.string() + ".json"));
  if (!meta) throw Error(Errc::io, "missing mean image sidecar for " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::decode, e.what());
  }
  const int w = j.at("width").get<int>();
  const int h = j.at("height").get<int>();
  if (w != h || j.value("channels", 3) != 3) throw Error(Errc::decode, "mean image must be square RGB");
  MeanImage mean;
  mean.size = w;
  mean.values.resize(static_cast<std::size_t>(3) * w * h);
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::io, "cannot open " + path.string());
  for (auto& v : mean.values) {
    float f = 0.0f;
    is.read(reinterpret_cast<char*>(&f), sizeof(f));
    v = f;
  }
  if (!is) throw Error(Errc::decode, "truncated mean image " + path.string());
  return mean;
}

template <typename T>
nn::BasicTensor<T> normalize(const RgbRaster& patch, const MeanImage& mean) {
  if (patch.width != mean.size || patch.height != mean.size) {
    throw Error(Errc::shape_mismatch, "patch " + std::to_string(patch.width) + "x" + std::to_string(patch.height) +
                                          " vs mean " + std::to_string(mean.size));
  }
  nn::BasicTensor<T> t({1, 3, patch.height, patch.width});
  for (int y = 0; y < patch.height; ++y) {
    for (int x = 0; x < patch.width; ++x) {
      const std::uint8_t* px = patch.px(x, y);
      for (int c = 0; c < 3; ++c) t.at(0, c, y, x) = static_cast<T>(px[c] - mean.at(c, y, x));
    }
  }
  return t;
}

template nn::BasicTensor<float> normalize<float>(const RgbRaster&, const MeanImage&);
template nn::BasicTensor<double> normalize<double>(const RgbRaster&, const MeanImage&);

void normalize_into(const RgbRaster& patch, const MeanImage& mean, nn::Tensor& batch, int n) {
  const auto& s = batch.shape();
  if (patch.width != mean.size || patch.height != mean.size || s.c != 3 || s.h != patch.height ||
      s.w != patch.width || n >= s.n) {
    throw Error(Errc::shape_mismatch, "normalize_into: patch, mean and batch disagree");
  }
  for (int y = 0; y < patch.height; ++y) {
    for (int x = 0; x < patch.width; ++x) {
      const std::uint8_t* px = patch.px(x, y);
      for (int c = 0; c < 3; ++c) batch.at(n, c, y, x) = static_cast<float>(px[c] - mean.at(c, y, x));
    }
  }
}

}  // namespace msfcn::patch
