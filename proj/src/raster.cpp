#include "msfcn/raster.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "msfcn/error.hpp"

namespace msfcn {
namespace fs = std::filesystem;

namespace {

constexpr std::array<Rgb, kNumClasses> kPalette{{
    {0, 0, 0},        // background
    {255, 0, 0},      // tumour
    {0, 255, 0},      // epidermis
    {255, 255, 0},    // dermis
    {128, 128, 128},  // ndi
}};

constexpr std::array<std::string_view, kNumClasses> kNames{"background", "tumour", "epidermis",
                                                           "dermis", "ndi"};

struct PngImage {
  png_image image{};
  PngImage() {
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

void begin_read(PngImage& png, const fs::path& path) {
  if (!fs::exists(path)) throw Error(Errc::io, "no such file: " + path.string());
  if (png_image_begin_read_from_file(&png.image, path.c_str()) == 0) {
    throw Error(Errc::decode, path.string() + ": " + png.image.message);
  }
}

}  // namespace

std::string_view class_name(TissueClass c) noexcept { return kNames[class_id(c)]; }

std::optional<TissueClass> class_from_name(std::string_view name) noexcept {
  for (int i = 0; i < kNumClasses; ++i) {
    if (kNames[i] == name) return static_cast<TissueClass>(i);
  }
  return std::nullopt;
}

Rgb palette_color(TissueClass c) noexcept { return kPalette[class_id(c)]; }
const std::array<Rgb, kNumClasses>& palette() noexcept { return kPalette; }

RgbRaster::RgbRaster(int w, int h, Rgb fill) : width(w), height(h) {
  pixels.resize(static_cast<std::size_t>(w) * h * 3);
  for (std::size_t i = 0; i < pixels.size(); i += 3) {
    pixels[i] = fill.r;
    pixels[i + 1] = fill.g;
    pixels[i + 2] = fill.b;
  }
}

LabelMask::LabelMask(int w, int h, TissueClass fill)
    : width(w), height(h), labels(static_cast<std::size_t>(w) * h, static_cast<std::uint8_t>(fill)) {}

void LabelMask::validate() const {
  if (labels.size() != static_cast<std::size_t>(width) * height) {
    throw Error(Errc::decode, "label buffer size does not match dimensions");
  }
  for (auto v : labels) {
    if (v >= kNumClasses) throw Error(Errc::decode, "invalid class id " + std::to_string(v));
  }
}

ClassHistogram class_histogram(const LabelMask& mask) {
  ClassHistogram h{};
  for (auto v : mask.labels) ++h[v];
  return h;
}

std::string_view split_name(Split s) noexcept {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split split_from_name(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw Error(Errc::invalid_config, "unknown split: " + std::string(name));
}

void to_json(nlohmann::json& j, const SlideRecord& r) {
  j = {{"slide_id", r.slide_id},
       {"patient_id", r.patient_id},
       {"feature_path", r.feature_path.generic_string()},
       {"label_path", r.label_path.generic_string()},
       {"split", split_name(r.split)},
       {"microns_per_pixel", r.microns_per_pixel}};
  if (r.analytic_breslow_um) j["analytic_breslow_um"] = *r.analytic_breslow_um;
}

void from_json(const nlohmann::json& j, SlideRecord& r) {
  r.slide_id = j.at("slide_id").get<std::string>();
  r.patient_id = j.value("patient_id", r.slide_id);
  r.feature_path = j.value("feature_path", std::string());
  r.label_path = j.value("label_path", std::string());
  r.split = split_from_name(j.value("split", std::string("train")));
  r.microns_per_pixel = j.value("microns_per_pixel", kDefaultMicronsPerPixel);
  if (j.contains("analytic_breslow_um")) r.analytic_breslow_um = j.at("analytic_breslow_um").get<double>();
}

std::vector<SlideRecord> assign_splits(std::vector<SlideRecord> slides, SplitRatios ratios,
                                       std::uint64_t seed) {
  const double sum = ratios.train + ratios.val + ratios.test;
  if (std::abs(sum - 1.0) > 1e-9 || ratios.train < 0 || ratios.val < 0 || ratios.test < 0) {
    throw Error(Errc::invalid_config, "split ratios must be non-negative and sum to 1");
  }
  std::set<std::string> unique;
  for (const auto& s : slides) unique.insert(s.patient_id);
  std::vector<std::string> patients(unique.begin(), unique.end());
  const int n = static_cast<int>(patients.size());
  if (n < 3) throw Error(Errc::insufficient_patients, "need at least 3 patients, got " + std::to_string(n));

  const auto count_for = [n](double ratio) {
    if (ratio <= 0.0) return 0;
    return std::max(1, static_cast<int>(std::lround(n * ratio)));
  };
  const int n_val = count_for(ratios.val);
  const int n_test = count_for(ratios.test);
  const int n_train = n - n_val - n_test;
  if (n_train < (ratios.train > 0.0 ? 1 : 0)) {
    throw Error(Errc::insufficient_patients, "too few patients for the requested ratios");
  }

  // Fisher-Yates on raw engine output keeps the order stable across standard libraries.
  std::mt19937_64 rng(seed);
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(patients[i], patients[j]);
  }
  std::map<std::string, Split> by_patient;
  for (int i = 0; i < n; ++i) {
    by_patient[patients[i]] = i < n_train ? Split::train : (i < n_train + n_val ? Split::val : Split::test);
  }
  for (auto& s : slides) s.split = by_patient.at(s.patient_id);
  return slides;
}

// ---------------------------------------------------------------- PNG I/O

RgbRaster load_raster(const fs::path& path) {
  PngImage png;
  begin_read(png, path);
  png.image.format = PNG_FORMAT_RGB;
  RgbRaster raster;
  raster.width = static_cast<int>(png.image.width);
  raster.height = static_cast<int>(png.image.height);
  raster.pixels.resize(PNG_IMAGE_SIZE(png.image));
  if (png_image_finish_read(&png.image, nullptr, raster.pixels.data(), 0, nullptr) == 0) {
    throw Error(Errc::decode, path.string() + ": " + png.image.message);
  }
  if (auto meta = load_sidecar(path)) raster.microns_per_pixel = meta->microns_per_pixel;
  return raster;
}

void save_raster(const fs::path& path, const RgbRaster& raster) {
  if (raster.pixels.size() != static_cast<std::size_t>(raster.width) * raster.height * 3) {
    throw Error(Errc::shape_mismatch, "raster buffer size does not match dimensions");
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  PngImage png;
  png.image.width = static_cast<png_uint_32>(raster.width);
  png.image.height = static_cast<png_uint_32>(raster.height);
  png.image.format = PNG_FORMAT_RGB;
  if (png_image_write_to_file(&png.image, path.c_str(), 0, raster.pixels.data(), 0, nullptr) == 0) {
    throw Error(Errc::io, path.string() + ": " + png.image.message);
  }
}

LabelMask load_label_mask(const fs::path& path) {
  PngImage png;
  begin_read(png, path);
  if ((png.image.format & PNG_FORMAT_FLAG_COLORMAP) == 0) {
    // True-color input: libpng would quantize it into a generic colormap, so match pixels exactly.
    png.image.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(png.image));
    if (png_image_finish_read(&png.image, nullptr, rgb.data(), 0, nullptr) == 0) {
      throw Error(Errc::decode, path.string() + ": " + png.image.message);
    }
    LabelMask mask;
    mask.width = static_cast<int>(png.image.width);
    mask.height = static_cast<int>(png.image.height);
    mask.labels.resize(static_cast<std::size_t>(mask.width) * mask.height);
    for (std::size_t i = 0; i < mask.labels.size(); ++i) {
      const Rgb color{rgb[i * 3], rgb[i * 3 + 1], rgb[i * 3 + 2]};
      int cls = -1;
      for (int c = 0; c < kNumClasses; ++c) {
        if (kPalette[c] == color) cls = c;
      }
      if (cls < 0) throw Error(Errc::decode, path.string() + ": color not in the class palette");
      mask.labels[i] = static_cast<std::uint8_t>(cls);
    }
    return mask;
  }
  png.image.format = PNG_FORMAT_RGB_COLORMAP;
  std::vector<std::uint8_t> indices(PNG_IMAGE_SIZE(png.image));
  std::vector<std::uint8_t> colormap(PNG_IMAGE_COLORMAP_SIZE(png.image));
  if (png_image_finish_read(&png.image, nullptr, indices.data(), 0, colormap.data()) == 0) {
    throw Error(Errc::decode, path.string() + ": " + png.image.message);
  }
  std::array<int, 256> remap;
  remap.fill(-1);
  for (png_uint_32 e = 0; e < png.image.colormap_entries; ++e) {
    const Rgb color{colormap[e * 3], colormap[e * 3 + 1], colormap[e * 3 + 2]};
    for (int c = 0; c < kNumClasses; ++c) {
      if (kPalette[c] == color) remap[e] = c;
    }
  }
  LabelMask mask;
  mask.width = static_cast<int>(png.image.width);
  mask.height = static_cast<int>(png.image.height);
  mask.labels.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int cls = remap[indices[i]];
    if (cls < 0) throw Error(Errc::decode, path.string() + ": color not in the class palette");
    mask.labels[i] = static_cast<std::uint8_t>(cls);
  }
  return mask;
}

void save_label_mask(const fs::path& path, const LabelMask& mask) {
  mask.validate();
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  PngImage png;
  png.image.width = static_cast<png_uint_32>(mask.width);
  png.image.height = static_cast<png_uint_32>(mask.height);
  png.image.format = PNG_FORMAT_RGB_COLORMAP;
  png.image.colormap_entries = kNumClasses;
  std::array<std::uint8_t, kNumClasses * 3> colormap{};
  for (int c = 0; c < kNumClasses; ++c) {
    colormap[c * 3] = kPalette[c].r;
    colormap[c * 3 + 1] = kPalette[c].g;
    colormap[c * 3 + 2] = kPalette[c].b;
  }
  if (png_image_write_to_file(&png.image, path.c_str(), 0, mask.labels.data(), 0, colormap.data()) == 0) {
    throw Error(Errc::io, path.string() + ": " + png.image.message);
  }
}

fs::path sidecar_path(const fs::path& raster_path) {
  fs::path p = raster_path;
  p.replace_extension(".meta.json");
  return p;
}

std::optional<SlideMeta> load_sidecar(const fs::path& raster_path) {
  const fs::path p = sidecar_path(raster_path);
  if (!fs::exists(p)) return std::nullopt;
  std::ifstream is(p);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::decode, p.string() + ": " + e.what());
  }
  SlideMeta meta;
  meta.slide_id = j.value("slide_id", raster_path.stem().string());
  meta.patient_id = j.value("patient_id", meta.slide_id);
  meta.microns_per_pixel = j.value("microns_per_pixel", kDefaultMicronsPerPixel);
  if (!(meta.microns_per_pixel > 0.0)) throw Error(Errc::decode, p.string() + ": microns_per_pixel must be > 0");
  return meta;
}

void save_sidecar(const fs::path& raster_path, const SlideMeta& meta) {
  const fs::path p = sidecar_path(raster_path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::trunc);
  if (!os) throw Error(Errc::io, "cannot write " + p.string());
  const nlohmann::json j = {{"slide_id", meta.slide_id},
                            {"patient_id", meta.patient_id},
                            {"microns_per_pixel", meta.microns_per_pixel}};
  os << j.dump(2) << "\n";
}

}  // namespace msfcn
