#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace msfcn {

inline constexpr int kNumClasses = 5;

enum class TissueClass : std::uint8_t {
  background = 0,
  tumour = 1,
  epidermis = 2,
  dermis = 3,
  ndi = 4,
};

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline constexpr std::array<TissueClass, kNumClasses> kAllClasses{
    TissueClass::background, TissueClass::tumour, TissueClass::epidermis, TissueClass::dermis,
    TissueClass::ndi};

constexpr int class_id(TissueClass c) noexcept { return static_cast<int>(c); }
std::string_view class_name(TissueClass c) noexcept;
std::optional<TissueClass> class_from_name(std::string_view name) noexcept;
Rgb palette_color(TissueClass c) noexcept;
const std::array<Rgb, kNumClasses>& palette() noexcept;

inline constexpr double kDefaultMicronsPerPixel = 0.25;

struct RgbRaster {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB
  double microns_per_pixel = kDefaultMicronsPerPixel;

  RgbRaster() = default;
  RgbRaster(int w, int h, Rgb fill = {});

  std::uint8_t* px(int x, int y) noexcept { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const std::uint8_t* px(int x, int y) const noexcept {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  friend bool operator==(const RgbRaster&, const RgbRaster&) = default;
};

struct LabelMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> labels;  // row-major class ids

  LabelMask() = default;
  LabelMask(int w, int h, TissueClass fill = TissueClass::background);

  std::uint8_t& at(int x, int y) noexcept { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const noexcept { return labels[static_cast<std::size_t>(y) * width + x]; }
  TissueClass cls(int x, int y) const noexcept { return static_cast<TissueClass>(at(x, y)); }
  bool in_bounds(int x, int y) const noexcept { return x >= 0 && y >= 0 && x < width && y < height; }

  // Throws DecodeError if any value is not a class id.
  void validate() const;

  friend bool operator==(const LabelMask&, const LabelMask&) = default;
};

using ClassHistogram = std::array<std::uint64_t, kNumClasses>;

ClassHistogram class_histogram(const LabelMask& mask);

enum class Split { train, val, test };

std::string_view split_name(Split s) noexcept;
Split split_from_name(std::string_view name);

struct SlideRecord {
  std::string slide_id;
  std::string patient_id;
  std::filesystem::path feature_path;
  std::filesystem::path label_path;
  Split split = Split::train;
  double microns_per_pixel = kDefaultMicronsPerPixel;
  std::optional<double> analytic_breslow_um;  // synthetic slides only
};

void to_json(nlohmann::json& j, const SlideRecord& r);
void from_json(const nlohmann::json& j, SlideRecord& r);

struct SplitRatios {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
};

// Patient-level split. Val and test patient counts are round(N * ratio) (at
// least one each when the ratio is positive); train takes the remainder.
// Patients are shuffled deterministically from `seed`.
std::vector<SlideRecord> assign_splits(std::vector<SlideRecord> slides, SplitRatios ratios,
                                       std::uint64_t seed);

// ---- file I/O (PNG) ----

// 8-bit RGB (alpha dropped, grey expanded). microns_per_pixel comes from the
// sidecar <stem>.meta.json when present.
RgbRaster load_raster(const std::filesystem::path& path);
void save_raster(const std::filesystem::path& path, const RgbRaster& raster);

// Indexed PNG with the fixed palette; an RGB PNG is accepted when every
// color is a palette entry.
LabelMask load_label_mask(const std::filesystem::path& path);
void save_label_mask(const std::filesystem::path& path, const LabelMask& mask);

struct SlideMeta {
  std::string slide_id;
  std::string patient_id;
  double microns_per_pixel = kDefaultMicronsPerPixel;
};

std::filesystem::path sidecar_path(const std::filesystem::path& raster_path);
std::optional<SlideMeta> load_sidecar(const std::filesystem::path& raster_path);
void save_sidecar(const std::filesystem::path& raster_path, const SlideMeta& meta);

}  // namespace msfcn
